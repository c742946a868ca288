"""Command-line front end: ``clustercount {fit,simulate,gof}``.

Dataset files are CSV with a header.  ``n`` and ``r`` are required, ``m``
defaults to 0 and ``weight`` to 1; every other column is a numeric
covariate, kept in header order.  Reports are JSON with numbers rounded to
12 significant digits.

Exit codes: 0 ok, 2 parse/validation, 3 domain, 4 non-convergence, 5 I/O.
The default worker-thread count comes from ``CLUSTERCOUNT_THREADS``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from .core import ClusterObservation, DomainError, RateModelSpec, validate_observation
from .fit import (
    FAMILIES,
    FitError,
    FitResult,
    RegressionFit,
    fit_mle,
    fit_regression_combined,
    goodness_of_fit,
    relative_risk,
    covariate_summary,
)
from .simulate import RegressionSpec, RejectionCapExceeded, simulate_dataset

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_DOMAIN = 3
EXIT_CONVERGENCE = 4
EXIT_IO = 5

RESERVED = ("n", "r", "m", "weight")


class ParseError(ValueError):
    pass


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------


def _int_field(text, name, line):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"line {line}: column {name!r} is not a number: {text!r}") from None
    if not value.is_integer():
        raise ParseError(f"line {line}: column {name!r} must be an integer, got {text!r}")
    return int(value)


def read_dataset(path) -> tuple[list[ClusterObservation], tuple[str, ...]]:
    """Parse a dataset file; returns observations and covariate names."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty dataset file") from None
        if "n" not in header or "r" not in header:
            raise ParseError("header must contain columns 'n' and 'r'")
        if len(set(header)) != len(header):
            raise ParseError("duplicate column names in header")
        covariates = tuple(h for h in header if h not in RESERVED)
        rows = []
        for line, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise ParseError(f"line {line}: expected {len(header)} fields, got {len(raw)}")
            rec = dict(zip(header, (c.strip() for c in raw)))
            n = _int_field(rec["n"], "n", line)
            r = _int_field(rec["r"], "r", line)
            m = _int_field(rec["m"], "m", line) if "m" in rec and rec["m"] != "" else 0
            try:
                weight = float(rec["weight"]) if "weight" in rec and rec["weight"] != "" else 1.0
                cov = tuple(float(rec[c]) for c in covariates)
            except ValueError:
                raise ParseError(f"line {line}: non-numeric weight or covariate") from None
            obs = ClusterObservation(n=n, r=r, m=m, weight=weight, covariates=cov)
            report = validate_observation(obs)
            if not report.ok:
                raise ParseError(f"line {line}: invalid row ({'; '.join(report.violations)})")
            rows.append(obs)
    return rows, covariates


def write_dataset(path, data, covariate_names=()) -> None:
    header = ["n", "r", "m"] + list(covariate_names)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for obs in data:
            writer.writerow([obs.n, obs.r, obs.m] + [_num_text(c) for c in obs.covariates])


def _num_text(x: float) -> str:
    return format(float(x), ".12g")


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _num(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(format(x, ".12g"))


def _unnum(x):
    return float(x) if isinstance(x, str) else x


def _fit_section(fit) -> dict:
    return {
        "loglik": _num(fit.loglik),
        "aic": _num(fit.aic),
        "bic": _num(fit.bic),
        "chi2": _num(fit.chi2),
        "n_params": fit.n_params,
        "n_clusters": fit.n_clusters,
        "total_weight": _num(fit.total_weight),
        "converged": bool(fit.converged),
        "gradient_norm": _num(fit.gradient_norm),
        "se_available": bool(fit.se_available),
    }


def build_report(fit, data) -> dict:
    """JSON-ready report for a :class:`FitResult` or :class:`RegressionFit`."""
    report = {"model": fit.model}
    if isinstance(fit, RegressionFit):
        se = fit.se
        report["covariates"] = list(fit.covariate_names)
        report["parameters"] = [
            {"name": name, "estimate": _num(v), "se": _num(s)}
            for name, v, s in zip(fit.param_names, fit.coefficients, se)
        ]
        report["covariance"] = [[_num(v) for v in row] for row in fit.covariance]
        report["fit"] = _fit_section(fit)
        first = sorted({o.covariates for o in data})
        table = []
        for cov in first:
            summary = covariate_summary(fit, cov)
            entry = {"covariates": [_num(c) for c in cov]}
            entry.update({k: _num(v) for k, v in summary.items()})
            table.append(entry)
        report["rates_by_covariate"] = table
        if fit.phi.size >= 2:
            doses = sorted({o.covariates[0] for o in data})
            rr = []
            for d in doses:
                value, se_rr = relative_risk(fit, d)
                rr.append({"value": _num(d), "rr": _num(value), "se": _num(se_rr)})
            report["relative_risk"] = {"covariate": fit.covariate_names[0], "table": rr}
        return report
    report["parameters"] = [
        {"name": name, "estimate": _num(v), "se": _num(s), "boundary": bool(b)}
        for name, v, s, b in zip(fit.param_names, fit.estimates, fit.se, fit.boundary)
    ]
    derived = {}
    if fit.model == "susceptible1":
        derived["p_equivalent"] = _num(-math.expm1(-fit.estimates[0]))
    if fit.model == "qpower":
        derived["q"] = _num(1.0 - fit.estimates[0])
    if derived:
        report["derived"] = derived
    report["fit"] = _fit_section(fit)
    return report


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _fit_from_report(report: dict):
    model = report.get("model")
    params = report.get("parameters")
    if not isinstance(params, list) or not params:
        raise CliError("report has no parameters", EXIT_DOMAIN)
    est = np.array([_unnum(p["estimate"]) for p in params], dtype=float)
    fit_info = report.get("fit", {})
    if model == "combined_regression":
        k = len(est) // 2
        cov = np.array([[_unnum(v) for v in row] for row in report["covariance"]], dtype=float)
        return RegressionFit(
            covariate_names=tuple(report.get("covariates", [])), phi=est[:k], psi=est[k:],
            covariance=cov, loglik=math.nan, aic=math.nan, bic=math.nan, chi2=math.nan,
            n_clusters=0, total_weight=0.0, converged=bool(fit_info.get("converged")),
            gradient_norm=math.nan, se_available=bool(fit_info.get("se_available")),
        )
    if model not in FAMILIES:
        raise CliError(f"report names unknown model {model!r}", EXIT_DOMAIN)
    names = tuple(p["name"] for p in params)
    return FitResult(
        model=model, param_names=names, estimates=est,
        se=np.array([_unnum(p["se"]) for p in params], dtype=float),
        covariance=np.full((len(est), len(est)), np.nan), loglik=math.nan, aic=math.nan,
        bic=math.nan, chi2=math.nan, n_clusters=0, total_weight=0.0,
        converged=bool(fit_info.get("converged")), gradient_norm=math.nan,
        boundary=tuple(bool(p.get("boundary", False)) for p in params),
        se_available=bool(fit_info.get("se_available")),
    )


def human_table(report: dict) -> str:
    fit = report["fit"]
    lines = [f"{'Model':<20} {'':<16} {'Estimate':>10} {'SE':>10} {'L':>10} "
             f"{'AIC':>10} {'BIC':>10} {'chi2':>10}"]

    def fmt(v):
        return f"{_unnum(v):10.3f}"

    for i, p in enumerate(report["parameters"]):
        head = report["model"] if i == 0 else ""
        row = f"{head:<20} {p['name']:<16} {fmt(p['estimate'])} {fmt(p['se'])}"
        if i == 0:
            row += f" {fmt(fit['loglik'])} {fmt(fit['aic'])} {fmt(fit['bic'])} {fmt(fit['chi2'])}"
        lines.append(row)
    if "relative_risk" in report:
        lines.append("")
        lines.append(f"{report['relative_risk']['covariate']:>10} {'RR':>10} {'SE':>10}")
        for e in report["relative_risk"]["table"]:
            lines.append(f"{fmt(e['value'])} {fmt(e['rr'])} {fmt(e['se'])}")
    if not fit["converged"]:
        lines.append(f"WARNING: not converged (gradient norm {_unnum(fit['gradient_norm']):.3g})")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _threads(value):
    if value is not None:
        return value
    try:
        return max(1, int(os.environ.get("CLUSTERCOUNT_THREADS", "1")))
    except ValueError:
        return 1


def _load_data(path):
    try:
        return read_dataset(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from exc
    except ParseError as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from exc


def _write_text(path, text):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}", EXIT_IO) from exc


def cmd_fit(args) -> int:
    data, covariates = _load_data(args.data)
    threads = _threads(args.threads)
    try:
        if args.regress:
            wanted = [c.strip() for c in args.regress.split(",") if c.strip()]
            missing = [c for c in wanted if c not in covariates]
            if missing:
                raise CliError(f"covariates not in dataset: {', '.join(missing)}", EXIT_PARSE)
            if args.model != "combined":
                raise CliError("regression is only available for --model combined", EXIT_DOMAIN)
            cols = [covariates.index(c) for c in wanted]
            data = [ClusterObservation(o.n, o.r, o.m, o.weight, tuple(o.covariates[j] for j in cols))
                    for o in data]
            fit = fit_regression_combined(data, wanted, threads=threads)
        else:
            fit = fit_mle(args.model, data, threads=threads)
    except (DomainError, FitError) as exc:
        raise CliError(str(exc), EXIT_DOMAIN) from exc
    report = build_report(fit, data)
    text = dump_report(report)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    if not args.quiet:
        print(human_table(report), file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK if fit.converged else EXIT_CONVERGENCE


def _float_list(text, what):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"--{what} must be a comma-separated list of numbers", EXIT_PARSE) from None


def _size_list(text):
    sizes = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = (int(v) for v in part.split("-"))
                sizes.extend(range(lo, hi + 1))
            else:
                sizes.append(int(part))
        except ValueError:
            raise CliError(f"bad --sizes entry {part!r}", EXIT_PARSE) from None
    if not sizes:
        raise CliError("--sizes is empty", EXIT_PARSE)
    return sizes


def cmd_simulate(args) -> int:
    params = _float_list(args.params, "params")
    sizes = _size_list(args.sizes)
    try:
        if args.doses:
            if args.model != "combined":
                raise CliError("--doses needs --model combined", EXIT_DOMAIN)
            if len(params) != 4:
                raise CliError("regression simulation takes --params phi0,phi1,psi0,psi1", EXIT_DOMAIN)
            doses = _float_list(args.doses, "doses")
            model = RegressionSpec(params[:2], params[2:])
            plan = [(n, d) for n in sizes for d in doses for _ in range(args.reps)]
            cov = [[d] for _, d in plan]
            names = ("dose",)
        else:
            model = RateModelSpec(args.model, params)
            plan = [(n, None) for n in sizes for _ in range(args.reps)]
            cov, names = None, ()
        data = simulate_dataset(model, [n for n, _ in plan], seed=args.seed,
                                ascertain=args.ascertain, policy=args.policy,
                                covariates=cov, threads=_threads(args.threads))
    except RejectionCapExceeded as exc:
        raise CliError(str(exc), EXIT_DOMAIN) from exc
    except (DomainError, ValueError) as exc:
        raise CliError(str(exc), EXIT_DOMAIN) from exc
    try:
        write_dataset(args.out, data, names)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc.strerror}", EXIT_IO) from exc
    return EXIT_OK


def cmd_gof(args) -> int:
    data, covariates = _load_data(args.data)
    try:
        with open(args.report) as fh:
            report = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {args.report}: {exc.strerror}", EXIT_IO) from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.report}: not a JSON report ({exc.msg})", EXIT_PARSE) from exc
    fit = _fit_from_report(report)
    if isinstance(fit, RegressionFit):
        missing = [c for c in fit.covariate_names if c not in covariates]
        if missing:
            raise CliError(f"dataset lacks report covariates: {', '.join(missing)}", EXIT_DOMAIN)
        cols = [covariates.index(c) for c in fit.covariate_names]
        data = [ClusterObservation(o.n, o.r, o.m, o.weight, tuple(o.covariates[j] for j in cols))
                for o in data]
    try:
        gof = goodness_of_fit(fit, data)
    except DomainError as exc:
        raise CliError(f"model/data mismatch: {exc}", EXIT_DOMAIN) from exc
    if not math.isfinite(gof.loglik):
        raise CliError("model/data mismatch: data impossible under the reported fit", EXIT_DOMAIN)
    report["gof"] = {
        "loglik": _num(gof.loglik),
        "aic": _num(gof.aic),
        "bic": _num(gof.bic),
        "chi2": _num(gof.chi2),
        "cells": [
            {"n": c.n, "m": c.m, "r": c.r, "covariates": [_num(v) for v in c.covariates],
             "observed": _num(c.observed), "expected": _num(c.expected)}
            for c in gof.cells
        ],
    }
    _write_text(args.out or args.report, dump_report(report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clustercount",
        description="Markov counting process models for clustered binary outcomes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model to a dataset file")
    p.add_argument("data")
    p.add_argument("--model", required=True, choices=FAMILIES)
    p.add_argument("--regress", help="comma-separated covariate columns (combined model only)")
    p.add_argument("--out", help="report path (default: stdout)")
    p.add_argument("--threads", type=int)
    p.add_argument("--quiet", action="store_true", help="suppress the human-readable table")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="simulate a dataset file")
    p.add_argument("--model", required=True)
    p.add_argument("--params", required=True, help="comma-separated natural-scale parameters")
    p.add_argument("--sizes", required=True, help="cluster sizes, e.g. 4,5 or 4-8")
    p.add_argument("--reps", type=int, default=1, help="clusters per size (and dose)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--ascertain", type=int, default=0, help="ascertainment floor m")
    p.add_argument("--policy", choices=("start", "reject"), default="start")
    p.add_argument("--doses", help="dose levels for a combined regression (params phi0,phi1,psi0,psi1)")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gof", help="add observed-vs-expected cells to a report")
    p.add_argument("data")
    p.add_argument("report")
    p.add_argument("--out", help="write here instead of updating the report in place")
    p.set_defaults(func=cmd_gof)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"clustercount: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
