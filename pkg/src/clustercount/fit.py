"""Maximum-likelihood fitting, regression, relative risk and goodness of fit.

Every cluster contributes ``weight * log P[m, r](1)``.  For the counting
families ``P`` is the pure-birth transition matrix of the cluster's rate
schedule.  The exchangeable families (``binomial``, ``beta_binomial``,
``qpower``) treat the ``m`` ascertained units as given and model the
remaining ``n - m`` units, so ``P[m, r]`` is their pmf at ``r - m``.  For
the binomial this coincides with the susceptible-1 transition row.

Optimisation runs on a working scale: logs for rate parameters, logits
for probabilities, standardised coefficients for regressions.  Each of
five starting points (all working coordinates equal to -3, -1.5, 0, 1.5
or 3; regression slopes start at 0) is fed to L-BFGS-B and then polished
with Newton steps.  Gradients are fourth-order central differences.  Log
rate parameters are clamped to ``[-20, 20]``; a parameter sitting on the
lower clamp is reported as exactly 0 with a boundary flag, and the model
is evaluated at that limit (e.g. ``combined`` with ``beta = 0`` is
susceptible-1).

Standard errors come from the inverse observed information, a central
difference Hessian on the natural scale with step
``cbrt(eps) * max(1, |theta|)``.  Boundary parameters are held fixed and
get no standard error.
"""

from __future__ import annotations

import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .core import (
    PARAM_NAMES,
    ClusterObservation,
    DomainError,
    RateFamily,
    family_rates,
    validate_observation,
)
from .exchangeable import (
    InvalidLambdaError,
    LambdaVector,
    beta_binomial_alpha_floor,
    lambda_beta_binomial,
    lambda_binomial,
    lambda_qpower,
    pmf_from_lambda,
)
from .transition import _uniformized

LOG_FLOOR = -20.0
LOG_CEIL = 20.0
RESTART_GRID = (-3.0, -1.5, 0.0, 1.5, 3.0)
GRAD_TOL = 1e-6
MAX_RATE = 1e8
_EPS = np.finfo(float).eps
_CHI2_SKIP = 1e-8

COUNTING_FAMILIES = tuple(f.value for f in RateFamily if f is not RateFamily.CUSTOM)
LAMBDA_FAMILIES = ("binomial", "beta_binomial", "qpower")
FAMILIES = COUNTING_FAMILIES + LAMBDA_FAMILIES


class FitError(RuntimeError):
    """No starting point produced a usable optimum."""


class RankDeficientError(DomainError):
    pass


# ---------------------------------------------------------------------------
# models: parameter transforms and per-cluster-size probability rows
# ---------------------------------------------------------------------------


class _CountingModel:
    def __init__(self, family: str):
        self.family = RateFamily(family)
        self.name = self.family.value
        self.names = PARAM_NAMES[self.family]
        self.bounds = [(LOG_FLOOR, LOG_CEIL)] * len(self.names)

    def natural(self, w):
        w = np.asarray(w, dtype=float)
        return np.where(w <= LOG_FLOOR, 0.0, np.exp(np.minimum(w, LOG_CEIL)))

    def working(self, theta):
        theta = np.asarray(theta, dtype=float)
        with np.errstate(divide="ignore"):
            return np.maximum(np.log(theta), LOG_FLOOR)

    def at_boundary(self, w):
        return np.asarray(w) <= LOG_FLOOR + 1e-8

    def check(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.size != len(self.names):
            raise DomainError(f"{self.name} takes parameters {self.names}, got {theta.size} values")
        for name, value in zip(self.names, theta):
            if not (math.isfinite(value) and value >= 0):
                raise DomainError(f"parameter {name} must be finite and >= 0, got {value}")

    def rows(self, theta, n, cov, ms):
        matrix = _uniformized(_bounded_rates(family_rates(self.family, tuple(theta), n)), 1.0)
        return {m: matrix[m, m:] for m in ms}


class _RateOverflow(ArithmeticError):
    pass


def _bounded_rates(mu):
    # rates this large put all mass on r = n; treat as outside the model
    if not np.all(np.isfinite(mu)) or mu.max() > MAX_RATE:
        raise _RateOverflow
    return mu


def _logit(p):
    return math.log(p) - math.log1p(-p)


def _expit(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


class _LambdaModel:
    """Exchangeable-Bernoulli families evaluated through inclusion-exclusion."""

    def __init__(self, kind: str, max_trials: int = 1):
        self.name = kind
        self.names = {"binomial": ("p",), "beta_binomial": ("p", "alpha"),
                      "qpower": ("p", "gamma")}[kind]
        self.bounds = [(LOG_FLOOR, LOG_CEIL)] * len(self.names)
        # beta-binomial correlation floor depends on the largest n - m in the data
        self.max_trials = max(1, int(max_trials))

    def natural(self, w):
        w = [float(v) for v in w]
        p = _expit(w[0])
        if self.name == "binomial":
            return np.array([p])
        if self.name == "beta_binomial":
            floor = beta_binomial_alpha_floor(p, self.max_trials)
            if not math.isfinite(floor):
                floor = 0.0
            return np.array([p, floor + math.exp(w[1])])
        return np.array([p, _expit(w[1])])

    def working(self, theta):
        theta = [float(v) for v in theta]
        out = [_logit(theta[0])]
        if self.name == "beta_binomial":
            floor = beta_binomial_alpha_floor(theta[0], self.max_trials)
            if not math.isfinite(floor):
                floor = 0.0
            out.append(math.log(theta[1] - floor))
        elif self.name == "qpower":
            out.append(_logit(min(max(theta[1], 1e-300), 1 - 1e-16)))
        return np.clip(out, LOG_FLOOR, LOG_CEIL)

    def at_boundary(self, w):
        return np.zeros(len(self.names), dtype=bool)

    def check(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.size != len(self.names):
            raise DomainError(f"{self.name} takes parameters {self.names}, got {theta.size} values")
        if not 0 < theta[0] < 1:
            raise DomainError(f"parameter p must lie in (0, 1), got {theta[0]}")
        if self.name == "qpower" and not 0 <= theta[1] <= 1:
            raise DomainError(f"parameter gamma must lie in [0, 1], got {theta[1]}")
        if self.name == "beta_binomial":
            floor = beta_binomial_alpha_floor(theta[0], self.max_trials)
            if not theta[1] > floor:
                raise DomainError(f"parameter alpha must exceed {floor:.6g}, got {theta[1]}")

    def lambdas(self, theta, trials) -> LambdaVector:
        if self.name == "binomial":
            return lambda_binomial(theta[0], trials)
        if self.name == "beta_binomial":
            return lambda_beta_binomial(theta[0], theta[1], trials)
        return lambda_qpower(theta[0], theta[1], trials)

    def rows(self, theta, n, cov, ms):
        out = {}
        for m in ms:
            trials = n - m
            out[m] = np.ones(1) if trials == 0 else pmf_from_lambda(self.lambdas(theta, trials))
        return out


class _RegressionModel:
    """Combined rates with ``log alpha = z'phi``, ``log beta = z'psi``.

    The working scale uses centred and scaled covariates; ``natural``
    maps back to coefficients on the original covariate scale.
    """

    def __init__(self, names: tuple[str, ...], center, scale):
        self.name = "combined_regression"
        self.covariate_names = tuple(names)
        p = len(names) + 1
        terms = ("intercept",) + self.covariate_names
        self.names = tuple(f"phi_{t}" for t in terms) + tuple(f"psi_{t}" for t in terms)
        self.bounds = [(None, None)] * (2 * p)
        self.p = p
        # natural = A @ working, per block
        a = np.eye(p)
        for j, (c, s) in enumerate(zip(center, scale), start=1):
            a[j, j] = 1.0 / s
            a[0, j] = -c / s
        self.block = a
        self.transform = np.kron(np.eye(2), a)

    def natural(self, w):
        return self.transform @ np.asarray(w, dtype=float)

    def working(self, theta):
        return np.linalg.solve(self.transform, np.asarray(theta, dtype=float))

    def at_boundary(self, w):
        return np.zeros(2 * self.p, dtype=bool)

    def check(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.size != 2 * self.p or not np.all(np.isfinite(theta)):
            raise DomainError(f"regression needs {2 * self.p} finite coefficients")

    def rows(self, theta, n, cov, ms):
        z = np.concatenate(([1.0], cov))
        alpha = math.exp(min(float(z @ theta[:self.p]), 700.0))
        beta = math.exp(min(float(z @ theta[self.p:]), 700.0))
        matrix = _uniformized(_bounded_rates(family_rates(RateFamily.COMBINED, (alpha, beta), n)), 1.0)
        return {m: matrix[m, m:] for m in ms}


def _model_for(family: str, data=None):
    family = str(getattr(family, "value", family)).lower()
    if family in COUNTING_FAMILIES:
        return _CountingModel(family)
    if family in LAMBDA_FAMILIES:
        trials = max((o.n - o.m for o in data), default=1) if data else 1
        return _LambdaModel(family, trials)
    raise DomainError(f"unknown model family {family!r}; choose from {', '.join(FAMILIES)}")


# ---------------------------------------------------------------------------
# data preparation and likelihood
# ---------------------------------------------------------------------------


@dataclass
class _Group:
    n: int
    covariates: tuple
    cells: dict  # m -> (r array, weight array)


def _prepare(data, use_covariates: bool) -> list[_Group]:
    cells = defaultdict(lambda: defaultdict(float))
    for obs in data:
        report = validate_observation(obs)
        if not report.ok:
            raise DomainError(f"invalid observation {obs}: {', '.join(report.violations)}")
        key = (obs.n, obs.covariates if use_covariates else ())
        cells[key][(obs.m, obs.r)] += float(obs.weight)
    groups = []
    for (n, cov) in sorted(cells):
        by_m = defaultdict(lambda: ([], []))
        for (m, r), w in sorted(cells[(n, cov)].items()):
            by_m[m][0].append(r)
            by_m[m][1].append(w)
        groups.append(_Group(n, cov, {m: (np.array(rs), np.array(ws))
                                      for m, (rs, ws) in sorted(by_m.items())}))
    return groups


def _group_terms(model, theta, group: _Group) -> list[float]:
    try:
        rows = model.rows(theta, group.n, np.array(group.covariates), list(group.cells))
    except (InvalidLambdaError, _RateOverflow):
        return [-math.inf]
    terms = []
    for m, (rs, ws) in group.cells.items():
        probs = rows[m][rs - m]
        for p, w in zip(probs, ws):
            terms.append(w * math.log(p) if p > 0 else -math.inf)
    return terms


def _loglik(model, theta, groups, threads: int = 1) -> float:
    if threads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda g: _group_terms(model, theta, g), groups))
    else:
        parts = [_group_terms(model, theta, g) for g in groups]
    terms = [t for part in parts for t in part]
    if any(t == -math.inf for t in terms):
        return -math.inf
    return math.fsum(terms)


def log_likelihood(model: str, params, data, threads: int = 1) -> float:
    """Weighted log-likelihood ``sum_i w_i log P[m_i, r_i](1)``.

    ``model`` names a family (see :data:`FAMILIES`); ``params`` are on the
    natural scale.  Returns ``-inf`` when an observation is impossible.
    """
    data = list(data)
    m = _model_for(model, data)
    theta = np.asarray(params, dtype=float)
    m.check(theta)
    return _loglik(m, theta, _prepare(data, False), threads)


# ---------------------------------------------------------------------------
# numerical derivatives and the optimiser
# ---------------------------------------------------------------------------


def _gradient(f, x, fixed=None):
    """Fourth-order central differences; fixed coordinates get 0."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        if fixed is not None and fixed[i]:
            continue
        h = 1e-3 * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x - 2 * e) - 8 * f(x - e) + 8 * f(x + e) - f(x + 2 * e)) / (12 * h)
    return g


def hessian(f, x, step=None):
    """Central-difference Hessian with ``h_i = cbrt(eps) * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    k = x.size
    h = (step if step is not None else _EPS ** (1 / 3)) * np.maximum(1.0, np.abs(x))
    f0 = f(x)
    out = np.empty((k, k))
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        out[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(k)
            ej[j] = h[j]
            val = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h[i] * h[j])
            out[i, j] = out[j, i] = val
    return out


def _free_mask(x, bounds, grad):
    """Coordinates not pinned at a bound by an outward-pointing gradient."""
    free = np.ones(x.size, dtype=bool)
    for i, (lo, hi) in enumerate(bounds):
        if lo is not None and x[i] <= lo + 1e-8 and grad[i] <= 0:
            free[i] = False
        if hi is not None and x[i] >= hi - 1e-8 and grad[i] >= 0:
            free[i] = False
    return free


def _newton_polish(f, x, bounds, iters=25):
    """Projected Newton steps from an L-BFGS-B solution.

    Near the optimum the log-likelihood changes by less than its rounding
    noise, so a step that leaves ``f`` unchanged within that noise is kept
    when it shrinks the gradient.
    """
    lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds])
    hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds])
    fx = f(x)
    g = _gradient(f, x)
    for _ in range(iters):
        free = _free_mask(x, bounds, g)
        gnorm = np.linalg.norm(g[free]) if free.any() else 0.0
        if gnorm < 1e-10:
            break
        idx = np.flatnonzero(free)
        sub = lambda y, idx=idx: f(_embed(x, idx, y))  # noqa: E731
        h = hessian(sub, x[idx], step=1e-4)
        try:
            step = -np.linalg.solve(h, g[idx])
        except np.linalg.LinAlgError:
            step = np.full(idx.size, np.nan)
        if np.any(~np.isfinite(step)) or step @ g[idx] <= 0:
            # not an ascent direction; fall back to a scaled gradient step
            step = g[idx] / max(1.0, np.abs(np.diag(h)).max())
        noise = 64 * _EPS * max(1.0, abs(fx))
        moved = False
        for _ in range(30):
            cand = x.copy()
            cand[idx] = np.clip(x[idx] + step, lo[idx], hi[idx])
            fc = f(cand)
            if fc >= fx - noise:
                gc = _gradient(f, cand)
                cfree = _free_mask(cand, bounds, gc)
                cnorm = np.linalg.norm(gc[cfree]) if cfree.any() else 0.0
                if fc > fx + noise or cnorm < gnorm:
                    x, fx, g = cand, fc, gc
                    moved = True
                    break
            step = step / 2
        if not moved:
            break
    return x, fx


def _embed(x, idx, y):
    out = np.array(x, dtype=float)
    out[idx] = y
    return out


def _maximize(f, starts, bounds):
    """Best of L-BFGS-B + Newton polishing over the starting points."""
    def neg(x):
        v = f(x)
        return -v if math.isfinite(v) else 1e100

    best = None
    for x0 in starts:
        if not math.isfinite(f(x0)):
            continue
        res = minimize(neg, x0, jac=lambda x: -_gradient(f, x), method="L-BFGS-B",
                       bounds=bounds, options={"maxiter": 1000, "ftol": 1e-15, "gtol": 1e-10})
        x = np.asarray(res.x, dtype=float)
        if not math.isfinite(f(x)):
            continue
        x, fx = _newton_polish(f, x, bounds)
        if best is None or fx > best[1]:
            best = (x, fx)
    return best


def _projected_gradient_norm(f, x, bounds):
    g = _gradient(f, x)
    free = _free_mask(x, bounds, g)
    return float(np.linalg.norm(g[free])), g


def _covariance(f_natural, theta, free):
    """Inverse observed information over the free coordinates."""
    k = theta.size
    cov = np.full((k, k), np.nan)
    idx = np.flatnonzero(free)
    if idx.size == 0:
        return cov, False
    sub = lambda y: f_natural(_embed(theta, idx, y))  # noqa: E731
    h = hessian(sub, theta[idx])
    if not np.all(np.isfinite(h)):
        return cov, False
    h = (h + h.T) / 2
    if np.linalg.eigvalsh(h).max() >= 0:
        return cov, False
    inner = np.linalg.inv(-h)
    cov[np.ix_(idx, idx)] = (inner + inner.T) / 2
    return cov, True


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass
class Cell:
    n: int
    m: int
    r: int
    observed: float
    expected: float
    covariates: tuple = ()


@dataclass
class GoodnessOfFit:
    loglik: float
    aic: float
    bic: float
    chi2: float
    cells: list[Cell] = field(default_factory=list)


@dataclass
class FitResult:
    """Outcome of :func:`fit_mle`.  ``se`` is NaN where unavailable."""

    model: str
    param_names: tuple[str, ...]
    estimates: np.ndarray
    se: np.ndarray
    covariance: np.ndarray
    loglik: float
    aic: float
    bic: float
    chi2: float
    n_clusters: int
    total_weight: float
    converged: bool
    gradient_norm: float
    boundary: tuple[bool, ...]
    se_available: bool

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def as_dict(self) -> dict:
        return dict(zip(self.param_names, self.estimates.tolist()))


@dataclass
class RegressionFit:
    """Outcome of :func:`fit_regression_combined` on the coefficient scale."""

    covariate_names: tuple[str, ...]
    phi: np.ndarray
    psi: np.ndarray
    covariance: np.ndarray
    loglik: float
    aic: float
    bic: float
    chi2: float
    n_clusters: int
    total_weight: float
    converged: bool
    gradient_norm: float
    se_available: bool

    model = "combined_regression"

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate((self.phi, self.psi))

    @property
    def param_names(self) -> tuple[str, ...]:
        terms = ("intercept",) + self.covariate_names
        return tuple(f"phi_{t}" for t in terms) + tuple(f"psi_{t}" for t in terms)

    @property
    def n_params(self) -> int:
        return self.phi.size + self.psi.size

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    @property
    def phi_se(self) -> np.ndarray:
        return self.se[:self.phi.size]

    @property
    def psi_se(self) -> np.ndarray:
        return self.se[self.phi.size:]


def information_criteria(loglik: float, k: int, total_weight: float) -> tuple[float, float]:
    """``(AIC, BIC)`` with BIC's sample size taken as the summed cluster weight."""
    return -2 * loglik + 2 * k, -2 * loglik + k * math.log(total_weight)


def _check_fit_data(data):
    data = list(data)
    if not data:
        raise DomainError("cannot fit an empty dataset")
    if all(o.m >= o.n for o in data):
        raise DomainError("need at least one observation with m < n")
    return data


def fit_mle(family: str, data, threads: int = 1) -> FitResult:
    """Maximum-likelihood fit of one model family.

    Parameters
    ----------
    family : str
        One of :data:`FAMILIES`.
    data : iterable of ClusterObservation
        Covariates, if any, are ignored.
    threads : int
        Worker threads for likelihood evaluation; results do not depend on it.

    Returns
    -------
    FitResult
    """
    data = _check_fit_data(data)
    model = _model_for(family, data)
    groups = _prepare(data, False)
    f = lambda w: _loglik(model, model.natural(w), groups, threads)  # noqa: E731
    k = len(model.names)
    starts = [np.full(k, e) for e in RESTART_GRID]
    if not any(math.isfinite(f(s)) for s in starts):
        raise DomainError(f"data are impossible under every starting value of {model.name}")
    best = _maximize(f, starts, model.bounds)
    if best is None:
        raise FitError(f"all {len(starts)} starting points failed for {model.name}")
    w, ll = best
    gnorm, _ = _projected_gradient_norm(f, w, model.bounds)
    theta = model.natural(w)
    boundary = model.at_boundary(w)

    def f_natural(t):
        try:
            model.check(t)
        except DomainError:
            return -math.inf
        return _loglik(model, t, groups, threads)

    cov, se_ok = _covariance(f_natural, theta, ~boundary)
    se = np.sqrt(np.where(np.diag(cov) >= 0, np.diag(cov), np.nan))
    total = math.fsum(o.weight for o in data)
    aic, bic = information_criteria(ll, k, total)
    result = FitResult(
        model=model.name, param_names=model.names, estimates=theta, se=se,
        covariance=cov, loglik=ll, aic=aic, bic=bic, chi2=math.nan,
        n_clusters=len(data), total_weight=total,
        converged=bool(math.isfinite(ll) and gnorm < GRAD_TOL), gradient_norm=gnorm,
        boundary=tuple(bool(b) for b in boundary), se_available=se_ok,
    )
    result.chi2 = goodness_of_fit(result, data).chi2
    return result


def _collinear_columns(design: np.ndarray, names) -> list[str]:
    rank = np.linalg.matrix_rank(design)
    if rank == design.shape[1]:
        return []
    involved = []
    for j in range(design.shape[1]):
        rest = np.delete(design, j, axis=1)
        if np.linalg.matrix_rank(rest) == rank:
            involved.append(names[j])
    return involved


def fit_regression_combined(data, covariate_names=None, threads: int = 1) -> RegressionFit:
    """Combined model with log-linear ``alpha`` and ``beta`` in cluster covariates.

    Every observation must carry the same number of covariates.  With no
    covariates this is the intercept-only model, i.e. the plain combined fit
    with ``alpha = exp(phi_0)`` and ``beta = exp(psi_0)``.
    """
    data = _check_fit_data(data)
    dims = {len(o.covariates) for o in data}
    if len(dims) != 1:
        raise DomainError(f"observations carry differing covariate counts {sorted(dims)}")
    (p,) = dims
    names = tuple(covariate_names) if covariate_names is not None else tuple(f"x{j + 1}" for j in range(p))
    if len(names) != p:
        raise DomainError(f"{p} covariates but {len(names)} names")
    x = np.array([o.covariates for o in data], dtype=float).reshape(len(data), p)
    design = np.column_stack((np.ones(len(data)), x))
    bad = _collinear_columns(design, ("intercept",) + names)
    if bad:
        raise RankDeficientError(f"design matrix is rank deficient; collinear columns: {', '.join(bad)}")
    center = x.mean(axis=0) if p else np.zeros(0)
    scale = x.std(axis=0) if p else np.zeros(0)
    model = _RegressionModel(names, center, scale)
    groups = _prepare(data, True)
    f = lambda w: _loglik(model, model.natural(w), groups, threads)  # noqa: E731
    starts = []
    for e in RESTART_GRID:
        w0 = np.zeros(2 * (p + 1))
        w0[0] = w0[p + 1] = e
        starts.append(w0)
    best = _maximize(f, starts, model.bounds)
    if best is None:
        raise FitError("all starting points failed for the combined regression")
    w, ll = best
    gnorm, _ = _projected_gradient_norm(f, w, model.bounds)
    theta = model.natural(w)
    f_natural = lambda t: _loglik(model, t, groups, threads)  # noqa: E731
    cov, se_ok = _covariance(f_natural, theta, np.ones(theta.size, dtype=bool))
    total = math.fsum(o.weight for o in data)
    aic, bic = information_criteria(ll, theta.size, total)
    result = RegressionFit(
        covariate_names=names, phi=theta[:p + 1], psi=theta[p + 1:], covariance=cov,
        loglik=ll, aic=aic, bic=bic, chi2=math.nan, n_clusters=len(data), total_weight=total,
        converged=bool(math.isfinite(ll) and gnorm < GRAD_TOL), gradient_norm=gnorm,
        se_available=se_ok,
    )
    result.chi2 = goodness_of_fit(result, data).chi2
    return result


def relative_risk(fit: RegressionFit, d: float, index: int = 1) -> tuple[float, float]:
    """Dose relative risk ``exp(phi_index * d)`` with its delta-method SE."""
    if fit.phi.size < 2:
        raise DomainError("relative risk needs a fit with at least one covariate")
    slope = float(fit.phi[index])
    rr = math.exp(slope * d)
    if d == 0:
        return rr, 0.0
    return rr, abs(d) * rr * float(fit.phi_se[index])


def covariate_summary(fit: RegressionFit, covariates) -> dict:
    """``alpha`` and ``beta`` at one covariate value, with delta-method SEs.

    ``*_log_se`` is the SE of the linear predictor ``z'phi`` (or ``z'psi``);
    ``*_se`` is the SE of the rate itself, ``rate * log_se``.
    """
    z = np.concatenate(([1.0], np.atleast_1d(np.asarray(covariates, dtype=float))))
    k = fit.phi.size
    out = {}
    for label, coef, block in (("alpha", fit.phi, slice(0, k)), ("beta", fit.psi, slice(k, 2 * k))):
        value = math.exp(float(z @ coef))
        log_se = math.sqrt(max(float(z @ fit.covariance[block, block] @ z), 0.0))
        out[label] = value
        out[f"{label}_log_se"] = log_se
        out[f"{label}_se"] = value * log_se
    return out


# ---------------------------------------------------------------------------
# goodness of fit
# ---------------------------------------------------------------------------


def _fitted_model(fit):
    if isinstance(fit, RegressionFit):
        p = fit.phi.size
        return _RegressionModel(fit.covariate_names, np.zeros(p - 1), np.ones(p - 1)), \
            fit.coefficients, True
    model = _model_for(fit.model)
    if isinstance(model, _LambdaModel):
        # rebuild with a floor that admits the fitted alpha
        model.max_trials = 1
    return model, fit.estimates, False


def goodness_of_fit(fit, data) -> GoodnessOfFit:
    """Pearson chi-square over (size, ascertainment, count) cells.

    Expected counts are ``N * P[m, r]`` where ``N`` is the summed weight of
    clusters sharing the size, the ascertainment floor and (for regression
    fits) the covariate values.  Cells with expected count below ``1e-8``
    and nothing observed are skipped.  Log-likelihood and information
    criteria are recomputed from ``data``.
    """
    data = list(data)
    model, theta, use_cov = _fitted_model(fit)
    groups = _prepare(data, use_cov)
    cells, contributions = [], []
    for g in groups:
        rows = model.rows(theta, g.n, np.array(g.covariates), list(g.cells))
        for m, (rs, ws) in g.cells.items():
            total = math.fsum(ws)
            observed = dict(zip(rs.tolist(), ws.tolist()))
            for r in range(m, g.n + 1):
                o = observed.get(r, 0.0)
                e = total * float(rows[m][r - m])
                if e < _CHI2_SKIP and o == 0:
                    continue
                cells.append(Cell(n=g.n, m=m, r=r, observed=o, expected=e, covariates=g.covariates))
                contributions.append((o - e) ** 2 / e if e > 0 else math.inf)
    chi2 = math.fsum(contributions) if contributions else 0.0
    loglik = _loglik(model, theta, groups)
    total_weight = math.fsum(o.weight for o in data)
    aic, bic = information_criteria(loglik, fit.n_params, total_weight)
    return GoodnessOfFit(loglik=loglik, aic=aic, bic=bic, chi2=chi2, cells=cells)
