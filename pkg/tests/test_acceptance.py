"""Acceptance criteria 1-11.

Each test prints one ``criterion N: PASS|FAIL`` line.  Run with ``pytest -s``
to see them, or ``python3 tests/test_acceptance.py`` for the summary alone.
"""

import itertools
import math
import tempfile
import time
from pathlib import Path

import numpy as np
from scipy import stats

from clustercount import (
    ClusterObservation,
    RateModelSpec,
    RateSchedule,
    RegressionSpec,
    fit_mle,
    fit_regression_combined,
    lambda_beta_binomial,
    lambda_from_transition,
    lambda_qpower,
    pmf_from_lambda,
    rate_vector,
    relative_risk,
    simulate_cluster,
    simulate_dataset,
    transition_closed_form,
    transition_distribution,
)
from clustercount.cli import main
from clustercount.exchangeable import beta_binomial_alpha_floor
from clustercount.fit import RegressionFit, information_criteria

SEED = 20240611


def report(number, ok, detail):
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def random_schedule(rng, n_max, rate_max=50.0):
    n = int(rng.integers(1, n_max + 1))
    rates = rng.uniform(0.0, rate_max, size=n + 1)
    rates[rates == 0.0] = rate_max
    rates[-1] = 0.0
    return RateSchedule(rates)


def distinct_schedule(rng, n_max, gap=0.1, rate_max=50.0):
    while True:
        sched = random_schedule(rng, n_max, rate_max)
        mu = sched.rates
        ok = all(abs(a - b) >= gap * max(a, b) for a, b in itertools.combinations(mu, 2))
        if ok:
            return sched


def test_criterion_1_normalization_and_scaling():
    rng = np.random.default_rng(SEED)
    start = time.perf_counter()
    worst_sum = worst_scale = 0.0
    for _ in range(1000):
        sched = random_schedule(rng, 12)
        m = int(rng.integers(0, sched.n + 1))
        c = float(rng.uniform(0.2, 5.0))
        row = transition_distribution(sched, m, t=1.0).probs
        worst_sum = max(worst_sum, abs(math.fsum(row) - 1.0))
        scaled = transition_distribution(sched.scaled(c), m, t=1.0 / c).probs
        worst_scale = max(worst_scale, float(np.max(np.abs(scaled - row))))
    elapsed = time.perf_counter() - start
    report(1, worst_sum <= 1e-10 and worst_scale <= 1e-10 and elapsed < 5,
           f"max |sum-1|={worst_sum:.1e}, max scaling diff={worst_scale:.1e}, {elapsed:.2f}s")


def test_criterion_2_closed_form_oracle():
    rng = np.random.default_rng(SEED + 2)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        sched = distinct_schedule(rng, 8)
        for m in range(sched.n + 1):
            row = transition_distribution(sched, m)
            for r in range(m, sched.n + 1):
                worst = max(worst, abs(transition_closed_form(sched, m, r) - row.prob(r)))
    elapsed = time.perf_counter() - start
    report(2, worst <= 1e-8 and elapsed < 5, f"max entry diff={worst:.1e}, {elapsed:.2f}s")


def test_criterion_3_binomial_equivalence():
    worst = 0.0
    for alpha in (0.05, 0.1, 0.25, 0.35, 0.5, 1.0, 1.5, 2.0, 3.0):
        p = -math.expm1(-alpha)
        for n in range(1, 16):
            got = transition_distribution(rate_vector(RateModelSpec("susceptible1", (alpha,)), n)).probs
            want = stats.binom.pmf(np.arange(n + 1), n, p)
            worst = max(worst, float(np.max(np.abs(got - want))))

    rng = np.random.default_rng(SEED + 3)
    data = [ClusterObservation(n=int(n), r=int(rng.binomial(n, 0.3)), weight=float(w))
            for n, w in zip(rng.integers(1, 10, 300), rng.uniform(0.5, 3.0, 300))]
    fit = fit_mle("susceptible1", data)
    fraction = sum(o.weight * o.r for o in data) / sum(o.weight * o.n for o in data)
    fitted = -math.expm1(-fit.estimates[0])
    published_p = -math.expm1(-0.350)
    ok = worst <= 1e-12 and abs(fitted - fraction) <= 1e-6 and abs(published_p - 0.296) <= 0.001
    report(3, ok, f"max pmf diff={worst:.1e}, |p_hat-fraction|={abs(fitted - fraction):.1e}, "
                  f"1-exp(-0.35)={published_p:.4f}")


def raw_lambda0(probs):
    # same backward recursion, without the final pinning of lambda_0
    n = probs.size - 1
    lam = [0.0] * (n + 1)
    for r in range(n, -1, -1):
        tail = [(-1) ** j * math.comb(n - r, j) * lam[r + j] for j in range(1, n - r + 1)]
        lam[r] = math.fsum([probs[r] / math.comb(n, r)] + [-x for x in tail])
    return lam[0]


def test_criterion_4_lambda_round_trip():
    rng = np.random.default_rng(SEED + 4)
    worst = worst_lam0 = 0.0
    for _ in range(500):
        sched = random_schedule(rng, 10)
        row = transition_distribution(sched, 0)
        lv = lambda_from_transition(row, tol=1e-8)
        worst = max(worst, float(np.max(np.abs(pmf_from_lambda(lv) - row.probs))))
        worst_lam0 = max(worst_lam0, abs(raw_lambda0(row.probs) - 1.0))
    report(4, worst <= 1e-9 and worst_lam0 <= 1e-8,
           f"max pmf diff={worst:.1e}, max |lambda_0-1|={worst_lam0:.1e}")


def beta_binomial_product(p, alpha, n):
    def rising(a, k):
        return math.prod(a + i * alpha for i in range(k))
    denom = rising(1.0, n)
    return np.array([math.comb(n, r) * rising(p, r) * rising(1.0 - p, n - r) / denom
                     for r in range(n + 1)])


def test_criterion_5_lambda_family_oracles():
    worst, negatives = 0.0, 0
    for p in (0.05, 0.2, 0.5, 0.7, 0.95):
        for n in range(1, 11):
            floor = beta_binomial_alpha_floor(p, n)
            alphas = [0.0, 0.05, 0.3, 1.0, 4.0]
            if math.isfinite(floor):
                alphas += [0.9 * floor, 0.5 * floor, 0.1 * floor]
            for alpha in alphas:
                negatives += alpha < 0
                got = pmf_from_lambda(lambda_beta_binomial(p, alpha, n))
                worst = max(worst, float(np.max(np.abs(got - beta_binomial_product(p, alpha, n)))))
    qpower_ok = True
    for p in (0.05, 0.3, 0.5, 0.9):
        for gamma in np.linspace(0.0, 1.0, 11):
            for n in range(1, 11):
                pmf = pmf_from_lambda(lambda_qpower(p, gamma, n))
                qpower_ok &= bool(np.all(pmf >= 0) and abs(math.fsum(pmf) - 1.0) <= 1e-12)
    report(5, worst <= 1e-12 and negatives > 0 and qpower_ok,
           f"max beta-binomial diff={worst:.1e} over {negatives} negative-alpha cases, "
           f"q-power grid valid={qpower_ok}")


def test_criterion_6_embedding_correspondence():
    n, size = 6, 10**5
    sched = rate_vector(RateModelSpec("combined", (0.275, 0.300)), n)
    rng = np.random.default_rng(SEED + 6)
    start = time.perf_counter()
    counts = np.zeros(n + 1)
    first = np.zeros(n)
    for _ in range(size):
        cluster = simulate_cluster(sched, rng)
        counts[cluster.count] += 1
        first[cluster.order[0]] += 1
    elapsed = time.perf_counter() - start
    expected = size * transition_distribution(sched).probs
    law_p = stats.chisquare(counts, expected).pvalue
    index_p = stats.chisquare(first).pvalue
    report(6, law_p > 0.001 and index_p > 0.001 and elapsed < 30,
           f"count-law p={law_p:.3f}, first-index p={index_p:.3f}, {elapsed:.1f}s")


def _within(estimates, truth, se, k=3.0):
    z = np.abs(np.asarray(estimates) - np.asarray(truth)) / np.asarray(se)
    return bool(np.all(np.isfinite(z)) and np.all(z <= k)), z


def test_criterion_7_simulation_recovery():
    sizes = [4, 5, 6, 7, 8] * 400
    start = time.perf_counter()
    data = simulate_dataset(RateModelSpec("combined", (0.275, 0.300)), sizes, seed=SEED)
    fit = fit_mle("combined", data)
    plain_ok, plain_z = _within(fit.estimates, (0.275, 0.300), fit.se)
    plain_time = time.perf_counter() - start

    truth = (-2.76, 0.016, -3.45, 0.042)
    doses = np.tile([0.0, 30.0, 45.0, 60.0, 75.0, 90.0], 2000 // 6 + 1)[:2000]
    start = time.perf_counter()
    reg_data = simulate_dataset(RegressionSpec(truth[:2], truth[2:]), sizes, seed=SEED + 7,
                                covariates=doses[:, None])
    reg = fit_regression_combined(reg_data, ("dose",))
    reg_ok, reg_z = _within(reg.coefficients, truth, reg.se)
    reg_time = time.perf_counter() - start

    ok = (plain_ok and fit.converged and plain_time < 60
          and reg_ok and reg.converged and reg_time < 60)
    report(7, ok, f"combined max|z|={plain_z.max():.2f} in {plain_time:.1f}s, "
                  f"regression max|z|={reg_z.max():.2f} in {reg_time:.1f}s")


def test_criterion_8_relative_risk():
    slope = math.log(1.628) / 30.0
    fit = RegressionFit(
        covariate_names=("dose",), phi=np.array([-2.76, slope]), psi=np.array([-3.45, 0.042]),
        covariance=np.diag([0.0149, 0.0031**2, 0.05, 0.01]), loglik=0.0, aic=0.0, bic=0.0,
        chi2=0.0, n_clusters=1, total_weight=1.0, converged=True, gradient_norm=0.0,
        se_available=True,
    )
    rr30, _ = relative_risk(fit, 30)
    rr60, _ = relative_risk(fit, 60)
    rr90, _ = relative_risk(fit, 90)
    rr0, se0 = relative_risk(fit, 0)
    ok = (math.isclose(rr60, rr30**2, rel_tol=1e-12) and math.isclose(rr90, rr30**3, rel_tol=1e-12)
          and abs(rr60 - 2.652) <= 0.01 and abs(rr90 - 4.318) <= 0.01
          and rr0 == 1.0 and se0 == 0.0)
    report(8, ok, f"RR(30)={rr30:.3f}, RR(60)={rr60:.3f}, RR(90)={rr90:.3f}, RR(0)={rr0}, SE(0)={se0}")


def test_criterion_9_information_criteria():
    aic, _ = information_criteria(-93.04, 1, 100.0)
    rng = np.random.default_rng(SEED + 9)
    worst = 0.0
    data = [ClusterObservation(n=int(n), r=int(rng.binomial(n, 0.3)), weight=float(w))
            for n, w in zip(rng.integers(2, 8, 200), rng.integers(1, 4, 200))]
    for family in ("susceptible1", "susceptible2", "combined", "binomial", "beta_binomial", "qpower"):
        fit = fit_mle(family, data)
        identity = fit.n_params * (math.log(fit.total_weight) - 2)
        worst = max(worst, abs((fit.bic - fit.aic) - identity))
    report(9, abs(aic - 188.1) <= 0.1 and worst <= 1e-9,
           f"AIC={aic:.2f}, max BIC-AIC identity error={worst:.1e}")


def test_criterion_10_nesting():
    worst = -math.inf
    rng = np.random.default_rng(SEED + 10)
    for i in range(20):
        alpha, beta = rng.uniform(0.1, 0.6), rng.uniform(0.05, 0.5)
        sizes = rng.integers(2, 9, 250)
        data = simulate_dataset(RateModelSpec("combined", (alpha, beta)), sizes, seed=1000 + i,
                                ascertain=1)
        combined = fit_mle("combined", data).loglik
        nested = max(fit_mle("susceptible1", data).loglik, fit_mle("infectivity1", data).loglik)
        worst = max(worst, nested - combined)
    report(10, worst <= 1e-8, f"max nested-minus-combined loglik={worst:.2e}")


def test_criterion_11_cli_round_trip():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        codes, blobs = [], []
        for run in ("a", "b"):
            data, out = tmp / f"{run}.csv", tmp / f"{run}.json"
            codes.append(main(["simulate", "--model", "combined", "--params", "0.275,0.3",
                               "--sizes", "4-8", "--reps", "60", "--seed", "5", "--out", str(data)]))
            codes.append(main(["fit", str(data), "--model", "combined", "--out", str(out), "--quiet"]))
            codes.append(main(["gof", str(data), str(out)]))
            blobs.append((data.read_bytes(), out.read_bytes()))
    ok = all(c == 0 for c in codes) and blobs[0] == blobs[1]
    report(11, ok, f"exit codes={codes}, byte-identical={blobs[0] == blobs[1]}")


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]
    tests.sort(key=lambda f: int(f.__name__.split("_")[2]))
    for test in tests:
        try:
            test()
        except AssertionError:
            pass
