import numpy as np
import pytest
from scipy import stats

from clustercount.core import RateSchedule


def random_schedule(rng, n_max=12, rate_max=50.0, n_min=1):
    n = int(rng.integers(n_min, n_max + 1))
    rates = rng.uniform(0.0, rate_max, size=n)
    rates[rates == 0.0] = rate_max / 2
    return RateSchedule(np.append(rates, 0.0))


def chi2_pvalue(counts, probs, min_expected=5.0):
    """Pearson GOF p-value, pooling low-expectation cells into one bin."""
    counts = np.asarray(counts, dtype=float)
    expected = np.asarray(probs, dtype=float) * counts.sum()
    keep = expected >= min_expected
    obs = list(counts[keep])
    exp = list(expected[keep])
    if (~keep).any():
        obs.append(counts[~keep].sum())
        exp.append(expected[~keep].sum())
    obs, exp = np.array(obs), np.array(exp)
    if exp[-1] == 0:
        assert obs[-1] == 0
        obs, exp = obs[:-1], exp[:-1]
    stat = ((obs - exp) ** 2 / exp).sum()
    return stats.chi2.sf(stat, df=len(obs) - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
