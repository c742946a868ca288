"""Exchangeable Bernoulli sums described by joint success probabilities.

For exchangeable ``Z_1..Z_n`` let ``lam[j]`` be the probability that a
fixed set of ``j`` units are all affected.  Inclusion-exclusion gives the
law of ``Y = sum(Z)``::

    P(Y = r) = C(n, r) * sum_{j=0}^{n-r} (-1)**j C(n-r, j) lam[r + j]

Not every vector ``lam`` produces a distribution, so :func:`pmf_from_lambda`
checks its output.  The module also provides the binomial, beta-binomial
and q-power families and recovers ``lam`` from a counting-process row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError
from .transition import TransitionDistribution

VALIDITY_TOL = 1e-9


class InvalidLambdaError(DomainError):
    """Joint probabilities that do not define an exchangeable distribution."""


class NumericalConsistencyError(ArithmeticError):
    pass


@dataclass(frozen=True)
class LambdaVector:
    """Joint success probabilities ``lam[0..n]`` with ``lam[0] == 1``."""

    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.array(self.lambdas, dtype=float)
        if lam.ndim != 1 or lam.size < 2:
            raise DomainError("need lambda_0..lambda_n with n >= 1")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @property
    def n(self) -> int:
        return self.lambdas.size - 1

    def structurally_valid(self) -> bool:
        lam = self.lambdas
        return bool(lam[0] == 1.0 and np.all(np.isfinite(lam))
                    and np.all(lam >= 0) and np.all(lam <= 1))


def pmf_from_lambda(lv: LambdaVector, tol: float = VALIDITY_TOL) -> np.ndarray:
    """Probability of ``r = 0..n`` successes by inclusion-exclusion.

    The alternating sums use exactly rounded summation (``math.fsum``).
    Negatives down to ``-tol`` are clamped to zero and the vector is
    renormalised; anything worse raises :class:`InvalidLambdaError`.
    """
    if not lv.structurally_valid():
        raise InvalidLambdaError(
            "not a valid exchangeable specification: need lambda_0 = 1 and entries in [0, 1]"
        )
    lam = lv.lambdas.tolist()
    n = lv.n
    out = np.empty(n + 1)
    for r in range(n + 1):
        terms = [(-1) ** j * math.comb(n - r, j) * lam[r + j] for j in range(n - r + 1)]
        out[r] = math.comb(n, r) * math.fsum(terms)
    total = math.fsum(out)
    if out.min() < -tol or abs(total - 1.0) > tol:
        raise InvalidLambdaError(
            "not a valid exchangeable specification: "
            f"min probability {out.min():.3g}, total {total:.12g}"
        )
    out = np.clip(out, 0.0, None)
    return out / math.fsum(out)


def _check_p(p: float) -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    return p


def _check_n(n: int) -> int:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"cluster size n must be a positive integer, got {n}")
    return int(n)


def lambda_binomial(p: float, n: int) -> LambdaVector:
    """Independent trials: ``lam[j] = p**j``."""
    p, n = _check_p(p), _check_n(n)
    return LambdaVector(p ** np.arange(n + 1, dtype=float))


def beta_binomial_alpha_floor(p: float, n: int) -> float:
    """Smallest admissible correlation parameter (exclusive) for size ``n``."""
    if n <= 1:
        return -math.inf
    return -min(p, 1.0 - p) / (n - 1)


def lambda_beta_binomial(p: float, alpha: float, n: int) -> LambdaVector:
    """Beta-binomial joint probabilities.

    ``lam[k] = prod_{i<k} (p + i alpha) / (1 + i alpha)``; ``alpha`` may be
    negative down to (not including) ``-min(p, 1-p) / (n-1)``.
    """
    p, n = _check_p(p), _check_n(n)
    alpha = float(alpha)
    floor = beta_binomial_alpha_floor(p, n)
    if not (alpha > floor and math.isfinite(alpha)):
        raise DomainError(f"beta-binomial alpha must exceed {floor:.6g} for n={n}, got {alpha}")
    lam = [1.0]
    for i in range(n):
        lam.append(lam[-1] * (p + i * alpha) / (1.0 + i * alpha))
    return LambdaVector(lam)


def lambda_qpower(p: float, gamma: float, n: int) -> LambdaVector:
    """q-power family ``lam[j] = p**(j**gamma)`` for ``0 <= gamma <= 1``.

    ``gamma == 1`` gives independent trials; smaller ``gamma`` means
    stronger positive correlation.  ``lam[0]`` is pinned to 1.
    """
    p, n = _check_p(p), _check_n(n)
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise DomainError(f"q-power gamma must lie in [0, 1], got {gamma}")
    j = np.arange(n + 1, dtype=float)
    lam = p ** np.power(j, gamma)
    lam[0] = 1.0
    return LambdaVector(lam)


def qpower_zero_count_pmf(q: float, gamma: float, n: int) -> np.ndarray:
    """Law of the number of *unaffected* units, ``P(n - Y = r)``.

    This is the failure-probability form of the q-power model with
    ``q = 1 - p``; it is the success-form pmf read backwards.
    """
    q = _check_p(q)
    return pmf_from_lambda(lambda_qpower(1.0 - q, gamma, n))[::-1].copy()


def lambda_from_transition(row: TransitionDistribution, tol: float = 1e-8) -> LambdaVector:
    """Invert inclusion-exclusion on a counting-process row ``P[0, 0..n]``.

    Works backwards from ``lam[n] = P[0, n]``:
    ``lam[r] = P[0, r] / C(n, r) - sum_{j=1}^{n-r} (-1)**j C(n-r, j) lam[r+j]``.
    The recursion yields ``lam[0]`` as a by-product; it must come out as 1
    within ``tol`` and is then pinned to exactly 1.
    """
    if row.m != 0:
        raise DomainError("lambda_from_transition needs the row started at m = 0")
    n = row.n
    probs = row.probs.tolist()
    lam = [0.0] * (n + 1)
    for r in range(n, -1, -1):
        tail = [(-1) ** j * math.comb(n - r, j) * lam[r + j] for j in range(1, n - r + 1)]
        lam[r] = math.fsum([probs[r] / math.comb(n, r)] + [-x for x in tail])
    if abs(lam[0] - 1.0) > tol:
        raise NumericalConsistencyError(
            f"recovered lambda_0 = {lam[0]!r} deviates from 1 by more than {tol}"
        )
    lam[0] = 1.0
    # rounding can push entries a hair outside [0, 1]
    return LambdaVector(np.clip(lam, 0.0, 1.0))
