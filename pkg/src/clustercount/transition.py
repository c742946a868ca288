"""Transition probabilities of a pure-birth process on ``{0, ..., n}``.

The production path is uniformization.  With ``L = max(mu)`` the chain
is rewritten as a discrete kernel ``U = I + Q / L`` observed at Poisson
(``L t``) many steps, so ``P(t) = sum_j Pois(j; L t) U**j``.  To keep the
Poisson weights well scaled for large ``L t`` the horizon is split into
``2**s`` pieces with ``L t / 2**s <= 1/2``, the series is summed on one
piece and the result squared ``s`` times.  Every term is nonnegative, so
small probabilities keep full relative precision and states that cannot
be reached come out as exact zeros.

The truncation point is chosen so the neglected Poisson mass, inflated by
the ``2**s`` squarings, stays below ``1e-20``: far under the ``1e-12``
per-entry budget, and too small to make the likelihood surface jumpy when
the truncation point moves with the parameters.

:func:`transition_closed_form` evaluates the classical distinct-rate
formula.  It cancels catastrophically for nearby rates and is kept only
as an independent check of the numerical path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError, RateSchedule

TRUNCATION_TOL = 1e-20
_PIECE = 0.5


class RateTieError(DomainError):
    """Closed form requested for rates that are (nearly) equal."""


@dataclass(frozen=True)
class TransitionDistribution:
    """Row ``P[m, m..n](t)`` of the transition matrix."""

    m: int
    n: int
    probs: np.ndarray

    def prob(self, r: int) -> float:
        if r < self.m or r > self.n:
            return 0.0
        return float(self.probs[r - self.m])

    def full(self) -> np.ndarray:
        """Probabilities over ``0..n`` with zeros below ``m``."""
        out = np.zeros(self.n + 1)
        out[self.m:] = self.probs
        return out


def _check_time(t: float) -> float:
    t = float(t)
    if not (t > 0 and math.isfinite(t)):
        raise DomainError(f"time t must be positive and finite, got {t}")
    return t


def _poisson_terms(x: float, squarings: int) -> int:
    # P(N > K) <= x**(K+1) / (K+1)! for x <= 1
    budget = TRUNCATION_TOL / 2.0**squarings
    k, term = 0, x
    while term >= budget:
        k += 1
        term *= x / (k + 1)
    return k


def _uniformized(rates: np.ndarray, t: float) -> np.ndarray:
    size = rates.size
    top = float(rates.max())
    if top == 0.0:
        return np.eye(size)
    x = top * t
    squarings = max(0, math.ceil(math.log2(x / _PIECE))) if x > _PIECE else 0
    x_piece = x / 2.0**squarings

    step = rates / top
    kernel = np.diag(1.0 - step)
    kernel[np.arange(size - 1), np.arange(1, size)] = step[:-1]

    terms = _poisson_terms(x_piece, squarings)
    eye = np.eye(size)
    acc = eye.copy()
    for j in range(terms, 0, -1):
        acc = eye + (x_piece / j) * (kernel @ acc)
    out = math.exp(-x_piece) * acc
    for _ in range(squarings):
        out = out @ out
    return np.minimum(out, 1.0)


def transition_matrix(sched: RateSchedule, t: float = 1.0) -> np.ndarray:
    """Full ``(n+1) x (n+1)`` matrix ``P[m, r](t)`` by uniformization."""
    return _uniformized(sched.rates, _check_time(t))


def _check_start(sched: RateSchedule, m: int) -> int:
    if isinstance(m, bool) or int(m) != m or not 0 <= m <= sched.n:
        raise DomainError(f"start state m must be an integer in [0, {sched.n}], got {m}")
    return int(m)


def transition_distribution(sched: RateSchedule, m: int = 0, t: float = 1.0) -> TransitionDistribution:
    """Distribution of the state at time ``t`` given ``m`` arrivals at time 0.

    Only the sub-chain ``m..n`` is propagated; states above an interior
    absorbing state (``mu[k] == 0`` for ``k < n``) get probability 0.

    >>> import math
    >>> from clustercount.core import RateModelSpec, rate_vector
    >>> sched = rate_vector(RateModelSpec("susceptible1", (math.log(2),)), 2)
    >>> transition_distribution(sched, 0).probs.round(12).tolist()
    [0.25, 0.5, 0.25]
    """
    m = _check_start(sched, m)
    t = _check_time(t)
    row = _uniformized(sched.rates[m:], t)[0]
    return TransitionDistribution(m=m, n=sched.n, probs=row)


def log_transition(sched: RateSchedule, m: int, r: int, t: float = 1.0) -> float:
    """``log P[m, r](t)``; ``-inf`` for unreachable states."""
    m = _check_start(sched, m)
    if isinstance(r, bool) or int(r) != r or not m <= r <= sched.n:
        raise DomainError(f"end state r must be an integer in [{m}, {sched.n}], got {r}")
    p = transition_distribution(sched, m, t).prob(int(r))
    return math.log(p) if p > 0 else -math.inf


def transition_closed_form(sched: RateSchedule, m: int, r: int, t: float = 1.0,
                           min_gap: float = 1e-6) -> float:
    """Distinct-rate closed form for ``P[m, r](t)``.

    ``(prod_{k=m}^{r-1} mu_k) * sum_{k=m}^{r} exp(-mu_k t) / prod_{l != k} (mu_l - mu_k)``
    with ``l`` ranging over ``m..r``.  Raises :class:`RateTieError` if two of
    ``mu[m..r]`` are within relative gap ``min_gap``; use
    :func:`transition_distribution` for those.
    """
    m = _check_start(sched, m)
    if isinstance(r, bool) or int(r) != r or not m <= r <= sched.n:
        raise DomainError(f"end state r must be an integer in [{m}, {sched.n}], got {r}")
    t = _check_time(t)
    mu = [float(v) for v in sched.rates[m:r + 1]]
    for i in range(len(mu)):
        for j in range(i + 1, len(mu)):
            scale = max(abs(mu[i]), abs(mu[j]))
            if scale == 0.0 or abs(mu[i] - mu[j]) < min_gap * scale:
                raise RateTieError(
                    f"rates mu[{m + i}] and mu[{m + j}] are tied; "
                    "use transition_distribution instead"
                )
    lead = math.prod(mu[:-1])
    total = 0.0
    for k, mk in enumerate(mu):
        denom = math.prod(ml - mk for l, ml in enumerate(mu) if l != k)
        total += math.exp(-mk * t) / denom
    return lead * total
