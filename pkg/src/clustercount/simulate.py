"""Simulation of exchangeable binary clusters through the embedding.

A cluster of ``n`` units is built in ``n`` steps.  At step ``k`` every
still-unassigned unit draws an exponential clock with rate
``mu[k-1] / (n-k+1)``; the winner is the unit selected at that step and
the winning time is the dwell time of the counting process in state
``k-1``.  The selected unit is affected iff the cumulative time is below
the horizon ``t = 1``.  The minimum of the clocks is exponential with
rate ``mu[k-1]`` and independent of which unit won, so by default we
draw one exponential per step and a uniform winner (``literal=False``);
``literal=True`` draws all the clocks.

Random streams: every function takes a ``numpy.random.Generator``.
Datasets derive one independent PCG64 stream per cluster by spawning
``numpy.random.SeedSequence(seed)``, so output depends only on the seed
and the cluster's position, not on thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import ClusterObservation, DomainError, RateModelSpec, RateSchedule, rate_vector

MAX_ATTEMPTS = 10**6


class RejectionCapExceeded(RuntimeError):
    """Ascertainment by rejection failed to produce an acceptable cluster."""


@dataclass(frozen=True)
class SimulatedCluster:
    assignments: np.ndarray
    count: int
    arrival_times: np.ndarray
    order: np.ndarray


@dataclass(frozen=True)
class RegressionSpec:
    """Combined model with ``log alpha = z'phi`` and ``log beta = z'psi``.

    ``z = (1, covariates...)``.
    """

    phi: tuple[float, ...]
    psi: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(float(v) for v in self.phi))
        object.__setattr__(self, "psi", tuple(float(v) for v in self.psi))
        if len(self.phi) != len(self.psi) or not self.phi:
            raise DomainError("phi and psi need the same nonzero length")

    def rate_spec(self, covariates) -> RateModelSpec:
        z = np.concatenate(([1.0], np.asarray(covariates, dtype=float)))
        if z.size != len(self.phi):
            raise DomainError(f"expected {len(self.phi) - 1} covariates, got {z.size - 1}")
        return RateModelSpec("combined", (float(np.exp(z @ self.phi)), float(np.exp(z @ self.psi))))


def simulate_cluster(sched: RateSchedule, rng: np.random.Generator, t: float = 1.0,
                     literal: bool = False) -> SimulatedCluster:
    """Draw one exchangeable binary vector from a rate schedule."""
    n = sched.n
    rates = sched.rates
    z = np.zeros(n, dtype=np.int8)
    remaining = list(range(n))
    clock = 0.0
    times, order = [], []
    for k in range(n):
        rate = rates[k]
        if rate == 0.0:
            break
        at_risk = n - k
        if literal:
            clocks = rng.exponential(at_risk / rate, size=at_risk)
            pick = int(np.argmin(clocks))
            dwell = float(clocks[pick])
        else:
            dwell = float(rng.exponential(1.0 / rate))
            pick = int(rng.integers(at_risk))
        unit = remaining.pop(pick)
        clock += dwell
        times.append(clock)
        order.append(unit)
        if clock < t:
            z[unit] = 1
    return SimulatedCluster(
        assignments=z,
        count=int(z.sum()),
        arrival_times=np.array(times),
        order=np.array(order, dtype=int),
    )


def simulate_count(sched: RateSchedule, m: int, rng: np.random.Generator, t: float = 1.0) -> int:
    """State at time ``t`` of the counting process started in state ``m``."""
    if not 0 <= m <= sched.n:
        raise DomainError(f"start state m must lie in [0, {sched.n}], got {m}")
    state, clock = m, 0.0
    rates = sched.rates
    while state < sched.n and rates[state] > 0.0:
        clock += rng.exponential(1.0 / rates[state])
        if clock >= t:
            break
        state += 1
    return state


def simulate_counts(sched: RateSchedule, m: int, size: int, rng: np.random.Generator,
                    t: float = 1.0) -> np.ndarray:
    """Vectorised :func:`simulate_count` for ``size`` independent clusters."""
    if not 0 <= m <= sched.n:
        raise DomainError(f"start state m must lie in [0, {sched.n}], got {m}")
    rates = sched.rates[m:sched.n]
    if rates.size == 0:
        return np.full(size, m, dtype=int)
    with np.errstate(divide="ignore"):
        scale = np.where(rates > 0, 1.0 / rates, np.inf)
    dwell = rng.standard_exponential((size, rates.size)) * scale
    arrivals = np.cumsum(dwell, axis=1)
    return m + (arrivals < t).sum(axis=1)


def _draw_one(model, n, covariates, ascertain, policy, max_attempts, seed_seq):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    spec = model.rate_spec(covariates) if isinstance(model, RegressionSpec) else model
    sched = rate_vector(spec, n)
    if policy == "start":
        return simulate_count(sched, ascertain, rng)
    for _ in range(max_attempts):
        r = simulate_count(sched, 0, rng)
        if r >= ascertain:
            return r
    raise RejectionCapExceeded(
        f"no cluster of size {n} with at least {ascertain} affected in {max_attempts} attempts"
    )


def simulate_dataset(model, sizes, seed: int, ascertain: int = 0, policy: str = "start",
                     covariates=None, max_attempts: int = MAX_ATTEMPTS,
                     threads: int = 1) -> list[ClusterObservation]:
    """Simulate one observation per entry of ``sizes``.

    Parameters
    ----------
    model : RateModelSpec or RegressionSpec
        Rates for each cluster; a regression spec needs ``covariates``.
    sizes : sequence of int
        Cluster sizes.
    seed : int
        Root seed; cluster ``i`` uses the ``i``-th spawned child stream.
    ascertain : int
        Ascertainment floor ``m`` recorded on every observation.
    policy : {"start", "reject"}
        ``"start"`` runs the process from state ``m``, the law used by the
        likelihood.  ``"reject"`` runs it from 0 and redraws until the count
        reaches ``m``, giving up after ``max_attempts``.
    covariates : array_like, optional
        One row of covariates per cluster.
    threads : int
        Worker threads; the output does not depend on it.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise DomainError("sizes must be nonempty")
    if policy not in ("start", "reject"):
        raise DomainError(f"unknown ascertainment policy {policy!r}")
    if ascertain < 0 or any(ascertain > s for s in sizes):
        raise DomainError(f"ascertainment floor {ascertain} outside [0, n] for some cluster")
    if isinstance(model, RegressionSpec):
        if covariates is None:
            raise DomainError("regression simulation needs covariates")
        cov = np.asarray(covariates, dtype=float).reshape(len(sizes), -1)
    else:
        cov = np.zeros((len(sizes), 0)) if covariates is None else \
            np.asarray(covariates, dtype=float).reshape(len(sizes), -1)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(model, n, cov[i], ascertain, policy, max_attempts, streams[i])
            for i, n in enumerate(sizes)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            counts = list(pool.map(lambda job: _draw_one(*job), jobs))
    else:
        counts = [_draw_one(*job) for job in jobs]
    return [ClusterObservation(n=n, r=int(r), m=ascertain, covariates=tuple(cov[i]))
            for i, (n, r) in enumerate(zip(sizes, counts))]
