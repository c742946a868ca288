"""Cluster observations and the catalog of counting-process rate models.

A cluster of ``n`` units is summarised by the number ``r`` of affected
units.  Its likelihood comes from a pure-birth process that jumps from
``k`` to ``k + 1`` affected units at rate ``mu[k]``.  The named families
below build ``mu[0..n]`` from a handful of parameters:

=============  ==========================  ===============
family         rate ``mu[k]``              parameters
=============  ==========================  ===============
susceptible1   ``a (n-k)``                 ``(alpha,)``
susceptible2   ``a (n-k)**g``              ``(alpha, gamma)``
infectivity1   ``b k (n-k)``               ``(beta,)``
infectivity2   ``b k**e (n-k)**g``         ``(beta, eta, gamma)``
combined       ``a (n-k) + b k (n-k)``     ``(alpha, beta)``
custom         explicit table              ``mu[0..n]``
=============  ==========================  ===============

``mu[n]`` is always zero: a fully affected cluster cannot grow.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """A parameter or observation lies outside its admissible domain."""


class RateFamily(str, enum.Enum):
    SUSCEPTIBLE1 = "susceptible1"
    SUSCEPTIBLE2 = "susceptible2"
    INFECTIVITY1 = "infectivity1"
    INFECTIVITY2 = "infectivity2"
    COMBINED = "combined"
    CUSTOM = "custom"


PARAM_NAMES: dict[RateFamily, tuple[str, ...]] = {
    RateFamily.SUSCEPTIBLE1: ("alpha",),
    RateFamily.SUSCEPTIBLE2: ("alpha", "gamma"),
    RateFamily.INFECTIVITY1: ("beta",),
    RateFamily.INFECTIVITY2: ("beta", "eta", "gamma"),
    RateFamily.COMBINED: ("alpha", "beta"),
}

# parameters allowed to be exactly zero
_NONNEGATIVE = {
    RateFamily.SUSCEPTIBLE2: {"gamma"},
    RateFamily.INFECTIVITY2: {"eta", "gamma"},
}


@dataclass(frozen=True)
class ClusterObservation:
    """One cluster: size ``n``, affected count ``r``, ascertainment floor ``m``.

    ``weight`` is a frequency weight for identical rows and ``covariates``
    holds cluster-level covariate values (empty when there are none).
    """

    n: int
    r: int
    m: int = 0
    weight: float = 1.0
    covariates: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(float(c) for c in self.covariates))


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_observation(obs: ClusterObservation) -> ValidationReport:
    """Check the invariants of a cluster observation.

    Returns a report listing every violated invariant; an empty report
    means the observation is usable.  Never raises.
    """
    problems = []
    for name in ("n", "r", "m"):
        value = getattr(obs, name)
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            problems.append(f"{name} must be an integer")
    if problems:
        return ValidationReport(tuple(problems))
    if obs.n < 1:
        problems.append("n >= 1")
    if obs.m < 0:
        problems.append("0 <= m")
    if obs.m > obs.r:
        problems.append("m <= r")
    if obs.r > obs.n:
        problems.append("r <= n")
    if obs.r < 0:
        problems.append("r >= 0")
    if not (isinstance(obs.weight, (int, float, np.number)) and obs.weight > 0
            and math.isfinite(obs.weight)):
        problems.append("weight > 0")
    if not all(math.isfinite(c) for c in obs.covariates):
        problems.append("covariates finite")
    return ValidationReport(tuple(problems))


@dataclass(frozen=True)
class RateSchedule:
    """Arrival rates ``mu[0..n]`` of a pure-birth process capped at ``n``."""

    rates: np.ndarray = field(repr=False)

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float)
        if rates.ndim != 1 or rates.size < 2:
            raise DomainError("rate schedule needs at least two entries (n >= 1)")
        if not np.all(np.isfinite(rates)):
            raise DomainError("rates must be finite")
        if np.any(rates < 0):
            raise DomainError("rates must be nonnegative")
        if rates[-1] != 0.0:
            raise DomainError("last rate mu[n] must be exactly 0")
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)

    @property
    def n(self) -> int:
        return self.rates.size - 1

    def scaled(self, factor: float) -> RateSchedule:
        """Schedule with every rate multiplied by ``factor``."""
        return RateSchedule(self.rates * factor)

    def __repr__(self):
        return f"RateSchedule(n={self.n}, rates={self.rates.tolist()})"


@dataclass(frozen=True)
class RateModelSpec:
    """A named rate family together with its parameter values.

    For ``RateFamily.CUSTOM`` the parameters are the rate table itself.
    """

    family: RateFamily
    params: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "family", RateFamily(self.family))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        check_params(self.family, self.params)

    @property
    def param_names(self) -> tuple[str, ...]:
        if self.family is RateFamily.CUSTOM:
            return tuple(f"mu{k}" for k in range(len(self.params)))
        return PARAM_NAMES[self.family]

    @classmethod
    def custom(cls, rates) -> RateModelSpec:
        return cls(RateFamily.CUSTOM, tuple(rates))


def check_params(family: RateFamily, params) -> None:
    family = RateFamily(family)
    params = tuple(params)
    if family is RateFamily.CUSTOM:
        if len(params) < 2:
            raise DomainError("custom rate table needs at least two entries")
        if any(not math.isfinite(p) or p < 0 for p in params):
            raise DomainError("custom rates must be finite and nonnegative")
        if params[-1] != 0.0:
            raise DomainError("custom rate table must end with a zero rate")
        return
    names = PARAM_NAMES[family]
    if len(params) != len(names):
        raise DomainError(
            f"{family.value} takes {len(names)} parameter(s) {names}, got {len(params)}"
        )
    zero_ok = _NONNEGATIVE.get(family, set())
    for name, value in zip(names, params):
        if not math.isfinite(value):
            raise DomainError(f"parameter {name} must be finite, got {value}")
        if name in zero_ok:
            if value < 0:
                raise DomainError(f"parameter {name} must be >= 0, got {value}")
        elif value <= 0:
            raise DomainError(f"parameter {name} must be > 0, got {value}")


def family_rates(family: RateFamily, params, n: int) -> np.ndarray:
    """Evaluate a family's rate formula without domain checks.

    Zero is accepted for every parameter so that boundary fits (for
    example ``combined`` with ``beta == 0``) evaluate the limiting model.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _evaluate(RateFamily(family), params, n)


def _evaluate(family, params, n):
    k = np.arange(n + 1, dtype=float)
    free = n - k
    if family is RateFamily.SUSCEPTIBLE1:
        (alpha,) = params
        mu = alpha * free
    elif family is RateFamily.SUSCEPTIBLE2:
        alpha, gamma = params
        mu = alpha * np.power(free, gamma)
    elif family is RateFamily.INFECTIVITY1:
        (beta,) = params
        mu = beta * k * free
    elif family is RateFamily.INFECTIVITY2:
        beta, eta, gamma = params
        # numpy already uses 0**0 == 1
        mu = beta * np.power(k, eta) * np.power(free, gamma)
        mu[0] = 0.0
    elif family is RateFamily.COMBINED:
        alpha, beta = params
        mu = alpha * free + beta * k * free
    elif family is RateFamily.CUSTOM:
        mu = np.array(params, dtype=float)
        if mu.size != n + 1:
            raise DomainError(f"custom rate table has {mu.size} entries, need n + 1 = {n + 1}")
        return mu
    else:
        raise DomainError(f"unknown rate family {family!r}")
    mu[n] = 0.0
    return mu


def rate_vector(spec: RateModelSpec, n: int) -> RateSchedule:
    """Rates ``mu[0..n]`` of ``spec`` for a cluster of size ``n``.

    >>> rate_vector(RateModelSpec("susceptible1", (0.5,)), 3).rates.tolist()
    [1.5, 1.0, 0.5, 0.0]
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"cluster size n must be a positive integer, got {n}")
    return RateSchedule(family_rates(spec.family, spec.params, int(n)))
