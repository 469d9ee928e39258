"""Parametric families for the offspring, immigration and intensity laws.

The offspring p.g.f. is ``f(s) = s + (1 - s)**(1 + gamma) * L(1 / (1 - s))``,
the immigration p.g.f. is ``g(s) = 1 - (1 - s)**alpha * l(1 / (1 - s))`` and
the immigration intensity is ``r(t) = L_R(t) * (t + tau0)**(-theta)``.
``L``, ``l`` and ``L_R`` are slowly varying functions described by
:class:`SlowlyVaryingSpec`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DomainError, SingularityError, UnsupportedFamilyError

__all__ = [
    "SlowlyVaryingSpec",
    "OffspringLaw",
    "ImmigrationLaw",
    "IntensityLaw",
    "LawSet",
    "eval_f",
    "eval_g",
    "eval_r",
    "offspring_masses",
    "offspring_tail",
]

CONSTANT = "Constant"
LOGPOWER = "LogPower"
_KINDS = (CONSTANT, LOGPOWER)


@dataclass(frozen=True)
class SlowlyVaryingSpec:
    """Slowly varying function ``c`` or ``c * ln(e + x)**beta``.

    Parameters
    ----------
    kind : {"Constant", "LogPower"}
        Family of the function.
    c : float
        Positive scale.
    beta : float, default 0
        Log exponent, only used by ``LogPower``.
    """

    kind: str = CONSTANT
    c: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown slowly varying kind {self.kind!r}")
        c = float(self.c)
        beta = float(self.beta)
        if not (math.isfinite(c) and c > 0.0):
            raise ConfigError(f"slowly varying scale must be positive and finite, got {self.c!r}")
        if not math.isfinite(beta):
            raise ConfigError(f"log exponent must be finite, got {self.beta!r}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "beta", beta if self.kind == LOGPOWER else 0.0)

    @property
    def is_constant(self) -> bool:
        return self.kind == CONSTANT or self.beta == 0.0

    def value(self, x):
        """Evaluate at ``x >= 0`` (scalar or array)."""
        if self.is_constant:
            if np.ndim(x) == 0:
                return self.c
            return np.full(np.shape(x), self.c)
        return self.c * np.log(math.e + np.asarray(x, dtype=float)) ** self.beta

    def log_value(self, x):
        """Natural log of :meth:`value`, accurate for huge ``x``."""
        if self.is_constant:
            out = math.log(self.c)
            return out if np.ndim(x) == 0 else np.full(np.shape(x), out)
        x = np.asarray(x, dtype=float)
        return math.log(self.c) + self.beta * np.log(np.log(math.e + x))

    def log_value_at_log(self, z):
        """``log value(e^z)`` without forming ``e^z``."""
        if self.is_constant:
            out = math.log(self.c)
            return out if np.ndim(z) == 0 else np.full(np.shape(z), out)
        z = np.asarray(z, dtype=float)
        # ln(e + e^z) = max(1, z) + log1p(e^{-|z - 1|})
        lx = np.maximum(z, 1.0) + np.log1p(np.exp(-np.abs(z - 1.0)))
        out = math.log(self.c) + self.beta * np.log(lx)
        return float(out) if out.ndim == 0 else out


def _default_L(gamma):
    return SlowlyVaryingSpec(CONSTANT, 1.0 / (1.0 + gamma))


def _unit_grid():
    return np.linspace(0.0, 1.0, 1001)


@dataclass(frozen=True)
class OffspringLaw:
    """Critical offspring law with p.g.f. ``s + (1-s)^(1+gamma) L(1/(1-s))``.

    Parameters
    ----------
    gamma : float
        Tail index in ``(0, 1]``; ``gamma = 1`` with ``L = 1/2`` is binary
        splitting.
    L : SlowlyVaryingSpec, optional
        Defaults to the constant ``1 / (1 + gamma)`` which makes ``p1 = 0``.
    """

    gamma: float
    L: Optional[SlowlyVaryingSpec] = None

    def __post_init__(self):
        gamma = float(self.gamma)
        if not (0.0 < gamma <= 1.0):
            raise ConfigError(f"offspring gamma must lie in (0, 1], got {self.gamma!r}")
        object.__setattr__(self, "gamma", gamma)
        if self.L is None:
            object.__setattr__(self, "L", _default_L(gamma))
        L = self.L
        if L.is_constant:
            if L.c > 1.0 / (1.0 + gamma) * (1.0 + 1e-12):
                raise ConfigError(
                    f"constant L must satisfy c <= 1/(1+gamma) = {1.0 / (1.0 + gamma):.6g} "
                    f"for non-negative masses, got {L.c:.6g}"
                )
        else:
            p0 = float(L.value(1.0))
            if not (0.0 < p0 < 1.0):
                raise ConfigError(f"offspring law has f(0) = {p0:.6g} outside (0, 1)")
            s = _unit_grid()[:-1]
            fs = eval_f(self, s)
            if np.any(np.diff(fs) < -1e-14) or np.any(np.diff(fs, 2) < -1e-12):
                raise ConfigError("offspring p.g.f. is not non-decreasing and convex on [0, 1)")

    @property
    def p0(self) -> float:
        return float(self.L.value(1.0))


@dataclass(frozen=True)
class ImmigrationLaw:
    """Immigrant batch law with p.g.f. ``1 - (1-s)^alpha l(1/(1-s))``.

    Parameters
    ----------
    alpha : float
        Tail index in ``(0, 1]``.
    l : SlowlyVaryingSpec, optional
        Defaults to the constant 1 (Sibuya batches; single immigrants when
        ``alpha = 1``).
    """

    alpha: float
    l: Optional[SlowlyVaryingSpec] = None

    def __post_init__(self):
        alpha = float(self.alpha)
        if not (0.0 < alpha <= 1.0):
            raise ConfigError(f"immigration alpha must lie in (0, 1], got {self.alpha!r}")
        object.__setattr__(self, "alpha", alpha)
        if self.l is None:
            object.__setattr__(self, "l", SlowlyVaryingSpec(CONSTANT, 1.0))
        g0 = 1.0 - float(self.l.value(1.0))
        if g0 < -1e-15:
            raise ConfigError(f"immigration law has g(0) = {g0:.6g} < 0 (need l(1) <= 1)")
        if not self.l.is_constant:
            gs = eval_g(self, _unit_grid()[:-1])
            if np.any(np.diff(gs) < -1e-14):
                raise ConfigError("immigration p.g.f. is not non-decreasing on [0, 1)")

    @property
    def is_sibuya(self) -> bool:
        return self.l.is_constant and self.l.c == 1.0


@dataclass(frozen=True)
class IntensityLaw:
    """Regularized power-law intensity ``L_R(t) (t + tau0)^(-theta)``.

    Parameters
    ----------
    theta : float
        Positive decay exponent.
    L_R : SlowlyVaryingSpec, optional
        Defaults to the constant 1.
    tau0 : float, default 1
        Non-negative time offset that keeps ``r(0)`` finite.
    """

    theta: float
    L_R: Optional[SlowlyVaryingSpec] = None
    tau0: float = 1.0

    def __post_init__(self):
        theta = float(self.theta)
        tau0 = float(self.tau0)
        if not (math.isfinite(theta) and theta > 0.0):
            raise ConfigError(f"intensity theta must be positive, got {self.theta!r}")
        if not (math.isfinite(tau0) and tau0 >= 0.0):
            raise ConfigError(f"intensity tau0 must be non-negative, got {self.tau0!r}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "tau0", tau0)
        if self.L_R is None:
            object.__setattr__(self, "L_R", SlowlyVaryingSpec(CONSTANT, 1.0))
        if not self.L_R.is_constant:
            lo = 1e-9 if tau0 == 0.0 else 0.0
            t = np.concatenate(([lo], np.geomspace(max(lo, 1e-6), 1e15, 2000)))
            r = eval_r(self, t)
            if np.any(np.diff(r) > 1e-12 * r[:-1]):
                raise ConfigError("intensity r(t) must be non-increasing in t")


@dataclass(frozen=True)
class LawSet:
    """Full model parameterization.

    Parameters
    ----------
    offspring, immigration, intensity : law objects
    mu : float, default 1
        Exponential lifetime rate.
    """

    offspring: OffspringLaw
    immigration: ImmigrationLaw
    intensity: IntensityLaw
    mu: float = 1.0

    def __post_init__(self):
        mu = float(self.mu)
        if not (math.isfinite(mu) and mu > 0.0):
            raise ConfigError(f"mu must be positive, got {self.mu!r}")
        object.__setattr__(self, "mu", mu)

    @classmethod
    def constant(
        cls,
        gamma: float,
        alpha: float,
        theta: float,
        mu: float = 1.0,
        L_c: Optional[float] = None,
        l_c: float = 1.0,
        R_c: float = 1.0,
        tau0: float = 1.0,
    ) -> "LawSet":
        """Build a law set whose slowly varying functions are all constant."""
        L = None if L_c is None else SlowlyVaryingSpec(CONSTANT, L_c)
        return cls(
            OffspringLaw(gamma, L),
            ImmigrationLaw(alpha, SlowlyVaryingSpec(CONSTANT, l_c)),
            IntensityLaw(theta, SlowlyVaryingSpec(CONSTANT, R_c), tau0),
            mu,
        )

    @property
    def gamma(self) -> float:
        return self.offspring.gamma

    @property
    def alpha(self) -> float:
        return self.immigration.alpha

    @property
    def theta(self) -> float:
        return self.intensity.theta

    @property
    def is_constant(self) -> bool:
        """True when ``L``, ``l`` and ``L_R`` are all constant."""
        return (
            self.offspring.L.is_constant
            and self.immigration.l.is_constant
            and self.intensity.L_R.is_constant
        )


def _check_unit(s):
    arr = np.asarray(s, dtype=float)
    if np.any(~(arr >= 0.0)) or np.any(arr > 1.0):
        raise DomainError("p.g.f. argument must lie in [0, 1]")
    return arr


def eval_f(law: OffspringLaw, s):
    """Offspring p.g.f. ``f(s)``; returns 1 at ``s = 1``.

    Parameters
    ----------
    law : OffspringLaw
    s : float or array_like in [0, 1]
    """
    arr = _check_unit(s)
    w = 1.0 - arr
    with np.errstate(divide="ignore", invalid="ignore"):
        Lw = law.L.value(np.where(w > 0, 1.0 / np.where(w > 0, w, 1.0), 1.0))
        out = np.where(w > 0, arr + w ** (1.0 + law.gamma) * Lw, 1.0)
    return float(out) if np.ndim(s) == 0 else out


def eval_g(law: ImmigrationLaw, s):
    """Immigration p.g.f. ``g(s)``; returns 1 at ``s = 1``."""
    arr = _check_unit(s)
    w = 1.0 - arr
    with np.errstate(divide="ignore", invalid="ignore"):
        lw = law.l.value(np.where(w > 0, 1.0 / np.where(w > 0, w, 1.0), 1.0))
        out = np.where(w > 0, 1.0 - w**law.alpha * lw, 1.0)
    return float(out) if np.ndim(s) == 0 else out


def eval_r(law: IntensityLaw, t):
    """Immigration intensity ``r(t)``.

    Raises
    ------
    SingularityError
        If ``t = 0`` and ``tau0 = 0``.
    """
    arr = np.asarray(t, dtype=float)
    if np.any(~(arr >= 0.0)):
        raise DomainError("intensity time must be non-negative")
    base = arr + law.tau0
    if np.any(base <= 0.0):
        raise SingularityError("r(0) is singular when tau0 = 0")
    out = law.L_R.value(arr) * base ** (-law.theta)
    return float(out) if np.ndim(t) == 0 else out


def offspring_masses(law: OffspringLaw, kmax: int) -> np.ndarray:
    """Probability masses ``p_0 .. p_kmax`` of the constant-``L`` family.

    Raises
    ------
    UnsupportedFamilyError
        If ``L`` is not constant.
    """
    if not law.L.is_constant:
        raise UnsupportedFamilyError("offspring masses are available for constant L only")
    kmax = int(kmax)
    if kmax < 2:
        raise DomainError("kmax must be at least 2")
    c, gamma = law.L.c, law.gamma
    p = np.empty(kmax + 1)
    p[0] = c
    p[1] = max(1.0 - (1.0 + gamma) * c, 0.0)
    p[2] = c * (1.0 + gamma) * gamma / 2.0
    k = np.arange(2, kmax, dtype=float)
    p[3:] = p[2] * np.cumprod((k - 1.0 - gamma) / (k + 1.0))
    return p


def offspring_tail(law: OffspringLaw, k):
    """Exact tail ``P(xi > k)`` of the constant-``L`` family for integer ``k >= 0``."""
    if not law.L.is_constant:
        raise UnsupportedFamilyError("offspring tail is available for constant L only")
    from scipy.special import gammaln

    c, gamma = law.L.c, law.gamma
    k = np.asarray(k, dtype=float)
    if gamma == 1.0:
        out = np.where(k < 1, 1.0 - c, np.where(k < 2, c, 0.0))
    else:
        kk = np.maximum(k, 1.0)
        log_tail = (
            math.log(c * gamma)
            + gammaln(kk - gamma)
            - gammaln(1.0 - gamma)
            - gammaln(kk + 1.0)
        )
        out = np.where(k < 1, 1.0 - c, np.exp(log_tail))
    return float(out) if out.ndim == 0 else out
