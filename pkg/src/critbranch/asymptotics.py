"""Regime classification, survival asymptotes and limit laws.

The classification is driven by the intensity exponent ``theta`` and the
ratio ``alpha / gamma`` of the immigrant and offspring tail exponents; the
boundary cases are resolved with the limits of ``t r(t) q(t)`` or
``r(t) / q(t)``, symbolically for constant slowly varying functions and by
large-``t`` probing otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
from scipy.integrate import quad
from scipy.special import betaln

from .analytic import AnalyticEngine
from .errors import DomainError, UnavailableConstantError
from .laws import LawSet

__all__ = [
    "Regime",
    "LimitLaw",
    "REGIME_TAGS",
    "LIMIT_TAGS",
    "classify",
    "predict_survival",
    "eval_beta",
    "limit_law",
    "D_hat",
    "D_hat_gamma_d",
    "D1_hat",
    "D2_hat",
    "D3_hat",
]

REGIME_TAGS = ("A_Thm41", "B_Thm42i", "C_Thm42ii", "D1_Thm43i", "D2_Thm43ii", "D3_Thm43iii")
LIMIT_TAGS = (
    "Stationary_51i_52i_54ii",
    "Scaled_51ii_52ii_54i",
    "Mixture_51iii",
    "Scaled_53",
    "D1_55i",
    "D2_55ii",
    "Stable_55iii",
    "Unresolved",
)

EQ_TOL = 1e-12
PROBE_T = (1e8, 1e10, 1e12)


@dataclass(frozen=True)
class Regime:
    """Classification of a law set.

    Attributes
    ----------
    tag : str
        Survival regime, one of :data:`REGIME_TAGS`.
    limit_tag : str
        Limit-law family, one of :data:`LIMIT_TAGS`.
    constants : dict
        Optional reals ``Q``, ``R``, ``d``, ``K`` needed by the regime.
    """

    tag: str
    limit_tag: str
    constants: Dict[str, Optional[float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in REGIME_TAGS:
            raise DomainError(f"unknown regime tag {self.tag!r}")
        if self.limit_tag not in LIMIT_TAGS:
            raise DomainError(f"unknown limit tag {self.limit_tag!r}")


@dataclass(frozen=True)
class LimitLaw:
    """Limit law evaluator.

    Attributes
    ----------
    kind : {"PGF", "LaplaceTransform"}
    normalization : {"None", "W_mu_t", "PsiInv_R_t"}
    atom_at_zero, atom_at_infinity : float
    evaluate : callable
        Maps ``s`` (PGF) or ``lambda`` (Laplace transform) to a real.
    conditional : bool
        Whether the law describes ``Y(t)`` conditioned on ``Y(t) > 0``.
    complement : callable, optional
        ``1 - evaluate`` computed without cancellation.
    companion : LimitLaw, optional
        Second description of the same limit (the p.g.f. part of a mixture).
    """

    kind: str
    normalization: str
    atom_at_zero: float
    atom_at_infinity: float
    evaluate: Callable[[float], float]
    conditional: bool = True
    complement: Optional[Callable[[float], float]] = None
    companion: Optional["LimitLaw"] = None

    def __call__(self, x):
        return self.evaluate(x)

    def one_minus(self, x):
        """``1 - evaluate(x)``."""
        if self.complement is not None:
            return self.complement(x)
        return 1.0 - self.evaluate(x)


# ---------------------------------------------------------------- helpers
def eval_beta(a, b) -> float:
    """Euler beta function ``Gamma(a) Gamma(b) / Gamma(a + b)``.

    Raises
    ------
    DomainError
        If ``a <= 0`` or ``b <= 0``.
    """
    a = float(a)
    b = float(b)
    if not (a > 0.0 and b > 0.0):
        raise DomainError(f"beta function needs positive arguments, got ({a}, {b})")
    return math.exp(betaln(a, b))


def _eq(x, y):
    return abs(x - y) <= EQ_TOL * max(1.0, abs(x), abs(y))


def _probe_limit(values):
    """Classify a numerically probed limit as ``0``, ``inf``, a finite value or ``None``."""
    v = [float(x) for x in values]
    if any(not math.isfinite(x) or x < 0.0 for x in v):
        return None
    if all(x > 0.0 for x in v):
        ratios = [v[i + 1] / v[i] for i in range(len(v) - 1)]
        if all(abs(r - 1.0) <= 0.01 for r in ratios):
            return v[-1]
        if all(r <= 0.5 for r in ratios):
            return 0.0
        if all(r >= 2.0 for r in ratios):
            return math.inf
        return None
    if all(x == 0.0 for x in v[1:]):
        return 0.0
    return None


def _L_Q_constant(lawset: LawSet) -> float:
    off, imm = lawset.offspring, lawset.immigration
    return imm.l.c * (off.L.c * off.gamma * lawset.mu) ** (-imm.alpha / off.gamma)


def _R_is_finite(lawset: LawSet) -> bool:
    law = lawset.intensity
    if law.theta > 1.0 and not _eq(law.theta, 1.0):
        return law.tau0 > 0.0
    if _eq(law.theta, 1.0):
        return (not law.L_R.is_constant) and law.L_R.beta < -1.0 and law.tau0 > 0.0
    return False


# ------------------------------------------------------------- classify
def classify(lawset: LawSet, engine: Optional[AnalyticEngine] = None) -> Regime:
    """Classify ``lawset`` into a survival regime and a limit-law family.

    Parameters
    ----------
    lawset : LawSet
    engine : AnalyticEngine, optional
        Used for the numeric limit probes of non-constant families.

    Returns
    -------
    Regime

    Examples
    --------
    >>> classify(LawSet.constant(gamma=0.5, alpha=0.8, theta=2.0)).limit_tag
    'Scaled_51ii_52ii_54i'
    """
    theta = lawset.theta
    p = lawset.alpha / lawset.gamma
    constant = lawset.is_constant
    eng = engine if engine is not None else AnalyticEngine(lawset)
    R_fin = _R_is_finite(lawset)
    Q_fin = eng.Q_is_finite()
    consts: Dict[str, Optional[float]] = {}
    if R_fin:
        consts["R"] = eng.R_total()
    if Q_fin:
        consts["Q"] = eng.Q_total()

    theta_ge_1 = theta > 1.0 or _eq(theta, 1.0)
    p_ge_1 = p > 1.0 or _eq(p, 1.0)

    if theta_ge_1 and p_ge_1:
        tag = "A_Thm41"
        theta_is_1 = _eq(theta, 1.0)
        p_is_1 = _eq(p, 1.0)
        if R_fin and Q_fin:
            if _eq(theta, p):
                d = _ratio_limit_r_over_q(lawset, eng, constant)
                if d is None:
                    limit = "Unresolved"
                elif d == 0.0:
                    limit = "Scaled_51ii_52ii_54i"
                elif math.isinf(d):
                    limit = "Stationary_51i_52i_54ii"
                else:
                    limit = "Mixture_51iii"
                    consts["d"] = d
            elif theta < p:
                limit = "Stationary_51i_52i_54ii"
            else:
                limit = "Scaled_51ii_52ii_54i"
        elif theta_is_1 and not R_fin and p > 1.0 and not p_is_1:
            limit = "Stationary_51i_52i_54ii"
        elif theta > 1.0 and not theta_is_1 and p_is_1 and not Q_fin:
            limit = "Scaled_51ii_52ii_54i"
        elif theta_is_1 and p_is_1 and not Q_fin:
            d = _mixed_ratio_limit(lawset, eng, constant)
            if d is None or math.isinf(d):
                limit = "Unresolved"
            else:
                limit = "Scaled_53"
                consts["d"] = d
        else:
            limit = "Unresolved"
    elif theta_ge_1:
        tag, limit = "B_Thm42i", "Scaled_51ii_52ii_54i"
    elif p_ge_1:
        tag = "C_Thm42ii"
        limit = "Stationary_51i_52i_54ii" if Q_fin else "Unresolved"
    else:
        total = theta + p
        if _eq(total, 1.0):
            K = _trq_limit(lawset, eng, constant)
            if K is None:
                tag, limit = "D2_Thm43ii", "Unresolved"
            elif K == 0.0:
                tag, limit = "D1_Thm43i", "D1_55i"
            elif math.isinf(K):
                tag, limit = "D3_Thm43iii", "Stable_55iii"
            else:
                tag, limit = "D2_Thm43ii", "D2_55ii"
                consts["K"] = K
        elif total > 1.0:
            tag, limit = "D1_Thm43i", "D1_55i"
        else:
            tag, limit = "D3_Thm43iii", "Stable_55iii"
    return Regime(tag=tag, limit_tag=limit, constants=consts)


def _ratio_limit_r_over_q(lawset, eng, constant):
    """``lim r(t) / q(t)`` when the exponents coincide."""
    if constant:
        return lawset.intensity.L_R.c / _L_Q_constant(lawset)
    return _probe_limit([eng.r(t) / eng.q(t) for t in PROBE_T])


def _trq_limit(lawset, eng, constant):
    """``lim t r(t) q(t)`` when ``theta + alpha / gamma = 1``."""
    if constant:
        return lawset.intensity.L_R.c * _L_Q_constant(lawset)
    return _probe_limit([t * eng.r(t) * eng.q(t) for t in PROBE_T])


def _mixed_ratio_limit(lawset, eng, constant):
    """``lim r(t) Q(t) / (q(t) R(t))`` for the doubly critical boundary."""
    if constant:
        # r ~ c_R / t, q ~ L_Q / t, R(t) ~ c_R ln t, Q(t) ~ L_Q ln t
        return 1.0
    return _probe_limit([eng.r(t) * eng.Q_cum(t) / (eng.q(t) * eng.R_cum(t)) for t in PROBE_T])


# ----------------------------------------------------- survival asymptote
def predict_survival(regime: Regime, lawset: LawSet, t, engine: Optional[AnalyticEngine] = None) -> float:
    """Asymptotic approximation of ``P{Y(t) > 0}`` for the regime.

    Parameters
    ----------
    regime : Regime
    lawset : LawSet
    t : float
        Positive time.
    engine : AnalyticEngine, optional
    """
    t = float(t)
    if not t > 0.0:
        raise DomainError("t must be positive")
    eng = engine if engine is not None else AnalyticEngine(lawset)
    tag = regime.tag
    if tag == "A_Thm41":
        return eng.R_cum(t) * eng.q(t) + eng.Q_cum(t) * eng.r(t)
    if tag == "B_Thm42i":
        return eng.R_cum(t) * eng.q(t)
    if tag == "C_Thm42ii":
        return eng.r(t) * eng.Q_cum(t)
    theta = lawset.theta
    p = lawset.alpha / lawset.gamma
    if tag == "D1_Thm43i":
        return t * eng.r(t) * eng.q(t) * eval_beta(1.0 - p, 1.0 - theta)
    if tag == "D2_Thm43ii":
        K = regime.constants.get("K")
        if K is None:
            raise UnavailableConstantError("the D2 regime needs the constant K")
        return -math.expm1(-K * eval_beta(theta, 1.0 - theta))
    return 1.0


# -------------------------------------------------------------- limit laws
def D_hat(alpha, gamma, lam):
    """``1 - lam^alpha / (1 + lam^gamma)^(alpha/gamma)``."""
    return 1.0 - _one_minus_D_hat(alpha, gamma, lam)


def _one_minus_D_hat(alpha, gamma, lam):
    lam = np.asarray(lam, dtype=float)
    # lam^alpha (1 + lam^gamma)^(-alpha/gamma) = (1 + lam^-gamma)^(-alpha/gamma)
    with np.errstate(divide="ignore"):
        out = np.exp(-(alpha / gamma) * np.log1p(lam ** (-gamma)))
    return float(out) if out.ndim == 0 else out


def D_hat_gamma_d(gamma, d, lam):
    """``d / (1 + d) + 1 / ((1 + d) (1 + lam^gamma))``."""
    lam = np.asarray(lam, dtype=float)
    out = d / (1.0 + d) + 1.0 / ((1.0 + d) * (1.0 + lam**gamma))
    return float(out) if out.ndim == 0 else out


def _J(theta, p, gamma, lam):
    """``int_0^1 (1-u)^(-theta) (u lam^gamma + 1)^(-p) du``."""
    lg = float(lam) ** gamma

    def head(u):
        return (1.0 - u) ** (-theta) * (u * lg + 1.0) ** (-p)

    pts = [x for x in (1.0 / lg * k for k in (0.1, 1.0, 10.0, 100.0)) if 0.0 < x < 0.5] if lg > 0 else []
    a, _ = quad(head, 0.0, 0.5, points=pts or None, epsabs=0.0, epsrel=1e-12, limit=200)
    b, _ = quad(
        lambda u: (u * lg + 1.0) ** (-p),
        0.5,
        1.0,
        weight="alg",
        wvar=(0.0, -theta),
        epsabs=0.0,
        epsrel=1e-12,
    )
    return a + b


def D1_hat(theta, alpha, gamma, lam):
    """Limit transform for the subcritical-sum regime; the integral uses quadrature."""
    return 1.0 - _one_minus_D1(theta, alpha, gamma, lam)


def _one_minus_D1(theta, alpha, gamma, lam):
    lam = float(lam)
    if lam == 0.0:
        return 0.0
    p = alpha / gamma
    return lam**alpha * _J(theta, p, gamma, lam) / eval_beta(1.0 - theta, 1.0 - p)


def D2_hat(theta, alpha, gamma, K, lam):
    """Limit transform on the boundary ``theta + alpha / gamma = 1`` with ``t r q -> K``."""
    return 1.0 - _one_minus_D2(theta, alpha, gamma, K, lam)


def _one_minus_D2(theta, alpha, gamma, K, lam):
    lam = float(lam)
    if lam == 0.0:
        return 0.0
    p = alpha / gamma
    num = -math.expm1(-K * lam**alpha * _J(theta, p, gamma, lam))
    return num / -math.expm1(-K * eval_beta(theta, 1.0 - theta))


def D3_hat(alpha, lam):
    """``exp(-lam^alpha)``."""
    lam = np.asarray(lam, dtype=float)
    out = np.exp(-(lam**alpha))
    return float(out) if out.ndim == 0 else out


def _stationary_pgf(lawset: LawSet, eng: AnalyticEngine, Q: float):
    if lawset.offspring.L.is_constant and lawset.immigration.l.is_constant:
        kappa = lawset.alpha - lawset.gamma
        return lambda s: 1.0 - (1.0 - float(s)) ** kappa
    return lambda s: 1.0 - eng.Delta(s) / Q


def limit_law(regime: Regime, lawset: LawSet, engine: Optional[AnalyticEngine] = None) -> LimitLaw:
    """Limit law of the regime.

    For ``Mixture_51iii`` the returned Laplace law carries the p.g.f.
    description in ``companion``.

    Raises
    ------
    DomainError
        If the limit tag is ``Unresolved``.
    UnavailableConstantError
        If ``Q`` or ``R`` is needed but infinite.
    """
    tag = regime.limit_tag
    eng = engine if engine is not None else AnalyticEngine(lawset)
    alpha, gamma, theta = lawset.alpha, lawset.gamma, lawset.theta
    c = regime.constants
    if tag == "Unresolved":
        raise DomainError("no limit law is available for an unresolved regime")
    if tag == "Stationary_51i_52i_54ii":
        Q = c.get("Q")
        if Q is None or not math.isfinite(Q):
            raise UnavailableConstantError("the stationary limit needs a finite Q")
        return LimitLaw("PGF", "None", 0.0, 0.0, _stationary_pgf(lawset, eng, Q))
    if tag == "Scaled_51ii_52ii_54i":
        return LimitLaw(
            "LaplaceTransform",
            "W_mu_t",
            0.0,
            0.0,
            lambda lam: D_hat(alpha, gamma, lam),
            complement=lambda lam: _one_minus_D_hat(alpha, gamma, lam),
        )
    if tag == "Mixture_51iii":
        Q, R, d = c.get("Q"), c.get("R"), c.get("d")
        if Q is None or R is None or d is None or not (math.isfinite(Q) and math.isfinite(R)):
            raise UnavailableConstantError("the mixture limit needs finite Q, R and d")
        w0 = d * Q / (d * Q + R)
        phi = _stationary_pgf(lawset, eng, Q)
        pgf = LimitLaw("PGF", "None", 0.0, 1.0 - w0, lambda s: w0 * phi(s))
        return LimitLaw(
            "LaplaceTransform",
            "W_mu_t",
            w0,
            0.0,
            lambda lam: w0 + (1.0 - w0) * D_hat(alpha, gamma, lam),
            complement=lambda lam: (1.0 - w0) * _one_minus_D_hat(alpha, gamma, lam),
            companion=pgf,
        )
    if tag == "Scaled_53":
        d = c.get("d")
        if d is None:
            raise UnavailableConstantError("the doubly critical limit needs d")
        return LimitLaw(
            "LaplaceTransform",
            "W_mu_t",
            d / (1.0 + d),
            0.0,
            lambda lam: D_hat_gamma_d(gamma, d, lam),
            complement=lambda lam: 1.0 - D_hat_gamma_d(gamma, d, lam),
        )
    if tag == "D1_55i":
        return LimitLaw(
            "LaplaceTransform",
            "W_mu_t",
            0.0,
            0.0,
            lambda lam: D1_hat(theta, alpha, gamma, lam),
            complement=lambda lam: _one_minus_D1(theta, alpha, gamma, lam),
        )
    if tag == "D2_55ii":
        K = c.get("K")
        if K is None:
            raise UnavailableConstantError("the D2 limit needs K")
        return LimitLaw(
            "LaplaceTransform",
            "W_mu_t",
            0.0,
            0.0,
            lambda lam: D2_hat(theta, alpha, gamma, K, lam),
            complement=lambda lam: _one_minus_D2(theta, alpha, gamma, K, lam),
        )
    # Stable_55iii: unconditional law
    return LimitLaw(
        "LaplaceTransform",
        "PsiInv_R_t",
        0.0,
        0.0,
        lambda lam: D3_hat(alpha, lam),
        conditional=False,
        complement=lambda lam: float(-np.expm1(-(float(lam) ** alpha))),
    )
