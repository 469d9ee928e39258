"""Numerical evaluation of the process's transforms.

All functions of the state variable ``s`` have an internal twin taking
``w = 1 - s`` so that arguments such as ``s = exp(-lambda / n)`` with huge
``n`` keep full relative precision.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import DegenerateError, DomainError, NumericalError, SingularityError
from .laws import LawSet, eval_r
from .transforms import TransformChain, _adaptive_gl

__all__ = [
    "AnalyticEngine",
    "NORMALIZATIONS",
    "F",
    "F_ode",
    "q",
    "Delta",
    "Q_total",
    "R_cum",
    "Q_cum",
    "I_int",
    "Phi",
    "P_survival",
    "cond_pgf",
    "cond_laplace",
]

NORMALIZATIONS = ("None", "W_mu_t", "PsiInv_R_t")


def _check_s(s):
    s = float(s)
    if not (0.0 <= s <= 1.0):
        raise DomainError(f"s must lie in [0, 1], got {s!r}")
    return s


def _check_t(t):
    t = float(t)
    if not (t >= 0.0 and math.isfinite(t)):
        raise DomainError(f"t must be finite and non-negative, got {t!r}")
    return t


class AnalyticEngine:
    """Exact (numerical) evaluation of ``F``, ``q``, ``Delta``, ``I``, ``Phi``.

    Parameters
    ----------
    lawset : LawSet
    chain : TransformChain, optional
        Built from ``lawset`` when omitted.
    quad_tol : float, default 1e-12
        Relative tolerance of the panel quadratures.
    ode_tol : float, default 1e-12
        Relative tolerance of the backward-equation integrator used by
        :meth:`F_ode`.

    Examples
    --------
    >>> from critbranch import LawSet
    >>> eng = AnalyticEngine(LawSet.constant(gamma=1.0, alpha=1.0, theta=2.0))
    >>> round(eng.F(2.0, 0.0), 12)
    0.5
    """

    def __init__(
        self,
        lawset: LawSet,
        chain: Optional[TransformChain] = None,
        quad_tol: float = 1e-12,
        ode_tol: float = 1e-12,
    ):
        self.lawset = lawset
        self.chain = chain if chain is not None else TransformChain(lawset)
        self.quad_tol = float(quad_tol)
        self.ode_tol = float(ode_tol)
        off, imm = lawset.offspring, lawset.immigration
        self._gamma = off.gamma
        self._alpha = imm.alpha
        self._mu = lawset.mu
        self._L = off.L
        self._l = imm.l
        self._R = lawset.intensity.L_R
        self._const_L = off.L.is_constant
        self._const_l = imm.l.is_constant

    # ------------------------------------------------------------ F and q
    def one_minus_F_w(self, t, w):
        """``1 - F(t; 1 - w)``, vectorized over ``t`` for constant ``L``."""
        gamma = self._gamma
        if self._const_L:
            t = np.asarray(t, dtype=float)
            w = np.asarray(w, dtype=float)
            a = self._L.c * gamma * self._mu * t
            with np.errstate(divide="ignore"):
                # (w^-gamma + a)^(-1/gamma) written to stay finite for tiny w
                out = w * np.exp(-np.log1p(a * w**gamma) / gamma)
            out = np.where(w > 0.0, out, 0.0)
            return float(out) if out.ndim == 0 else out
        if np.ndim(t) != 0 or np.ndim(w) != 0:
            tt, ww = np.broadcast_arrays(np.asarray(t, float), np.asarray(w, float))
            return np.array([self.one_minus_F_w(a, b) for a, b in zip(tt.ravel(), ww.ravel())]).reshape(
                tt.shape
            )
        w = float(w)
        if w <= 0.0:
            return 0.0
        if t == 0.0:
            return w
        y = self._mu * float(t) + self.chain.V(1.0 / w)
        return math.exp(-self.chain._log_W(y))

    def F(self, t, s):
        """``F(t; s) = 1 - 1 / W(mu t + V(1 / (1 - s)))``."""
        t = _check_t(t)
        s = _check_s(s)
        if s == 1.0:
            return 1.0
        return 1.0 - self.one_minus_F_w(t, 1.0 - s)

    def F_ode(self, t, s):
        """``F(t; s)`` by integrating the backward equation ``dF/dt = mu (f(F) - F)``.

        The state is ``log(1 - F)``, whose derivative ``-mu (1-F)^gamma L(1/(1-F))``
        is smooth, so the integrator never sees the transform chain.

        Raises
        ------
        NumericalError
            If the integrator fails.
        """
        t = _check_t(t)
        s = _check_s(s)
        if s == 1.0 or t == 0.0:
            return s
        gamma, mu, L = self._gamma, self._mu, self._L

        def rhs(_, y):
            w = math.exp(y[0])
            return [-mu * w**gamma * float(L.value(1.0 / w))]

        sol = solve_ivp(
            rhs,
            (0.0, t),
            [math.log1p(-s)],
            method="DOP853",
            rtol=self.ode_tol,
            atol=self.ode_tol,
        )
        if not sol.success:
            raise NumericalError(f"backward equation integration failed: {sol.message}")
        return -math.expm1(sol.y[0, -1])

    def q_w(self, t, w):
        """``q(t; 1 - w) = 1 - g(F(t; 1 - w))``, vectorized over ``t``."""
        x = self.one_minus_F_w(t, w)
        if self._const_l:
            return self._l.c * np.asarray(x) ** self._alpha if np.ndim(x) else self._l.c * x**self._alpha
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(x > 0.0, x**self._alpha * self._l.value(1.0 / np.where(x > 0, x, 1.0)), 0.0)
        return float(val) if val.ndim == 0 else val

    def q(self, t, s=0.0):
        """``q(t; s) = 1 / Psi(W(mu t + V(1 / (1 - s))))``; zero at ``s = 1``."""
        t = _check_t(t)
        s = _check_s(s)
        return float(self.q_w(t, 1.0 - s))

    def r(self, t):
        """Immigration intensity ``r(t)``."""
        return eval_r(self.lawset.intensity, t)

    # -------------------------------------------------------- Delta and Q
    def _ratio_log(self, z):
        """``log (l / L)(e^z)``."""
        return self._l.log_value_at_log(z) - self._L.log_value_at_log(z)

    def Q_is_finite(self) -> bool:
        """Whether ``Q = int_0^1 (1 - g) / (mu (f - u)) du`` converges."""
        a, g = self._alpha, self._gamma
        if a > g:
            return True
        if a < g:
            return False
        # alpha == gamma: integrand ~ (l/L)(1/w) / w, finite iff the log power is < -1
        return (self._l.beta - self._L.beta) < -1.0

    def Delta(self, s, method: str = "quad"):
        """``Delta(s) = int_s^1 (1 - g(u)) / (mu (f(u) - u)) du``.

        Parameters
        ----------
        s : float in [0, 1]
        method : {"quad", "closed"}
            ``"closed"`` is only available for constant ``L`` and ``l``.

        Returns
        -------
        float
            ``math.inf`` when the integral diverges.
        """
        s = _check_s(s)
        if s == 1.0:
            return 0.0
        if not self.Q_is_finite():
            return math.inf
        kappa = self._alpha - self._gamma
        if method == "closed":
            if not (self._const_L and self._const_l):
                raise DomainError("closed-form Delta needs constant L and l")
            return self._l.c / (self._L.c * self._mu) * (1.0 - s) ** kappa / kappa
        if method != "quad":
            raise DomainError(f"unknown method {method!r}")
        z0 = -math.log1p(-s)

        def integrand(z):
            return math.exp(-kappa * z + float(self._ratio_log(z)))

        # substitution w = e^{-z} turns the endpoint singularity into exponential decay
        val, err = quad(integrand, z0, math.inf, epsabs=0.0, epsrel=self.quad_tol, limit=500)
        if not math.isfinite(val) or err > 1e3 * self.quad_tol * abs(val):
            raise NumericalError("Delta quadrature did not converge")
        return val / self._mu

    def Q_total(self, method: str = "quad") -> float:
        """``Q = Delta(0)``; ``math.inf`` when divergent."""
        return self.Delta(0.0, method=method)

    # ---------------------------------------------------------- R and Q(t)
    def R_total(self) -> float:
        """``R = int_0^inf r(u) du`` (``math.inf`` when divergent)."""
        law = self.lawset.intensity
        theta = law.theta
        if theta < 1.0 or (theta == 1.0 and (law.L_R.is_constant or law.L_R.beta >= -1.0)):
            return math.inf
        if law.tau0 == 0.0:
            return math.inf
        if law.L_R.is_constant:
            if theta == 1.0:  # pragma: no cover - handled above
                return math.inf
            return law.L_R.c * law.tau0 ** (1.0 - theta) / (theta - 1.0)
        val, _ = quad(lambda u: eval_r(law, u), 0.0, math.inf, epsabs=0.0, epsrel=1e-10, limit=500)
        return val

    def R_cum(self, t):
        """``R(t) = int_0^t r(u) du``."""
        t = _check_t(t)
        if t == 0.0:
            return 0.0
        law = self.lawset.intensity
        theta, tau0 = law.theta, law.tau0
        if law.L_R.is_constant:
            c = law.L_R.c
            if tau0 == 0.0:
                if theta >= 1.0:
                    return math.inf
                return c * t ** (1.0 - theta) / (1.0 - theta)
            lr = math.log1p(t / tau0)
            if theta == 1.0:
                return c * lr
            return c * tau0 ** (1.0 - theta) * math.expm1((1.0 - theta) * lr) / (1.0 - theta)
        return self._panel_integral(lambda u: eval_r(law, u), _geometric_breaks(t, max(tau0, 1e-3)))

    def Q_cum(self, t):
        """``Q(t) = int_0^t q(u; 0) du``."""
        t = _check_t(t)
        if t == 0.0:
            return 0.0
        if self._const_L and self._const_l:
            k = self._L.c * self._gamma * self._mu
            p = self._alpha / self._gamma
            lk = math.log1p(k * t)
            if p == 1.0:
                return self._l.c * lk / k
            return self._l.c * math.expm1((1.0 - p) * lk) / (k * (1.0 - p))
        return self._panel_integral(lambda u: self.q_w(u, 1.0), _geometric_breaks(t, 1.0))

    # ---------------------------------------------------------------- I, Phi
    def _panel_integral(self, fun, breaks):
        total = 0.0
        for a, b in zip(breaks[:-1], breaks[1:]):
            if b > a:
                total += _adaptive_gl(fun, a, b, self.quad_tol)
        return total

    def I_w(self, t, w):
        """``I(t; 1 - w) = int_0^t r(t - u) q(u; 1 - w) du``."""
        t = float(t)
        if t == 0.0 or w <= 0.0:
            return 0.0
        law = self.lawset.intensity
        # q is flat until mu u ~ V(1/w) and r varies on the scale tau0 near u = t
        if self._const_L:
            v0 = math.expm1(-self._gamma * math.log(w)) / (self._L.c * self._gamma)
        else:
            v0 = self.chain.V(1.0 / w)
        u_q = max(v0 / self._mu, 1e-3)
        if law.tau0 == 0.0 and law.theta >= 1.0:
            raise SingularityError("I(t; s) diverges when tau0 = 0 and theta >= 1")
        scale_r = max(law.tau0, 1e-3) if law.tau0 > 0.0 else t * 2.0**-50
        breaks = set(_geometric_breaks(t, min(1.0, u_q)))
        breaks.update(t - b for b in _geometric_breaks(t, scale_r))
        breaks.update(b for b in u_q * 2.0 ** np.arange(-4, 60) if b < t)
        breaks = np.array(sorted(b for b in breaks if 0.0 <= b <= t))
        breaks[0], breaks[-1] = 0.0, t

        def integrand(u):
            return eval_r(law, np.maximum(t - u, 0.0)) * self.q_w(u, w)

        return self._panel_integral(integrand, breaks)

    def I_int(self, t, s=0.0):
        """``I(t; s) = int_0^t r(t - u) q(u; s) du``."""
        t = _check_t(t)
        s = _check_s(s)
        return self.I_w(t, 1.0 - s)

    def Phi(self, t, s):
        """Unconditional p.g.f. ``E s^{Y(t)} = exp(-I(t; s))`` started from ``Y(0) = 0``."""
        return math.exp(-self.I_int(t, s))

    def P_survival(self, t):
        """``P{Y(t) > 0} = 1 - exp(-I(t; 0))``."""
        return -math.expm1(-self.I_int(t, 0.0))

    def _cond_w(self, t, w):
        denom = -math.expm1(-self.I_w(t, 1.0))
        if denom < 1e-300:
            raise DegenerateError(f"P{{Y(t) > 0}} = {denom:.3g} is too small to condition on")
        return 1.0 - (-math.expm1(-self.I_w(t, w))) / denom

    def cond_pgf(self, t, s):
        """``E[s^{Y(t)} | Y(t) > 0] = 1 - (1 - Phi(t; s)) / (1 - Phi(t; 0))``."""
        t = _check_t(t)
        s = _check_s(s)
        if t == 0.0:
            raise DegenerateError("Y(0) = 0, conditioning on survival is undefined")
        return self._cond_w(t, 1.0 - s)

    # --------------------------------------------------------- normalization
    def norm_value(self, rule: str, t) -> float:
        """Normalizing constant ``n(t)`` for a limit law.

        Parameters
        ----------
        rule : {"W_mu_t", "PsiInv_R_t", "None"}
        t : float
        """
        t = _check_t(t)
        if rule == "W_mu_t":
            return self.chain.W(self._mu * t)
        if rule == "PsiInv_R_t":
            return self.chain.Psi_inverse(self.R_cum(t))
        if rule == "None":
            return 1.0
        raise DomainError(f"unknown normalization {rule!r}")

    def cond_laplace(self, t, lam, norm: str = "W_mu_t"):
        """``E[exp(-lam Y(t) / n(t)) | Y(t) > 0]``."""
        lam = float(lam)
        if not lam > 0.0:
            raise DomainError("lambda must be positive")
        n = self.norm_value(norm, t)
        return self._cond_w(_check_t(t), -math.expm1(-lam / n))

    def uncond_laplace(self, t, lam, norm: str = "PsiInv_R_t"):
        """``E exp(-lam Y(t) / n(t))`` without conditioning."""
        lam = float(lam)
        if not lam > 0.0:
            raise DomainError("lambda must be positive")
        n = self.norm_value(norm, t)
        return math.exp(-self.I_w(_check_t(t), -math.expm1(-lam / n)))


def _geometric_breaks(t, h):
    """Breakpoints ``0, h, 2h, 4h, ... , t``."""
    t = float(t)
    out = [0.0]
    b = float(h)
    while b < t:
        out.append(b)
        b *= 2.0
    out.append(t)
    return out


# Module-level aliases mirroring the operation names.
def F(engine: AnalyticEngine, t, s):
    return engine.F(t, s)


def F_ode(engine: AnalyticEngine, t, s):
    return engine.F_ode(t, s)


def q(engine: AnalyticEngine, t, s=0.0):
    return engine.q(t, s)


def Delta(engine: AnalyticEngine, s):
    return engine.Delta(s)


def Q_total(engine: AnalyticEngine):
    return engine.Q_total()


def R_cum(engine: AnalyticEngine, t):
    return engine.R_cum(t)


def Q_cum(engine: AnalyticEngine, t):
    return engine.Q_cum(t)


def I_int(engine: AnalyticEngine, t, s=0.0):
    return engine.I_int(t, s)


def Phi(engine: AnalyticEngine, t, s):
    return engine.Phi(t, s)


def P_survival(engine: AnalyticEngine, t):
    return engine.P_survival(t)


def cond_pgf(engine: AnalyticEngine, t, s):
    return engine.cond_pgf(t, s)


def cond_laplace(engine: AnalyticEngine, t, lam, norm: str = "W_mu_t"):
    return engine.cond_laplace(t, lam, norm)
