"""The V / W / Psi transform chain.

``V(x) = int_1^x u**(gamma-1) / L(u) du`` linearizes the offspring
p.g.f. flow, ``W`` is its inverse and ``Psi(x) = x**alpha / l(x)`` encodes
the immigrant tail. Constant slowly varying functions use closed forms;
otherwise ``V`` is integrated in log space with Gauss-Legendre panels and
the inverses are found by bracketed root finding.
"""

from __future__ import annotations

import math
import threading

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, NumericalError
from .laws import LawSet

__all__ = ["TransformChain", "eval_V", "eval_W", "eval_Psi", "eval_Psi_inverse", "X_MAX"]

X_MAX = 1e300
_Z_MAX = math.log(X_MAX)

_GL20 = np.polynomial.legendre.leggauss(20)
_GL40 = np.polynomial.legendre.leggauss(40)


def _gl(fun, a, b, rule):
    nodes, weights = rule
    half = 0.5 * (b - a)
    return half * float(np.dot(weights, fun(0.5 * (a + b) + half * nodes)))


def _adaptive_gl(fun, a, b, tol, depth=0):
    """Adaptive Gauss-Legendre on ``[a, b]`` comparing 20- and 40-node rules."""
    coarse = _gl(fun, a, b, _GL20)
    fine = _gl(fun, a, b, _GL40)
    if abs(fine - coarse) <= tol * abs(fine) or depth >= 40:
        return fine
    mid = 0.5 * (a + b)
    return _adaptive_gl(fun, a, mid, tol, depth + 1) + _adaptive_gl(fun, mid, b, tol, depth + 1)


class TransformChain:
    """Evaluators for ``V``, ``W``, ``Psi`` and ``Psi^{-1}``.

    Parameters
    ----------
    lawset : LawSet
    v_quad_tol : float, default 1e-13
        Relative tolerance of the panel quadrature for ``V``.
    inv_tol : float, default 1e-12
        Relative tolerance of the root finders for ``W`` and ``Psi^{-1}``.

    Notes
    -----
    Caches are guarded by a lock, so a chain may be shared between threads.
    """

    def __init__(self, lawset: LawSet, v_quad_tol: float = 1e-13, inv_tol: float = 1e-12):
        if not (v_quad_tol > 0 and inv_tol > 0):
            raise DomainError("tolerances must be positive")
        self.lawset = lawset
        self.v_quad_tol = float(v_quad_tol)
        self.inv_tol = float(inv_tol)
        self._gamma = lawset.offspring.gamma
        self._alpha = lawset.immigration.alpha
        self._L = lawset.offspring.L
        self._l = lawset.immigration.l
        self._lock = threading.Lock()
        self._knots = [0.0]  # V(e^j) for j = 0, 1, ...
        self.bracket_cache: dict = {}

    # ------------------------------------------------------------------ V
    @property
    def v_is_closed_form(self) -> bool:
        return self._L.is_constant

    def _v_integrand(self, z):
        return np.exp(self._gamma * z - self._L.log_value_at_log(z))

    def _knot(self, j: int) -> float:
        with self._lock:
            while len(self._knots) <= j:
                i = len(self._knots) - 1
                panel = _adaptive_gl(self._v_integrand, float(i), float(i + 1), self.v_quad_tol)
                self._knots.append(self._knots[-1] + panel)
            return self._knots[j]

    def _V_log(self, z: float) -> float:
        """``V(e^z)`` for ``z >= 0``."""
        if self._L.is_constant:
            return math.expm1(self._gamma * z) / (self._L.c * self._gamma)
        j = int(math.floor(z))
        base = self._knot(j)
        if z == j:
            return base
        return base + _adaptive_gl(self._v_integrand, float(j), z, self.v_quad_tol)

    def V(self, x):
        """``V(x)`` for ``x >= 1``."""
        if np.ndim(x) != 0:
            return np.array([self.V(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))
        x = float(x)
        if not x >= 1.0:
            raise DomainError(f"V requires x >= 1, got {x!r}")
        if x > X_MAX:
            raise DomainError(f"V argument {x:.3g} exceeds the supported range {X_MAX:.0e}")
        return self._V_log(math.log(x))

    # ------------------------------------------------------------------ W
    def _log_W(self, y: float) -> float:
        if y == 0.0:
            return 0.0
        gamma = self._gamma
        if self._L.is_constant:
            return math.log1p(self._L.c * gamma * y) / gamma
        key = round(math.log(y) * 8.0)
        with self._lock:
            cached = self.bracket_cache.get(("W", key))

        def fn(z):
            return self._V_log(z) - y

        lo = hi = None
        if cached is not None:
            a, b = cached
            if fn(a) <= 0.0 <= fn(b):
                lo, hi = a, b
        if lo is None:
            # regular-variation guess: V(x) ~ x^gamma / (gamma L(x))
            z0 = math.log1p(gamma * y * self._L.c) / gamma
            for _ in range(4):
                z0 = math.log1p(gamma * y * float(self._L.value(math.exp(min(z0, _Z_MAX))))) / gamma
            z0 = min(max(z0, 0.0), _Z_MAX)
            step = 0.25
            lo, hi = max(z0 - step, 0.0), min(z0 + step, _Z_MAX)
            while fn(lo) > 0.0:
                if lo == 0.0:
                    break
                step *= 2.0
                lo = max(z0 - step, 0.0)
            while fn(hi) < 0.0:
                if hi >= _Z_MAX:
                    raise DomainError(f"W({y:.3g}) exceeds the supported range {X_MAX:.0e}")
                step *= 2.0
                hi = min(z0 + step, _Z_MAX)
        z = brentq(fn, lo, hi, xtol=self.inv_tol * 1e-2, rtol=8.9e-16, maxiter=200)
        pad = max(1e-9, 1e-9 * z)
        with self._lock:
            self.bracket_cache[("W", key)] = (max(z - pad, 0.0), min(z + pad, _Z_MAX))
        return z

    def W(self, y):
        """Inverse of ``V``: the ``x >= 1`` with ``V(x) = y``."""
        if np.ndim(y) != 0:
            return np.array([self.W(float(v)) for v in np.ravel(y)]).reshape(np.shape(y))
        y = float(y)
        if not y >= 0.0:
            raise DomainError(f"W requires y >= 0, got {y!r}")
        z = self._log_W(y)
        if z > _Z_MAX:
            raise DomainError(f"W({y:.3g}) exceeds the supported range {X_MAX:.0e}")
        return math.exp(z)

    # ---------------------------------------------------------------- Psi
    def Psi(self, x):
        """``Psi(x) = x**alpha / l(x)`` for ``x >= 1``."""
        arr = np.asarray(x, dtype=float)
        if np.any(~(arr >= 1.0)):
            raise DomainError("Psi requires x >= 1")
        out = arr**self._alpha / self._l.value(arr)
        return float(out) if np.ndim(x) == 0 else out

    def Psi_inverse(self, y):
        """Inverse of ``Psi`` on ``[Psi(1), inf)``."""
        if np.ndim(y) != 0:
            return np.array([self.Psi_inverse(float(v)) for v in np.ravel(y)]).reshape(np.shape(y))
        y = float(y)
        y_min = self.Psi(1.0)
        if not y >= y_min * (1.0 - 1e-15):
            raise DomainError(f"Psi_inverse requires y >= Psi(1) = {y_min:.6g}, got {y!r}")
        alpha = self._alpha
        if self._l.is_constant:
            return max((self._l.c * y) ** (1.0 / alpha), 1.0)
        target = math.log(y)

        def fn(z):
            return alpha * z - float(self._l.log_value_at_log(z)) - target

        if fn(0.0) >= 0.0:
            return 1.0
        hi = max(target / alpha, 1.0)
        while fn(hi) < 0.0:
            hi *= 2.0
            if hi > _Z_MAX:
                raise DomainError(f"Psi_inverse({y:.3g}) exceeds the supported range")
        try:
            z = brentq(fn, 0.0, hi, xtol=self.inv_tol * 1e-2, rtol=8.9e-16, maxiter=200)
        except (RuntimeError, ValueError) as exc:  # pragma: no cover - brentq is robust here
            raise NumericalError(str(exc)) from exc
        return math.exp(z)


def eval_V(chain: TransformChain, x):
    """Module-level alias of :meth:`TransformChain.V`."""
    return chain.V(x)


def eval_W(chain: TransformChain, y):
    """Module-level alias of :meth:`TransformChain.W`."""
    return chain.W(y)


def eval_Psi(chain: TransformChain, x):
    """Module-level alias of :meth:`TransformChain.Psi`."""
    return chain.Psi(x)


def eval_Psi_inverse(chain: TransformChain, y):
    """Module-level alias of :meth:`TransformChain.Psi_inverse`."""
    return chain.Psi_inverse(y)
