import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from critbranch import AnalyticEngine, LawSet
from critbranch.errors import DomainError, SingularityError


def engine(**kw):
    return AnalyticEngine(LawSet.constant(**kw))


@pytest.fixture
def binary_engine():
    return engine(gamma=1.0, alpha=1.0, theta=2.0, L_c=0.5)


def test_F_examples(binary_engine):
    e = engine(gamma=0.5, alpha=0.5, theta=1.0, L_c=1 / 1.5)
    assert binary_engine.F(0.0, 0.3) == pytest.approx(0.3)
    assert binary_engine.F(2.0, 0.0) == pytest.approx(0.5, abs=1e-14)
    assert e.F(3.0, 0.0) == pytest.approx(0.75, abs=1e-14)


def test_F_ode_examples(binary_engine):
    assert binary_engine.F_ode(0.0, 0.9) == 0.9
    assert binary_engine.F_ode(2.0, 0.0) == pytest.approx(0.5, abs=1e-10)


@pytest.mark.parametrize("gamma", [0.4, 0.7, 1.0])
def test_F_matches_ode_and_semigroup(gamma):
    e = engine(gamma=gamma, alpha=0.5, theta=1.0)
    for t in (0.1, 1.0, 5.0, 20.0, 100.0):
        for s in (0.0, 0.25, 0.5, 0.75, 0.9):
            assert abs(e.F(t, s) - e.F_ode(t, s)) <= 1e-6
    for t, u, s in [(1.0, 2.0, 0.3), (10.0, 0.5, 0.0), (50.0, 50.0, 0.9)]:
        assert abs(e.F(t + u, s) - e.F(t, e.F(u, s))) <= 1e-8


def test_q_examples(binary_engine):
    e = engine(gamma=1.0, alpha=0.5, theta=2.0, L_c=0.5)
    assert e.q(2.0, 0.0) == pytest.approx(math.sqrt(0.5), rel=1e-13)
    assert e.q(0.0, 0.4) == pytest.approx((1 - 0.4) ** 0.5)
    assert binary_engine.q(3.0, 0.0) == pytest.approx(1 - binary_engine.F(3.0, 0.0))


def test_Q_closed_form():
    e = engine(gamma=0.5, alpha=0.9, theta=1.5, L_c=1 / 1.5)
    assert e.Delta(1.0) == 0.0
    assert e.Q_total() == pytest.approx(3.75, rel=1e-8)
    for s in (0.1, 0.5, 0.9):
        assert e.Delta(s) / e.Q_total() == pytest.approx((1 - s) ** 0.4, rel=1e-8)
        assert e.Delta(s, method="closed") == pytest.approx(e.Delta(s), rel=1e-8)


def test_Q_infinite_flag():
    e = engine(gamma=0.5, alpha=0.5, theta=1.0, L_c=1 / 1.5)
    assert not e.Q_is_finite()
    assert e.Q_total() == math.inf


def test_R_cum_examples():
    assert engine(gamma=0.5, alpha=0.5, theta=2.0).R_cum(0.0) == 0.0
    assert engine(gamma=0.5, alpha=0.5, theta=2.0).R_total() == pytest.approx(1.0)
    assert engine(gamma=0.5, alpha=0.5, theta=0.5).R_cum(3.0) == pytest.approx(2.0)


def test_Q_cum_matches_quadrature():
    e = engine(gamma=0.5, alpha=0.8, theta=2.0)
    ref, _ = quad(lambda u: e.q(u, 0.0), 0.0, 10.0, epsabs=1e-13)
    assert e.Q_cum(10.0) == pytest.approx(ref, rel=1e-9)


def test_I_int_example(binary_engine):
    nodes, weights = np.polynomial.legendre.leggauss(60)
    u = 0.5 * (nodes + 1.0)
    ref = 0.5 * float(np.sum(weights * (2 - u) ** -2.0 * 2 / (2 + u)))
    assert binary_engine.I_int(1.0, 0.0) == pytest.approx(ref, rel=1e-8)
    assert binary_engine.I_int(0.0, 0.2) == 0.0
    assert binary_engine.I_int(2.0, 1.0) == 0.0
    assert binary_engine.P_survival(1.0) == pytest.approx(-math.expm1(-ref), rel=1e-8)


def test_Phi_and_survival_trivial(binary_engine):
    assert binary_engine.Phi(0.0, 0.4) == 1.0
    assert binary_engine.P_survival(0.0) == 0.0
    assert binary_engine.Phi(3.0, 1.0) == 1.0


def test_cond_pgf_endpoints(half):
    e = AnalyticEngine(half)
    assert e.cond_pgf(5.0, 1.0) == pytest.approx(1.0)
    assert e.cond_pgf(5.0, 0.0) == pytest.approx(0.0, abs=1e-14)


def test_cond_laplace_small_lambda(half):
    e = AnalyticEngine(half)
    assert e.cond_laplace(50.0, 1e-12) == pytest.approx(1.0, abs=1e-9)


def test_singular_intensity_rejected():
    e = AnalyticEngine(LawSet.constant(gamma=0.5, alpha=0.5, theta=1.5, tau0=0.0))
    with pytest.raises(SingularityError):
        e.I_int(1.0, 0.0)


def test_domain_checks(half):
    e = AnalyticEngine(half)
    with pytest.raises(DomainError):
        e.F(-1.0, 0.5)
    with pytest.raises(DomainError):
        e.F(1.0, 1.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 1.0), st.floats(0.0, 50.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_F_monotone_in_s_and_t(gamma, t, s1, s2):
    e = engine(gamma=gamma, alpha=0.5, theta=1.0)
    lo, hi = sorted((s1, s2))
    assert e.F(t, lo) <= e.F(t, hi) + 1e-14
    assert e.F(t, lo) <= e.F(t + 1.0, lo) + 1e-14


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 20.0), st.floats(0.0, 0.99))
def test_Phi_in_unit_interval(t, s):
    e = engine(gamma=0.6, alpha=0.7, theta=1.2)
    phi = e.Phi(t, s)
    assert 0.0 < phi <= 1.0
    assert phi <= e.Phi(t, min(1.0, s + 0.01)) + 1e-14
