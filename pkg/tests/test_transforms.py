import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critbranch import LawSet, SlowlyVaryingSpec, TransformChain
from critbranch.laws import ImmigrationLaw, IntensityLaw, OffspringLaw
from critbranch.transforms import eval_Psi, eval_Psi_inverse, eval_V, eval_W


def chain(gamma=0.5, alpha=0.5, L_c=None):
    return TransformChain(LawSet.constant(gamma=gamma, alpha=alpha, theta=1.0, L_c=L_c))


def logpower_chain(gamma=0.6, alpha=0.7, beta_L=1.5, beta_l=-0.5):
    return TransformChain(
        LawSet(
            OffspringLaw(gamma, SlowlyVaryingSpec("LogPower", 0.5, beta_L)),
            ImmigrationLaw(alpha, SlowlyVaryingSpec("LogPower", 0.8, beta_l)),
            IntensityLaw(1.0),
        )
    )


def test_V_examples():
    assert eval_V(chain(), 1.0) == 0.0
    assert eval_V(chain(0.5, L_c=1 / 1.5), 4.0) == pytest.approx(3.0, rel=1e-14)
    assert eval_V(chain(1.0, L_c=0.5), 3.0) == pytest.approx(4.0, rel=1e-14)


def test_W_examples():
    assert eval_W(chain(), 0.0) == 1.0
    assert eval_W(chain(0.5, L_c=1 / 1.5), 3.0) == pytest.approx(4.0, rel=1e-13)
    assert eval_W(chain(1.0, L_c=0.5), 4.0) == pytest.approx(3.0, rel=1e-13)


def test_Psi_examples():
    assert eval_Psi(chain(alpha=0.5), 4.0) == pytest.approx(2.0)
    assert eval_Psi(chain(alpha=0.3), 1.0) == pytest.approx(1.0)
    assert eval_Psi(chain(alpha=1.0), 7.0) == pytest.approx(7.0)
    assert eval_Psi_inverse(chain(alpha=0.5), 2.0) == pytest.approx(4.0, rel=1e-12)
    assert eval_Psi_inverse(chain(alpha=0.3), 1.0) == pytest.approx(1.0)
    assert eval_Psi_inverse(chain(alpha=0.25), 3.0) == pytest.approx(81.0, rel=1e-12)


def test_logpower_V_matches_quadrature():
    from scipy.integrate import quad

    ch = logpower_chain()
    L = ch.lawset.offspring.L
    ref, _ = quad(lambda u: u ** (0.6 - 1) / L.value(u), 1.0, 50.0, epsrel=1e-13)
    assert eval_V(ch, 50.0) == pytest.approx(ref, rel=1e-11)


def test_regular_variation():
    ch = chain(0.6, 0.7)
    g, a = ch.lawset.gamma, ch.lawset.alpha
    x = 1e8
    assert eval_V(ch, 2 * x) / eval_V(ch, x) == pytest.approx(2**g, rel=0.01)
    assert eval_W(ch, 2 * x) / eval_W(ch, x) == pytest.approx(2 ** (1 / g), rel=0.01)
    assert eval_Psi(ch, 2 * x) / eval_Psi(ch, x) == pytest.approx(2**a, rel=0.01)


def test_regular_variation_logpower_converges():
    ch = logpower_chain()
    g, a = ch.lawset.gamma, ch.lawset.alpha
    xs = (1e8, 1e32, 1e128)
    for fn, index in ((eval_V, g), (eval_W, 1 / g), (eval_Psi, a)):
        gaps = [abs(fn(ch, 2 * x) / fn(ch, x) / 2**index - 1.0) for x in xs]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 0.02


@pytest.mark.parametrize("make", [chain, logpower_chain])
def test_round_trip_grid(make):
    ch = make()
    x = np.geomspace(1.0, 1e10, 200)
    t0 = time.perf_counter()
    err = max(abs(eval_W(ch, eval_V(ch, xi)) / xi - 1.0) for xi in x)
    assert err <= 1e-10
    assert time.perf_counter() - t0 < 1.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 1.0), st.floats(0.1, 1.0), st.floats(0.0, 25.0))
def test_psi_inverse_round_trip(gamma, alpha, logy):
    ch = chain(gamma, alpha)
    y = math.exp(logy)
    assert eval_Psi(ch, eval_Psi_inverse(ch, y)) == pytest.approx(y, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 30.0), st.floats(0.0, 5.0))
def test_V_increasing_logpower(z, dz):
    ch = logpower_chain()
    assert eval_V(ch, math.exp(z)) <= eval_V(ch, math.exp(z + dz)) + 1e-12
