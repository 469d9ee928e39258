import math

import pytest

from critbranch import AnalyticEngine, LawSet
from critbranch.errors import ConfigError, DomainError, InsufficientSurvivorsError
from critbranch.simulate import SimOutcome, run_replicates
from critbranch.verify import (
    ComparisonReport,
    Estimate,
    TolerancePolicy,
    check_q_ratio,
    check_limit_laplace,
    check_q_scaling,
    check_stationary_pgf,
    check_survival_exact,
    check_Z_pgf,
    compare,
    empirical_cond_laplace,
    empirical_cond_pgf,
    empirical_uncond_laplace,
    estimate_survival,
    laplace_cap,
    run_suite,
    trend_improves,
)


def outcomes(pops, saturated=()):
    return [SimOutcome(int(p), p > 0, 1, 1, i in saturated, False) for i, p in enumerate(pops)]


def test_estimate_survival_trivial_and_exact(binary):
    est = estimate_survival(binary, 0.0, 1000, 1)
    assert (est.mean, est.stderr) == (0.0, 0.0)
    est = estimate_survival(binary, 1.0, 20_000, 3, workers=1)
    p = AnalyticEngine(binary).P_survival(1.0)
    assert abs(est.mean - p) <= 3 * est.stderr


def test_estimate_survival_heavy_regime_near_one():
    d3 = LawSet.constant(gamma=0.75, alpha=0.3, theta=0.5)
    est = estimate_survival(d3, 1e3, 10_000, 5, engine="batch", workers=1, max_population=10**6)
    assert est.mean >= 0.9


def test_empirical_laplace_degenerate():
    obs = outcomes([5] * 150)
    ests = empirical_cond_laplace(obs, [0.0, 1.0], 5.0)
    assert ests[0].mean == 1.0 and ests[0].stderr == 0.0
    assert ests[1].mean == pytest.approx(math.exp(-1))


def test_empirical_uncond_laplace_all_zero():
    ests = empirical_uncond_laplace(outcomes([0] * 120), [0.5, 1.0, 3.0], 2.0)
    assert all(e.mean == 1.0 for e in ests)


def test_insufficient_survivors():
    with pytest.raises(InsufficientSurvivorsError):
        empirical_cond_laplace(outcomes([0] * 200 + [3] * 10), [1.0], 1.0)
    with pytest.raises(InsufficientSurvivorsError):
        empirical_cond_pgf(outcomes([0] * 200), [0.5])


def test_saturated_runs_enter_only_when_certified():
    pops = [10] * 150 + [1000]
    obs = outcomes(pops, saturated={150})
    small, large = empirical_cond_laplace(obs, [1e-6, 1.0], 1.0)
    assert small.n == 150 and small.n_truncated == 1
    assert large.n == 151
    assert laplace_cap(10.0, [0.5, 1.0]) > -math.log(1e-12) * 10 / 0.5


def test_cond_pgf_endpoints():
    obs = outcomes([1, 2, 3] * 50 + [0] * 10)
    zero, one = empirical_cond_pgf(obs, [0.0, 1.0])
    assert zero.mean == 0.0 and one.mean == 1.0
    with pytest.raises(DomainError):
        empirical_cond_pgf(obs, [1.5])


def test_accepts_replicate_batch(half):
    b = run_replicates(half, 2.0, 400, 1, workers=1)
    a = empirical_uncond_laplace(b, [1.0], 1.0)[0]
    c = empirical_uncond_laplace(b.outcomes(), [1.0], 1.0)[0]
    assert a == c


def test_compare_policies():
    est = Estimate(0.51, 0.01, 100, 50)
    assert compare("x", est, 0.5).passed
    assert not compare("x", est, 0.6).passed
    assert compare("x", est, 0.6, TolerancePolicy("AbsTol", 0.1)).passed
    assert not compare("x", est, 0.6, TolerancePolicy("RelTol", 0.1)).passed
    flagged = Estimate(0.51, 0.01, 100, 50, n_saturated=5)
    assert compare("x", flagged, 0.9).status == "inconclusive"
    with pytest.raises(DomainError):
        TolerancePolicy("nope")
    assert isinstance(compare("x", est, 0.5), ComparisonReport)
    assert compare("x", est, 0.5).as_row()["tolerance_policy"] == "CI3sigma"


def test_trend_rule():
    near = [Estimate(0.4, 0.001, 1, 1)]
    assert trend_improves(near, [Estimate(0.45, 0.001, 1, 1)], [0.5])
    assert not trend_improves(near, [Estimate(0.3, 0.001, 1, 1)], [0.5])


def test_survival_and_Z_gates(binary):
    assert check_survival_exact(binary, 1.0, 20_000, 4, workers=1).passed
    reps = check_Z_pgf(binary, 2.0, 20_000, 5, workers=1)
    assert all(r.passed for r in reps)
    assert reps[0].predicted == pytest.approx(0.5)


def test_stationary_pgf_check():
    ls = LawSet.constant(gamma=0.5, alpha=0.9, theta=1.5, L_c=1 / 1.5)
    reps = check_stationary_pgf(ls, 50.0, 20_000, s_grid=(0.0, 0.5, 1.0), seed=2, workers=1)
    by_name = {r.quantity: r for r in reps}
    assert by_name["E[s^Y|Y>0] s=1 exact"].empirical.mean == 1.0
    assert by_name["E[s^Y|Y>0] s=0 exact"].empirical.mean == 0.0
    assert by_name["E[s^Y|Y>0] s=0.5 limit"].predicted == pytest.approx(1 - 0.5**0.4)
    assert all(r.passed for r in reps if r.hard)
    with pytest.raises(DomainError):
        check_stationary_pgf(LawSet.constant(gamma=0.8, alpha=0.4, theta=2.0), 5.0, 200)


def test_q_ratio_and_scaling_checks():
    ls = LawSet.constant(gamma=0.5, alpha=0.5, theta=2.0)
    assert all(r.passed for r in check_q_ratio(ls))
    reps = check_q_scaling(ls, c_grid=(1.0,), lambda_grid=(1.0, 1e8))
    assert reps[0].predicted == pytest.approx(0.5)
    assert reps[1].predicted == pytest.approx(1.0, abs=0.02)
    assert all(r.passed for r in reps)
    one = check_q_scaling(LawSet.constant(gamma=1.0, alpha=1.0, theta=2.0), c_grid=(2.0,), lambda_grid=(1.0,))
    assert one[0].predicted == pytest.approx(1 / 3) and one[0].passed


def test_run_suite_validation():
    with pytest.raises(ConfigError):
        run_suite("missing", 1)
    with pytest.raises(ConfigError):
        run_suite("q-asymptotics", 1, n_reps=5)


def test_analytic_gates_suite():
    reps = run_suite("analytic-gates", 7, n_reps=20_000, workers=1)
    assert reps and all(r.status == "pass" for r in reps)


def _boundary_lawset():
    gamma, alpha = 0.8, 0.4
    L_Q = (gamma / (1 + gamma)) ** (-alpha / gamma)
    return LawSet.constant(gamma=gamma, alpha=alpha, theta=0.5, R_c=1.0 / L_Q)


def test_boundary_limit_transform_exact_convergence():
    from critbranch.asymptotics import D2_hat

    e = AnalyticEngine(_boundary_lawset())
    for lam in (0.25, 1.0, 4.0):
        gaps = [abs(e.cond_laplace(t, lam) - D2_hat(0.5, 0.4, 0.8, 1.0, lam)) for t in (1e3, 1e4, 1e5, 1e6)]
        assert gaps[0] > gaps[1] > gaps[2] > gaps[3]
        assert gaps[3] < 5e-4


def test_boundary_limit_transform_monte_carlo():
    reps = check_limit_laplace(_boundary_lawset(), 1e3, 50_000, 5, slack=0.03, trend=False, workers=1)
    assert all(r.status == "pass" for r in reps)
