import dataclasses
import json

import numpy as np
import pytest

from conftest import halfspace, small_gaussian, small_halfline
from hjlab.errors import ConfigurationError, RegimeError
from hjlab.estimates import (
    STATUS_EXPERIMENTAL,
    STATUS_NA,
    STATUS_VACUOUS,
    check_boundary_rate,
    check_comparison,
    check_gradient_bound,
    check_growth_bound,
    check_lower_rates,
    check_mass_dissipation,
    check_off_support_decay,
    check_profile_invariants,
    check_scaling_covariance,
    self_convergence_error,
)
from hjlab.scaling import scaling_params
from hjlab.solver import Grid, InitialData, Trajectory, geometric_times, run

HALFLINE_WINDOW = (-3.5, 3.5)


def fabricated(fn, grid, times, q=2.0, **kw):
    snaps = np.array([fn(grid.x, t) for t in times])
    return Trajectory(grid, np.asarray(times), snaps, q, **kw)


# ---------------------------------------------------------------------------
# gradient bound


@pytest.mark.parametrize("q", [1.5, 2.0, 3.0])
def test_gradient_bound_holds_on_smooth_data(q):
    rep = check_gradient_bound(small_gaussian(q), scaling_params(q, 1))
    assert rep.passed
    assert rep.max_violation < 0


def test_gradient_bound_on_halfline_window():
    rep = check_gradient_bound(small_halfline(), scaling_params(2.0, 1), x_range=HALFLINE_WINDOW)
    assert rep.passed
    assert rep.window["space"][0] >= HALFLINE_WINDOW[0]


def test_gradient_bound_detects_violation():
    # u = e^{x}: t|u'|^2/u = t e^{x} exceeds 1 for large x
    grid = Grid.cartesian(-2.0, 4.0, 121)
    traj = fabricated(lambda x, t: np.exp(x), grid, geometric_times(1.0, 0.05))
    rep = check_gradient_bound(traj, scaling_params(2.0, 1))
    assert not rep.passed
    assert rep.max_violation > 1.0


@pytest.mark.parametrize("q", [0.5, 1.0])
def test_gradient_bound_needs_superlinear(q):
    with pytest.raises(RegimeError):
        check_gradient_bound(small_gaussian(2.0), scaling_params(q, 1))


# ---------------------------------------------------------------------------
# growth bound


@pytest.mark.parametrize("q", [2.0, 2.5, 3.0])
def test_growth_exponent_matches_conjugate(q):
    p = scaling_params(q, 1)
    # keep the ball clear of the layer that the far Dirichlet edge builds
    traj = run(Grid.cartesian(-2.0, 6.0, 801), InitialData.indicator([(0.0, np.inf)], 1e4), q,
               t_end=0.01, t_min=1e-4)
    rep = check_growth_bound(traj, p, x0=0.0, eta_ball=2.9, t_range=(traj.times[1], 1.0), target=p.q_conj)
    assert rep.passed, rep.fitted_rate
    assert rep.max_violation < 0


def test_growth_bound_flags_wrong_target():
    p = scaling_params(2.0, 1)
    traj = run(Grid.cartesian(-2.0, 6.0, 801), InitialData.indicator([(0.0, np.inf)], 1e4), 2.0,
               t_end=0.01, t_min=1e-4)
    rep = check_growth_bound(traj, p, x0=0.0, eta_ball=2.9, t_range=(traj.times[1], 1.0), target=3.0)
    assert not rep.passed


def test_growth_bound_envelope_violation():
    grid = Grid.cartesian(-3.0, 3.0, 301)
    p = scaling_params(2.0, 1)
    traj = fabricated(lambda x, t: 1e3 * (1 + x**2) / t, grid, geometric_times(0.1, 1e-3))
    rep = check_growth_bound(traj, p, x0=0.0, eta_ball=2.0, eta_fit_min=0.0)
    assert not rep.passed
    assert rep.max_violation > 0


def test_growth_bound_needs_resolved_ball():
    with pytest.raises(ConfigurationError):
        check_growth_bound(small_halfline(), scaling_params(2.0, 1), x0=0.0, eta_ball=0.01)


# ---------------------------------------------------------------------------
# off-support decay


def test_linear_decay_away_from_support():
    traj = run(Grid.cartesian(-4.0, 4.0, 401), InitialData.indicator([(-1.0, 1.0)], 1.0), 2.0,
               t_end=0.1, t_min=1e-4)
    rep = check_off_support_decay(traj, [(-1.0, 1.0)], 2.0)
    assert rep.check_id == "ita"
    assert rep.passed
    assert rep.fitted_rate >= 0.9


def test_exponential_decay_halfline():
    traj = run(Grid.cartesian(-4.0, 6.0, 1001), InitialData.infinite_on([(0.0, np.inf)], ladder=[1e2, 1e3]), 2.0,
               t_end=0.25, t_min=5e-3)
    rep = check_off_support_decay(traj, [(0.0, np.inf)], 1.0, x0=-2.0)
    assert rep.check_id == "expo"
    assert rep.passed
    # log u ≈ -d²/(4t) at distance d = 2 gives slope -1 against 1/t
    for s in rep.details[1]["exp_slopes"]:
        assert s == pytest.approx(-1.0, rel=0.3)


def test_decay_vacuous_when_far_field_vanishes():
    grid = Grid.cartesian(-4.0, 4.0, 81)
    traj = fabricated(lambda x, t: np.where(np.abs(x) < 1, 1.0, 0.0), grid, geometric_times(0.1, 1e-3))
    rep = check_off_support_decay(traj, [(-1.0, 1.0)], 1.5)
    assert rep.status == STATUS_VACUOUS
    assert rep.passed


def test_decay_flags_persistent_far_mass():
    grid = Grid.cartesian(-4.0, 4.0, 81)
    traj = fabricated(lambda x, t: np.full_like(x, 0.5), grid, geometric_times(0.1, 1e-3))
    assert not check_off_support_decay(traj, [(-1.0, 1.0)], 1.5).passed


# ---------------------------------------------------------------------------
# lower rates


def test_interior_lower_bound_halfline():
    rep = check_lower_rates(small_halfline(), scaling_params(2.0, 1), (1.0, 3.0), singular_set=[(0.0, np.inf)])
    assert rep.passed
    assert rep.status == "ok"


def test_interior_lower_bound_not_applicable_for_bounded_data():
    traj = run(Grid.cartesian(-4.0, 4.0, 401), InitialData.indicator([(-1.0, 1.0)], 1.0), 2.0,
               t_end=0.1, t_min=1e-4)
    rep = check_lower_rates(traj, scaling_params(2.0, 1), (-0.5, 0.5))
    assert rep.status == STATUS_NA
    assert not rep.passed


def test_interior_region_outside_singular_set():
    with pytest.raises(ConfigurationError):
        check_lower_rates(small_halfline(), scaling_params(2.0, 1), (-1.0, 1.0), singular_set=[(0.0, np.inf)])


def test_point_rate_plateau_with_high_truncation():
    p = scaling_params(1.3, 1)
    traj = run(Grid.cartesian(-4.0, 6.0, 401), InitialData.infinite_on([(0.0, np.inf)], ladder=[1e6]), 1.3,
               t_end=0.25, t_min=1e-2)
    rep = check_lower_rates(traj, p, 0.0, mode="point")
    assert rep.passed
    assert abs(rep.fitted_rate) <= 0.2


@pytest.mark.parametrize("which", ["saturated", "dirac"])
def test_point_rate_fails_without_singular_trace(which):
    p = scaling_params(1.3, 1)
    if which == "saturated":
        traj = run(Grid.cartesian(-4.0, 6.0, 401), InitialData.infinite_on([(0.0, np.inf)], ladder=[1e2]), 1.3,
                   t_end=0.25, t_min=1e-2)
    else:
        traj = run(Grid.radial(4.0, 401, 1), InitialData.dirac(1.0), 1.3, t_end=0.1, t_min=1e-4)
    rep = check_lower_rates(traj, p, 0.0, mode="point")
    assert not rep.passed
    assert rep.fitted_rate > 0.2


def test_point_rate_needs_subcritical_q():
    with pytest.raises(RegimeError):
        check_lower_rates(small_halfline(), scaling_params(2.0, 1), 0.0, mode="point")


def test_lower_rates_unknown_mode():
    with pytest.raises(ConfigurationError):
        check_lower_rates(small_halfline(), scaling_params(2.0, 1), (1.0, 3.0), mode="sideways")


# ---------------------------------------------------------------------------
# boundary rate


def test_boundary_rate_q2_near_ln2():
    rep = check_boundary_rate(small_halfline(), scaling_params(2.0, 1), 0.0, profile=halfspace(2.0))
    assert rep.passed
    assert rep.target == pytest.approx(np.log(2.0))
    assert rep.fitted_rate == pytest.approx(np.log(2.0), rel=0.05)


def test_boundary_rate_one_sided():
    rep = check_boundary_rate(small_halfline(), scaling_params(2.0, 1), 0.0, profile=halfspace(2.0), convex=False)
    assert rep.status == "one_sided"
    assert rep.passed


def test_boundary_rate_above_two_is_experimental():
    rep = check_boundary_rate(small_halfline(3.0), scaling_params(3.0, 1), 0.0)
    assert rep.status == STATUS_EXPERIMENTAL


# ---------------------------------------------------------------------------
# structural checks


def test_mass_dissipation_on_run():
    rep = check_mass_dissipation(small_gaussian(2.0))
    assert rep.passed
    assert rep.max_violation <= 1e-8


def test_mass_dissipation_flags_gain():
    grid = Grid.cartesian(-1.0, 1.0, 21)
    times = np.array([0.1, 0.2])
    u0 = np.ones(grid.x.size)
    traj = Trajectory(grid, times, np.array([u0, u0]), 2.0, initial=u0,
                      mass=np.array([grid.weights.sum() * 1.01] * 2), absorbed=np.zeros(2), clamped=np.zeros(2))
    rep = check_mass_dissipation(traj)
    assert not rep.passed
    assert rep.max_violation == pytest.approx(0.01)


def test_mass_dissipation_needs_ledger():
    grid = Grid.cartesian(-1.0, 1.0, 21)
    with pytest.raises(ConfigurationError):
        check_mass_dissipation(fabricated(lambda x, t: x * 0, grid, [0.1, 0.2]))


def _pair(lo, hi):
    grid = Grid.cartesian(-3.0, 3.0, 121)
    a = run(grid, InitialData.function(lambda x: lo * np.exp(-x**2)), 2.0, t_end=0.2, t_min=1e-2)
    b = run(grid, InitialData.function(lambda x: hi * np.exp(-x**2)), 2.0, output_times=a.times)
    return a, b


def test_comparison_ordered_runs():
    a, b = _pair(1.0, 2.0)
    rep = check_comparison(a, b)
    assert rep.passed
    assert rep.max_violation == 0.0


def test_comparison_detects_reversal():
    a, b = _pair(1.0, 2.0)
    rep = check_comparison(b, a)
    assert not rep.passed
    assert rep.details[0]["excess"] > 0


def test_comparison_rejects_mismatched_runs():
    a, _ = _pair(1.0, 2.0)
    with pytest.raises(ConfigurationError):
        check_comparison(a, small_gaussian(2.0))


@pytest.mark.parametrize("q", [1.5, 2.0, 2.5])
def test_profile_invariants_hold(q):
    rep = check_profile_invariants(halfspace(q))
    assert rep.passed, rep.details


def test_profile_invariants_detect_concavity():
    prof = halfspace(2.0)
    bumped = dataclasses.replace(prof, f_values=prof.f_values - 0.1 * np.sin(prof.eta_grid) ** 2)
    rep = check_profile_invariants(bumped)
    assert not rep.passed
    assert rep.details[0]["convex"] > 0


def _self_similar(q, grid, times, bump=0.0):
    a = (2.0 - q) / (q - 1.0)
    return fabricated(lambda x, t: t ** (-a / 2) * np.exp(-x**2 / (4 * t)) * (1 + bump * x), grid, times, q)


def test_scaling_covariance_exact_family():
    q, k = 1.5, 2.0
    times = np.array([0.01, 0.02, 0.04, 0.08, 0.16])
    big = _self_similar(q, Grid.cartesian(-8.0, 8.0, 1601), k * k * times)
    small = _self_similar(q, Grid.cartesian(-4.0, 4.0, 801), times)
    rep = check_scaling_covariance(big, small, k, scaling_params(q, 1), 1e-3, x_range=(-3.0, 3.0))
    assert rep.passed
    assert rep.details[0]["discrepancy"] < 1e-3


def test_scaling_covariance_detects_broken_symmetry():
    q, k = 1.5, 2.0
    times = np.array([0.01, 0.02, 0.04, 0.08, 0.16])
    big = _self_similar(q, Grid.cartesian(-8.0, 8.0, 1601), k * k * times)
    small = _self_similar(q, Grid.cartesian(-4.0, 4.0, 801), times, bump=0.2)
    assert not check_scaling_covariance(big, small, k, scaling_params(q, 1), 1e-3, x_range=(-3.0, 3.0)).passed


def test_self_convergence_error_zero_for_identical_runs():
    traj = small_gaussian(2.0)
    assert self_convergence_error(traj, traj) == 0.0


def test_report_serialises_with_pass_key():
    rep = check_mass_dissipation(small_gaussian(2.0))
    d = json.loads(rep.to_json())
    assert d["pass"] is True
    assert "passed" not in d
    assert {"check_id", "max_violation", "tolerance", "window", "status"} <= d.keys()
