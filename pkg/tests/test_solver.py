import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma as gamma_fn

from hjlab.errors import ConfigurationError, InvalidParameterError, ResolutionError
from hjlab.solver import (
    BoundaryLayerWarning,
    Grid,
    InitialData,
    Trajectory,
    build_initial,
    cole_hopf_reference,
    geometric_times,
    gradient_magnitude,
    heat_run,
    max_stable_dt,
    run,
    run_lockstep,
    signed_run,
    sphere_area,
    step,
)


# ---------------------------------------------------------------------------
# grids


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(geometry="polar", x_min=0.0, x_max=1.0, n_cells=10),
        dict(geometry="cartesian1d", x_min=0.0, x_max=1.0, n_cells=2),
        dict(geometry="cartesian1d", x_min=1.0, x_max=1.0, n_cells=10),
        dict(geometry="radial", x_min=-1.0, x_max=1.0, n_cells=10),
        dict(geometry="cartesian1d", x_min=0.0, x_max=1.0, n_cells=10, N=2),
        dict(geometry="radial", x_min=0.0, x_max=1.0, n_cells=10, N=0),
    ],
)
def test_grid_rejects_bad_specs(kwargs):
    with pytest.raises(InvalidParameterError):
        Grid(**kwargs)


def test_cartesian_weights_integrate_constants_exactly():
    g = Grid.cartesian(-2.0, 3.0, 101)
    assert g.weights.sum() == pytest.approx(5.0, rel=1e-14)
    assert g.spacing == pytest.approx(0.05)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_radial_weights_sum_to_ball_volume(N):
    R = 2.0
    g = Grid.radial(R, 201, N)
    ball = math.pi ** (N / 2) / gamma_fn(N / 2 + 1) * R**N
    # the outer half cell lies beyond the last node, so compare to the ball of radius R - h/2 ... R
    assert g.weights.sum() == pytest.approx(ball, rel=2 * N * g.spacing / R)


@pytest.mark.parametrize("N,area", [(1, 2.0), (2, 2 * math.pi), (3, 4 * math.pi)])
def test_sphere_area(N, area):
    assert sphere_area(N) == pytest.approx(area, rel=1e-14)


def test_weights_are_defensive_copies():
    g = Grid.cartesian(0.0, 1.0, 11)
    w = g.weights
    w[:] = 0.0
    assert g.weights.sum() > 0


def test_refined_halves_spacing_and_keeps_nodes():
    g = Grid.cartesian(-1.0, 1.0, 21)
    f = g.refined(2)
    assert f.n_cells == 41 and f.spacing == pytest.approx(g.spacing / 2)
    np.testing.assert_allclose(f.x[::2], g.x, atol=1e-15)


# ---------------------------------------------------------------------------
# initial data


@pytest.mark.parametrize("grid", [Grid.cartesian(-2, 2, 401), Grid.radial(2, 401, 1), Grid.radial(2, 401, 3)])
def test_dirac_is_mass_normalised(grid):
    u0 = build_initial(grid, InitialData.dirac(2.5))
    assert grid.weights @ u0 == pytest.approx(2.5, rel=1e-13)
    assert np.all(u0 >= 0)


def test_dirac_default_width_is_four_cells():
    g = Grid.cartesian(-1, 1, 201)
    u0 = build_initial(g, InitialData.dirac(1.0))
    support = g.x[u0 > 0]
    assert support.max() - support.min() == pytest.approx(2 * 4 * g.spacing - 2 * g.spacing, abs=1e-12)


def test_dirac_narrower_than_two_cells_is_rejected():
    g = Grid.cartesian(-1, 1, 201)
    with pytest.raises(ResolutionError):
        build_initial(g, InitialData.dirac(1.0, width=g.spacing))


def test_radial_dirac_must_sit_at_origin():
    with pytest.raises(ConfigurationError):
        build_initial(Grid.radial(1, 101, 2), InitialData.dirac(1.0, center=0.5))


def test_indicator_ramps_over_one_cell():
    g = Grid.cartesian(-1, 1, 21)
    u0 = build_initial(g, InitialData.indicator([(0.0, np.inf)], 3.0))
    i0 = int(np.argmin(np.abs(g.x)))
    assert u0[i0] == pytest.approx(1.5)
    assert np.all(u0[:i0] == 0.0) and np.all(u0[i0 + 1:] == 3.0)


def test_ladder_selects_rungs():
    g = Grid.cartesian(-1, 1, 21)
    spec = InitialData.infinite_on([(0.0, 0.5)], ladder=[1.0, 10.0])
    assert spec.n_rungs == 2
    assert build_initial(g, spec, 0).max() == 1.0
    assert build_initial(g, spec).max() == 10.0


@pytest.mark.parametrize("ladder", [[1.0, 1.0], [2.0, 1.0], [-1.0, 1.0], []])
def test_ladders_must_increase(ladder):
    with pytest.raises(InvalidParameterError):
        InitialData.infinite_on([(0.0, 1.0)], ladder=ladder)


def test_function_data_shape_is_checked():
    with pytest.raises(ConfigurationError):
        build_initial(Grid.cartesian(0, 1, 11), InitialData.function(np.ones(5)))


def test_describe_is_json_serialisable():
    spec = InitialData.infinite_on([(0.0, np.inf)], ladder=[1.0, 2.0])
    text = json.dumps(spec.describe())
    assert '"inf"' in text


# ---------------------------------------------------------------------------
# stepping


def test_godunov_gradient_picks_upwind_side():
    g = Grid.cartesian(0, 4, 5)  # h = 1
    u = np.array([0.0, 1.0, 3.0, 2.0, 0.0])
    p = gradient_magnitude(u, g, "godunov")
    # node 2 is a peak: D- = 2, D+ = -1
    assert p[2] == pytest.approx(2.0)
    # node 1 rises on both sides: D- = 1 > 0, D+ = 2 > 0 -> max(1, 0)
    assert p[1] == pytest.approx(1.0)


def test_central_and_osher_sethian_variants():
    g = Grid.cartesian(0, 4, 5)
    u = np.array([0.0, 1.0, 3.0, 2.0, 0.0])
    assert gradient_magnitude(u, g, "central")[2] == pytest.approx(0.5)
    assert gradient_magnitude(u, g, "osher_sethian")[2] == pytest.approx(math.hypot(2.0, 1.0))
    with pytest.raises(InvalidParameterError):
        gradient_magnitude(u, g, "weno")


def test_max_stable_dt_is_infinite_for_sublinear_q():
    g = Grid.cartesian(-1, 1, 21)
    u = np.exp(-g.x**2)
    assert max_stable_dt(u, g, 0.8) == math.inf
    assert max_stable_dt(np.zeros_like(u), g, 2.0) == math.inf
    assert 0 < max_stable_dt(u, g, 2.0) < math.inf


def test_step_rejects_non_monotone_dt():
    g = Grid.cartesian(-1, 1, 201)
    u = 50 * np.exp(-(g.x**2) * 20)
    limit = max_stable_dt(u, g, 2.0, safety=1.0)
    with pytest.raises(ConfigurationError):
        step(u, 0.0, 2 * limit, 2.0, grid=g)
    step(u, 0.0, 0.5 * limit, 2.0, grid=g)


def test_zero_is_a_fixed_point():
    g = Grid.cartesian(-1, 1, 51)
    assert np.all(step(np.zeros(51), 0.0, 1e-3, 1.5, grid=g) == 0.0)


@pytest.mark.parametrize("q,scheme", [(0.0, "godunov"), (-1.0, "godunov"), (1.5, "upwind")])
def test_step_validates_arguments(q, scheme):
    g = Grid.cartesian(-1, 1, 11)
    with pytest.raises(InvalidParameterError):
        step(np.zeros(11), 0.0, 1e-3, q, scheme, grid=g)


def test_signed_mode_needs_sublinear_q():
    g = Grid.cartesian(-1, 1, 11)
    with pytest.raises(InvalidParameterError):
        signed_run(g, InitialData.function(np.zeros(11)), 1.5, t_end=0.1)


def test_negative_data_rejected_in_nonnegative_mode():
    g = Grid.cartesian(-1, 1, 11)
    with pytest.raises(InvalidParameterError):
        run(g, InitialData.function(-np.ones(11)), 2.0, t_end=0.1)


# ---------------------------------------------------------------------------
# runs


def test_geometric_times():
    ts = geometric_times(1.0, 1e-3, 2.0)
    assert ts[0] == 1e-3 and ts[-1] == 1.0
    assert np.all(np.diff(ts) > 0)
    np.testing.assert_allclose(ts[1:-1] / ts[:-2], 2.0)
    with pytest.raises(InvalidParameterError):
        geometric_times(1.0, 2.0)


@pytest.mark.parametrize("grid", [Grid.cartesian(-3, 3, 241), Grid.radial(3, 121, 2)])
@pytest.mark.parametrize("q", [0.5, 1.0, 1.5, 2.0, 3.0])
def test_mass_ledger_closes(grid, q):
    tr = run(grid, InitialData.function(lambda x: 4 * np.exp(-(x**2) * 3)), q, t_end=0.3, t_min=1e-3)
    balance = tr.mass + tr.absorbed + tr.boundary_loss - tr.clamped
    np.testing.assert_allclose(balance, tr.initial_mass, rtol=1e-12)
    assert np.all(np.diff(tr.mass) <= 1e-14 * tr.initial_mass)


def test_heat_run_matches_gaussian_solution():
    g = Grid.cartesian(-8, 8, 801)
    tr = heat_run(g, InitialData.function(lambda x: np.exp(-(x**2))), output_times=[0.25, 0.5], dt_max=1e-3)
    t = 0.5
    exact = np.exp(-(g.x**2) / (1 + 4 * t)) / math.sqrt(1 + 4 * t)
    assert np.max(np.abs(tr.snapshots[-1] - exact)) < 2e-3


@pytest.mark.parametrize("N", [1, 2, 3])
def test_radial_heat_run_matches_gaussian_solution(N):
    g = Grid.radial(6, 601, N)
    tr = heat_run(g, InitialData.function(lambda r: np.exp(-(r**2))), output_times=[0.5], dt_max=1e-3)
    exact = np.exp(-(g.x**2) / 3.0) / 3.0 ** (N / 2)
    assert np.max(np.abs(tr.snapshots[-1] - exact)) < 3e-3


def test_cole_hopf_cartesian_and_radial_agree_for_even_data():
    cart = Grid.cartesian(-6, 6, 481)
    rad = Grid.radial(6, 241, 1)
    u0c = 2 * np.exp(-cart.x**2)
    u0r = 2 * np.exp(-rad.x**2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryLayerWarning)
        a = cole_hopf_reference(cart, u0c, 0.2)
        b = cole_hopf_reference(rad, u0r, 0.2)
    # the Cartesian reference carries boundary images, the radial one does not
    inner = rad.x <= 4.0
    np.testing.assert_allclose(a[240:][inner], b[inner], atol=1e-10)


def test_cole_hopf_warns_near_the_boundary():
    g = Grid.cartesian(-2, 2, 81)
    with pytest.warns(BoundaryLayerWarning):
        cole_hopf_reference(g, np.exp(-g.x**2), 0.5)


def test_ladder_rungs_are_ordered_and_gaps_recorded():
    g = Grid.cartesian(-2, 3, 201)
    tr = run(g, InitialData.infinite_on([(0.0, np.inf)], ladder=[10.0, 100.0]), 2.0, t_end=0.1, t_min=1e-3)
    assert len(tr.rungs) == 1
    assert np.all(tr.rungs[0].snapshots <= tr.snapshots)
    gaps = tr.metadata["ladder_gaps"]
    assert len(gaps) == 1 and len(gaps[0]) == tr.times.size
    assert tr.metadata["ladder"] == [10.0, 100.0]


def test_parallel_rungs_match_serial():
    g = Grid.cartesian(-2, 3, 101)
    spec = InitialData.infinite_on([(0.0, np.inf)], ladder=[10.0, 100.0])
    a = run(g, spec, 2.0, t_end=0.05, t_min=1e-3, lockstep=False)
    b = run(g, spec, 2.0, t_end=0.05, t_min=1e-3, lockstep=False, jobs=2)
    assert np.array_equal(a.snapshots, b.snapshots)


def test_experimental_flag_above_two():
    g = Grid.cartesian(-1, 1, 41)
    tr = run(g, InitialData.function(np.exp(-g.x**2)), 2.5, t_end=0.01)
    assert tr.metadata["experimental"] is True
    assert "experimental" not in run(g, InitialData.function(np.exp(-g.x**2)), 2.0, t_end=0.01).metadata


def test_lockstep_shares_time_steps():
    g = Grid.cartesian(-2, 2, 81)
    a, b = run_lockstep(g, [InitialData.function(np.exp(-g.x**2)), InitialData.function(9 * np.exp(-g.x**2))],
                        2.0, t_end=0.1)
    assert a.metadata["steps"] == b.metadata["steps"]
    assert np.all(a.snapshots <= b.snapshots)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    q=st.sampled_from([0.6, 1.0, 1.4, 2.0, 2.8]),
    scheme=st.sampled_from(["godunov", "osher_sethian"]),
    radial=st.booleans(),
)
def test_comparison_principle_is_exact(seed, q, scheme, radial):
    rng = np.random.default_rng(seed)
    g = Grid.radial(2, 41, 2) if radial else Grid.cartesian(-2, 2, 41)
    lo = rng.uniform(0, 3, 41)
    hi = lo + rng.uniform(0, 1, 41) * (rng.uniform(size=41) < 0.5)
    a, b = run_lockstep(g, [InitialData.function(lo), InitialData.function(hi)], q, t_end=0.02, t_min=1e-3,
                        scheme=scheme)
    assert np.all(a.snapshots <= b.snapshots)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), q=st.sampled_from([0.3, 0.7, 1.0]))
def test_signed_runs_preserve_sign(seed, q):
    rng = np.random.default_rng(seed)
    g = Grid.cartesian(-2, 2, 41)
    u0 = -rng.uniform(0, 3, 41)
    tr = signed_run(g, InitialData.function(u0), q, t_end=0.05, t_min=1e-3)
    assert tr.snapshots.max() <= 0.0


def test_crank_nicolson_is_second_order_for_heat():
    g = Grid.cartesian(-8, 8, 1601)
    u0 = InitialData.function(lambda x: np.exp(-(x**2)))
    exact = np.exp(-(g.x**2) / 3.0) / math.sqrt(3.0)
    errs = [np.max(np.abs(heat_run(g, u0, output_times=[0.5], diffusion=d, dt_max=2e-2).snapshots[-1] - exact))
            for d in ("implicit", "crank_nicolson")]
    assert errs[1] < errs[0] / 5


# ---------------------------------------------------------------------------
# persistence


def test_save_load_roundtrip_is_bitwise(tmp_path):
    g = Grid.radial(2, 51, 2)
    tr = run(g, InitialData.dirac(1.0), 1.2, t_end=0.05, t_min=1e-3)
    tr.save(tmp_path / "a")
    back = Trajectory.load(tmp_path / "a")
    assert back.grid == tr.grid
    assert np.array_equal(back.snapshots, tr.snapshots)
    assert np.array_equal(back.times, tr.times)
    assert np.array_equal(back.mass, tr.mass)
    assert back.metadata["scheme"] == "godunov"


def test_saved_output_is_deterministic(tmp_path):
    g = Grid.cartesian(-1, 1, 41)
    for name in ("a", "b"):
        run(g, InitialData.indicator([(0.0, 0.5)], 5.0), 2.0, t_end=0.05, t_min=1e-3).save(tmp_path / name)
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    header = (tmp_path / "a" / "snap_0000.csv").read_text().splitlines()[0]
    assert header == "x,u"
