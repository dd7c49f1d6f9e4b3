import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_gaussian, small_halfline
from hjlab.errors import AuditError, RegimeError
from hjlab.scaling import scaling_params
from hjlab.solver import Grid, InitialData, Trajectory, geometric_times, run
from hjlab.trace import (
    CODES,
    REGULAR,
    SINGULAR,
    UNDECIDED,
    classify_points,
    estimate_gamma,
    estimate_regular_part,
    local_mass,
    q_le_1_trace_boundedness,
    singular_rate_tag,
)


def fabricated(fn, grid, times, q=2.0):
    return Trajectory(grid, np.asarray(times), np.array([fn(grid.x, t) for t in times]), q)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0.1, 10.0), x0=st.floats(-1.0, 1.0), eps=st.floats(0.2, 1.0))
def test_local_mass_of_constant(c, x0, eps):
    grid = Grid.cartesian(-3.0, 3.0, 601)
    traj = fabricated(lambda x, t: np.full_like(x, c), grid, [0.1, 0.2])
    # the ball holds 2ε/h nodes up to one cell either way
    assert np.all(np.abs(local_mass(traj, x0, eps) - 2 * c * eps) <= c * grid.spacing * (1 + 1e-9))


def test_halfline_dichotomy():
    rep = classify_points(small_halfline(), [-2.0, 1.0, 2.0], [0.1, 0.2], p=scaling_params(2.0, 1))
    assert rep.classifications == {-2.0: REGULAR, 1.0: SINGULAR, 2.0: SINGULAR}
    left = rep.point(-2.0)
    assert left.regular_density == pytest.approx(0.0, abs=1e-8)
    assert left.gamma == 0.0
    assert rep.point(2.0).gamma > rep.point(1.0).gamma > 0


def test_labels_kept_per_epsilon():
    rep = classify_points(small_halfline(), [1.0], [0.2, 0.1])
    pt = rep.point(1.0)
    assert [r["eps"] for r in pt.by_epsilon] == [0.1, 0.2]
    assert all(r["label"] == SINGULAR for r in pt.by_epsilon)
    assert rep.epsilons == (0.1, 0.2)


def test_smooth_data_density_recovers_initial_value():
    rep = classify_points(small_gaussian(2.0), [0.0, 1.0], [0.12], p=scaling_params(2.0, 1))
    assert all(pt.classification == REGULAR for pt in rep.points)
    assert rep.point(0.0).regular_density == pytest.approx(2.0, rel=0.02)
    assert rep.point(1.0).regular_density == pytest.approx(2 * np.exp(-1.0), rel=0.02)
    assert rep.point(0.0).gamma < 1e-3


def test_regular_part_of_smooth_data():
    part = estimate_regular_part(small_gaussian(2.0), (-1.0, 1.0))
    exact = 2.0 * np.sqrt(np.pi) * 0.8427007929497149  # 2∫_{-1}^{1} e^{-x²}
    assert part.mass == pytest.approx(exact, rel=0.01)
    assert part.status == "ok"
    mid = np.argmin(np.abs(part.x))
    assert part.density[mid] == pytest.approx(2.0, rel=0.01)


def test_epsilon_below_three_cells_rejected():
    traj = small_halfline()
    with pytest.raises(AuditError):
        classify_points(traj, [1.0], [2.0 * traj.grid.spacing])


def test_too_few_snapshots_in_decade():
    grid = Grid.cartesian(-2.0, 2.0, 81)
    traj = fabricated(lambda x, t: np.ones_like(x), grid, [1e-3, 1e-2, 1e-1, 1.0])
    with pytest.raises(AuditError):
        classify_points(traj, [0.0], [0.2])


def test_slow_growth_is_undecided():
    # mass ∝ t^{-0.1}: neither a plateau nor a clear blow-up
    grid = Grid.cartesian(-2.0, 2.0, 81)
    traj = fabricated(lambda x, t: np.full_like(x, t**-0.1), grid, geometric_times(0.1, 1e-4))
    rep = classify_points(traj, [0.0], [0.3])
    assert rep.point(0.0).classification == UNDECIDED


def test_csv_columns_and_codes(tmp_path):
    rep = classify_points(small_halfline(), [-2.0, 1.0], [0.1], p=scaling_params(2.0, 1))
    path = rep.to_csv(tmp_path / "trace.csv")
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["x", "classification_code", "density", "gamma"]
    assert [int(r["classification_code"]) for r in rows] == [CODES[REGULAR], CODES[SINGULAR]]
    assert rows[1]["density"] == ""
    assert CODES == {REGULAR: 0, SINGULAR: 1, UNDECIDED: 2}
    assert json.loads(rep.to_json())["points"][0]["classification"] == REGULAR


def test_gamma_needs_superlinear():
    with pytest.raises(RegimeError):
        estimate_gamma(small_gaussian(2.0), scaling_params(1.0, 1), [0.0])


def test_gamma_halfline_close_to_power_law():
    p = scaling_params(2.0, 1)
    g = estimate_gamma(small_halfline(), p, [1.0, 2.0], t_window=(2e-3, 1.0))
    for x, gm in zip(g["points"], g["gamma"]):
        assert gm == pytest.approx(p.c_q * x**p.q_conj, rel=0.25)
    assert all(g["locally_bounded"])


def test_rate_tag_interior_vs_boundary():
    p = scaling_params(1.5, 1)
    traj = run(Grid.cartesian(-4.0, 6.0, 401), InitialData.indicator([(0.0, np.inf)], 1e8), 1.5,
               t_end=0.05, t_min=1e-3)
    assert singular_rate_tag(traj, p, 2.0) == "interior"
    assert singular_rate_tag(traj, p, 0.0) == "boundary"
    assert singular_rate_tag(traj, scaling_params(2.0, 1), 2.0) is None


def test_dirac_origin_mass_converges():
    traj = run(Grid.radial(4.0, 401, 1), InitialData.dirac(1.0), 1.3, t_end=0.1, t_min=1e-5)
    assert classify_points(traj, [0.0], [0.05, 0.1]).point(0.0).classification == REGULAR
    part = estimate_regular_part(traj, (0.0, 0.5), t_window=(1e-5, 1.0))
    assert part.mass == pytest.approx(1.0, abs=0.05)


@pytest.mark.parametrize("q", [0.5, 1.0])
def test_q_le_1_boundedness(q):
    rep = q_le_1_trace_boundedness(small_gaussian(q), [0.0, 1.0], [0.12])
    assert rep.passed
    assert all(d["labels"] == [REGULAR] for d in rep.details)


def test_q_le_1_rejects_superlinear():
    with pytest.raises(RegimeError):
        q_le_1_trace_boundedness(small_gaussian(2.0), [0.0], [0.12])
