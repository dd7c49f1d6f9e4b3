"""Initial-trace diagnostics from small-time snapshots.

A point is SINGULAR when local masses ∫_{B(x0,ε)} u(·,t) blow up as t ↓ 0
and REGULAR when they converge; the density on the regular set and the
residue γ = lim t^{1/(q-1)} u are recovered by extrapolation on the
geometric output grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import AuditError, RegimeError
from .estimates import CheckReport
from .extrapolation import is_cauchy, loglog_slope, richardson_table
from .scaling import ScalingParams
from .solver import Trajectory

REGULAR = "REGULAR"
SINGULAR = "SINGULAR"
UNDECIDED = "UNDECIDED"
CODES = {REGULAR: 0, SINGULAR: 1, UNDECIDED: 2}

REGULAR_SLOPE = 0.05
SINGULAR_SLOPE = -0.2
CAUCHY_TOL = 0.05
MIN_DECADE_SNAPSHOTS = 4
MASS_FLOOR_REL = 1e-10
GAMMA_FLOOR = 1e-8


@dataclass
class PointTrace:
    x: float
    classification: str
    slope: float
    by_epsilon: list = field(default_factory=list)
    regular_density: float | None = None
    gamma: float | None = None
    rate_tag: str | None = None


@dataclass
class TraceReport:
    points: list
    epsilons: tuple
    t_window: tuple

    @property
    def classifications(self) -> dict:
        return {pt.x: pt.classification for pt in self.points}

    def point(self, x: float) -> PointTrace:
        return min(self.points, key=lambda pt: abs(pt.x - x))

    def to_dict(self) -> dict:
        return json.loads(json.dumps({"points": [asdict(pt) for pt in self.points], "epsilons": list(self.epsilons),
                                      "t_window": list(self.t_window)}, default=float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="\n") as fh:
            fh.write("x,classification_code,density,gamma\n")
            for pt in self.points:
                dens = "" if pt.regular_density is None else f"{pt.regular_density:.17g}"
                gam = "" if pt.gamma is None else f"{pt.gamma:.17g}"
                fh.write(f"{pt.x:.17g},{CODES[pt.classification]},{dens},{gam}\n")
        return path


def _ball(traj: Trajectory, x0: float, eps: float) -> np.ndarray:
    return np.abs(traj.x - x0) <= eps * (1 + 1e-12)


def local_mass(traj: Trajectory, x0: float, eps: float) -> np.ndarray:
    """∫_{B(x0,ε)} u(·,t) at every snapshot (whole shells |r - r0| ≤ ε in radial geometry)."""
    sel = _ball(traj, x0, eps)
    return traj.snapshots[:, sel] @ traj.grid.weights[sel]


def _window_indices(traj: Trajectory, t_window) -> np.ndarray:
    t = traj.times
    lo, hi = (t[0], t[-1]) if t_window is None else t_window
    idx = np.nonzero((t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12)))[0]
    if idx.size == 0:
        raise AuditError("time window holds no snapshots")
    return idx


def _smallest_decade(traj: Trajectory, t_window) -> np.ndarray:
    idx = _window_indices(traj, t_window)
    t = traj.times[idx]
    dec = idx[t <= 10.0 * t[0] * (1 + 1e-12)]
    if dec.size < MIN_DECADE_SNAPSHOTS:
        raise AuditError(f"only {dec.size} snapshots in the smallest decade; need {MIN_DECADE_SNAPSHOTS}")
    return dec


def _limit_from_small_t(values, times) -> float:
    """Limit t ↓ 0 from the three smallest times, removing a term linear in t."""
    return richardson_table(np.asarray(values, dtype=float)[:3], np.asarray(times, dtype=float)[:3], [1])


def _classify_one(traj, x0, eps, dec, floor):
    m = local_mass(traj, x0, eps)[dec]
    t = traj.times[dec]
    clipped = np.maximum(m, floor)
    slope = loglog_slope(t, clipped).slope
    vol = float(np.sum(traj.grid.weights[_ball(traj, x0, eps)]))
    cauchy = is_cauchy(clipped[:3], CAUCHY_TOL, floor=floor)
    growing = bool(np.all(np.diff(m) <= 1e-12 * np.max(np.abs(m))))  # m increases as t decreases
    if abs(slope) <= REGULAR_SLOPE and cauchy:
        label = REGULAR
    elif slope <= SINGULAR_SLOPE and growing:
        label = SINGULAR
    else:
        label = UNDECIDED
    limit = 0.0 if np.all(m <= floor) else _limit_from_small_t(m, t)
    return {"eps": eps, "label": label, "slope": slope, "cauchy": cauchy, "mass_smallest_t": float(m[0]),
            "mass_limit": limit if label == REGULAR else None, "ball_measure": vol}


def classify_points(traj: Trajectory, points, epsilons, t_window=None, p: ScalingParams | None = None,
                    mass_floor: float | None = None) -> TraceReport:
    """Label each point REGULAR / SINGULAR / UNDECIDED from local-mass growth as t ↓ 0.

    The per-point label is the one at the smallest ε; labels at every ε are
    kept in ``by_epsilon``.  With ``p`` given (q > 1), γ is estimated at
    every point and SINGULAR points in 1 < q < 2 get a rate tag.
    """
    eps_list = sorted(float(e) for e in np.atleast_1d(epsilons))
    h = traj.grid.spacing
    if eps_list[0] < 3 * h * (1 - 1e-12):
        raise AuditError(f"epsilon {eps_list[0]:g} is below three cells ({3 * h:g})")
    dec = _smallest_decade(traj, t_window)
    if mass_floor is None:
        scale = float(np.max(traj.snapshots[dec])) * 2 * eps_list[-1]
        mass_floor = MASS_FLOOR_REL * max(scale, 1e-300)
    out = []
    for x0 in np.atleast_1d(points).astype(float):
        rows = [_classify_one(traj, x0, e, dec, mass_floor) for e in eps_list]
        first = rows[0]
        pt = PointTrace(x=float(x0), classification=first["label"], slope=first["slope"], by_epsilon=rows)
        if first["label"] == REGULAR:
            pt.regular_density = first["mass_limit"] / first["ball_measure"]
        out.append(pt)
    report = TraceReport(out, tuple(eps_list), tuple(float(v) for v in traj.times[[dec[0], _window_indices(traj, t_window)[-1]]]))
    if p is not None and p.superlinear:
        gam = estimate_gamma(traj, p, [pt.x for pt in out], t_window)
        for pt, g in zip(out, gam["gamma"]):
            pt.gamma = g
            if pt.classification == SINGULAR and 1.0 < p.q < 2.0:
                pt.rate_tag = singular_rate_tag(traj, p, pt.x, t_window)
    return report


def singular_rate_tag(traj: Trajectory, p: ScalingParams, x0: float, t_window=None) -> str | None:
    """'interior' if t^{1/(q-1)}u plateaus on the smallest decade, 'boundary' if t^{a/2}u does."""
    if not 1.0 < p.q < 2.0:
        return None
    dec = _smallest_decade(traj, t_window)
    i = int(np.argmin(np.abs(traj.x - x0)))
    t = traj.times[dec]
    u = traj.snapshots[dec, i]
    if np.any(u <= 0):
        return None
    s_int = abs(loglog_slope(t, t ** (1.0 / (p.q - 1.0)) * u).slope)
    s_bdy = abs(loglog_slope(t, t ** (p.a / 2.0) * u).slope)
    return "interior" if s_int <= s_bdy else "boundary"


def estimate_gamma(traj: Trajectory, p: ScalingParams, points, t_window=None, floor: float = GAMMA_FLOOR) -> dict:
    """γ(x) = lim t^{1/(q-1)} u(x, t), extrapolated linearly in t from the three smallest audited times."""
    if not p.superlinear:
        raise RegimeError(f"gamma needs q > 1, got q={p.q}")
    idx = _window_indices(traj, t_window)[:3]
    if idx.size < 3:
        raise AuditError("gamma extrapolation needs three snapshots")
    t = traj.times[idx]
    gammas, bounded, raw = [], [], []
    for x0 in np.atleast_1d(points).astype(float):
        i = int(np.argmin(np.abs(traj.x - x0)))
        v = t ** (1.0 / (p.q - 1.0)) * traj.snapshots[idx, i]
        g = richardson_table(v, t, [1])
        g = max(g, 0.0)
        gammas.append(0.0 if g < floor else g)
        raw.append(v.tolist())
        bounded.append(bool(np.max(v) <= 10.0 * max(np.min(v), floor)))
    return {"points": [float(x) for x in np.atleast_1d(points)], "gamma": gammas, "samples": raw,
            "locally_bounded": bounded, "times": t.tolist()}


@dataclass
class RegularPart:
    x: np.ndarray
    density: np.ndarray
    mass: float
    mass_samples: list
    cauchy: bool
    status: str


def estimate_regular_part(traj: Trajectory, region, test_width: float | None = None, t_window=None) -> RegularPart:
    """Density of the regular trace on ``region`` from hat-function averages, plus its total mass.

    Each nodal density is ∫u ψ / ∫ψ for a hat ψ of half-width ``test_width``
    (default three cells), extrapolated to t = 0 from the three smallest times
    by Richardson elimination of the O(t) term; the region mass likewise.
    """
    lo, hi = map(float, region)
    x = traj.x
    w = traj.grid.weights
    h = traj.grid.spacing
    width = 3 * h if test_width is None else float(test_width)
    idx = _window_indices(traj, t_window)[:3]
    if idx.size < 3:
        raise AuditError("regular-part extrapolation needs three snapshots")
    inside = (x >= lo - 1e-12) & (x <= hi + 1e-12)
    nodes = np.nonzero(inside)[0]
    dens = np.empty(nodes.size)
    snaps = traj.snapshots[idx]
    cauchy_all = True
    for k, i in enumerate(nodes):
        psi = np.clip(1.0 - np.abs(x - x[i]) / width, 0.0, None) * w
        avg = snaps @ psi / psi.sum()
        dens[k] = _limit_from_small_t(avg, traj.times[idx])
        cauchy_all &= is_cauchy(avg, CAUCHY_TOL, floor=1e-12)
    masses = snaps[:, inside] @ w[inside]
    mass = 0.0 if np.all(masses <= 1e-300) else _limit_from_small_t(masses, traj.times[idx])
    cauchy_mass = is_cauchy(masses, CAUCHY_TOL, floor=1e-12)
    status = "ok" if cauchy_mass else UNDECIDED
    return RegularPart(x[nodes], dens, float(mass), masses.tolist(), bool(cauchy_all and cauchy_mass), status)


def q_le_1_trace_boundedness(traj: Trajectory, points, epsilons, t_window=None) -> CheckReport:
    """For 0 < q ≤ 1 every point must be REGULAR with Cauchy local masses."""
    if traj.q > 1.0:
        raise RegimeError("trace boundedness is the q <= 1 statement")
    rep = classify_points(traj, points, epsilons, t_window)
    bad = [pt.x for pt in rep.points if any(r["label"] != REGULAR for r in pt.by_epsilon)]
    details = [{"x": pt.x, "labels": [r["label"] for r in pt.by_epsilon], "density": pt.regular_density}
               for pt in rep.points]
    window = {"space": [float(min(rep.classifications)), float(max(rep.classifications))], "time": list(rep.t_window)}
    return CheckReport("trace_q_le_1", float(len(bad)), not bad, 0.0, window, details=details)
