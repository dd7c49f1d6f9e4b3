"""Monotone finite-difference evolution of u_t - Δu + |∇u|^q = 0.

Grids are uniform: a Cartesian interval or the radial coordinate of an
N-dimensional ball.  Each step applies the absorption explicitly with an
upwind (Godunov) Hamiltonian, then solves the diffusion implicitly; with
the step restricted to the monotonicity bound the scheme satisfies a
discrete comparison principle.  All boundaries are homogeneous Dirichlet
(plus the symmetry condition at r = 0 in radial geometry).
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg.lapack import dptsv as _ptsv
from scipy.special import gamma, ive

from .errors import ConfigurationError, DivergenceError, InvalidParameterError, ResolutionError

SCHEMES = ("godunov", "osher_sethian", "central")
DIFFUSION = ("implicit", "crank_nicolson")


class BoundaryLayerWarning(UserWarning):
    """The Cole-Hopf comparison window reaches the Dirichlet boundary layer."""


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class Grid:
    geometry: str
    x_min: float
    x_max: float
    n_cells: int
    N: int = 1

    def __post_init__(self):
        if self.geometry not in ("cartesian1d", "radial"):
            raise InvalidParameterError(f"unknown geometry {self.geometry!r}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 3:
            raise InvalidParameterError("n_cells must be an integer >= 3")
        if not self.x_max > self.x_min:
            raise InvalidParameterError("x_max must exceed x_min")
        if self.geometry == "radial" and self.x_min != 0.0:
            raise InvalidParameterError("radial grids start at r = 0")
        if self.geometry == "cartesian1d" and self.N != 1:
            raise InvalidParameterError("cartesian1d grids are one-dimensional")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidParameterError("N must be a positive integer")

    @classmethod
    def cartesian(cls, x_min: float, x_max: float, n_cells: int) -> Grid:
        return cls("cartesian1d", float(x_min), float(x_max), int(n_cells))

    @classmethod
    def radial(cls, r_max: float, n_cells: int, N: int) -> Grid:
        return cls("radial", 0.0, float(r_max), int(n_cells), int(N))

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_cells - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_cells)

    @property
    def is_radial(self) -> bool:
        return self.geometry == "radial"

    def _volumes(self) -> np.ndarray:
        h, N = self.spacing, self.N
        r = self.x
        lo = np.maximum(r - 0.5 * h, 0.0)
        hi = np.minimum(r + 0.5 * h, self.x_max)
        return (hi**N - lo**N) / N

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights: trapezoid on an interval, shell volumes in a ball."""
        return self._weights.copy()

    @cached_property
    def _weights(self) -> np.ndarray:
        if not self.is_radial:
            w = np.full(self.n_cells, self.spacing)
            w[0] = w[-1] = 0.5 * self.spacing
            return w
        return sphere_area(self.N) * self._volumes()

    def diffusion_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """(α, β) with (Δu)_i = α_i (u_{i+1} - u_i) - β_i (u_i - u_{i-1})."""
        alpha, beta = self._coefficients
        return alpha.copy(), beta.copy()

    @cached_property
    def _coefficients(self):
        vol, cond = self._finite_volume
        n = self.n_cells
        alpha = np.zeros(n)
        beta = np.zeros(n)
        alpha[:-1] = cond / vol[:-1]
        beta[1:] = cond / vol[1:]
        return alpha, beta

    @cached_property
    def _finite_volume(self):
        """Cell measures and face conductances: (Δu)_i = Σ_faces cond (u_j - u_i) / vol_i."""
        h, n = self.spacing, self.n_cells
        if not self.is_radial:
            return np.ones(n), np.full(n - 1, 1.0 / h**2)
        faces = self.x[:-1] + 0.5 * h
        return self._volumes(), faces ** (self.N - 1) / h

    def to_dict(self) -> dict:
        return {"geometry": self.geometry, "x_min": self.x_min, "x_max": self.x_max, "n_cells": self.n_cells, "N": self.N}

    def refined(self, factor: int = 2) -> Grid:
        """Same box with the spacing divided by ``factor``."""
        return Grid(self.geometry, self.x_min, self.x_max, (self.n_cells - 1) * factor + 1, self.N)


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere in R^N (2 for N = 1)."""
    return 2.0 * math.pi ** (N / 2.0) / gamma(N / 2.0)


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class InitialData:
    """Descriptor of initial data; see the ``function``/``dirac``/... constructors."""

    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def function(cls, values) -> InitialData:
        return cls("function", {"values": values})

    @classmethod
    def dirac(cls, mass: float = 1.0, width: float | None = None, center: float = 0.0, ladder: Sequence[float] | None = None):
        """Mollified point mass; ``ladder`` lists increasing masses (overrides ``mass``)."""
        masses = tuple(float(m) for m in (ladder if ladder is not None else (mass,)))
        _check_ladder(masses, "mass")
        return cls("dirac", {"masses": masses, "width": width, "center": float(center)})

    @classmethod
    def indicator(cls, intervals, height: float) -> InitialData:
        if not height > 0:
            raise InvalidParameterError("indicator height must be positive")
        return cls("indicator", {"intervals": _intervals(intervals), "heights": (float(height),)})

    @classmethod
    def infinite_on(cls, intervals, ladder: Sequence[float]) -> InitialData:
        """u0 = ∞ on the set, realized by the truncations M_1 < M_2 < ..."""
        heights = tuple(float(m) for m in ladder)
        _check_ladder(heights, "truncation")
        return cls("infinite_on", {"intervals": _intervals(intervals), "heights": heights})

    @property
    def n_rungs(self) -> int:
        if self.kind == "dirac":
            return len(self.params["masses"])
        if self.kind in ("indicator", "infinite_on"):
            return len(self.params["heights"])
        return 1

    def describe(self) -> dict:
        out = {"kind": self.kind}
        for k, v in self.params.items():
            if k == "values":
                out[k] = "callable" if callable(v) else "array"
            else:
                out[k] = _jsonable(v)
        return out


def _check_ladder(values, what):
    if not values or any(not v > 0 for v in values):
        raise InvalidParameterError(f"{what} values must be positive")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InvalidParameterError(f"{what} ladder must be strictly increasing")


def _intervals(intervals):
    arr = np.atleast_2d(np.asarray(intervals, dtype=float))
    if arr.shape[1] != 2 or np.any(arr[:, 1] <= arr[:, 0]):
        raise InvalidParameterError("intervals must be (lo, hi) pairs with lo < hi")
    return tuple((float(a), float(b)) for a, b in arr)


def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else "-inf"
    return v


def build_initial(grid: Grid, spec: InitialData, rung: int = -1) -> np.ndarray:
    """Nodal initial values; for ladders, ``rung`` selects the truncation level."""
    x = grid.x
    h = grid.spacing
    if spec.kind == "function":
        vals = spec.params["values"]
        u0 = np.asarray(vals(x) if callable(vals) else vals, dtype=float)
        if u0.shape == ():
            u0 = np.full(grid.n_cells, float(u0))
        if u0.shape != x.shape:
            raise ConfigurationError(f"initial values have shape {u0.shape}, grid has {x.shape}")
        return u0.copy()
    if spec.kind == "dirac":
        width = spec.params["width"]
        width = 4.0 * h if width is None else float(width)
        if width < 2.0 * h * (1.0 - 1e-12):
            raise ResolutionError(f"mollifier width {width:g} is below two cells ({2 * h:g})")
        center = spec.params["center"]
        if grid.is_radial and center != 0.0:
            raise ConfigurationError("radial Dirac data must sit at r = 0")
        d = np.abs(x - center) / width
        bump = np.where(d < 1.0, np.cos(0.5 * math.pi * np.minimum(d, 1.0)) ** 2, 0.0)
        total = float(np.dot(grid.weights, bump))
        if total <= 0:
            raise ResolutionError("mollifier has no support on the grid")
        return spec.params["masses"][rung] / total * bump
    if spec.kind in ("indicator", "infinite_on"):
        height = spec.params["heights"][rung]
        ramp = np.zeros_like(x)
        for lo, hi in spec.params["intervals"]:
            # one-cell linear ramp centred on each finite edge
            inside = np.minimum(x - lo, hi - x) / h + 0.5
            ramp = np.maximum(ramp, np.clip(inside, 0.0, 1.0))
        return height * ramp
    raise InvalidParameterError(f"unknown initial-data kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# one step


def _one_sided(u, grid):
    h = grid.spacing
    d = np.diff(u) / h
    dm = np.empty_like(u)
    dp = np.empty_like(u)
    dm[1:] = d
    dp[:-1] = d
    dp[-1] = 0.0
    # radial symmetry u_{-1} = u_1; Cartesian left node is Dirichlet anyway
    dm[0] = -d[0] if grid.is_radial else 0.0
    return dm, dp


def gradient_magnitude(u, grid: Grid, scheme: str = "godunov") -> np.ndarray:
    """Discrete |∇u| used by the absorption term."""
    dm, dp = _one_sided(u, grid)
    if scheme == "godunov":
        return np.maximum(np.maximum(dm, 0.0), -np.minimum(dp, 0.0))
    if scheme == "osher_sethian":
        return np.hypot(np.maximum(dm, 0.0), np.minimum(dp, 0.0))
    if scheme == "central":
        return 0.5 * np.abs(dm + dp)
    raise InvalidParameterError(f"unknown scheme {scheme!r}")


def _monotone_factor(scheme: str) -> float:
    return math.sqrt(2.0) if scheme == "osher_sethian" else 1.0


def max_stable_dt(u, grid: Grid, q: float, scheme: str = "godunov", safety: float = 0.5) -> float:
    """Largest dt keeping the explicit absorption update monotone (∞ if unconstrained)."""
    if q <= 1.0:
        return math.inf  # the Hamiltonian is capped to a Lipschitz line, see _hamiltonian
    P = float(np.max(gradient_magnitude(u, grid, scheme)))
    if P == 0.0:
        return math.inf
    return safety * grid.spacing / (_monotone_factor(scheme) * q * P ** (q - 1.0))


def _hamiltonian(p, q, dt, h, safety, scheme):
    H = p**q
    if q < 1.0:
        # p^q has unbounded slope at 0; replace it below the crossover by the
        # line K p with K set by the monotonicity bound of this step
        K = safety * h / (_monotone_factor(scheme) * dt)
        H = np.minimum(H, K * p)
    return H


def _implicit_solve(grid: Grid, dt: float, theta: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (I - θ dt Δ) x = rhs on the non-Dirichlet nodes (Dirichlet values are 0).

    Scaled by the cell measures the matrix is symmetric positive definite, so
    LAPACK's pivot-free LDLᵀ (ptsv) applies; with negative off-diagonals every
    substitution adds same-signed terms, which keeps the solve order- and
    sign-preserving in floating point.
    """
    vol, cond = grid._finite_volume
    lo = 0 if grid.is_radial else 1
    hi = grid.n_cells - 1
    c = theta * dt * cond
    d = vol[lo:hi].copy()
    d += c[lo:hi]
    d[1:] += c[lo:hi - 1]
    if lo == 1:
        d[0] += c[0]
    e = -c[lo:hi - 1]
    out = np.zeros_like(rhs)
    _, _, x, info = _ptsv(d, e, vol[lo:hi] * rhs[lo:hi])
    if info != 0:
        raise RuntimeError(f"tridiagonal solve failed (info={info})")
    out[lo:hi] = x
    return out


def _laplacian(u, alpha, beta, grid):
    out = np.zeros_like(u)
    out[1:-1] = alpha[1:-1] * (u[2:] - u[1:-1]) - beta[1:-1] * (u[1:-1] - u[:-2])
    if grid.is_radial:
        out[0] = alpha[0] * (u[1] - u[0])
    return out


@dataclass
class StepLedger:
    absorbed: float = 0.0
    clamped: float = 0.0
    boundary: float = 0.0


def _advance(u, grid, dt, q, scheme, diffusion, absorption, signed, safety, check_cfl=True):
    h = grid.spacing
    w = grid._weights
    ledger = StepLedger()
    if absorption:
        if check_cfl and q > 1.0:
            limit = max_stable_dt(u, grid, q, scheme, safety=1.0)
            if dt > limit * (1.0 + 1e-12):
                raise ConfigurationError(f"dt={dt:.3e} exceeds the monotonicity bound {limit:.3e}")
        H = _hamiltonian(gradient_magnitude(u, grid, scheme), q, dt, h, safety, scheme)
        H[-1] = 0.0
        if not grid.is_radial:
            H[0] = 0.0
        ledger.absorbed = dt * float(np.dot(w, H))
        star = u - dt * H
    else:
        star = u.copy()
    theta = 1.0 if diffusion == "implicit" else 0.5
    rhs = star
    if theta != 1.0:
        alpha, beta = grid._coefficients
        rhs = star + (1.0 - theta) * dt * _laplacian(star, alpha, beta, grid)
    new = _implicit_solve(grid, dt, theta, rhs)
    ledger.boundary = float(np.dot(w, star)) - float(np.dot(w, new))
    if not signed:
        neg = new < 0.0
        if neg.any():
            ledger.clamped = -float(np.dot(w[neg], new[neg]))
            new[neg] = 0.0
    return new, ledger


def step(state, t: float, dt: float, q: float, scheme: str = "godunov", *, grid: Grid, diffusion: str = "implicit",
         absorption: bool = True, signed: bool = False, safety: float = 0.5) -> np.ndarray:
    """Advance nodal values by one step of size dt (the equation is autonomous; t is informational)."""
    _validate(q, scheme, diffusion, signed)
    u = np.asarray(state, dtype=float)
    if not np.all(np.isfinite(u)):
        raise DivergenceError("non-finite state passed to step", time=t)
    new, _ = _advance(u, grid, dt, q, scheme, diffusion, absorption, signed, safety)
    return new


def _validate(q, scheme, diffusion, signed):
    if not (math.isfinite(q) and q > 0):
        raise InvalidParameterError(f"q must be positive, got {q}")
    if scheme not in SCHEMES:
        raise InvalidParameterError(f"scheme must be one of {SCHEMES}")
    if diffusion not in DIFFUSION:
        raise InvalidParameterError(f"diffusion must be one of {DIFFUSION}")
    if signed and q > 1.0:
        raise InvalidParameterError("signed mode is only defined for 0 < q <= 1")


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    grid: Grid
    times: np.ndarray
    snapshots: np.ndarray
    q: float
    signed_mode: bool = False
    initial: np.ndarray | None = None
    mass: np.ndarray | None = None
    absorbed: np.ndarray | None = None
    clamped: np.ndarray | None = None
    boundary_loss: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)
    rungs: list = field(default_factory=list)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def initial_mass(self) -> float:
        return float(np.dot(self.grid.weights, self.initial))

    def index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[i], t, rel_tol=1e-9):
            raise KeyError(f"no snapshot at t={t}")
        return i

    def at(self, t: float) -> np.ndarray:
        return self.snapshots[self.index(t)]

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "grid": self.grid.to_dict(),
            "q": self.q,
            "signed_mode": self.signed_mode,
            "times": [float(t) for t in self.times],
            "ledger": {
                "mass": _list(self.mass),
                "absorbed": _list(self.absorbed),
                "clamped": _list(self.clamped),
                "boundary_loss": _list(self.boundary_loss),
            },
            **self.metadata,
        }
        (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        x = self.x
        if self.initial is not None:
            _write_csv(directory / "initial.csv", x, self.initial)
        for i, snap in enumerate(self.snapshots):
            _write_csv(directory / f"snap_{i:04d}.csv", x, snap)
        return directory

    @classmethod
    def load(cls, directory) -> Trajectory:
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text())
        grid = Grid(**meta.pop("grid"))
        times = np.asarray(meta.pop("times"), dtype=float)
        snaps = np.array([_read_csv(directory / f"snap_{i:04d}.csv") for i in range(times.size)])
        init = directory / "initial.csv"
        ledger = {k: (None if v is None else np.asarray(v, dtype=float)) for k, v in meta.pop("ledger").items()}
        return cls(
            grid=grid, times=times, snapshots=snaps, q=meta.pop("q"), signed_mode=meta.pop("signed_mode"),
            initial=_read_csv(init) if init.exists() else None, metadata=meta, **ledger,
        )


def _list(a):
    return None if a is None else [float(v) for v in a]


def _write_csv(path, x, u):
    with open(path, "w", newline="\n") as fh:
        fh.write("x,u\n")
        for xi, ui in zip(x, u):
            fh.write(f"{xi:.17g},{ui:.17g}\n")


def _read_csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)[:, 1]


def geometric_times(t_end: float, t_min: float = 1e-4, ratio: float = 1.3) -> np.ndarray:
    """t_min·ratio^j up to t_end, with t_end itself appended."""
    if not (0 < t_min <= t_end) or ratio <= 1:
        raise InvalidParameterError("need 0 < t_min <= t_end and ratio > 1")
    n = int(math.floor(math.log(t_end / t_min) / math.log(ratio) + 1e-9))
    ts = t_min * ratio ** np.arange(n + 1)
    if not math.isclose(ts[-1], t_end, rel_tol=1e-9):
        ts = np.append(ts, t_end)
    return ts


@dataclass(frozen=True)
class RunOptions:
    scheme: str = "godunov"
    diffusion: str = "implicit"
    absorption: bool = True
    signed: bool = False
    dt_rel: float = 0.05
    dt_max: float = math.inf
    safety: float = 0.5
    max_steps: int = 5_000_000

    def to_dict(self):
        return {k: _jsonable(v) for k, v in self.__dict__.items()}


def _dt_policy(t, t_first, t_next, opts, cfl):
    return min(opts.dt_rel * max(t, t_first), opts.dt_max, cfl, t_next - t)


def _evolve_many(grid, u0s, q, output_times, opts):
    """Step several states with a shared dt sequence; returns per-run arrays."""
    K = len(u0s)
    w = grid.weights
    us = [np.array(u, dtype=float) for u in u0s]
    acc = np.zeros((K, 3))  # absorbed, clamped, boundary loss
    for k, u in enumerate(us):
        # imposing the Dirichlet values at t = 0+ removes the boundary-node mass
        before = float(np.dot(w, u))
        u[-1] = 0.0
        if not grid.is_radial:
            u[0] = 0.0
        acc[k, 2] = before - float(np.dot(w, u))
    n_out = output_times.size
    snaps = np.empty((K, n_out, grid.n_cells))
    mass = np.empty((K, n_out))
    absorbed = np.zeros((K, n_out))
    clamped = np.zeros((K, n_out))
    boundary = np.zeros((K, n_out))
    t = 0.0
    steps = 0
    t_first = float(output_times[0])
    for j, t_out in enumerate(output_times):
        while t < t_out * (1.0 - 1e-13):
            cfl = math.inf
            if opts.absorption:
                cfl = min(max_stable_dt(u, grid, q, opts.scheme, opts.safety) for u in us)
            dt = _dt_policy(t, t_first, t_out, opts, cfl)
            if t + dt > t_out * (1.0 - 1e-13):
                dt = t_out - t
            for k in range(K):
                new, led = _advance(us[k], grid, dt, q, opts.scheme, opts.diffusion, opts.absorption, opts.signed,
                                    opts.safety, check_cfl=False)
                if not np.all(np.isfinite(new)):
                    raise DivergenceError(f"non-finite state at t={t + dt:.6g}", time=t + dt)
                us[k] = new
                acc[k] += (led.absorbed, led.clamped, led.boundary)
            t += dt
            steps += 1
            if steps > opts.max_steps:
                raise ConfigurationError(f"step cap {opts.max_steps} reached at t={t:.3e}")
        t = float(t_out)
        for k in range(K):
            snaps[k, j] = us[k]
            mass[k, j] = float(np.dot(w, us[k]))
            absorbed[k, j], clamped[k, j], boundary[k, j] = acc[k]
    return snaps, mass, absorbed, clamped, boundary, steps


def _prepare(grid, spec, q, t_end, output_times, t_min, ratio):
    if not (math.isfinite(q) and q > 0):
        raise InvalidParameterError(f"q must be positive, got {q}")
    if output_times is None:
        if t_end is None:
            raise InvalidParameterError("give t_end or output_times")
        output_times = geometric_times(t_end, t_min, ratio)
    ts = np.asarray(output_times, dtype=float)
    if ts.ndim != 1 or ts.size == 0 or ts[0] <= 0 or np.any(np.diff(ts) <= 0):
        raise InvalidParameterError("output_times must be positive and strictly increasing")
    return ts


def _metadata(grid, spec, q, opts, steps, ts):
    meta = {
        "scheme": opts.scheme,
        "diffusion": opts.diffusion,
        "boundary": "dirichlet",
        "dt_policy": {"dt_rel": opts.dt_rel, "dt_max": _jsonable(opts.dt_max), "safety": opts.safety, "t_first": float(ts[0])},
        "absorption": opts.absorption,
        "initial_data": spec.describe() if spec is not None else None,
        "steps": steps,
    }
    if q > 2.0 and opts.absorption:
        meta["experimental"] = True
    return meta


def _rungs(grid, spec, q, ts, opts, rungs):
    """Evolve the selected rungs with one shared dt sequence."""
    u0s = [build_initial(grid, spec, k) for k in rungs]
    if opts.signed is False and any(np.any(u0 < 0) for u0 in u0s):
        raise InvalidParameterError("nonnegative mode needs u0 >= 0; use signed_run for signed data")
    snaps, mass, ab, cl, bd, steps = _evolve_many(grid, u0s, q, ts, opts)
    return [
        Trajectory(grid=grid, times=ts, snapshots=snaps[j], q=q, signed_mode=opts.signed, initial=u0s[j],
                   mass=mass[j], absorbed=ab[j], clamped=cl[j], boundary_loss=bd[j],
                   metadata=_metadata(grid, spec, q, opts, steps, ts))
        for j in range(len(rungs))
    ]


def run(grid: Grid, spec: InitialData, q: float, t_end: float | None = None, output_times=None, *,
        t_min: float = 1e-4, ratio: float = 1.3, jobs: int = 1, lockstep: bool = True, **options) -> Trajectory:
    """Evolve from ``spec``; ladders (mass or truncation) run every rung.

    The returned trajectory is the top rung; lower rungs are attached as
    ``rungs`` and ``metadata["ladder_gaps"][k][j]`` is the sup-norm gap between
    rungs k and k+1 at output time j.  By default the rungs share one dt
    sequence, so they are ordered exactly; ``lockstep=False`` steps each rung
    on its own clock, in parallel when ``jobs > 1``.
    """
    opts = RunOptions(**options)
    _validate(q, opts.scheme, opts.diffusion, opts.signed)
    ts = _prepare(grid, spec, q, t_end, output_times, t_min, ratio)
    n = spec.n_rungs
    if lockstep or n == 1:
        trajs = _rungs(grid, spec, q, ts, opts, list(range(n)))
    elif jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, n)) as pool:
            trajs = [r[0] for r in pool.map(_rungs, *zip(*[(grid, spec, q, ts, opts, [k]) for k in range(n)]))]
    else:
        trajs = [_rungs(grid, spec, q, ts, opts, [k])[0] for k in range(n)]
    top = trajs[-1]
    if n > 1:
        gaps = [np.max(np.abs(b.snapshots - a.snapshots), axis=1).tolist() for a, b in zip(trajs, trajs[1:])]
        top.metadata["ladder_gaps"] = gaps
        top.metadata["ladder"] = list(spec.params.get("heights", spec.params.get("masses", ())))
        top.metadata["ladder_lockstep"] = bool(lockstep)
        top.rungs = trajs[:-1]
    return top


def run_lockstep(grid: Grid, specs: Sequence[InitialData], q: float, t_end: float | None = None, output_times=None, *,
                 t_min: float = 1e-4, ratio: float = 1.3, **options) -> list[Trajectory]:
    """Evolve several data with one shared dt sequence (top rungs only).

    The stable step is the minimum over the runs, so step-by-step the same
    monotone map is applied to every state and comparison holds exactly.
    """
    opts = RunOptions(**options)
    _validate(q, opts.scheme, opts.diffusion, opts.signed)
    ts = _prepare(grid, specs[0], q, t_end, output_times, t_min, ratio)
    u0s = [build_initial(grid, s) for s in specs]
    if not opts.signed and any(np.any(u < 0) for u in u0s):
        raise InvalidParameterError("nonnegative mode needs u0 >= 0")
    snaps, mass, ab, cl, bd, steps = _evolve_many(grid, u0s, q, ts, opts)
    return [
        Trajectory(grid=grid, times=ts, snapshots=snaps[k], q=q, signed_mode=opts.signed, initial=u0s[k],
                   mass=mass[k], absorbed=ab[k], clamped=cl[k], boundary_loss=bd[k],
                   metadata=_metadata(grid, s, q, opts, steps, ts))
        for k, s in enumerate(specs)
    ]


def signed_run(grid: Grid, spec: InitialData, q: float, t_end: float | None = None, output_times=None, **kw) -> Trajectory:
    """Evolution without positivity clamping, for 0 < q <= 1."""
    if not 0 < q <= 1.0:
        raise InvalidParameterError("signed_run requires 0 < q <= 1")
    return run(grid, spec, q, t_end, output_times, signed=True, **kw)


def heat_run(grid: Grid, spec: InitialData, t_end: float | None = None, output_times=None, **kw) -> Trajectory:
    """Reference path: the same discretization with the absorption switched off."""
    return run(grid, spec, 1.0, t_end, output_times, absorption=False, signed=True, **kw)


# ---------------------------------------------------------------------------
# q = 2 oracle


def cole_hopf_reference(grid: Grid, u0_values, t: float, window: tuple[float, float] | None = None,
                        images: int = 2) -> np.ndarray:
    """-ln v(·, t) where v solves the heat equation from e^{-u0}, by kernel quadrature.

    Dirichlet u = 0 means v = 1 on the boundary, so v - 1 is continued oddly
    across both ends (method of images) on an interval.  In radial geometry
    the N-dimensional radial heat kernel is used and the outer boundary is
    ignored; a ``BoundaryLayerWarning`` flags windows within 4√t of it.
    """
    if t <= 0:
        raise InvalidParameterError("t must be positive")
    u0 = np.asarray(u0_values, dtype=float)
    if u0.shape != (grid.n_cells,):
        raise ConfigurationError("u0 must be sampled on the grid")
    if np.min(u0) < -700:
        raise InvalidParameterError("u0 must be bounded below")
    x = grid.x
    w = grid.weights
    dv = np.exp(-u0) - 1.0
    reach = 4.0 * math.sqrt(t)
    lo, hi = window if window is not None else (grid.x_min, grid.x_max)
    if (not grid.is_radial and lo - grid.x_min < reach) or grid.x_max - hi < reach:
        warnings.warn(f"comparison window within 4*sqrt(t)={reach:.3g} of the boundary", BoundaryLayerWarning, stacklevel=2)
    out = np.empty_like(x)
    chunk = max(1, 4_000_000 // x.size)
    if not grid.is_radial:
        L = grid.x_max - grid.x_min
        a = grid.x_min
        for s in range(0, x.size, chunk):
            xs = x[s:s + chunk, None]
            acc = np.zeros(xs.shape[0])
            for m in range(-images, images + 1):
                shift = 2.0 * m * L
                for sign, ys in ((1.0, x + shift), (-1.0, 2 * a - x + shift)):
                    gap = max(0.0, ys.min() - grid.x_max, grid.x_min - ys.max())
                    if gap**2 / (4 * t) > 745.0:
                        continue  # image contributes below the smallest double
                    acc += sign * (np.exp(-((xs - ys[None, :]) ** 2) / (4 * t)) @ (w * dv))
            out[s:s + chunk] = acc / math.sqrt(4 * math.pi * t)
    else:
        # K(r, s) ds = (w_s / |S^{N-1}|) k(r, s) with
        # k = (rs)^{-nu} I_nu(rs/2t) e^{-(r^2+s^2)/4t} / (2t), nu = N/2 - 1
        N = grid.N
        nu = N / 2.0 - 1.0
        r = x
        src = w * dv / sphere_area(N)
        for s in range(0, x.size, chunk):
            rs = r[s:s + chunk, None] * r[None, :]
            gauss = np.exp(-((r[s:s + chunk, None] - r[None, :]) ** 2) / (4 * t)) / (2 * t)
            with np.errstate(divide="ignore", invalid="ignore"):
                kern = np.where(rs > 0, np.power(np.where(rs > 0, rs, 1.0), -nu) * ive(nu, rs / (2 * t)),
                                (4 * t) ** (-nu) / gamma(N / 2.0))
            out[s:s + chunk] = (kern * gauss) @ src
    v = 1.0 + out
    if np.any(v <= 0):
        raise ConfigurationError("Cole-Hopf reference lost positivity; refine the quadrature grid")
    return -np.log(v)
