"""Self-similar profiles by ODE shooting.

Three families are computed:

* ``halfspace``: f on the whole line solving f'' + (η/2) f' + (a/2) f - |f'|^q = 0,
  Gaussian decay at -∞ and f ~ c_q η^{q'} at +∞ (profile of the solution with
  trace ([0, ∞), 0));
* ``vss``: the radial very singular profile F(0) = β*, F'(0) = 0 with Gaussian tail,
  for 1 < q < q*;
* ``u_beta``: radial profiles F(0) = β with the algebraic tail C(β) η^{-a}.

The half-space shoot bisects on the left-tail amplitude.  Forward integration
amplifies any error in that amplitude like e^{η²/4}, so the forward branch is
only kept up to a matching point; beyond it the profile is continued by
integrating leftward from the far field (where the same mode is damped) and
matching f.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.integrate import ode
from scipy.optimize import brentq

from .errors import BracketError, ClassificationError, ConvergenceError, DomainError, InvalidParameterError, RegimeError
from .scaling import ScalingParams

UNDERSHOOT = "undershoot"
OVERSHOOT = "overshoot"
FAST = "fast"
SLOW = "slow"
UNDECIDED = "undecided"

_ENVELOPE_SLACK = 0.10
_GROWTH_FLOOR = 0.9
_MATCH_AGREEMENT = 1e-10
_TAIL_PAD = 5.0
_RUNAWAY = 1e12
_INWARD_STEP = 0.25
_K_STEP = 0.0125
_RADIAL_RESIDUAL_FROM = 0.1
_COMPILED = {"DOP853": "dop853", "RK45": "dopri5"}


@dataclass(frozen=True)
class ShootingConfig:
    eta_min: float = -8.0
    eta_max: float = 40.0
    rtol: float = 1e-12
    atol: float = 1e-300
    bracket: tuple[float, float] | None = None
    max_bisections: int = 200
    classification_window: tuple[float, float] | None = None
    grid_step: float = 0.01
    method: str = "DOP853"

    def __post_init__(self):
        if not self.eta_min < 0.0 < self.eta_max:
            raise InvalidParameterError("ShootingConfig needs eta_min < 0 < eta_max")
        if self.rtol <= 0 or self.atol <= 0 or self.grid_step <= 0:
            raise InvalidParameterError("tolerances and grid_step must be positive")
        if self.method not in _COMPILED:
            raise InvalidParameterError(f"method must be one of {sorted(_COMPILED)}")
        if self.bracket is not None and not 0 < self.bracket[0] < self.bracket[1]:
            raise InvalidParameterError("bracket must satisfy 0 < lo < hi")

    def refined(self, factor: float = 0.5) -> ShootingConfig:
        return replace(self, rtol=self.rtol * factor)


@dataclass(frozen=True)
class Profile:
    q: float
    N: int
    kind: str
    eta_grid: np.ndarray
    f_values: np.ndarray
    g_values: np.ndarray
    shooting_parameter: float
    tail_constant: float
    growth_constant: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def f0(self) -> float:
        """Profile value at η = 0."""
        return float(np.interp(0.0, self.eta_grid, self.f_values))

    @property
    def residual_tol(self) -> float:
        return float(self.metadata.get("residual_tol", math.nan))

    def __call__(self, eta):
        return np.interp(eta, self.eta_grid, self.f_values)

    def derivative(self, eta):
        return np.interp(eta, self.eta_grid, self.g_values)

    def meta_dict(self) -> dict:
        return {
            "q": self.q,
            "N": self.N,
            "kind": self.kind,
            "shooting_parameter": self.shooting_parameter,
            "tail_constant": self.tail_constant,
            "growth_constant": self.growth_constant,
            "residual_tol": self.residual_tol,
            **{k: v for k, v in self.metadata.items() if k != "residual_tol"},
        }


# ---------------------------------------------------------------------------
# right-hand sides


def profile_rhs(p: ScalingParams, eta: float, f: float, g: float) -> tuple[float, float]:
    """First-order form of f'' + (η/2) f' + (a/2) f - |f'|^q = 0."""
    if not all(math.isfinite(v) for v in (eta, f, g)):
        raise InvalidParameterError("profile_rhs requires finite inputs")
    return g, -0.5 * eta * g - 0.5 * p.a * f + abs(g) ** p.q


def radial_profile_rhs(p: ScalingParams, r: float, F: float, G: float) -> tuple[float, float]:
    """Radial profile ODE F'' + ((N-1)/r + r/2) F' + (a/2) F - |F'|^q = 0.

    At r = 0 the removable singularity gives N F''(0) = -(a/2) F(0) + |G|^q.
    """
    if r < 0:
        raise DomainError(f"radial_profile_rhs requires r >= 0, got {r}")
    if not all(math.isfinite(v) for v in (r, F, G)):
        raise InvalidParameterError("radial_profile_rhs requires finite inputs")
    if r == 0.0:
        return G, (-0.5 * p.a * F + abs(G) ** p.q) / p.N
    return G, -((p.N - 1) / r + 0.5 * r) * G - 0.5 * p.a * F + abs(G) ** p.q


def _line_fun(a: float, q: float):
    half_a = 0.5 * a

    def fun(eta, y):
        f, g = y.tolist()
        return [g, -0.5 * eta * g - half_a * f + abs(g) ** q]

    return fun


def _radial_fun(a: float, q: float, N: int):
    half_a = 0.5 * a
    n1 = N - 1.0

    def fun(r, y):
        F, G = y.tolist()
        return [G, -(n1 / r + 0.5 * r) * G - half_a * F + abs(G) ** q]

    return fun


# ---------------------------------------------------------------------------
# diagnostics


def _fd4(y, h):
    d = np.full_like(y, np.nan)
    d[2:-2] = (-y[4:] + 8.0 * y[3:-1] - 8.0 * y[1:-3] + y[:-4]) / (12.0 * h)
    return d


def ode_residual(eta, f, g, p: ScalingParams, radial: bool = False) -> np.ndarray:
    """Normalized nodal residual of the profile system on a uniform grid.

    Derivatives use fourth-order central differences; each equation is scaled
    by the magnitude of its terms so the residual is dimensionless.
    """
    eta = np.asarray(eta, dtype=float)
    h = eta[1] - eta[0]
    df = _fd4(f, h)
    dg = _fd4(g, h)
    drift = 0.5 * eta
    if radial:
        with np.errstate(divide="ignore", invalid="ignore"):
            drift = drift + (p.N - 1) / eta
    rhs = -drift * g - 0.5 * p.a * f + np.abs(g) ** p.q
    scale_g = 1.0 + np.abs(drift * g) + np.abs(0.5 * p.a * f) + np.abs(g) ** p.q
    res = np.maximum(np.abs(df - g) / (1.0 + np.abs(g)), np.abs(dg - rhs) / scale_g)
    return res[2:-2]


def _uniform_grid(lo, hi, step):
    n = int(round((hi - lo) / step)) + 1
    return np.linspace(lo, hi, n)


def _lsq(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(slope), float(intercept)


# ---------------------------------------------------------------------------
# half-space profile


def _g_vanishes(eta, y):
    return y[1]


def _g_runaway(eta, y):
    return abs(y[1]) - _RUNAWAY


_g_vanishes.terminal = True
_g_vanishes.direction = -1
_g_runaway.terminal = True
_STOPS = [_g_vanishes, _g_runaway]


def _left_seed(p: ScalingParams, log_c: float, eta0: float):
    e = p.a - 1.0
    f = math.exp(log_c - eta0 * eta0 / 4.0 + e * math.log(-eta0))
    g = f * (-0.5 * eta0 + e / eta0)
    return np.array([f, g])


_OPEN = 0
_LOW = 1
_HIGH = 2
_UNDECIDED_CODE = 3

_CODE_NAMES = {
    "half-space": {_LOW: UNDERSHOOT, _HIGH: OVERSHOOT, _UNDECIDED_CODE: UNDECIDED},
    "radial": {_LOW: FAST, _HIGH: SLOW, _UNDECIDED_CODE: UNDECIDED},
}


def _classify_run(fun, t0, t1, y0, judge, cfg):
    """Integrate one trajectory, stopping at the first step that ``judge`` decides.

    Uses the compiled Dormand-Prince driver so that the many shots of a
    bisection stay cheap.  Returns (code, t, y); code is ``_OPEN`` if the
    end of the interval was reached undecided, or ``None`` if the driver
    gave up (step-size underflow, typically a finite-η blow-up).
    """
    verdict = [_OPEN]

    def solout(t, y):
        c = judge(t, y[0], y[1])
        if c != _OPEN:
            verdict[0] = c
            return -1
        return 0

    integ = ode(lambda t, y: fun(t, y))
    integ.set_integrator(_COMPILED[cfg.method], rtol=cfg.rtol, atol=cfg.atol, nsteps=100000)
    integ.set_solout(solout)
    integ.set_initial_value(y0, t0)
    with np.errstate(over="ignore", invalid="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        integ.integrate(t1)
    if verdict[0] == _OPEN and not integ.successful():
        return None, integ.t, integ.y
    return verdict[0], integ.t, integ.y


def _bisect(classify, s_lo, s_hi, max_iter, what):
    """Bisection on a monotone two-outcome classifier of the log shooting parameter."""
    c_lo, c_hi = classify(s_lo), classify(s_hi)
    if c_lo == c_hi or _UNDECIDED_CODE in (c_lo, c_hi):
        raise BracketError(
            f"{what} bracket ({math.exp(s_lo):g}, {math.exp(s_hi):g}) classifies as "
            f"({_CODE_NAMES[what][c_lo]}, {_CODE_NAMES[what][c_hi]})"
        )
    for it in range(max_iter):
        mid = 0.5 * (s_lo + s_hi)
        if mid <= s_lo or mid >= s_hi:
            return s_lo, s_hi, it, c_lo
        c_mid = classify(mid)
        if c_mid == _UNDECIDED_CODE:
            return mid, mid, it + 1, c_lo
        if c_mid == c_lo:
            s_lo = mid
        else:
            s_hi = mid
    raise ConvergenceError(
        f"{what} bisection cap reached",
        {"bracket": (math.exp(s_lo), math.exp(s_hi)), "iterations": max_iter},
    )


class _HalfspaceShooter:
    def __init__(self, p: ScalingParams, cfg: ShootingConfig):
        self.p = p
        self.cfg = cfg
        self.fun = _line_fun(p.a, p.q)
        self.cq_root = p.c_q ** (1.0 / p.q_conj)
        self.calls = 0

    def _ivp(self, fun, span, y0, events=None, dense=False, max_step=np.inf):
        self.calls += 1
        return solve_ivp(
            fun, span, y0, method=self.cfg.method, rtol=self.cfg.rtol, atol=self.cfg.atol,
            events=events, dense_output=dense, max_step=max_step,
        )

    def classify_code(self, log_c: float) -> int:
        p, cfg = self.p, self.cfg
        qc, cq = p.q_conj, p.c_q
        self.calls += 1

        def judge_left(eta, f, g):
            if not abs(g) < _RUNAWAY:
                return _HIGH
            return _LOW if (g <= 0.0 or f <= 0.0) else _OPEN

        y0 = _left_seed(p, log_c, cfg.eta_min)
        code, eta, y = _classify_run(self.fun, cfg.eta_min, 0.0, y0, judge_left, cfg)
        if code is None:
            return _HIGH if y[1] > 0 else _LOW
        if code != _OPEN:
            return code
        ref = (1.0 + _ENVELOPE_SLACK) * y[0] ** (1.0 / qc)
        cq_root = self.cq_root

        def judge_right(eta, f, g):
            if not abs(g) < _RUNAWAY or max(f, 0.0) ** (1.0 / qc) - cq_root * eta > ref:
                return _HIGH
            if g <= 0.0 or f < _GROWTH_FLOOR * cq * eta**qc:
                return _LOW
            return _OPEN

        code, eta, y = _classify_run(self.fun, 0.0, cfg.eta_max, y.copy(), judge_right, cfg)
        if code is None:
            return _HIGH if y[1] > 0 else _LOW
        return _UNDECIDED_CODE if code == _OPEN else code

    def classify(self, log_c: float) -> str:
        return _CODE_NAMES["half-space"][self.classify_code(log_c)]

    def bisect(self):
        lo, hi = self.cfg.bracket or (1e-8, 1e8)
        s_lo, s_hi, it, c_lo = _bisect(
            self.classify_code, math.log(lo), math.log(hi), self.cfg.max_bisections, "half-space"
        )
        return s_lo, s_hi, it, _CODE_NAMES["half-space"][c_lo]

    def slow_slope(self, eta: float, f: float) -> float:
        """Largest root g of g^q - (η/2) g - (a/2) f = 0 (quasi-static far field)."""
        q, a = self.p.q, self.p.a

        def phi(g):
            return g**q - 0.5 * eta * g - 0.5 * a * f

        g_min = (eta / (2.0 * q)) ** (1.0 / (q - 1.0))
        if phi(g_min) >= 0.0:
            return g_min
        g_hi = 2.0 * g_min
        while phi(g_hi) <= 0.0:
            g_hi *= 2.0
        return brentq(phi, g_min, g_hi, xtol=1e-300, rtol=1e-15)

    def inward(self, eta_r: float, eta_m: float, f_r: float, dense=False):
        y0 = np.array([f_r, self.slow_slope(eta_r, f_r)])
        return self._ivp(self.fun, (eta_r, eta_m), y0, dense=dense, max_step=_INWARD_STEP)

    def inward_endpoint(self, eta_r: float, eta_m: float, f_r: float):
        """State at eta_m of the inward shot, or None if the driver fails."""
        self.calls += 1
        y0 = np.array([f_r, self.slow_slope(eta_r, f_r)])
        integ = ode(self.fun)
        integ.set_integrator(
            _COMPILED[self.cfg.method], rtol=self.cfg.rtol, atol=self.cfg.atol, nsteps=100000, max_step=_INWARD_STEP
        )
        integ.set_initial_value(y0, eta_r)
        with np.errstate(over="ignore", invalid="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            y = integ.integrate(eta_m)
        return y if integ.successful() else None


def _fit_growth(eta, f, q_conj):
    """Least-squares estimate of lim η^{-q'} f.

    The approach to the limit is resonant, η^{-q'} f = c (1 + K ln η / η² + ...),
    so c is fitted together with ln η / η² and 1/η² terms.  Returns
    (c, K, raw value of η^{-q'} f at the window end).
    """
    if eta.size < 4:
        return None, None, None
    H = f / eta**q_conj
    A = np.vstack([np.ones_like(eta), np.log(eta) / eta**2, 1.0 / eta**2]).T
    coef, *_ = np.linalg.lstsq(A, H, rcond=None)
    c = float(coef[0])
    return c, float(coef[1] / c), float(H[-1])


def solve_halfspace_profile(p: ScalingParams, cfg: ShootingConfig | None = None) -> Profile:
    """Shoot the half-space profile (trace ([0, ∞), 0) in one dimension)."""
    if not p.superlinear:
        raise RegimeError("the half-space profile requires q > 1")
    cfg = cfg or ShootingConfig()
    shooter = _HalfspaceShooter(p, cfg)
    s_lo, s_hi, iterations, lo_outcome = shooter.bisect()
    s_star = 0.5 * (s_lo + s_hi)

    # forward branch: keep it where the two bracketing shots are indistinguishable
    probe_end = min(10.0, cfg.eta_max)
    shots = [
        shooter._ivp(shooter.fun, (cfg.eta_min, probe_end), _left_seed(p, s, cfg.eta_min), events=_STOPS, dense=True)
        for s in (s_lo, s_hi, s_star)
    ]
    probe_end = min(probe_end, *(sh.t[-1] for sh in shots))
    probe = _uniform_grid(0.0, probe_end, 0.05)
    ya, yb = shots[0].sol(probe), shots[1].sol(probe)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.max(np.abs(ya - yb) / (np.abs(ya) + np.abs(yb) + 1e-300), axis=0)
    bad = np.nonzero(~(rel <= _MATCH_AGREEMENT))[0]
    eta_sep = probe[bad[0]] if bad.size else probe_end
    eta_m = float(min(max(eta_sep - 1.0, 2.0), 8.0))
    forward = shots[2]
    f_m, g_m = forward.sol(eta_m)

    # backward branch from the far field, matched on f at eta_m
    eta_r = cfg.eta_max + _TAIL_PAD
    base = p.c_q * eta_r**p.q_conj

    def mismatch(k):
        y = shooter.inward_endpoint(eta_r, eta_m, k * base)
        return math.nan if y is None else y[0] / f_m - 1.0

    # far-field amplitudes too far from c_q break the inward shot (on which
    # side depends on the sign of a): walk away from 1 until the sign flips
    k_lo = k_hi = None
    k0, v0 = 1.0, mismatch(1.0)
    v1 = v0
    for j in range(1, 40):
        if math.isfinite(v0):
            break
        for k in (1.0 + _K_STEP * j, 1.0 - _K_STEP * j):
            k0, v0 = k, mismatch(k)
            if math.isfinite(v0):
                break
    if math.isfinite(v0):
        direction = -1.0 if v0 > 0 else 1.0
        k_prev, v_prev = k0, v0
        for j in range(1, 80):
            k = k0 + direction * _K_STEP * j
            v = mismatch(k)
            if not math.isfinite(v) or k <= 0:
                break
            if v * v_prev <= 0.0:
                k_lo, k_hi = sorted((k_prev, k))
                break
            k_prev, v_prev = k, v
    if k_lo is None:
        raise ConvergenceError("could not bracket the far-field amplitude", {"eta_match": eta_m, "mismatch_at_1": v1})
    k_star = brentq(mismatch, k_lo, k_hi, xtol=1e-300, rtol=1e-15)
    backward = shooter.inward(eta_r, eta_m, k_star * base, dense=True)
    g_join = backward.sol(eta_m)[1]

    eta = _uniform_grid(cfg.eta_min, cfg.eta_max, cfg.grid_step)
    left = eta <= eta_m
    y = np.empty((2, eta.size))
    y[:, left] = forward.sol(eta[left])
    y[:, ~left] = backward.sol(eta[~left])
    f, g = y

    window = cfg.classification_window or (20.0, min(30.0, cfg.eta_max))
    w = (eta >= window[0]) & (eta <= window[1])
    growth, log_coef, raw = _fit_growth(eta[w], f[w], p.q_conj)
    res = ode_residual(eta, f, g, p)
    metadata = {
        "residual_tol": float(np.nanmax(res)),
        "eta_match": eta_m,
        "match_defect_g": float(abs(g_join - g_m) / (1.0 + abs(g_m))),
        "far_field_ratio": float(k_star),
        "growth_ratio_raw": raw,
        "log_correction": log_coef,
        "bisections": iterations,
        "ivp_calls": shooter.calls,
        "classification_window": list(window),
        "bracket_log_width": float(s_hi - s_lo),
        "lower_outcome": lo_outcome,
    }
    return Profile(
        q=p.q, N=1, kind="halfspace", eta_grid=eta, f_values=f, g_values=g,
        shooting_parameter=math.exp(s_star), tail_constant=math.exp(s_star),
        growth_constant=growth, metadata=metadata,
    )


# ---------------------------------------------------------------------------
# radial profiles


class _RadialShooter:
    def __init__(self, p: ScalingParams, cfg: ShootingConfig, eps: float = 1e-4):
        self.p = p
        self.cfg = cfg
        self.eps = eps
        self.fun = _radial_fun(p.a, p.q, p.N)
        a, N = p.a, p.N
        # separatrix log-slope -η²/2 + (a - N) is below -2a past this point
        self.eta_c = math.sqrt(max(2.0 * (3.0 * a - N + 1.0), 1.0))
        self.calls = 0

    def seed(self, beta: float):
        f2 = -self.p.a * beta / (2.0 * self.p.N)
        e = self.eps
        return np.array([beta + 0.5 * f2 * e * e, f2 * e])

    def _ivp(self, beta, end, events=None, dense=False):
        self.calls += 1
        return solve_ivp(
            self.fun, (self.eps, end), self.seed(beta), method=self.cfg.method,
            rtol=self.cfg.rtol, atol=self.cfg.atol, events=events, dense_output=dense,
        )

    def classify_code(self, log_beta: float) -> int:
        a, eta_c = self.p.a, self.eta_c
        self.calls += 1

        def judge(r, F, G):
            if F <= 0.0:
                return _LOW
            if r >= eta_c and r * G / F >= -2.0 * a:
                return _HIGH
            return _OPEN

        code, r, y = _classify_run(self.fun, self.eps, self.cfg.eta_max, self.seed(math.exp(log_beta)), judge, self.cfg)
        if code is None or code == _OPEN:
            return _UNDECIDED_CODE
        return code

    def classify(self, beta: float) -> str:
        return _CODE_NAMES["radial"][self.classify_code(math.log(beta))]

    def bisect(self):
        lo, hi = self.cfg.bracket or (1e-4, 1e4)
        s_lo, s_hi, it, c_lo = _bisect(
            self.classify_code, math.log(lo), math.log(hi), self.cfg.max_bisections, "radial"
        )
        return s_lo, s_hi, it, _CODE_NAMES["radial"][c_lo]


def _radial_residual(eta, F, G, p):
    # |F'|^q ~ r^q is only C^q at the origin, which a fourth-order stencil
    # would report as residual; measure away from it
    keep = eta >= _RADIAL_RESIDUAL_FROM - 2.0 * (eta[1] - eta[0])
    return ode_residual(eta[keep], F[keep], G[keep], p, radial=True)


def _radial_profile_arrays(shooter, sol, end, step):
    eta = _uniform_grid(0.0, end, step)
    y = np.empty((2, eta.size))
    inner = eta < shooter.eps
    y[:, ~inner] = sol.sol(eta[~inner])
    beta = sol.y[0, 0] - 0.5 * (sol.y[1, 0] / shooter.eps) * shooter.eps**2
    f2 = sol.y[1, 0] / shooter.eps
    y[0, inner] = beta + 0.5 * f2 * eta[inner] ** 2
    y[1, inner] = f2 * eta[inner]
    return eta, y[0], y[1]


def solve_vss_profile(p: ScalingParams, cfg: ShootingConfig | None = None) -> Profile:
    """Very singular profile F: F'(0) = 0 and Gaussian tail, bisecting on β = F(0)."""
    if not p.superlinear or p.q >= p.q_star:
        raise RegimeError(f"V.S.S. exists only for 1<q<q* (q={p.q}, q*={p.q_star})")
    cfg = cfg or ShootingConfig(eta_max=20.0)
    shooter = _RadialShooter(p, cfg)
    s_lo, s_hi, iterations, lo_outcome = shooter.bisect()
    beta = math.exp(0.5 * (s_lo + s_hi))
    end = cfg.eta_max
    sols = [shooter._ivp(math.exp(s), end, dense=True) for s in (s_lo, s_hi)]
    mid = shooter._ivp(beta, end, dense=True)
    t_end = min(s.t[-1] for s in sols + [mid])
    probe = _uniform_grid(shooter.eps, t_end, 0.01)
    ya, yb = sols[0].sol(probe)[0], sols[1].sol(probe)[0]
    ym = mid.sol(probe)[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.abs(ya - yb) / np.abs(ym)
    bad = np.nonzero(~((rel <= 1e-6) & (ym > 0)))[0]
    eta_valid = float(probe[bad[0]] if bad.size else t_end)
    eta_valid = math.floor(0.98 * eta_valid / cfg.grid_step) * cfg.grid_step
    if eta_valid <= shooter.eta_c:
        raise ConvergenceError("V.S.S. shot lost the separatrix too early", {"eta_valid": eta_valid})
    eta, F, G = _radial_profile_arrays(shooter, mid, eta_valid, cfg.grid_step)

    window = cfg.classification_window or (0.5 * eta_valid, eta_valid)
    w = (eta >= window[0]) & (eta <= window[1]) & (eta > 0)
    slope, intercept = _lsq(-eta[w] ** 2 / 4.0, np.log(F[w]) - (p.a - p.N) * np.log(eta[w]))
    res = _radial_residual(eta, F, G, p)
    metadata = {
        "residual_tol": float(np.nanmax(res)),
        "residual_from": _RADIAL_RESIDUAL_FROM,
        "gaussian_slope": slope,
        "eta_valid": eta_valid,
        "bisections": iterations,
        "ivp_calls": shooter.calls,
        "classification_window": [float(window[0]), float(window[1])],
        "lower_outcome": lo_outcome,
    }
    return Profile(
        q=p.q, N=p.N, kind="vss", eta_grid=eta, f_values=F, g_values=G,
        shooting_parameter=beta, tail_constant=math.exp(intercept), metadata=metadata,
    )


def solve_u_beta(p: ScalingParams, beta: float, cfg: ShootingConfig | None = None) -> Profile:
    """Radial profile with F(0) = β, F'(0) = 0 and algebraic tail C(β) η^{-a}."""
    if not p.superlinear or p.q >= 2.0:
        raise RegimeError(f"U_beta profiles are defined for 1<q<2 (q={p.q})")
    if not beta > 0:
        raise InvalidParameterError("beta must be positive (beta=0 is the zero equilibrium)")
    cfg = cfg or ShootingConfig(eta_max=40.0)
    shooter = _RadialShooter(p, cfg)
    outcome = shooter.classify(beta)
    if outcome != SLOW:
        raise ClassificationError(f"beta={beta} yields a {outcome} trajectory, not an algebraic tail")
    sol = shooter._ivp(beta, cfg.eta_max, dense=True)
    if sol.status != 0:
        raise ConvergenceError("U_beta integration failed", {"message": sol.message})
    eta, F, G = _radial_profile_arrays(shooter, sol, cfg.eta_max, cfg.grid_step)
    window = cfg.classification_window or (0.5 * cfg.eta_max, cfg.eta_max)
    w = (eta >= window[0]) & (eta <= window[1])
    slope, _ = _lsq(np.log(eta[w]), np.log(F[w]))
    c_beta = float(F[w][-1] * eta[w][-1] ** p.a)
    res = _radial_residual(eta, F, G, p)
    metadata = {
        "residual_tol": float(np.nanmax(res)),
        "residual_from": _RADIAL_RESIDUAL_FROM,
        "tail_slope": slope,
        "classification_window": [float(window[0]), float(window[1])],
    }
    return Profile(
        q=p.q, N=p.N, kind="u_beta", eta_grid=eta, f_values=F, g_values=G,
        shooting_parameter=float(beta), tail_constant=c_beta, metadata=metadata,
    )


# ---------------------------------------------------------------------------
# persistence


def save_profile(profile: Profile, stem) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (eta, f, g) and the ``<stem>.json`` sidecar."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path = stem.with_suffix(".csv")
    json_path = stem.with_suffix(".json")
    with open(csv_path, "w", newline="\n") as fh:
        fh.write("eta,f,g\n")
        for e, f, g in zip(profile.eta_grid, profile.f_values, profile.g_values):
            fh.write(f"{e:.17g},{f:.17g},{g:.17g}\n")
    with open(json_path, "w") as fh:
        json.dump(profile.meta_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def load_profile(stem) -> Profile:
    stem = Path(stem)
    data = np.loadtxt(stem.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
    meta = json.loads(stem.with_suffix(".json").read_text())
    core = {k: meta.pop(k) for k in ("q", "N", "kind", "shooting_parameter", "tail_constant", "growth_constant")}
    return Profile(eta_grid=data[:, 0], f_values=data[:, 1], g_values=data[:, 2], metadata=meta, **core)
