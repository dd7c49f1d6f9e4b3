"""Scalar constants and closed-form functions for u_t - Δu + |∇u|^q = 0.

Everything here is pure and cheap: the exponent bookkeeping (q', a, q*, c_q and
the barrier constant), a self-contained complementary error function, the
explicit q = 2 half-line profile and the compactly supported barrier
subsolution used for interior lower bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidParameterError, RegimeError

SQRT_PI = math.sqrt(math.pi)
LN2 = math.log(2.0)

_CF_SWITCH = 2.0
_CF_DEPTH = 140
_SERIES_TERMS = 60


def _undefined(name, q):
    raise RegimeError(f"{name} is undefined for q<=1 (q={q})")


@dataclass(frozen=True)
class ScalingParams:
    """All q-derived constants for dimension N.

    The q > 1 quantities are stored as optionals; reading one of them when
    q <= 1 raises :class:`RegimeError` instead of returning a silent zero.
    """

    q: float
    N: int
    q_star: float
    _q_conj: float | None = field(default=None, repr=False)
    _a: float | None = field(default=None, repr=False)
    _c_q: float | None = field(default=None, repr=False)
    _C_q_barrier: float | None = field(default=None, repr=False)

    @property
    def superlinear(self) -> bool:
        return self.q > 1.0

    @property
    def q_conj(self) -> float:
        if self._q_conj is None:
            _undefined("q_conj", self.q)
        return self._q_conj

    @property
    def a(self) -> float:
        if self._a is None:
            _undefined("a", self.q)
        return self._a

    @property
    def c_q(self) -> float:
        if self._c_q is None:
            _undefined("c_q", self.q)
        return self._c_q

    @property
    def C_q_barrier(self) -> float:
        if self._C_q_barrier is None:
            _undefined("C_q_barrier", self.q)
        return self._C_q_barrier

    @property
    def subcritical(self) -> bool:
        """True when 1 < q < q*, the range where Dirac data and the V.S.S. exist."""
        return 1.0 < self.q < self.q_star

    def to_dict(self) -> dict:
        out = {"q": self.q, "N": self.N, "q_star": self.q_star}
        if self.superlinear:
            out.update(q_conj=self.q_conj, a=self.a, c_q=self.c_q, C_q_barrier=self.C_q_barrier)
        return out


def c_q_direct(q: float) -> float:
    """c_q = (q')^{-q'} (1/(q-1))^{1/(q-1)} with plain powers.

    Folding (q-1)^{q'} out of (q')^{-q'} leaves (q-1) q^{-q'}, which avoids the
    overflow/underflow pair of the literal product as q -> 1.
    """
    qc = q / (q - 1.0)
    return (q - 1.0) * q ** (-qc)


def c_q_log(q: float) -> float:
    """Same constant through logarithms; used as a cross-check for extreme q."""
    qc = q / (q - 1.0)
    return math.exp(-qc * math.log(qc) - math.log(q - 1.0) / (q - 1.0))


def scaling_params(q: float, N: int = 1) -> ScalingParams:
    q = float(q)
    if not math.isfinite(q) or q <= 0.0:
        raise InvalidParameterError(f"q must be a positive finite number, got {q}")
    if int(N) != N or N < 1:
        raise InvalidParameterError(f"N must be a positive integer, got {N}")
    N = int(N)
    q_star = (N + 2.0) / (N + 1.0)
    if q <= 1.0:
        return ScalingParams(q=q, N=N, q_star=q_star)
    qc = q / (q - 1.0)
    a = (2.0 - q) / (q - 1.0)
    M = qc * (1.0 + qc)
    C_bar = (M**q * (q - 1.0)) ** (-1.0 / (q - 1.0))
    return ScalingParams(q=q, N=N, q_star=q_star, _q_conj=qc, _a=a, _c_q=c_q_direct(q), _C_q_barrier=C_bar)


# ---------------------------------------------------------------------------
# complementary error function


def _check_finite(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError("erfc family requires finite input")
    return arr


def _erf_series(x):
    # erf(x) = 2/sqrt(pi) e^{-x^2} sum_n 2^n x^{2n+1} / (2n+1)!!  (positive terms)
    x2 = 2.0 * x * x
    term = x.copy()
    total = x.copy()
    for n in range(1, _SERIES_TERMS):
        term = term * x2 / (2 * n + 1)
        total = total + term
    return 2.0 / SQRT_PI * np.exp(-x * x) * total


def _cf_kernel(x):
    """K(x) with erfc(x) = e^{-x^2} K(x) / sqrt(pi), for x >= 2 (Laplace continued fraction)."""
    t = x.copy()
    for k in range(_CF_DEPTH, 0, -1):
        t = x + (0.5 * k) / t
    return 1.0 / t


def _positive_erfc(x):
    """erfc on x >= 0."""
    out = np.empty_like(x)
    small = x < _CF_SWITCH
    if np.any(small):
        out[small] = 1.0 - _erf_series(x[small])
    if np.any(~small):
        xl = x[~small]
        out[~small] = np.exp(-xl * xl) * _cf_kernel(xl) / SQRT_PI
    return out


def _wrap(arr, scalar):
    return float(arr) if scalar else arr


def erfc(x):
    """Complementary error function, 2/sqrt(pi) ∫_x^∞ e^{-s^2} ds.

    Power series below |x| = 2, Laplace continued fraction above; negative
    arguments use erfc(x) = 2 - erfc(-x).
    """
    arr = _check_finite(x)
    scalar = arr.ndim == 0
    xa = np.atleast_1d(arr).astype(float)
    out = _positive_erfc(np.abs(xa))
    neg = xa < 0
    out[neg] = 2.0 - out[neg]
    return _wrap(out.reshape(arr.shape), scalar)


def erfcx(x):
    """Scaled complementary error function e^{x^2} erfc(x); finite for all x > -26."""
    arr = _check_finite(x)
    scalar = arr.ndim == 0
    xa = np.atleast_1d(arr).astype(float)
    out = np.empty_like(xa)
    big = xa >= _CF_SWITCH
    out[big] = _cf_kernel(xa[big]) / SQRT_PI
    rest = ~big
    with np.errstate(over="ignore"):
        out[rest] = np.exp(xa[rest] ** 2) * erfc(xa[rest])
    return _wrap(out.reshape(arr.shape), scalar)


def log_erfc(x):
    """log erfc(x) without underflow for large positive x."""
    arr = _check_finite(x)
    scalar = arr.ndim == 0
    xa = np.atleast_1d(arr).astype(float)
    out = np.empty_like(xa)
    big = xa >= _CF_SWITCH
    xb = xa[big]
    out[big] = -xb * xb + np.log(_cf_kernel(xb) / SQRT_PI)
    out[~big] = np.log(erfc(xa[~big]))
    return _wrap(out.reshape(arr.shape), scalar)


# ---------------------------------------------------------------------------
# explicit q = 2 half-line profile


def closed_form_q2(eta):
    """f(η) = -ln(erfc(η/2)/2), the q = 2 half-line profile (f(0) = ln 2).

    For η < 0 the form -log1p(-erfc(|η|/2)/2) keeps full relative accuracy in
    the Gaussian left tail.
    """
    x = np.asarray(eta, dtype=float) / 2.0
    xa = np.atleast_1d(x)
    out = np.empty_like(xa)
    neg = xa < 0
    out[~neg] = LN2 - np.atleast_1d(log_erfc(xa[~neg]))
    out[neg] = -np.log1p(-0.5 * np.atleast_1d(erfc(-xa[neg])))
    return float(out[0]) if x.ndim == 0 else out.reshape(x.shape)


def closed_form_q2_derivatives(eta):
    """Return (f, f', f'') of the q = 2 profile by analytic differentiation.

    With x = η/2: f' = e^{-x^2} / (sqrt(pi) erfc(x)) and f'' = f'(f' - η/2).
    """
    eta = np.asarray(eta, dtype=float)
    x = eta / 2.0
    f = closed_form_q2(eta)
    g = np.empty_like(np.atleast_1d(x))
    xa = np.atleast_1d(x)
    pos = xa >= 0
    g[pos] = 1.0 / (SQRT_PI * np.atleast_1d(erfcx(xa[pos])))
    g[~pos] = np.exp(-xa[~pos] ** 2) / (SQRT_PI * np.atleast_1d(erfc(xa[~pos])))
    g = g.reshape(eta.shape)
    gp = g * (g - eta / 2.0)
    if eta.ndim == 0:
        return float(f), float(g), float(gp)
    return f, g, gp


# ---------------------------------------------------------------------------
# barrier subsolution


def psi(t, h: float, q: float):
    """ψ(t) = (1 - e^{-h(q-1)t})^{-1/(q-1)}: decreasing from ∞ at 0+ to 1 at ∞."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("psi requires t > 0")
    val = (-np.expm1(-h * (q - 1.0) * t)) ** (-1.0 / (q - 1.0))
    return float(val) if val.ndim == 0 else val


def barrier_profile(r, q: float):
    """Spatial factor (1 + q' r)(1 - r)^{q'} on [0, 1], extended by zero."""
    qc = q / (q - 1.0)
    r = np.asarray(r, dtype=float)
    inside = np.clip(1.0 - r, 0.0, None)
    val = np.where(r < 1.0, (1.0 + qc * r) * inside**qc, 0.0)
    return float(val) if val.ndim == 0 else val


def barrier_profile_derivative(r, q: float):
    """f'(r) = -M r (1 - r)^{q'-1} with M = q'(1 + q')."""
    qc = q / (q - 1.0)
    M = qc * (1.0 + qc)
    r = np.asarray(r, dtype=float)
    val = np.where(r < 1.0, -M * r * np.clip(1.0 - r, 0.0, None) ** (qc - 1.0), 0.0)
    return float(val) if val.ndim == 0 else val


def default_barrier_rates(p: ScalingParams) -> tuple[float, float]:
    """(h, λ) = (M^q, max(N M, (q-1) M^q)) with M = q'(1+q')."""
    qc = p.q_conj
    M = qc * (1.0 + qc)
    return M**p.q, max(p.N * M, (p.q - 1.0) * M**p.q)


@dataclass(frozen=True)
class Barrier:
    h: float
    lam: float
    radius: float = 1.0
    center: tuple[float, ...] = (0.0,)

    @classmethod
    def default(cls, p: ScalingParams, radius: float = 1.0, center=0.0) -> Barrier:
        h, lam = default_barrier_rates(p)
        return cls(h=h, lam=lam, radius=float(radius), center=tuple(np.atleast_1d(center).astype(float)))


def barrier_subsolution(b: Barrier, p: ScalingParams, x, t: float):
    """ρ^{-a} e^{-λ t/ρ^2} ψ(t/ρ^2) f(|x - x0|/ρ); zero outside B(x0, ρ).

    ``x`` is a point (scalar in 1D) or an array of points with trailing
    dimension len(center).
    """
    if t <= 0:
        raise DomainError(f"barrier_subsolution requires t > 0, got {t}")
    q = p.q
    rho = b.radius
    x = np.asarray(x, dtype=float)
    c = np.asarray(b.center, dtype=float)
    if c.size == 1:
        r = np.abs(x - c[0])
    else:
        r = np.linalg.norm(x - c, axis=-1)
    s = t / rho**2
    val = rho ** (-p.a) * math.exp(-b.lam * s) * psi(s, b.h, q) * barrier_profile(r / rho, q)
    return float(val) if np.ndim(val) == 0 else val
