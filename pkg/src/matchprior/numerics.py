"""Small numerical kernels: adaptive ODE integration, Simpson quadrature,
bracketing root finding, central differences and the standard normal.

Everything here works on plain Python floats; callers that need speed go
through :mod:`matchprior.kernels` instead.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (
    NoSignChange,
    NonFiniteIntegrand,
    NonFiniteRhs,
    NonFiniteValue,
    StepSizeUnderflow,
)

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10
DEFAULT_PANELS = 128

_EPS = np.finfo(float).eps
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = (
    9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_UNDERFLOW = 1e-14


@dataclass(frozen=True)
class OdeTrajectory:
    """Accepted steps of a scalar ODE solve with cubic Hermite dense output.

    ``grid`` runs in the integration direction, so it is decreasing for a
    backward solve. ``slopes`` holds dy/ds at each node.
    """

    grid: np.ndarray
    states: np.ndarray
    slopes: np.ndarray

    @property
    def start(self):
        return float(self.grid[0])

    @property
    def end(self):
        return float(self.grid[-1])

    @property
    def final(self):
        return float(self.states[-1])

    def __call__(self, s):
        s_arr = np.asarray(s, dtype=float)
        lo, hi = sorted((self.start, self.end))
        span_tol = 1e-12 * max(1.0, abs(hi - lo))
        if np.any(s_arr < lo - span_tol) or np.any(s_arr > hi + span_tol):
            raise ValueError("evaluation point outside the integration span")
        if self.grid.size == 1:
            out = np.full_like(s_arr, self.states[0])
            return float(out) if out.ndim == 0 else out

        if self.grid[-1] < self.grid[0]:
            g, y, f = self.grid[::-1], self.states[::-1], self.slopes[::-1]
        else:
            g, y, f = self.grid, self.states, self.slopes
        k = np.clip(np.searchsorted(g, s_arr, side="right") - 1, 0, g.size - 2)
        h = g[k + 1] - g[k]
        t = (s_arr - g[k]) / h
        t2 = t * t
        t3 = t2 * t
        out = ((2 * t3 - 3 * t2 + 1) * y[k] + (t3 - 2 * t2 + t) * h * f[k]
               + (-2 * t3 + 3 * t2) * y[k + 1] + (t3 - t2) * h * f[k + 1])
        return float(out) if out.ndim == 0 else out


def _checked(rhs, s, y):
    v = rhs(s, y)
    if not math.isfinite(v):
        raise NonFiniteRhs(f"rhs returned {v!r} at s={s!r}, y={y!r}")
    return float(v)


def _initial_step(g, y0, f0, span, rtol, atol):
    sc = atol + rtol * abs(y0)
    d0 = abs(y0) / sc
    d1 = abs(f0) / sc
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = g(h0, y0 + h0 * f0)
    d2 = abs(f1 - f0) / sc / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    # floor keeps a tiny first guess from tripping the underflow check;
    # an oversized step is simply rejected and shrunk
    return max(min(100 * h0, h1, span), 1e-6 * span)


def integrate_ode(rhs, s0, y0, s_end, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
                  max_step=None):
    """Integrate the scalar ODE ``dy/ds = rhs(s, y)`` from ``s0`` to ``s_end``.

    Uses the Dormand-Prince 5(4) embedded pair with local extrapolation.
    A backward solve (``s_end < s0``) is carried out in the negated variable
    ``u = -(s - s0)`` so the stepping loop only ever moves forward.

    Raises
    ------
    StepSizeUnderflow
        If the controller asks for a step below ``1e-14 * |s_end - s0|``.
    NonFiniteRhs
        If ``rhs`` produces a non-finite value.
    """
    if rtol <= 0 or atol <= 0:
        raise ValueError("rtol and atol must be positive")
    s0 = float(s0)
    s_end = float(s_end)
    y = float(y0)
    if s_end == s0:
        f = _checked(rhs, s0, y)
        return OdeTrajectory(np.array([s0]), np.array([y]), np.array([f]))

    sign = 1.0 if s_end > s0 else -1.0
    span = abs(s_end - s0)

    def g(u, yy):
        return sign * _checked(rhs, s0 + sign * u, yy)

    h_min = _UNDERFLOW * span
    h_max = span if max_step is None else min(span, abs(max_step))

    u = 0.0
    k1 = g(u, y)
    h = min(_initial_step(g, y, k1, span, rtol, atol), h_max)
    grid, states, slopes = [s0], [y], [sign * k1]
    rejected = False
    while u < span:
        if h < h_min:
            raise StepSizeUnderflow(
                f"step {h:.3e} below {h_min:.3e} at s={s0 + sign * u!r}")
        last = u + h >= span
        if last:
            h = span - u
        k2 = g(u + _C2 * h, y + h * _A21 * k1)
        k3 = g(u + _C3 * h, y + h * (_A31 * k1 + _A32 * k2))
        k4 = g(u + _C4 * h, y + h * (_A41 * k1 + _A42 * k2 + _A43 * k3))
        k5 = g(u + _C5 * h,
               y + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
        k6 = g(u + h, y + h * (_A61 * k1 + _A62 * k2 + _A63 * k3
                               + _A64 * k4 + _A65 * k5))
        y_new = y + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5
                         + _B6 * k6)
        u_new = span if last else u + h
        k7 = g(u_new, y_new)
        err = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6
                   + _E7 * k7)
        scale = atol + rtol * max(abs(y), abs(y_new))
        err_norm = abs(err) / scale

        if err_norm <= 1.0:
            u, y, k1 = u_new, y_new, k7
            grid.append(s_end if last else s0 + sign * u)
            states.append(y)
            slopes.append(sign * k7)
            if err_norm == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = min(_MAX_FACTOR, _SAFETY * err_norm ** -0.2)
            if rejected:
                factor = min(1.0, factor)
            rejected = False
            h = min(h * factor, h_max)
        else:
            rejected = True
            h *= max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2)

    return OdeTrajectory(np.array(grid), np.array(states), np.array(slopes))


def simpson(f, a, b, n_panels=DEFAULT_PANELS, vectorized=False):
    """Composite Simpson rule on ``n_panels`` equal panels (``n_panels`` even).

    With ``vectorized=True`` the integrand is called once on the full node
    array instead of node by node.
    """
    if n_panels < 2 or n_panels % 2:
        raise ValueError("n_panels must be an even integer >= 2")
    nodes = np.linspace(a, b, n_panels + 1)
    if vectorized:
        vals = np.asarray(f(nodes), dtype=float)
    else:
        vals = np.array([f(float(s)) for s in nodes], dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = nodes[~np.isfinite(vals)][0]
        raise NonFiniteIntegrand(f"integrand not finite at {bad!r}")
    h = (b - a) / n_panels
    return float(h / 3.0 * (vals[0] + vals[-1] + 4.0 * vals[1:-1:2].sum()
                            + 2.0 * vals[2:-1:2].sum()))


def find_root(f, lo, hi, xtol=1e-12):
    """Root of ``f`` inside ``[lo, hi]`` by Brent's bracketing method."""
    if not lo < hi:
        raise ValueError("need lo < hi")
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if flo * fhi > 0:
        raise NoSignChange(f"f({lo!r})={flo!r} and f({hi!r})={fhi!r}")
    x = brentq(f, lo, hi, xtol=xtol, rtol=4 * _EPS, maxiter=500)
    return float(min(max(x, lo), hi))


def central_diff(f, x, h=None):
    """First derivative of ``f`` at ``x`` by a central difference."""
    if h is None:
        h = _EPS ** (1.0 / 3.0) * max(1.0, abs(x))
    # exact representable step
    xp, xm = x + h, x - h
    fp, fm = f(xp), f(xm)
    d = (fp - fm) / (xp - xm)
    if not math.isfinite(d):
        raise NonFiniteValue(f"central difference not finite at x={x!r}")
    return d


def std_normal_cdf(x):
    return 0.5 * math.erfc(-x / _SQRT2)


def std_normal_pdf(x):
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)
