"""Matching priors from the first-order matching PDE, solved along characteristics.

For a two-parameter model the log prior ``z = log pi`` satisfies

    a z_psi + b z_lam = d,

with ``a = sqrt(i^11)``, ``b = i^12 / sqrt(i^11)`` and
``d = -[d/dpsi sqrt(i^11) + d/dlam (i^12 / sqrt(i^11))]``, where ``i^jk``
is the inverse expected information. Characteristics have
``dpsi/ds = 1`` and ``dlam/ds = b/a``; along them ``dz/ds = d/a``.

A solution is pinned down by an initial curve
``(psi, lam) = (s0 + Psi(xi), Lambda(xi))`` carrying ``z = Z(xi)``.
"""

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Optional, Union

import numpy as np

from . import kernels
from .errors import (
    BracketingFailure,
    DomainViolation,
    NonRealPower,
    PathLeftDomain,
    TangencyDetected,
)
from .model import ParamPoint, inverse_info
from .numerics import (
    DEFAULT_ATOL,
    DEFAULT_PANELS,
    DEFAULT_RTOL,
    OdeTrajectory,
    central_diff,
    find_root,
    integrate_ode,
    simpson,
)

BACKWARD = "backward"
FORWARD = "forward"


def _minus_one(xi):
    return -1.0


def _minus_log(xi):
    if xi <= 0:
        raise DomainViolation(f"Z = -log(xi) needs xi > 0, got {xi!r}")
    return -math.log(xi)


@dataclass(frozen=True)
class InitialCondition:
    """Initial curve and log-prior values along it.

    ``Psi`` is either a constant offset or a callable of ``xi``; ``Lambda``
    of ``None`` means the identity. ``s0=None`` anchors the curve at the
    psi-coordinate of whatever point the prior ratio is taken against.
    """

    Z: Callable = _minus_one
    Psi: Union[float, Callable] = 0.0
    Lambda: Optional[Callable] = None
    s0: Optional[float] = None
    name: str = "custom"

    @property
    def psi_is_constant(self):
        return not callable(self.Psi)

    @property
    def is_simple(self):
        return self.psi_is_constant and self.Psi == 0.0 and self.Lambda is None

    def psi_of(self, xi):
        base = 0.0 if self.s0 is None else self.s0
        return base + (self.Psi if self.psi_is_constant else self.Psi(xi))

    def lambda_of(self, xi):
        return xi if self.Lambda is None else self.Lambda(xi)

    def shifted(self, c):
        """Same curve, log-prior values moved by the constant ``c``."""
        z = self.Z
        return replace(self, Z=lambda xi: z(xi) + c, name=f"{self.name}{c:+g}")


@dataclass(frozen=True)
class AnalyticPrior:
    """A prior given in closed form by its log density."""

    log_prior: Callable
    name: str = "analytic"


@dataclass(frozen=True)
class CharacteristicSolution:
    """``lambda_path`` is ``None`` when the compiled kernel did the tracing."""

    xi_star: float
    lambda_path: Optional[OdeTrajectory]
    z_value: float
    quadrature_panels: int
    integral: float = 0.0
    steps: int = 0


@dataclass(frozen=True)
class TraceSettings:
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    n_panels: int = DEFAULT_PANELS
    convention: str = BACKWARD
    use_kernel: bool = True
    backend: Optional[str] = None


DEFAULT_SETTINGS = TraceSettings()


# --- coefficients -----------------------------------------------------------

def _inv_and_derivs(m, psi, lam):
    info = np.asarray(m.expected_info(psi, lam), dtype=float)
    A, B, C = info[0, 0], info[0, 1], info[1, 1]
    D = A * C - B * B
    u, v = C / D, -B / D
    if m.info_derivs is not None:
        dp, dl = m.info_derivs(psi, lam)
        dp = np.asarray(dp, dtype=float)
        dl = np.asarray(dl, dtype=float)

        def inv_deriv(dI):
            dA, dB, dC = dI[0, 0], dI[0, 1], dI[1, 1]
            dD = dA * C + A * dC - 2 * B * dB
            return (dC * D - C * dD) / D ** 2, -(dB * D - B * dD) / D ** 2

        du_p, _ = inv_deriv(dp)
        du_l, dv_l = inv_deriv(dl)
    else:
        def ent(j, k):
            return lambda p, l: float(inverse_info(m, ParamPoint(p, l))[j, k])

        du_p = central_diff(lambda p: ent(0, 0)(p, lam), psi)
        du_l = central_diff(lambda l: ent(0, 0)(psi, l), lam)
        dv_l = central_diff(lambda l: ent(0, 1)(psi, l), lam)
    return u, v, du_p, du_l, dv_l


def pde_coefficients(m, w):
    """``(a, b, d)`` of the matching-prior PDE at ``w``.

    The lam-derivative in ``d`` acts on the product ``i^12 (i^11)^(-1/2)``.
    Analytic information derivatives are used when the model has them.
    """
    inverse_info(m, ParamPoint(*w))  # raises SingularInformation
    u, v, du_p, du_l, dv_l = _inv_and_derivs(m, w[0], w[1])
    ru = math.sqrt(u)
    a = ru
    b = v / ru
    d = -(du_p / (2 * ru) + dv_l / ru - v * du_l / (2 * u * ru))
    return float(a), float(b), float(d)


def _slope_and_source(m):
    def slope(s, lam):
        a, b, _ = pde_coefficients(m, (s, lam))
        return b / a

    def source(s, lam):
        a, _, d = pde_coefficients(m, (s, lam))
        return d / a

    return slope, source


# --- characteristic tracing -------------------------------------------------

def _check_path(m, traj):
    (llo, lhi) = m.domain[1]
    if np.any(traj.states <= llo) or np.any(traj.states >= lhi):
        raise PathLeftDomain("characteristic left the nuisance-parameter domain")
    (plo, phi) = m.domain[0]
    if np.any(traj.grid <= plo) or np.any(traj.grid >= phi):
        raise PathLeftDomain("characteristic left the interest-parameter domain")


def _generic_trace(m, psi_start, lam_start, psi_stop, psi_lo, psi_hi, cfg):
    slope, source = _slope_and_source(m)
    traj = integrate_ode(slope, psi_start, lam_start, psi_stop, cfg.rtol, cfg.atol)
    _check_path(m, traj)

    def integrand(nodes):
        return [source(float(s), float(l)) for s, l in zip(nodes, traj(nodes))]

    integral = simpson(integrand, psi_lo, psi_hi, cfg.n_panels, vectorized=True)
    return traj, integral


def characteristic_integral(m, target, psi_anchor, lam_anchor=None,
                            settings=DEFAULT_SETTINGS):
    """Z-independent part of the solution at ``target``.

    Backward convention: trace from ``target`` to ``psi = psi_anchor`` and
    return ``(lam where the path meets the anchor line, integral of d/a from
    psi_anchor to target.psi, trajectory or None, steps)``.

    Forward convention: start at ``(psi_anchor, lam_anchor)`` and run to
    ``target.psi``; the returned lam is then the path's end point.
    """
    psi_star, lam_star = float(target[0]), float(target[1])
    m.check_point((psi_star, lam_star))
    cfg = settings
    backward = cfg.convention == BACKWARD
    lam0 = lam_star if backward else float(lam_anchor)
    if abs(psi_star - psi_anchor) < 1e-12:
        return lam0, 0.0, None, 0

    if cfg.use_kernel and m.kernel is not None:
        code, x = m.kernel
        k = kernels.get_backend(cfg.backend)
        lam_end, integral, steps = k.char_trace(
            code, x, psi_star, lam0, psi_anchor, cfg.rtol, cfg.atol,
            cfg.n_panels, backward)
        if not m.in_domain((psi_anchor if backward else psi_star, lam_end)):
            raise PathLeftDomain("characteristic left the parameter domain")
        return lam_end, integral, None, steps

    if backward:
        traj, integral = _generic_trace(m, psi_star, lam0, psi_anchor,
                                        psi_anchor, psi_star, cfg)
    else:
        traj, integral = _generic_trace(m, psi_anchor, lam0, psi_star,
                                        psi_anchor, psi_star, cfg)
    return traj.final, integral, traj, traj.grid.size - 1


def _invert_lambda(ic, lam_hit, guess):
    if ic.Lambda is None:
        return lam_hit
    return _solve_scalar(lambda xi: ic.Lambda(xi) - lam_hit, guess)


def _solve_scalar(g, guess, step=None):
    step = step or max(1e-3, 0.1 * abs(guess))
    lo, hi = guess - step, guess + step
    for _ in range(60):
        try:
            glo, ghi = g(lo), g(hi)
        except (ValueError, ArithmeticError):
            glo = ghi = float("nan")
        if np.isfinite(glo) and np.isfinite(ghi) and glo * ghi <= 0:
            return find_root(g, lo, hi, xtol=1e-13)
        step *= 2.0
        lo, hi = guess - step, guess + step
    raise BracketingFailure("could not locate the initial-curve parameter")


def _check_tangency(m, ic, xi):
    if ic.psi_is_constant and ic.Lambda is None:
        return
    dpsi = 0.0 if ic.psi_is_constant else central_diff(ic.psi_of, xi)
    dlam = central_diff(ic.lambda_of, xi)
    a, b, _ = pde_coefficients(m, (ic.psi_of(xi), ic.lambda_of(xi)))
    cross = dpsi * (b / a) - dlam
    if abs(cross) <= 1e-10 * max(1.0, abs(dpsi * b / a), abs(dlam)):
        raise TangencyDetected(f"initial curve tangent to a characteristic at xi={xi!r}")


def trace_characteristic(m, ic, target, settings=DEFAULT_SETTINGS):
    """Log prior at ``target`` for the solution selected by ``ic``.

    ``ic.s0`` must be set (see :func:`log_prior_ratio` for anchoring).
    """
    if ic.s0 is None:
        raise ValueError("initial condition has no s0; anchor it first")
    psi_star, lam_star = float(target[0]), float(target[1])
    cfg = settings

    if cfg.convention == FORWARD:
        xi = lam_star
        psi_h = ic.psi_of(xi)
        lam_end, integral, traj, steps = characteristic_integral(
            m, target, psi_h, ic.lambda_of(xi), cfg)
        return CharacteristicSolution(xi, traj, ic.Z(xi) + integral,
                                      cfg.n_panels, integral, steps)

    if ic.psi_is_constant:
        psi_h = ic.psi_of(0.0)
        lam_hit, integral, traj, steps = characteristic_integral(
            m, target, psi_h, settings=cfg)
        xi = _invert_lambda(ic, lam_hit, lam_hit)
    else:
        # shoot along the characteristic until it meets the moving curve
        def miss(xi):
            lam_hit, _, _, _ = characteristic_integral(
                m, target, ic.psi_of(xi), settings=cfg)
            return lam_hit - ic.lambda_of(xi)

        xi = _solve_scalar(miss, lam_star)
        psi_h = ic.psi_of(xi)
        _, integral, traj, steps = characteristic_integral(
            m, target, psi_h, settings=cfg)
    _check_tangency(m, ic, xi)
    return CharacteristicSolution(xi, traj, ic.Z(xi) + integral, cfg.n_panels,
                                  integral, steps)


def anchored(ic, w0):
    return ic if ic.s0 is not None else replace(ic, s0=float(w0[0]))


def log_prior_at(m, prior, w, w0=None, settings=DEFAULT_SETTINGS):
    """Log prior at ``w``; numeric priors are anchored at ``w0.psi``."""
    if isinstance(prior, AnalyticPrior):
        return float(prior.log_prior(ParamPoint(*w)))
    ic = anchored(prior, w0 if w0 is not None else w)
    if ic.is_simple and abs(w[0] - ic.s0) < 1e-12:
        return float(ic.Z(w[1]))
    return trace_characteristic(m, ic, w, settings).z_value


def log_prior_ratio(m, ic, w_hat, w0, settings=DEFAULT_SETTINGS):
    """``log pi(w_hat) - log pi(w0)`` with the initial curve through ``w0.psi``.

    For the simple presets the anchor point needs no tracing, so the ratio
    costs one characteristic.
    """
    if isinstance(ic, AnalyticPrior):
        return float(ic.log_prior(ParamPoint(*w_hat)) - ic.log_prior(ParamPoint(*w0)))
    if tuple(w_hat) == tuple(w0):
        return 0.0
    return (log_prior_at(m, ic, w_hat, w0, settings)
            - log_prior_at(m, ic, w0, w0, settings))


def pde_residual(m, log_prior, w, h=None):
    """``a z_psi + b z_lam - d`` at ``w`` with ``z = log_prior``."""
    psi, lam = float(w[0]), float(w[1])
    a, b, d = pde_coefficients(m, (psi, lam))
    z_psi = central_diff(lambda p: log_prior(ParamPoint(p, lam)), psi, h)
    z_lam = central_diff(lambda l: log_prior(ParamPoint(psi, l)), lam, h)
    return a * z_psi + b * z_lam - d


# --- presets ----------------------------------------------------------------

def parse_q(text):
    """Tuning exponent from text such as ``"2"``, ``"2/5"`` or ``"0.4"``."""
    return Fraction(str(text).strip())


def z_family(q, center=-1.0):
    """``Z(xi) = -log(|xi - center|^q + 1)``.

    Integer exponents use the signed power; fractional exponents use the
    absolute value, which keeps ``Z`` even about ``center``.
    """
    qf = Fraction(q) if not isinstance(q, float) else Fraction(q).limit_denominator(10**9)
    integer = qf.denominator == 1
    qv = float(q)

    def Z(xi):
        base = xi - center
        inner = (base ** int(qf) if integer else abs(base) ** qv) + 1.0
        if not inner > 0:
            raise NonRealPower(f"({base!r})^{q} + 1 is not positive")
        return -math.log(inner)

    return Z


def resolve_prior(name):
    """Prior preset by name.

    ``default`` (Z = -1), ``loglambda`` (Z = -log xi), ``qfam:<q>`` or
    ``qfam:<q>@<center>``, ``analytic-invpsi`` and ``analytic-invpsilambda``.
    A leading ``ic-`` is accepted and ignored.
    """
    key = name[3:] if name.startswith("ic-") else name
    if key == "default":
        return InitialCondition(Z=_minus_one, name="default")
    if key == "loglambda":
        return InitialCondition(Z=_minus_log, name="loglambda")
    if key.startswith("qfam:"):
        body = key[5:]
        center = -1.0
        if "@" in body:
            body, c = body.split("@", 1)
            center = float(c)
        return InitialCondition(Z=z_family(parse_q(body), center), name=f"qfam:{body}"
                                + (f"@{center:g}" if center != -1.0 else ""))
    if key == "analytic-invpsi":
        return AnalyticPrior(lambda w: -math.log(w.psi), name="analytic-invpsi")
    if key == "analytic-invpsilambda":
        return AnalyticPrior(lambda w: -math.log(w.psi) - math.log(w.lam),
                             name="analytic-invpsilambda")
    raise ValueError(f"unknown prior preset {name!r}")
