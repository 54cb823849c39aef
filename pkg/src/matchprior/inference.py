"""Full and constrained maximum likelihood, the signed likelihood root and
the curvature factors entering the tail-approximation statistic."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainViolation,
    NegativeRadicand,
    NonPositiveCurvature,
    SeparationDetected,
)
from .model import ParamPoint
from .numerics import central_diff

GRAD_TOL = 1e-8
MAX_ITER = 100
_MAX_HALVINGS = 60
# ascent test slack: near the optimum loglik changes sit below rounding
_LL_SLACK = 64 * np.finfo(float).eps


def _no_worse(new, old):
    return new >= old - _LL_SLACK * max(1.0, abs(old))


@dataclass(frozen=True)
class FitResult:
    estimate: object  # ParamPoint for full fits, float for constrained fits
    loglik_at_max: float
    converged: bool
    iterations: int
    gradient_norm: float


def _fd_hessian(m, w, data):
    def d_psi(p):
        return m.score(ParamPoint(p, w.lam), data)

    def d_lam(lam):
        return m.score(ParamPoint(w.psi, lam), data)

    h = np.empty((2, 2))
    h[:, 0] = [central_diff(lambda p: d_psi(p)[0], w.psi),
               central_diff(lambda p: d_psi(p)[1], w.psi)]
    h[:, 1] = [central_diff(lambda v: d_lam(v)[0], w.lam),
               central_diff(lambda v: d_lam(v)[1], w.lam)]
    return 0.5 * (h + h.T)


def _check_separation(m, w):
    bound = m.separation_bound
    if bound is not None and max(abs(w[0]), abs(w[1])) > bound:
        raise SeparationDetected(
            f"{m.name} estimate {tuple(w)!r} beyond |{bound}|; "
            "the data are (quasi-)separated")


def _line_search(m, data, w, step, ll):
    t = 1.0
    for _ in range(_MAX_HALVINGS):
        cand = ParamPoint(w.psi + t * step[0], w.lam + t * step[1])
        if m.in_domain(cand):
            cand_ll = m.loglik(cand, data)
            if _no_worse(cand_ll, ll):
                return cand, cand_ll
        t *= 0.5
    return None, ll


def _newton(m, data, w, use_fd_hessian=False):
    ll = m.loglik(w, data)
    g = m.score(w, data)
    gnorm = float(np.max(np.abs(g)))
    it = 0
    while gnorm >= GRAD_TOL and it < MAX_ITER:
        it += 1
        h = _fd_hessian(m, w, data) if use_fd_hessian else m.hessian(w, data)
        step = None
        if h[0, 0] < 0 and np.linalg.det(h) > 0:
            step = -np.linalg.solve(h, g)
        if step is None or not np.all(np.isfinite(step)):
            # not locally concave: steepest ascent scaled by the diagonal
            step = g / np.maximum(np.abs(np.diag(h)), 1e-8)
        new, new_ll = _line_search(m, data, w, step, ll)
        if new is None:
            if not m.in_domain(ParamPoint(w.psi + step[0], w.lam + step[1])):
                raise DomainViolation(f"line search cannot stay inside {m.domain!r}")
            break
        w, ll = new, new_ll
        _check_separation(m, w)
        g = m.score(w, data)
        gnorm = float(np.max(np.abs(g)))
    if gnorm < GRAD_TOL:
        w, ll, gnorm = _polish(m, data, w, ll, g, gnorm, use_fd_hessian)
    return FitResult(w, ll, gnorm < GRAD_TOL, it, gnorm)


def _polish(m, data, w, ll, g, gnorm, use_fd_hessian=False):
    """One extra Newton step past the stopping rule; kept only if it helps."""
    h = _fd_hessian(m, w, data) if use_fd_hessian else m.hessian(w, data)
    if not (h[0, 0] < 0 and np.linalg.det(h) > 0):
        return w, ll, gnorm
    step = -np.linalg.solve(h, g)
    cand = ParamPoint(w.psi + step[0], w.lam + step[1])
    if not m.in_domain(cand):
        return w, ll, gnorm
    cand_ll = m.loglik(cand, data)
    cand_g = float(np.max(np.abs(m.score(cand, data))))
    if _no_worse(cand_ll, ll) and cand_g <= gnorm:
        return cand, cand_ll, cand_g
    return w, ll, gnorm


def mle(m, data, init=None, use_closed_form=True):
    """Maximize the log-likelihood jointly over (psi, lam).

    Models with a closed-form maximizer return it directly unless
    ``use_closed_form`` is false, in which case damped Newton runs from
    ``init`` (or the model's own starting point).
    """
    if use_closed_form and m.mle_closed_form is not None:
        w = ParamPoint(*m.mle_closed_form(data))
        m.check_point(w)
        gnorm = float(np.max(np.abs(m.score(w, data))))
        return FitResult(w, m.loglik(w, data), gnorm < GRAD_TOL, 0, gnorm)
    if init is None:
        if m.initial_guess is not None:
            init = m.initial_guess(data)
        elif m.mle_closed_form is not None:
            init = m.mle_closed_form(data)
        else:
            raise ValueError("no starting point available")
    init = ParamPoint(*init)
    m.check_point(init)
    fit = _newton(m, data, init)
    _check_separation(m, fit.estimate)
    return fit


def constrained_mle(m, data, psi0, init_lambda=None, use_closed_form=True):
    """Maximize ``l(psi0, lam)`` over lam with 1-d damped Newton."""
    if use_closed_form and m.constrained_closed_form is not None:
        lam = float(m.constrained_closed_form(data, psi0))
        w = ParamPoint(psi0, lam)
        m.check_point(w)
        gnorm = abs(float(m.score(w, data)[1]))
        return FitResult(lam, m.loglik(w, data), gnorm < GRAD_TOL, 0, gnorm)
    (plo, phi), (llo, lhi) = m.domain
    if not plo < psi0 < phi:
        raise DomainViolation(f"psi0={psi0!r} outside {m.domain[0]!r}")
    if init_lambda is None:
        if m.initial_guess is not None:
            init_lambda = m.initial_guess(data).lam
        else:
            init_lambda = m.mle_closed_form(data).lam
    lam = float(init_lambda)
    w = ParamPoint(psi0, lam)
    m.check_point(w)
    ll = m.loglik(w, data)
    g = float(m.score(w, data)[1])
    it = 0
    while abs(g) >= GRAD_TOL and it < MAX_ITER:
        it += 1
        h = float(m.hessian(w, data)[1, 1])
        step = -g / h if h < 0 else g / max(abs(h), 1e-8)
        t = 1.0
        for _ in range(_MAX_HALVINGS):
            cand = ParamPoint(psi0, lam + t * step)
            if m.in_domain(cand):
                cand_ll = m.loglik(cand, data)
                if _no_worse(cand_ll, ll):
                    break
            t *= 0.5
        else:
            if not m.in_domain(ParamPoint(psi0, lam + step)):
                raise DomainViolation(f"line search cannot stay inside {m.domain!r}")
            break
        lam, ll, w = cand.lam, cand_ll, cand
        _check_separation(m, w)
        g = float(m.score(w, data)[1])
    if abs(g) < GRAD_TOL:
        h = float(m.hessian(w, data)[1, 1])
        cand = ParamPoint(psi0, lam - g / h) if h < 0 else None
        if cand is not None and m.in_domain(cand):
            cand_ll = m.loglik(cand, data)
            cand_g = float(m.score(cand, data)[1])
            if _no_worse(cand_ll, ll) and abs(cand_g) <= abs(g):
                lam, ll, w, g = cand.lam, cand_ll, cand, cand_g
    _check_separation(m, w)
    return FitResult(lam, ll, abs(g) < GRAD_TOL, it, abs(g))


RADICAND_SLACK = 1e-10


def signed_root_from_fits(full, constrained, psi0):
    drop = 2.0 * (full.loglik_at_max - constrained.loglik_at_max)
    if drop < 0:
        if drop < -RADICAND_SLACK:
            raise NegativeRadicand(f"likelihood ratio radicand {drop!r} < 0")
        drop = 0.0
    diff = full.estimate.psi - psi0
    return math.copysign(math.sqrt(drop), diff) if diff != 0 else 0.0


def signed_root(m, data, psi0, full=None, constrained=None):
    """``sgn(psi_hat - psi0) * sqrt(2 {l(w_hat) - l(psi0, lam_hat0)})``."""
    if full is None:
        full = mle(m, data)
    if constrained is None:
        constrained = constrained_mle(m, data, psi0, init_lambda=full.estimate.lam)
    return signed_root_from_fits(full, constrained, psi0)


def t_determinants(m, data, omega_hat, omega0):
    """Return ``(-l_lamlam(omega0), det(-l_ww(omega_hat)))``; both must be positive."""
    neg_ll = -float(m.hessian(ParamPoint(*omega0), data)[1, 1])
    neg_h = -np.asarray(m.hessian(ParamPoint(*omega_hat), data))
    det = float(neg_h[0, 0] * neg_h[1, 1] - neg_h[0, 1] * neg_h[1, 0])
    if not (neg_ll > 0 and det > 0 and neg_h[0, 0] > 0):
        raise NonPositiveCurvature(
            f"curvature factors ({neg_ll!r}, {det!r}) not both positive")
    return neg_ll, det
