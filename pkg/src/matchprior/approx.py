"""Bayesian tail-probability approximations built on a matching prior.

``bn_tail`` and ``lr_tail`` approximate the posterior upper tail
``Pr(psi >= psi0 | data)``. Under a matching prior this is also the
frequentist ``Pr(R <= r)``, which is the default one-sided p-value
(``side="lower"``); ``side="upper"`` reports its complement ``Pr(R >= r)``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import BracketingFailure, MatchPriorError, NonConvergence
from .inference import constrained_mle, mle, signed_root_from_fits, t_determinants
from .model import ParamPoint
from .numerics import find_root, std_normal_cdf, std_normal_pdf
from .prior import (
    BACKWARD,
    DEFAULT_SETTINGS,
    AnalyticPrior,
    characteristic_integral,
    log_prior_ratio,
)

R_EPS = 1e-5
T_EPS = 1e-12

BN = "bn"
LR = "lr"
FORMATS = (BN, LR)


@dataclass(frozen=True)
class TailResult:
    R: float
    T: float
    p_bn: float
    p_lr: float
    near_singular: bool
    lr_clamped: bool

    def tail(self, fmt):
        return self.p_bn if fmt == BN else self.p_lr


@dataclass(frozen=True)
class NullFit:
    """Everything about one (data, psi0) pair that does not involve the prior."""

    w_hat: ParamPoint
    w0: ParamPoint
    R: float
    score_psi: float
    neg_lamlam: float
    det_full: float
    loglik_hat: float
    loglik_0: float

    @property
    def t_without_prior(self):
        return self.score_psi * math.sqrt(self.neg_lamlam / self.det_full)


def fit_null(m, data, psi0, full=None, init_lambda=None):
    """Full and constrained fits plus R and the curvature factors of T."""
    if full is None:
        full = mle(m, data)
    if not full.converged:
        raise NonConvergence(f"full fit stopped with |score|={full.gradient_norm:.3g}")
    w_hat = full.estimate
    cons = constrained_mle(m, data, psi0,
                           init_lambda=w_hat.lam if init_lambda is None else init_lambda)
    if not cons.converged:
        raise NonConvergence(f"constrained fit stopped with |score|={cons.gradient_norm:.3g}")
    w0 = ParamPoint(float(psi0), cons.estimate)
    R = signed_root_from_fits(full, cons, psi0)
    neg_ll, det = t_determinants(m, data, w_hat, w0)
    score_psi = float(m.score(w0, data)[0])
    return NullFit(w_hat, w0, R, score_psi, neg_ll, det, full.loglik_at_max,
                   cons.loglik_at_max)


def t_from_parts(nf, log_ratio):
    return nf.t_without_prior * math.exp(log_ratio)


def t_statistic(m, data, psi0, ic, settings=DEFAULT_SETTINGS, nf=None):
    """``T = l_psi(w0) sqrt(|-l_lamlam(w0)| / |-l_ww(w_hat)|) pi(w_hat)/pi(w0)``."""
    if nf is None:
        nf = fit_null(m, data, psi0)
    return t_from_parts(nf, log_prior_ratio(m, ic, nf.w_hat, nf.w0, settings))


def bn_tail(R, T):
    """``Phi(R + log(T/R)/R)``, or ``Phi(R)`` near the removable singularity."""
    if abs(R) < R_EPS or T / R <= 0:
        return std_normal_cdf(R)
    return std_normal_cdf(R + math.log(T / R) / R)


def _lr_raw(R, T):
    return std_normal_cdf(R) + std_normal_pdf(R) * (1.0 / R - 1.0 / T)


def lr_tail(R, T):
    """``Phi(R) + phi(R)(1/R - 1/T)`` clamped to [0, 1]."""
    if abs(R) < R_EPS or abs(T) < T_EPS:
        return std_normal_cdf(R)
    return min(max(_lr_raw(R, T), 0.0), 1.0)


def tail_result(R, T):
    """Both formats with a shared singularity rule.

    The replicate counts as near-singular when ``|R| < R_EPS``,
    ``|T| < T_EPS`` or ``T/R <= 0``; then both formats report ``Phi(R)``.
    """
    if abs(R) < R_EPS or abs(T) < T_EPS or T / R <= 0:
        p = std_normal_cdf(R)
        return TailResult(R, T, p, p, True, False)
    raw = _lr_raw(R, T)
    clamped = not 0.0 <= raw <= 1.0
    return TailResult(R, T, bn_tail(R, T), min(max(raw, 0.0), 1.0), False, clamped)


LOWER = "lower"
UPPER = "upper"


def p_values_from_tail(tail, side=LOWER):
    """One- and two-sided p-values from ``tail = Pr(R <= r)``.

    ``side="lower"`` gives ``Pr(R <= r)``, ``side="upper"`` gives
    ``Pr(R >= r)``; the two-sided value is twice the smaller of the two.
    """
    if side not in (LOWER, UPPER):
        raise ValueError(f"unknown side {side!r}")
    tail = min(max(tail, 0.0), 1.0)
    one = tail if side == LOWER else 1.0 - tail
    return one, min(1.0, 2.0 * min(tail, 1.0 - tail))


def evaluate_priors(m, data, psi0, priors, settings=DEFAULT_SETTINGS, nf=None):
    """TailResult for each prior in ``priors``, sharing fits and tracing.

    Priors built from the simple presets (curve ``psi = psi0``, identity
    ``Lambda``) reuse one characteristic; others are traced on their own.
    Returns ``(nf, {prior.name: TailResult or the MatchPriorError raised})``.
    """
    if nf is None:
        nf = fit_null(m, data, psi0)
    shared = None
    out = {}
    for pr in priors:
        try:
            if isinstance(pr, AnalyticPrior) or not (pr.is_simple and pr.s0 is None):
                log_ratio = log_prior_ratio(m, pr, nf.w_hat, nf.w0, settings)
            else:
                if shared is None:
                    lam_hit, integral, _, _ = characteristic_integral(
                        m, nf.w_hat, nf.w0.psi, nf.w_hat.lam, settings)
                    xi = lam_hit if settings.convention == BACKWARD else nf.w_hat.lam
                    shared = (xi, integral)
                xi, integral = shared
                log_ratio = pr.Z(xi) + integral - pr.Z(nf.w0.lam)
            out[pr.name] = tail_result(nf.R, t_from_parts(nf, log_ratio))
        except MatchPriorError as exc:
            out[pr.name] = exc
    return nf, out


def tail_at(m, data, psi0, prior, settings=DEFAULT_SETTINGS, nf=None):
    nf, res = evaluate_priors(m, data, psi0, [prior], settings, nf)
    r = res[prior.name]
    if isinstance(r, Exception):
        raise r
    return r


def p_values(m, data, psi0, ic, fmt=BN, settings=DEFAULT_SETTINGS, side=LOWER):
    """One- and two-sided p-values for ``H0: psi = psi0``."""
    tr = tail_at(m, data, psi0, ic, settings)
    return p_values_from_tail(tr.tail(fmt), side)


def _bracket_points(m, center, scale, direction):
    lo_b, hi_b = m.domain[0]
    bound = hi_b if direction > 0 else lo_b
    for k in range(60):
        step = scale * 2.0 ** k
        if math.isfinite(bound):
            gap = abs(bound - center)
            yield bound - (bound - center) * math.exp(-step / gap)
        else:
            yield center + direction * step


def credible_interval(m, data, ic, level=0.90, fmt=BN, settings=DEFAULT_SETTINGS,
                      full=None):
    """Equal-tailed interval from the approximate posterior of psi.

    The lower end solves ``tail(psi0) = (1 + level)/2`` and the upper end
    ``tail(psi0) = (1 - level)/2``; each is bracketed by stepping away from
    the MLE with doubling steps before Brent's method.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if full is None:
        full = mle(m, data)
    w_hat = full.estimate
    neg_h = -np.asarray(m.hessian(w_hat, data))
    var = neg_h[1, 1] / (neg_h[0, 0] * neg_h[1, 1] - neg_h[0, 1] ** 2)
    scale = math.sqrt(var) if var > 0 else max(1.0, abs(w_hat.psi))
    last_lam = {"v": w_hat.lam}

    def tail(psi0):
        nf = fit_null(m, data, psi0, full=full, init_lambda=last_lam["v"])
        last_lam["v"] = nf.w0.lam
        return tail_at(m, data, psi0, ic, settings, nf).tail(fmt)

    ends = []
    for target, direction in (((1.0 + level) / 2.0, -1), ((1.0 - level) / 2.0, +1)):
        last_lam["v"] = w_hat.lam
        inner = w_hat.psi
        for outer in _bracket_points(m, w_hat.psi, scale, direction):
            try:
                val = tail(outer) - target
            except (MatchPriorError, ArithmeticError) as exc:
                raise BracketingFailure(f"fit failed while bracketing at {outer!r}") from exc
            if (direction < 0 and val >= 0) or (direction > 0 and val <= 0):
                break
            inner = outer
        else:
            raise BracketingFailure("no sign change after 60 expansions")
        lo, hi = sorted((inner, outer))
        xtol = 1e-10 * max(1.0, abs(w_hat.psi))
        try:
            ends.append(find_root(lambda p: tail(p) - target, lo, hi, xtol=xtol))
        except MatchPriorError as exc:
            raise BracketingFailure(str(exc)) from exc
    return ends[0], ends[1]


def likelihood_ratio_pvalues(R, side=LOWER):
    """Normal-theory p-values from the signed root alone."""
    return p_values_from_tail(std_normal_cdf(R), side)

