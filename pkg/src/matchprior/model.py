"""Two-parameter statistical models.

Coordinates are always ordered (interest, nuisance) = (psi, lam). Matrix
valued functions return ``(2, 2)`` arrays for scalar arguments and
``(2, 2, k)`` arrays when ``psi``/``lam`` are length-``k`` arrays.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.special import expit

from .errors import DomainViolation, NonFiniteValue, SingularInformation

INF = math.inf


class ParamPoint(NamedTuple):
    psi: float
    lam: float


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be 1-d arrays of equal length")
        if x.size < 2:
            raise ValueError("a dataset needs at least two rows")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset values must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.x.size


@dataclass(frozen=True)
class ModelSpec:
    """Bundle of likelihood pieces for a two-parameter model.

    ``info_derivs`` (optional) returns the partial derivatives of
    ``expected_info`` with respect to psi and lam; without it the PDE
    coefficients fall back to central differences. ``kernel`` names a
    compiled characteristic tracer for the built-in models.
    """

    name: str
    loglik: Callable
    score: Callable
    hessian: Callable
    expected_info: Callable
    sampler: Callable
    domain: tuple = ((-INF, INF), (-INF, INF))
    info_derivs: Optional[Callable] = None
    mle_closed_form: Optional[Callable] = None
    constrained_closed_form: Optional[Callable] = None
    initial_guess: Optional[Callable] = None
    separation_bound: Optional[float] = None
    kernel: Optional[tuple] = None
    validate_data: Optional[Callable] = None
    meta: dict = field(default_factory=dict)

    def in_domain(self, w):
        (plo, phi), (llo, lhi) = self.domain
        return plo < w[0] < phi and llo < w[1] < lhi

    def check_point(self, w):
        if not self.in_domain(w):
            raise DomainViolation(f"{tuple(w)!r} outside {self.name} domain "
                                  f"{self.domain!r}")


def inverse_info(m, w):
    """Inverse of the expected information at ``w`` (entry [0, 0] is psi)."""
    i = np.asarray(m.expected_info(w[0], w[1]), dtype=float)
    det = i[0, 0] * i[1, 1] - i[0, 1] * i[1, 0]
    if not det > 1e-300:
        raise SingularInformation(f"information determinant {det!r} at {w!r}")
    return np.array([[i[1, 1], -i[0, 1]], [-i[1, 0], i[0, 0]]]) / det


def _sym(a, b, c):
    return np.array([[a, b], [b, c]])


# --- ratio of exponential means -------------------------------------------

def _exp_check(psi, lam):
    if not (np.all(np.asarray(psi) > 0) and np.all(np.asarray(lam) > 0)):
        raise DomainViolation(f"exp-ratio needs psi>0, lam>0; got {psi!r}, {lam!r}")


def exp_ratio_model(n):
    """Ratio of two exponential means in the orthogonal (psi, lam) form.

    X has mean ``lam / sqrt(psi)`` and Y has mean ``lam * sqrt(psi)``, so
    ``psi`` is the ratio of the Y mean to the X mean.
    """
    n = int(n)

    def loglik(w, data):
        psi, lam = w
        _exp_check(psi, lam)
        xb, yb = data.x.mean(), data.y.mean()
        k = data.n
        return -k * ((psi * xb + yb) / (lam * math.sqrt(psi)) + 2.0 * math.log(lam))

    def score(w, data):
        psi, lam = w
        _exp_check(psi, lam)
        xb, yb = data.x.mean(), data.y.mean()
        k = data.n
        rp = math.sqrt(psi)
        d_psi = -k * (xb / (2 * lam * rp) - yb / (2 * lam * psi * rp))
        d_lam = k * ((xb * rp + yb / rp) / lam ** 2 - 2.0 / lam)
        return np.array([d_psi, d_lam])

    def hessian(w, data):
        psi, lam = w
        _exp_check(psi, lam)
        xb, yb = data.x.mean(), data.y.mean()
        k = data.n
        rp = math.sqrt(psi)
        h_pp = -k * (-xb / (4 * lam * psi * rp) + 3 * yb / (4 * lam * psi ** 2 * rp))
        h_pl = k * (xb / (2 * lam ** 2 * rp) - yb / (2 * lam ** 2 * psi * rp))
        h_ll = k * (-2 * (xb * rp + yb / rp) / lam ** 3 + 2 / lam ** 2)
        return _sym(h_pp, h_pl, h_ll)

    def expected_info(psi, lam):
        _exp_check(psi, lam)
        psi = np.asarray(psi, dtype=float)
        lam = np.asarray(lam, dtype=float)
        return _sym(n / (2 * psi ** 2), np.zeros(np.broadcast(psi, lam).shape),
                    2 * n / lam ** 2)

    def info_derivs(psi, lam):
        psi = np.asarray(psi, dtype=float)
        lam = np.asarray(lam, dtype=float)
        zero = np.zeros(np.broadcast(psi, lam).shape)
        return (_sym(-n / psi ** 3 + zero, zero, zero),
                _sym(zero, zero, -4 * n / lam ** 3 + zero))

    def sampler(w, size, rng):
        psi, lam = w
        _exp_check(psi, lam)
        rp = math.sqrt(psi)
        x = rng.exponential(lam / rp, size)
        y = rng.exponential(lam * rp, size)
        return Dataset(x, y)

    def mle_closed_form(data):
        xb, yb = data.x.mean(), data.y.mean()
        return ParamPoint(yb / xb, math.sqrt(xb * yb))

    def constrained_closed_form(data, psi0):
        xb, yb = data.x.mean(), data.y.mean()
        return (psi0 * xb + yb) / (2 * math.sqrt(psi0))

    def validate(data):
        bad = np.flatnonzero((data.x <= 0) | (data.y <= 0))
        if bad.size:
            raise ValueError(f"row {bad[0] + 1}: exp-ratio values must be positive")

    return ModelSpec(
        name="exp-ratio",
        loglik=loglik,
        score=score,
        hessian=hessian,
        expected_info=expected_info,
        sampler=sampler,
        domain=((0.0, INF), (0.0, INF)),
        info_derivs=info_derivs,
        mle_closed_form=mle_closed_form,
        constrained_closed_form=constrained_closed_form,
        kernel=("exp_ratio", None),
        validate_data=validate,
        meta={"n": n},
    )


# --- logistic regression with one covariate --------------------------------

def _eta(x, psi, lam):
    psi = np.asarray(psi, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return lam[..., None] + psi[..., None] * x


def logistic_model(covariates):
    """Logistic regression ``logit p = omega1 + omega2 * x`` given fixed
    covariates, with psi = omega2 (slope) and lam = omega1 (intercept).
    """
    x = np.ascontiguousarray(covariates, dtype=float)
    if x.ndim != 1 or x.size < 2 or not np.all(np.isfinite(x)):
        raise ValueError("covariates must be a finite 1-d array of length >= 2")
    x2, x3 = x * x, x * x * x

    def _probs(w, data):
        eta = w[1] + w[0] * data.x
        p = expit(eta)
        if not np.all(np.isfinite(p)):
            raise NonFiniteValue("non-finite success probability")
        return eta, p

    def loglik(w, data):
        eta = w[1] + w[0] * data.x
        # log(1 - p) = -log(1 + e^eta), evaluated without overflow
        return float(np.dot(data.y, eta) - np.logaddexp(0.0, eta).sum())

    def score(w, data):
        _, p = _probs(w, data)
        r = data.y - p
        return np.array([np.dot(data.x, r), r.sum()])

    def hessian(w, data):
        # same expression as expected_info so that hessian == -info exactly
        _, p = _probs(w, data)
        wt = p * (1 - p)
        dx = data.x
        return -_sym((wt * (dx * dx)).sum(-1), (wt * dx).sum(-1), wt.sum(-1))

    def expected_info(psi, lam):
        p = expit(_eta(x, psi, lam))
        wt = p * (1 - p)
        return _sym((wt * x2).sum(-1), (wt * x).sum(-1), wt.sum(-1))

    def info_derivs(psi, lam):
        p = expit(_eta(x, psi, lam))
        dw = p * (1 - p) * (1 - 2 * p)
        a, b, c, d = ((dw * x3).sum(-1), (dw * x2).sum(-1),
                      (dw * x).sum(-1), dw.sum(-1))
        return _sym(a, b, c), _sym(b, c, d)

    def sampler(w, size, rng):
        if size != x.size:
            raise ValueError("logistic sampler draws one response per covariate")
        p = expit(w[1] + w[0] * x)
        return Dataset(x, (rng.random(x.size) < p).astype(float))

    def initial_guess(data):
        ybar = data.y.mean()
        if ybar <= 0.0 or ybar >= 1.0:
            lam = -5.0 if ybar <= 0.0 else 5.0
        else:
            lam = min(5.0, max(-5.0, math.log(ybar / (1 - ybar))))
        return ParamPoint(0.0, lam)

    def validate(data):
        bad = np.flatnonzero((data.y != 0) & (data.y != 1))
        if bad.size:
            raise ValueError(f"row {bad[0] + 1}: logistic response must be 0 or 1")

    return ModelSpec(
        name="logistic",
        loglik=loglik,
        score=score,
        hessian=hessian,
        expected_info=expected_info,
        sampler=sampler,
        info_derivs=info_derivs,
        initial_guess=initial_guess,
        separation_bound=30.0,
        kernel=("logistic", x),
        validate_data=validate,
        meta={"n": x.size},
    )
