"""Pure-Python characteristic tracer for the built-in models.

Mirrors ``_ckernels.pyx`` step for step; used when the extension is not
built or when ``MATCHPRIOR_PURE_PYTHON`` is set.
"""

import math

import numpy as np

from .numerics import integrate_ode, simpson

BACKEND = "python"


def _logistic_sums(x, psi, lam):
    eta = lam + psi * x
    p = 1.0 / (1.0 + np.exp(-eta))
    w = p * (1.0 - p)
    dw = w * (1.0 - 2.0 * p)
    wx = w * x
    dwx = dw * x
    dwx2 = dwx * x
    return (float(np.dot(wx, x)), float(wx.sum()), float(w.sum()),
            float(np.dot(dwx2, x)), float(dwx2.sum()), float(dwx.sum()),
            float(dw.sum()))


def logistic_terms(x, psi, lam):
    """``(b/a, d/a)`` of the matching-prior PDE for the logistic model."""
    A, B, C, dA_p, dB_p, dC_p, dC_l = _logistic_sums(x, psi, lam)
    # d/dlam of (A, B, C) equals d/dpsi of (B, C) and sum(dw)
    dA_l, dB_l = dB_p, dC_p
    D = A * C - B * B
    dD_p = dA_p * C + A * dC_p - 2.0 * B * dB_p
    dD_l = dA_l * C + A * dC_l - 2.0 * B * dB_l
    u = C / D
    du_p = (dC_p * D - C * dD_p) / (D * D)
    du_l = (dC_l * D - C * dD_l) / (D * D)
    v = -B / D
    dv_l = -(dB_l * D - B * dD_l) / (D * D)
    ru = math.sqrt(u)
    d = -(du_p / (2.0 * ru) + dv_l / ru - v * du_l / (2.0 * u * ru))
    return -B / C, d / ru


def _terms(code, x):
    if code == "exp_ratio":
        return (lambda s, lam: 0.0), (lambda s, lam: -1.0 / s)
    if code == "logistic":
        return ((lambda s, lam: logistic_terms(x, s, lam)[0]),
                (lambda s, lam: logistic_terms(x, s, lam)[1]))
    raise ValueError(f"no kernel for {code!r}")


def char_trace(code, x, psi_star, lam_start, psi_anchor, rtol, atol,
               n_panels, backward):
    """Trace one characteristic and integrate ``d/a`` along it.

    Backward: start at ``(psi_star, lam_start)`` and run to ``psi_anchor``.
    Forward: start at ``(psi_anchor, lam_start)`` and run to ``psi_star``.
    Returns ``(lam at the far end, integral from psi_anchor to psi_star,
    accepted steps)``.
    """
    if abs(psi_star - psi_anchor) < 1e-12:
        return float(lam_start), 0.0, 0
    slope, source = _terms(code, x)
    if backward:
        traj = integrate_ode(slope, psi_star, lam_start, psi_anchor, rtol, atol)
    else:
        traj = integrate_ode(slope, psi_anchor, lam_start, psi_star, rtol, atol)

    def integrand(nodes):
        return [source(float(s), float(v)) for s, v in zip(nodes, traj(nodes))]

    integral = simpson(integrand, psi_anchor, psi_star, n_panels, vectorized=True)
    return traj.final, integral, traj.grid.size - 1
