"""Pure-numpy reference implementations of the per-record likelihood kernels.

These are the hot inner loops of posterior sampling: every Metropolis step
evaluates one of them over all n records.  The compiled extension in
``_core.pyx`` implements the same signatures; this module is the fallback and
the correctness reference.
"""

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


def fbs_records(yt, wt, mu_y, mu_w, sigma_y, sigma_w, rho, include_jacobian, out=None):
    """Per-record log density of (log y, log w) under the bivariate normal
    sample model, optionally with the log-transform Jacobian so values refer
    to the original (y, w) scale.
    """
    if out is None:
        out = np.empty_like(yt)
    omr = 1.0 - rho * rho
    dy = (yt - mu_y) / sigma_y
    dw = (wt - mu_w) / sigma_w
    quad = (dy * dy - 2.0 * rho * dy * dw + dw * dw) / (2.0 * omr)
    out[:] = -LOG_2PI - np.log(sigma_y) - np.log(sigma_w) - 0.5 * np.log(omr) - quad
    if include_jacobian:
        out -= yt + wt
    return out


def fbs_weighted_sum(yt, wt, mu_y, mu_w, sigma_y, sigma_w, rho, include_jacobian, alpha):
    """Sum of alpha-weighted per-record log densities.

    Records with alpha == 0 contribute exactly zero, even when their raw log
    density is non-finite.
    """
    ll = fbs_records(yt, wt, mu_y, mu_w, sigma_y, sigma_w, rho, include_jacobian)
    live = alpha > 0.0
    return float(np.dot(alpha[live], ll[live]))


def fbp_records(yt, zpi, mu_y, xk, kappa_y, sigma_y, sigma_pi, include_jacobian,
                out=None):
    """Per-record log density for the sample-corrected population model
    (population outcome model times the size-biased inclusion model, divided
    by the unit-level normalizer).

    With include_jacobian the value is the joint density of (log y, log pi)
    and integrates to one over the plane; without it the value is the density
    of (log y, pi), the form in which the model is estimated.
    """
    if out is None:
        out = np.empty_like(yt)
    mu_z = kappa_y * yt + xk
    dz = (zpi - mu_z) / sigma_pi
    dy = (yt - mu_y) / sigma_y
    log_norm = xk + 0.5 * sigma_pi * sigma_pi + kappa_y * mu_y \
        + 0.5 * kappa_y * kappa_y * sigma_y * sigma_y
    out[:] = (
        -LOG_2PI - np.log(sigma_pi) - np.log(sigma_y)
        - 0.5 * dz * dz - 0.5 * dy * dy
        - log_norm
    )
    if include_jacobian:
        out += zpi
    return out


def fbp_weighted_sum(yt, zpi, mu_y, xk, kappa_y, sigma_y, sigma_pi,
                     include_jacobian, alpha):
    ll = fbp_records(yt, zpi, mu_y, xk, kappa_y, sigma_y, sigma_pi,
                     include_jacobian)
    live = alpha > 0.0
    return float(np.dot(alpha[live], ll[live]))
