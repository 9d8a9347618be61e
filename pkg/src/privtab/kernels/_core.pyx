# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-record likelihood kernels (see _ref.py for the reference)."""

from libc.math cimport log, INFINITY

import numpy as np

cdef double LOG_2PI = 1.8378770664093453


def fbs_records(double[::1] yt, double[::1] wt, double[::1] mu_y, double[::1] mu_w,
                double sigma_y, double sigma_w, double rho, bint include_jacobian,
                out=None):
    cdef Py_ssize_t n = yt.shape[0]
    if out is None:
        out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double omr = 1.0 - rho * rho
    cdef double norm = -LOG_2PI - log(sigma_y) - log(sigma_w) - 0.5 * log(omr)
    cdef double inv2omr = 1.0 / (2.0 * omr)
    cdef double dy, dw
    cdef Py_ssize_t i
    for i in range(n):
        dy = (yt[i] - mu_y[i]) / sigma_y
        dw = (wt[i] - mu_w[i]) / sigma_w
        o[i] = norm - (dy * dy - 2.0 * rho * dy * dw + dw * dw) * inv2omr
        if include_jacobian:
            o[i] -= yt[i] + wt[i]
    return out


def fbs_weighted_sum(double[::1] yt, double[::1] wt, double[::1] mu_y, double[::1] mu_w,
                     double sigma_y, double sigma_w, double rho, bint include_jacobian,
                     double[::1] alpha):
    cdef Py_ssize_t n = yt.shape[0]
    cdef double omr = 1.0 - rho * rho
    cdef double norm = -LOG_2PI - log(sigma_y) - log(sigma_w) - 0.5 * log(omr)
    cdef double inv2omr = 1.0 / (2.0 * omr)
    cdef double total = 0.0
    cdef double dy, dw, ll
    cdef Py_ssize_t i
    for i in range(n):
        if alpha[i] == 0.0:
            continue
        dy = (yt[i] - mu_y[i]) / sigma_y
        dw = (wt[i] - mu_w[i]) / sigma_w
        ll = norm - (dy * dy - 2.0 * rho * dy * dw + dw * dw) * inv2omr
        if include_jacobian:
            ll -= yt[i] + wt[i]
        total += alpha[i] * ll
    return total


def fbp_records(double[::1] yt, double[::1] zpi, double[::1] mu_y, double[::1] xk,
                double kappa_y, double sigma_y, double sigma_pi,
                bint include_jacobian, out=None):
    cdef Py_ssize_t n = yt.shape[0]
    if out is None:
        out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double norm = -LOG_2PI - log(sigma_pi) - log(sigma_y)
    cdef double half_sp2 = 0.5 * sigma_pi * sigma_pi
    cdef double half_k2sy2 = 0.5 * kappa_y * kappa_y * sigma_y * sigma_y
    cdef double dz, dy
    cdef Py_ssize_t i
    for i in range(n):
        dz = (zpi[i] - kappa_y * yt[i] - xk[i]) / sigma_pi
        dy = (yt[i] - mu_y[i]) / sigma_y
        o[i] = norm - 0.5 * dz * dz - 0.5 * dy * dy \
            - (xk[i] + half_sp2 + kappa_y * mu_y[i] + half_k2sy2)
        if include_jacobian:
            o[i] += zpi[i]
    return out


def fbp_weighted_sum(double[::1] yt, double[::1] zpi, double[::1] mu_y, double[::1] xk,
                     double kappa_y, double sigma_y, double sigma_pi,
                     bint include_jacobian, double[::1] alpha):
    cdef Py_ssize_t n = yt.shape[0]
    cdef double norm = -LOG_2PI - log(sigma_pi) - log(sigma_y)
    cdef double half_sp2 = 0.5 * sigma_pi * sigma_pi
    cdef double half_k2sy2 = 0.5 * kappa_y * kappa_y * sigma_y * sigma_y
    cdef double total = 0.0
    cdef double dz, dy, ll
    cdef Py_ssize_t i
    for i in range(n):
        if alpha[i] == 0.0:
            continue
        dz = (zpi[i] - kappa_y * yt[i] - xk[i]) / sigma_pi
        dy = (yt[i] - mu_y[i]) / sigma_y
        ll = norm - 0.5 * dz * dz - 0.5 * dy * dy \
            - (xk[i] + half_sp2 + kappa_y * mu_y[i] + half_k2sy2)
        if include_jacobian:
            ll += zpi[i]
        total += alpha[i] * ll
    return total
