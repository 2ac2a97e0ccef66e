# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: fused mixture loss/gradients and pair counting.

Mirrors the signatures and semantics of ``survmix._kernels_py``.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport erfc, exp, expm1, log, sqrt, tanh

cnp.import_array()

SELU_LAMBDA = 1.0507009873554804934193349852946
SELU_ALPHA = 1.6732632423543772848170429916717
LOG_2PI = 1.8378770664093454835606594728112

FAMILY_WEIBULL = 0
FAMILY_LOGNORMAL = 1

cdef double _SELU_L = 1.0507009873554804934193349852946
cdef double _SELU_A = 1.6732632423543772848170429916717
cdef double _LOG_2PI = 1.8378770664093454835606594728112
cdef double _LN2 = 0.6931471805599453094172321214582
cdef double _PI = 3.14159265358979323846
cdef double _EXP_ARG_MAX = 500.0
cdef double _LOG_ERFC_ASYMPTOTIC = 25.0


cdef inline double _log_erfc(double x) nogil:
    cdef double r, series
    if x < _LOG_ERFC_ASYMPTOTIC:
        return log(erfc(x))
    r = 1.0 / (x * x)
    series = 1.0 + r * (-0.5 + r * (0.75 + r * (-1.875 + r * 6.5625)))
    return -x * x - log(x) - 0.5 * log(_PI) + log(series)


def mixture_loss_grad(
    int family,
    double[:, ::1] gate_logits,
    double[:, ::1] shape_pre,
    double[:, ::1] scale_pre,
    double[::1] base_shape,
    double[::1] base_scale,
    double[::1] log_t,
    unsigned char[::1] is_event,
    double[::1] row_weight,
):
    """See ``survmix._kernels_py.mixture_loss_grad``."""
    cdef Py_ssize_t n = gate_logits.shape[0]
    cdef Py_ssize_t K = gate_logits.shape[1]
    cdef bint weibull = family == FAMILY_WEIBULL

    if not (weibull or family == FAMILY_LOGNORMAL):
        raise ValueError(f"unknown family code {family}")

    d_gate_arr = np.empty((n, K), dtype=np.float64)
    d_shape_arr = np.empty((n, K), dtype=np.float64)
    d_scale_arr = np.empty((n, K), dtype=np.float64)
    d_bshape_arr = np.zeros(K, dtype=np.float64)
    d_bscale_arr = np.zeros(K, dtype=np.float64)
    scratch = np.empty((6, K), dtype=np.float64)

    cdef double[:, ::1] d_gate = d_gate_arr
    cdef double[:, ::1] d_shape = d_shape_arr
    cdef double[:, ::1] d_scale = d_scale_arr
    cdef double[::1] d_bshape = d_bshape_arr
    cdef double[::1] d_bscale = d_bscale_arr
    cdef double[::1] q = scratch[0]
    cdef double[::1] dls = scratch[1]
    cdef double[::1] dlb = scratch[2]
    cdef double[::1] g = scratch[3]
    cdef double[::1] ds = scratch[4]
    cdef double[::1] db = scratch[5]

    cdef double loss = 0.0
    cdef Py_ssize_t i, k
    cdef bint ev
    cdef double w, lt, a_s, a_b, ls, lb, eta, z, ez
    cdef double inv_scale, u, log_q, hazard
    cdef double gmax, gsum, term, wgk

    with nogil:
        for i in range(n):
            w = row_weight[i]
            lt = log_t[i]
            ev = is_event[i] != 0
            for k in range(K):
                if weibull:
                    a_s = _SELU_L * (shape_pre[i, k] if shape_pre[i, k] > 0.0
                                     else _SELU_A * expm1(shape_pre[i, k]))
                    a_b = _SELU_L * (scale_pre[i, k] if scale_pre[i, k] > 0.0
                                     else _SELU_A * expm1(scale_pre[i, k]))
                    ds[k] = _SELU_L * (1.0 if shape_pre[i, k] > 0.0
                                       else _SELU_A * exp(shape_pre[i, k]))
                    db[k] = _SELU_L * (1.0 if scale_pre[i, k] > 0.0
                                       else _SELU_A * exp(scale_pre[i, k]))
                else:
                    a_s = tanh(shape_pre[i, k])
                    a_b = tanh(scale_pre[i, k])
                    ds[k] = 1.0 - a_s * a_s
                    db[k] = 1.0 - a_b * a_b
                ls = base_shape[k] + a_s
                lb = base_scale[k] + a_b
                if weibull:
                    eta = exp(ls)
                    z = eta * (lt - lb)
                    if z > _EXP_ARG_MAX:
                        z = _EXP_ARG_MAX
                    ez = exp(z)
                    if ev:
                        q[k] = ls - lb + (eta - 1.0) * (lt - lb) - ez
                        dls[k] = 1.0 + z - z * ez
                        dlb[k] = eta * (ez - 1.0)
                    else:
                        q[k] = -ez
                        dls[k] = -z * ez
                        dlb[k] = eta * ez
                else:
                    inv_scale = exp(-lb)
                    u = (lt - ls) * inv_scale
                    if ev:
                        q[k] = -lt - lb - 0.5 * _LOG_2PI - 0.5 * u * u
                        dls[k] = u * inv_scale
                        dlb[k] = u * u - 1.0
                    else:
                        log_q = _log_erfc(u / sqrt(2.0)) - _LN2
                        hazard = exp(-0.5 * u * u - 0.5 * _LOG_2PI - log_q)
                        q[k] = log_q
                        dls[k] = hazard * inv_scale
                        dlb[k] = hazard * u

            gmax = gate_logits[i, 0]
            for k in range(1, K):
                if gate_logits[i, k] > gmax:
                    gmax = gate_logits[i, k]
            gsum = 0.0
            for k in range(K):
                g[k] = exp(gate_logits[i, k] - gmax)
                gsum += g[k]
            term = 0.0
            for k in range(K):
                g[k] /= gsum
                term += g[k] * q[k]
            loss += w * term

            for k in range(K):
                wgk = w * g[k]
                d_gate[i, k] = wgk * (q[k] - term)
                d_shape[i, k] = wgk * dls[k] * ds[k]
                d_scale[i, k] = wgk * dlb[k] * db[k]
                d_bshape[k] += wgk * dls[k]
                d_bscale[k] += wgk * dlb[k]

    return loss, d_gate_arr, d_shape_arr, d_scale_arr, d_bshape_arr, d_bscale_arr


def pair_counts(
    double[::1] times,
    unsigned char[::1] is_event,
    double[::1] scores,
    double horizon,
):
    """See ``survmix._kernels_py.pair_counts``."""
    cdef Py_ssize_t n = times.shape[0]
    conc_arr = np.zeros(n, dtype=np.int64)
    ties_arr = np.zeros(n, dtype=np.int64)
    tot_arr = np.zeros(n, dtype=np.int64)
    cdef long long[::1] conc = conc_arr
    cdef long long[::1] ties = ties_arr
    cdef long long[::1] tot = tot_arr
    cdef Py_ssize_t i, j
    cdef double ti, si

    with nogil:
        for i in range(n):
            if is_event[i] == 0 or times[i] > horizon:
                continue
            ti = times[i]
            si = scores[i]
            for j in range(n):
                if times[j] > ti:
                    tot[i] += 1
                    if scores[j] < si:
                        conc[i] += 1
                    elif scores[j] == si:
                        ties[i] += 1

    return conc_arr, ties_arr, tot_arr
