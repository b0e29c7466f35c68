# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementation of the hot kernels.

Mirrors ``_reference.py`` operation for operation; both backends must
produce bit-identical output on the same platform (enforced by tests).
"""

from libc.math cimport exp, INFINITY

import numpy as np

BACKEND = "cython"


cdef inline double _qp_advance(double x, double dt, double r, double s_eff,
                               double g) nogil:
    cdef double f0 = -r * x * x - s_eff * x + g
    cdef double scale = x if x > 1e-30 else 1e-30
    cdef double est = (f0 if f0 >= 0 else -f0) * dt / (0.01 * scale)
    cdef long n_sub = <long>est + 1
    if n_sub > 1000000:
        n_sub = 1000000
    cdef double h = dt / n_sub
    cdef double k1, k2, k3, k4, x2, x3, x4
    cdef long i
    for i in range(n_sub):
        k1 = -r * x * x - s_eff * x + g
        x2 = x + 0.5 * h * k1
        k2 = -r * x2 * x2 - s_eff * x2 + g
        x3 = x + 0.5 * h * k2
        k3 = -r * x3 * x3 - s_eff * x3 + g
        x4 = x + h * k3
        k4 = -r * x4 * x4 - s_eff * x4 + g
        x = x + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if x < 0.0:
            x = 0.0
    return x


def qp_advance(double x, double dt, double r, double s_eff, double g):
    return _qp_advance(x, dt, r, s_eff, g)


def simulate_cycles(
    signed char[::1] states,
    unsigned char[:, ::1] out,
    double[:, :, ::1] u,
    double x_fast,
    double x_slow,
    const double[::1] gamma_base,
    const double[::1] inv_t1_scale,
    double c_gamma,
    double t_exposed_s,
    double dt_s,
    double r,
    double s_eff,
    double g,
    double slow_decay,
    const double[::1] ro10,
    const double[::1] ro01,
    double leak_prob,
    double leak_decay,
    const long long[::1] burst_idx,
    const double[::1] burst_x,
    const unsigned char[::1] burst_slow,
    x_trace,
    long trace_stride,
):
    cdef Py_ssize_t n_cycles = out.shape[0]
    cdef Py_ssize_t n_qubits = out.shape[1]
    cdef Py_ssize_t n_bursts = burst_idx.shape[0]
    cdef Py_ssize_t k, q, b = 0
    cdef double u0, u1, x_tot, scale_k, gamma, p_relax
    cdef signed char s
    cdef unsigned char outcome
    cdef bint do_trace = x_trace is not None
    cdef double[::1] trace_view
    if do_trace:
        trace_view = x_trace
    for k in range(n_cycles):
        while b < n_bursts and burst_idx[b] == <long long>k:
            if burst_slow[b]:
                x_slow += burst_x[b]
            else:
                x_fast += burst_x[b]
            b += 1
        x_tot = x_fast + x_slow
        scale_k = inv_t1_scale[k]
        for q in range(n_qubits):
            u0 = u[k, q, 0]
            u1 = u[k, q, 1]
            s = states[q]
            if s == 2:
                if u0 < leak_decay:
                    s = 0
                outcome = 0 if u1 < ro10[q] else 1
            else:
                s = 1 - s
                if s == 1:
                    gamma = gamma_base[q] * scale_k + c_gamma * x_tot
                    p_relax = 1.0 - exp(-gamma * t_exposed_s)
                    if u0 < p_relax:
                        s = 0
                    elif leak_prob > 0.0 and u0 > 1.0 - leak_prob:
                        s = 2
                if s == 1 or s == 2:
                    outcome = 0 if u1 < ro10[q] else 1
                else:
                    outcome = 1 if u1 < ro01[q] else 0
            states[q] = s
            out[k, q] = outcome
        if do_trace and k % trace_stride == 0:
            trace_view[k // trace_stride] = x_tot
        x_fast = _qp_advance(x_fast, dt_s, r, s_eff, g)
        x_slow = x_slow * slow_decay
    return x_fast, x_slow


def score_windows(
    const unsigned char[::1] n,
    const double[::1] values,
    long pre_len,
    const long long[::1] lag_start,
    const long long[::1] lag_stop,
):
    cdef Py_ssize_t n_len = n.shape[0]
    cdef Py_ssize_t t_len = values.shape[0]
    cdef Py_ssize_t n_cand = lag_start.shape[0]
    peaks_arr = np.empty(n_cand, dtype=np.float64)
    argmax_arr = np.empty(n_cand, dtype=np.int64)
    cdef double[::1] peaks = peaks_arr
    cdef long long[::1] argmax = argmax_arr
    cdef Py_ssize_t i, j, j0, j1
    cdef long long k, base, best_k
    cdef double acc, best
    for i in range(n_cand):
        best = -INFINITY
        best_k = lag_start[i]
        for k in range(lag_start[i], lag_stop[i]):
            acc = 0.0
            base = k - pre_len
            j0 = -base if base < 0 else 0
            j1 = n_len - base
            if j1 > t_len:
                j1 = t_len
            for j in range(j0, j1):
                acc += values[j] * n[base + j]
            if acc > best:
                best = acc
                best_k = k
        peaks[i] = best
        argmax[i] = best_k
    return peaks_arr, argmax_arr
