"""Pure-Python reference implementation of the hot kernels.

This is the semantic ground truth: the compiled extension in
``_accel.pyx`` mirrors the arithmetic here operation for operation, so
both backends produce bit-identical results on the same platform.  The
reference is used as an automatic fallback when the extension is not
built, and by the benchmark suite.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"


def qp_advance(x: float, dt: float, r: float, s_eff: float, g: float) -> float:
    """Advance dx/dt = -r x^2 - s_eff x + g by one step of classical RK4.

    The step is subdivided so the estimated relative change per substep
    stays below 1%.  The density is clamped at zero after every substep.
    """
    f0 = -r * x * x - s_eff * x + g
    scale = x if x > 1e-30 else 1e-30
    n_sub = int(abs(f0) * dt / (0.01 * scale)) + 1
    if n_sub > 1000000:
        n_sub = 1000000
    h = dt / n_sub
    for _ in range(n_sub):
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


def simulate_cycles(
    states,
    out,
    u,
    x_fast: float,
    x_slow: float,
    gamma_base,
    inv_t1_scale,
    c_gamma: float,
    t_exposed_s: float,
    dt_s: float,
    r: float,
    s_eff: float,
    g: float,
    slow_decay: float,
    ro10,
    ro01,
    leak_prob: float,
    leak_decay: float,
    burst_idx,
    burst_x,
    burst_slow,
    x_trace,
    trace_stride: int,
):
    """Run one chunk of detection cycles; returns the updated (x_fast, x_slow).

    Per cycle: inject any bursts due this cycle, apply the pi pulse,
    relaxation at the instantaneous rate Gamma1 = gamma_base/t1_scale +
    c_gamma * x, readout misassignment, then advance the quasiparticle
    densities by one cycle.  States: 0 ground, 1 excited, 2 leaked.
    Exactly two uniforms per qubit-cycle are consumed, in fixed order.
    """
    n_cycles, n_qubits = out.shape
    n_bursts = len(burst_idx)
    b = 0
    for k in range(n_cycles):
        while b < n_bursts and burst_idx[b] == k:
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
                # leaked: reads 1 (modulo misassignment), may decay to ground
                if u0 < leak_decay:
                    s = 0
                outcome = 0 if u1 < ro10[q] else 1
            else:
                s = 1 - s  # pi pulse
                if s == 1:
                    gamma = gamma_base[q] * scale_k + c_gamma * x_tot
                    p_relax = 1.0 - math.exp(-gamma * t_exposed_s)
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
        if x_trace is not None and k % trace_stride == 0:
            x_trace[k // trace_stride] = x_tot
        x_fast = qp_advance(x_fast, dt_s, r, s_eff, g)
        x_slow = x_slow * slow_decay
    return x_fast, x_slow


def score_windows(n, values, pre_len: int, lag_start, lag_stop):
    """Matched-filter peak search over per-candidate lag windows.

    For candidate i, evaluates the correlation of the zero-mean template
    ``values`` against ``n`` at every lag in [lag_start[i], lag_stop[i])
    (zero padding outside the trace) and returns the peak score and the
    earliest lag attaining it.
    """
    n_len = len(n)
    t_len = len(values)
    n_cand = len(lag_start)
    peaks = np.empty(n_cand, dtype=np.float64)
    argmax = np.empty(n_cand, dtype=np.int64)
    for i in range(n_cand):
        best = -math.inf
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
    return peaks, argmax
