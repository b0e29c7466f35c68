"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from qubursts.core import AcquisitionConfig, OutcomeSeries

# Overrides that give the acceptance scenarios balanced statistics: a
# short exposed interval and small readout errors keep the baseline
# n >= 3 coincidence rate within a factor ~20-40 of the burst rate, and
# a large injection median pushes every burst far above the detection
# floor, so the threshold fit sees two well-separated clusters.
BALANCED = dict(
    t_exposed_us=0.1,
    ro_error_1to0=0.002,
    ro_error_0to1=0.002,
    inject_median=60.0,
    inject_sigma=0.5,
)


def make_config(n_qubits: int = 5, t_cycle_us: float = 30.0, **kwargs):
    """AcquisitionConfig with a consistent default timing breakdown."""
    base = dict(
        t_x_ns=20.0,
        t_wait_us=2.0,
        t_ro_us=2.0,
        m_extra_pulses=0,
        device_label="TEST",
        device_area_cm2=0.64,
    )
    base.update(kwargs)
    t_idle = t_cycle_us - (base["t_x_ns"] * 1e-3 + base["t_wait_us"] + base["t_ro_us"])
    return AcquisitionConfig(
        n_qubits=n_qubits, t_idle_us=t_idle, t_cycle_us=t_cycle_us, **base
    )


def make_series(outcomes, t_cycle_us: float = 30.0, **kwargs) -> OutcomeSeries:
    arr = np.asarray(outcomes, dtype=np.uint8)
    cfg = make_config(n_qubits=arr.shape[1], t_cycle_us=t_cycle_us, **kwargs)
    return OutcomeSeries(config=cfg, outcomes=arr)


def naive_candidates(n, n_th):
    """Brute-force candidate scan: maximal runs of n >= 1 holding n >= n_th.

    Returns a list of (region_start, region_end, peak_in_region) with
    half-open regions, by direct O(N) python iteration.
    """
    n = list(int(v) for v in n)
    out = []
    i = 0
    while i < len(n):
        if n[i] >= 1:
            j = i
            while j < len(n) and n[j] >= 1:
                j += 1
            peak = max(n[i:j])
            if peak >= n_th:
                out.append((i, j, peak))
            i = j
        else:
            i += 1
    return out


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
