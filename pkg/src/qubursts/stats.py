"""Event-ensemble statistics.

Cumulative sums, Poisson rate estimates, rate-vs-threshold curves,
averaged event traces with recovery-time extraction, area-normalized
rates, scenario comparisons, and time-binned rate histories for surge
monitoring.  All rates use acquisition time (cycles * t_cycle) and
Poisson counting errors (stderr = sqrt(N)/T).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import KEPT, KEPT_LONG_RECOVERY, REJECTED, EventRecord, RateEstimate

__all__ = [
    "AveragedTrace",
    "RateCurve",
    "RecoveryCriterion",
    "cumulative_sum",
    "estimate_rate",
    "rate_vs_threshold",
    "average_events",
    "extract_recovery_time",
    "normalize_rate",
    "compare_scenarios",
    "surge_history",
]


@dataclass(frozen=True)
class AveragedTrace:
    """Mean n(t) over events aligned at their matched-filter peak."""

    t_rel_s: np.ndarray
    mean_n: np.ndarray
    n_events: int
    baseline: float
    t_rec_s: float | None = None

    def __post_init__(self):
        if self.n_events < 1:
            raise ValueError("an averaged trace needs at least one event")
        if len(self.t_rel_s) != len(self.mean_n):
            raise ValueError("t_rel and mean_n must have equal length")


@dataclass(frozen=True)
class RateCurve:
    """Event rate as a function of the threshold n_th."""

    n_th: list[int]
    rates: list[RateEstimate]

    def counts(self) -> list[int]:
        return [r.n_events for r in self.rates]


@dataclass(frozen=True)
class RecoveryCriterion:
    """Operational definition of 'fully returned to baseline'.

    Recovery is declared at the earliest post-peak time where the mean
    trace stays within baseline + tol_fraction*(peak - baseline) for
    ``consecutive`` samples.
    """

    tol_fraction: float = 0.1
    consecutive: int = 20


def _matches(event: EventRecord, classification: str) -> bool:
    if classification == KEPT:
        return event.classification in (KEPT, KEPT_LONG_RECOVERY)
    return event.classification == classification


def cumulative_sum(
    events: Sequence[EventRecord],
    classification: str,
    total_cycles: int,
    t_cycle_s: float,
):
    """Step curve (time s, cumulative count) of matching events.

    The curve ends with a flat step at the end of the acquisition, so the
    final value equals the total count of matching events.
    """
    cycles = sorted(e.t0_cycle for e in events if _matches(e, classification))
    times = np.array([c * t_cycle_s for c in cycles] + [total_cycles * t_cycle_s])
    counts = np.arange(1, len(cycles) + 2)
    counts[-1] = len(cycles)
    return times, counts


def estimate_rate(n_events: int, duration_s: float) -> RateEstimate:
    """Poisson rate estimate: rate = N/T, stderr = sqrt(N)/T."""
    return RateEstimate(n_events=n_events, duration_s=duration_s)


def rate_vs_threshold(
    events: Sequence[EventRecord],
    n_th_range: Sequence[int],
    duration_s: float,
    classification: str = KEPT,
) -> RateCurve:
    """Rate of matching events with peak_n >= n_th, per threshold.

    Uses one candidate pass (peak_n filtering), not re-detection, so the
    kept curve is non-increasing by construction.
    """
    peaks = np.array(
        [e.peak_n for e in events if _matches(e, classification)], dtype=np.int64
    )
    rates = [
        estimate_rate(int((peaks >= n_th).sum()), duration_s) for n_th in n_th_range
    ]
    return RateCurve(n_th=list(n_th_range), rates=rates)


def average_events(
    events: Sequence[EventRecord],
    n: Sequence[int],
    window: tuple[int, int],
    t_cycle_s: float,
    classification: str = KEPT,
) -> AveragedTrace:
    """Average n(t) over events, aligned at each event's t0.

    ``window`` is (pre_cycles, post_cycles) around t0.  Only non-clipped
    events whose full window lies inside the trace contribute; the
    baseline is the mean of the pre-window segment.
    """
    arr = np.asarray(n, dtype=np.float64)
    pre, post = window
    acc = np.zeros(pre + post)
    count = 0
    for e in events:
        if e.boundary_clipped or not _matches(e, classification):
            continue
        lo, hi = e.t0_cycle - pre, e.t0_cycle + post
        if lo < 0 or hi > len(arr):
            continue
        acc += arr[lo:hi]
        count += 1
    if count == 0:
        raise ValueError("no usable events to average")
    mean = acc / count
    t_rel = (np.arange(pre + post) - pre) * t_cycle_s
    baseline = float(mean[:pre].mean()) if pre > 0 else 0.0
    return AveragedTrace(
        t_rel_s=t_rel, mean_n=mean, n_events=count, baseline=baseline
    )


def extract_recovery_time(
    trace: AveragedTrace, criterion: RecoveryCriterion = RecoveryCriterion()
) -> float:
    """Earliest post-peak time at which the trace stays at baseline.

    Returns t_rec in seconds relative to the alignment origin.  Raises
    "no peak" if the trace never rises above baseline and "unrecovered"
    if it never settles within the window.
    """
    mean = trace.mean_n
    post = trace.t_rel_s >= 0
    if not post.any():
        raise ValueError("no peak: trace has no post-origin samples")
    peak_idx = int(np.flatnonzero(post)[0] + np.argmax(mean[post]))
    peak = mean[peak_idx]
    height = peak - trace.baseline
    if height <= 0:
        raise ValueError("no peak: trace never rises above baseline")
    tol = criterion.tol_fraction * height
    settled = mean <= trace.baseline + tol
    w = criterion.consecutive
    for i in range(peak_idx + 1, len(mean) - w + 1):
        if settled[i : i + w].all():
            return float(trace.t_rel_s[i])
    raise ValueError("unrecovered: trace does not settle within the window")


def normalize_rate(rate: RateEstimate, area_cm2: float) -> float:
    """Rate per cm^2 per minute."""
    if area_cm2 <= 0:
        raise ValueError("area must be positive")
    return rate.rate * 60.0 / area_cm2


def compare_scenarios(a: RateEstimate, b: RateEstimate) -> tuple[float, float]:
    """Fractional rate reduction of b relative to a, with propagated error.

    reduction = 1 - b/a; the error is the first-order worst-case
    propagation (b/a) * (stderr_a/a + stderr_b/b).  A negative reduction
    means b is an increase over a.
    """
    if a.rate <= 0:
        raise ValueError("baseline rate must be positive")
    ratio = b.rate / a.rate
    if b.rate > 0:
        err = ratio * (a.stderr / a.rate + b.stderr / b.rate)
    else:
        err = a.stderr / a.rate
    return 1.0 - ratio, err


def surge_history(
    events: Sequence[EventRecord],
    bin_width_s: float,
    duration_s: float,
    t_cycle_s: float,
    classification: str = KEPT,
):
    """Time-binned rate series over the acquisition.

    Returns (bin_centers_s, [RateEstimate per bin]); empty bins report a
    zero rate.  Suitable for spotting order-of-magnitude rate changes.
    """
    if bin_width_s <= 0:
        raise ValueError("bin_width_s must be positive")
    n_bins = max(1, int(np.ceil(duration_s / bin_width_s)))
    times = np.array(
        [e.t0_cycle * t_cycle_s for e in events if _matches(e, classification)]
    )
    counts, edges = np.histogram(times, bins=n_bins, range=(0, n_bins * bin_width_s))
    centers = (edges[:-1] + edges[1:]) / 2
    rates = [estimate_rate(int(c), bin_width_s) for c in counts]
    return centers, rates
