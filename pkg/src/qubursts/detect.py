"""Two-pass burst-detection pipeline.

First pass: per-qubit error flags (two consecutive 0 outcomes), the
simultaneous-error count n(t), candidate excursions with n >= n_th, and
matched-filter scoring against a zero-mean stepped-exponential template
whose peak sets each event's alignment origin.  Candidates are kept or
rejected by a threshold fitted to best separate the two clusters of peak
scores.  Second pass: kept events are re-scored against a 2 ms template
to flag atypically long recoveries.

The hot scoring loop runs in the compiled kernel when available; every
operation here is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .core import KEPT, KEPT_LONG_RECOVERY, REJECTED, EventRecord, OutcomeSeries

__all__ = [
    "TemplateSpec",
    "ThresholdFit",
    "CandidateSet",
    "DetectionResult",
    "compute_error_flags",
    "count_simultaneous",
    "simultaneous_errors",
    "make_template",
    "matched_filter",
    "mark_candidates",
    "score_and_align",
    "separation_score",
    "fit_threshold",
    "optimize_tau",
    "classify",
    "second_pass_long_recovery",
    "detect_events",
    "detect_events_chunked",
    "default_tau_grid",
    "SECOND_PASS_TAU_S",
    "BASELINE_DISCARD",
]

# second-pass template decay constant (seconds) and baseline discard level
SECOND_PASS_TAU_S = 2e-3
BASELINE_DISCARD = 1.5

# cycles of n(t) preceding the window used for the baseline estimate
BASELINE_PRE_CYCLES = 200

# keep/relabel only when the peak-score clusters actually separate;
# below this the distribution is treated as a single (baseline) cluster
MIN_SEPARATION = 0.3

# log-domain resolution floor: clusters whose scales differ by less than
# about a factor e are treated as unresolved structure of one cluster
_LOG_RESOLUTION = 0.5


@dataclass(frozen=True)
class TemplateSpec:
    """Zero-mean stepped-exponential matched-filter template.

    The raw shape is 0 for ``pre_len`` cycles, then exp(-k/tau) for
    k = 0..post_len-1; ``values`` is the raw shape minus its mean.
    """

    tau_cycles: float
    pre_len: int
    post_len: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if len(vals) != self.pre_len + self.post_len:
            raise ValueError("values length must equal pre_len + post_len")
        if abs(vals.sum()) > 1e-12 * len(vals):
            raise ValueError("template must have zero average")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.pre_len + self.post_len


@dataclass(frozen=True)
class ThresholdFit:
    """Keep/reject threshold on the matched-filter peak axis."""

    threshold: float
    separation_score: float
    histogram_edges: np.ndarray
    histogram_counts: np.ndarray
    tau_cycles: float = float("nan")


def make_template(tau_cycles: float, pre_len: int, post_len: int) -> TemplateSpec:
    """Build the zero-mean stepped-exponential template."""
    if tau_cycles <= 0:
        raise ValueError("tau_cycles must be positive")
    if pre_len < 1 or post_len < 2:
        raise ValueError("degenerate template lengths")
    raw = np.zeros(pre_len + post_len)
    raw[pre_len:] = np.exp(-np.arange(post_len) / tau_cycles)
    values = raw - raw.mean()
    return TemplateSpec(
        tau_cycles=tau_cycles, pre_len=pre_len, post_len=post_len, values=values
    )


def compute_error_flags(series: OutcomeSeries) -> np.ndarray:
    """Per-qubit error flags: flag[k, q] = 1 iff outcomes k-1 and k are both 0.

    Row 0 is all zeros.  Consecutive 1 outcomes (the leakage signature)
    never flag.
    """
    out = series.outcomes
    flags = np.zeros_like(out)
    if len(out) > 1:
        np.logical_and(out[1:] == 0, out[:-1] == 0, out=flags[1:].view(bool))
    return flags


def count_simultaneous(flags: np.ndarray) -> np.ndarray:
    """Number of qubits in error per cycle."""
    if flags.shape[1] > 255:
        raise ValueError("more than 255 qubits not supported")
    return flags.sum(axis=1, dtype=np.uint8)


def simultaneous_errors(
    series: OutcomeSeries, chunk_cycles: int = 4_000_000
) -> np.ndarray:
    """n(t) for a full series, computed in chunks to bound peak memory."""
    out = series.outcomes
    n = np.zeros(len(out), dtype=np.uint8)
    for lo in range(1, len(out), chunk_cycles):
        hi = min(lo + chunk_cycles, len(out))
        zeros = out[lo - 1 : hi] == 0
        np.sum(zeros[1:] & zeros[:-1], axis=1, dtype=np.uint8, out=n[lo:hi])
    return n


def matched_filter(n: Sequence[float], template: TemplateSpec) -> np.ndarray:
    """Correlate n(t) against the template with zero padding at the edges.

    out[k] = sum_j values[j] * n[k + j - pre_len]; the zero-mean template
    makes the output invariant under adding a constant to n.
    """
    arr = np.asarray(n, dtype=np.float64)
    if len(arr) < len(template):
        raise ValueError("series shorter than template")
    c = np.correlate(arr, template.values, mode="full")
    start = template.post_len - 1
    return c[start : start + len(arr)]


def _find_regions(n: np.ndarray, n_th: int):
    """Maximal contiguous runs of n >= 1 containing a sample with n >= n_th.

    Returns (starts, ends, peaks) with half-open core regions [start, end).
    """
    if len(n) == 0:
        e = np.empty(0, dtype=np.int64)
        return e, e.copy(), e.copy()
    active = n >= 1
    # runs start where the mask rises and end where it falls
    rises = np.flatnonzero(~active[:-1] & active[1:]) + 1
    falls = np.flatnonzero(active[:-1] & ~active[1:]) + 1
    if active[0]:
        rises = np.concatenate(([0], rises))
    if active[-1]:
        falls = np.concatenate((falls, [len(n)]))
    if len(rises) == 0:
        e = np.empty(0, dtype=np.int64)
        return e, e.copy(), e.copy()
    # max over [start_i, start_{i+1}) equals max over the run: gaps are zero
    peaks = np.maximum.reduceat(n, rises).astype(np.int64)
    keep = peaks >= n_th
    return rises[keep].astype(np.int64), falls[keep].astype(np.int64), peaks[keep]


@dataclass
class CandidateSet:
    """Array-backed candidate list (one entry per excursion).

    Core regions [region_start, region_end) are disjoint; windows add the
    scoring/averaging tail and may overlap.  ``label`` is 0 rejected,
    1 kept, 2 kept_long_recovery; ``discarded`` marks second-pass
    baseline discards.
    """

    region_start: np.ndarray
    region_end: np.ndarray
    window_start: np.ndarray
    window_end: np.ndarray
    peak_n: np.ndarray
    t0: np.ndarray
    mf_peak: np.ndarray
    clipped: np.ndarray
    baseline_pre: np.ndarray
    label: np.ndarray
    second_peak: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.region_start)

    def select(self, mask: np.ndarray) -> "CandidateSet":
        return CandidateSet(
            *(
                None if f is None else f[mask]
                for f in (
                    self.region_start,
                    self.region_end,
                    self.window_start,
                    self.window_end,
                    self.peak_n,
                    self.t0,
                    self.mf_peak,
                    self.clipped,
                    self.baseline_pre,
                    self.label,
                    self.second_peak,
                )
            )
        )

    def to_records(self) -> list[EventRecord]:
        labels = {0: REJECTED, 1: KEPT, 2: KEPT_LONG_RECOVERY}
        return [
            EventRecord(
                t0_cycle=int(self.t0[i]),
                peak_n=int(self.peak_n[i]),
                window_start=int(self.window_start[i]),
                window_end=int(self.window_end[i]),
                mf_peak=float(self.mf_peak[i]),
                classification=labels[int(self.label[i])],
                baseline_pre=float(self.baseline_pre[i]),
                boundary_clipped=bool(self.clipped[i]),
            )
            for i in range(len(self))
        ]


def _tail_cycles(tau_cycles: float) -> int:
    return int(min(10 * tau_cycles, 5000))


def _segment_means(n: np.ndarray, starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    """Mean of n over [starts[i], stops[i]); empty segments give 0."""
    lengths = stops - starts
    means = np.zeros(len(starts), dtype=np.float64)
    nonempty = lengths > 0
    if nonempty.any():
        idx = np.empty(2 * int(nonempty.sum()), dtype=np.intp)
        idx[0::2] = starts[nonempty]
        idx[1::2] = stops[nonempty]
        # reduceat over interleaved (start, stop) pairs; odd slots discarded
        safe = np.minimum(idx, len(n) - 1)
        sums = np.add.reduceat(n.astype(np.int64), safe)[0::2]
        sums[idx[1::2] <= idx[0::2]] = 0
        means[nonempty] = sums / lengths[nonempty]
    return means


def _segment_maxes(n: np.ndarray, starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    maxes = np.zeros(len(starts), dtype=np.int64)
    nonempty = stops > starts
    if nonempty.any():
        idx = np.empty(2 * int(nonempty.sum()), dtype=np.intp)
        idx[0::2] = starts[nonempty]
        idx[1::2] = stops[nonempty]
        safe = np.minimum(idx, len(n) - 1)
        vals = np.maximum.reduceat(n, safe)[0::2].astype(np.int64)
        vals[idx[1::2] <= idx[0::2]] = 0
        maxes[nonempty] = vals
    return maxes


def _build_candidates(
    n: np.ndarray, n_th: int, tail_cycles: int, n_qubits: int | None = None
) -> CandidateSet:
    if n_th < 1:
        raise ValueError("n_th must be >= 1")
    if n_qubits is not None and n_th > n_qubits:
        raise ValueError(f"n_th={n_th} exceeds qubit count {n_qubits}")
    starts, ends, peaks = _find_regions(n, n_th)
    window_end = np.minimum(ends + tail_cycles, len(n))
    tail_peaks = _segment_maxes(n, ends, window_end)
    peak_n = np.maximum(peaks, tail_peaks)
    baseline_pre = _segment_means(
        n, np.maximum(starts - BASELINE_PRE_CYCLES, 0), starts
    )
    return CandidateSet(
        region_start=starts,
        region_end=ends,
        window_start=starts.copy(),
        window_end=window_end,
        peak_n=peak_n,
        t0=starts.copy(),
        mf_peak=np.full(len(starts), np.nan),
        clipped=np.zeros(len(starts), dtype=bool),
        baseline_pre=baseline_pre,
        label=np.zeros(len(starts), dtype=np.int8),
    )


def mark_candidates(
    n: Sequence[int], n_th: int, tail_cycles: int | None = None
) -> list[EventRecord]:
    """First-pass candidate marking on the simultaneous-error count.

    One candidate per maximal contiguous run of n >= 1 that contains a
    sample with n >= n_th; the window extends past the run end by
    ``tail_cycles`` (default 5000).
    """
    arr = np.asarray(n, dtype=np.uint8)
    cs = _build_candidates(arr, n_th, 5000 if tail_cycles is None else tail_cycles)
    return cs.to_records()


def _score_candidates(
    cs: CandidateSet,
    n: np.ndarray,
    template: TemplateSpec,
    n_offset: int = 0,
) -> None:
    """Fill mf_peak / t0 / clipped in place.

    The peak is searched over lags [region_start - pre_len,
    region_end + pre_len); ties resolve to the earliest lag.  ``n`` may
    be a slab of the full trace starting at absolute cycle ``n_offset``.
    """
    if len(cs) == 0:
        return
    pre = template.pre_len
    lag_start = cs.region_start - pre
    lag_stop = cs.region_end + pre
    peaks, argmax = kernels.score_windows(
        np.ascontiguousarray(n, dtype=np.uint8),
        template.values,
        pre,
        np.ascontiguousarray(lag_start - n_offset, dtype=np.int64),
        np.ascontiguousarray(lag_stop - n_offset, dtype=np.int64),
    )
    cs.mf_peak[:] = peaks
    cs.t0[:] = argmax + n_offset
    # the filter peak may land just outside the run; widen the window
    np.minimum(cs.window_start, cs.t0, out=cs.window_start)
    np.maximum(cs.window_start, 0, out=cs.window_start)
    np.maximum(cs.t0, cs.window_start, out=cs.t0)
    np.maximum(cs.window_end, cs.t0 + 1, out=cs.window_end)
    total = n_offset + len(n)
    cs.clipped[:] = (cs.region_start - pre < 0) | (
        cs.window_end + template.post_len > total
    )


def score_and_align(
    candidate: EventRecord, n: Sequence[int], template: TemplateSpec
) -> EventRecord:
    """Score one candidate: peak matched-filter output sets mf_peak and t0."""
    arr = np.asarray(n, dtype=np.uint8)
    cs = CandidateSet(
        region_start=np.array([candidate.window_start], dtype=np.int64),
        region_end=np.array([candidate.window_end], dtype=np.int64),
        window_start=np.array([candidate.window_start], dtype=np.int64),
        window_end=np.array([candidate.window_end], dtype=np.int64),
        peak_n=np.array([candidate.peak_n], dtype=np.int64),
        t0=np.array([candidate.t0_cycle], dtype=np.int64),
        mf_peak=np.array([np.nan]),
        clipped=np.array([False]),
        baseline_pre=np.array([candidate.baseline_pre]),
        label=np.zeros(1, dtype=np.int8),
    )
    # region_end here is the full window; search the whole of it
    cs.region_end[0] = candidate.window_end
    _score_candidates(cs, arr, template)
    return replace(
        candidate,
        mf_peak=float(cs.mf_peak[0]),
        t0_cycle=int(cs.t0[0]),
        window_start=int(cs.window_start[0]),
        window_end=int(cs.window_end[0]),
        boundary_clipped=bool(cs.clipped[0]),
    )


def _split_scores(sorted_logs: np.ndarray, counts_lo: np.ndarray) -> np.ndarray:
    """Separation score for each candidate split of a sorted log sample.

    Score = (between-cluster variance / total variance) * overlap
    discount, where the discount max(0, 1 - 1/D^2) uses the cluster-mean
    gap D in units of the summed cluster widths (each width carries the
    ``_LOG_RESOLUTION`` floor).  A genuinely bimodal sample scores near
    1; any split of a single cluster -- including one with unresolved
    fine structure -- scores near 0.
    """
    n_tot = len(sorted_logs)
    c1 = np.cumsum(sorted_logs)
    c2 = np.cumsum(sorted_logs**2)
    counts_hi = n_tot - counts_lo
    sum_lo = c1[counts_lo - 1]
    sumsq_lo = c2[counts_lo - 1]
    mean_lo = sum_lo / counts_lo
    mean_hi = (c1[-1] - sum_lo) / counts_hi
    var_lo = np.maximum(sumsq_lo / counts_lo - mean_lo**2, 0.0)
    var_hi = np.maximum((c2[-1] - sumsq_lo) / counts_hi - mean_hi**2, 0.0)
    mean = c1[-1] / n_tot
    total_var = c2[-1] / n_tot - mean**2
    if total_var <= 0:
        raise ValueError("degenerate distribution: all peaks identical")
    between = (
        counts_lo * (mean_lo - mean) ** 2 + counts_hi * (mean_hi - mean) ** 2
    ) / n_tot
    width = np.sqrt(var_lo + _LOG_RESOLUTION**2) + np.sqrt(var_hi + _LOG_RESOLUTION**2)
    d2 = ((mean_hi - mean_lo) / width) ** 2
    with np.errstate(divide="ignore"):
        discount = np.maximum(0.0, 1.0 - 1.0 / d2)
    return (between / total_var) * discount


def separation_score(peaks: np.ndarray, threshold: float) -> float:
    """Two-cluster separation of the log peak values at a given split.

    Between-cluster over total variance, discounted by cluster overlap
    (see :func:`fit_threshold`); 0 when either side of the split is
    empty or the clusters are unresolved, near 1 for well-separated
    clusters.
    """
    arr = np.asarray(peaks, dtype=np.float64)
    logs = np.sort(np.log(np.maximum(arr, 1e-12)))
    count_lo = int((arr < threshold).sum())
    if count_lo == 0 or count_lo == len(arr):
        return 0.0
    return float(_split_scores(logs, np.array([count_lo]))[0])


def _best_split(peaks: np.ndarray):
    """Exhaustive midpoint scan maximizing the two-cluster separation score.

    Returns (threshold, score).  Candidate thresholds are midpoints
    between sorted unique peaks (linear domain); the score is evaluated
    on the log values.
    """
    arr = np.asarray(peaks, dtype=np.float64)
    uniq = np.unique(arr)
    if len(uniq) < 2:
        raise ValueError("degenerate distribution: all peaks identical")
    sorted_peaks = np.sort(arr)
    logs = np.log(np.maximum(sorted_peaks, 1e-12))
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    counts_lo = np.searchsorted(sorted_peaks, mids, side="left")
    scores = _split_scores(logs, counts_lo)
    best = int(np.argmax(scores))
    return float(mids[best]), float(scores[best])


def fit_threshold(
    peaks: Sequence[float],
    policy: str = "min_false_positive_at_nth3",
    tau_cycles: float = float("nan"),
) -> ThresholdFit:
    """Fit the keep/reject threshold from the peak-score distribution.

    The decision threshold comes from an exhaustive midpoint scan; the
    log-spaced histogram is reported for diagnostics only.  The fitted
    threshold is reused for all n_th >= 3.
    """
    if policy != "min_false_positive_at_nth3":
        raise ValueError(f"unknown policy {policy!r}")
    arr = np.asarray(peaks, dtype=np.float64)
    if len(arr) < 2:
        raise ValueError("need at least 2 peaks to fit a threshold")
    threshold, score = _best_split(arr)
    pos = np.maximum(arr, 1e-12)
    n_bins = math.ceil(math.sqrt(len(arr)))
    edges = np.geomspace(pos.min(), pos.max() * (1 + 1e-12), n_bins + 1)
    counts, edges = np.histogram(pos, bins=edges)
    return ThresholdFit(
        threshold=threshold,
        separation_score=score,
        histogram_edges=edges,
        histogram_counts=counts,
        tau_cycles=tau_cycles,
    )


def default_tau_grid(lo: float = 1.0, hi: float = 1000.0, points: int = 16):
    """Logarithmic decay-constant grid (cycles) for the template scan."""
    return np.geomspace(lo, hi, points)


def optimize_tau(peaks_by_tau: Mapping[float, Sequence[float]]) -> float:
    """Pick the grid tau whose peak scores best split into two clusters."""
    if not peaks_by_tau:
        raise ValueError("empty tau grid")
    best_tau, best_score = None, -np.inf
    for tau, peaks in peaks_by_tau.items():
        arr = np.asarray(peaks, dtype=np.float64)
        if len(arr) < 2:
            raise ValueError("need at least 2 candidates to optimize tau")
        _, score = _best_split(arr)
        if score > best_score:
            best_tau, best_score = tau, score
    return best_tau


def classify(
    candidates: Sequence[EventRecord], fit: ThresholdFit
) -> list[EventRecord]:
    """Keep candidates with mf_peak >= threshold; clipped ones are rejected."""
    out = []
    for cand in candidates:
        kept = (not cand.boundary_clipped) and cand.mf_peak >= fit.threshold
        out.append(replace(cand, classification=KEPT if kept else REJECTED))
    return out


def _template_lengths(tau_cycles: float) -> tuple[int, int]:
    pre = max(4, math.ceil(2 * tau_cycles))
    post = max(8, math.ceil(5 * tau_cycles))
    return pre, post


def second_pass_long_recovery(
    kept: Sequence[EventRecord],
    n: Sequence[int],
    t_cycle_s: float,
    tau_s: float = SECOND_PASS_TAU_S,
) -> list[EventRecord]:
    """Second pass: relabel kept events with atypically long recoveries.

    Kept events are re-scored against a tau = 2 ms template; events above
    a freshly fitted threshold become ``kept_long_recovery``.  Events
    whose pre-window baseline exceeds 1.5 are removed entirely.  If the
    second-pass scores do not separate into two clusters, nothing is
    relabeled.
    """
    if not t_cycle_s or t_cycle_s <= 0:
        raise ValueError("t_cycle missing or non-positive")
    survivors = [e for e in kept if e.baseline_pre <= BASELINE_DISCARD]
    if len(survivors) < 2:
        return survivors
    arr = np.asarray(n, dtype=np.uint8)
    tau_cycles = tau_s / t_cycle_s
    pre, post = _template_lengths(tau_cycles)
    template = make_template(tau_cycles, pre, post)
    rescored = [score_and_align(e, arr, template) for e in survivors]
    peaks = np.array([e.mf_peak for e in rescored])
    try:
        threshold, score = _best_split(peaks)
    except ValueError:
        return survivors
    if score < MIN_SEPARATION:
        return survivors
    out = []
    for orig, scored in zip(survivors, rescored):
        if scored.mf_peak >= threshold and not scored.boundary_clipped:
            out.append(replace(orig, classification=KEPT_LONG_RECOVERY))
        else:
            out.append(orig)
    return out


@dataclass
class DetectionResult:
    """Full pipeline output over one trace."""

    candidates: CandidateSet
    fit: ThresholdFit
    template: TemplateSpec
    n: np.ndarray
    t_cycle_s: float
    n_th: int
    second_fit: ThresholdFit | None = None

    @property
    def events(self) -> list[EventRecord]:
        records = self.candidates.to_records()
        records.sort(key=lambda e: (e.window_start, e.t0_cycle))
        return records

    def kept_mask(self) -> np.ndarray:
        return self.candidates.label >= 1


def _dedupe_same_peak(cs: CandidateSet) -> CandidateSet:
    """Collapse candidates that resolved to the same filter peak.

    A long recovery tail can fragment into several n >= 1 excursions;
    trailing fragments search lags that reach back into the parent
    excursion and lock onto its peak.  Since the peak location defines
    the event origin t0, candidates sharing t0 are one physical event:
    keep the earliest (the parent).
    """
    if len(cs) < 2:
        return cs
    _, first_idx = np.unique(cs.t0, return_index=True)
    if len(first_idx) == len(cs):
        return cs
    return cs.select(np.sort(first_idx))


def _guard_low_separation(fit: ThresholdFit, peaks: np.ndarray) -> ThresholdFit:
    """Treat a poorly separated fit as a single baseline cluster.

    When the separation score is below ``MIN_SEPARATION`` there is no
    credible second cluster to keep, so the effective threshold is moved
    just above the largest peak and every candidate is rejected.  The
    measured score is preserved so callers can warn.
    """
    if fit.separation_score >= MIN_SEPARATION or len(peaks) == 0:
        return fit
    return replace(fit, threshold=float(np.nextafter(np.max(peaks), np.inf)))


# cap on candidates scored per grid point during the tau scan
_TAU_SCAN_MAX_CANDIDATES = 2000

# scan-phase lag slack around each excursion's core region
_TAU_SCAN_LAG_MARGIN = 2


def _resolve_tau(n, cs, n_th, tau, tau_grid):
    if tau != "auto":
        return float(tau)
    grid = default_tau_grid() if tau_grid is None else np.asarray(tau_grid, float)
    if len(cs) < 2:
        raise ValueError("need at least 2 candidates to optimize tau")
    subset = cs
    if len(cs) > _TAU_SCAN_MAX_CANDIDATES:
        step = len(cs) // _TAU_SCAN_MAX_CANDIDATES + 1
        subset = cs.select(np.arange(0, len(cs), step))
    # During the scan the peak is searched only a couple of lags around
    # each excursion: the stepped template aligns at the run onset, and
    # choosing tau needs the cluster structure, not exact peak positions.
    # The selected tau then drives a full-width scoring pass.
    lag_start = np.ascontiguousarray(
        subset.region_start - _TAU_SCAN_LAG_MARGIN, dtype=np.int64
    )
    lag_stop = np.ascontiguousarray(
        subset.region_end + _TAU_SCAN_LAG_MARGIN, dtype=np.int64
    )
    n8 = np.ascontiguousarray(n, dtype=np.uint8)
    peaks_by_tau = {}
    for tau_c in grid:
        pre, post = _template_lengths(tau_c)
        template = make_template(tau_c, pre, post)
        peaks, _ = kernels.score_windows(
            n8, template.values, template.pre_len, lag_start, lag_stop
        )
        peaks_by_tau[float(tau_c)] = peaks
    return optimize_tau(peaks_by_tau)


def detect_events(
    series_or_n,
    n_th: int = 3,
    tau="auto",
    t_cycle_s: float | None = None,
    n_qubits: int | None = None,
    second_pass: bool = False,
    tau_grid=None,
    fit: ThresholdFit | None = None,
) -> DetectionResult:
    """Run the full two-pass pipeline over one trace.

    Accepts an OutcomeSeries, or a precomputed n(t) plus ``t_cycle_s``
    and ``n_qubits``.  ``tau`` is a decay constant in cycles or "auto"
    for the grid scan.  Passing ``fit`` reuses an existing threshold fit
    (e.g. to classify a control run with the threshold of a burst run).
    """
    if isinstance(series_or_n, OutcomeSeries):
        n = simultaneous_errors(series_or_n)
        t_cycle_s = series_or_n.config.t_cycle_s
        n_qubits = series_or_n.config.n_qubits
    else:
        n = np.asarray(series_or_n, dtype=np.uint8)
        if t_cycle_s is None:
            raise ValueError("t_cycle_s required when passing a raw n series")

    probe = _build_candidates(n, n_th, 0, n_qubits)
    tau_cycles = _resolve_tau(n, probe, n_th, tau, tau_grid)
    pre, post = _template_lengths(tau_cycles)
    template = make_template(tau_cycles, pre, post)
    cs = _build_candidates(n, n_th, _tail_cycles(tau_cycles), n_qubits)
    _score_candidates(cs, n, template)
    cs = _dedupe_same_peak(cs)
    if fit is None:
        fit = fit_threshold(cs.mf_peak, tau_cycles=tau_cycles)
        fit = _guard_low_separation(fit, cs.mf_peak)
    cs.label[:] = np.where(
        (cs.mf_peak >= fit.threshold) & ~cs.clipped, 1, 0
    ).astype(np.int8)
    result = DetectionResult(
        candidates=cs, fit=fit, template=template, n=n,
        t_cycle_s=t_cycle_s, n_th=n_th,
    )
    if second_pass:
        _apply_second_pass(result)
    return result


def _apply_second_pass(result: DetectionResult) -> None:
    """Array-level second pass mirroring :func:`second_pass_long_recovery`."""
    cs = result.candidates
    kept = cs.label == 1
    discard = kept & (cs.baseline_pre > BASELINE_DISCARD)
    if discard.any():
        cs = cs.select(~discard)
        result.candidates = cs
        kept = cs.label == 1
    idx = np.flatnonzero(kept)
    if len(idx) < 2:
        return
    tau_cycles = SECOND_PASS_TAU_S / result.t_cycle_s
    pre, post = _template_lengths(tau_cycles)
    template = make_template(tau_cycles, pre, post)
    sub = cs.select(idx)
    _score_candidates(sub, result.n, template)
    cs.second_peak = np.full(len(cs), np.nan)
    cs.second_peak[idx] = sub.mf_peak
    try:
        threshold, score = _best_split(sub.mf_peak)
    except ValueError:
        return
    result.second_fit = fit_threshold(sub.mf_peak, tau_cycles=tau_cycles)
    if score < MIN_SEPARATION:
        return
    relabel = idx[(sub.mf_peak >= threshold) & ~sub.clipped]
    cs.label[relabel] = 2


def detect_events_chunked(
    series_or_n,
    n_th: int = 3,
    tau: float = 8.0,
    chunk_cycles: int = 1_000_000,
    overlap: int | None = None,
    t_cycle_s: float | None = None,
    n_qubits: int | None = None,
    fit: ThresholdFit | None = None,
) -> DetectionResult:
    """Chunked variant of :func:`detect_events` (fixed tau only).

    Candidate discovery and scoring see only one slab of n(t) at a time;
    with overlap >= template length + window tail the result is
    bit-identical to the one-shot pipeline.
    """
    if isinstance(series_or_n, OutcomeSeries):
        n = simultaneous_errors(series_or_n)
        t_cycle_s = series_or_n.config.t_cycle_s
        n_qubits = series_or_n.config.n_qubits
    else:
        n = np.asarray(series_or_n, dtype=np.uint8)
        if t_cycle_s is None:
            raise ValueError("t_cycle_s required when passing a raw n series")
    tau_cycles = float(tau)
    pre, post = _template_lengths(tau_cycles)
    template = make_template(tau_cycles, pre, post)
    tail = _tail_cycles(tau_cycles)
    if overlap is None:
        overlap = tail + len(template) + pre
    lookback = max(BASELINE_PRE_CYCLES, pre) + 1
    pieces = []
    for c0 in range(0, len(n), chunk_cycles):
        c1 = min(c0 + chunk_cycles, len(n))
        s0 = max(0, c0 - lookback)
        s1 = min(len(n), c1 + overlap + post)
        slab = n[s0:s1]
        cs = _build_candidates(slab, n_th, tail)
        # shift to absolute cycles, keep regions that start in [c0, c1)
        for f in ("region_start", "region_end", "window_start", "window_end", "t0"):
            getattr(cs, f)[:] += s0
        own = (cs.region_start >= c0) & (cs.region_start < c1)
        cs = cs.select(own)
        if len(cs) == 0:
            continue
        if s1 < len(n) and np.any(cs.window_end + post > s1):
            raise ValueError("overlap too small for an event near the chunk edge")
        # recompute window_end/peaks/baseline against the true trace extent
        cs.window_end = np.minimum(cs.region_end + tail, len(n))
        cs.peak_n = np.maximum(
            _segment_maxes(n, cs.region_start, cs.region_end),
            _segment_maxes(n, cs.region_end, cs.window_end),
        )
        cs.baseline_pre = _segment_means(
            n, np.maximum(cs.region_start - BASELINE_PRE_CYCLES, 0), cs.region_start
        )
        _score_candidates(cs, slab, template, n_offset=s0)
        cs.clipped = (cs.region_start - pre < 0) | (cs.window_end + post > len(n))
        pieces.append(cs)
    if pieces:
        merged = CandidateSet(
            *(
                np.concatenate([getattr(p, f) for p in pieces])
                for f in (
                    "region_start",
                    "region_end",
                    "window_start",
                    "window_end",
                    "peak_n",
                    "t0",
                    "mf_peak",
                    "clipped",
                    "baseline_pre",
                    "label",
                )
            )
        )
    else:
        merged = _build_candidates(n, n_th, tail)
    merged = _dedupe_same_peak(merged)
    if fit is None:
        fit = fit_threshold(merged.mf_peak, tau_cycles=tau_cycles)
        fit = _guard_low_separation(fit, merged.mf_peak)
    merged.label[:] = np.where(
        (merged.mf_peak >= fit.threshold) & ~merged.clipped, 1, 0
    ).astype(np.int8)
    return DetectionResult(
        candidates=merged, fit=fit, template=template, n=n,
        t_cycle_s=t_cycle_s, n_th=n_th,
    )
