"""Two-pass detection pipeline: flags, counting, templates, matched
filtering, threshold fitting, classification and the long-recovery pass."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qubursts import detect
from qubursts.core import KEPT, KEPT_LONG_RECOVERY, REJECTED, EventRecord
from qubursts.detect import (
    MIN_SEPARATION,
    ThresholdFit,
    classify,
    compute_error_flags,
    count_simultaneous,
    default_tau_grid,
    detect_events,
    detect_events_chunked,
    fit_threshold,
    make_template,
    mark_candidates,
    matched_filter,
    optimize_tau,
    score_and_align,
    second_pass_long_recovery,
    separation_score,
    simultaneous_errors,
)

from conftest import make_series, naive_candidates


def column(bits):
    """Single-qubit outcome column as an OutcomeSeries."""
    return make_series(np.asarray(bits, dtype=np.uint8)[:, None])


class TestErrorFlags:
    def test_ideal_alternation_never_flags(self):
        flags = compute_error_flags(column([1, 0, 1, 0, 1]))
        assert flags[:, 0].tolist() == [0, 0, 0, 0, 0]

    def test_overlapping_zero_pairs_each_flag(self):
        flags = compute_error_flags(column([1, 0, 0, 0, 1]))
        assert flags[:, 0].tolist() == [0, 0, 1, 1, 0]

    def test_consecutive_ones_never_flag(self):
        flags = compute_error_flags(column([1, 1, 1, 1]))
        assert flags[:, 0].tolist() == [0, 0, 0, 0]

    def test_row_zero_is_all_zeros(self):
        flags = compute_error_flags(make_series(np.zeros((4, 3))))
        assert flags[0].tolist() == [0, 0, 0]
        assert flags[1:].all()

    def test_per_qubit_independence(self):
        s = make_series([[0, 1], [0, 0], [0, 1]])
        flags = compute_error_flags(s)
        assert flags.tolist() == [[0, 0], [1, 0], [1, 0]]


class TestCountSimultaneous:
    def test_row_sum(self):
        assert count_simultaneous(np.array([[1, 0, 1]], dtype=np.uint8))[0] == 2

    def test_all_zero(self):
        n = count_simultaneous(np.zeros((10, 4), dtype=np.uint8))
        assert not n.any()

    def test_matches_popcount_oracle(self, rng):
        flags = rng.integers(0, 2, size=(50, 5)).astype(np.uint8)
        n = count_simultaneous(flags)
        assert n.tolist() == [int(sum(row)) for row in flags]

    def test_chunked_matches_direct(self, rng):
        s = make_series(rng.integers(0, 2, size=(5000, 5)))
        direct = count_simultaneous(compute_error_flags(s))
        chunked = simultaneous_errors(s, chunk_cycles=137)
        assert np.array_equal(direct, chunked)


class TestMarkCandidates:
    def test_single_excursion(self):
        events = mark_candidates([0, 1, 5, 3, 1, 0], n_th=3)
        assert len(events) == 1
        e = events[0]
        assert e.peak_n == 5
        assert e.window_start == 1  # core region cycles 1-4

    def test_below_threshold(self):
        assert mark_candidates([0, 2, 2, 0], n_th=3) == []

    def test_three_injected_excursions(self, rng):
        n = np.zeros(10_000, dtype=np.uint8)
        locations = [1000, 4000, 8000]
        for loc in locations:
            n[loc : loc + 10] = 4
        events = mark_candidates(n, n_th=3)
        assert [e.window_start for e in events] == locations

    def test_nth_out_of_range(self):
        with pytest.raises(ValueError):
            mark_candidates([0, 1, 0], n_th=0)

    @settings(max_examples=200, deadline=None)
    @given(
        n=st.lists(st.integers(0, 5), min_size=1, max_size=200),
        n_th=st.integers(1, 5),
    )
    def test_matches_naive_scan(self, n, n_th):
        events = mark_candidates(n, n_th, tail_cycles=0)
        expected = naive_candidates(n, n_th)
        assert len(events) == len(expected)
        for e, (start, end, peak) in zip(events, expected):
            assert e.window_start == start
            assert e.window_end == end
            assert e.peak_n == peak

    @settings(max_examples=100, deadline=None)
    @given(
        n=st.lists(st.integers(0, 5), min_size=1, max_size=200),
        n_th=st.integers(1, 5),
    )
    def test_candidate_completeness(self, n, n_th):
        # every cycle with n >= n_th lies inside exactly one core region
        events = mark_candidates(n, n_th, tail_cycles=0)
        covered = np.zeros(len(n), dtype=int)
        for e in events:
            covered[e.window_start : e.window_end] += 1
        for k, v in enumerate(n):
            if v >= n_th:
                assert covered[k] == 1
        assert covered.max(initial=0) <= 1


class TestTemplate:
    def test_symmetric_step_at_large_tau(self):
        t = make_template(1e9, pre_len=2, post_len=2)
        assert t.values == pytest.approx([-0.5, -0.5, 0.5, 0.5])

    def test_zero_mean_for_any_parameters(self):
        for tau, pre, post in [(0.5, 1, 2), (8, 4, 40), (300, 10, 1000)]:
            t = make_template(tau, pre, post)
            assert abs(t.values.sum()) <= 1e-12 * len(t)

    def test_raw_shape(self):
        t = make_template(2.0, pre_len=1, post_len=3)
        raw = np.array([0.0, 1.0, np.exp(-0.5), np.exp(-1.0)])
        assert t.values == pytest.approx(raw - raw.mean())

    def test_degenerate_lengths_rejected(self):
        with pytest.raises(ValueError):
            make_template(2.0, pre_len=0, post_len=3)
        with pytest.raises(ValueError):
            make_template(2.0, pre_len=1, post_len=1)
        with pytest.raises(ValueError):
            make_template(-1.0, pre_len=1, post_len=3)

    def test_values_are_read_only(self):
        t = make_template(2.0, 2, 4)
        with pytest.raises(ValueError):
            t.values[0] = 1.0


class TestMatchedFilter:
    def test_constant_input_zero_on_interior(self):
        t = make_template(4.0, pre_len=8, post_len=20)
        for c in (0.0, 1.0, 3.7):
            out = matched_filter(np.full(200, c), t)
            interior = out[t.pre_len : 200 - t.post_len]
            assert np.abs(interior).max() < 1e-9

    def test_direct_summation_oracle(self, rng):
        t = make_template(3.0, pre_len=4, post_len=12)
        n = rng.integers(0, 5, size=100).astype(float)
        out = matched_filter(n, t)
        padded = np.concatenate([np.zeros(t.pre_len), n, np.zeros(t.post_len)])
        expected = [
            sum(t.values[j] * padded[k + j] for j in range(len(t)))
            for k in range(100)
        ]
        assert out == pytest.approx(expected, abs=1e-9)

    def test_scaled_raw_shape_peak(self):
        t = make_template(5.0, pre_len=6, post_len=25)
        n = np.zeros(200)
        step = 100
        raw = np.exp(-np.arange(t.post_len) / t.tau_cycles)
        n[step : step + t.post_len] = 4 * raw
        out = matched_filter(n, t)
        peak_k = int(np.argmax(out))
        direct = float(np.dot(t.values[t.pre_len :], 4 * raw))
        assert peak_k == step
        assert out[peak_k] == pytest.approx(direct, abs=1e-9)

    def test_shift_equivariance_two_excursions(self):
        t = make_template(4.0, pre_len=4, post_len=16)
        n = np.zeros(700)
        for loc in (100, 500):
            n[loc : loc + 10] = 3
        out = matched_filter(n, t)
        assert out[100] == pytest.approx(out[500], abs=1e-9)
        assert np.array_equal(out[80:130], out[480:530])

    def test_linearity(self, rng):
        t = make_template(4.0, pre_len=4, post_len=16)
        n1 = rng.random(300)
        n2 = rng.random(300)
        combined = matched_filter(2.0 * n1 + 3.0 * n2, t)
        separate = 2.0 * matched_filter(n1, t) + 3.0 * matched_filter(n2, t)
        assert combined == pytest.approx(separate, rel=1e-9, abs=1e-9)

    def test_constant_offset_invariance_interior(self, rng):
        t = make_template(4.0, pre_len=4, post_len=16)
        n = rng.random(300)
        a = matched_filter(n, t)
        b = matched_filter(n + 7.0, t)
        sl = slice(t.pre_len, 300 - t.post_len)
        assert b[sl] == pytest.approx(a[sl], abs=1e-9)

    def test_series_shorter_than_template(self):
        t = make_template(4.0, pre_len=4, post_len=16)
        with pytest.raises(ValueError, match="shorter"):
            matched_filter(np.zeros(10), t)


class TestScoreAndAlign:
    def test_alignment_at_injected_onset(self):
        t = make_template(6.0, pre_len=12, post_len=30)
        n = np.zeros(400, dtype=np.uint8)
        onset = 200
        decay = 5 * np.exp(-np.arange(40) / 6.0)
        n[onset : onset + 40] = np.maximum(decay, 1).astype(np.uint8)
        cand = mark_candidates(n, n_th=3, tail_cycles=60)[0]
        scored = score_and_align(cand, n, t)
        assert abs(scored.t0_cycle - onset) <= 1

    def test_ties_resolve_to_earliest(self):
        t = make_template(1e9, pre_len=2, post_len=2)
        n = np.zeros(60, dtype=np.uint8)
        n[20:22] = 3
        n[40:42] = 3
        cand = EventRecord(t0_cycle=20, peak_n=3, window_start=15, window_end=50)
        scored = score_and_align(cand, n, t)
        assert scored.t0_cycle == 20

    def test_boundary_clip_flag(self):
        t = make_template(4.0, pre_len=4, post_len=16)
        n = np.zeros(30, dtype=np.uint8)
        n[24:28] = 4
        cand = EventRecord(t0_cycle=24, peak_n=4, window_start=24, window_end=28)
        scored = score_and_align(cand, n, t)
        assert scored.boundary_clipped


class TestThresholdFit:
    def test_two_separated_clusters(self):
        peaks = [1.0, 1.1, 0.9, 10.0, 9.8, 10.2]
        fit = fit_threshold(peaks)
        assert 1.1 < fit.threshold < 9.8
        assert fit.separation_score > 0.8

    def test_two_peaks_midpoint(self):
        fit = fit_threshold([2.0, 8.0])
        assert fit.threshold == pytest.approx(5.0)

    def test_degenerate_peaks(self):
        with pytest.raises(ValueError, match="degenerate"):
            fit_threshold([3.0, 3.0, 3.0])

    def test_needs_two_peaks(self):
        with pytest.raises(ValueError):
            fit_threshold([1.0])

    def test_unknown_policy(self):
        with pytest.raises(ValueError, match="policy"):
            fit_threshold([1.0, 2.0], policy="frobnicate")

    def test_histogram_covers_all_peaks(self, rng):
        peaks = np.concatenate([rng.normal(5, 0.5, 40), rng.normal(60, 5, 40)])
        fit = fit_threshold(peaks)
        assert fit.histogram_counts.sum() == len(peaks)

    def test_separation_score_bimodal(self, rng):
        peaks = np.concatenate(
            [np.exp(rng.normal(0, 0.3, 300)), np.exp(rng.normal(4, 0.3, 50))]
        )
        fit = fit_threshold(peaks)
        assert separation_score(peaks, fit.threshold) > 0.8
        assert fit.separation_score > 0.8

    def test_separation_score_single_cluster(self, rng):
        peaks = np.exp(rng.normal(1.0, 0.4, 400))
        fit = fit_threshold(peaks)
        assert fit.separation_score < MIN_SEPARATION

    def test_separation_score_empty_side_is_zero(self):
        peaks = np.array([1.0, 2.0, 3.0])
        assert separation_score(peaks, 0.5) == 0.0
        assert separation_score(peaks, 100.0) == 0.0


class TestOptimizeTau:
    def test_grid_of_length_one(self):
        peaks = [1.0, 1.2, 9.0, 9.5]
        assert optimize_tau({7.0: peaks}) == 7.0

    def test_returns_grid_argmax(self, rng):
        # separation independent of tau except one grid point is clean
        lo = np.exp(rng.normal(0, 0.3, 100))
        hi = np.exp(rng.normal(4, 0.3, 100))
        good = np.concatenate([lo, hi])
        noisy = np.concatenate([lo, np.exp(rng.normal(1.2, 0.8, 100))])
        assert optimize_tau({2.0: noisy, 20.0: good}) == 20.0

    def test_degenerate_distribution(self):
        with pytest.raises(ValueError, match="degenerate"):
            optimize_tau({3.0: [5.0, 5.0, 5.0]})

    def test_default_grid(self):
        grid = default_tau_grid()
        assert len(grid) == 16
        assert grid[0] == pytest.approx(1.0)
        assert grid[-1] == pytest.approx(1000.0)


class TestClassify:
    def _cand(self, peak, clipped=False):
        return EventRecord(
            t0_cycle=10, peak_n=4, window_start=5, window_end=20,
            mf_peak=peak, boundary_clipped=clipped,
        )

    def test_exact_threshold_is_kept(self):
        fit = ThresholdFit(5.0, 1.0, np.array([]), np.array([]))
        out = classify([self._cand(5.0)], fit)
        assert out[0].classification == KEPT

    def test_below_threshold_rejected(self):
        fit = ThresholdFit(5.0, 1.0, np.array([]), np.array([]))
        out = classify([self._cand(4.999)], fit)
        assert out[0].classification == REJECTED

    def test_clipped_always_rejected(self):
        fit = ThresholdFit(5.0, 1.0, np.array([]), np.array([]))
        out = classify([self._cand(100.0, clipped=True)], fit)
        assert out[0].classification == REJECTED

    def test_empty_list(self):
        fit = ThresholdFit(5.0, 1.0, np.array([]), np.array([]))
        assert classify([], fit) == []


def _synthetic_trace(rng, n_cycles=200_000, bursts=10, amplitude=5, length=30):
    """Baseline coincidences plus clearly separated injected bursts."""
    flags = rng.random((n_cycles, 5)) < 0.05
    n = flags.sum(axis=1).astype(np.uint8)
    spacing = n_cycles // (bursts + 1)
    locations = [(i + 1) * spacing for i in range(bursts)]
    for loc in locations:
        n[loc : loc + length] = amplitude
    return n, locations


class TestSecondPass:
    T_CYCLE = 30e-6

    def _events(self, n, locations):
        out = []
        for loc in locations:
            end = loc
            while end < len(n) and n[end] >= 1:
                end += 1
            out.append(
                EventRecord(
                    t0_cycle=loc, peak_n=int(n[loc]), window_start=loc,
                    window_end=end, mf_peak=50.0, classification=KEPT,
                )
            )
        return out

    def _trace(self):
        n = np.zeros(40_000, dtype=np.uint8)
        short_locs = [2000 * (i + 1) for i in range(10)]
        for loc in short_locs:
            n[loc : loc + 6] = 5
        long_locs = [24_000, 30_000, 36_000]
        decay = 5 * np.exp(-np.arange(800) / 100.0)
        for loc in long_locs:
            n[loc : loc + 800] = np.maximum(np.round(decay), 0).astype(np.uint8)
        return n, short_locs, long_locs

    def test_long_recovery_relabeled(self):
        n, short_locs, long_locs = self._trace()
        kept = self._events(n, short_locs + long_locs)
        out = second_pass_long_recovery(kept, n, t_cycle_s=self.T_CYCLE)
        labels = {e.t0_cycle: e.classification for e in out}
        for loc in long_locs:
            assert labels[loc] == KEPT_LONG_RECOVERY
        for loc in short_locs:
            assert labels[loc] == KEPT

    def test_high_baseline_discarded(self):
        n, short_locs, long_locs = self._trace()
        kept = self._events(n, short_locs + long_locs)
        noisy = kept[0]
        kept[0] = EventRecord(
            t0_cycle=noisy.t0_cycle, peak_n=noisy.peak_n,
            window_start=noisy.window_start, window_end=noisy.window_end,
            mf_peak=noisy.mf_peak, classification=KEPT, baseline_pre=2.0,
        )
        out = second_pass_long_recovery(kept, n, t_cycle_s=self.T_CYCLE)
        assert len(out) == len(kept) - 1
        assert all(e.t0_cycle != noisy.t0_cycle for e in out)

    def test_all_typical_zero_relabels(self):
        n, short_locs, _ = self._trace()
        n[21_000:] = 0  # drop the long events from the trace
        kept = self._events(n, short_locs)
        out = second_pass_long_recovery(kept, n, t_cycle_s=self.T_CYCLE)
        assert all(e.classification == KEPT for e in out)

    def test_missing_t_cycle(self):
        with pytest.raises(ValueError, match="t_cycle"):
            second_pass_long_recovery([], [0, 1], t_cycle_s=0.0)


class TestDetectEvents:
    T_CYCLE = 30e-6

    def test_end_to_end_synthetic(self, rng):
        n, locations = _synthetic_trace(rng)
        result = detect_events(n, n_th=3, tau=8.0, t_cycle_s=self.T_CYCLE)
        kept = [e for e in result.events if e.classification == KEPT]
        assert len(kept) == len(locations)
        kept_t0 = sorted(e.t0_cycle for e in kept)
        for t0, loc in zip(kept_t0, locations):
            assert abs(t0 - loc) <= 1
        # >= 99% of baseline candidates rejected
        n_candidates = len(result.events)
        false_kept = len(kept) - len(locations)
        assert false_kept <= 0.01 * (n_candidates - len(locations))

    def test_auto_tau_on_synthetic(self, rng):
        n, locations = _synthetic_trace(rng)
        result = detect_events(
            n, n_th=3, tau="auto", t_cycle_s=self.T_CYCLE,
            tau_grid=default_tau_grid(1, 100, 12),
        )
        kept = [e for e in result.events if e.classification == KEPT]
        kept_t0 = {e.t0_cycle for e in kept}
        # every injected burst is kept ...
        for loc in locations:
            assert any(abs(t0 - loc) <= 1 for t0 in kept_t0)
        # ... and >= 99% of baseline candidates are rejected
        n_baseline = len(result.events) - len(locations)
        false_kept = len(kept) - len(locations)
        assert false_kept <= 0.01 * n_baseline
        assert result.fit.separation_score >= MIN_SEPARATION

    def test_baseline_only_keeps_nothing(self, rng):
        flags = rng.random((200_000, 5)) < 0.05
        n = flags.sum(axis=1).astype(np.uint8)
        result = detect_events(n, n_th=3, tau=8.0, t_cycle_s=self.T_CYCLE)
        kept = [e for e in result.events if e.classification == KEPT]
        assert len(result.events) > 50  # the scenario does produce candidates
        assert len(kept) <= 0.01 * len(result.events)
        assert result.fit.separation_score < MIN_SEPARATION

    def test_nth_monotonicity(self, rng):
        n, _ = _synthetic_trace(rng, bursts=8, amplitude=4)
        r3 = detect_events(n, n_th=3, tau=8.0, t_cycle_s=self.T_CYCLE)
        r4 = detect_events(n, n_th=4, tau=8.0, t_cycle_s=self.T_CYCLE, fit=r3.fit)
        kept3 = {e.t0_cycle for e in r3.events if e.classification == KEPT}
        kept4 = {e.t0_cycle for e in r4.events if e.classification == KEPT}
        assert kept4 <= kept3

    def test_nth_exceeds_qubit_count(self, rng):
        s = make_series(rng.integers(0, 2, size=(100, 3)))
        with pytest.raises(ValueError, match="exceeds qubit count"):
            detect_events(s, n_th=4, tau=8.0)

    def test_raw_series_requires_t_cycle(self):
        with pytest.raises(ValueError, match="t_cycle_s"):
            detect_events(np.zeros(100, dtype=np.uint8), tau=8.0)

    def test_duplicate_peak_collapsed(self):
        # a recovery tail fragment that locks onto its parent's peak
        n = np.zeros(2000, dtype=np.uint8)
        n[500:505] = 5
        n[505:512] = 2
        n[513:515] = 3  # detached tail fragment, within the lag search span
        fit = ThresholdFit(1e9, 1.0, np.array([]), np.array([]))
        result = detect_events(n, n_th=3, tau=8.0, t_cycle_s=self.T_CYCLE, fit=fit)
        assert len(result.events) == 1

    def test_shift_equivariance_of_t0(self, rng):
        n, _ = _synthetic_trace(rng, n_cycles=50_000, bursts=4)
        shift = 1000
        shifted = np.concatenate([np.zeros(shift, dtype=np.uint8), n])
        fit = ThresholdFit(10.0, 1.0, np.array([]), np.array([]))
        r1 = detect_events(n, n_th=3, tau=8.0, t_cycle_s=self.T_CYCLE, fit=fit)
        r2 = detect_events(shifted, n_th=3, tau=8.0, t_cycle_s=self.T_CYCLE, fit=fit)
        t1 = [e.t0_cycle for e in r1.events]
        t2 = [e.t0_cycle for e in r2.events]
        assert [t + shift for t in t1] == t2


class TestChunkedEqualsSequential:
    T_CYCLE = 30e-6

    def test_identical_event_lists(self, rng):
        n, _ = _synthetic_trace(rng, n_cycles=300_000, bursts=12)
        one = detect_events(n, n_th=3, tau=8.0, t_cycle_s=self.T_CYCLE)
        chunked = detect_events_chunked(
            n, n_th=3, tau=8.0, chunk_cycles=37_000, t_cycle_s=self.T_CYCLE
        )
        assert one.fit.threshold == chunked.fit.threshold
        e1, e2 = one.events, chunked.events
        assert len(e1) == len(e2)
        for a, b in zip(e1, e2):
            assert a == b

    def test_chunk_boundary_event(self):
        n = np.zeros(10_000, dtype=np.uint8)
        n[4995:5010] = 4  # straddles the chunk boundary at 5000
        fit = ThresholdFit(1.0, 1.0, np.array([]), np.array([]))
        one = detect_events(n, n_th=3, tau=4.0, t_cycle_s=self.T_CYCLE, fit=fit)
        chunked = detect_events_chunked(
            n, n_th=3, tau=4.0, chunk_cycles=5000, t_cycle_s=self.T_CYCLE, fit=fit
        )
        assert one.events == chunked.events
