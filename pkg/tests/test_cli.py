"""End-to-end CLI pipelines: sim -> detect -> report, exit codes, manifests."""

import json
from pathlib import Path

import numpy as np
import pytest

from qubursts import cli, qob
from qubursts.cli import EXIT_DEGENERATE, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from qubursts.core import KEPT, EventRecord
from qubursts.sim import s5_scenario, scenario_to_text

from conftest import BALANCED, make_series


@pytest.fixture()
def scenario_file(tmp_path):
    sc = s5_scenario(gamma0=2.0, **BALANCED)
    path = tmp_path / "scenario.txt"
    path.write_text(scenario_to_text(sc))
    return path


def bimodal_series(n_bursts=20, n_spikes=60):
    """Outcome stream whose candidate peaks split into two clear clusters.

    An alternating baseline, short 3-qubit coincidences (low filter
    peaks) and long all-qubit bursts (high peaks).
    """
    n_cycles = 200_000
    out = np.tile(np.array([[1], [0]], dtype=np.uint8), (n_cycles // 2, 5))
    rng = np.random.default_rng(99)
    spots = rng.choice(np.arange(200, n_cycles - 200, 150), size=n_bursts + n_spikes,
                       replace=False)
    burst_locs, spike_locs = spots[:n_bursts], spots[n_bursts:]
    for loc in spike_locs:
        out[loc : loc + 2, :3] = 0
    for loc in burst_locs:
        out[loc : loc + 101, :] = 0
    return make_series(out)


class TestSim:
    def test_writes_outputs_with_expected_cycles(self, tmp_path, scenario_file):
        out = tmp_path / "run.qob"
        code = main([
            "sim", "--scenario", str(scenario_file), "--duration", "3",
            "--seed", "5", "--out", str(out),
        ])
        assert code == EXIT_OK
        series = qob.read_outcomes(out)
        assert series.n_cycles == int(3 / 30e-6)
        assert out.with_suffix(".qob.truth.csv").exists()
        assert out.with_suffix(".qob.manifest.json").exists()

    def test_rerun_is_byte_identical(self, tmp_path, scenario_file):
        out = tmp_path / "run.qob"
        args = [
            "sim", "--scenario", str(scenario_file), "--duration", "2",
            "--seed", "5", "--out", str(out),
        ]
        assert main(args) == EXIT_OK
        paths = [out, out.with_suffix(".qob.truth.csv"),
                 out.with_suffix(".qob.manifest.json")]
        first = [p.read_bytes() for p in paths]
        assert main(args) == EXIT_OK
        second = [p.read_bytes() for p in paths]
        assert first == second

    def test_malformed_scenario_reports_line(self, tmp_path, capsys):
        path = tmp_path / "bad.txt"
        text = scenario_to_text(s5_scenario())
        lines = text.splitlines()
        lines[4] = "nonsense without equals"
        path.write_text("\n".join(lines) + "\n")
        code = main([
            "sim", "--scenario", str(path), "--duration", "1",
            "--seed", "1", "--out", str(tmp_path / "x.qob"),
        ])
        assert code == EXIT_USAGE
        assert "line 5" in capsys.readouterr().err

    def test_missing_scenario_is_io_error(self, tmp_path):
        code = main([
            "sim", "--scenario", str(tmp_path / "absent.txt"), "--duration", "1",
            "--seed", "1", "--out", str(tmp_path / "x.qob"),
        ])
        assert code == EXIT_IO


class TestDetect:
    @pytest.fixture()
    def qob_file(self, tmp_path, scenario_file):
        out = tmp_path / "run.qob"
        main([
            "sim", "--scenario", str(scenario_file), "--duration", "30",
            "--seed", "5", "--out", str(out),
        ])
        return out

    def test_events_match_ground_truth(self, tmp_path, qob_file):
        events_csv = tmp_path / "events.csv"
        fit_json = tmp_path / "fit.json"
        code = main([
            "detect", "--in", str(qob_file), "--tau", "10",
            "--events-out", str(events_csv), "--fit-out", str(fit_json),
        ])
        assert code == EXIT_OK
        events = cli.read_events_csv(events_csv)
        kept = [e for e in events if e.classification == KEPT]
        truth = qob_file.with_suffix(".qob.truth.csv").read_text().splitlines()
        truth_cycles = [int(l.split(",")[0]) for l in truth[1:] if not l.startswith("#")]
        assert abs(len(kept) - len(truth_cycles)) <= max(2, 0.05 * len(truth_cycles))

    def test_nth_exceeding_qubits_is_usage_error(self, tmp_path, qob_file, capsys):
        code = main([
            "detect", "--in", str(qob_file), "--nth", "8",
            "--events-out", str(tmp_path / "e.csv"),
            "--fit-out", str(tmp_path / "f.json"),
        ])
        assert code == EXIT_USAGE
        assert "n_th exceeds qubit count" in capsys.readouterr().err

    def test_auto_tau_on_bimodal_data(self, tmp_path):
        series = bimodal_series()
        path = tmp_path / "bimodal.qob"
        qob.write_outcomes(series, path)
        fit_json = tmp_path / "fit.json"
        code = main([
            "detect", "--in", str(path), "--tau", "auto",
            "--events-out", str(tmp_path / "e.csv"), "--fit-out", str(fit_json),
        ])
        assert code == EXIT_OK
        fit = json.loads(fit_json.read_text())
        assert fit["separation_score"] > 0.8

    def test_degenerate_input_exits_4(self, tmp_path, scenario_file):
        # a burst-free, error-free stream yields no candidates to fit
        sc = s5_scenario(t1_us=1e12, ro_error_1to0=0.0, ro_error_0to1=0.0,
                         gamma0=0.0)
        text = scenario_to_text(sc)
        spath = tmp_path / "quiet.txt"
        spath.write_text(text)
        out = tmp_path / "quiet.qob"
        main(["sim", "--scenario", str(spath), "--duration", "1",
              "--seed", "1", "--out", str(out)])
        code = main([
            "detect", "--in", str(out), "--tau", "10",
            "--events-out", str(tmp_path / "e.csv"),
            "--fit-out", str(tmp_path / "f.json"),
        ])
        assert code == EXIT_DEGENERATE

    def test_bad_tau_value(self, tmp_path, qob_file):
        code = main([
            "detect", "--in", str(qob_file), "--tau", "sideways",
            "--events-out", str(tmp_path / "e.csv"),
            "--fit-out", str(tmp_path / "f.json"),
        ])
        assert code == EXIT_USAGE

    def test_missing_input_is_io_error(self, tmp_path):
        code = main([
            "detect", "--in", str(tmp_path / "absent.qob"),
            "--events-out", str(tmp_path / "e.csv"),
            "--fit-out", str(tmp_path / "f.json"),
        ])
        assert code == EXIT_IO


class TestReport:
    def _write_events(self, path, count, duration_cycles, t_cycle_s):
        step = duration_cycles // (count + 1)
        events = [
            EventRecord(
                t0_cycle=(i + 1) * step, peak_n=4,
                window_start=(i + 1) * step, window_end=(i + 1) * step + 10,
                mf_peak=30.0, classification=KEPT,
            )
            for i in range(count)
        ]
        cli.write_events_csv(path, events, t_cycle_s)

    def test_normalized_rate_arithmetic(self, tmp_path):
        csv_path = tmp_path / "events.csv"
        self._write_events(csv_path, 360, 14_400_000, 1e-3)
        code = main([
            "report", "--events", str(csv_path), "--duration", "14400",
            "--area", "0.64", "--out-prefix", str(tmp_path / "rep"),
        ])
        assert code == EXIT_OK
        summary = json.loads((tmp_path / "rep_summary.json").read_text())
        assert summary["normalized_rate"] == pytest.approx(2.34, abs=0.01)
        assert summary["gamma_kept"] == pytest.approx(360 / 14400)

    def test_nth_sweep_rows_non_increasing(self, tmp_path):
        csv_path = tmp_path / "events.csv"
        self._write_events(csv_path, 50, 1_000_000, 1e-3)
        code = main([
            "report", "--events", str(csv_path), "--duration", "1000",
            "--nth-sweep", "3:7", "--out-prefix", str(tmp_path / "rep"),
        ])
        assert code == EXIT_OK
        rows = (tmp_path / "rep_rate_vs_nth.csv").read_text().splitlines()
        assert len(rows) == 6  # header + 5 thresholds
        rates = [float(r.split(",")[1]) for r in rows[1:]]
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_empty_events_ok(self, tmp_path):
        csv_path = tmp_path / "events.csv"
        cli.write_events_csv(csv_path, [], 1e-3)
        code = main([
            "report", "--events", str(csv_path), "--duration", "100",
            "--out-prefix", str(tmp_path / "rep"),
        ])
        assert code == EXIT_OK
        summary = json.loads((tmp_path / "rep_summary.json").read_text())
        assert summary["gamma_kept"] == 0.0

    def test_missing_columns_is_usage_error(self, tmp_path, capsys):
        bad = tmp_path / "events.csv"
        bad.write_text("t0_cycle,peak_n\n1,3\n")
        code = main([
            "report", "--events", str(bad), "--duration", "100",
            "--out-prefix", str(tmp_path / "rep"),
        ])
        assert code == EXIT_USAGE
        assert "missing column" in capsys.readouterr().err
