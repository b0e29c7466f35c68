"""Command-line surface: sim, detect and report subcommands.

Machine-first output (CSV/JSON); every run writes a manifest and is
byte-identical when repeated with the same arguments.  Exit codes:
0 ok, 2 usage/parse error, 3 I/O error, 4 analysis degeneracy.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import detect as det
from . import qob, sim, stats
from .core import KEPT, KEPT_LONG_RECOVERY, EventRecord
from .manifest import write_manifest

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DEGENERATE = 4

EVENT_COLUMNS = (
    "t0_cycle",
    "t0_seconds",
    "peak_n",
    "window_start",
    "window_end",
    "mf_peak",
    "classification",
    "baseline_pre",
)


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def write_events_csv(path, events, t_cycle_s: float) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENT_COLUMNS)
        for e in events:
            writer.writerow(
                [
                    e.t0_cycle,
                    repr(e.t0_cycle * t_cycle_s),
                    e.peak_n,
                    e.window_start,
                    e.window_end,
                    repr(e.mf_peak),
                    e.classification,
                    repr(e.baseline_pre),
                ]
            )


def read_events_csv(path) -> list[EventRecord]:
    events = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(EVENT_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise CliError(
                EXIT_USAGE, f"events CSV missing column(s): {', '.join(sorted(missing))}"
            )
        for row in reader:
            events.append(
                EventRecord(
                    t0_cycle=int(row["t0_cycle"]),
                    peak_n=int(row["peak_n"]),
                    window_start=int(row["window_start"]),
                    window_end=int(row["window_end"]),
                    mf_peak=float(row["mf_peak"]),
                    classification=row["classification"],
                    baseline_pre=float(row["baseline_pre"]),
                )
            )
    return events


def write_fit_json(path, fit: det.ThresholdFit) -> None:
    doc = {
        "threshold": fit.threshold,
        "separation_score": fit.separation_score,
        "tau_cycles": fit.tau_cycles,
        "histogram": {
            "edges": list(map(float, fit.histogram_edges)),
            "counts": list(map(int, fit.histogram_counts)),
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_curve_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([x if isinstance(x, (int, str)) else repr(x) for x in row])


def cmd_sim(args) -> int:
    try:
        text = Path(args.scenario).read_text()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read scenario: {exc}")
    try:
        scenario = sim.scenario_from_text(text)
    except sim.ScenarioParseError as exc:
        raise CliError(EXIT_USAGE, f"scenario parse error: {exc}")
    try:
        series, log = sim.simulate(scenario, args.duration, seed=args.seed)
        out = Path(args.out)
        qob.write_outcomes(series, out, format=args.format)
        truth_path = out.with_suffix(out.suffix + ".truth.csv")
        sim.write_truth_csv(log, truth_path, c_gamma=scenario.qp_params.c_gamma)
        manifest_path = out.with_suffix(out.suffix + ".manifest.json")
        write_manifest(
            manifest_path,
            "sim",
            {
                "scenario": str(args.scenario),
                "duration_s": args.duration,
                "format": args.format,
            },
            inputs=[args.scenario],
            outputs=[out, truth_path],
            seed=args.seed,
        )
    except OSError as exc:
        raise CliError(EXIT_IO, f"I/O failure: {exc}")
    return EXIT_OK


def cmd_detect(args) -> int:
    try:
        series = qob.read_outcomes(args.input, format=args.format)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read input: {exc}")
    except qob.QobFormatError as exc:
        raise CliError(EXIT_USAGE, f"input parse error: {exc}")
    if args.nth > series.config.n_qubits:
        raise CliError(
            EXIT_USAGE,
            f"n_th exceeds qubit count ({args.nth} > {series.config.n_qubits})",
        )
    if args.tau == "auto":
        tau = "auto"
    else:
        try:
            tau = float(args.tau)
        except ValueError:
            raise CliError(EXIT_USAGE, f"--tau must be a number or 'auto', got {args.tau!r}")
    try:
        result = det.detect_events(
            series, n_th=args.nth, tau=tau, second_pass=args.second_pass
        )
    except ValueError as exc:
        raise CliError(EXIT_DEGENERATE, f"degenerate analysis: {exc}")
    try:
        write_events_csv(args.events_out, result.events, series.config.t_cycle_s)
        write_fit_json(args.fit_out, result.fit)
        manifest_path = Path(args.events_out).with_suffix(".manifest.json")
        write_manifest(
            manifest_path,
            "detect",
            {
                "input": str(args.input),
                "n_th": args.nth,
                "tau": args.tau,
                "second_pass": args.second_pass,
                "format": args.format,
            },
            inputs=[args.input],
            outputs=[args.events_out, args.fit_out],
        )
    except OSError as exc:
        raise CliError(EXIT_IO, f"I/O failure: {exc}")
    return EXIT_OK


def _parse_sweep(spec: str) -> list[int]:
    if ":" in spec:
        lo, hi = spec.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in spec.split(",")]


def cmd_report(args) -> int:
    try:
        events = read_events_csv(args.events)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read events: {exc}")
    duration = args.duration
    t_cycle_s = None
    trace_path = None
    t_rec = None
    prefix = args.out_prefix

    kept = [
        e
        for e in events
        if e.classification in (KEPT, KEPT_LONG_RECOVERY) and e.peak_n >= args.nth
    ]
    rejected = [e for e in events if e.classification == "rejected"]

    gamma_kept = stats.estimate_rate(len(kept), duration)
    gamma_rej = stats.estimate_rate(len(rejected), duration)

    outputs = []
    try:
        if args.qob:
            series = qob.read_outcomes(args.qob, format=args.qob_format)
            t_cycle_s = series.config.t_cycle_s
            n = det.simultaneous_errors(series)
            pre = max(50, int(0.002 / t_cycle_s))
            post = max(200, int(0.02 / t_cycle_s))
            try:
                trace = stats.average_events(kept, n, (pre, post), t_cycle_s)
                try:
                    t_rec = stats.extract_recovery_time(trace)
                except ValueError:
                    t_rec = None
                trace_path = f"{prefix}_trace.csv"
                _write_curve_csv(
                    trace_path,
                    ["t_seconds", "value"],
                    zip(trace.t_rel_s, trace.mean_n),
                )
                outputs.append(trace_path)
            except ValueError:
                pass
        if t_cycle_s is None:
            # seconds axis from the events file itself
            t_cycle_s = 1.0
            total_cycles = int(duration)
        else:
            total_cycles = int(duration / t_cycle_s)

        times, counts = stats.cumulative_sum(kept, KEPT, total_cycles, t_cycle_s)
        cumsum_path = f"{prefix}_cumsum.csv"
        _write_curve_csv(cumsum_path, ["t_seconds", "value"], zip(times, counts))
        outputs.append(cumsum_path)

        sweep = _parse_sweep(args.nth_sweep)
        curve = stats.rate_vs_threshold(
            [e for e in events if e.classification in (KEPT, KEPT_LONG_RECOVERY)],
            sweep,
            duration,
        )
        rate_path = f"{prefix}_rate_vs_nth.csv"
        _write_curve_csv(
            rate_path,
            ["n_th", "rate_per_s", "stderr"],
            [(k, r.rate, r.stderr) for k, r in zip(curve.n_th, curve.rates)],
        )
        outputs.append(rate_path)

        summary = {
            "gamma_kept": gamma_kept.rate,
            "gamma_kept_err": gamma_kept.stderr,
            "gamma_rej": gamma_rej.rate,
            "t_rec_s": t_rec,
            "n_th": args.nth,
            "normalized_rate": stats.normalize_rate(gamma_kept, args.area),
        }
        summary_path = f"{prefix}_summary.json"
        Path(summary_path).write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n"
        )
        outputs.append(summary_path)
        if args.pretty:
            for key, value in summary.items():
                print(f"{key:>16}: {value}")
        write_manifest(
            f"{prefix}.manifest.json",
            "report",
            {
                "events": str(args.events),
                "duration_s": duration,
                "area_cm2": args.area,
                "nth_sweep": args.nth_sweep,
                "n_th": args.nth,
                "qob": str(args.qob) if args.qob else None,
            },
            inputs=[args.events] + ([args.qob] if args.qob else []),
            outputs=outputs,
        )
    except OSError as exc:
        raise CliError(EXIT_IO, f"I/O failure: {exc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qubursts",
        description="Simulate, detect and summarize correlated qubit-error bursts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("sim", help="simulate an outcome stream")
    p_sim.add_argument("--scenario", required=True)
    p_sim.add_argument("--duration", type=float, required=True, help="seconds")
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--format", choices=["binary", "text"], default="binary")
    p_sim.set_defaults(func=cmd_sim)

    p_det = sub.add_parser("detect", help="run the two-pass detection pipeline")
    p_det.add_argument("--in", dest="input", required=True)
    p_det.add_argument("--format", choices=["binary", "text"], default="binary")
    p_det.add_argument("--nth", type=int, default=3)
    p_det.add_argument("--tau", default="auto", help="cycles, or 'auto'")
    p_det.add_argument("--second-pass", action="store_true")
    p_det.add_argument("--events-out", required=True)
    p_det.add_argument("--fit-out", required=True)
    p_det.set_defaults(func=cmd_detect)

    p_rep = sub.add_parser("report", help="summarize an events CSV")
    p_rep.add_argument("--events", required=True)
    p_rep.add_argument("--duration", type=float, required=True, help="seconds")
    p_rep.add_argument("--area", type=float, default=0.64, help="cm^2")
    p_rep.add_argument("--nth", type=int, default=3)
    p_rep.add_argument("--nth-sweep", default="3:7")
    p_rep.add_argument("--out-prefix", required=True)
    p_rep.add_argument("--qob", default=None, help="QOB file for the averaged trace")
    p_rep.add_argument("--qob-format", choices=["binary", "text"], default="binary")
    p_rep.add_argument("--pretty", action="store_true")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"qubursts {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
