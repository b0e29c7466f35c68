"""Stochastic simulator for repeated pi-pulse/measure bit streams.

Per cycle and qubit the simulator tracks the true state (ground,
excited, leaked), applies the pi flip, relaxation at the instantaneous
rate driven by the lumped quasiparticle density, and classical readout
misassignment.  Bursts arrive as an (optionally surge-shaped)
inhomogeneous Poisson process and inject quasiparticle density; a
ground-truth log records every injection for detector validation.

All randomness flows from counter-based Philox streams keyed by
(seed, stream): qubit q uses stream q, burst arrivals and injection
amplitudes use dedicated streams, so runs are platform-stable and
bit-reproducible for a given seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import AcquisitionConfig, OutcomeSeries
from .physics import QpModelParams

__all__ = [
    "RateProfile",
    "Scenario",
    "GroundTruthLog",
    "rate_profile_at",
    "generate_arrivals",
    "error_prob_per_cycle",
    "simulate",
    "surge_t1_overlay",
    "t1_scale_at",
    "s5_scenario",
    "s7_scenario",
    "scenario_to_text",
    "scenario_from_text",
    "ScenarioParseError",
    "write_truth_csv",
]

# dedicated RNG streams, far above any plausible qubit index
_BURST_STREAM = 1 << 32
_INJECT_STREAM = (1 << 32) + 1

# Table-derived device defaults
S5_T1_US = (15.0, 21.0, 19.0, 23.0, 15.0)
S7_T1_US = (31.0, 15.0, 23.0, 18.0, 22.0, 36.0, 49.0)
S5_RO_ERROR = 0.019  # 1 - multiplexed average assignment fidelity (98.1%)
S7_RO_ERROR = 0.038  # fidelity 96.2%


@dataclass(frozen=True)
class RateProfile:
    """Burst arrival rate vs time: constant, or the surge shape.

    The surge holds gamma0 until ``surge_start_s``, spikes to
    ``gamma0 * spike_factor`` for ``spike_duration_s``, then decays
    exponentially (``decay_time_s``) toward ``gamma0 * stall_factor``.
    """

    kind: str = "constant"
    gamma0: float = 0.0
    surge_start_s: float = 0.0
    spike_factor: float = 10.0
    spike_duration_s: float = 0.0
    decay_time_s: float = 1.0
    stall_factor: float = 0.01

    def __post_init__(self):
        if self.kind not in ("constant", "surge"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.gamma0 < 0:
            raise ValueError("gamma0 must be >= 0")
        if self.kind == "surge":
            if self.spike_factor < 1:
                raise ValueError("spike_factor must be >= 1")
            if not (0 < self.stall_factor <= 1):
                raise ValueError("stall_factor must be in (0, 1]")

    @property
    def max_rate(self) -> float:
        return self.gamma0 * (self.spike_factor if self.kind == "surge" else 1.0)


def rate_profile_at(profile: RateProfile, t_s) -> np.ndarray | float:
    """Arrival rate (events/s) at time t; accepts scalars or arrays."""
    t = np.asarray(t_s, dtype=np.float64)
    if profile.kind == "constant":
        out = np.full_like(t, profile.gamma0)
        return float(out) if out.ndim == 0 else out
    g0 = profile.gamma0
    t_end = profile.surge_start_s + profile.spike_duration_s
    out = np.where(
        t < profile.surge_start_s,
        g0,
        np.where(
            t <= t_end,
            g0 * profile.spike_factor,
            g0
            * (
                profile.stall_factor
                + (profile.spike_factor - profile.stall_factor)
                * np.exp(-np.maximum(t - t_end, 0) / profile.decay_time_s)
            ),
        ),
    )
    return float(out) if out.ndim == 0 else out


def t1_scale_at(profile: RateProfile, suppression: float, t_s) -> np.ndarray | float:
    """Multiplicative T1 schedule tied to the rate profile.

    1 before the surge; 1/suppression during the spike; recovers toward 1
    as the rate decays to the stall level.
    """
    t = np.asarray(t_s, dtype=np.float64)
    if profile.kind == "constant" or suppression == 1.0:
        out = np.ones_like(t)
        return float(out) if out.ndim == 0 else out
    rate = rate_profile_at(profile, t)
    lo = profile.gamma0 * profile.stall_factor
    hi = profile.gamma0 * profile.spike_factor
    excess = np.clip((rate - lo) / (hi - lo), 0.0, 1.0)
    excess = np.where(t < profile.surge_start_s, 0.0, excess)
    out = 1.0 / (1.0 + (suppression - 1.0) * excess)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GroundTruthLog:
    """Oracle record of one simulation run."""

    burst_times_s: np.ndarray
    burst_cycles: np.ndarray
    x_inject: np.ndarray
    slow: np.ndarray
    profile: RateProfile
    trace_stride: int = 0
    x_trace: np.ndarray | None = None

    def __post_init__(self):
        if len(self.burst_times_s) > 1 and not np.all(
            np.diff(self.burst_times_s) > 0
        ):
            raise ValueError("burst times must be strictly increasing")


@dataclass(frozen=True)
class Scenario:
    """Complete description of one simulated acquisition."""

    config: AcquisitionConfig
    t1_us: tuple[float, ...]
    ro_error_1to0: tuple[float, ...]
    ro_error_0to1: tuple[float, ...]
    qp_params: QpModelParams = QpModelParams()
    profile: RateProfile = RateProfile()
    inject_median: float = 1.0
    inject_sigma: float = 0.5
    seed: int | None = None
    has_builtin_trap: bool = True
    t1_surge_suppression: float = 3.0
    slow_fraction: float = 0.0
    slow_tau_s: float = 3e-3
    leak_prob: float = 0.0
    leak_decay: float = 0.2
    t_exposed_us: float | None = None
    trace_stride: int = 0

    def __post_init__(self):
        nq = self.config.n_qubits
        for name in ("t1_us", "ro_error_1to0", "ro_error_0to1"):
            vals = getattr(self, name)
            if np.isscalar(vals):
                vals = (float(vals),) * nq
            vals = tuple(float(v) for v in vals)
            if len(vals) != nq:
                raise ValueError(f"{name} must have one entry per qubit")
            object.__setattr__(self, name, vals)
        if any(t <= 0 for t in self.t1_us):
            raise ValueError("t1 must be positive")
        for p in self.ro_error_1to0 + self.ro_error_0to1:
            if not 0 <= p <= 1:
                raise ValueError("readout error probabilities must be in [0, 1]")
        if not self.has_builtin_trap and self.qp_params.kappa != 0:
            raise ValueError("kappa must be 0 without a built-in trap")
        if not 0 <= self.slow_fraction <= 1:
            raise ValueError("slow_fraction must be in [0, 1]")

    @property
    def t_exposed_s(self) -> float:
        if self.t_exposed_us is not None:
            return self.t_exposed_us * 1e-6
        return (self.config.t_wait_us + self.config.t_ro_us / 2) * 1e-6


def error_prob_per_cycle(
    t1_us: float, t_exposed_us: float, ro_err_1to0: float, ro_err_0to1: float
):
    """Per-cycle outcome error probabilities of an isolated qubit.

    Returns (p_read0_given_excited, p_read1_given_ground) combining
    relaxation over the exposed interval with readout misassignment.
    """
    for p in (ro_err_1to0, ro_err_0to1):
        if not 0 <= p <= 1:
            raise ValueError("invalid probability")
    if t1_us <= 0:
        raise ValueError("t1 must be positive")
    p_relax = 1.0 - math.exp(-t_exposed_us / t1_us)
    p0_excited = p_relax * (1.0 - ro_err_0to1) + (1.0 - p_relax) * ro_err_1to0
    return p0_excited, ro_err_0to1


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), stream]))


def generate_arrivals(profile: RateProfile, duration_s: float, seed: int) -> np.ndarray:
    """Burst arrival times by thinning against the profile's maximum rate."""
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    g_max = profile.max_rate
    if g_max == 0:
        return np.empty(0)
    rng = _rng(seed, _BURST_STREAM)
    times = []
    t = 0.0
    while True:
        u, v = rng.random(2)
        t -= math.log1p(-u) / g_max
        if t >= duration_s:
            break
        if v * g_max < rate_profile_at(profile, t):
            times.append(t)
    return np.array(times)


def _draw_injections(scenario: Scenario, times_s: np.ndarray, seed: int):
    rng = _rng(seed, _INJECT_STREAM)
    z = rng.standard_normal(len(times_s))
    u = rng.random(len(times_s))
    x = scenario.inject_median * np.exp(scenario.inject_sigma * z)
    if scenario.slow_fraction > 0 and scenario.profile.kind == "surge":
        t0 = scenario.profile.surge_start_s
        t1 = t0 + scenario.profile.spike_duration_s
        in_spike = (times_s >= t0) & (times_s <= t1)
        slow = in_spike & (u < scenario.slow_fraction)
    else:
        slow = np.zeros(len(times_s), dtype=bool)
    return x, slow


def simulate(
    scenario: Scenario,
    duration_s: float,
    seed: int | None = None,
    chunk_cycles: int = 1 << 20,
) -> tuple[OutcomeSeries, GroundTruthLog]:
    """Run the cycle-level simulation; deterministic for a given seed."""
    seed = scenario.seed if seed is None else seed
    if seed is None:
        raise ValueError("a seed is required (no ambient entropy)")
    cfg = scenario.config
    t_cycle = cfg.t_cycle_s
    n_cycles = int(duration_s / t_cycle)
    nq = cfg.n_qubits

    times = generate_arrivals(scenario.profile, n_cycles * t_cycle, seed)
    x_inject, slow = _draw_injections(scenario, times, seed)
    burst_cycles = (times / t_cycle).astype(np.int64)

    qp = scenario.qp_params
    s_eff = qp.trapping_rate(cfg.pulse_rate_hz)
    slow_decay = math.exp(-t_cycle / scenario.slow_tau_s)
    gamma_base = np.array([1e6 / t1 for t1 in scenario.t1_us])
    ro10 = np.asarray(scenario.ro_error_1to0)
    ro01 = np.asarray(scenario.ro_error_0to1)

    stride = scenario.trace_stride
    if stride:
        chunk_cycles = max(stride, (chunk_cycles // stride) * stride)
        x_trace = np.zeros((n_cycles + stride - 1) // stride)
    else:
        x_trace = None

    out = np.empty((n_cycles, nq), dtype=np.uint8)
    states = np.zeros(nq, dtype=np.int8)
    rngs = [_rng(seed, q) for q in range(nq)]
    u = np.empty((min(chunk_cycles, max(n_cycles, 1)), nq, 2))
    x_fast, x_slow = 0.0, 0.0
    for c0 in range(0, n_cycles, chunk_cycles):
        c1 = min(c0 + chunk_cycles, n_cycles)
        span = c1 - c0
        for q in range(nq):
            u[:span, q, :] = rngs[q].random((span, 2))
        t_chunk = (c0 + np.arange(span)) * t_cycle
        inv_scale = 1.0 / np.asarray(
            t1_scale_at(scenario.profile, scenario.t1_surge_suppression, t_chunk)
        )
        in_chunk = (burst_cycles >= c0) & (burst_cycles < c1)
        if stride:
            trace_slice = x_trace[c0 // stride : (c1 + stride - 1) // stride]
        else:
            trace_slice = None
        x_fast, x_slow = kernels.simulate_cycles(
            states,
            out[c0:c1],
            u[:span],
            x_fast,
            x_slow,
            gamma_base,
            np.ascontiguousarray(inv_scale),
            qp.c_gamma,
            scenario.t_exposed_s,
            t_cycle,
            qp.r,
            s_eff,
            qp.g,
            slow_decay,
            ro10,
            ro01,
            scenario.leak_prob,
            scenario.leak_decay,
            np.ascontiguousarray(burst_cycles[in_chunk] - c0, dtype=np.int64),
            np.ascontiguousarray(x_inject[in_chunk]),
            np.ascontiguousarray(slow[in_chunk], dtype=np.uint8),
            trace_slice,
            stride if stride else 1,
        )
    series = OutcomeSeries(config=cfg, outcomes=out, seed=seed)
    log = GroundTruthLog(
        burst_times_s=times,
        burst_cycles=burst_cycles,
        x_inject=x_inject,
        slow=slow,
        profile=scenario.profile,
        trace_stride=stride,
        x_trace=x_trace,
    )
    return series, log


def surge_t1_overlay(
    scenario: Scenario, duration_s: float, bin_width_s: float | None = None
):
    """Ground-truth average T1 vs time under the surge suppression schedule.

    Returns (bin_centers_s, mean T1 in us averaged over qubits and bin).
    """
    if bin_width_s is None:
        bin_width_s = duration_s / 100
    edges = np.arange(0, duration_s + bin_width_s, bin_width_s)
    t1_avg = float(np.mean(scenario.t1_us))
    centers = (edges[:-1] + edges[1:]) / 2
    # average the schedule over each bin on a fine grid
    fine = 16
    tt = np.linspace(edges[:-1], edges[1:], fine, axis=1)
    scale = t1_scale_at(scenario.profile, scenario.t1_surge_suppression, tt)
    return centers, t1_avg * scale.mean(axis=1)


def _config(
    t_cycle_us: float,
    n_qubits: int,
    t_x_ns: float = 20.0,
    t_wait_us: float = 2.0,
    t_ro_us: float = 2.0,
    m_extra_pulses: int = 0,
    label: str = "",
    area: float = 0.64,
) -> AcquisitionConfig:
    t_idle = t_cycle_us - (t_x_ns * 1e-3 + t_wait_us + t_ro_us)
    return AcquisitionConfig(
        n_qubits=n_qubits,
        t_x_ns=t_x_ns,
        t_wait_us=t_wait_us,
        t_ro_us=t_ro_us,
        t_idle_us=t_idle,
        t_cycle_us=t_cycle_us,
        m_extra_pulses=m_extra_pulses,
        device_label=label,
        device_area_cm2=area,
    )


# Scenario quasiparticle defaults: recovery ~2 ms at a 100 us cycle with
# pumping active, ~250 us for the trap-free device.
S5_QP = QpModelParams(r=500.0, s0=1600.0, kappa=0.08, g=1.6e-3, c_gamma=2e6)
S7_QP = QpModelParams(r=500.0, s0=16000.0, kappa=0.0, g=1.6e-2, c_gamma=2e6)


def s5_scenario(
    t_cycle_us: float = 30.0,
    gamma0: float = 1 / 38.9,
    m_extra_pulses: int = 0,
    seed: int | None = None,
    **overrides,
) -> Scenario:
    """Five-qubit device with Dolan junctions (built-in trap, pumping on)."""
    cfg = _config(
        t_cycle_us, 5, t_ro_us=2.0, m_extra_pulses=m_extra_pulses, label="S5"
    )
    base = dict(
        config=cfg,
        t1_us=S5_T1_US,
        ro_error_1to0=(S5_RO_ERROR,) * 5,
        ro_error_0to1=(S5_RO_ERROR,) * 5,
        qp_params=S5_QP,
        profile=RateProfile(kind="constant", gamma0=gamma0),
        seed=seed,
        has_builtin_trap=True,
    )
    base.update(overrides)
    return Scenario(**base)


def s7_scenario(
    t_cycle_us: float = 10.0,
    gamma0: float = 1 / 58.9,
    m_extra_pulses: int = 0,
    seed: int | None = None,
    **overrides,
) -> Scenario:
    """Seven-qubit device with Manhattan junctions (no trap, no pumping)."""
    cfg = _config(
        t_cycle_us, 7, t_ro_us=1.0, m_extra_pulses=m_extra_pulses, label="S7"
    )
    base = dict(
        config=cfg,
        t1_us=S7_T1_US,
        ro_error_1to0=(S7_RO_ERROR,) * 7,
        ro_error_0to1=(S7_RO_ERROR,) * 7,
        qp_params=S7_QP,
        profile=RateProfile(kind="constant", gamma0=gamma0),
        seed=seed,
        has_builtin_trap=False,
    )
    base.update(overrides)
    return Scenario(**base)


class ScenarioParseError(ValueError):
    """Scenario file error; carries the offending line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def scenario_to_text(scenario: Scenario) -> str:
    """Serialize a scenario as section-prefixed key=value lines."""
    cfg = scenario.config
    qp = scenario.qp_params
    p = scenario.profile
    lines = [
        f"device.label={cfg.device_label}",
        f"device.n_qubits={cfg.n_qubits}",
        f"device.area_cm2={cfg.device_area_cm2!r}",
        f"device.has_builtin_trap={int(scenario.has_builtin_trap)}",
        f"timing.t_x_ns={cfg.t_x_ns!r}",
        f"timing.t_wait_us={cfg.t_wait_us!r}",
        f"timing.t_ro_us={cfg.t_ro_us!r}",
        f"timing.t_idle_us={cfg.t_idle_us!r}",
        f"timing.t_cycle_us={cfg.t_cycle_us!r}",
        f"timing.m_extra_pulses={cfg.m_extra_pulses}",
    ]
    for q in range(cfg.n_qubits):
        lines.append(f"qubit.{q}.t1_us={scenario.t1_us[q]!r}")
        lines.append(f"qubit.{q}.ro_error_1to0={scenario.ro_error_1to0[q]!r}")
        lines.append(f"qubit.{q}.ro_error_0to1={scenario.ro_error_0to1[q]!r}")
    for key in ("r", "s0", "kappa", "g", "c_gamma", "gamma1_base"):
        lines.append(f"qp.{key}={getattr(qp, key)!r}")
    lines += [
        f"burst.gamma0_per_s={p.gamma0!r}",
        f"burst.inject_median={scenario.inject_median!r}",
        f"burst.inject_sigma={scenario.inject_sigma!r}",
        f"burst.slow_fraction={scenario.slow_fraction!r}",
        f"burst.slow_tau_s={scenario.slow_tau_s!r}",
        f"surge.kind={p.kind}",
        f"surge.start_s={p.surge_start_s!r}",
        f"surge.spike_factor={p.spike_factor!r}",
        f"surge.spike_duration_s={p.spike_duration_s!r}",
        f"surge.decay_time_s={p.decay_time_s!r}",
        f"surge.stall_factor={p.stall_factor!r}",
        f"surge.t1_suppression={scenario.t1_surge_suppression!r}",
        f"leakage.prob={scenario.leak_prob!r}",
        f"leakage.decay={scenario.leak_decay!r}",
    ]
    if scenario.t_exposed_us is not None:
        lines.append(f"sim.t_exposed_us={scenario.t_exposed_us!r}")
    if scenario.trace_stride:
        lines.append(f"sim.trace_stride={scenario.trace_stride}")
    return "\n".join(lines) + "\n"


_KNOWN_SECTIONS = ("device", "timing", "qubit", "qp", "burst", "surge", "leakage", "sim")


def scenario_from_text(text: str) -> Scenario:
    """Parse the key=value scenario format; errors carry line numbers."""
    kv: dict[str, str] = {}
    linenos: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ScenarioParseError(lineno, f"expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key.split(".", 1)[0] not in _KNOWN_SECTIONS:
            raise ScenarioParseError(lineno, f"unknown key {key!r}")
        kv[key] = value.strip()
        linenos[key] = lineno

    def get(key, convert=float, default=None):
        if key not in kv:
            if default is None:
                raise ScenarioParseError(0, f"missing required key {key!r}")
            return default
        try:
            return convert(kv[key])
        except ValueError as exc:
            raise ScenarioParseError(linenos[key], f"bad value for {key}: {exc}")

    nq = get("device.n_qubits", int)
    try:
        cfg = AcquisitionConfig(
            n_qubits=nq,
            t_x_ns=get("timing.t_x_ns"),
            t_wait_us=get("timing.t_wait_us"),
            t_ro_us=get("timing.t_ro_us"),
            t_idle_us=get("timing.t_idle_us"),
            t_cycle_us=get("timing.t_cycle_us"),
            m_extra_pulses=get("timing.m_extra_pulses", int, 0),
            device_label=kv.get("device.label", ""),
            device_area_cm2=get("device.area_cm2", float, 0.64),
        )
        qp = QpModelParams(
            r=get("qp.r", float, 0.0),
            s0=get("qp.s0", float, 0.0),
            kappa=get("qp.kappa", float, 0.0),
            g=get("qp.g", float, 0.0),
            c_gamma=get("qp.c_gamma", float, 0.0),
            gamma1_base=get("qp.gamma1_base", float, 0.0),
        )
        profile = RateProfile(
            kind=kv.get("surge.kind", "constant"),
            gamma0=get("burst.gamma0_per_s", float, 0.0),
            surge_start_s=get("surge.start_s", float, 0.0),
            spike_factor=get("surge.spike_factor", float, 10.0),
            spike_duration_s=get("surge.spike_duration_s", float, 0.0),
            decay_time_s=get("surge.decay_time_s", float, 1.0),
            stall_factor=get("surge.stall_factor", float, 0.01),
        )
        t_exposed = get("sim.t_exposed_us", float, -1.0)
        return Scenario(
            config=cfg,
            t1_us=tuple(get(f"qubit.{q}.t1_us") for q in range(nq)),
            ro_error_1to0=tuple(
                get(f"qubit.{q}.ro_error_1to0", float, 0.0) for q in range(nq)
            ),
            ro_error_0to1=tuple(
                get(f"qubit.{q}.ro_error_0to1", float, 0.0) for q in range(nq)
            ),
            qp_params=qp,
            profile=profile,
            inject_median=get("burst.inject_median", float, 1.0),
            inject_sigma=get("burst.inject_sigma", float, 0.5),
            has_builtin_trap=bool(get("device.has_builtin_trap", int, 1)),
            t1_surge_suppression=get("surge.t1_suppression", float, 3.0),
            slow_fraction=get("burst.slow_fraction", float, 0.0),
            slow_tau_s=get("burst.slow_tau_s", float, 3e-3),
            leak_prob=get("leakage.prob", float, 0.0),
            leak_decay=get("leakage.decay", float, 0.2),
            t_exposed_us=None if t_exposed < 0 else t_exposed,
            trace_stride=get("sim.trace_stride", int, 0),
        )
    except ScenarioParseError:
        raise
    except ValueError as exc:
        raise ScenarioParseError(0, str(exc))


def write_truth_csv(log: GroundTruthLog, path, c_gamma: float = 0.0) -> None:
    """Ground-truth CSV: cycle,x_inject[,slow]; decimated trace appended."""
    with open(path, "w") as fh:
        fh.write("cycle,x_inject,slow\n")
        for c, x, s in zip(log.burst_cycles, log.x_inject, log.slow):
            fh.write(f"{c},{x!r},{int(s)}\n")
        if log.x_trace is not None:
            fh.write("# trace: cycle,x,gamma1_excess\n")
            for i, x in enumerate(log.x_trace):
                fh.write(f"# {i * log.trace_stride},{x!r},{c_gamma * x!r}\n")
