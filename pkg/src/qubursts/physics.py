"""Physical sub-models behind the simulator.

Covers the thin-film gap formula for Al junction electrodes, the
gap-difference estimate used to classify junction stacks, and a lumped
quasiparticle-density model (quadratic recombination, linear trapping,
constant generation) whose trapping rate can be pumped by the applied
pi-pulse rate when a built-in trap electrode is present.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import kernels

__all__ = [
    "GapModel",
    "JunctionStack",
    "QpModelParams",
    "QpState",
    "PLANCK_EV_S",
    "gap_of_thickness",
    "gap_difference_ghz",
    "qp_step",
    "gamma1_of",
    "recovery_time_model",
    "params_to_text",
    "params_from_text",
]

PLANCK_EV_S = 4.135667696e-15  # eV * s


@dataclass(frozen=True)
class GapModel:
    """Empirical thin-film gap model: Delta(d) = delta_bulk + alpha / d."""

    delta_bulk_uev: float = 180.0
    alpha_uev_nm: float = 600.0

    def __post_init__(self):
        if self.delta_bulk_uev <= 0 or self.alpha_uev_nm <= 0:
            raise ValueError("gap model parameters must be positive")


@dataclass(frozen=True)
class JunctionStack:
    """Thicknesses and frequency of one Al/AlOx/Al junction stack."""

    d_bottom_nm: float
    d_top_nm: float
    f_q_ghz: float
    has_builtin_trap: bool = False

    def __post_init__(self):
        if self.d_bottom_nm <= 0 or self.d_top_nm <= 0:
            raise ValueError("layer thicknesses must be positive")
        if self.f_q_ghz <= 0:
            raise ValueError("f_q must be positive")


@dataclass(frozen=True)
class QpModelParams:
    """Rate coefficients of the lumped quasiparticle-density model.

    ``kappa`` couples the applied pi-pulse rate into the trapping rate
    (one pumping increment per pulse, to lowest order) and must be zero
    for devices without a built-in trap.
    """

    r: float = 0.0  # recombination, 1/(density*s)
    s0: float = 0.0  # baseline trapping, 1/s
    kappa: float = 0.0  # trapping increment per unit pulse rate, 1/pulse
    g: float = 0.0  # background generation, density/s
    c_gamma: float = 0.0  # relaxation coupling, (1/s) per unit density
    gamma1_base: float = 0.0  # baseline relaxation rate, 1/s

    def __post_init__(self):
        for name in ("r", "s0", "kappa", "g", "c_gamma", "gamma1_base"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def trapping_rate(self, pulse_rate_hz: float) -> float:
        return self.s0 + self.kappa * pulse_rate_hz


@dataclass(frozen=True)
class QpState:
    """Instantaneous normalized quasiparticle density."""

    x: float
    t: float = 0.0

    def __post_init__(self):
        if self.x < 0:
            raise ValueError("density must be >= 0")


def gap_of_thickness(model: GapModel, d_nm: float) -> float:
    """Superconducting gap of an Al film of thickness d, in ueV."""
    if d_nm <= 0:
        raise ValueError("thickness must be positive")
    return model.delta_bulk_uev + model.alpha_uev_nm / d_nm


def gap_difference_ghz(stack: JunctionStack, model: GapModel = GapModel()):
    """Gap difference between the two junction layers, expressed as delta/h.

    Returns (frequency_ghz, gap_engineering_absent): the boolean flags
    that the qubit transition energy exceeds the gap difference, in which
    case no band-gap engineering effects are expected.
    """
    d_bot = gap_of_thickness(model, stack.d_bottom_nm)
    d_top = gap_of_thickness(model, stack.d_top_nm)
    delta_uev = abs(d_bot - d_top)
    freq_ghz = delta_uev * 1e-6 / PLANCK_EV_S * 1e-9
    return freq_ghz, stack.f_q_ghz > freq_ghz


def qp_step(
    state: QpState, params: QpModelParams, pulse_rate_hz: float, dt_s: float
) -> QpState:
    """Advance the density by dt via dx/dt = -r x^2 - (s0 + kappa*f) x + g.

    Classical RK4 with the step subdivided so the relative change per
    substep stays below 1%; the density is clamped at zero.
    """
    if dt_s <= 0:
        raise ValueError("dt must be positive")
    if pulse_rate_hz < 0:
        raise ValueError("pulse_rate_hz must be >= 0")
    if not (math.isfinite(state.x) and math.isfinite(dt_s)):
        raise ValueError("non-finite input")
    s_eff = params.trapping_rate(pulse_rate_hz)
    x_new = kernels.qp_advance(state.x, dt_s, params.r, s_eff, params.g)
    return QpState(x=x_new, t=state.t + dt_s)


def gamma1_of(state: QpState, params: QpModelParams) -> float:
    """Qubit relaxation rate at the current density: base + c_gamma * x."""
    return params.gamma1_base + params.c_gamma * state.x


def recovery_time_model(
    params: QpModelParams,
    x_inject: float,
    pulse_rate_hz: float,
    threshold: float,
    max_steps: int = 100_000_000,
) -> float:
    """Time for the density to fall from x_inject below threshold.

    Integrates the density model with a fixed step of 1% of the initial
    decay timescale and interpolates the crossing linearly.
    """
    if threshold >= x_inject:
        raise ValueError("threshold must be below x_inject")
    s_eff = params.trapping_rate(pulse_rate_hz)
    # equilibrium above threshold means the density never drops below it
    if -params.r * threshold**2 - s_eff * threshold + params.g >= 0:
        raise ValueError("density never recovers below threshold (g too large)")
    rate0 = params.r * x_inject + s_eff
    dt = 0.01 / rate0
    x = x_inject
    t = 0.0
    for _ in range(max_steps):
        x_next = kernels.qp_advance(x, dt, params.r, s_eff, params.g)
        if x_next < threshold:
            return t + dt * (x - threshold) / (x - x_next)
        x, t = x_next, t + dt
    raise RuntimeError("density did not recover within the step budget")


def params_to_text(params: QpModelParams) -> str:
    """Serialize parameters as key=value lines."""
    return "".join(
        f"{k}={getattr(params, k)!r}\n"
        for k in ("r", "s0", "kappa", "g", "c_gamma", "gamma1_base")
    )


def params_from_text(text: str) -> QpModelParams:
    """Parse key=value lines produced by :func:`params_to_text`."""
    fields = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = float(value)
    return QpModelParams(**fields)
