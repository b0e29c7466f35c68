"""Domain types shared by the detector, statistics and simulator layers.

All types are immutable after construction and validate their invariants
eagerly, so downstream code can assume well-formed inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

__all__ = [
    "AcquisitionConfig",
    "OutcomeSeries",
    "EventRecord",
    "RateEstimate",
    "KEPT",
    "REJECTED",
    "KEPT_LONG_RECOVERY",
]

# classification labels for EventRecord
KEPT = "kept"
REJECTED = "rejected"
KEPT_LONG_RECOVERY = "kept_long_recovery"
_CLASSIFICATIONS = (KEPT, REJECTED, KEPT_LONG_RECOVERY)


@dataclass(frozen=True)
class AcquisitionConfig:
    """Timing and device metadata of one repeated pi-pulse/measure acquisition.

    Durations follow the conventions of the raw data: ``t_x`` in ns, all
    other durations in microseconds.  ``t_cycle`` must equal
    ``t_x + t_wait + t_ro + t_idle`` within one ns of rounding.
    """

    n_qubits: int
    t_x_ns: float
    t_wait_us: float
    t_ro_us: float
    t_idle_us: float
    t_cycle_us: float
    m_extra_pulses: int = 0
    device_label: str = ""
    device_area_cm2: float = 0.64

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        if self.t_x_ns <= 0 or self.t_wait_us <= 0 or self.t_ro_us <= 0:
            raise ValueError("t_x, t_wait and t_ro must be positive")
        if self.t_idle_us < 0:
            raise ValueError("t_idle must be >= 0")
        if self.m_extra_pulses < 0 or self.m_extra_pulses % 2 != 0:
            raise ValueError("m_extra_pulses must be an even non-negative integer")
        if self.device_area_cm2 <= 0:
            raise ValueError("device_area_cm2 must be positive")
        parts = self.t_x_ns * 1e-3 + self.t_wait_us + self.t_ro_us + self.t_idle_us
        if abs(parts - self.t_cycle_us) > 1e-3:  # one ns
            raise ValueError(
                f"t_cycle_us={self.t_cycle_us} does not equal the sum of its "
                f"parts ({parts} us)"
            )

    @property
    def t_cycle_s(self) -> float:
        return self.t_cycle_us * 1e-6

    @property
    def pulse_rate_hz(self) -> float:
        """Effective pi-pulse rate, counting the extra pulses inserted in t_idle."""
        return (1 + self.m_extra_pulses) / self.t_cycle_s


@dataclass(frozen=True)
class OutcomeSeries:
    """Time-ordered binary measurement outcomes for all qubits.

    ``outcomes`` has shape (n_cycles, n_qubits) with entries in {0, 1};
    1 means the qubit was read out in the excited state.  Cycle k maps to
    elapsed analysis time ``k * t_cycle``.
    """

    config: AcquisitionConfig
    outcomes: np.ndarray
    seed: int | None = None
    start_time: str | None = None

    def __post_init__(self):
        out = np.ascontiguousarray(self.outcomes, dtype=np.uint8)
        if out.ndim != 2 or out.shape[1] != self.config.n_qubits:
            raise ValueError(
                f"outcomes must be (n_cycles, {self.config.n_qubits}), "
                f"got {out.shape}"
            )
        if out.size and out.max() > 1:
            raise ValueError("outcomes must contain only 0 and 1")
        out.flags.writeable = False
        object.__setattr__(self, "outcomes", out)

    @property
    def n_cycles(self) -> int:
        return self.outcomes.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_cycles * self.config.t_cycle_s

    def __eq__(self, other) -> bool:
        if not isinstance(other, OutcomeSeries):
            return NotImplemented
        return (
            self.config == other.config
            and self.seed == other.seed
            and self.start_time == other.start_time
            and self.outcomes.shape == other.outcomes.shape
            and bool(np.array_equal(self.outcomes, other.outcomes))
        )


@dataclass(frozen=True)
class EventRecord:
    """One detected simultaneous-error event.

    ``t0_cycle`` is the alignment origin set by the matched-filter peak;
    the core region of elevated error counts lies inside
    ``[window_start, window_end)``.
    """

    t0_cycle: int
    peak_n: int
    window_start: int
    window_end: int
    mf_peak: float = float("nan")
    classification: str = REJECTED
    baseline_pre: float = 0.0
    boundary_clipped: bool = False

    def __post_init__(self):
        if not (self.window_start <= self.t0_cycle <= self.window_end):
            raise ValueError("t0_cycle must lie inside the event window")
        if self.classification not in _CLASSIFICATIONS:
            raise ValueError(f"unknown classification {self.classification!r}")


@dataclass(frozen=True)
class RateEstimate:
    """Event count over an observation time with Poisson counting error."""

    n_events: int
    duration_s: float
    rate: float = field(init=False)
    stderr: float = field(init=False)

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.n_events < 0:
            raise ValueError("n_events must be >= 0")
        object.__setattr__(self, "rate", self.n_events / self.duration_s)
        object.__setattr__(
            self, "stderr", np.sqrt(self.n_events) / self.duration_s
        )
