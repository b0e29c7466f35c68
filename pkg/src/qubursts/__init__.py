"""Detection, statistics and simulation of correlated qubit-error bursts."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    KEPT,
    KEPT_LONG_RECOVERY,
    REJECTED,
    AcquisitionConfig,
    EventRecord,
    OutcomeSeries,
    RateEstimate,
)
from .kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
