"""Hot-kernel backend selection.

The compiled extension is preferred when importable; the pure-Python
reference is the fallback.  Set ``QUBURSTS_FORCE_PYTHON=1`` to force the
reference backend (used by the parity tests and the benchmark).
"""

import os

from . import _reference

if os.environ.get("QUBURSTS_FORCE_PYTHON") == "1":
    _impl = _reference
else:
    try:
        from . import _accel as _impl
    except ImportError:
        _impl = _reference

BACKEND = _impl.BACKEND
qp_advance = _impl.qp_advance
simulate_cycles = _impl.simulate_cycles
score_windows = _impl.score_windows

__all__ = ["BACKEND", "qp_advance", "simulate_cycles", "score_windows", "_reference"]
