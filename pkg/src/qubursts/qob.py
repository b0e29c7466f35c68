"""Reader/writer for the QOB outcome-stream formats (text and binary).

Text files carry a ``# key=value`` header followed by one row of
``{0,1}`` characters per cycle, qubit 0 first.  Binary files start with
the magic ``QOB1``, a fixed little-endian header, then one bit-packed
row per cycle (``ceil(n_qubits/8)`` bytes, qubit 0 in the least
significant bit of the first byte, unused high bits zero).
"""

from __future__ import annotations

import io
import struct
from contextlib import contextmanager

import numpy as np

from .core import AcquisitionConfig, OutcomeSeries

__all__ = ["read_outcomes", "write_outcomes", "QobFormatError"]

MAGIC = b"QOB1"

_REQUIRED_KEYS = (
    "n_qubits",
    "t_cycle_us",
    "t_x_ns",
    "t_wait_us",
    "t_ro_us",
    "t_idle_us",
    "m_extra_pulses",
    "device_label",
    "device_area_cm2",
)

# magic is handled separately; header covers n_qubits .. m_extra_pulses
_BIN_HEAD = struct.Struct("<IQ6dI")


class QobFormatError(ValueError):
    """Raised when a stream does not conform to the QOB format."""


@contextmanager
def _open(source, mode):
    if hasattr(source, "read") or hasattr(source, "write"):
        yield source
    else:
        with open(source, mode) as fh:
            yield fh


def read_outcomes(source, format: str = "binary") -> OutcomeSeries:
    """Parse a QOB stream (path or binary file object) into an OutcomeSeries."""
    if format == "text":
        with _open(source, "rb") as fh:
            return _read_text(fh)
    if format == "binary":
        with _open(source, "rb") as fh:
            return _read_binary(fh)
    raise ValueError(f"unknown format {format!r}")


def write_outcomes(series: OutcomeSeries, dest, format: str = "binary") -> None:
    """Write an OutcomeSeries so that ``read_outcomes`` round-trips bit-exactly."""
    if format == "text":
        with _open(dest, "wb") as fh:
            _write_text(series, fh)
    elif format == "binary":
        with _open(dest, "wb") as fh:
            _write_binary(series, fh)
    else:
        raise ValueError(f"unknown format {format!r}")


def _read_text(fh) -> OutcomeSeries:
    header: dict[str, str] = {}
    rows: list[bytes] = []
    for lineno, raw in enumerate(fh, start=1):
        line = raw.decode("utf-8").rstrip("\r\n")
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" not in body:
                raise QobFormatError(f"line {lineno}: malformed header line {line!r}")
            key, value = body.split("=", 1)
            header[key.strip()] = value.strip()
        else:
            rows.append((lineno, line))
    missing = [k for k in _REQUIRED_KEYS if k not in header]
    if missing:
        raise QobFormatError(f"header missing required key(s): {', '.join(missing)}")
    try:
        config = AcquisitionConfig(
            n_qubits=int(header["n_qubits"]),
            t_x_ns=float(header["t_x_ns"]),
            t_wait_us=float(header["t_wait_us"]),
            t_ro_us=float(header["t_ro_us"]),
            t_idle_us=float(header["t_idle_us"]),
            t_cycle_us=float(header["t_cycle_us"]),
            m_extra_pulses=int(header["m_extra_pulses"]),
            device_label=header["device_label"],
            device_area_cm2=float(header["device_area_cm2"]),
        )
    except ValueError as exc:
        raise QobFormatError(f"invalid header: {exc}") from exc

    out = np.empty((len(rows), config.n_qubits), dtype=np.uint8)
    for i, (lineno, line) in enumerate(rows):
        if len(line) != config.n_qubits:
            raise QobFormatError(
                f"line {lineno}: row width {len(line)} != n_qubits {config.n_qubits}"
            )
        row = np.frombuffer(line.encode("ascii", "replace"), dtype=np.uint8) - ord("0")
        if row.max(initial=0) > 1:
            raise QobFormatError(f"line {lineno}: non-bit character in row {line!r}")
        out[i] = row
    seed = int(header["seed"]) if "seed" in header else None
    start_time = header.get("start_time")
    return OutcomeSeries(config=config, outcomes=out, seed=seed, start_time=start_time)


def _write_text(series: OutcomeSeries, fh) -> None:
    cfg = series.config
    buf = io.StringIO()
    buf.write(f"# n_qubits={cfg.n_qubits}\n")
    buf.write(f"# t_cycle_us={cfg.t_cycle_us!r}\n")
    buf.write(f"# t_x_ns={cfg.t_x_ns!r}\n")
    buf.write(f"# t_wait_us={cfg.t_wait_us!r}\n")
    buf.write(f"# t_ro_us={cfg.t_ro_us!r}\n")
    buf.write(f"# t_idle_us={cfg.t_idle_us!r}\n")
    buf.write(f"# m_extra_pulses={cfg.m_extra_pulses}\n")
    buf.write(f"# device_label={cfg.device_label}\n")
    buf.write(f"# device_area_cm2={cfg.device_area_cm2!r}\n")
    if series.seed is not None:
        buf.write(f"# seed={series.seed}\n")
    if series.start_time is not None:
        buf.write(f"# start_time={series.start_time}\n")
    fh.write(buf.getvalue().encode("utf-8"))
    digits = (series.outcomes + ord("0")).astype(np.uint8)
    newline = np.full((series.n_cycles, 1), ord("\n"), dtype=np.uint8)
    fh.write(np.hstack([digits, newline]).tobytes())


def _read_binary(fh) -> OutcomeSeries:
    magic = fh.read(4)
    if magic != MAGIC:
        raise QobFormatError(f"binary magic mismatch: {magic!r}")
    head = fh.read(_BIN_HEAD.size)
    if len(head) != _BIN_HEAD.size:
        raise QobFormatError("truncated binary header")
    (
        n_qubits,
        n_cycles,
        t_cycle_us,
        t_x_ns,
        t_wait_us,
        t_ro_us,
        t_idle_us,
        area,
        m_extra,
    ) = _BIN_HEAD.unpack(head)
    raw = fh.read(2)
    if len(raw) != 2:
        raise QobFormatError("truncated binary header (label length)")
    (label_len,) = struct.unpack("<H", raw)
    label = fh.read(label_len)
    if len(label) != label_len:
        raise QobFormatError("truncated binary header (label)")
    try:
        config = AcquisitionConfig(
            n_qubits=n_qubits,
            t_x_ns=t_x_ns,
            t_wait_us=t_wait_us,
            t_ro_us=t_ro_us,
            t_idle_us=t_idle_us,
            t_cycle_us=t_cycle_us,
            m_extra_pulses=m_extra,
            device_label=label.decode("utf-8"),
            device_area_cm2=area,
        )
    except ValueError as exc:
        raise QobFormatError(f"invalid binary header: {exc}") from exc
    row_bytes = (n_qubits + 7) // 8
    payload = fh.read(n_cycles * row_bytes)
    if len(payload) != n_cycles * row_bytes:
        raise QobFormatError(
            f"truncated payload: expected {n_cycles * row_bytes} bytes, "
            f"got {len(payload)}"
        )
    packed = np.frombuffer(payload, dtype=np.uint8).reshape(n_cycles, row_bytes)
    out = np.unpackbits(packed, axis=1, count=n_qubits, bitorder="little")
    return OutcomeSeries(config=config, outcomes=out)


def _write_binary(series: OutcomeSeries, fh) -> None:
    cfg = series.config
    label = cfg.device_label.encode("utf-8")
    fh.write(MAGIC)
    fh.write(
        _BIN_HEAD.pack(
            cfg.n_qubits,
            series.n_cycles,
            cfg.t_cycle_us,
            cfg.t_x_ns,
            cfg.t_wait_us,
            cfg.t_ro_us,
            cfg.t_idle_us,
            cfg.device_area_cm2,
            cfg.m_extra_pulses,
        )
    )
    fh.write(struct.pack("<H", len(label)))
    fh.write(label)
    packed = np.packbits(series.outcomes, axis=1, bitorder="little")
    fh.write(packed.tobytes())
