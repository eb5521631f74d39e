"""
Reading and writing event streams and result records.

CSV files hold one column `time`, history rows (times <= 0) first, written
with 17 significant digits so a round trip is lossless. The binary format is
a fixed little-endian header followed by the raw float64 arrays.
"""

import json
import logging
import struct
import warnings
from math import isfinite
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from hawkes_ldp.simulate import EventStream, Start

logger = logging.getLogger(__name__)

__all__ = [
    "write_events_csv",
    "read_events_csv",
    "write_events_binary",
    "read_events_binary",
    "write_records_jsonl",
    "read_records_jsonl",
    "to_jsonable",
    "BINARY_MAGIC",
]

BINARY_MAGIC = b"HWKS"
_BINARY_VERSION = 1
# magic, version, start, horizon, history count, event count
_HEADER = struct.Struct("<4sBBdQQ")


def write_events_csv(stream: EventStream, path: Union[str, Path]) -> Path:
    path = Path(path)
    np.savetxt(path, stream.all_events, fmt="%.17g", header="time", comments="")
    logger.debug("wrote %d events to %s", len(stream.all_events), path)
    return path


def read_events_csv(
    path: Union[str, Path], horizon: float, start: Optional[Start] = None
) -> EventStream:
    """
    load a stream written by write_events_csv; rows <= 0 become the history
    ----------
    Arguments:
        - path: str or Path
        - horizon: float
            the window length, not stored in the CSV
        - start: Start, optional
            defaults to HISTORY when there are history rows, EMPTY otherwise
    Returns:
        - EventStream"""
    with warnings.catch_warnings():
        # a header-only file is an empty stream
        warnings.simplefilter("ignore", UserWarning)
        events = np.loadtxt(path, skiprows=1, ndmin=1, dtype=float)
    history = events[events <= 0]
    if start is None:
        start = Start.HISTORY if len(history) else Start.EMPTY
    return EventStream(horizon, events[events > 0], history, start)


def write_events_binary(stream: EventStream, path: Union[str, Path]) -> Path:
    path = Path(path)
    header = _HEADER.pack(
        BINARY_MAGIC,
        _BINARY_VERSION,
        stream.start.value,
        stream.horizon,
        len(stream.history),
        len(stream.times),
    )
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(stream.history.astype("<f8").tobytes())
        handle.write(stream.times.astype("<f8").tobytes())
    return path


def read_events_binary(path: Union[str, Path]) -> EventStream:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, start, horizon, n_history, n_times = _HEADER.unpack_from(data)
    if magic != BINARY_MAGIC:
        raise ValueError(f"{path}: not an event stream file")
    if version != _BINARY_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    expected = _HEADER.size + 8 * (n_history + n_times)
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    return EventStream(
        horizon, values[n_history:], values[:n_history], Start(start)
    )


def to_jsonable(value):
    """
    convert numpy scalars, enums and non-finite floats to plain JSON values;
    ±∞ and NaN are written as the strings "inf", "-inf" and "nan"
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if isfinite(value):
            return value
        return "nan" if value != value else ("inf" if value > 0 else "-inf")
    if hasattr(value, "name") and hasattr(value, "value"):
        return value.name.lower()
    return value


def write_records_jsonl(records: Iterable[dict], path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(to_jsonable(record), separators=(",", ":")))
            handle.write("\n")
    return path


def read_records_jsonl(path: Union[str, Path]) -> list:
    with open(path, encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]
