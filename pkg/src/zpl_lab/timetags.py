"""Binary time-tag files.

Layout (little-endian)::

    offset  size  field
    0       4     magic b"ZPLT"
    4       2     version (u16) = 1
    6       8     tick_seconds (f64)
    14      2     channel_count (u16)
    16      10*N  records: channel u8, reserved u8 (0), tick_count u64

Records are non-decreasing in tick_count within each channel.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .detection import DetectorRecords
from .errors import TimeTagFormatError

MAGIC = b"ZPLT"
VERSION = 1
HEADER = struct.Struct("<4sHdH")
RECORD_DTYPE = np.dtype([("channel", "<u1"), ("reserved", "<u1"), ("tick", "<u8")])
assert HEADER.size == 16 and RECORD_DTYPE.itemsize == 10


def _first_decrease(ticks: np.ndarray, channel: np.ndarray):
    """Index of the first record whose tick is below its channel's previous tick."""
    order = np.lexsort((np.arange(len(ticks)), channel))
    ch = channel[order]
    tk = ticks[order]
    bad = (ch[1:] == ch[:-1]) & (tk[1:] < tk[:-1])
    if not bad.any():
        return None
    return int(order[1:][bad].min())


def write_timetags(records: DetectorRecords, path, channel_count: int | None = None) -> None:
    if channel_count is None:
        channel_count = int(records.channel.max()) + 1 if len(records) else 0
    if (bad := _first_decrease(records.ticks, records.channel)) is not None:
        raise ValueError(f"record {bad} breaks per-channel ordering")
    out = np.zeros(len(records), dtype=RECORD_DTYPE)
    out["channel"] = records.channel
    out["tick"] = records.ticks
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, float(records.tick), channel_count))
        fh.write(out.tobytes())


def read_timetags(path) -> DetectorRecords:
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
        if len(head) < HEADER.size:
            raise TimeTagFormatError("truncated header", len(head))
        magic, version, tick, channel_count = HEADER.unpack(head)
        if magic != MAGIC:
            raise TimeTagFormatError(f"bad magic {magic!r}", 0)
        if version != VERSION:
            raise TimeTagFormatError(f"unsupported version {version}", 4)
        if not tick > 0:
            raise TimeTagFormatError(f"invalid tick {tick!r}", 6)
        body = size - HEADER.size
        if body % RECORD_DTYPE.itemsize:
            n_full = body // RECORD_DTYPE.itemsize
            raise TimeTagFormatError(
                "truncated record", HEADER.size + n_full * RECORD_DTYPE.itemsize
            )
        data = np.frombuffer(fh.read(body), dtype=RECORD_DTYPE)
    if len(data) and int(data["channel"].max()) >= max(channel_count, 1):
        i = int(np.argmax(data["channel"] >= channel_count))
        raise TimeTagFormatError("channel out of range", HEADER.size + i * RECORD_DTYPE.itemsize)
    bad = _first_decrease(data["tick"], data["channel"])
    if bad is not None:
        raise TimeTagFormatError("ticks decrease within a channel", HEADER.size + bad * RECORD_DTYPE.itemsize)
    return DetectorRecords(data["channel"].copy(), data["tick"].copy(), tick)
