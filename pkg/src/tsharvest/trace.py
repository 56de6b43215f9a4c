"""Message trace and the byte accounting derived from it."""

from __future__ import annotations

import csv
import math
from collections import defaultdict

HEADER = ["time", "event", "src", "dst", "bytes", "series_count", "slot_count", "method"]

BROADCAST = -1


class MessageTrace:
    """One record per send/receive/confirm/timeout.

    Byte counters for ``[window[0], window[1])`` are kept whether or not the
    lines are written anywhere: ``*_send`` events charge ``src`` and
    ``*_recv`` events charge ``dst``.  A ``*_recv`` with ``dst == -1`` is a
    broadcast reception whose bytes already sum over every receiver.
    """

    def __init__(self, path=None, window=(0.0, math.inf), keep: bool = False):
        self.window = window
        self.sent = defaultdict(int)
        self.received = defaultdict(int)
        self.records: list[tuple] | None = [] if keep else None
        self._fh = None
        self._writer = None
        if path is not None:
            self._fh = open(path, "w", newline="")
            self._writer = csv.writer(self._fh)
            self._writer.writerow(HEADER)

    def log(self, time, event, src, dst, nbytes, series_count=0, slot_count=0, method="harvest"):
        lo, hi = self.window
        if lo <= time < hi and nbytes:
            if event.endswith("_send"):
                self.sent[src] += nbytes
            elif event.endswith("_recv"):
                self.received[dst] += nbytes
        if self._writer is not None:
            self._writer.writerow((repr(float(time)), event, src, dst, nbytes, series_count,
                                   slot_count, method))
        if self.records is not None:
            self.records.append((time, event, src, dst, nbytes, series_count, slot_count, method))

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None
            self._writer = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @property
    def total_bytes(self) -> int:
        return sum(self.sent.values()) + sum(self.received.values())

    def overhead_kbps(self, n_nodes: int) -> float:
        """Mean per-node (sent + received) rate over the window, in KB/s (1 KB = 1024 B)."""
        lo, hi = self.window
        span = hi - lo
        if n_nodes <= 0 or not span > 0 or math.isinf(span):
            return math.nan
        return self.total_bytes / n_nodes / span / 1024.0


def fold_trace_bytes(path, t0: float, t1: float) -> int:
    """Total charged bytes in [t0, t1), recomputed from a trace file alone."""
    total = 0
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            t = float(row["time"])
            if not t0 <= t < t1:
                continue
            ev = row["event"]
            if ev.endswith("_send") or ev.endswith("_recv"):
                total += int(row["bytes"])
    return total
