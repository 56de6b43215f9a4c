"""Slot-based Boolean time series and the per-node store that holds them.

A series records, for every epoch-aligned slot ``[k*L, (k+1)*L)``, whether a
dependence occurred in it.  Only flagged slots are kept; an absent slot is an
empty slot.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from functools import cached_property
from operator import lt
from typing import Iterable, Iterator, NamedTuple

# Absorbs float error in t / slot_len, e.g. 0.3 / 0.1 == 2.9999999999999996.
_EPS = 1e-9


class SeriesId(NamedTuple):
    """Ordered dependence pair ``source -> target``."""

    source: str
    target: str

    @classmethod
    def of(cls, source: str, target: str) -> "SeriesId":
        if source == target:
            raise ValueError(f"series source and target must differ: {source!r}")
        return cls(source, target)


def slot_index(time: float, slot_len: float) -> int:
    """Index of the slot containing ``time`` (left-closed, epoch aligned)."""
    return int(math.floor(time / slot_len + _EPS))


def first_slot_at_or_after(time: float, slot_len: float) -> int:
    """Smallest slot index whose start time is >= ``time``."""
    return int(math.ceil(time / slot_len - _EPS))


def slot_ratio(a: float, b: float) -> int:
    """Return ``b / a`` as an int, or raise if the lengths are not commensurate."""
    r = b / a
    n = round(r)
    if n < 1 or abs(r - n) > 1e-6 * max(1.0, r):
        raise ValueError(f"slot lengths {a} and {b} are not integer multiples")
    return n


def _commensurate(a: float, b: float) -> tuple[int, int]:
    """(up, down): b = a*up if up > 1, a = b*down if down > 1, both 1 if equal."""
    if b >= a:
        return slot_ratio(a, b), 1
    return 1, slot_ratio(b, a)


class TimeSeries:
    """One series at one slot length.  ``slots`` holds the flagged indices."""

    __slots__ = ("id", "slot_len", "slots", "newest", "_sorted")

    def __init__(self, id: SeriesId, slot_len: float, slots: Iterable[int] = ()):
        self.id = id
        self.slot_len = slot_len
        self.slots: set[int] = set(slots)
        self.newest: int | None = max(self.slots) if self.slots else None
        self._sorted: list[int] | None = None

    def __repr__(self):
        return f"TimeSeries({self.id.source}->{self.id.target}, L={self.slot_len}, n={len(self.slots)})"

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.id == other.id and self.slot_len == other.slot_len and self.slots == other.slots

    def __len__(self):
        return len(self.slots)

    def flagged(self, index: int) -> bool:
        return index in self.slots

    def add(self, index: int) -> None:
        if index not in self.slots:
            self.slots.add(index)
            self._sorted = None
            if self.newest is None or index > self.newest:
                self.newest = index

    def update(self, indices: Iterable[int]) -> None:
        before = len(self.slots)
        self.slots.update(indices)
        if len(self.slots) != before:
            self._sorted = None
            top = max(self.slots)
            if self.newest is None or top > self.newest:
                self.newest = top

    def sorted_slots(self) -> list[int]:
        if self._sorted is None:
            self._sorted = sorted(self.slots)
        return self._sorted

    def since(self, lo: int) -> list[int]:
        """Flagged indices >= lo, ascending."""
        if self.newest is None or self.newest < lo:
            return []
        s = self.sorted_slots()
        return s[bisect_left(s, lo):]

    def any_between(self, lo: int, hi: int) -> bool:
        """True if any slot in the closed index range [lo, hi] is flagged."""
        if hi < lo or self.newest is None or self.newest < lo:
            return False
        if hi - lo < 16:
            slots = self.slots
            return any(k in slots for k in range(lo, hi + 1))
        s = self.sorted_slots()
        i = bisect_left(s, lo)
        return i < len(s) and s[i] <= hi

    def drop_before(self, lo: int) -> None:
        if not self.slots:
            return
        s = self.sorted_slots()
        cut = bisect_left(s, lo)
        if cut:
            self.slots.difference_update(s[:cut])
            self._sorted = s[cut:]
            self.newest = self._sorted[-1] if self._sorted else None

    def copy(self) -> "TimeSeries":
        return TimeSeries(self.id, self.slot_len, self.slots)


def resample(series: TimeSeries, target_slot_len: float) -> TimeSeries:
    """Aggregate (OR over each covered window) or split (replicate) a series.

    Raises ValueError when the two slot lengths are not integer multiples of
    one another.
    """
    up, down = _commensurate(series.slot_len, target_slot_len)
    if up == 1 and down == 1:
        return TimeSeries(series.id, target_slot_len, series.slots)
    if up > 1:
        return TimeSeries(series.id, target_slot_len, {k // up for k in series.slots})
    return TimeSeries(
        series.id,
        target_slot_len,
        (j for k in series.slots for j in range(k * down, (k + 1) * down)),
    )


class Entry:
    """A transferred slot run of one series.

    ``flags`` are the absolute indices of the non-empty slots, ascending.  The
    run spans ``first .. last``; by default that is the first to the newest
    flag, but ``span`` may widen it to carry empty slots at either end.
    Immutable by convention.
    """

    __slots__ = ("series", "flags", "span", "first", "last", "newest", "length")

    def __init__(self, series: SeriesId, flags: tuple[int, ...],
                 span: tuple[int, int] | None = None):
        if not flags:
            raise ValueError("entry must carry at least one flagged slot")
        self.series = series
        self.flags = flags
        self.span = span
        lo, hi = span if span else (flags[0], flags[-1])
        self.first = lo
        self.last = hi
        self.newest = flags[-1]
        self.length = hi - lo + 1

    def __eq__(self, other):
        if not isinstance(other, Entry):
            return NotImplemented
        return (self.series, self.flags, self.first, self.last) == \
            (other.series, other.flags, other.first, other.last)

    def __hash__(self):
        return hash((self.series, self.flags, self.first, self.last))

    def __repr__(self):
        return f"Entry({self.series!r}, {self.flags!r}, span=({self.first}, {self.last}))"

    @property
    def run(self) -> list[bool]:
        out = [False] * self.length
        base = self.first
        for k in self.flags:
            out[k - base] = True
        return out

    @classmethod
    def from_run(cls, series: SeriesId, first: int, run: Iterable[bool]) -> "Entry":
        return cls(series, tuple(first + i for i, v in enumerate(run) if v))


@dataclass(frozen=True)
class TransferDataset:
    """Per-peer increment: slot runs plus identifying info and newest slot."""

    slot_len: float
    entries: tuple[Entry, ...] = ()
    # set by builders that emit sorted, de-duplicated entries by construction
    verified: bool = field(default=False, compare=False, repr=False)

    def __bool__(self):
        return bool(self.entries)

    def __len__(self):
        return len(self.entries)

    @cached_property
    def slot_count(self) -> int:
        return sum(e.length for e in self.entries)

    def newest(self) -> dict[SeriesId, int]:
        return {e.series: e.newest for e in self.entries}

    def well_formed(self) -> bool:
        if not (self.slot_len > 0):
            return False
        if self.verified:
            return True
        seen = set()
        for e in self.entries:
            if e.series in seen or e.series.source == e.series.target:
                return False
            seen.add(e.series)
            f = e.flags
            if e.first < 0 or (len(f) > 1 and not all(map(lt, f, f[1:]))):
                return False
            if e.span and not e.span[0] <= e.flags[0] <= e.flags[-1] <= e.span[1]:
                return False
        return True


@dataclass
class TimeSeriesStore:
    """At most one series per id, all at ``slot_len``; pruned by ``retention``."""

    slot_len: float = 0.1
    retention: float = 1200.0
    series: dict[SeriesId, TimeSeries] = field(default_factory=dict)

    def __post_init__(self):
        self._by_source: dict[str, set[SeriesId]] = {}
        for sid in self.series:
            self._by_source.setdefault(sid.source, set()).add(sid)

    def __len__(self):
        return len(self.series)

    def __contains__(self, sid):
        return sid in self.series

    def __getitem__(self, sid) -> TimeSeries:
        return self.series[sid]

    def __iter__(self) -> Iterator[TimeSeries]:
        return iter(self.series.values())

    def _series(self, sid: SeriesId) -> TimeSeries:
        ts = self.series.get(sid)
        if ts is None:
            if sid.source == sid.target:
                raise ValueError(f"series source and target must differ: {sid.source!r}")
            ts = self.series[sid] = TimeSeries(sid, self.slot_len)
            self._by_source.setdefault(sid.source, set()).add(sid)
        return ts

    def record_occurrence(self, sid: SeriesId, time: float) -> int:
        if time < 0:
            raise ValueError("occurrence time must be >= 0")
        k = slot_index(time, self.slot_len)
        self._series(sid).add(k)
        return k

    def add_slots(self, sid: SeriesId, indices: Iterable[int]) -> None:
        self._series(sid).update(indices)

    def flagged(self, sid: SeriesId, index: int) -> bool:
        ts = self.series.get(sid)
        return ts is not None and index in ts.slots

    def prune(self, now: float) -> None:
        """Drop slots that end at or before ``now - retention``; keep empty series."""
        horizon = now - self.retention
        if horizon <= 0:
            return
        # slot k survives iff (k+1)*L > horizon
        lo = slot_index(horizon, self.slot_len)
        if (lo + 1) * self.slot_len <= horizon + _EPS * self.slot_len:
            lo += 1
        for ts in self.series.values():
            ts.drop_before(lo)

    def merge(self, incoming: TransferDataset) -> None:
        """OR-merge a dataset into the store, resampling it to ``slot_len``."""
        up, down = _commensurate(self.slot_len, incoming.slot_len)
        for e in incoming.entries:
            ts = self._series(e.series)
            if up == 1 and down == 1:
                ts.update(e.flags)
            elif up > 1:
                # incoming slots are longer: replicate into every sub-slot
                ts.update(j for k in e.flags for j in range(k * up, (k + 1) * up))
            else:
                ts.update({k // down for k in e.flags})

    def merge_store(self, other: "TimeSeriesStore") -> None:
        ds = TransferDataset(
            other.slot_len,
            tuple(Entry(ts.id, tuple(ts.sorted_slots())) for ts in other if ts.slots),
        )
        self.merge(ds)

    def sources(self) -> Iterable[str]:
        return self._by_source.keys()

    def with_source(self, source: str) -> Iterable[SeriesId]:
        return self._by_source.get(source, ())

    def targets_flagged(self, source: str, start: float, end: float) -> set[str]:
        """Targets t such that series (source, t) has a flagged slot overlapping [start, end]."""
        lo = slot_index(start, self.slot_len)
        hi = slot_index(end, self.slot_len)
        out = set()
        for sid in self._by_source.get(source, ()):
            if self.series[sid].any_between(lo, hi):
                out.add(sid.target)
        return out

    def snapshot(self, min_index: int | None = None) -> dict[SeriesId, frozenset[int]]:
        """Non-empty series as plain sets, optionally restricted to slots >= min_index."""
        out = {}
        for sid, ts in self.series.items():
            s = ts.slots if min_index is None else ts.since(min_index)
            if s:
                out[sid] = frozenset(s)
        return out

    def flag_count(self) -> int:
        return sum(len(ts.slots) for ts in self.series.values())

    def dump(self, node) -> list[str]:
        """``node,source,target,slot_index,slot_len`` lines, sorted."""
        lines = []
        for sid in sorted(self.series):
            for k in self.series[sid].sorted_slots():
                lines.append(f"{node},{sid.source},{sid.target},{k},{self.slot_len:g}")
        return lines
