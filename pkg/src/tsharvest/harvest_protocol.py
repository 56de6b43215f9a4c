"""Synchronization agent for the epidemic time-series harvest.

Each agent runs in cycles: pick peers at random from the nodes within a hop
threshold, compute for every peer the increment it has not yet confirmed,
push it, and advance the per-(peer, series) watermark only once the peer
confirms receipt.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .timeseries import (
    Entry,
    SeriesId,
    TimeSeriesStore,
    TransferDataset,
    first_slot_at_or_after,
    slot_index,
    slot_ratio,
)

UNREACHABLE = 255


@dataclass(frozen=True)
class MessageSizes:
    """Byte model used for overhead accounting (no wire format is prescribed)."""

    header: int = 64
    series_id: int = 16
    timestamp: int = 8
    first_index: int = 4
    confirm_per_series: int = 24

    def entry(self, length: int) -> int:
        return self.series_id + self.timestamp + self.first_index + (length + 7) // 8

    def dataset(self, ds: TransferDataset) -> int:
        return self.header + sum(self.entry(e.length) for e in ds.entries)

    def confirmation(self, n_series: int) -> int:
        return self.header + self.confirm_per_series * n_series


@dataclass
class ProtocolConfig:
    max_peers: int | None = 1  # None: bounded only by the candidate set
    max_hop_distance: int = 1
    cycle_period: float = 300.0 / 32
    aging_limit: float = 300.0
    transfer_slot_len: float = 0.1
    confirm_timeout: float = 60.0

    def validate(self) -> None:
        if self.max_peers is not None and self.max_peers < 1:
            raise ValueError("max_peers: must be >= 1 or None (unconstrained)")
        if self.max_hop_distance < 1:
            raise ValueError("max_hop_distance: must be >= 1")
        if not self.aging_limit > 0:
            raise ValueError("aging_limit: must be > 0")
        if not self.transfer_slot_len > 0:
            raise ValueError("transfer_slot_len: must be > 0")
        if not self.cycle_period > 0:
            raise ValueError("cycle_period: must be > 0")
        if not 0 < self.confirm_timeout <= self.cycle_period:
            raise ValueError("confirm_timeout: must be in (0, cycle_period]")


def candidate_set(node, hop_distances, threshold: int) -> set:
    """Nodes at 1..threshold hops from ``node``.

    ``hop_distances`` is either a mapping node -> hops (math.inf or missing
    for unreachable) or a sequence indexed by node id where ``UNREACHABLE``
    marks no path.
    """
    if isinstance(hop_distances, Mapping):
        items = hop_distances.items()
    else:
        items = enumerate(hop_distances)
    return {
        n for n, d in items
        if n != node and d != UNREACHABLE and 1 <= d <= threshold
    }


def select_peers(candidates: Iterable, max_peers: int | None, rng) -> set:
    """Uniform random subset of size min(max_peers, |candidates|)."""
    pool = sorted(candidates)
    if max_peers is None or max_peers >= len(pool):
        return set(pool)
    return set(rng.sample(pool, max_peers))


def trim_empty_ends(run: Sequence) -> list:
    """Drop leading and trailing empty slots; keep interior ones as they are."""
    lo, hi = 0, len(run)
    while lo < hi and not run[lo]:
        lo += 1
    while hi > lo and not run[hi - 1]:
        hi -= 1
    return list(run[lo:hi])


def age_floor(now: float, cfg: ProtocolConfig) -> int:
    """Oldest transfer-slot index still within the aging limit at ``now``."""
    return max(0, first_slot_at_or_after(now - cfg.aging_limit, cfg.transfer_slot_len))


@dataclass
class Pending:
    transfer_id: int
    sent_at: float
    newest: dict[SeriesId, int]


@dataclass
class PeerSyncState:
    """Watermarks t_s(d, i) as transfer-slot indices, plus in-flight transfers."""

    last_synced: dict = field(default_factory=dict)  # peer -> {SeriesId: slot index}
    pending: dict = field(default_factory=dict)      # peer -> Pending

    def watermark(self, peer, sid: SeriesId) -> int:
        return self.last_synced.get(peer, {}).get(sid, -1)

    def start(self, peer, transfer_id: int, now: float, newest: dict) -> None:
        if peer in self.pending:
            raise RuntimeError(f"peer {peer} already has a pending transfer")
        self.pending[peer] = Pending(transfer_id, now, newest)

    def on_confirm(self, peer, transfer_id: int, newest: Mapping[SeriesId, int],
                   now: float, timeout: float) -> bool:
        """Advance watermarks for a matching, timely confirmation.  Returns
        False (and changes nothing) for stale or unknown confirmations."""
        p = self.pending.get(peer)
        if p is None or p.transfer_id != transfer_id or now - p.sent_at > timeout:
            return False
        marks = self.last_synced.setdefault(peer, {})
        for sid, k in newest.items():
            if k > marks.get(sid, -1):
                marks[sid] = k
        del self.pending[peer]
        return True

    def on_timeout(self, peer, transfer_id: int | None = None) -> bool:
        p = self.pending.get(peer)
        if p is None or (transfer_id is not None and p.transfer_id != transfer_id):
            return False
        del self.pending[peer]
        return True


def determine_transfer_dataset(store: TimeSeriesStore, sync: PeerSyncState, peer,
                               now: float, cfg: ProtocolConfig) -> TransferDataset:
    """Slots newer than the peer's watermark and within the aging limit.

    Runs start and end on a flagged slot; interior empties ride along.  The
    store must already be at ``cfg.transfer_slot_len``.
    """
    if slot_ratio(store.slot_len, cfg.transfer_slot_len) != 1:
        raise ValueError("store must be resampled to the transfer slot length")
    floor = age_floor(now, cfg)
    marks = sync.last_synced.get(peer, {})
    get = marks.get
    entries = []
    for sid, ts in store.series.items():
        newest = ts.newest
        if newest is None or newest < floor:
            continue
        lo = get(sid, -1) + 1
        if lo < floor:
            lo = floor
        if newest < lo:
            continue
        entries.append(Entry(sid, tuple(ts.since(lo))))
    return TransferDataset(cfg.transfer_slot_len, tuple(entries), verified=True)


def full_dataset(store: TimeSeriesStore, now: float, cfg: ProtocolConfig,
                 trim: bool = False) -> TransferDataset:
    """Everything within the aging limit, regardless of past exchanges.

    Untrimmed by default: each series with data in the window is sent over
    the whole window, empty ends included.
    """
    floor = age_floor(now, cfg)
    top = slot_index(now, cfg.transfer_slot_len)
    entries = []
    for sid, ts in store.series.items():
        if ts.newest is not None and ts.newest >= floor:
            flags = tuple(ts.since(floor))
            span = None if trim else (floor, max(top, flags[-1]))
            entries.append(Entry(sid, flags, span))
    return TransferDataset(cfg.transfer_slot_len, tuple(entries), verified=True)


_transfer_ids = itertools.count(1)


@dataclass
class DatasetMessage:
    transfer_id: int
    src: int
    dst: int
    dataset: TransferDataset
    sent_at: float
    size: int


@dataclass
class Confirmation:
    transfer_id: int
    src: int
    dst: int
    newest: dict
    size: int


class HarvestAgent:
    """Per-node synchronization agent.

    ``store`` is the agent's store at the transfer slot length; it holds the
    node's own monitor data (aggregated) and everything received.  When the
    monitor records at a finer resolution, ``received`` keeps the incoming
    data apart so local analysis can still use the fine-grained monitor
    store for the node's own observations.
    """

    confirms = True

    def __init__(self, node: int, cfg: ProtocolConfig, store: TimeSeriesStore,
                 received: TimeSeriesStore | None = None, sizes: MessageSizes = MessageSizes()):
        if slot_ratio(store.slot_len, cfg.transfer_slot_len) != 1:
            raise ValueError("agent store must use the transfer slot length")
        self.node = node
        self.cfg = cfg
        self.store = store
        self.received = received
        self.sizes = sizes
        self.sync = PeerSyncState()

    def candidates(self, hop_row) -> set:
        c = candidate_set(self.node, hop_row, self.cfg.max_hop_distance)
        # a peer with an unconfirmed transfer sits out until confirm/timeout
        return c - self.sync.pending.keys()

    def build(self, peer, now: float) -> TransferDataset:
        return determine_transfer_dataset(self.store, self.sync, peer, now, self.cfg)

    def run_cycle(self, hop_row, now: float, rng) -> list[DatasetMessage]:
        """Select peers and build one message per peer with a non-empty increment.

        The caller transmits the messages and calls :meth:`sent` for each one
        the transport accepted.
        """
        peers = select_peers(self.candidates(hop_row), self.cfg.max_peers, rng)
        out = []
        for peer in sorted(peers):
            ds = self.build(peer, now)
            if ds:
                out.append(DatasetMessage(next(_transfer_ids), self.node, peer, ds, now,
                                          self.sizes.dataset(ds)))
        return out

    def sent(self, msg: DatasetMessage) -> None:
        self.sync.start(msg.dst, msg.transfer_id, msg.sent_at, msg.dataset.newest())

    def on_receive_dataset(self, msg: DatasetMessage, now: float) -> Confirmation | None:
        if not msg.dataset.well_formed():
            return None
        self.store.merge(msg.dataset)
        if self.received is not None:
            self.received.merge(msg.dataset)
        if not self.confirms:
            return None
        newest = msg.dataset.newest()
        return Confirmation(msg.transfer_id, self.node, msg.src, newest,
                            self.sizes.confirmation(len(newest)))

    def on_confirm(self, conf: Confirmation, now: float) -> bool:
        return self.sync.on_confirm(conf.src, conf.transfer_id, conf.newest, now,
                                    self.cfg.confirm_timeout)

    def on_timeout(self, peer, transfer_id: int) -> bool:
        return self.sync.on_timeout(peer, transfer_id)


class NaiveGossipAgent(HarvestAgent):
    """Push everything within the aging limit every cycle; no confirmations.

    Empty-end trimming is part of the harvest agent's dataset rules, so the
    naive agent sends every live series over the full age window.
    """

    confirms = False

    def candidates(self, hop_row) -> set:
        return candidate_set(self.node, hop_row, self.cfg.max_hop_distance)

    def build(self, peer, now: float) -> TransferDataset:
        return full_dataset(self.store, now, self.cfg)

    def sent(self, msg: DatasetMessage) -> None:
        pass


class GossipRunner:
    """Drives a set of agents on a :class:`~tsharvest.manet_sim.World`.

    Cycles start at a random phase per node and repeat every
    ``cfg.cycle_period``.  Deliveries, confirmations and timeouts are world
    events; every message is written to ``trace``.
    """

    def __init__(self, world, agents: dict, cfg: ProtocolConfig, rng, trace,
                 method: str = "harvest", audit: bool = False):
        self.world = world
        self.agents = agents
        self.cfg = cfg
        self.rng = rng
        self.trace = trace
        self.method = method
        self.audit = audit
        self.sent_log: list[DatasetMessage] = []
        self.confirmed_log: list[DatasetMessage] = []
        self._inflight: dict[int, DatasetMessage] = {}
        self.selected = 0
        self.delivered = 0

    def start(self, t0: float = 0.0, until: float = math.inf) -> None:
        self.until = until
        for node in sorted(self.agents):
            phase = self.rng.uniform(0.0, self.cfg.cycle_period)
            self.world.schedule(t0 + phase, self._cycle, node)

    def _cycle(self, node: int) -> None:
        now = self.world.now
        if now > self.until:
            return
        agent = self.agents[node]
        msgs = agent.run_cycle(self.world.hop_row(node), now, self.rng)
        for msg in msgs:
            self.selected += 1
            ok = self.world.send(msg.src, msg.dst, self._deliver, msg)
            if not ok:
                continue  # refused by transport: dropped, sync state untouched
            agent.sent(msg)
            self.trace.log(now, "data_send", msg.src, msg.dst, msg.size,
                           len(msg.dataset), msg.dataset.slot_count, self.method)
            if self.audit:
                self.sent_log.append(msg)
            if agent.confirms:
                self._inflight[msg.transfer_id] = msg
                self.world.schedule(now + self.cfg.confirm_timeout, self._timeout, msg)
        self.world.schedule(now + self.cfg.cycle_period, self._cycle, node)

    def _deliver(self, msg: DatasetMessage) -> None:
        now = self.world.now
        self.delivered += 1
        self.trace.log(now, "data_recv", msg.src, msg.dst, msg.size,
                       len(msg.dataset), msg.dataset.slot_count, self.method)
        conf = self.agents[msg.dst].on_receive_dataset(msg, now)
        if conf is None:
            return
        if self.world.send(conf.src, conf.dst, self._confirm, conf):
            self.trace.log(now, "ack_send", conf.src, conf.dst, conf.size,
                           len(conf.newest), 0, self.method)

    def _confirm(self, conf: Confirmation) -> None:
        now = self.world.now
        self.trace.log(now, "ack_recv", conf.src, conf.dst, conf.size,
                       len(conf.newest), 0, self.method)
        if self.agents[conf.dst].on_confirm(conf, now):
            msg = self._inflight.pop(conf.transfer_id, None)
            if self.audit and msg is not None:
                self.confirmed_log.append(msg)

    def _timeout(self, msg: DatasetMessage) -> None:
        self._inflight.pop(msg.transfer_id, None)
        if self.agents[msg.src].on_timeout(msg.dst, msg.transfer_id):
            self.trace.log(self.world.now, "timeout", msg.src, msg.dst, 0, 0, 0, self.method)
