"""Comparison harvesting methods: naive gossip, DHT pull, DAFN and SCALAR.

All of them share the simulator, the monitors and the byte model of the
harvest agent.  Pull-style methods (DHT, DAFN, SCALAR) fetch the data an
analysis needs at analysis time, one closure level at a time: first the
series whose source is the client, then the series leaving every target
found so far.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np

from .harvest_protocol import GossipRunner, MessageSizes, NaiveGossipAgent, ProtocolConfig
from .manet_sim import UNREACHABLE
from .timeseries import Entry, SeriesId, TimeSeriesStore, TransferDataset, slot_index
from .workload import node_of


# -- shared plumbing --------------------------------------------------------

@dataclass
class RunContext:
    """What a method gets to see of a run."""

    world: object
    monitors: list  # fine-grained monitor store per node
    trace: object
    protocol: ProtocolConfig
    rng: object  # protocol stream
    sizes: MessageSizes = MessageSizes()
    harvest_delay: float = 300.0
    start: float = 0.0
    stop: float = math.inf
    index: dict = field(default_factory=lambda: defaultdict(set))  # source -> {SeriesId}

    @property
    def n(self) -> int:
        return len(self.monitors)


class Method:
    name = "none"

    def __init__(self, ctx: RunContext):
        self.ctx = ctx

    def start(self) -> None:
        pass

    def on_occurrence(self, node: int, sid: SeriesId, t: float) -> None:
        pass

    def analysis_view(self, node: int, client: str, window) -> list[TimeSeriesStore]:
        return [self.ctx.monitors[node]]


def window_dataset(store: TimeSeriesStore, sids, window) -> TransferDataset:
    """Slots of ``sids`` overlapping ``window``, one trimmed run per series."""
    lo = slot_index(window[0], store.slot_len)
    hi = slot_index(window[1], store.slot_len)
    entries = []
    for sid in sorted(sids):
        ts = store.series.get(sid)
        if ts is None:
            continue
        flags = [k for k in ts.since(lo) if k <= hi]
        if flags:
            entries.append(Entry(sid, tuple(flags)))
    return TransferDataset(store.slot_len, tuple(entries))


def request_size(sizes: MessageSizes, n_sources: int) -> int:
    # header + requested source ids + the time window
    return sizes.header + sizes.series_id * n_sources + 2 * sizes.timestamp


def pull_closure(client: str, window, local: list[TimeSeriesStore], fetch) -> TimeSeriesStore:
    """Expand the dependence closure level by level, fetching what is not local.

    ``fetch(sources, into)`` merges whatever the method manages to obtain for
    those sources into ``into``.
    """
    got = TimeSeriesStore(local[0].slot_len, math.inf)
    view = [*local, got]
    seen = {client}
    frontier = [client]
    while frontier:
        fetch(frontier, got)
        nxt = []
        for src in frontier:
            for store in view:
                for tgt in store.targets_flagged(src, *window):
                    if tgt not in seen:
                        seen.add(tgt)
                        nxt.append(tgt)
        frontier = sorted(nxt)
    return got


# -- naive gossip -----------------------------------------------------------

class NaiveGossipMethod(Method):
    """Push the whole age-bounded store to random neighbours every cycle."""

    name = "gossip"
    agent_cls = NaiveGossipAgent

    def start(self) -> None:
        ctx = self.ctx
        cfg = ctx.protocol
        self.stores = [TimeSeriesStore(cfg.transfer_slot_len, m.retention) for m in ctx.monitors]
        same = math.isclose(cfg.transfer_slot_len, ctx.monitors[0].slot_len)
        self.received = self.stores if same else [
            TimeSeriesStore(cfg.transfer_slot_len, m.retention) for m in ctx.monitors]
        self.agents = {
            i: self.agent_cls(i, cfg, self.stores[i], None if same else self.received[i], ctx.sizes)
            for i in range(ctx.n)
        }
        self.runner = GossipRunner(ctx.world, self.agents, cfg, ctx.rng, ctx.trace, self.name)
        if self.cycles_enabled:
            self.runner.start(0.0, ctx.stop)

    cycles_enabled = True

    def on_occurrence(self, node, sid, t) -> None:
        self.stores[node].record_occurrence(sid, t)

    def analysis_view(self, node, client, window):
        if self.received[node] is self.stores[node]:
            return [self.ctx.monitors[node], self.stores[node]]
        return [self.ctx.monitors[node], self.received[node]]

    def prune(self, now: float) -> None:
        for s in self.stores:
            s.prune(now)
        if self.received is not self.stores:
            for s in self.received:
                s.prune(now)


def naive_gossip_cycle(agent: NaiveGossipAgent, hop_row, now: float, rng):
    """One cycle of the naive agent: the full age-bounded store per selected peer."""
    return agent.run_cycle(hop_row, now, rng)


# -- DHT pull ---------------------------------------------------------------

class DHTMethod(Method):
    """Ask monitoring nodes directly over end-to-end paths.

    The series index (which series exist and where their monitors sit) is a
    free, perfectly up-to-date lookup.  Only the two endpoints of each
    request/response pay bytes.
    """

    name = "dht"

    def dht_pull(self, requester: int, sources, window, into: TimeSeriesStore) -> None:
        ctx = self.ctx
        world = ctx.world
        for src in sources:
            sids = ctx.index.get(src, ())
            if not sids:
                continue
            host = node_of(src)
            plan = [(host, sorted(sids))]
            if not world.reachable(requester, host):
                # the caller-side monitor is out of reach: ask the callee sides
                by_host = defaultdict(list)
                for sid in sids:
                    by_host[node_of(sid.target)].append(sid)
                plan = sorted(by_host.items())
            for h, wanted in plan:
                if h == requester:
                    into.merge(window_dataset(ctx.monitors[h], wanted, window))
                elif world.reachable(requester, h):
                    ds = self._exchange(requester, h, wanted, window)
                    if ds is not None:
                        into.merge(ds)

    def _exchange(self, requester: int, host: int, sids, window):
        ctx = self.ctx
        world, trace, now = ctx.world, ctx.trace, ctx.world.now
        rq = request_size(ctx.sizes, 1)
        trace.log(now, "req_send", requester, host, rq, 1, 0, self.name)
        if world.transmit(requester, host) is None:
            return None
        trace.log(now, "req_recv", requester, host, rq, 1, 0, self.name)
        ds = window_dataset(ctx.monitors[host], sids, window)
        rs = ctx.sizes.dataset(ds)
        trace.log(now, "resp_send", host, requester, rs, len(ds), ds.slot_count, self.name)
        if world.transmit(host, requester) is None:
            return None
        trace.log(now, "resp_recv", host, requester, rs, len(ds), ds.slot_count, self.name)
        return ds

    def analysis_view(self, node, client, window):
        local = [self.ctx.monitors[node]]
        got = pull_closure(client, window, local,
                           lambda srcs, into: self.dht_pull(node, srcs, window, into))
        return [*local, got]


# -- access frequency & caches ---------------------------------------------

class AccessFrequencyTable:
    """Per-node request counts per source within a sliding window."""

    def __init__(self, window: float = 300.0):
        self.window = window
        self._hits: dict[str, deque] = defaultdict(deque)

    def hit(self, source: str, now: float) -> None:
        self._hits[source].append(now)

    def count(self, source: str, now: float) -> int:
        q = self._hits.get(source)
        if not q:
            return 0
        while q and q[0] < now - self.window:
            q.popleft()
        return len(q)


@dataclass
class Cache:
    """Cached series per source, with the time range each source is known
    to be complete for."""

    store: TimeSeriesStore
    fresh: dict = field(default_factory=dict)  # source -> (lo, hi) seconds

    def holds(self, source: str, window) -> bool:
        f = self.fresh.get(source)
        return f is not None and f[0] <= window[0] and f[1] >= window[1]

    def put(self, source: str, ds: TransferDataset, lo: float | None = None,
            hi: float | None = None) -> None:
        """Merge ``ds``; with ``lo``/``hi`` the source is complete over that range."""
        self.store.merge(ds)
        if lo is None:
            return
        old = self.fresh.get(source)
        if old is not None and old[1] >= lo and old[0] <= hi:
            lo, hi = min(lo, old[0]), max(hi, old[1])
        elif old is not None and old[1] > hi:
            return
        self.fresh[source] = (lo, hi)

    def drop(self, source: str) -> None:
        self.fresh.pop(source, None)
        for sid in list(self.store.with_source(source)):
            ts = self.store.series[sid]
            ts.drop_before(ts.newest + 1 if ts.newest is not None else 0)


class _PullWithCaches(Method):
    """Shared lookup for DAFN and SCALAR.

    The nearest holder with a complete copy (the caller-side monitor, or a
    cache covering the window) answers with the requested window.  With no complete holder reachable, every reachable
    callee-side monitor answers with its own part of the window.
    """

    def start(self) -> None:
        ctx = self.ctx
        self.caches = [Cache(TimeSeriesStore(m.slot_len, m.retention)) for m in ctx.monitors]
        self.freq = [AccessFrequencyTable(ctx.harvest_delay) for _ in range(ctx.n)]
        self.messages = 0

    def _complete_holders(self, source: str, window, members) -> list[int]:
        out = [node_of(source)]
        for v in members:
            if v != out[0] and self.caches[v].holds(source, window):
                out.append(v)
        return out

    def _serve(self, holder: int, source: str, window):
        """(dataset, lo, hi): the holder's copy of ``source`` over the window."""
        ctx = self.ctx
        sids = ctx.index.get(source, ())
        store = ctx.monitors[holder].series if holder == node_of(source) else None
        src = ctx.monitors[holder] if store is not None else self.caches[holder].store
        return window_dataset(src, sids, window), window[0], window[1]

    def _relay(self, path_len: int, src: int, dst: int, ds: TransferDataset, kind: str) -> bool:
        """Hop-by-hop relay; every hop is a method-level send and receive."""
        if path_len == 0:
            return True
        ctx = self.ctx
        now = ctx.world.now
        size = ctx.sizes.dataset(ds)
        p = ctx.world.link.per_link_delivery_prob
        sends = 0
        ok = True
        for _ in range(path_len):
            sends += 1
            if ctx.world.loss_rng.random() >= p:
                ok = False
                break
        recvs = sends if ok else sends - 1
        ctx.trace.log(now, f"{kind}_send", src, dst, size * sends, len(ds), ds.slot_count, self.name)
        if recvs:
            ctx.trace.log(now, f"{kind}_recv", src, dst, size * recvs, len(ds), ds.slot_count,
                          self.name)
        self.messages += sends
        return ok

    # hooks
    def _flood(self, requester: int, n_sources: int) -> list[int]:
        raise NotImplementedError

    def _path_len(self, holder: int, requester: int) -> int:
        raise NotImplementedError

    def _cache_node(self, requester: int) -> int:
        return requester

    def lookup(self, requester: int, sources, window, into: TimeSeriesStore) -> None:
        ctx = self.ctx
        now = ctx.world.now
        first = self._cache_node(requester)
        hop = 0 if first == requester else 1
        remote = []
        for src in sources:
            self.freq[requester].hit(src, now)
            self._on_request(src, requester, now, window)
            if node_of(src) == requester:
                into.merge(window_dataset(ctx.monitors[requester], ctx.index.get(src, ()), window))
            elif self.caches[first].holds(src, window):
                ds, _, _ = self._serve(first, src, window)
                rq = TransferDataset(ds.slot_len)
                if self._relay(hop, requester, first, rq, "req") and \
                        self._relay(hop, first, requester, ds, "resp"):
                    into.merge(ds)
            elif ctx.index.get(src):
                remote.append(src)
        for src in remote:
            self._fetch(requester, src, window, into, first)

    def _fetch(self, requester: int, src: str, window, into, cache_at: int) -> None:
        """Locate ``src`` remotely: nearest complete holder, else callee-side parts."""
        ctx = self.ctx
        members = self._flood(requester, 1)
        member_set = set(members)
        holders = [h for h in self._complete_holders(src, window, members)
                   if h in member_set and self._path_len(h, requester) != UNREACHABLE]
        if holders:
            h = min(holders, key=lambda v: (self._path_len(v, requester), v))
            ds, lo, hi = self._serve(h, src, window)
            if self._relay(self._path_len(h, requester), h, requester, ds, "resp"):
                into.merge(ds)
                self.caches[cache_at].put(src, ds, lo, hi)
            return
        parts = defaultdict(list)
        for sid in ctx.index.get(src, ()):
            v = node_of(sid.target)
            if v in member_set:
                parts[v].append(sid)
        for v, sids in sorted(parts.items()):
            plen = self._path_len(v, requester)
            if plen == UNREACHABLE:
                continue
            ds = window_dataset(ctx.monitors[v], sids, window)
            if self._relay(plen, v, requester, ds, "resp"):
                into.merge(ds)
                self.caches[cache_at].put(src, ds)

    def _on_request(self, source: str, requester: int, now: float, window) -> None:
        pass

    def analysis_view(self, node, client, window):
        local = [self.ctx.monitors[node]]
        got = pull_closure(client, window, local,
                           lambda srcs, into: self.lookup(node, srcs, window, into))
        return [*local, got]


# -- DAFN -------------------------------------------------------------------

class DAFNMethod(_PullWithCaches):
    """Flooded lookups, requester-side caching, and coordinator pruning of
    duplicate replicas between neighbours by access frequency."""

    name = "dafn"
    prune_period = 60.0

    def start(self) -> None:
        super().start()
        self.ctx.world.schedule(self.prune_period, self._prune_tick)

    def flood(self, requester: int, stops) -> tuple[list[int], dict[int, int]]:
        """Flood a request from ``requester`` with duplicate suppression.

        Every reached node forwards once, except nodes in ``stops`` (complete
        holders), which answer instead.  Returns the forwarders and the depth
        at which every other reached node heard the request.
        """
        nbrs = self.ctx.world.topology_neighbors()
        depth = {requester: 0}
        forwarders = [requester]
        q = deque([requester])
        while q:
            u = q.popleft()
            for v in nbrs[u]:
                if v in depth:
                    continue
                depth[v] = depth[u] + 1
                if v not in stops:
                    forwarders.append(v)
                    q.append(v)
        return forwarders, depth

    def _fetch(self, requester, src, window, into, cache_at):
        ctx = self.ctx
        now = ctx.world.now
        complete = set(self._complete_holders(src, window, range(ctx.n)))
        complete.discard(requester)
        forwarders, depth = self.flood(requester, complete)
        size = request_size(ctx.sizes, 1)
        heard = int(ctx.world.adjacency()[forwarders].sum())
        ctx.trace.log(now, "req_send", requester, -1, size * len(forwarders), 1, 0, self.name)
        ctx.trace.log(now, "req_recv", requester, -1, size * heard, 1, 0, self.name)
        self.messages += len(forwarders)
        self.last_flood = len(forwarders)
        parts = defaultdict(list)
        for sid in ctx.index.get(src, ()):
            parts[node_of(sid.target)].append(sid)
        best = None
        for v in sorted(depth, key=lambda v: (depth[v], v)):
            if v == requester:
                continue
            if v in complete:
                ds, lo, hi = self._serve(v, src, window)
                if self._relay(depth[v], v, requester, ds, "resp"):
                    into.merge(ds)
                    if best is None or hi > best[1]:
                        best = (lo, hi, ds)
            elif v in parts:
                ds = window_dataset(ctx.monitors[v], parts[v], window)
                if self._relay(depth[v], v, requester, ds, "resp"):
                    into.merge(ds)
                    self.caches[cache_at].put(src, ds)
        if best is not None:
            lo, hi, ds = best
            self.caches[cache_at].put(src, ds, lo, hi)

    def _path_len(self, holder, requester):
        return int(self.ctx.world.hop_matrix()[holder, requester])

    def dafn_request(self, requester: int, source: str, window) -> TimeSeriesStore:
        got = TimeSeriesStore(self.ctx.monitors[0].slot_len, math.inf)
        self.lookup(requester, [source], window, got)
        return got

    def table_size(self, v: int, now: float) -> tuple[int, int]:
        """Bytes and entry count of node ``v``'s relocation broadcast: one
        (source, access count) entry per source it holds or has requested."""
        known = set(self.caches[v].fresh)
        known.update(s for s in self.freq[v]._hits if self.freq[v].count(s, now))
        k = len(known)
        return self.ctx.sizes.header + (self.ctx.sizes.series_id + self.ctx.sizes.timestamp) * k, k

    def dafn_prune(self, members) -> list[tuple[int, str]]:
        """One relocation period over a component.

        Every member floods its access-frequency table; the coordinator
        (lowest id) then removes the lower-frequency copy of every source
        cached by two neighbours and notifies the losers.  Returns the
        (node, source) removals.
        """
        ctx = self.ctx
        now = ctx.world.now
        adj = ctx.world.adjacency()
        members = sorted(members)
        coordinator = members[0]
        heard = int(adj[members].sum())
        for v in members:
            size, k = self.table_size(v, now)
            ctx.trace.log(now, "ctl_send", v, -1, size * len(members), k, 0, self.name)
            ctx.trace.log(now, "ctl_recv", v, -1, size * heard, k, 0, self.name)
        removed = []
        held = {v: set(self.caches[v].fresh) for v in members}
        for u in members:
            for v in members:
                if v <= u or not adj[u, v]:
                    continue
                for s in sorted(held[u] & held[v]):
                    fu, fv = self.freq[u].count(s, now), self.freq[v].count(s, now)
                    loser = u if (fu, -u) < (fv, -v) else v
                    self.caches[loser].drop(s)
                    held[loser].discard(s)
                    removed.append((loser, s))
        by_node = defaultdict(int)
        for v, _ in removed:
            by_node[v] += 1
        hops = ctx.world.hop_matrix()
        for v, k in sorted(by_node.items()):
            h = int(hops[coordinator, v])
            if h == 0:
                continue
            size = ctx.sizes.header + ctx.sizes.series_id * k
            ctx.trace.log(now, "ctl_send", coordinator, v, size * h, k, 0, self.name)
            ctx.trace.log(now, "ctl_recv", coordinator, v, size * h, k, 0, self.name)
        return removed

    def _prune_tick(self) -> None:
        ctx = self.ctx
        now = ctx.world.now
        if now > ctx.stop:
            return
        hops = ctx.world.hop_matrix()
        done = set()
        for v in range(ctx.n):
            if v in done:
                continue
            comp = [int(u) for u in np.flatnonzero(hops[v] != UNREACHABLE)]
            done.update(comp)
            if len(comp) > 1:
                self.dafn_prune(comp)
        for c in self.caches:
            c.store.prune(now)
        ctx.world.schedule(now + self.prune_period, self._prune_tick)


# -- SCALAR -----------------------------------------------------------------

@dataclass
class Subscription:
    """Push replication of one source toward one repeat requester."""

    anchor: float  # start of the latest requested window
    target: int | None = None  # cache node the pushes go to
    since: float = 0.0  # the target's copy is complete from here on
    marks: dict = field(default_factory=dict)  # series -> newest pushed slot


@dataclass
class VirtualBackbone:
    members: frozenset
    components: list  # list of (component nodes, backbone nodes)
    dominators: dict  # node -> backbone node serving it

    def dominator(self, node: int) -> int:
        return self.dominators[node]


def _adj_lists(adj) -> list[list[int]]:
    a = np.asarray(adj)
    return [[int(v) for v in np.flatnonzero(row)] for row in a]


def _components(nbrs) -> list[list[int]]:
    seen = set()
    out = []
    for s in range(len(nbrs)):
        if s in seen:
            continue
        comp = [s]
        seen.add(s)
        q = deque([s])
        while q:
            u = q.popleft()
            for v in nbrs[u]:
                if v not in seen:
                    seen.add(v)
                    comp.append(v)
                    q.append(v)
        out.append(sorted(comp))
    return out


def greedy_cds(nbrs, comp: list[int]) -> set[int]:
    """Greedy dominating set (max newly covered, ties lowest id), then joined
    by shortest paths into a connected set."""
    if len(comp) == 1:
        return {comp[0]}
    uncovered = set(comp)
    dom = []
    while uncovered:
        best = max(comp, key=lambda u: (len(uncovered.intersection(nbrs[u]) | ({u} & uncovered)), -u))
        dom.append(best)
        uncovered.discard(best)
        uncovered.difference_update(nbrs[best])
    backbone = {dom[0]}
    remaining = [d for d in dom[1:]]
    while remaining:
        parent = {b: None for b in backbone}
        q = deque(sorted(backbone))
        targets = set(remaining)
        hit = None
        while q and hit is None:
            u = q.popleft()
            for v in nbrs[u]:
                if v not in parent:
                    parent[v] = u
                    if v in targets:
                        hit = v
                        break
                    q.append(v)
        v = hit
        while v is not None and v not in backbone:
            backbone.add(v)
            v = parent[v]
        remaining = [d for d in remaining if d not in backbone]
    return backbone


def scalar_build_backbone(adj) -> VirtualBackbone:
    nbrs = _adj_lists(adj)
    members = set()
    comps = []
    dominators = {}
    for comp in _components(nbrs):
        bb = greedy_cds(nbrs, comp)
        members |= bb
        comps.append((comp, frozenset(bb)))
        for v in comp:
            if v in bb:
                dominators[v] = v
            else:
                dominators[v] = min(u for u in nbrs[v] if u in bb)
    return VirtualBackbone(frozenset(members), comps, dominators)


def is_dominating(adj, nodes) -> bool:
    nbrs = _adj_lists(adj)
    s = set(nodes)
    return all(v in s or any(u in s for u in nbrs[v]) for v in range(len(nbrs)))


def is_connected_within(adj, nodes, comp) -> bool:
    nbrs = _adj_lists(adj)
    s = set(nodes) & set(comp)
    if not s:
        return False
    start = min(s)
    seen = {start}
    q = deque([start])
    while q:
        u = q.popleft()
        for v in nbrs[u]:
            if v in s and v not in seen:
                seen.add(v)
                q.append(v)
    return seen == s


class ScalarMethod(_PullWithCaches):
    """Lookups relayed over a connected-dominating-set backbone, caches on
    backbone nodes, and push replication toward repeat requesters."""

    name = "scalar"
    push_period = 1.0

    def start(self) -> None:
        super().start()
        self._bb: dict[int, VirtualBackbone] = {}
        self._bb_dist: dict[tuple[int, int], np.ndarray] = {}
        self.requests: dict[tuple[str, int], deque] = {}
        self.subs: dict[str, dict[int, Subscription]] = defaultdict(dict)
        self.dirty: set[str] = set()
        self.pushes = 0
        self.ctx.world.schedule(self.push_period, self._push_tick)

    def backbone(self) -> VirtualBackbone:
        k = self.ctx.world.topology.tick_of(self.ctx.world.now)
        bb = self._bb.get(k)
        if bb is None:
            self._bb.clear()
            self._bb_dist.clear()
            bb = self._bb[k] = scalar_build_backbone(self.ctx.world.adjacency())
        return bb

    def _bb_hops(self, a: int) -> np.ndarray:
        """Hop counts from backbone node ``a`` to every backbone node, inside the backbone."""
        k = self.ctx.world.topology.tick_of(self.ctx.world.now)
        d = self._bb_dist.get((k, a))
        if d is None:
            bb = self.backbone().members
            nbrs = _adj_lists(self.ctx.world.adjacency())
            d = np.full(self.ctx.n, UNREACHABLE, dtype=np.int64)
            d[a] = 0
            q = deque([a])
            while q:
                u = q.popleft()
                for v in nbrs[u]:
                    if v in bb and d[v] == UNREACHABLE:
                        d[v] = d[u] + 1
                        q.append(v)
            self._bb_dist[(k, a)] = d
        return d

    def _path_len(self, holder, requester):
        if holder == requester:
            return 0
        bb = self.backbone()
        dh, dr = bb.dominator(holder), bb.dominator(requester)
        inner = int(self._bb_hops(dr)[dh])
        if inner == UNREACHABLE:
            return UNREACHABLE
        return (holder != dh) + inner + (requester != dr)

    def _cache_node(self, requester):
        return self.backbone().dominator(requester)

    def _flood(self, requester, n_sources):
        ctx = self.ctx
        bb = self.backbone()
        hops = ctx.world.hop_matrix()
        members = [int(v) for v in np.flatnonzero(hops[requester] != UNREACHABLE)]
        relays = [v for v in members if v in bb.members]
        adj = ctx.world.adjacency()
        heard = int(adj[relays].sum()) if relays else 0
        size = request_size(ctx.sizes, n_sources)
        now = ctx.world.now
        sends = len(relays) + (requester not in bb.members)
        recvs = heard + (requester not in bb.members)
        ctx.trace.log(now, "req_send", requester, -1, size * sends, n_sources, 0, self.name)
        ctx.trace.log(now, "req_recv", requester, -1, size * recvs, n_sources, 0, self.name)
        self.messages += sends
        return members

    def _complete_holders(self, source, window, members):
        bb = self.backbone().members
        out = [node_of(source)]
        for v in members:
            if v != out[0] and v in bb and self.caches[v].holds(source, window):
                out.append(v)
        return out

    def scalar_lookup(self, client: int, source: str, window) -> TimeSeriesStore:
        got = TimeSeriesStore(self.ctx.monitors[0].slot_len, math.inf)
        self.lookup(client, [source], window, got)
        return got

    def _on_request(self, source, requester, now, window):
        if node_of(source) == requester:
            return
        q = self.requests.setdefault((source, requester), deque())
        q.append(now)
        while q and q[0] < now - self.ctx.harvest_delay:
            q.popleft()
        sub = self.subs[source].get(requester)
        if sub is not None:
            sub.anchor = window[0]
        elif len(q) > 1:
            self.subs[source][requester] = Subscription(anchor=window[0])
            self.dirty.add(source)

    def on_occurrence(self, node, sid, t):
        if sid.source in self.subs and node == node_of(sid.source):
            self.dirty.add(sid.source)

    def scalar_replicate(self) -> int:
        """Push increments of dirty subscribed sources; returns pushes made."""
        ctx = self.ctx
        now = ctx.world.now
        made = 0
        still_dirty = set()
        for source in sorted(self.dirty):
            subs = self.subs.get(source)
            if not subs:
                continue
            host = node_of(source)
            mon = ctx.monitors[host]
            sids = sorted(ctx.index.get(source, ()))
            for requester in sorted(subs):
                sub = subs[requester]
                q = self.requests.get((source, requester))
                if not q or q[-1] < now - ctx.harvest_delay:
                    del subs[requester]
                    continue
                target = self._cache_node(requester)
                if target != sub.target:
                    # a new cache node starts from the latest requested window
                    sub.target, sub.since, sub.marks = target, sub.anchor, {}
                base = slot_index(sub.since, mon.slot_len) - 1
                entries = []
                for sid in sids:
                    ts = mon.series.get(sid)
                    new = ts.since(sub.marks.get(sid, base) + 1) if ts is not None else ()
                    if new:
                        entries.append(Entry(sid, tuple(new)))
                if not entries:
                    continue
                plen = self._path_len(host, target)
                if plen == UNREACHABLE:
                    still_dirty.add(source)
                    continue
                ds = TransferDataset(mon.slot_len, tuple(entries))
                made += 1
                if self._relay(plen, host, target, ds, "push"):
                    for e in entries:
                        sub.marks[e.series] = e.newest
                    self.caches[target].put(source, ds, sub.since, now)
                    sub.since = now
                else:
                    still_dirty.add(source)
        self.dirty = still_dirty
        self.pushes += made
        return made

    def _push_tick(self) -> None:
        ctx = self.ctx
        now = ctx.world.now
        if now > ctx.stop:
            return
        if self.dirty:
            self.scalar_replicate()
        if int(now) % 60 == 0:
            for c in self.caches:
                c.store.prune(now)
        ctx.world.schedule(now + self.push_period, self._push_tick)
