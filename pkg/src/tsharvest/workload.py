"""Synthetic two-tier service system, its monitors, and dependence discovery.

Clients (one per node) start conversations at a fixed mean rate.  Each
conversation invokes a front-end method whose cascade is a linear chain of
back-end calls; every hop binds to the nearest replica of the called
service.  Both endpoints' monitors flag the (caller, callee) series on every
request and response they see.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .manet_sim import UNREACHABLE, LinkModel, Topology
from .timeseries import SeriesId, TimeSeriesStore


@dataclass(frozen=True)
class WorkloadConfig:
    clients: int = 50
    front_end: int = 5
    back_end: int = 20
    replicas: int = 5
    methods: int = 2
    dg_size: int = 4
    request_interval: float = 30.0
    request_jitter: float = 0.1  # interval drawn from interval * U(1 - j, 1 + j)
    response_timeout: float = 60.0
    service_time: tuple = (0.5, 1.5)  # per-invocation processing delay, seconds
    service_delivery_prob: float = 1.0  # per link; service traffic rides TCP
    record_at: str = "both"  # "caller": only the caller-side monitor records

    def validate(self, n_nodes: int) -> None:
        if not 1 <= self.clients <= n_nodes:
            raise ValueError("workload.clients: must be in [1, nodes]")
        if self.front_end < 1 or self.back_end < 1:
            raise ValueError("workload.front_end/back_end: need at least one service per tier")
        if not 1 <= self.replicas <= n_nodes:
            raise ValueError("workload.replicas: must be in [1, nodes]")
        if self.methods < 1:
            raise ValueError("workload.methods: must be >= 1")
        if not 2 <= self.dg_size <= self.back_end + 1:
            raise ValueError("workload.dg_size: must be in [2, back_end + 1]")
        if not self.request_interval > 0:
            raise ValueError("workload.request_interval: must be > 0")
        if not 0 <= self.request_jitter < 1:
            raise ValueError("workload.request_jitter: must be in [0, 1)")
        if not self.response_timeout > 0:
            raise ValueError("workload.response_timeout: must be > 0")
        lo, hi = self.service_time
        if not 0 <= lo <= hi:
            raise ValueError("workload.service_time: need 0 <= min <= max")
        if not 0 <= self.service_delivery_prob <= 1:
            raise ValueError("workload.service_delivery_prob: must be in [0, 1]")
        if self.record_at not in ("both", "caller"):
            raise ValueError("workload.record_at: must be 'both' or 'caller'")


def client_name(node: int) -> str:
    return f"c{node}"


def service_name(service: int, node: int) -> str:
    return f"s{service}@{node}"


def node_of(name: str) -> int:
    """Host node of a client or service-instance name."""
    if name.startswith("c"):
        return int(name[1:])
    return int(name.rsplit("@", 1)[1])


@dataclass
class ServiceTopology:
    """Replica placement and the call chain behind every front-end method."""

    config: WorkloadConfig
    replicas: dict[int, tuple[int, ...]]
    chains: dict[tuple[int, int], tuple[int, ...]]
    clients: tuple[int, ...]

    @classmethod
    def build(cls, cfg: WorkloadConfig, n_nodes: int, rng) -> "ServiceTopology":
        cfg.validate(n_nodes)
        n_services = cfg.front_end + cfg.back_end
        replicas = {s: tuple(sorted(rng.sample(range(n_nodes), cfg.replicas)))
                    for s in range(n_services)}
        back = list(range(cfg.front_end, n_services))
        chains = {}
        for f in range(cfg.front_end):
            for m in range(cfg.methods):
                chains[(f, m)] = (f, *rng.sample(back, cfg.dg_size - 1))
        clients = tuple(range(cfg.clients))
        return cls(cfg, replicas, chains, clients)

    def entry_points(self) -> list[tuple[int, int]]:
        return sorted(self.chains)

    def bind(self, service: int, hop_row) -> int | None:
        """Replica node with minimum hop distance (ties: lowest id), or None."""
        best, best_d = None, UNREACHABLE
        for node in self.replicas[service]:
            d = hop_row[node]
            if d < best_d:
                best, best_d = node, d
        return best


@dataclass
class ServiceMessage:
    kind: str  # "request" or "response"
    source: str  # caller: the dependence source, whichever way the message flows
    target: str
    src_node: int
    dst_node: int
    sent_at: float
    received_at: float | None = None

    @property
    def series(self) -> SeriesId:
        return SeriesId(self.source, self.target)


def observations(msg: ServiceMessage, record_at: str = "both") -> list[tuple[int, SeriesId, float]]:
    """(node, series, time) records the monitors make for one message.

    Both endpoints record by default.  With ``record_at="caller"`` only the
    caller's monitor does (on request send and response receipt), so every
    series has a single recording node.
    """
    caller_sends = msg.kind == "request"
    out = []
    if record_at == "both" or caller_sends:
        out.append((msg.src_node, msg.series, msg.sent_at))
    if msg.received_at is not None and (record_at == "both" or not caller_sends):
        out.append((msg.dst_node, msg.series, msg.received_at))
    return out


def monitor_observe(store: TimeSeriesStore, msg: ServiceMessage, node: int,
                    record_at: str = "both") -> None:
    """Record ``msg`` in the monitor on ``node`` if that node saw it."""
    for n, sid, t in observations(msg, record_at):
        if n == node:
            store.record_occurrence(sid, t)


@dataclass
class Conversation:
    id: int
    client: int
    start: float
    end: float
    gt: frozenset
    status: str
    messages: list[ServiceMessage] = field(default_factory=list)
    bound: tuple[int, ...] = ()  # nodes hosting the services the chain bound to

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def occurrences(self, record_at: str = "both") -> list[tuple[float, int, SeriesId]]:
        return sorted((t, n, sid) for m in self.messages for n, sid, t in observations(m, record_at))


def _latency(link: LinkModel, h: int) -> float:
    return h * link.per_hop_latency if h else link.local_latency


def start_conversation(cid: int, client: int, topology: Topology, topo: ServiceTopology,
                       now: float, rng, link: LinkModel) -> Conversation:
    """Run one conversation to completion or failure.

    Every message is routed over the hop table of the tick in which it is
    sent; delivery draws come from ``rng`` so the outcome is fixed by the
    workload stream alone.
    """
    cfg = topo.config
    entry = rng.choice(topo.entry_points())
    chain = topo.chains[entry]
    messages: list[ServiceMessage] = []
    gt: list[SeriesId] = []
    bound: list[int] = []
    p = cfg.service_delivery_prob

    def hop_row(node, t):
        return topology.hops(topology.tick_of(t))[node]

    def deliver(src, dst, t):
        h = int(hop_row(src, t)[dst])
        u = rng.random()  # drawn even when unreachable to keep the stream aligned
        if h == UNREACHABLE or u >= p ** h:
            return None
        return t + _latency(link, h)

    def call(level, caller, caller_node, t):
        svc = chain[level]
        node = topo.bind(svc, hop_row(caller_node, t))
        if node is None:
            return None
        callee = service_name(svc, node)
        bound.append(node)
        gt.append(SeriesId(caller, callee))
        req = ServiceMessage("request", caller, callee, caller_node, node, t)
        messages.append(req)
        req.received_at = deliver(caller_node, node, t)
        if req.received_at is None:
            return None
        t_done = req.received_at + rng.uniform(*cfg.service_time)
        if level + 1 < len(chain):
            t_done = call(level + 1, callee, node, t_done)
            if t_done is None:
                return None
        if t_done - t > cfg.response_timeout:
            return None
        resp = ServiceMessage("response", caller, callee, node, caller_node, t_done)
        messages.append(resp)
        resp.received_at = deliver(node, caller_node, t_done)
        if resp.received_at is None or resp.received_at - t > cfg.response_timeout:
            resp.received_at = None
            return None
        return resp.received_at

    end = call(0, client_name(client), client, now)
    status = "completed" if end is not None else "failed"
    if end is None:
        end = now + cfg.response_timeout
    return Conversation(cid, client, now, end, frozenset(gt), status, messages, tuple(bound))


def generate_conversations(topology: Topology, topo: ServiceTopology, rng,
                           until: float, link: LinkModel) -> list[Conversation]:
    """All conversations started in [0, until), in start-time order."""
    cfg = topo.config
    lo, hi = 1 - cfg.request_jitter, 1 + cfg.request_jitter
    heap = [(rng.uniform(0, cfg.request_interval), c) for c in topo.clients]
    heapq.heapify(heap)
    out = []
    while heap and heap[0][0] < until:
        t, c = heapq.heappop(heap)
        out.append(start_conversation(len(out), c, topology, topo, t, rng, link))
        heapq.heappush(heap, (t + cfg.request_interval * rng.uniform(lo, hi), c))
    return out


@dataclass
class DependenceGraph:
    root: str
    window: tuple[float, float]
    edges: frozenset


def discover_dg(stores, client: str, window: tuple[float, float]) -> DependenceGraph:
    """Closure from ``client`` over series flagged anywhere in ``window``.

    ``stores`` is one store or an iterable of stores that are read as their
    union (e.g. a node's fine-grained monitor store plus the data it received
    at the transfer resolution).
    """
    if isinstance(stores, TimeSeriesStore):
        stores = (stores,)
    start, end = window
    edges = set()
    seen = {client}
    frontier = [client]
    while frontier:
        nxt = []
        for src in frontier:
            for store in stores:
                for tgt in store.targets_flagged(src, start, end):
                    edges.add(SeriesId(src, tgt))
                    if tgt not in seen:
                        seen.add(tgt)
                        nxt.append(tgt)
        frontier = nxt
    return DependenceGraph(client, window, frozenset(edges))


def tp_ratio(discovered, gt) -> float | None:
    """|D & GT| / |GT|; None when GT is empty."""
    gt = set(gt)
    if not gt:
        return None
    return len(set(discovered) & gt) / len(gt)


def fp_ratio(discovered, gt) -> float | None:
    """|D - GT| / |D|; None when D is empty."""
    d = set(discovered)
    if not d:
        return None
    return len(d - set(gt)) / len(d)


def ground_truth_lines(conversations) -> list[str]:
    lines = ["conversation,source,target,time"]
    for c in conversations:
        first = {}
        for m in c.messages:
            if m.kind == "request":
                first.setdefault(m.series, m.sent_at)
        for sid in sorted(c.gt):
            lines.append(f"{c.id},{sid.source},{sid.target},{first[sid]!r}")
    return lines
