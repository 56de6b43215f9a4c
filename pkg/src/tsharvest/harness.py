"""Scenario configuration, runner, sweeps and result emission."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
import os
import random
import statistics
from collections import OrderedDict, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import yaml

from .baselines import (
    DAFNMethod,
    DHTMethod,
    Method,
    NaiveGossipMethod,
    RunContext,
    ScalarMethod,
)
from .harvest_protocol import GossipRunner, HarvestAgent, MessageSizes, ProtocolConfig
from .manet_sim import KMH, UNREACHABLE, LinkModel, MobilityConfig, Topology, World, mobility_trace
from .timeseries import TimeSeriesStore, slot_ratio
from .trace import MessageTrace
from .workload import (
    ServiceTopology,
    WorkloadConfig,
    client_name,
    discover_dg,
    fp_ratio,
    generate_conversations,
    tp_ratio,
)

METHODS = ("harvest", "gossip", "dht", "dafn", "scalar")
STREAMS = ("mobility", "workload", "loss", "protocol")


# -- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class GossipParams:
    monitor_slot_len: float = 0.1
    transfer_slot_len: float = 0.1
    response_time: float = 60.0  # confirmation wait, capped at the cycle period
    aging_limit: float | None = 300.0  # None: follow harvest_delay
    max_peer_distance: int = 1
    peers: int | None = 1  # None: every candidate
    retention: float = 1200.0

    def validate(self) -> None:
        if not self.monitor_slot_len > 0:
            raise ValueError("gossip.monitor_time_slot_length: must be > 0")
        if not self.transfer_slot_len > 0:
            raise ValueError("gossip.transfer_dataset_time_slot_length: must be > 0")
        try:
            slot_ratio(self.monitor_slot_len, self.transfer_slot_len)
        except ValueError:
            raise ValueError("gossip.transfer_dataset_time_slot_length: must be a whole "
                             "multiple of the monitor slot length") from None
        if not self.response_time > 0:
            raise ValueError("gossip.transfer_dataset_response_time: must be > 0")
        if self.aging_limit is not None and not self.aging_limit > 0:
            raise ValueError("gossip.maximum_age_limit_of_time_slot: must be > 0")
        if self.max_peer_distance < 1:
            raise ValueError("gossip.maximum_peer_distance: must be >= 1")
        if self.peers is not None and self.peers < 1:
            raise ValueError("gossip.number_of_peers: must be >= 1 or 'unconstrained'")
        if not self.retention > 0:
            raise ValueError("gossip.retention: must be > 0")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "firefighting"
    nodes: int = 50
    mobility: MobilityConfig = MobilityConfig()
    link: LinkModel = LinkModel(radio_range=250.0)
    workload: WorkloadConfig = WorkloadConfig()
    gossip: GossipParams = GossipParams()
    method: str = "harvest"
    harvest_delay: float = 300.0
    gossip_cycles: int = 32
    warmup: float = 300.0
    duration: float = 1200.0
    seed: int = 1
    analysis: str = "all"  # "all" clients, or "single"
    analysis_node: int = 0
    scalar_push_period: float = 1.0

    @property
    def cycle_period(self) -> float:
        if self.gossip_cycles <= 0 or self.harvest_delay <= 0:
            return math.inf
        return self.harvest_delay / self.gossip_cycles

    @property
    def aging_limit(self) -> float:
        a = self.gossip.aging_limit
        return max(self.harvest_delay, 1.0) if a is None else a

    @property
    def end_time(self) -> float:
        """Last instant the run needs: every analysis must have fired."""
        return self.warmup + self.duration + self.workload.response_timeout + self.harvest_delay + 1.0

    def protocol(self) -> ProtocolConfig:
        period = self.cycle_period
        timeout = self.gossip.response_time if math.isinf(period) else min(
            self.gossip.response_time, period)
        return ProtocolConfig(
            max_peers=self.gossip.peers,
            max_hop_distance=self.gossip.max_peer_distance,
            cycle_period=period,
            aging_limit=self.aging_limit,
            transfer_slot_len=self.gossip.transfer_slot_len,
            confirm_timeout=timeout,
        )

    def validate(self) -> None:
        if self.nodes < 2:
            raise ValueError("network.number_of_nodes: must be >= 2")
        self.mobility.validate()
        self.link.validate("network")
        self.workload.validate(self.nodes)
        self.gossip.validate()
        if self.method not in METHODS:
            raise ValueError(f"method: must be one of {', '.join(METHODS)}")
        if self.harvest_delay < 0:
            raise ValueError("harvest_delay: must be >= 0")
        if not 0 <= self.gossip_cycles:
            raise ValueError("gossip.number_of_gossip_cycles: must be >= 0")
        if self.warmup < 0 or self.duration < 0:
            raise ValueError("warmup/duration: must be >= 0")
        if self.analysis not in ("all", "single"):
            raise ValueError("analysis: must be 'all' or 'single'")
        if not 0 <= self.analysis_node < self.workload.clients:
            raise ValueError("analysis_node: must name a client node")
        if self.gossip.retention < self.harvest_delay + self.workload.response_timeout:
            raise ValueError("gossip.retention: must cover harvest_delay + response_timeout")


PRESETS = {
    # five subunits of ten moving as one community over 2 km x 2 km
    "military": dict(
        mobility=MobilityConfig("nomadic_community", 2000.0, 2000.0, group_count=5,
                                group_radius=100.0, community_radius=400.0),
        link=LinkModel(radio_range=250.0),
    ),
    # independent random waypoint, 1 km x 2 km
    "firefighting": dict(
        mobility=MobilityConfig("random_waypoint", 1000.0, 2000.0),
        link=LinkModel(radio_range=225.0),
    ),
}


def preset(name: str, **overrides) -> ScenarioConfig:
    if name not in PRESETS:
        raise ValueError(f"scenario: unknown preset {name!r} (known: {', '.join(PRESETS)})")
    return replace(ScenarioConfig(name=name, **PRESETS[name]), **overrides)


# file key -> (section object, attribute, converter)
_NETWORK_KEYS = {
    "number_of_nodes": ("", "nodes", int),
    "mobility_model": ("mobility", "model", str),
    "area": ("mobility", None, None),  # [width, height] metres
    "mobility_speed": ("mobility", "speed_range", None),  # [min, max] km/h
    "pause_time": ("mobility", "pause_time", float),
    "group_count": ("mobility", "group_count", int),
    "group_radius": ("mobility", "group_radius", float),
    "community_radius": ("mobility", "community_radius", float),
    "radio_range": ("link", "radio_range", float),
    "per_link_delivery_prob": ("link", "per_link_delivery_prob", float),
    "per_hop_latency": ("link", "per_hop_latency", float),
    "congestion": ("link", "congestion", float),
}
_SERVICE_KEYS = {
    "number_of_clients": "clients",
    "front_end_services": "front_end",
    "back_end_services": "back_end",
    "size_of_dependence_graph": "dg_size",
    "invokable_methods_per_service": "methods",
    "client_request_interval": "request_interval",
    "request_jitter": "request_jitter",
    "number_of_service_replicas": "replicas",
    "response_timeout": "response_timeout",
    "service_time": "service_time",
    "service_delivery_prob": "service_delivery_prob",
    "record_at": "record_at",
}
_GOSSIP_KEYS = {
    "monitor_time_slot_length": "monitor_slot_len",
    "transfer_dataset_time_slot_length": "transfer_slot_len",
    "transfer_dataset_response_time": "response_time",
    "maximum_age_limit_of_time_slot": "aging_limit",
    "maximum_peer_distance": "max_peer_distance",
    "number_of_peers": "peers",
    "retention": "retention",
}
_TOP_KEYS = {"scenario", "method", "harvest_delay", "number_of_gossip_cycles", "warmup",
             "duration", "seed", "analysis", "analysis_node", "scalar_push_period",
             "network", "service", "gossip"}


def _num(v, key, kind=float):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"{key}: expected a number, got {v!r}")
    if kind is int and int(v) != v:
        raise ValueError(f"{key}: expected an integer, got {v!r}")
    return kind(v)


def _pair(v, key):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ValueError(f"{key}: expected a two-element list")
    return _num(v[0], key), _num(v[1], key)


def config_from_dict(doc: dict) -> ScenarioConfig:
    """Build and validate a scenario from a parsed config document."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ValueError("config: top level must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ValueError(f"{sorted(unknown)[0]}: unknown key")
    cfg = preset(doc.get("scenario", "firefighting"))
    top = {}
    if "method" in doc:
        top["method"] = str(doc["method"])
    for key, attr, kind in (("harvest_delay", "harvest_delay", float),
                            ("number_of_gossip_cycles", "gossip_cycles", int),
                            ("warmup", "warmup", float), ("duration", "duration", float),
                            ("seed", "seed", int), ("analysis_node", "analysis_node", int),
                            ("scalar_push_period", "scalar_push_period", float)):
        if key in doc:
            top[attr] = _num(doc[key], key, kind)
    if "analysis" in doc:
        top["analysis"] = str(doc["analysis"])

    mob, link, wl, gp = {}, {}, {}, {}
    net = doc.get("network") or {}
    for k, v in net.items():
        if k not in _NETWORK_KEYS:
            raise ValueError(f"network.{k}: unknown key")
        sect, attr, kind = _NETWORK_KEYS[k]
        key = f"network.{k}"
        if k == "area":
            w, h = _pair(v, key)
            mob["width"], mob["height"] = w, h
        elif k == "mobility_speed":
            lo, hi = _pair(v, key)
            mob["speed_range"] = (lo * KMH, hi * KMH)
        elif sect == "":
            top[attr] = _num(v, key, kind)
        elif kind is str:
            mob[attr] = str(v)
        else:
            (mob if sect == "mobility" else link)[attr] = _num(v, key, kind)
    svc = doc.get("service") or {}
    for k, v in svc.items():
        if k not in _SERVICE_KEYS:
            raise ValueError(f"service.{k}: unknown key")
        attr = _SERVICE_KEYS[k]
        key = f"service.{k}"
        if attr == "service_time":
            wl[attr] = _pair(v, key)
        elif attr == "record_at":
            wl[attr] = str(v)
        elif attr in ("clients", "front_end", "back_end", "dg_size", "methods", "replicas"):
            wl[attr] = _num(v, key, int)
        else:
            wl[attr] = _num(v, key)
    gos = doc.get("gossip") or {}
    for k, v in gos.items():
        key = f"gossip.{k}"
        if k == "number_of_gossip_cycles":
            top["gossip_cycles"] = _num(v, key, int)
            continue
        if k not in _GOSSIP_KEYS:
            raise ValueError(f"{key}: unknown key")
        attr = _GOSSIP_KEYS[k]
        if attr == "peers" and (v is None or v == "unconstrained"):
            gp[attr] = None
        elif attr == "aging_limit" and (v is None or v == "harvest_delay"):
            gp[attr] = None
        elif attr in ("peers", "max_peer_distance"):
            gp[attr] = _num(v, key, int)
        else:
            gp[attr] = _num(v, key)
    cfg = replace(
        cfg,
        mobility=replace(cfg.mobility, **mob),
        link=replace(cfg.link, **link),
        workload=replace(cfg.workload, **wl),
        gossip=replace(cfg.gossip, **gp),
        **top,
    )
    cfg.validate()
    return cfg


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise ValueError(f"config: not valid YAML ({e})") from None
    return config_from_dict(doc)


# sweep axis name -> function(cfg, value) -> cfg
AXES = {
    "cycles": lambda c, v: replace(c, gossip_cycles=int(v)),
    "peers": lambda c, v: replace(c, gossip=replace(
        c.gossip, peers=None if v in (None, "unconstrained") else int(v))),
    "method": lambda c, v: replace(c, method=str(v)),
    "harvest_delay": lambda c, v: replace(c, harvest_delay=float(v)),
    "transfer_slot": lambda c, v: replace(c, gossip=replace(c.gossip, transfer_slot_len=float(v))),
    "peer_distance": lambda c, v: replace(c, gossip=replace(c.gossip, max_peer_distance=int(v))),
    "aging_limit": lambda c, v: replace(c, gossip=replace(c.gossip, aging_limit=float(v))),
}


def apply_axis(cfg: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    if axis not in AXES:
        raise ValueError(f"axis: unknown parameter {axis!r} (known: {', '.join(AXES)})")
    out = AXES[axis](cfg, value)
    out.validate()
    return out


# -- runs -------------------------------------------------------------------

def streams(seed: int) -> dict[str, random.Random]:
    """Independent named generators derived from one master seed."""
    return {name: random.Random(f"{seed}/{name}") for name in STREAMS}


_TOPOLOGY_CACHE: "OrderedDict[tuple, Topology]" = OrderedDict()


def build_topology(cfg: ScenarioConfig, horizon: float | None = None) -> Topology:
    """Mobility and connectivity for ``cfg``'s seed; shared across methods."""
    horizon = cfg.end_time if horizon is None else horizon
    key = (cfg.mobility, cfg.nodes, cfg.link.radio_range, cfg.seed)
    hit = _TOPOLOGY_CACHE.get(key)
    if hit is not None and hit.last_tick * hit.tick >= horizon:
        _TOPOLOGY_CACHE.move_to_end(key)
        return hit
    pos = mobility_trace(cfg.mobility, cfg.nodes, horizon, streams(cfg.seed)["mobility"])
    topo = Topology(pos, cfg.link.radio_range)
    _TOPOLOGY_CACHE[key] = topo
    while len(_TOPOLOGY_CACHE) > 4:
        _TOPOLOGY_CACHE.popitem(last=False)
    return topo


def build_workload(cfg: ScenarioConfig, topology: Topology):
    rng = streams(cfg.seed)["workload"]
    services = ServiceTopology.build(cfg.workload, cfg.nodes, rng)
    link = replace(cfg.link, per_link_delivery_prob=cfg.workload.service_delivery_prob)
    convs = generate_conversations(topology, services, rng, cfg.warmup + cfg.duration, link)
    return services, convs


class HarvestMethod(Method):
    """The confirmed, incremental epidemic harvest."""

    name = "harvest"
    agent_cls = HarvestAgent

    def __init__(self, ctx: RunContext, audit: bool = False):
        super().__init__(ctx)
        self.audit = audit

    def start(self) -> None:
        ctx = self.ctx
        cfg = ctx.protocol
        ret = ctx.monitors[0].retention
        self.stores = [TimeSeriesStore(cfg.transfer_slot_len, ret) for _ in range(ctx.n)]
        same = math.isclose(cfg.transfer_slot_len, ctx.monitors[0].slot_len)
        self.received = self.stores if same else [
            TimeSeriesStore(cfg.transfer_slot_len, ret) for _ in range(ctx.n)]
        self.agents = {
            i: self.agent_cls(i, cfg, self.stores[i], None if same else self.received[i],
                              ctx.sizes)
            for i in range(ctx.n)
        }
        self.runner = GossipRunner(ctx.world, self.agents, cfg, ctx.rng, ctx.trace, self.name,
                                   audit=self.audit)
        if not math.isinf(cfg.cycle_period):
            self.runner.start(0.0, ctx.stop)

    def on_occurrence(self, node, sid, t) -> None:
        self.stores[node].record_occurrence(sid, t)

    def analysis_view(self, node, client, window):
        return [self.ctx.monitors[node], self.received[node]]

    def prune(self, now: float) -> None:
        for s in self.stores:
            s.prune(now)
        if self.received is not self.stores:
            for s in self.received:
                s.prune(now)


class GossipMethod(NaiveGossipMethod):
    @property
    def cycles_enabled(self):
        return not math.isinf(self.ctx.protocol.cycle_period)


METHOD_CLASSES = {
    "harvest": HarvestMethod,
    "gossip": GossipMethod,
    "dht": DHTMethod,
    "dafn": DAFNMethod,
    "scalar": ScalarMethod,
}


@dataclass
class RunMetrics:
    method: str
    seed: int
    tp_ratio: float
    fp_ratio: float
    overhead_kbps: float
    conversations: int
    pair_overhead: float = math.nan  # bytes/s per ordered (source node, receiving node) pair
    reachability: list = field(default_factory=list)  # (offset s, fraction) per cycle

    def row(self) -> dict:
        return {"tp_ratio": self.tp_ratio, "fp_ratio": self.fp_ratio,
                "overhead_kbps": self.overhead_kbps, "conversations": self.conversations}


@dataclass
class RunResult:
    metrics: RunMetrics
    method: Method
    world: World
    trace: MessageTrace
    conversations: list
    topology: Topology
    monitors: list
    per_conversation: list  # (conversation id, tp, fp)


def _mean(xs) -> float:
    xs = [x for x in xs if x is not None]
    return statistics.fmean(xs) if xs else math.nan


def conversation_reachability(topology: Topology, conversations, offsets) -> list[tuple[float, float]]:
    """Mean fraction of a conversation's service hosts reachable from its
    client, ``offset`` seconds after the conversation ended."""
    sums = [0.0] * len(offsets)
    count = 0
    for c in conversations:
        hosts = sorted(set(c.bound) - {c.client})
        if not hosts:
            continue
        count += 1
        for i, off in enumerate(offsets):
            row = topology.hops(topology.tick_of(c.end + off))[c.client]
            sums[i] += sum(1 for h in hosts if row[h] != UNREACHABLE) / len(hosts)
    return [(off, s / count if count else math.nan) for off, s in zip(offsets, sums)]


def run_scenario(cfg: ScenarioConfig, trace_path=None, keep_trace: bool = False,
                 audit: bool = False, topology: Topology | None = None) -> RunResult:
    """One deterministic run of ``cfg.method`` on ``cfg``'s scenario and seed."""
    cfg.validate()
    rngs = streams(cfg.seed)
    topology = topology or build_topology(cfg)
    services, convs = build_workload(cfg, topology)
    t0, t1 = cfg.warmup, cfg.warmup + cfg.duration
    world = World(topology, cfg.link, rngs["loss"])
    # analyses of the measured conversations fire one harvest delay later, so
    # the byte window trails the conversation window by the same amount
    trace = MessageTrace(trace_path, (t0 + cfg.harvest_delay, t1 + cfg.harvest_delay),
                         keep=keep_trace)
    g = cfg.gossip
    monitors = [TimeSeriesStore(g.monitor_slot_len, g.retention) for _ in range(cfg.nodes)]
    ctx = RunContext(world, monitors, trace, cfg.protocol(), rngs["protocol"], MessageSizes(),
                     cfg.harvest_delay, 0.0, cfg.end_time)
    cls = METHOD_CLASSES[cfg.method]
    method = cls(ctx, audit=audit) if cls is HarvestMethod else cls(ctx)
    if cfg.method == "scalar":
        method.push_period = cfg.scalar_push_period

    index = ctx.index

    def record(node, sid, t):
        monitors[node].record_occurrence(sid, t)
        index[sid.source].add(sid)
        method.on_occurrence(node, sid, t)

    for c in convs:
        for t, node, sid in c.occurrences(cfg.workload.record_at):
            world.schedule(t, record, node, sid, t)

    per_conv = []

    def analyze(c):
        view = method.analysis_view(c.client, client_name(c.client), (c.start, c.end))
        dg = discover_dg(view, client_name(c.client), (c.start, c.end))
        per_conv.append((c.id, tp_ratio(dg.edges, c.gt), fp_ratio(dg.edges, c.gt)))

    measured = [c for c in convs if c.completed and t0 <= c.start < t1
                and (cfg.analysis == "all" or c.client == cfg.analysis_node)]
    for c in measured:
        world.schedule(c.end + cfg.harvest_delay, analyze, c)

    def prune():
        now = world.now
        for m in monitors:
            m.prune(now)
        if hasattr(method, "prune"):
            method.prune(now)
        if now + 60.0 <= cfg.end_time:
            world.schedule(now + 60.0, prune)

    world.schedule(60.0, prune)
    method.start()
    world.run(cfg.end_time)
    trace.close()

    per_conv.sort()
    span = cfg.duration
    pair_count = _dataset_pairs(trace) if keep_trace else 0
    period = cfg.cycle_period
    if math.isinf(period) or cfg.harvest_delay <= 0:
        offsets = [0.0]
    else:
        offsets = [k * period for k in range(cfg.gossip_cycles + 1)]
    metrics = RunMetrics(
        method=cfg.method,
        seed=cfg.seed,
        tp_ratio=_mean(tp for _, tp, _ in per_conv),
        fp_ratio=_mean(fp for _, _, fp in per_conv),
        overhead_kbps=trace.overhead_kbps(cfg.nodes) if span > 0 else math.nan,
        conversations=len(per_conv),
        pair_overhead=(trace.total_bytes / span / pair_count) if pair_count and span > 0 else math.nan,
        reachability=conversation_reachability(topology, measured, offsets),
    )
    return RunResult(metrics, method, world, trace, convs, topology, monitors, per_conv)


def _dataset_pairs(trace: MessageTrace) -> int:
    lo, hi = trace.window
    return len({(r[2], r[3]) for r in trace.records
                if lo <= r[0] < hi and r[1] == "data_send"})


def reachability_curve(cfg: ScenarioConfig, seeds, horizon: float = 960.0,
                       step: float = 60.0) -> list[tuple[float, float, float]]:
    """(offset, mean, stderr) over seeds of the conversation reachability,
    from each measured conversation's end out to ``horizon`` seconds.

    Only mobility and the workload are simulated; no harvesting method runs.
    """
    offsets = [i * step for i in range(int(round(horizon / step)) + 1)]
    per_seed = []
    for s in seeds:
        c = replace(cfg, seed=int(s), harvest_delay=horizon)
        topo = build_topology(c)
        _, convs = build_workload(c, topo)
        measured = [v for v in convs if v.completed and c.warmup <= v.start < c.warmup + c.duration]
        per_seed.append([f for _, f in conversation_reachability(topo, measured, offsets)])
    out = []
    for i, off in enumerate(offsets):
        xs = [row[i] for row in per_seed if not math.isnan(row[i])]
        mean = statistics.fmean(xs) if xs else math.nan
        se = statistics.stdev(xs) / math.sqrt(len(xs)) if len(xs) > 1 else 0.0
        out.append((off, mean, se))
    return out


def reachability_csv(curves: dict) -> str:
    """``curves`` maps scenario name -> reachability_curve output."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "offset_s", "reachability", "stderr"])
    for name, rows in curves.items():
        for off, mean, se in rows:
            w.writerow([name, _fmt(float(off)), _fmt(mean), _fmt(se)])
    return buf.getvalue()


def run_metrics(cfg: ScenarioConfig) -> RunMetrics:
    return run_scenario(cfg).metrics


# -- sweeps -----------------------------------------------------------------

@dataclass
class SweepRow:
    axis_value: object
    seed: int
    metrics: RunMetrics


@dataclass
class SweepTable:
    axis: str
    rows: list

    def values(self) -> list:
        out = []
        for r in self.rows:
            if r.axis_value not in out:
                out.append(r.axis_value)
        return out

    def summary(self, metric: str = "tp_ratio") -> list[tuple[object, float, float]]:
        """(value, mean, stderr) per axis value, in sweep order."""
        by = defaultdict(list)
        for r in self.rows:
            v = getattr(r.metrics, metric)
            if v is not None and not math.isnan(v):
                by[r.axis_value].append(v)
        out = []
        for val in self.values():
            xs = by.get(val, [])
            mean = statistics.fmean(xs) if xs else math.nan
            se = statistics.stdev(xs) / math.sqrt(len(xs)) if len(xs) > 1 else 0.0
            out.append((val, mean, se))
        return out


def _job(args):
    cfg, keep = args
    return run_scenario(cfg, keep_trace=keep).metrics


def sweep(base: ScenarioConfig, axis: str, values, seeds, jobs: int = 1,
          pair_overhead: bool = False) -> SweepTable:
    """One run per (value, seed); ``jobs > 1`` runs them in worker processes."""
    plan = []
    for v in values:
        for s in seeds:
            plan.append((v, s, apply_axis(replace(base, seed=int(s)), axis, v)))
    # keep runs that share a seed next to each other so the mobility cache hits
    order = sorted(range(len(plan)), key=lambda i: (plan[i][1], i))
    results = [None] * len(plan)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outs = ex.map(_job, [(plan[i][2], pair_overhead) for i in order])
            for i, m in zip(order, outs):
                results[i] = m
    else:
        for i in order:
            results[i] = _job((plan[i][2], pair_overhead))
    rows = [SweepRow(v, s, m) for (v, s, _), m in zip(plan, results)]
    return SweepTable(axis, rows)


RESULT_HEADER = ["axis_value", "seed", "tp_ratio", "fp_ratio", "overhead_kbps", "conversations"]


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return "" if x is None else str(x)


def results_csv(table: SweepTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_HEADER)
    for r in table.rows:
        m = r.metrics
        w.writerow([_fmt(r.axis_value), r.seed, _fmt(m.tp_ratio), _fmt(m.fp_ratio),
                    _fmt(m.overhead_kbps), m.conversations])
    return buf.getvalue()


def emit_results(tables, out_dir) -> list[str]:
    """Write one ``<axis>.csv`` per table; returns the paths written."""
    if isinstance(tables, SweepTable):
        tables = [tables]
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise ValueError(f"output directory {out_dir!r} is not writable: {e}") from None
    paths = []
    for t in tables:
        p = os.path.join(out_dir, f"{t.axis}.csv")
        try:
            with open(p, "w", newline="") as fh:
                fh.write(results_csv(t))
        except OSError as e:
            raise ValueError(f"cannot write {p!r}: {e}") from None
        paths.append(p)
    return paths


def config_dict(cfg: ScenarioConfig) -> dict:
    return dataclasses.asdict(cfg)
