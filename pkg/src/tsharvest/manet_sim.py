"""Discrete-event MANET world.

Mobility is integrated on a fixed 1 s tick up front (so every method run on
the same seed sees the same movement), connectivity is a unit disk, and hop
counts come from BFS over the connectivity graph in place of a routing
protocol.  Messages cross k hops after ``k * per_hop_latency`` seconds and
arrive with probability ``per_link_delivery_prob ** k``.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

UNREACHABLE = 255

KMH = 1 / 3.6


@dataclass(frozen=True)
class MobilityConfig:
    model: str = "random_waypoint"  # or "nomadic_community"
    width: float = 1000.0
    height: float = 2000.0
    speed_range: tuple = (3.0 * KMH, 6.6 * KMH)
    pause_time: float = 0.0
    group_count: int = 5
    group_radius: float = 100.0
    # subunit reference points roam within this radius of a shared community
    # point; None lets every subunit wander the whole area independently
    community_radius: float | None = None

    def validate(self) -> None:
        if self.model not in ("random_waypoint", "nomadic_community"):
            raise ValueError(f"mobility.model: unknown model {self.model!r}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("mobility.area: width and height must be positive")
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            raise ValueError("mobility.speed_range: need 0 < min <= max")
        if self.pause_time < 0:
            raise ValueError("mobility.pause_time: must be >= 0")
        if self.model == "nomadic_community":
            if self.group_count < 1:
                raise ValueError("mobility.group_count: must be >= 1")
            if self.group_radius < 0:
                raise ValueError("mobility.group_radius: must be >= 0")
            if self.community_radius is not None and not self.community_radius > 0:
                raise ValueError("mobility.community_radius: must be > 0 (or unset)")


@dataclass(frozen=True)
class LinkModel:
    radio_range: float = 250.0
    per_link_delivery_prob: float = 0.95
    per_hop_latency: float = 0.1
    local_latency: float = 0.001
    congestion: float = 0.0  # 0 disables the concurrent-send penalty

    def validate(self, prefix="link") -> None:
        if not self.radio_range > 0:
            raise ValueError(f"{prefix}.radio_range: must be > 0")
        if not 0 <= self.per_link_delivery_prob <= 1:
            raise ValueError(f"{prefix}.per_link_delivery_prob: must be in [0, 1]")
        if self.per_hop_latency < 0 or self.local_latency < 0:
            raise ValueError(f"{prefix}.per_hop_latency: must be >= 0")
        if self.congestion < 0:
            raise ValueError(f"{prefix}.congestion: must be >= 0")

    def delivery_prob(self, hops: int, concurrent: int = 0) -> float:
        p = self.per_link_delivery_prob
        if self.congestion and concurrent:
            p = p / (1.0 + self.congestion * concurrent)
        return p ** hops


# -- mobility ---------------------------------------------------------------

@dataclass
class WaypointState:
    x: float
    y: float
    wx: float
    wy: float
    speed: float
    pause_left: float = 0.0


def new_waypoint_state(cfg: MobilityConfig, rng, x=None, y=None) -> WaypointState:
    if x is None:
        x, y = rng.uniform(0, cfg.width), rng.uniform(0, cfg.height)
    return WaypointState(x, y, rng.uniform(0, cfg.width), rng.uniform(0, cfg.height),
                         rng.uniform(*cfg.speed_range))


def step_random_waypoint(s: WaypointState, dt: float, cfg: MobilityConfig, rng) -> WaypointState:
    """Advance one node by ``dt`` seconds in place and return it."""
    left = dt
    while left > 1e-12:
        if s.pause_left > 0:
            used = min(left, s.pause_left)
            s.pause_left -= used
            left -= used
            if s.pause_left > 0:
                break
            s.wx, s.wy = rng.uniform(0, cfg.width), rng.uniform(0, cfg.height)
            s.speed = rng.uniform(*cfg.speed_range)
            continue
        dx, dy = s.wx - s.x, s.wy - s.y
        dist = math.hypot(dx, dy)
        reach = s.speed * left
        if reach < dist:
            f = reach / dist
            s.x += dx * f
            s.y += dy * f
            break
        s.x, s.y = s.wx, s.wy
        left -= dist / s.speed if s.speed > 0 else left
        s.pause_left = cfg.pause_time
        if s.pause_left <= 0:
            s.wx, s.wy = rng.uniform(0, cfg.width), rng.uniform(0, cfg.height)
            s.speed = rng.uniform(*cfg.speed_range)
    return s


def _clamp(v, hi):
    return 0.0 if v < 0 else hi if v > hi else v


def place_member(ref: WaypointState, cfg: MobilityConfig, rng) -> tuple[float, float]:
    r = cfg.group_radius * math.sqrt(rng.random())
    a = rng.uniform(0, 2 * math.pi)
    return (_clamp(ref.x + r * math.cos(a), cfg.width),
            _clamp(ref.y + r * math.sin(a), cfg.height))


def step_nomadic(refs: list[WaypointState], groups: list[int], dt: float,
                 cfg: MobilityConfig, rng) -> list[tuple[float, float]]:
    """Move every group reference point, then scatter members around it."""
    for ref in refs:
        step_random_waypoint(ref, dt, cfg, rng)
    return [place_member(refs[g], cfg, rng) for g in groups]


class Community:
    """Subunit reference points orbiting one shared, wandering community point.

    The community point does random waypoint over the whole area; each
    subunit's offset does random waypoint inside a square of half-side
    ``community_radius`` centred on it.
    """

    def __init__(self, cfg: MobilityConfig, rng):
        self.cfg = cfg
        r = cfg.community_radius
        self.local = replace(cfg, width=2 * r, height=2 * r)
        self.center = new_waypoint_state(cfg, rng)
        self.offsets = [new_waypoint_state(self.local, rng) for _ in range(cfg.group_count)]

    def refs(self) -> list[WaypointState]:
        r, c = self.cfg.community_radius, self.center
        return [WaypointState(_clamp(c.x + o.x - r, self.cfg.width),
                              _clamp(c.y + o.y - r, self.cfg.height), 0.0, 0.0, 0.0)
                for o in self.offsets]

    def step(self, dt: float, rng) -> list[WaypointState]:
        step_random_waypoint(self.center, dt, self.cfg, rng)
        for o in self.offsets:
            step_random_waypoint(o, dt, self.local, rng)
        return self.refs()


def group_assignment(n_nodes: int, group_count: int) -> list[int]:
    size = math.ceil(n_nodes / group_count)
    return [min(i // size, group_count - 1) for i in range(n_nodes)]


def mobility_trace(cfg: MobilityConfig, n_nodes: int, duration: float, rng,
                   tick: float = 1.0) -> np.ndarray:
    """Positions at every tick in [0, duration]: array (ticks + 1, n_nodes, 2)."""
    cfg.validate()
    steps = int(math.ceil(duration / tick))
    out = np.empty((steps + 1, n_nodes, 2))
    if cfg.model == "random_waypoint":
        states = [new_waypoint_state(cfg, rng) for _ in range(n_nodes)]
        out[0] = [(s.x, s.y) for s in states]
        for k in range(1, steps + 1):
            for s in states:
                step_random_waypoint(s, tick, cfg, rng)
            out[k] = [(s.x, s.y) for s in states]
    else:
        groups = group_assignment(n_nodes, cfg.group_count)
        if cfg.community_radius is None:
            refs = [new_waypoint_state(cfg, rng) for _ in range(cfg.group_count)]
            out[0] = [place_member(refs[g], cfg, rng) for g in groups]
            for k in range(1, steps + 1):
                out[k] = step_nomadic(refs, groups, tick, cfg, rng)
        else:
            community = Community(cfg, rng)
            refs = community.refs()
            out[0] = [place_member(refs[g], cfg, rng) for g in groups]
            for k in range(1, steps + 1):
                refs = community.step(tick, rng)
                out[k] = [place_member(refs[g], cfg, rng) for g in groups]
    return out


# -- graph ------------------------------------------------------------------

def connectivity(positions, radio_range: float) -> np.ndarray:
    """Symmetric unit-disk adjacency (closed ball), no self-edges."""
    p = np.asarray(positions, dtype=float)
    d2 = ((p[:, None, :] - p[None, :, :]) ** 2).sum(-1)
    adj = d2 <= radio_range * radio_range * (1 + 1e-12)
    np.fill_diagonal(adj, False)
    return adj


def neighbors_of(adj) -> list[list[int]]:
    return [[int(v) for v in np.flatnonzero(row)] for row in np.asarray(adj)]


def hop_distances(adj, src: int) -> dict:
    """BFS hop counts from ``src``; unreachable nodes map to math.inf."""
    nbrs = neighbors_of(adj) if isinstance(adj, np.ndarray) else adj
    n = len(nbrs)
    dist = {v: math.inf for v in range(n)}
    dist[src] = 0
    q = deque([src])
    while q:
        u = q.popleft()
        for v in nbrs[u]:
            if dist[v] == math.inf:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def all_hop_distances(adj: np.ndarray) -> np.ndarray:
    """All-pairs hop matrix (uint8, ``UNREACHABLE`` for no path) by frontier expansion."""
    n = len(adj)
    a = adj.astype(np.float32)
    dist = np.full((n, n), UNREACHABLE, dtype=np.uint8)
    np.fill_diagonal(dist, 0)
    reached = np.eye(n, dtype=bool)
    frontier = reached
    k = 0
    while True:
        k += 1
        nxt = (frontier.astype(np.float32) @ a) > 0
        nxt &= ~reached
        if not nxt.any():
            break
        dist[nxt] = min(k, UNREACHABLE - 1)
        reached = reached | nxt
        frontier = nxt
    return dist


def components(hops: np.ndarray) -> list[int]:
    """Component label per node (label = lowest node id in the component)."""
    return [int(np.flatnonzero(row != UNREACHABLE)[0]) for row in hops]


class Topology:
    """Positions per tick with lazily computed adjacency and hop tables."""

    def __init__(self, positions: np.ndarray, radio_range: float, tick: float = 1.0):
        self.positions = positions
        self.radio_range = radio_range
        self.tick = tick
        self.n = positions.shape[1]
        self._adj: dict[int, np.ndarray] = {}
        self._hops: dict[int, np.ndarray] = {}
        self._nbrs: tuple = (-1, None)

    @property
    def last_tick(self) -> int:
        return len(self.positions) - 1

    def tick_of(self, t: float) -> int:
        return min(max(int(t / self.tick + 1e-9), 0), self.last_tick)

    def adjacency(self, k: int) -> np.ndarray:
        a = self._adj.get(k)
        if a is None:
            a = self._adj[k] = connectivity(self.positions[k], self.radio_range)
        return a

    def neighbors(self, k: int) -> list[list[int]]:
        if self._nbrs[0] != k:
            self._nbrs = (k, neighbors_of(self.adjacency(k)))
        return self._nbrs[1]

    def hops(self, k: int) -> np.ndarray:
        h = self._hops.get(k)
        if h is None:
            h = self._hops[k] = all_hop_distances(self.adjacency(k))
        return h

    def mean_degree(self, ticks=None) -> float:
        ks = range(self.last_tick + 1) if ticks is None else ticks
        return float(np.mean([self.adjacency(k).sum(1).mean() for k in ks]))

    def position_lines(self, every: int = 1) -> list[str]:
        lines = ["time,node,x,y"]
        for k in range(0, self.last_tick + 1, every):
            for i, (x, y) in enumerate(self.positions[k]):
                lines.append(f"{k * self.tick:g},{i},{x:.3f},{y:.3f}")
        return lines


def reachability_report(topology: Topology, observer: int, targets, t0: float,
                        horizon: float, step: float = 60.0) -> list[tuple[float, float]]:
    """Fraction of ``targets`` with a finite hop distance from ``observer``,
    sampled every ``step`` seconds from ``t0`` to ``t0 + horizon``."""
    targets = list(targets)
    out = []
    n = int(round(horizon / step))
    for i in range(n + 1):
        off = i * step
        if not targets:
            out.append((off, 0.0))
            continue
        row = topology.hops(topology.tick_of(t0 + off))[observer]
        ok = sum(1 for t in targets if row[t] != UNREACHABLE)
        out.append((off, ok / len(targets)))
    return out


# -- event loop -------------------------------------------------------------

class World:
    """Event queue, clock and message transport over a :class:`Topology`."""

    def __init__(self, topology: Topology, link: LinkModel, loss_rng):
        self.topology = topology
        self.link = link
        self.loss_rng = loss_rng
        self.now = 0.0
        self._q: list = []
        self._seq = itertools.count()
        self._sends_tick = -1
        self._sends: dict[int, int] = {}
        self.sent = 0
        self.lost = 0

    @property
    def n(self) -> int:
        return self.topology.n

    def schedule(self, t: float, fn, *args) -> None:
        if t < self.now:
            raise ValueError(f"cannot schedule in the past ({t} < {self.now})")
        heapq.heappush(self._q, (t, next(self._seq), fn, args))

    def run(self, until: float) -> None:
        q = self._q
        while q and q[0][0] <= until:
            t, _, fn, args = heapq.heappop(q)
            self.now = t
            fn(*args)
        self.now = max(self.now, until)

    def pending_events(self) -> int:
        return len(self._q)

    def hop_matrix(self, t: float | None = None) -> np.ndarray:
        return self.topology.hops(self.topology.tick_of(self.now if t is None else t))

    def hop_row(self, node: int) -> np.ndarray:
        return self.hop_matrix()[node]

    def adjacency(self, t: float | None = None) -> np.ndarray:
        return self.topology.adjacency(self.topology.tick_of(self.now if t is None else t))

    def hops(self, src: int, dst: int) -> int:
        return int(self.hop_matrix()[src, dst])

    def topology_neighbors(self, t: float | None = None) -> list[list[int]]:
        return self.topology.neighbors(self.topology.tick_of(self.now if t is None else t))

    def send(self, src: int, dst: int, fn, *args, link: LinkModel | None = None) -> bool:
        """Route a message over the current shortest path.

        Returns False when ``dst`` is unreachable right now (the message is
        lost immediately).  Otherwise the message is accepted; it is either
        delivered after the path latency or silently lost.
        """
        link = link or self.link
        self.sent += 1
        h = int(self.hop_matrix()[src, dst])
        if h == UNREACHABLE:
            self.lost += 1
            return False
        concurrent = 0
        if link.congestion:
            k = self.topology.tick_of(self.now)
            if k != self._sends_tick:
                self._sends_tick, self._sends = k, {}
            concurrent = self._sends.get(src, 0)
            self._sends[src] = concurrent + 1
        if self.loss_rng.random() < link.delivery_prob(h, concurrent):
            delay = h * link.per_hop_latency if h else link.local_latency
            self.schedule(self.now + delay, fn, *args)
        else:
            self.lost += 1
        return True

    def transmit(self, src: int, dst: int, link: LinkModel | None = None) -> int | None:
        """Synchronous end-to-end delivery attempt: hop count if delivered, else None."""
        link = link or self.link
        if src == dst:
            return 0
        self.sent += 1
        h = int(self.hop_matrix()[src, dst])
        if h == UNREACHABLE:
            self.lost += 1
            return None
        if self.loss_rng.random() < link.delivery_prob(h):
            return h
        self.lost += 1
        return None

    def reachable(self, src: int, dst: int) -> bool:
        return src == dst or int(self.hop_matrix()[src, dst]) != UNREACHABLE
