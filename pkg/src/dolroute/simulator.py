"""Synthetic UGV/UAV world used to generate data and score route selections.

UAVs fly circular patrols; when the battery would fall under the recharge
threshold they divert straight to the nearest road node and land there.
A UAV counts as recharged when any of its landing nodes lies on one of the
selected UGV routes.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import networkx as nx
import numpy as np

from .energy import EnergyParams, WindField, edge_energy, weibull_sample
from .submodular import GroundSet, NodePartition


class RoadGraph:
    """Undirected road network with Euclidean edge lengths."""

    def __init__(self, nodes: dict[int, tuple[float, float]], edges, depot: int):
        self.nodes = {int(k): (float(x), float(y)) for k, (x, y) in nodes.items()}
        self.depot = int(depot)
        if self.depot not in self.nodes:
            raise ValueError("depot must be a graph node")
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        for u, v in edges:
            u, v = int(u), int(v)
            if u not in self.nodes or v not in self.nodes or u == v:
                raise ValueError(f"bad edge {(u, v)}")
            length = math.dist(self.nodes[u], self.nodes[v])
            if length <= 0:
                raise ValueError(f"edge {(u, v)} has zero length")
            g.add_edge(u, v, length=length)
        if not nx.is_connected(g):
            raise ValueError("road graph must be connected")
        self.graph = g
        self._ids = np.array(sorted(self.nodes))
        self._xy = np.array([self.nodes[k] for k in self._ids])

    @property
    def edges(self):
        return [tuple(sorted(e)) for e in self.graph.edges]

    def length(self, u, v) -> float:
        return self.graph.edges[u, v]["length"]

    def nearest_node(self, xy) -> int:
        d = np.hypot(self._xy[:, 0] - xy[0], self._xy[:, 1] - xy[1])
        return int(self._ids[int(np.argmin(d))])

    def bounds(self):
        return (*self._xy.min(axis=0), *self._xy.max(axis=0))

    def to_dict(self):
        return {
            "nodes": {str(k): list(v) for k, v in self.nodes.items()},
            "edges": [list(e) for e in sorted(self.edges)],
            "depot": self.depot,
        }

    @classmethod
    def from_dict(cls, d):
        return cls({int(k): tuple(v) for k, v in d["nodes"].items()}, d["edges"], d["depot"])


def grid_map(rows: int = 8, cols: int = 8, spacing: float = 200.0, depot=None) -> RoadGraph:
    nodes = {r * cols + c: (c * spacing, r * spacing) for r in range(rows) for c in range(cols)}
    edges = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            if c + 1 < cols:
                edges.append((k, k + 1))
            if r + 1 < rows:
                edges.append((k, k + cols))
    if depot is None:
        depot = (rows // 2) * cols + cols // 2
    return RoadGraph(nodes, edges, depot)


def default_map() -> RoadGraph:
    """Bundled 8 x 8 street grid, 200 m blocks, depot near the centre."""
    return grid_map()


# -- candidate UGV routes -----------------------------------------------------

def _tour_length(tour, dist):
    return sum(dist[tour[k]][tour[k + 1]] for k in range(len(tour) - 1))


def solve_tsp(dist: dict, start):
    """Nearest neighbour then 2-opt on a metric closure.

    ``dist[u][v]`` holds shortest-path lengths.  Returns
    ``(tour, nn_length, length)`` with ``tour`` closed at ``start``.
    """
    todo = set(dist) - {start}
    tour = [start]
    while todo:
        last = tour[-1]
        nxt = min(todo, key=lambda v: (dist[last][v], v))
        tour.append(nxt)
        todo.remove(nxt)
    tour.append(start)
    nn_len = _tour_length(tour, dist)
    improved = True
    while improved:
        improved = False
        for i in range(1, len(tour) - 2):
            for j in range(i + 1, len(tour) - 1):
                a, b, c, d = tour[i - 1], tour[i], tour[j], tour[j + 1]
                delta = dist[a][c] + dist[b][d] - dist[a][b] - dist[c][d]
                if delta < -1e-9:
                    tour[i:j + 1] = tour[i:j + 1][::-1]
                    improved = True
    return tour, nn_len, _tour_length(tour, dist)


def _remove_nodes(graph: RoadGraph, n_remove: int, rng) -> set[int]:
    """Randomly drop non-depot nodes, skipping any whose removal disconnects the rest."""
    keep = set(graph.nodes)
    order = [v for v in rng.permutation(sorted(graph.nodes)).tolist() if v != graph.depot]
    removed = 0
    progress = True
    while removed < n_remove and progress:
        progress = False
        for v in order:
            if removed == n_remove:
                break
            if v not in keep:
                continue
            trial = keep - {v}
            if nx.is_connected(graph.graph.subgraph(trial)):
                keep = trial
                removed += 1
                progress = True
    if removed != n_remove:
        raise RuntimeError("could not remove nodes while keeping the graph connected")
    return keep


def generate_candidate_routes(graph: RoadGraph, count: int, removal_fraction: float, rng,
                              max_retries: int = 100) -> GroundSet:
    if not 0 <= removal_fraction < 1:
        raise ValueError("removal_fraction must lie in [0, 1)")
    n_remove = int(round(removal_fraction * (len(graph.nodes) - 1)))
    routes = []
    for _ in range(count):
        for _attempt in range(max_retries):
            try:
                keep = _remove_nodes(graph, n_remove, rng)
                break
            except RuntimeError:
                continue
        else:
            raise RuntimeError("graph disconnected after removal on every retry")
        sub = graph.graph.subgraph(keep)
        dist, paths = {}, {}
        for u in keep:
            d, p = nx.single_source_dijkstra(sub, u, weight="length")
            dist[u], paths[u] = d, p
        tour, _, _ = solve_tsp(dist, graph.depot)
        walk = [graph.depot]
        for a, b in zip(tour, tour[1:]):
            walk.extend(paths[a][b][1:])
        routes.append(tuple(walk))
    return GroundSet(tuple(routes))


def partition_graph(graph: RoadGraph, k: int, seed: int = 0) -> NodePartition:
    """Split nodes into ``k`` connected, size-balanced groups by multi-source growth.

    Seeds are spread by farthest-point sampling; the smallest region that
    still touches unassigned nodes grows next, taking the frontier node
    closest to its seed.
    """
    ids = sorted(graph.nodes)
    if not 1 <= k <= len(ids):
        raise ValueError("k must lie in [1, |V|]")
    rng = np.random.default_rng(seed)
    xy = graph.nodes
    seeds = [ids[int(rng.integers(len(ids)))]]
    while len(seeds) < k:
        far = max(ids, key=lambda v: (min(math.dist(xy[v], xy[s]) for s in seeds), -v))
        seeds.append(far)
    owner = {s: r for r, s in enumerate(seeds)}
    regions = [[s] for s in seeds]
    while len(owner) < len(ids):
        order = sorted(range(k), key=lambda r: (len(regions[r]), r))
        for r in order:
            frontier = {n for v in regions[r] for n in graph.graph.neighbors(v) if n not in owner}
            if frontier:
                pick = min(frontier, key=lambda v: (math.dist(xy[v], xy[seeds[r]]), v))
                owner[pick] = r
                regions[r].append(pick)
                break
    return NodePartition(tuple(frozenset(r) for r in regions))


# -- UAV missions -------------------------------------------------------------

@dataclass(frozen=True)
class UavSpec:
    center: tuple[float, float]
    radius: float
    waypoint_count: int = 8
    speed: float = 10.0
    battery_capacity: float = 60_000.0  # J
    recharge_threshold: float = 0.30

    def __post_init__(self):
        if not self.radius > 0 or not self.speed > 0 or not self.battery_capacity > 0:
            raise ValueError("radius, speed and battery capacity must be positive")
        if self.waypoint_count < 2:
            raise ValueError("need at least two waypoints")
        if not 0 < self.recharge_threshold < 1:
            raise ValueError("recharge threshold must lie in (0, 1)")

    def waypoints(self):
        """Evenly spaced points on the patrol circle, counter-clockwise from angle 0."""
        cx, cy = self.center
        ang = 2 * math.pi * np.arange(self.waypoint_count) / self.waypoint_count
        return [(cx + self.radius * math.cos(t), cy + self.radius * math.sin(t)) for t in ang]

    def to_dict(self):
        d = asdict(self)
        d["center"] = list(self.center)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["center"] = tuple(d["center"])
        return cls(**d)


@dataclass
class MissionOutcome:
    landings: list[list[int]]
    forced: list[list[bool]]
    seed: int | None = None
    wind_log: list[dict] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict())


def simulate_uav_mission(spec: UavSpec, wind: WindField, graph: RoadGraph, laps: float,
                         rng: np.random.Generator, params: EnergyParams = EnergyParams()):
    """Fly ``laps`` patrol laps; return ``(landing_nodes, forced_flags, wind_samples)``.

    Wind speed is drawn once per flown segment.  The charge check happens at
    each waypoint and before committing to each segment.
    """
    wps = spec.waypoints()
    n_edges = int(round(laps * spec.waypoint_count))
    cap = spec.battery_capacity
    floor = spec.recharge_threshold * cap
    soc = cap
    pos = wps[0]
    landings, forced, winds = [], [], []

    def divert(pos, soc):
        node = graph.nearest_node(pos)
        ws = float(weibull_sample(wind, rng))
        winds.append(ws)
        cost = edge_energy(pos, graph.nodes[node], ws, wind.omega_o, spec.speed, params)
        landings.append(node)
        forced.append(cost > soc)
        return graph.nodes[node]

    for k in range(n_edges):
        target = wps[(k + 1) % spec.waypoint_count]
        if math.isfinite(cap) and soc < floor:
            pos, soc = divert(pos, soc), cap
        ws = float(weibull_sample(wind, rng))
        winds.append(ws)
        cost = edge_energy(pos, target, ws, wind.omega_o, spec.speed, params)
        if math.isfinite(cap) and soc - cost < floor and soc < cap:
            pos, soc = divert(pos, soc), cap
            ws = float(weibull_sample(wind, rng))
            winds.append(ws)
            cost = edge_energy(pos, target, ws, wind.omega_o, spec.speed, params)
        soc -= cost
        pos = target
    return landings, forced, winds


@dataclass
class Scenario:
    """Everything needed to roll out one episode and score selections."""

    graph: RoadGraph
    wind: WindField
    uavs: list[UavSpec]
    routes: GroundSet
    partition: NodePartition
    params: EnergyParams = field(default_factory=EnergyParams)
    laps: float = 3.0

    def to_dict(self):
        return {
            "graph": self.graph.to_dict(),
            "wind": self.wind.to_dict(),
            "uavs": [u.to_dict() for u in self.uavs],
            "routes": self.routes.to_dict(),
            "partition": self.partition.to_dict(),
            "params": self.params.to_dict(),
            "laps": self.laps,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            RoadGraph.from_dict(d["graph"]),
            WindField.from_dict(d["wind"]),
            [UavSpec.from_dict(u) for u in d["uavs"]],
            GroundSet.from_dict(d["routes"]),
            NodePartition.from_dict(d["partition"]),
            EnergyParams.from_dict(d["params"]),
            d.get("laps", 3.0),
        )


def rollout(scenario: Scenario, seed: int) -> MissionOutcome:
    rng = np.random.default_rng(seed)
    landings, forced, log = [], [], []
    for spec in scenario.uavs:
        l, f, w = simulate_uav_mission(spec, scenario.wind, scenario.graph, scenario.laps, rng, scenario.params)
        landings.append(l)
        forced.append(f)
        log.append({"n_samples": len(w), "mean_speed": float(np.mean(w)) if w else 0.0})
    return MissionOutcome(landings, forced, seed, log)


def evaluate_selection(selection, outcome: MissionOutcome, ground: GroundSet) -> int:
    """Number of UAVs with at least one landing node on a selected route."""
    covered: set[int] = set()
    for t in selection:
        if not 0 <= t < len(ground):
            raise IndexError(f"unknown route index {t}")
        covered.update(ground.routes[t])
    return sum(1 for nodes in outcome.landings if covered.intersection(nodes))
