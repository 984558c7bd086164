"""Weighted hotspot graphs: construction, MST, shortest paths, connectivity.

Graphs are immutable once built. Edges are undirected and stored with the
smaller endpoint first; every algorithm here breaks ties deterministically so
that repeated runs on the same input give identical results.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Protocol

from .errors import DisconnectedGraphError, InvalidInputError, UnreachableError

EARTH_RADIUS_KM = 6371.0
DEFAULT_SPEED_KMH = 30.0


@dataclass(frozen=True)
class Hotspot:
    id: int
    lat: float
    lon: float
    tract_label: str = ""

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidInputError(f"hotspot {self.id}: lat {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise InvalidInputError(f"hotspot {self.id}: lon {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    distance_km: float
    travel_time_s: float

    def __post_init__(self) -> None:
        if self.u == self.v:
            raise InvalidInputError(f"self-loop on node {self.u}")
        if self.u > self.v:
            u, v = self.v, self.u
            object.__setattr__(self, "u", u)
            object.__setattr__(self, "v", v)
        if not self.distance_km >= 0.0:
            raise InvalidInputError(f"edge ({self.u},{self.v}): negative distance {self.distance_km}")
        if not self.travel_time_s > 0.0:
            raise InvalidInputError(f"edge ({self.u},{self.v}): travel time must be > 0, got {self.travel_time_s}")

    @property
    def key(self) -> tuple[int, int]:
        return (self.u, self.v)

    def other(self, node: int) -> int:
        return self.v if node == self.u else self.u


class WeightKind(Enum):
    DISTANCE = "distance"
    TRAVEL_TIME = "travel_time"

    def of(self, edge: Edge) -> float:
        return edge.distance_km if self is WeightKind.DISTANCE else edge.travel_time_s


class Path(NamedTuple):
    nodes: tuple[int, ...]
    cost: float


class HotspotGraph:
    """Undirected weighted graph over hotspots with ids ``0..n-1``."""

    def __init__(self, hotspots: Iterable[Hotspot], edges: Iterable[Edge]):
        self.hotspots: tuple[Hotspot, ...] = tuple(sorted(hotspots, key=lambda h: h.id))
        ids = [h.id for h in self.hotspots]
        if ids != list(range(len(ids))):
            raise InvalidInputError("hotspot ids must be unique and contiguous from 0")
        n = len(ids)
        self._adj: list[dict[int, Edge]] = [{} for _ in range(n)]
        index: dict[tuple[int, int], Edge] = {}
        for e in edges:
            if e.v >= n:
                raise InvalidInputError(f"edge ({e.u},{e.v}) references unknown node {e.v}")
            if e.key in index:
                raise InvalidInputError(f"duplicate edge ({e.u},{e.v})")
            index[e.key] = e
            self._adj[e.u][e.v] = e
            self._adj[e.v][e.u] = e
        self.edges: tuple[Edge, ...] = tuple(sorted(index.values(), key=lambda e: e.key))
        self._index = index

    @property
    def n(self) -> int:
        return len(self.hotspots)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def nodes(self) -> range:
        return range(self.n)

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self._index

    def edge(self, u: int, v: int) -> Edge:
        try:
            return self._index[(min(u, v), max(u, v))]
        except KeyError:
            raise KeyError(f"no edge ({u},{v})") from None

    def neighbors(self, u: int) -> list[int]:
        return sorted(self._adj[u])

    def degree(self, u: int) -> int:
        return len(self._adj[u])

    def is_complete(self) -> bool:
        return self.num_edges == self.n * (self.n - 1) // 2

    def with_edges(self, edges: Iterable[Edge]) -> "HotspotGraph":
        """Same hotspots, different edge set."""
        return HotspotGraph(self.hotspots, edges)

    def total_weight(self, weight: WeightKind = WeightKind.DISTANCE) -> float:
        return math.fsum(weight.of(e) for e in self.edges)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HotspotGraph):
            return NotImplemented
        return self.hotspots == other.hotspots and self.edges == other.edges

    def __repr__(self) -> str:
        return f"HotspotGraph(n={self.n}, edges={self.num_edges})"


class DistanceProvider(Protocol):
    def __call__(self, a: Hotspot, b: Hotspot) -> float: ...


def haversine_distance(a: Hotspot, b: Hotspot) -> float:
    """Great-circle distance in km on a sphere of radius 6371 km."""
    if a.lat == b.lat and a.lon == b.lon:
        return 0.0
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


class RoutingApiProvider:
    """Placeholder for an external road-routing service (GraphHopper-style).

    Not wired to any backend; subclass and implement ``query`` to plug one in.
    """

    def __init__(self, base_url: str):
        self.base_url = base_url

    def query(self, a: Hotspot, b: Hotspot) -> float:
        raise NotImplementedError("no routing backend configured")

    def __call__(self, a: Hotspot, b: Hotspot) -> float:
        return self.query(a, b)


def build_complete_graph(
    hotspots: list[Hotspot],
    distance_provider: DistanceProvider = haversine_distance,
    speed_kmh: float = DEFAULT_SPEED_KMH,
) -> HotspotGraph:
    if len(hotspots) < 2:
        raise InvalidInputError(f"need at least 2 hotspots, got {len(hotspots)}")
    if not speed_kmh > 0:
        raise InvalidInputError(f"speed_kmh must be positive, got {speed_kmh}")
    hs = sorted(hotspots, key=lambda h: h.id)
    edges = []
    for i, a in enumerate(hs):
        for b in hs[i + 1:]:
            d = distance_provider(a, b)
            edges.append(Edge(a.id, b.id, d, d / speed_kmh * 3600.0))
    return HotspotGraph(hs, edges)


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def kruskal(n: int, edges: Iterable[Edge], weight: WeightKind) -> list[Edge]:
    """Minimum spanning forest; ties broken by ``(weight, u, v)``."""
    uf = UnionFind(n)
    tree = []
    for e in sorted(edges, key=lambda e: (weight.of(e), e.u, e.v)):
        if uf.union(e.u, e.v):
            tree.append(e)
            if len(tree) == n - 1:
                break
    return tree


def minimum_spanning_tree(g: HotspotGraph, weight: WeightKind = WeightKind.DISTANCE) -> list[Edge]:
    tree = kruskal(g.n, g.edges, weight)
    if len(tree) != g.n - 1:
        missing = _first_unreachable(g)
        raise DisconnectedGraphError(f"graph is disconnected: node {missing} unreachable from node 0", missing)
    return tree


def _reachable(g: HotspotGraph, start: int = 0) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in g._adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def _first_unreachable(g: HotspotGraph) -> int | None:
    seen = _reachable(g) if g.n else set()
    for u in g.nodes():
        if u not in seen:
            return u
    return None


def is_connected(g: HotspotGraph) -> bool:
    if g.n <= 1:
        return True
    return len(_reachable(g)) == g.n


def single_source_paths(
    g: HotspotGraph,
    src: int,
    weight: WeightKind = WeightKind.TRAVEL_TIME,
    target: int | None = None,
) -> dict[int, Path]:
    """Dijkstra keyed on ``(cost, node sequence)``.

    Among equal-cost paths the lexicographically smallest node sequence wins.
    The rule is prefix- and suffix-consistent, so every subpath of a returned
    path is itself the returned path between its endpoints.
    """
    if not 0 <= src < g.n:
        raise InvalidInputError(f"unknown node {src}")
    settled: dict[int, Path] = {}
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (src,))]
    adj = g._adj
    while heap:
        cost, nodes = heapq.heappop(heap)
        u = nodes[-1]
        if u in settled:
            continue
        settled[u] = Path(nodes, cost)
        if u == target:
            break
        for v, e in adj[u].items():
            if v not in settled:
                heapq.heappush(heap, (cost + weight.of(e), nodes + (v,)))
    return settled


def shortest_path(
    g: HotspotGraph,
    src: int,
    dst: int,
    weight: WeightKind = WeightKind.TRAVEL_TIME,
) -> Path:
    if not 0 <= dst < g.n:
        raise InvalidInputError(f"unknown node {dst}")
    paths = single_source_paths(g, src, weight, target=dst)
    if dst not in paths:
        raise UnreachableError(f"no path from {src} to {dst}")
    return paths[dst]


def all_pairs_costs(g: HotspotGraph, weight: WeightKind = WeightKind.TRAVEL_TIME) -> list[list[float]]:
    """Matrix of shortest-path costs; ``inf`` where unreachable."""
    out = []
    for s in g.nodes():
        paths = single_source_paths(g, s, weight)
        out.append([paths[t].cost if t in paths else math.inf for t in g.nodes()])
    return out

