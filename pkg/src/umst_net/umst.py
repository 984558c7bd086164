"""Union-of-MSTs backbones built by randomized edge dropping.

Each of the K iterations removes ``floor(rho * |E|)`` edges chosen uniformly at
random, takes the MST of what is left, and adds its edges to the union. The
union keeps a per-edge count of how many trees used it.

Randomness: iteration ``k`` draws from its own PCG64 stream seeded with
``SeedSequence(rng_seed, spawn_key=(k,))``. Streams are independent of each
other and of evaluation order, and numpy guarantees the bit stream across
platforms. Resampling after a disconnecting drop continues on the same stream.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Union

import numpy as np

from .errors import ConstructionError, DisconnectedGraphError, InvalidConfigError
from .graph import (
    Edge,
    HotspotGraph,
    Path,
    WeightKind,
    is_connected,
    kruskal,
    minimum_spanning_tree,
    single_source_paths,
)


@dataclass(frozen=True)
class UmstConfig:
    k_trees: int = 20
    drop_rate: float = 0.5
    rng_seed: int = 0
    max_resample_attempts: int = 100
    mst_weight: WeightKind = WeightKind.DISTANCE

    def __post_init__(self) -> None:
        if self.k_trees < 1:
            raise InvalidConfigError(f"k_trees must be >= 1, got {self.k_trees}")
        if not 0.0 <= self.drop_rate < 1.0:
            raise InvalidConfigError(f"drop_rate must lie in [0, 1), got {self.drop_rate}")
        if self.max_resample_attempts < 1:
            raise InvalidConfigError("max_resample_attempts must be >= 1")
        if not 0 <= self.rng_seed < 2**64:
            raise InvalidConfigError("rng_seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return {
            "k_trees": self.k_trees,
            "drop_rate": self.drop_rate,
            "rng_seed": self.rng_seed,
            "max_resample_attempts": self.max_resample_attempts,
            "mst_weight": self.mst_weight.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UmstConfig":
        return cls(
            k_trees=int(d["k_trees"]),
            drop_rate=float(d["drop_rate"]),
            rng_seed=int(d["rng_seed"]),
            max_resample_attempts=int(d.get("max_resample_attempts", 100)),
            mst_weight=WeightKind(d.get("mst_weight", "distance")),
        )


@dataclass(frozen=True)
class UmstBackbone:
    graph: HotspotGraph
    edge_frequency: dict[tuple[int, int], int]
    config: UmstConfig
    source_edge_count: int = 0

    @property
    def num_edges(self) -> int:
        return self.graph.num_edges

    @property
    def reduction(self) -> float:
        """Fraction of source edges removed."""
        if not self.source_edge_count:
            return 0.0
        return 1.0 - self.num_edges / self.source_edge_count


Backbone = Union[UmstBackbone, HotspotGraph]


def backbone_graph(b: Backbone) -> HotspotGraph:
    return b.graph if isinstance(b, UmstBackbone) else b


def drop_count(drop_rate: float, num_edges: int) -> int:
    # Fraction(str(.)) keeps e.g. 0.29 * 100 from flooring to 28.
    return math.floor(Fraction(str(drop_rate)) * num_edges)


def iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(iteration,))))


def _sample_tree(
    g: HotspotGraph, edges: tuple[Edge, ...], n_drop: int, cfg: UmstConfig, iteration: int
) -> list[Edge]:
    rng = iteration_rng(cfg.rng_seed, iteration)
    m = len(edges)
    for _ in range(cfg.max_resample_attempts):
        if n_drop:
            dropped = set(rng.choice(m, size=n_drop, replace=False).tolist())
            kept = [e for i, e in enumerate(edges) if i not in dropped]
        else:
            kept = list(edges)
        tree = kruskal(g.n, kept, cfg.mst_weight)
        if len(tree) == g.n - 1:
            return tree
    raise ConstructionError(
        f"iteration {iteration}: residual graph disconnected in all "
        f"{cfg.max_resample_attempts} drop samples",
        iteration,
    )


def build_umst(g: HotspotGraph, cfg: UmstConfig) -> UmstBackbone:
    if not is_connected(g):
        raise InvalidConfigError("source graph must be connected")
    edges = g.edges
    n_drop = drop_count(cfg.drop_rate, len(edges))
    if len(edges) - n_drop < g.n - 1:
        raise InvalidConfigError(
            f"dropping {n_drop} of {len(edges)} edges cannot leave a spanning tree on {g.n} nodes"
        )
    counts: Counter[tuple[int, int]] = Counter()
    for k in range(cfg.k_trees):
        counts.update(e.key for e in _sample_tree(g, edges, n_drop, cfg, k))
    union = [e for e in edges if e.key in counts]
    return UmstBackbone(
        graph=g.with_edges(union),
        edge_frequency={key: counts[key] for key in sorted(counts)},
        config=cfg,
        source_edge_count=len(edges),
    )


def mst_backbone(g: HotspotGraph, weight: WeightKind = WeightKind.DISTANCE) -> HotspotGraph:
    return g.with_edges(minimum_spanning_tree(g, weight))


class FrequencyTier(Enum):
    BACKBONE = "backbone"
    SECONDARY = "secondary"
    FALLBACK = "fallback"


def edge_frequency_tiers(
    b: UmstBackbone, backbone_share: float = 0.8, secondary_share: float = 0.4
) -> dict[tuple[int, int], FrequencyTier]:
    k = b.config.k_trees
    hi = Fraction(str(backbone_share)) * k
    lo = Fraction(str(secondary_share)) * k
    tiers = {}
    for key, count in b.edge_frequency.items():
        if count >= hi:
            tiers[key] = FrequencyTier.BACKBONE
        elif count >= lo:
            tiers[key] = FrequencyTier.SECONDARY
        else:
            tiers[key] = FrequencyTier.FALLBACK
    return tiers


@dataclass(frozen=True)
class StretchStats:
    mean: float
    max: float
    ratios: dict[tuple[int, int], float] = field(repr=False)


def stretch_profile(
    b: Backbone,
    g: HotspotGraph,
    pairs: Iterable[tuple[int, int]] | None = None,
    weight: WeightKind = WeightKind.DISTANCE,
) -> StretchStats:
    """Ratio of backbone to source shortest-path cost per node pair.

    ``pairs=None`` means all unordered pairs.
    """
    bg = backbone_graph(b)
    if bg.n != g.n:
        raise DisconnectedGraphError("backbone does not span the source node set")
    if pairs is None:
        pairs = [(u, v) for u in g.nodes() for v in g.nodes() if u < v]
    pairs = list(pairs)
    sources = sorted({u for u, _ in pairs})
    b_paths = {s: single_source_paths(bg, s, weight) for s in sources}
    g_paths = {s: single_source_paths(g, s, weight) for s in sources}
    ratios = {}
    for u, v in pairs:
        base = g_paths[u][v].cost
        if base == 0.0:
            ratios[(u, v)] = 1.0
            continue
        # rounding in the path sums may land a hair under 1
        ratios[(u, v)] = max(1.0, b_paths[u][v].cost / base)
    values = list(ratios.values())
    if not values:
        return StretchStats(1.0, 1.0, ratios)
    return StretchStats(math.fsum(values) / len(values), max(values), ratios)


class NextHopTable:
    """``(current, destination) -> neighbor`` routing over a backbone."""

    def __init__(self, graph: HotspotGraph, table: dict[tuple[int, int], int], costs: dict[tuple[int, int], float]):
        self.graph = graph
        self._table = table
        self._costs = costs
        self._paths: dict[tuple[int, int], tuple[int, ...]] = {}

    def __getitem__(self, key: tuple[int, int]) -> int:
        return self._table[key]

    def __contains__(self, key: object) -> bool:
        return key in self._table

    def __len__(self) -> int:
        return len(self._table)

    def items(self):
        return self._table.items()

    def next(self, h: int, d: int) -> int | None:
        if h == d:
            return None
        return self._table[(h, d)]

    def cost(self, h: int, d: int) -> float:
        return 0.0 if h == d else self._costs[(h, d)]

    def walk(self, h: int, d: int) -> tuple[int, ...]:
        """Node sequence obtained by following the table from ``h`` to ``d``."""
        key = (h, d)
        cached = self._paths.get(key)
        if cached is not None:
            return cached
        nodes = [h]
        limit = self.graph.n
        while nodes[-1] != d:
            if len(nodes) > limit:
                raise RuntimeError(f"next-hop loop between {h} and {d}")
            nodes.append(self._table[(nodes[-1], d)])
        path = tuple(nodes)
        self._paths[key] = path
        return path


def next_hop_table(b: Backbone, weight: WeightKind = WeightKind.TRAVEL_TIME) -> NextHopTable:
    bg = backbone_graph(b)
    if not is_connected(bg):
        raise DisconnectedGraphError("backbone is disconnected")
    table: dict[tuple[int, int], int] = {}
    costs: dict[tuple[int, int], float] = {}
    for src in bg.nodes():
        paths: dict[int, Path] = single_source_paths(bg, src, weight)
        for dst, p in paths.items():
            if dst != src:
                table[(src, dst)] = p.nodes[1]
                costs[(src, dst)] = p.cost
    return NextHopTable(bg, table, costs)
