"""Sparse delivery backbones from unions of randomized minimum spanning trees,
with a discrete-event simulator for opportunistic order bundling."""

from .city import SyntheticCityConfig, generate_synthetic_city
from .graph import (
    Edge,
    Hotspot,
    HotspotGraph,
    Path,
    WeightKind,
    build_complete_graph,
    haversine_distance,
    is_connected,
    minimum_spanning_tree,
    shortest_path,
)
from .metrics import (
    ComparisonTable,
    SimReport,
    TradeoffPoint,
    compare_backbones,
    compute_metrics,
    nash_bargaining_select,
    tradeoff_frontier,
)
from .sim import FleetConfig, SimTrace, run_simulation, validate_trace
from .umst import (
    FrequencyTier,
    NextHopTable,
    UmstBackbone,
    UmstConfig,
    build_umst,
    edge_frequency_tiers,
    mst_backbone,
    next_hop_table,
    stretch_profile,
)
from .workload import DeadlinePolicy, DeliveryRequest, WorkloadConfig, generate_requests

__version__ = "0.1.0"
