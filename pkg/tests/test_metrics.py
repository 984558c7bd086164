import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from umst_net.errors import ComparisonError, ValidationRequiredError
from umst_net.graph import Edge, Hotspot, HotspotGraph
from umst_net.metrics import (
    SimReport,
    TradeoffPoint,
    compare_backbones,
    compute_metrics,
    mean_std,
    nash_bargaining_select,
    tradeoff_frontier,
)
from umst_net.sim import FleetConfig, SimTrace, TraceEvent, ValidationReport, run_simulation, validate_trace
from umst_net.umst import UmstConfig, build_umst
from umst_net.workload import DeliveryRequest, WorkloadConfig, generate_requests

from oracles import pareto_brute


def shared_leg(n_req, km=3.0, tt=60.0):
    g = HotspotGraph([Hotspot(0, 0, 0), Hotspot(1, 0, 0)], [Edge(0, 1, km, tt)])
    ids = tuple(range(n_req))
    reqs = [DeliveryRequest(i, 0, 1, 0.0, 1000.0) for i in ids]
    events = [
        TraceEvent(0.0, "pickup", 0, 0, ids),
        TraceEvent(0.0, "depart", 0, 0, ids, to=1, distance_km=km),
        TraceEvent(tt, "arrive", 0, 1, ids),
        TraceEvent(tt, "dropoff", 0, 1, ids),
    ] + [TraceEvent(tt, "complete", 0, 1, (i,), success=True) for i in ids]
    trace = SimTrace.from_events(ids, events, 5, meta={"seed": 0, "backbone_edges": [[0, 1, km, tt]]})
    return g, reqs, trace


def report(label, seed=0, wid="w", **kw):
    base = dict(
        total_deliveries=10, completed=10, successful=9, success_rate=0.9, completion_rate=1.0, avg_time_s=100.0,
        median_time_s=100.0, vehicle_distance_km=50.0, package_distance_km=60.0, distance_saved_km=10.0,
        distance_saved_definition="package_minus_vehicle", consolidation_km=10.0, distance_saved_vs_baseline_km=None,
        bundling_participation=4, bundles_created=2, avg_delay_s=-5.0, median_delay_s=-5.0, max_delay_s=1.0,
        total_travel_time_s=900.0, label=label, workload_id=wid, seed=seed, edge_count=25,
    )
    base.update(kw)
    return SimReport(**base)


class TestComputeMetrics:
    def test_shared_leg_participation(self):
        g, reqs, tr = shared_leg(3)
        r = compute_metrics(tr, reqs, validate_trace(tr, g, reqs))
        assert r.bundling_participation == 3
        assert r.bundles_created == 1
        assert r.vehicle_distance_km == 3.0
        assert r.package_distance_km == 9.0
        assert r.distance_saved_km == 6.0
        assert r.distance_saved_definition == "package_minus_vehicle"
        assert r.success_rate == 1.0 and r.avg_time_s == 60.0
        assert r.edge_count == 1

    def test_single_request_no_participation(self):
        g, reqs, tr = shared_leg(1)
        r = compute_metrics(tr, reqs, validate_trace(tr, g, reqs))
        assert r.bundling_participation == 0 and r.bundles_created == 0
        assert r.distance_saved_km == 0.0

    def test_distance_saved_against_baseline(self):
        g, reqs, tr = shared_leg(2, km=27146.64)
        base = report("base", vehicle_distance_km=48941.87)
        r = compute_metrics(tr, reqs, validate_trace(tr, g, reqs), baseline=base)
        assert r.distance_saved_km == pytest.approx(21795.23, abs=1e-9)
        assert r.distance_saved_definition == "baseline_vehicle_minus_vehicle"
        assert r.consolidation_km == pytest.approx(27146.64)

    def test_requires_validation(self):
        g, reqs, tr = shared_leg(2)
        with pytest.raises(ValidationRequiredError):
            compute_metrics(tr, reqs, None)
        from umst_net.sim import Violation

        with pytest.raises(ValidationRequiredError):
            compute_metrics(tr, reqs, ValidationReport([Violation("edge", "x")]))

    def test_avg_time_counts_successes_only(self):
        g = HotspotGraph([Hotspot(0, 0, 0), Hotspot(1, 0, 0)], [Edge(0, 1, 1.0, 100.0)])
        reqs = [DeliveryRequest(0, 0, 1, 0.0, 1000.0), DeliveryRequest(1, 0, 1, 0.0, 50.0)]
        tr = run_simulation(g, reqs, FleetConfig(bundling_enabled=False))
        r = compute_metrics(tr, reqs, validate_trace(tr, g, reqs))
        assert r.successful == 1 and r.completed == 2
        assert r.avg_time_s == 100.0
        assert r.max_delay_s == 50.0

    def test_no_bundling_identity(self, city10):
        b = build_umst(city10, UmstConfig(k_trees=5, drop_rate=0.5))
        reqs = generate_requests(city10, WorkloadConfig(total_requests=300, rng_seed=1))
        tr = run_simulation(b, reqs, FleetConfig(bundling_enabled=False))
        r = compute_metrics(tr, reqs, validate_trace(tr, b, reqs))
        assert r.vehicle_distance_km == r.package_distance_km
        assert r.distance_saved_km == 0.0

    def test_report_round_trip(self):
        r = report("x", extra={"k": 3})
        assert SimReport.from_dict(r.to_dict()) == r


class TestAggregation:
    def test_mean_std(self):
        assert mean_std([2.0]) == (2.0, 0.0)
        m, s = mean_std([1.0, 2.0, 3.0, 4.0])
        assert m == 2.5 and s == pytest.approx(math.sqrt(5 / 3))
        assert all(math.isnan(x) for x in mean_std([]))

    def test_compare_backbones(self):
        reps = [
            report("clique", seed=0, avg_time_s=100.0), report("clique", seed=1, wid="v", avg_time_s=110.0),
            report("umst", seed=0, avg_time_s=120.0, success_rate=1.0), report("umst", seed=1, wid="v", avg_time_s=130.0, success_rate=1.0),
        ]
        t = compare_backbones(reps)
        assert t.labels == ["clique", "umst"]
        assert t.runs == {"clique": 2, "umst": 2}
        assert t.mean["umst"]["avg_time_s"] == 125.0
        assert t.delta["umst"]["avg_time_s"] == 20.0
        assert t.best["avg_time_s"] == ["clique"]
        assert t.best["success_rate"] == ["umst"]
        assert t.std["clique"]["avg_time_s"] == pytest.approx(math.sqrt(50))
        lines = t.to_csv().splitlines()
        assert lines[0].startswith("label,runs,success_rate_mean")
        assert len(lines) == 3

    def test_compare_rejects_mismatched_workloads(self):
        with pytest.raises(ComparisonError):
            compare_backbones([report("a", wid="w1"), report("b", wid="w2")])

    def test_compare_needs_two(self):
        with pytest.raises(ComparisonError):
            compare_backbones([report("a")])


class TestTradeoff:
    def test_nbs_picks_balanced_point(self):
        pts = [TradeoffPoint("a", 0.9, 0.8, 1.0), TradeoffPoint("b", 0.6, 0.4, 1.0), TradeoffPoint("c", 0.2, 0.1, 1.0)]
        assert nash_bargaining_select(pts) == "b"

    def test_nbs_distance_objective(self):
        pts = [TradeoffPoint("a", 0.9, 1, 80.0), TradeoffPoint("b", 0.6, 1, 40.0), TradeoffPoint("c", 0.2, 1, 10.0)]
        assert nash_bargaining_select(pts, "distance") == "b"

    def test_nbs_dominant_point(self):
        pts = [TradeoffPoint("best", 1.0, 10.0, 1.0), TradeoffPoint("worse", 0.5, 20.0, 1.0)]
        assert nash_bargaining_select(pts) == "best"

    def test_nbs_invariant_to_affine_cost_rescale(self):
        rng = random.Random(0)
        for _ in range(50):
            pts = [TradeoffPoint(str(i), rng.random(), rng.uniform(100, 900), 1.0) for i in range(6)]
            scaled = [TradeoffPoint(p.label, p.success_rate, 3.0 * p.avg_time_s + 17.0, 1.0) for p in pts]
            assert nash_bargaining_select(pts) == nash_bargaining_select(scaled)

    def test_nbs_empty(self):
        with pytest.raises(ValueError):
            nash_bargaining_select([])

    def test_frontier_example(self):
        pts = [TradeoffPoint("a", 0.9, 300, 1), TradeoffPoint("b", 0.8, 200, 1), TradeoffPoint("c", 0.7, 250, 1),
               TradeoffPoint("d", 0.95, 400, 1)]
        assert [p.label for p in tradeoff_frontier(pts)] == ["b", "a", "d"]

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=12))
    def test_frontier_matches_brute_force(self, raw):
        pts = [TradeoffPoint(f"p{i}", s / 5, float(c), 1.0) for i, (s, c) in enumerate(raw)]
        got = sorted(p.label for p in tradeoff_frontier(pts))
        want = sorted(f"p{i}" for i in pareto_brute([(s, c) for s, c in raw]))
        assert got == want


def test_nbs_tie_never_returns_dominated_point():
    # every product is zero here; "a" and "b" tie on success but "a" is slower
    pts = [TradeoffPoint("a", 1.0, 9.0, 1.0), TradeoffPoint("b", 1.0, 5.0, 1.0), TradeoffPoint("c", 0.0, 1.0, 1.0)]
    assert nash_bargaining_select(pts) == "b"
