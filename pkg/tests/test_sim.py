import math
import random

import pytest

from umst_net import io as fio
from umst_net.city import SyntheticCityConfig, generate_synthetic_city
from umst_net.errors import InvalidConfigError, SetupError
from umst_net.graph import Edge, Hotspot, HotspotGraph, build_complete_graph
from umst_net.metrics import compute_metrics
from umst_net.sim import (
    Bundle,
    FleetConfig,
    HotspotState,
    SimTrace,
    TraceEvent,
    candidate_bundle,
    merge_bundle,
    run_simulation,
    validate_trace,
)
from umst_net.umst import UmstConfig, build_umst, mst_backbone, next_hop_table
from umst_net.workload import DeliveryRequest, WorkloadConfig, generate_requests


def path_graph(times=(60.0, 90.0)):
    n = len(times) + 1
    hs = [Hotspot(i, 0.0, 0.0) for i in range(n)]
    return HotspotGraph(hs, [Edge(i, i + 1, t / 100.0, t) for i, t in enumerate(times)])


def req(i, a, b, t, dl=10_000.0):
    return DeliveryRequest(i, a, b, t, t + dl)


class TestBundleSelection:
    def test_candidate_takes_first_capacity(self):
        st = HotspotState(0, {3: list(range(1, 8))})
        assert candidate_bundle(st, 3, 5) == [1, 2, 3, 4, 5]
        assert candidate_bundle(st, 9, 5) == []

    def test_candidate_respects_filter(self):
        st = HotspotState(0, {3: [1, 2, 3, 4]})
        assert candidate_bundle(st, 3, 5, accept=lambda r: r % 2 == 0) == [2, 4]

    def test_merge_fills_remaining_room(self):
        st = HotspotState(7, {2: [20, 21, 22]})
        merged = merge_bundle(Bundle((10, 11)), st, 2, capacity=4, t=5.0)
        assert merged.members == (10, 11, 20, 21)
        assert merged.lineage[-1] == ("merge", 7, 5.0, (20, 21))
        st.remove(merged.members)
        assert st.waiting(2) == [22]

    def test_full_inbound_unchanged(self):
        b = Bundle((1, 2, 3))
        assert merge_bundle(b, HotspotState(0, {1: [9]}), 1, capacity=3) is b


class TestSingleRequest:
    def test_bundling_waits_for_hold(self):
        g = path_graph()
        tr = run_simulation(g, [req(0, 0, 2, 100.0)], FleetConfig(dispatch_hold_s=30.0))
        o = tr.outcomes[0]
        assert o.pickup_s == 130.0 and o.delivered_s == 280.0 and o.success
        assert [leg.to for _, leg in tr.legs()] == [1, 2]

    def test_no_bundling_dispatches_at_release(self):
        g = path_graph()
        tr = run_simulation(g, [req(0, 0, 2, 100.0)], FleetConfig(bundling_enabled=False))
        assert tr.outcomes[0].pickup_s == 100.0
        assert tr.outcomes[0].delivered_s == 250.0

    def test_missed_deadline_recorded(self):
        g = path_graph()
        tr = run_simulation(g, [DeliveryRequest(0, 0, 2, 0.0, 100.0)], FleetConfig())
        assert tr.outcomes[0].completed and not tr.outcomes[0].success

    def test_speed_override(self):
        g = path_graph()
        tr = run_simulation(g, [req(0, 0, 1, 0.0)], FleetConfig(bundling_enabled=False, vehicle_speed_kmh=36.0))
        # 0.6 km at 36 km/h
        assert tr.outcomes[0].delivered_s == pytest.approx(60.0)
        assert validate_trace(tr, g, [req(0, 0, 1, 0.0)]).ok


class TestBundling:
    def test_full_queue_dispatches_immediately(self):
        g = path_graph()
        reqs = [req(i, 0, 2, float(i)) for i in range(3)]
        tr = run_simulation(g, reqs, FleetConfig(vehicle_capacity=3, dispatch_hold_s=100.0))
        assert len(tr.vehicles) == 1
        assert tr.outcomes[2].pickup_s == 2.0

    def test_prefix_paths_share_a_vehicle(self):
        g = path_graph((60.0, 60.0, 60.0))
        reqs = [req(0, 0, 3, 0.0), req(1, 0, 1, 1.0), req(2, 0, 2, 2.0)]
        tr = run_simulation(g, reqs, FleetConfig(vehicle_capacity=5, dispatch_hold_s=30.0))
        assert {o.vehicle for o in tr.outcomes.values()} == {0}
        assert [o.delivered_s for o in tr.outcomes.values()] == [210.0, 90.0, 150.0]

    def test_merge_en_route(self):
        g = path_graph((60.0, 60.0))
        reqs = [req(0, 0, 2, 0.0), req(1, 1, 2, 70.0)]
        tr = run_simulation(g, reqs, FleetConfig(dispatch_hold_s=30.0))
        assert tr.outcomes[1].vehicle == tr.outcomes[0].vehicle
        assert tr.outcomes[1].pickup_s == 90.0
        assert any(ev.kind == "merge" for ev in tr.events)
        b = tr.bundles()[0]
        assert b.members == (0, 1) and [x[0] for x in b.lineage] == ["form", "merge"]

    def test_diverging_paths_not_combined(self):
        # star: 0 is hub; 1->2 and 1->3 both leave 1 toward 0 but diverge there
        hs = [Hotspot(i, 0.0, 0.0) for i in range(4)]
        g = HotspotGraph(hs, [Edge(0, 1, 1, 10.0), Edge(0, 2, 1, 10.0), Edge(0, 3, 1, 10.0)])
        reqs = [req(0, 1, 2, 0.0), req(1, 1, 3, 1.0)]
        tr = run_simulation(g, reqs, FleetConfig(dispatch_hold_s=30.0))
        assert tr.outcomes[0].vehicle != tr.outcomes[1].vehicle
        assert validate_trace(tr, g, reqs).ok


def random_instance(seed, n=10, n_req=200):
    city = generate_synthetic_city(SyntheticCityConfig(n_hotspots=n, rng_seed=seed))
    g = build_complete_graph(city)
    b = build_umst(g, UmstConfig(k_trees=5, drop_rate=0.5, rng_seed=seed))
    reqs = generate_requests(g, WorkloadConfig(total_requests=n_req, rng_seed=seed))
    return g, b, reqs


def package_km(b, reqs):
    t = next_hop_table(b)
    total = []
    for r in reqs:
        p = t.walk(r.pickup, r.dropoff)
        total.extend(b.graph.edge(u, v).distance_km for u, v in zip(p, p[1:]))
    return math.fsum(total)


class TestInvariants:
    def test_capacity_one_equals_no_bundling(self):
        g, b, reqs = random_instance(1)
        a = run_simulation(b, reqs, FleetConfig(vehicle_capacity=1))
        c = run_simulation(b, reqs, FleetConfig(vehicle_capacity=1, bundling_enabled=False))
        assert {r: o.delivered_s for r, o in a.outcomes.items()} == {r: o.delivered_s for r, o in c.outcomes.items()}
        assert a.vehicles.keys() == c.vehicles.keys()

    def test_no_bundling_vehicle_distance_is_package_distance(self):
        g, b, reqs = random_instance(2)
        tr = run_simulation(b, reqs, FleetConfig(bundling_enabled=False))
        veh = math.fsum(leg.distance_km for _, leg in tr.legs())
        assert veh == pytest.approx(package_km(b, reqs), rel=1e-12)
        assert all(len(leg.load) == 1 for _, leg in tr.legs())

    def test_deterministic_trace_bytes(self):
        g, b, reqs = random_instance(3)
        one = fio.dumps_trace(run_simulation(b, reqs, FleetConfig(), seed=3))
        two = fio.dumps_trace(run_simulation(b, reqs, FleetConfig(), seed=3))
        assert one == two

    @pytest.mark.parametrize("seed", range(20))
    def test_conservation_and_dominance(self, seed):
        g, b, reqs = random_instance(100 + seed)
        on = run_simulation(b, reqs, FleetConfig())
        off = run_simulation(b, reqs, FleetConfig(bundling_enabled=False))
        for tr in (on, off):
            rep = validate_trace(tr, b, reqs)
            assert rep.ok, rep.violations[:3]
            assert all(o.completed for o in tr.outcomes.values())
            picked = [r for ev in tr.events if ev.kind == "pickup" for r in ev.requests]
            assert sorted(picked) == [r.id for r in reqs]
        km_on = math.fsum(leg.distance_km for _, leg in on.legs())
        km_off = math.fsum(leg.distance_km for _, leg in off.legs())
        assert km_on <= km_off + 1e-9
        assert all(len(leg.load) <= 5 for _, leg in on.legs())

    def test_clique_and_mst_backbones_validate(self, city10):
        reqs = generate_requests(city10, WorkloadConfig(total_requests=300, rng_seed=4))
        for b in (city10, mst_backbone(city10)):
            tr = run_simulation(b, reqs, FleetConfig())
            assert validate_trace(tr, b, reqs).ok


class TestFleetModes:
    def test_fixed_pool(self, city10):
        b = build_umst(city10, UmstConfig(k_trees=5, drop_rate=0.5))
        reqs = generate_requests(city10, WorkloadConfig(total_requests=150, rng_seed=9))
        tr = run_simulation(b, reqs, FleetConfig(spawn_mode="fixed_pool", pool_size=3))
        assert set(tr.vehicles) <= {0, 1, 2}
        assert all(o.completed for o in tr.outcomes.values())
        assert validate_trace(tr, b, reqs).ok

    def test_fixed_pool_without_bundling(self, city10):
        reqs = generate_requests(city10, WorkloadConfig(total_requests=60, rng_seed=9))
        tr = run_simulation(city10, reqs, FleetConfig(spawn_mode="fixed_pool", pool_size=2, bundling_enabled=False))
        assert all(o.completed for o in tr.outcomes.values())
        assert validate_trace(tr, city10, reqs).ok

    def test_max_time_truncates(self):
        g = path_graph()
        reqs = [req(0, 0, 2, 0.0), req(1, 0, 2, 500.0)]
        tr = run_simulation(g, reqs, FleetConfig(bundling_enabled=False, max_time_s=300.0))
        assert tr.outcomes[0].completed
        assert not tr.outcomes[1].completed
        assert tr.outcomes[1].vehicle is None

    def test_invalid_fleet(self):
        with pytest.raises(InvalidConfigError):
            FleetConfig(vehicle_capacity=0)
        with pytest.raises(InvalidConfigError):
            FleetConfig(spawn_mode="fixed_pool", pool_size=0)
        with pytest.raises(InvalidConfigError):
            FleetConfig(dispatch_hold_s=-1)

    def test_fleet_round_trip(self):
        f = FleetConfig(vehicle_capacity=3, dispatch_hold_s=12.5, spawn_mode="fixed_pool", pool_size=4)
        assert FleetConfig.from_dict(f.to_dict()) == f


class TestSetupErrors:
    def test_disconnected_backbone(self):
        hs = [Hotspot(i, 0.0, 0.0) for i in range(3)]
        with pytest.raises(SetupError):
            run_simulation(HotspotGraph(hs, [Edge(0, 1, 1, 1)]), [req(0, 0, 1, 0.0)])

    def test_unknown_hotspot(self):
        with pytest.raises(SetupError):
            run_simulation(path_graph(), [req(0, 0, 7, 0.0)])

    def test_unsorted_requests(self):
        with pytest.raises(SetupError):
            run_simulation(path_graph(), [req(0, 0, 2, 5.0), req(1, 0, 2, 1.0)])


def two_on_one_leg(capacity):
    """Hand-built trace: requests 0 and 1 ride vehicle 0 over edge (0, 1)."""
    g = HotspotGraph([Hotspot(0, 0, 0), Hotspot(1, 0, 0)], [Edge(0, 1, 2.0, 60.0)])
    reqs = [req(0, 0, 1, 0.0), req(1, 0, 1, 0.0)]
    events = [
        TraceEvent(0.0, "pickup", 0, 0, (0, 1)),
        TraceEvent(0.0, "depart", 0, 0, (0, 1), to=1, distance_km=2.0),
        TraceEvent(60.0, "arrive", 0, 1, (0, 1)),
        TraceEvent(60.0, "dropoff", 0, 1, (0, 1)),
        TraceEvent(60.0, "complete", 0, 1, (0,), success=True),
        TraceEvent(60.0, "complete", 0, 1, (1,), success=True),
    ]
    return g, reqs, events


class TestValidator:
    def test_hand_trace_is_valid(self):
        g, reqs, events = two_on_one_leg(2)
        assert validate_trace(SimTrace.from_events([0, 1], events, 2), g, reqs).ok

    def test_forged_capacity(self):
        g, reqs, events = two_on_one_leg(1)
        rep = validate_trace(SimTrace.from_events([0, 1], events, 1), g, reqs)
        assert rep.kinds() == {"capacity": 1}

    def test_forged_precedence(self):
        g, reqs, events = two_on_one_leg(2)
        forged = [events[4]] + [ev for i, ev in enumerate(events) if i != 4]
        rep = validate_trace(SimTrace.from_events([0, 1], forged, 2), g, reqs)
        assert rep.kinds() == {"precedence": 1}

    def test_forged_edge(self):
        g, reqs, events = two_on_one_leg(2)
        g3 = HotspotGraph([Hotspot(0, 0, 0), Hotspot(1, 0, 0), Hotspot(2, 0, 0)], [Edge(0, 2, 1, 1), Edge(1, 2, 1, 1)])
        rep = validate_trace(SimTrace.from_events([0, 1], events, 2), g3, reqs)
        assert rep.kinds() == {"edge": 1}

    def test_forged_timing(self):
        g, reqs, events = two_on_one_leg(2)
        events[2] = events[2]._replace(t=50.0)
        events[4] = events[4]._replace(t=50.0)
        events[5] = events[5]._replace(t=50.0)
        rep = validate_trace(SimTrace.from_events([0, 1], events, 2), g, reqs)
        assert rep.kinds() == {"timing": 1}

    def test_forged_success_flag(self):
        g, reqs, events = two_on_one_leg(2)
        events[4] = events[4]._replace(success=False)
        rep = validate_trace(SimTrace.from_events([0, 1], events, 2), g, reqs)
        assert rep.kinds() == {"success": 1}

    def test_double_assignment(self):
        g, reqs, events = two_on_one_leg(2)
        events.append(TraceEvent(60.0, "complete", 0, 1, (1,), success=True))
        rep = validate_trace(SimTrace.from_events([0, 1], events, 2), g, reqs)
        assert rep.kinds() == {"assignment": 1}

    def test_metrics_require_validation(self):
        g, reqs, events = two_on_one_leg(1)
        tr = SimTrace.from_events([0, 1], events, 1)
        from umst_net.errors import ValidationRequiredError

        with pytest.raises(ValidationRequiredError):
            compute_metrics(tr, reqs, validate_trace(tr, g, reqs))
