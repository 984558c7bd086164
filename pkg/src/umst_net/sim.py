"""Deterministic discrete-event delivery simulator over a backbone graph.

Requests appear at their pickup hotspot at ``earliest_pickup_s`` and queue by
next hop toward their destination. A queue dispatches a vehicle once it holds
``vehicle_capacity`` requests or its oldest request has waited
``dispatch_hold_s``. Vehicles follow next-hop-table paths; at each hotspot
they drop off finished requests and absorb waiting requests headed the same
way while capacity allows.

A request stays on one vehicle from pickup to dropoff, so a vehicle only
carries requests whose remaining paths are prefixes of one another (the
vehicle drives the longest of them). Every pickup is a subset of the plain
next-hop bundle ``B(h, v)``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

from .errors import InvalidConfigError, SetupError
from .graph import HotspotGraph, is_connected
from .umst import Backbone, NextHopTable, backbone_graph, next_hop_table
from .workload import DeliveryRequest


@dataclass(frozen=True)
class FleetConfig:
    vehicle_capacity: int = 5
    dispatch_hold_s: float = 30.0
    # None: legs take the backbone edge travel time as stored.
    vehicle_speed_kmh: float | None = None
    spawn_mode: str = "on_demand"  # "on_demand" | "fixed_pool"
    pool_size: int = 0
    bundling_enabled: bool = True
    # events after this time are not processed; None runs to completion
    max_time_s: float | None = None

    def __post_init__(self) -> None:
        if self.vehicle_capacity < 1:
            raise InvalidConfigError(f"vehicle_capacity must be >= 1, got {self.vehicle_capacity}")
        if self.dispatch_hold_s < 0:
            raise InvalidConfigError("dispatch_hold_s must be >= 0")
        if self.vehicle_speed_kmh is not None and not self.vehicle_speed_kmh > 0:
            raise InvalidConfigError("vehicle_speed_kmh must be positive")
        if self.spawn_mode not in ("on_demand", "fixed_pool"):
            raise InvalidConfigError(f"unknown spawn_mode {self.spawn_mode!r}")
        if self.spawn_mode == "fixed_pool" and self.pool_size < 1:
            raise InvalidConfigError("fixed_pool needs pool_size >= 1")

    def to_dict(self) -> dict:
        return {
            "vehicle_capacity": self.vehicle_capacity,
            "dispatch_hold_s": self.dispatch_hold_s,
            "vehicle_speed_kmh": self.vehicle_speed_kmh,
            "spawn_mode": self.spawn_mode,
            "pool_size": self.pool_size,
            "bundling_enabled": self.bundling_enabled,
            "max_time_s": self.max_time_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FleetConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


class TraceEvent(NamedTuple):
    t: float
    kind: str  # arrive | depart | pickup | dropoff | merge | complete
    vehicle: int
    hotspot: int
    requests: tuple[int, ...]
    to: int | None = None
    distance_km: float | None = None
    success: bool | None = None


class Leg(NamedTuple):
    frm: int
    to: int
    depart_s: float
    arrive_s: float
    distance_km: float
    load: tuple[int, ...]


@dataclass
class VehicleRecord:
    id: int
    legs: list[Leg] = field(default_factory=list)

    @property
    def route(self) -> list[int]:
        if not self.legs:
            return []
        return [self.legs[0].frm] + [leg.to for leg in self.legs]

    @property
    def distance_km(self) -> float:
        return math.fsum(leg.distance_km for leg in self.legs)


@dataclass
class RequestOutcome:
    request: int
    vehicle: int | None = None
    pickup_s: float | None = None
    pickup_hotspot: int | None = None
    delivered_s: float | None = None
    dropoff_hotspot: int | None = None
    success: bool = False

    @property
    def completed(self) -> bool:
        return self.delivered_s is not None


@dataclass(frozen=True)
class Bundle:
    """Requests sharing a vehicle, with the history of how they joined."""

    members: tuple[int, ...]
    lineage: tuple[tuple[str, int, float, tuple[int, ...]], ...] = ()

    def __len__(self) -> int:
        return len(self.members)


@dataclass
class HotspotState:
    """Waiting requests at one hotspot, FIFO per next-hop direction."""

    hotspot: int
    queues: dict[int, list[int]] = field(default_factory=dict)

    def waiting(self, v: int) -> list[int]:
        return self.queues.get(v, [])

    def remove(self, ids: Iterable[int]) -> None:
        gone = set(ids)
        for v, q in self.queues.items():
            if gone.intersection(q):
                self.queues[v] = [r for r in q if r not in gone]


def candidate_bundle(
    state: HotspotState,
    v: int,
    capacity: int,
    accept: Callable[[int], bool] | None = None,
) -> list[int]:
    """First ``capacity`` waiting requests at the hotspot whose next hop is ``v``.

    ``accept`` filters candidates in FIFO order; it may be stateful.
    """
    out = []
    for r in state.waiting(v):
        if len(out) >= capacity:
            break
        if accept is None or accept(r):
            out.append(r)
    return out


def merge_bundle(
    inbound: Bundle,
    state: HotspotState,
    v: int,
    capacity: int,
    t: float = 0.0,
    accept: Callable[[int], bool] | None = None,
) -> Bundle:
    room = capacity - len(inbound)
    if room <= 0:
        return inbound
    added = candidate_bundle(state, v, room, accept)
    if not added:
        return inbound
    return Bundle(
        inbound.members + tuple(added),
        inbound.lineage + (("merge", state.hotspot, t, tuple(added)),),
    )


@dataclass
class SimTrace:
    requests: tuple[int, ...]
    events: list[TraceEvent]
    capacity: int
    bundling_enabled: bool = True
    meta: dict = field(default_factory=dict)
    vehicles: dict[int, VehicleRecord] = field(default_factory=dict)
    outcomes: dict[int, RequestOutcome] = field(default_factory=dict)

    @classmethod
    def from_events(
        cls,
        requests: Iterable[int],
        events: list[TraceEvent],
        capacity: int,
        bundling_enabled: bool = True,
        meta: dict | None = None,
    ) -> "SimTrace":
        """Rebuild vehicles and per-request outcomes from the event log."""
        rids = tuple(requests)
        outcomes = {r: RequestOutcome(r) for r in rids}
        vehicles: dict[int, VehicleRecord] = {}
        open_legs: dict[int, TraceEvent] = {}
        for ev in events:
            kind = ev.kind
            if kind == "depart":
                open_legs[ev.vehicle] = ev
            elif kind == "arrive":
                dep = open_legs.pop(ev.vehicle, None)
                rec = vehicles.setdefault(ev.vehicle, VehicleRecord(ev.vehicle))
                if dep is None:
                    continue
                rec.legs.append(Leg(dep.hotspot, ev.hotspot, dep.t, ev.t, dep.distance_km or 0.0, dep.requests))
            elif kind == "pickup":
                vehicles.setdefault(ev.vehicle, VehicleRecord(ev.vehicle))
                for r in ev.requests:
                    o = outcomes.setdefault(r, RequestOutcome(r))
                    if o.vehicle is None:
                        o.vehicle, o.pickup_s, o.pickup_hotspot = ev.vehicle, ev.t, ev.hotspot
            elif kind == "complete":
                for r in ev.requests:
                    o = outcomes.setdefault(r, RequestOutcome(r))
                    if o.delivered_s is None:
                        o.delivered_s, o.dropoff_hotspot = ev.t, ev.hotspot
                        o.success = bool(ev.success)
        return cls(rids, events, capacity, bundling_enabled, dict(meta or {}), vehicles, outcomes)

    @property
    def total_travel_time_s(self) -> float:
        return math.fsum(leg.arrive_s - leg.depart_s for v in self.vehicles.values() for leg in v.legs)

    def legs(self) -> Iterable[tuple[int, Leg]]:
        for vid in sorted(self.vehicles):
            for leg in self.vehicles[vid].legs:
                yield vid, leg

    def bundles(self) -> dict[int, Bundle]:
        """Per-vehicle bundle lineage: formation pickup then merges."""
        out: dict[int, Bundle] = {}
        for ev in self.events:
            if ev.kind != "pickup":
                continue
            b = out.get(ev.vehicle)
            if b is None:
                out[ev.vehicle] = Bundle(ev.requests, (("form", ev.hotspot, ev.t, ev.requests),))
            else:
                out[ev.vehicle] = Bundle(b.members + ev.requests, b.lineage + (("merge", ev.hotspot, ev.t, ev.requests),))
        return out


_ARRIVE, _RELEASE, _HOLD = 0, 1, 2


class _Vehicle:
    __slots__ = ("id", "at", "load", "ahead", "busy")

    def __init__(self, vid: int, at: int):
        self.id = vid
        self.at = at
        self.load: list[int] = []
        self.ahead: tuple[int, ...] = (at,)
        self.busy = False


def _compatible(ahead: tuple[int, ...], path: tuple[int, ...]) -> tuple[int, ...] | None:
    """Longer of the two if one is a prefix of the other, else None."""
    if len(path) <= len(ahead):
        return ahead if ahead[: len(path)] == path else None
    return path if path[: len(ahead)] == ahead else None


class _Engine:
    def __init__(self, graph: HotspotGraph, table: NextHopTable, requests: Sequence[DeliveryRequest], fleet: FleetConfig):
        self.g = graph
        self.table = table
        self.fleet = fleet
        self.cap = fleet.vehicle_capacity
        self.req = {r.id: r for r in requests}
        self.order = list(requests)
        self.state = [HotspotState(h) for h in graph.nodes()]
        self.heap: list = []
        self.seq = 0
        self.events: list[TraceEvent] = []
        self.vehicles: list[_Vehicle] = []
        self.idle: dict[int, _Vehicle] = {}
        # (hotspot, next hop) groups with a pool vehicle already heading over
        self.fetching: dict[tuple[int, int], int] = {}
        self.leg_cache: dict[tuple[int, int], tuple[float, float]] = {}
        if fleet.spawn_mode == "fixed_pool":
            for i in range(fleet.pool_size):
                veh = _Vehicle(i, i % graph.n)
                self.vehicles.append(veh)
                self.idle[i] = veh

    def push(self, t: float, prio: int, payload) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (t, prio, self.seq, payload))

    def leg(self, u: int, v: int) -> tuple[float, float]:
        key = (u, v)
        cached = self.leg_cache.get(key)
        if cached is None:
            e = self.g.edge(u, v)
            speed = self.fleet.vehicle_speed_kmh
            tt = e.travel_time_s if speed is None else e.distance_km / speed * 3600.0
            cached = self.leg_cache[key] = (tt, e.distance_km)
        return cached

    def run(self) -> list[TraceEvent]:
        for r in self.order:
            self.push(r.earliest_pickup_s, _RELEASE, r.id)
        limit = self.fleet.max_time_s
        while self.heap:
            t, prio, _, payload = heapq.heappop(self.heap)
            if limit is not None and t > limit:
                break
            if prio == _ARRIVE:
                self.on_arrive(t, *payload)
            elif prio == _RELEASE:
                self.on_release(t, payload)
            else:
                self.on_hold(t, payload)
        return self.events

    # request lifecycle

    def on_release(self, t: float, rid: int) -> None:
        r = self.req[rid]
        v = self.table.next(r.pickup, r.dropoff)
        self.state[r.pickup].queues.setdefault(v, []).append(rid)
        if self.fleet.bundling_enabled:
            self.push(t + self.fleet.dispatch_hold_s, _HOLD, rid)
        self.try_dispatch(t, r.pickup, v)

    def on_hold(self, t: float, rid: int) -> None:
        r = self.req[rid]
        v = self.table.next(r.pickup, r.dropoff)
        if rid in self.state[r.pickup].waiting(v):
            self.try_dispatch(t, r.pickup, v)

    def due(self, t: float, h: int, v: int) -> bool:
        q = self.state[h].waiting(v)
        if not q:
            return False
        if len(q) >= self.cap or not self.fleet.bundling_enabled:
            return True
        return self.req[q[0]].earliest_pickup_s + self.fleet.dispatch_hold_s <= t

    def try_dispatch(self, t: float, h: int, v: int) -> None:
        while self.due(t, h, v):
            if self.fleet.spawn_mode == "fixed_pool" and not self.has_vehicle_at(h):
                self.fetch_vehicle(t, h, v)
                return
            self.dispatch_group(t, h, v)

    def select(self, h: int, v: int, ahead: tuple[int, ...], room: int) -> tuple[list[int], tuple[int, ...]]:
        route = [ahead]

        def accept(rid: int) -> bool:
            merged = _compatible(route[0], self.table.walk(h, self.req[rid].dropoff))
            if merged is None:
                return False
            route[0] = merged
            return True

        chosen = candidate_bundle(self.state[h], v, room, accept)
        return chosen, route[0]

    def dispatch_group(self, t: float, h: int, v: int) -> None:
        lead = self.state[h].waiting(v)[0]
        if not self.fleet.bundling_enabled:
            chosen = [lead]
        else:
            chosen, _ = self.select(h, v, self.table.walk(h, self.req[lead].dropoff), self.cap)
        self.state[h].remove(chosen)
        self.dispatch(t, h, chosen)

    def dispatch(self, t: float, h: int, rids: list[int]) -> None:
        veh = self.take_vehicle(h)
        ahead = (h,)
        for rid in rids:
            ahead = _compatible(ahead, self.table.walk(h, self.req[rid].dropoff))
        veh.ahead = ahead
        veh.load = list(rids)
        self.events.append(TraceEvent(t, "pickup", veh.id, h, tuple(rids)))
        self.depart(t, veh)

    def depart(self, t: float, veh: _Vehicle) -> None:
        h, nxt = veh.ahead[0], veh.ahead[1]
        tt, km = self.leg(h, nxt)
        self.events.append(TraceEvent(t, "depart", veh.id, h, tuple(veh.load), to=nxt, distance_km=km))
        self.push(t + tt, _ARRIVE, (veh.id, nxt))

    def on_arrive(self, t: float, vid: int, h: int) -> None:
        veh = self.vehicles[vid]
        veh.at = h
        veh.ahead = veh.ahead[1:]
        self.events.append(TraceEvent(t, "arrive", vid, h, tuple(veh.load)))
        if veh.load:
            done = [r for r in veh.load if self.req[r].dropoff == h]
            if done:
                veh.load = [r for r in veh.load if self.req[r].dropoff != h]
                self.events.append(TraceEvent(t, "dropoff", vid, h, tuple(done)))
                for r in done:
                    ok = t <= self.req[r].deadline_s
                    self.events.append(TraceEvent(t, "complete", vid, h, (r,), success=ok))
        elif len(veh.ahead) > 1:
            # empty pool vehicle repositioning
            self.depart(t, veh)
            return

        if veh.load and self.fleet.bundling_enabled and len(veh.load) < self.cap:
            self.merge_at(t, veh, h)
        if veh.load:
            self.depart(t, veh)
        else:
            self.release_vehicle(t, veh, h)

    def merge_at(self, t: float, veh: _Vehicle, h: int) -> None:
        v = veh.ahead[1]
        if not self.state[h].waiting(v):
            return
        chosen, ahead = self.select(h, v, veh.ahead, self.cap - len(veh.load))
        if not chosen:
            return
        self.state[h].remove(chosen)
        veh.ahead = ahead
        veh.load.extend(chosen)
        self.events.append(TraceEvent(t, "pickup", veh.id, h, tuple(chosen)))
        self.events.append(TraceEvent(t, "merge", veh.id, h, tuple(chosen)))

    # vehicle supply

    def has_vehicle_at(self, h: int) -> bool:
        return any(veh.at == h and not veh.busy for veh in self.idle.values())

    def take_vehicle(self, h: int) -> _Vehicle:
        if self.fleet.spawn_mode == "on_demand":
            veh = _Vehicle(len(self.vehicles), h)
            self.vehicles.append(veh)
            return veh
        for vid in sorted(self.idle):
            veh = self.idle[vid]
            if veh.at == h and not veh.busy:
                del self.idle[vid]
                return veh
        raise RuntimeError(f"no pool vehicle at hotspot {h}")

    def fetch_vehicle(self, t: float, h: int, v: int) -> None:
        if (h, v) in self.fetching:
            return
        free = [veh for veh in self.idle.values() if not veh.busy]
        if not free:
            return
        veh = min(free, key=lambda x: (self.table.cost(x.at, h), x.id))
        veh.busy = True
        self.fetching[(h, v)] = veh.id
        veh.ahead = self.table.walk(veh.at, h)
        self.depart(t, veh)

    def release_vehicle(self, t: float, veh: _Vehicle, h: int) -> None:
        if self.fleet.spawn_mode == "on_demand":
            return
        veh.busy = False
        veh.ahead = (h,)
        self.idle[veh.id] = veh
        for key in [k for k, vid in self.fetching.items() if vid == veh.id]:
            del self.fetching[key]
        # serve waiting groups oldest first
        groups = []
        for st in self.state:
            for v, q in st.queues.items():
                if q and (st.hotspot, v) not in self.fetching:
                    groups.append((self.req[q[0]].earliest_pickup_s, q[0], st.hotspot, v))
        for _, _, gh, gv in sorted(groups):
            self.try_dispatch(t, gh, gv)


def run_simulation(
    backbone: Backbone,
    requests: Sequence[DeliveryRequest],
    fleet: FleetConfig = FleetConfig(),
    seed: int = 0,
    table: NextHopTable | None = None,
) -> SimTrace:
    """Simulate ``requests`` (sorted by earliest pickup) over ``backbone``.

    The engine itself draws no random numbers; ``seed`` is recorded in the
    trace metadata so paired runs can be identified.
    """
    g = backbone_graph(backbone)
    if not is_connected(g):
        raise SetupError("backbone is disconnected")
    for r in requests:
        if not (0 <= r.pickup < g.n and 0 <= r.dropoff < g.n):
            raise SetupError(f"request {r.id} references a hotspot outside the backbone")
    if any(b.earliest_pickup_s < a.earliest_pickup_s for a, b in zip(requests, requests[1:])):
        raise SetupError("requests must be sorted by earliest_pickup_s")
    table = table or next_hop_table(g)
    events = _Engine(g, table, requests, fleet).run()
    meta = {
        "seed": seed,
        "fleet": fleet.to_dict(),
        "backbone_edges": [[e.u, e.v, e.distance_km, e.travel_time_s] for e in g.edges],
        "n_hotspots": g.n,
    }
    return SimTrace.from_events([r.id for r in requests], events, fleet.vehicle_capacity, fleet.bundling_enabled, meta)


# validation


class Violation(NamedTuple):
    kind: str  # assignment | precedence | capacity | edge | timing | success
    detail: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for v in self.violations:
            out[v.kind] = out.get(v.kind, 0) + 1
        return out


TIME_TOL_S = 1e-9


def validate_trace(trace: SimTrace, backbone: Backbone, requests: Sequence[DeliveryRequest]) -> ValidationReport:
    """Re-check assignment, precedence, capacity, edge and timing constraints."""
    g = backbone_graph(backbone)
    req = {r.id: r for r in requests}
    out: list[Violation] = []
    speed = trace.meta.get("fleet", {}).get("vehicle_speed_kmh")

    pickups: dict[int, list[tuple[int, int, float, int]]] = {}
    completes: dict[int, list[tuple[int, int, float, int]]] = {}
    for i, ev in enumerate(trace.events):
        if ev.kind == "pickup":
            for r in ev.requests:
                pickups.setdefault(r, []).append((i, ev.vehicle, ev.t, ev.hotspot))
        elif ev.kind == "complete":
            for r in ev.requests:
                completes.setdefault(r, []).append((i, ev.vehicle, ev.t, ev.hotspot))

    # assignment
    for rid in set(pickups) | set(completes) | set(trace.requests):
        if rid not in req:
            out.append(Violation("assignment", f"request {rid} is not in the request list"))
            continue
        ps, cs = pickups.get(rid, []), completes.get(rid, [])
        vehicles = {p[1] for p in ps} | {c[1] for c in cs}
        if len(ps) > 1 or len(cs) > 1 or len(vehicles) > 1 or (cs and not ps):
            out.append(Violation("assignment", f"request {rid}: {len(ps)} pickups, {len(cs)} completions on vehicles {sorted(vehicles)}"))
    for rid in req:
        if rid not in trace.outcomes:
            out.append(Violation("assignment", f"request {rid} missing from trace outcomes"))

    # precedence and success predicate
    for rid, cs in completes.items():
        ps = pickups.get(rid)
        r = req.get(rid)
        if not ps or r is None or len(ps) != 1 or len(cs) != 1:
            continue
        (pi, pv, pt, ph), (ci, cv, ct, ch) = ps[0], cs[0]
        if ph != r.pickup or ch != r.dropoff or not (pi < ci and pt <= ct):
            out.append(Violation("precedence", f"request {rid}: pickup at {ph}@{pt} vs dropoff at {ch}@{ct}"))
        expected = pt >= r.earliest_pickup_s and ct <= r.deadline_s
        if trace.outcomes.get(rid) and trace.outcomes[rid].success != expected:
            out.append(Violation("success", f"request {rid}: recorded success disagrees with timing"))
    for rid, ps in pickups.items():
        r = req.get(rid)
        if r is not None and any(p[2] < r.earliest_pickup_s for p in ps):
            out.append(Violation("success", f"request {rid} picked up before its earliest pickup time"))

    # per-leg checks
    departs: set[tuple[int, int, float]] = set()
    arrivals: set[tuple[int, int, float]] = set()
    for vid, rec in sorted(trace.vehicles.items()):
        prev = None
        for leg in rec.legs:
            departs.add((vid, leg.frm, leg.depart_s))
            arrivals.add((vid, leg.to, leg.arrive_s))
            if len(leg.load) > trace.capacity:
                out.append(Violation("capacity", f"vehicle {vid} leg {leg.frm}->{leg.to} carries {len(leg.load)} > {trace.capacity}"))
            for r in leg.load:
                rv = {p[1] for p in pickups.get(r, [])}
                if rv and vid not in rv:
                    out.append(Violation("assignment", f"request {r} rides vehicle {vid} without being assigned to it"))
            if not g.has_edge(leg.frm, leg.to):
                out.append(Violation("edge", f"vehicle {vid} traverses ({leg.frm},{leg.to}) outside the backbone"))
            else:
                e = g.edge(leg.frm, leg.to)
                tt = e.travel_time_s if speed is None else e.distance_km / speed * 3600.0
                if abs((leg.arrive_s - leg.depart_s) - tt) > TIME_TOL_S:
                    out.append(Violation("timing", f"vehicle {vid} leg {leg.frm}->{leg.to} took {leg.arrive_s - leg.depart_s}s, expected {tt}s"))
                if leg.distance_km != e.distance_km:
                    out.append(Violation("edge", f"vehicle {vid} leg {leg.frm}->{leg.to} distance mismatch"))
            if prev is not None and (prev.to != leg.frm or leg.depart_s < prev.arrive_s):
                out.append(Violation("timing", f"vehicle {vid} route discontinuity at {leg.frm}@{leg.depart_s}"))
            prev = leg

    for rid, ps in pickups.items():
        for _, vid, t, h in ps:
            if (vid, h, t) not in departs:
                out.append(Violation("timing", f"request {rid} picked up at {h}@{t} but vehicle {vid} does not leave from there then"))
    for rid, cs in completes.items():
        for _, vid, t, h in cs:
            if (vid, h, t) not in arrivals:
                out.append(Violation("timing", f"request {rid} delivered at {h}@{t} but vehicle {vid} does not arrive then"))
    return ValidationReport(out)
