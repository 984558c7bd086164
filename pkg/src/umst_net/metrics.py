"""Delivery metrics, backbone comparison tables, and trade-off selection."""

from __future__ import annotations

import csv
import hashlib
import io
import math
import statistics
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Sequence

from .errors import ComparisonError, ValidationRequiredError
from .sim import SimTrace, ValidationReport
from .workload import DeliveryRequest


@dataclass
class SimReport:
    total_deliveries: int
    completed: int
    successful: int
    success_rate: float
    completion_rate: float
    avg_time_s: float | None
    median_time_s: float | None
    vehicle_distance_km: float
    package_distance_km: float
    # paired no-bundling vehicle distance minus ours when a baseline is given,
    # otherwise package minus vehicle distance
    distance_saved_km: float
    distance_saved_definition: str
    consolidation_km: float
    distance_saved_vs_baseline_km: float | None
    bundling_participation: int
    bundles_created: int
    avg_delay_s: float | None
    median_delay_s: float | None
    max_delay_s: float | None
    total_travel_time_s: float
    label: str = ""
    workload_id: str = ""
    seed: int | None = None
    edge_count: int | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def workload_id(requests: Sequence[DeliveryRequest]) -> str:
    h = hashlib.sha256()
    for r in requests:
        h.update(f"{r.id},{r.pickup},{r.dropoff},{r.earliest_pickup_s!r},{r.deadline_s!r}\n".encode())
    return h.hexdigest()[:16]


def _vehicle_distance(trace: SimTrace) -> float:
    return math.fsum(leg.distance_km for _, leg in trace.legs())


def compute_metrics(
    trace: SimTrace,
    requests: Sequence[DeliveryRequest],
    validation: ValidationReport | None,
    baseline: SimTrace | SimReport | None = None,
    label: str = "",
) -> SimReport:
    if validation is None:
        raise ValidationRequiredError("run validate_trace before computing metrics")
    if not validation.ok:
        raise ValidationRequiredError(f"trace has {len(validation.violations)} violations")

    req = {r.id: r for r in requests}
    total = len(requests)
    outcomes = [trace.outcomes[r.id] for r in requests if r.id in trace.outcomes]
    done = [o for o in outcomes if o.completed]
    ok = [o for o in done if o.success]

    times = [o.delivered_s - req[o.request].earliest_pickup_s for o in ok]
    delays = [o.delivered_s - req[o.request].deadline_s for o in done]

    legs = list(trace.legs())
    vehicle_km = math.fsum(leg.distance_km for _, leg in legs)
    package_km = math.fsum(leg.distance_km * len(leg.load) for _, leg in legs)

    shared: set[int] = set()
    bundled_vehicles: set[int] = set()
    for vid, leg in legs:
        if len(leg.load) > 1:
            shared.update(leg.load)
            bundled_vehicles.add(vid)

    consolidation = package_km - vehicle_km
    vs_baseline = None
    if baseline is not None:
        base_km = baseline.vehicle_distance_km if isinstance(baseline, SimReport) else _vehicle_distance(baseline)
        vs_baseline = base_km - vehicle_km

    return SimReport(
        total_deliveries=total,
        completed=len(done),
        successful=len(ok),
        success_rate=len(ok) / total if total else 0.0,
        completion_rate=len(done) / total if total else 0.0,
        avg_time_s=statistics.fmean(times) if times else None,
        median_time_s=statistics.median(times) if times else None,
        vehicle_distance_km=vehicle_km,
        package_distance_km=package_km,
        distance_saved_km=vs_baseline if vs_baseline is not None else consolidation,
        distance_saved_definition="baseline_vehicle_minus_vehicle" if vs_baseline is not None else "package_minus_vehicle",
        consolidation_km=consolidation,
        distance_saved_vs_baseline_km=vs_baseline,
        bundling_participation=len(shared),
        bundles_created=len(bundled_vehicles),
        avg_delay_s=statistics.fmean(delays) if delays else None,
        median_delay_s=statistics.median(delays) if delays else None,
        max_delay_s=max(delays) if delays else None,
        total_travel_time_s=trace.total_travel_time_s,
        label=label,
        workload_id=workload_id(requests),
        seed=trace.meta.get("seed"),
        edge_count=len(trace.meta["backbone_edges"]) if "backbone_edges" in trace.meta else None,
    )


# metric name -> True when higher is better
METRIC_DIRECTIONS: dict[str, bool] = {
    "success_rate": True,
    "completion_rate": True,
    "avg_time_s": False,
    "vehicle_distance_km": False,
    "package_distance_km": False,
    "distance_saved_km": True,
    "bundling_participation": True,
    "avg_delay_s": False,
}


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation; std is 0 for one value."""
    if not values:
        return math.nan, math.nan
    if len(values) == 1:
        return float(values[0]), 0.0
    return statistics.fmean(values), statistics.stdev(values)


@dataclass
class ComparisonTable:
    labels: list[str]
    metrics: list[str]
    runs: dict[str, int]
    mean: dict[str, dict[str, float]]
    std: dict[str, dict[str, float]]
    best: dict[str, list[str]]
    delta: dict[str, dict[str, float]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "runs"] + [c for m in self.metrics for c in (f"{m}_mean", f"{m}_std", f"{m}_best", f"{m}_delta")])
        for lab in self.labels:
            row = [lab, self.runs[lab]]
            for m in self.metrics:
                row += [repr(self.mean[lab][m]), repr(self.std[lab][m]), int(lab in self.best[m]), repr(self.delta[lab][m])]
            w.writerow(row)
        return buf.getvalue()


def compare_backbones(reports: Sequence[SimReport], metrics: Iterable[str] | None = None) -> ComparisonTable:
    """Side-by-side table grouped by report label, mean ± sample std per group.

    Reports sharing a seed must come from the same workload. Deltas are
    relative to the first label seen.
    """
    if len(reports) < 2:
        raise ComparisonError("need at least two reports to compare")
    by_seed: dict[object, set[str]] = {}
    for r in reports:
        by_seed.setdefault(r.seed, set()).add(r.workload_id)
    bad = {s: ids for s, ids in by_seed.items() if len(ids) > 1}
    if bad:
        raise ComparisonError(f"reports for the same seed use different workloads: {bad}")

    metrics = list(metrics or METRIC_DIRECTIONS)
    groups: dict[str, list[SimReport]] = {}
    for r in reports:
        groups.setdefault(r.label, []).append(r)
    labels = list(groups)

    mean: dict[str, dict[str, float]] = {}
    std: dict[str, dict[str, float]] = {}
    for lab, rs in groups.items():
        mean[lab], std[lab] = {}, {}
        for m in metrics:
            vals = [getattr(r, m) for r in rs if getattr(r, m) is not None]
            mean[lab][m], std[lab][m] = mean_std(vals)

    best: dict[str, list[str]] = {}
    for m in metrics:
        vals = {lab: mean[lab][m] for lab in labels if not math.isnan(mean[lab][m])}
        if not vals:
            best[m] = []
            continue
        target = max(vals.values()) if METRIC_DIRECTIONS.get(m, True) else min(vals.values())
        best[m] = [lab for lab, v in vals.items() if v == target]

    ref = labels[0]
    delta = {lab: {m: mean[lab][m] - mean[ref][m] for m in metrics} for lab in labels}
    return ComparisonTable(labels, metrics, {lab: len(groups[lab]) for lab in labels}, mean, std, best, delta)


@dataclass(frozen=True)
class TradeoffPoint:
    label: str
    success_rate: float
    avg_time_s: float
    vehicle_distance_km: float

    @classmethod
    def from_report(cls, r: SimReport) -> "TradeoffPoint":
        return cls(r.label, r.success_rate, r.avg_time_s if r.avg_time_s is not None else math.inf, r.vehicle_distance_km)

    def cost(self, objective: str) -> float:
        return self.avg_time_s if objective == "time" else self.vehicle_distance_km


def _minmax(values: list[float], higher_is_better: bool) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return [1.0] * len(values)
    if higher_is_better:
        return [(v - lo) / (hi - lo) for v in values]
    return [(hi - v) / (hi - lo) for v in values]


def nash_bargaining_select(points: Sequence[TradeoffPoint], objective: str = "time") -> str:
    """Label maximizing the product of min-max normalized utilities.

    Success is a benefit, ``objective`` ("time" or "distance") a cost; the
    disagreement point is the origin after normalization. Ties go to the
    higher raw success rate, then the lower raw cost, then the smaller label,
    so a dominated point is never chosen.
    """
    if not points:
        raise ValueError("need at least one point")
    u_s = _minmax([p.success_rate for p in points], True)
    u_c = _minmax([p.cost(objective) for p in points], False)
    # rounding absorbs float noise so affine rescaling of the cost cannot flip a tie
    scored = [
        (round(round(a, 12) * round(b, 12), 12), p.success_rate, p.cost(objective), p.label)
        for a, b, p in zip(u_s, u_c, points)
    ]
    best = min(scored, key=lambda s: (-s[0], -s[1], s[2], s[3]))
    return best[3]


def tradeoff_frontier(points: Sequence[TradeoffPoint], objective: str = "time") -> list[TradeoffPoint]:
    """Pareto-nondominated points (max success, min cost), sorted by success."""
    pts = sorted(points, key=lambda p: (p.success_rate, -p.cost(objective), p.label))
    # sweep from highest success down, keeping strictly cheaper points
    frontier = []
    best_cost = math.inf
    i = len(pts) - 1
    while i >= 0:
        s = pts[i].success_rate
        j = i
        while j >= 0 and pts[j].success_rate == s:
            j -= 1
        tier = pts[j + 1 : i + 1]
        tier_min = min(p.cost(objective) for p in tier)
        if tier_min < best_cost:
            frontier.extend(p for p in tier if p.cost(objective) == tier_min)
            best_cost = tier_min
        i = j
    return sorted(frontier, key=lambda p: (p.success_rate, p.cost(objective), p.label))
