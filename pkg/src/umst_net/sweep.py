"""Parameter sweeps over backbone type, K, rho, seed and bundling."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .graph import HotspotGraph
from .io import FORMAT_VERSION, load_report, save_report
from .metrics import METRIC_DIRECTIONS, SimReport, TradeoffPoint, compute_metrics, mean_std, nash_bargaining_select
from .sim import FleetConfig, run_simulation, validate_trace
from .umst import UmstConfig, build_umst, mst_backbone
from .workload import WorkloadConfig, generate_requests

log = logging.getLogger(__name__)

THREADS_ENV = "UMST_NET_THREADS"
BACKBONE_KINDS = ("clique", "mst", "umst")


@dataclass(frozen=True)
class SweepConfig:
    k_values: tuple[int, ...] = (10, 20, 40, 100)
    rho_values: tuple[float, ...] = (0.1, 0.2, 0.5, 0.7)
    seeds: tuple[int, ...] = tuple(range(10))
    backbones: tuple[str, ...] = BACKBONE_KINDS
    bundling: str = "on"  # "on" | "off" | "both"

    def __post_init__(self) -> None:
        if not (self.k_values and self.rho_values and self.seeds and self.backbones):
            raise ValueError("sweep lists must be nonempty")
        unknown = set(self.backbones) - set(BACKBONE_KINDS)
        if unknown:
            raise ValueError(f"unknown backbone kinds {sorted(unknown)}")
        if self.bundling not in ("on", "off", "both"):
            raise ValueError(f"bundling must be on, off or both, got {self.bundling!r}")


@dataclass(frozen=True)
class Cell:
    backbone: str
    seed: int
    bundling: bool
    k: int | None = None
    rho: float | None = None

    @property
    def label(self) -> str:
        base = self.backbone if self.backbone != "umst" else f"umst_m{self.k}_d{round(self.rho * 100)}"
        return base if self.bundling else f"{base}_nobundle"

    @property
    def cell_id(self) -> str:
        return f"{self.label}_s{self.seed}"


def sweep_cells(sweep: SweepConfig) -> list[Cell]:
    modes = {"on": [True], "off": [False], "both": [True, False]}[sweep.bundling]
    cells = []
    for kind in sweep.backbones:
        for bundling in modes:
            for seed in sweep.seeds:
                if kind == "umst":
                    cells.extend(Cell(kind, seed, bundling, k, rho) for k in sweep.k_values for rho in sweep.rho_values)
                else:
                    cells.append(Cell(kind, seed, bundling))
    return cells


def run_cell(cell: Cell, graph: HotspotGraph, workload: WorkloadConfig, fleet: FleetConfig) -> SimReport:
    if cell.backbone == "clique":
        backbone = graph
    elif cell.backbone == "mst":
        backbone = mst_backbone(graph)
    else:
        backbone = build_umst(graph, UmstConfig(k_trees=cell.k, drop_rate=cell.rho, rng_seed=cell.seed))
    requests = generate_requests(graph, replace(workload, rng_seed=cell.seed))
    fleet = replace(fleet, bundling_enabled=cell.bundling)
    trace = run_simulation(backbone, requests, fleet, seed=cell.seed)
    report = compute_metrics(trace, requests, validate_trace(trace, backbone, requests), label=cell.label)
    report.extra = {
        "backbone": cell.backbone,
        "k": cell.k,
        "rho": cell.rho,
        "bundling": cell.bundling,
        "clique_edge_count": graph.num_edges,
    }
    return report


def _cell_job(args) -> tuple[str, dict | None, str | None]:
    cell, graph, workload, fleet, path = args
    try:
        report = run_cell(cell, graph, workload, fleet)
    except Exception as exc:  # recorded in the failures manifest
        return cell.cell_id, None, f"{type(exc).__name__}: {exc}"
    save_report(report, path)
    return cell.cell_id, report.to_dict(), None


def thread_count(default: int | None = None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return default or os.cpu_count() or 1


@dataclass
class SweepResult:
    out_dir: Path
    reports: dict[str, SimReport] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)

    @property
    def aggregate_csv(self) -> Path:
        return self.out_dir / "aggregate.csv"

    @property
    def summary_csv(self) -> Path:
        return self.out_dir / "summary.csv"


def run_sweep(
    sweep: SweepConfig,
    graph: HotspotGraph,
    workload: WorkloadConfig,
    out_dir: Path,
    fleet: FleetConfig = FleetConfig(),
    force: bool = False,
    threads: int | None = None,
) -> SweepResult:
    """Run every cell, skipping ones whose report already exists."""
    out_dir = Path(out_dir)
    cell_dir = out_dir / "cells"
    cell_dir.mkdir(parents=True, exist_ok=True)
    cells = sweep_cells(sweep)
    result = SweepResult(out_dir)

    jobs = []
    for cell in cells:
        path = cell_dir / f"{cell.cell_id}.json"
        if path.exists() and not force:
            try:
                result.reports[cell.cell_id] = load_report(path)
                result.skipped.append(cell.cell_id)
                continue
            except Exception:
                log.warning("rerunning %s: unreadable report", cell.cell_id)
        jobs.append((cell, graph, workload, fleet, path))

    workers = min(thread_count(threads), max(1, len(jobs)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_cell_job, jobs))
    else:
        outcomes = [_cell_job(job) for job in jobs]
    for cell_id, rep, err in outcomes:
        if err is not None:
            result.failures[cell_id] = err
            log.error("cell %s failed: %s", cell_id, err)
        else:
            result.reports[cell_id] = SimReport.from_dict(rep)

    order = {c.cell_id: i for i, c in enumerate(cells)}
    result.reports = dict(sorted(result.reports.items(), key=lambda kv: order.get(kv[0], math.inf)))
    result.aggregate_csv.write_text(aggregate_csv(result.reports.values()), encoding="utf-8")
    result.summary_csv.write_text(summary_csv(result.reports.values()), encoding="utf-8")
    manifest = out_dir / "failures.json"
    if result.failures:
        manifest.write_text(json.dumps({"format_version": FORMAT_VERSION, "failures": result.failures}, indent=2, sort_keys=True) + "\n")
    elif manifest.exists():
        manifest.unlink()
    return result


AGG_METRICS = list(METRIC_DIRECTIONS) + ["bundles_created", "median_time_s", "max_delay_s", "consolidation_km"]
AGG_COLUMNS = ["cell_id", "label", "backbone", "k", "rho", "seed", "bundling", "edge_count", "clique_edge_count"] + AGG_METRICS


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def aggregate_csv(reports: Iterable[SimReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGG_COLUMNS)
    for r in reports:
        x = r.extra
        row = [f"{r.label}_s{r.seed}", r.label, x.get("backbone"), x.get("k"), x.get("rho"), r.seed,
               x.get("bundling"), r.edge_count, x.get("clique_edge_count")]
        row += [getattr(r, m) for m in AGG_METRICS]
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def read_aggregate(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


def _num(s: str) -> float | None:
    return float(s) if s not in ("", None) else None


def group_rows(rows: Sequence[dict[str, str]]) -> dict[str, list[dict[str, str]]]:
    groups: dict[str, list[dict[str, str]]] = {}
    for row in rows:
        groups.setdefault(row["label"], []).append(row)
    return groups


def summarize_rows(rows: Sequence[dict[str, str]]) -> list[dict]:
    """Mean and sample std per label over seeds."""
    out = []
    for label, grp in group_rows(rows).items():
        first = grp[0]
        rec = {"label": label, "backbone": first["backbone"], "k": first["k"], "rho": first["rho"],
               "bundling": first["bundling"], "runs": len(grp)}
        for m in ["edge_count"] + AGG_METRICS:
            vals = [v for v in (_num(r[m]) for r in grp) if v is not None]
            rec[f"{m}_mean"], rec[f"{m}_std"] = mean_std(vals)
        out.append(rec)
    return out


def summary_csv(reports: Iterable[SimReport]) -> str:
    rows = read_aggregate(aggregate_csv(reports))
    summary = summarize_rows(rows)
    cols = ["label", "backbone", "k", "rho", "bundling", "runs"] + [f"{m}_{s}" for m in ["edge_count"] + AGG_METRICS for s in ("mean", "std")]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for rec in summary:
        w.writerow([_fmt(rec[c]) for c in cols])
    return buf.getvalue()


PLOT_KINDS = {
    "success-vs-time": ["label", "success_rate", "avg_time_s", "is_nbs"],
    "success-vs-distance": ["label", "success_rate", "vehicle_km", "is_nbs"],
    "edges-vs-k": ["label", "k", "edge_count", "is_nbs"],
}


def emit_plot_data(aggregate: str, kind: str) -> str:
    """Plot-ready CSV, one row per config (seed means), NBS row flagged."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {sorted(PLOT_KINDS)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_KINDS[kind])
    summary = summarize_rows(read_aggregate(aggregate))
    if not summary:
        return buf.getvalue()
    points = [
        TradeoffPoint(s["label"], s["success_rate_mean"], s["avg_time_s_mean"], s["vehicle_distance_km_mean"])
        for s in summary
    ]
    objective = "distance" if kind == "success-vs-distance" else "time"
    nbs = nash_bargaining_select(points, objective)
    for s, p in zip(summary, points):
        flag = int(p.label == nbs)
        if kind == "success-vs-time":
            w.writerow([p.label, repr(p.success_rate), repr(p.avg_time_s), flag])
        elif kind == "success-vs-distance":
            w.writerow([p.label, repr(p.success_rate), repr(p.vehicle_distance_km), flag])
        else:
            w.writerow([p.label, s["k"], repr(s["edge_count_mean"]), flag])
    return buf.getvalue()
