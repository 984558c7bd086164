"""Command-line entry point: ``umst-net <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 validation failure
(bad input file or trace violations), 3 sweep finished with failed cells.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io as fio
from .city import DOWNTOWN_BBOX, SyntheticCityConfig, generate_synthetic_city
from .errors import FormatError, InvalidConfigError, InvalidInputError, UmstNetError
from .graph import build_complete_graph
from .metrics import compute_metrics
from .sim import FleetConfig, run_simulation, validate_trace
from .sweep import PLOT_KINDS, SweepConfig, emit_plot_data, run_sweep
from .umst import UmstConfig, build_umst, edge_frequency_tiers
from .workload import DeadlinePolicy, WorkloadConfig, generate_requests

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_CELLS = 0, 1, 2, 3

log = logging.getLogger("umst_net")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_gen_city(a) -> int:
    cfg = SyntheticCityConfig(
        n_hotspots=a.n, bbox=tuple(a.bbox), placement=a.placement, cell_jitter_fraction=a.jitter, rng_seed=a.seed
    )
    g = build_complete_graph(generate_synthetic_city(cfg), speed_kmh=a.speed)
    _emit(fio.dumps_graph(g), a.out)
    log.info("city: %d hotspots, %d edges", g.n, g.num_edges)
    return EXIT_OK


def cmd_build_umst(a) -> int:
    g = fio.load_graph(a.graph)
    cfg = UmstConfig(k_trees=a.k, drop_rate=a.rho, rng_seed=a.seed, max_resample_attempts=a.max_resample)
    b = build_umst(g, cfg)
    _emit(fio.dumps_backbone(b), a.out)
    tiers = edge_frequency_tiers(b)
    counts = {t.value: sum(1 for x in tiers.values() if x is t) for t in set(tiers.values())}
    log.info("umst: %d of %d edges kept (%.1f%% reduction), tiers %s", b.num_edges, g.num_edges, 100 * b.reduction, counts)
    return EXIT_OK


def _deadline(a) -> DeadlinePolicy:
    if a.deadline == "fixed":
        return DeadlinePolicy.fixed(a.budget)
    return DeadlinePolicy.scaled(a.alpha, a.beta)


def _workload_cfg(a, n: int, seed: int) -> WorkloadConfig:
    return WorkloadConfig(
        horizon_s=a.horizon, total_requests=n, peak_fractions=tuple(a.peaks), sigma_min=a.sigma,
        max_trip_s=a.max_trip, deadline_policy=_deadline(a), rng_seed=seed,
    )


def cmd_gen_workload(a) -> int:
    g = fio.load_graph(a.graph)
    reqs = generate_requests(g, _workload_cfg(a, a.n, a.seed))
    _emit(fio.dumps_requests(reqs), a.out)
    log.info("workload: %d requests", len(reqs))
    return EXIT_OK


def _fleet(a, bundling: bool) -> FleetConfig:
    return FleetConfig(
        vehicle_capacity=a.capacity, dispatch_hold_s=a.hold, spawn_mode=a.spawn, pool_size=a.pool_size,
        bundling_enabled=bundling,
    )


def cmd_simulate(a) -> int:
    backbone = fio.load_backbone(a.backbone)
    reqs = fio.load_requests(a.requests)
    trace = run_simulation(backbone, reqs, _fleet(a, a.bundling == "on"), seed=a.seed)
    out = a.trace or a.out
    _emit(fio.dumps_trace(trace), out)
    report = validate_trace(trace, backbone, reqs)
    if not report.ok:
        for v in report.violations[:20]:
            log.error("%s: %s", v.kind, v.detail)
        return EXIT_INVALID
    if a.report:
        fio.save_report(compute_metrics(trace, reqs, report), Path(a.report))
    return EXIT_OK


def cmd_report(a) -> int:
    trace = fio.load_trace(a.trace)
    reqs = fio.load_requests(a.requests)
    backbone = fio.load_backbone(a.backbone) if a.backbone else fio.trace_backbone(trace)
    validation = validate_trace(trace, backbone, reqs)
    if not validation.ok:
        for v in validation.violations[:20]:
            log.error("%s: %s", v.kind, v.detail)
        return EXIT_INVALID
    baseline = None
    if a.baseline_trace:
        baseline = fio.load_trace(a.baseline_trace)
        base_val = validate_trace(baseline, fio.trace_backbone(baseline), reqs)
        if not base_val.ok:
            log.error("baseline trace has %d violations", len(base_val.violations))
            return EXIT_INVALID
    rep = compute_metrics(trace, reqs, validation, baseline=baseline, label=a.label)
    text = json.dumps({"format_version": fio.FORMAT_VERSION, **rep.to_dict()}, indent=2, sort_keys=True) + "\n"
    _emit(text, a.out)
    return EXIT_OK


def cmd_sweep(a) -> int:
    if a.graph:
        g = fio.load_graph(a.graph)
    else:
        g = build_complete_graph(generate_synthetic_city(SyntheticCityConfig(n_hotspots=a.city_n, rng_seed=a.seed)))
    sweep = SweepConfig(
        k_values=tuple(a.k_values), rho_values=tuple(a.rho_values),
        seeds=tuple(a.seeds) if a.seeds else tuple(range(a.seed, a.seed + a.n_seeds)),
        backbones=tuple(a.backbones), bundling=a.bundling,
    )
    if not a.out:
        raise InvalidConfigError("sweep needs --out DIR")
    res = run_sweep(sweep, g, _workload_cfg(a, a.n, a.seed), Path(a.out), _fleet(a, True), force=a.force, threads=a.threads)
    log.info("sweep: %d reports (%d reused), %d failures", len(res.reports), len(res.skipped), len(res.failures))
    return EXIT_CELLS if res.failures else EXIT_OK


def cmd_plot_data(a) -> int:
    text = Path(a.aggregate).read_text(encoding="utf-8")
    _emit(emit_plot_data(text, a.kind), a.out)
    return EXIT_OK


def _add_workload_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--horizon", type=float, default=3600.0, help="seconds")
    p.add_argument("--peaks", type=float, nargs="+", default=[0.25, 0.75], help="peak positions as horizon fractions")
    p.add_argument("--sigma", type=float, default=10.0, help="peak spread in minutes")
    p.add_argument("--max-trip", type=float, default=1800.0)
    p.add_argument("--deadline", choices=["scaled", "fixed"], default="scaled")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--beta", type=float, default=600.0)
    p.add_argument("--budget", type=float, default=1800.0)


def _add_fleet_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--capacity", type=int, default=5)
    p.add_argument("--hold", type=float, default=30.0, help="dispatch hold window in seconds")
    p.add_argument("--spawn", choices=["on_demand", "fixed_pool"], default="on_demand")
    p.add_argument("--pool-size", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output path (stdout when omitted)")
    common.add_argument("--force", action="store_true")
    common.add_argument("--quiet", action="store_true")

    parser = _Parser(prog="umst-net", description="UMST delivery backbones and bundling simulation")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-city", parents=[common], help="synthetic hotspots -> complete graph JSON")
    p.add_argument("--n", type=int, default=26)
    p.add_argument("--bbox", type=float, nargs=4, default=list(DOWNTOWN_BBOX), metavar=("LAT_MIN", "LAT_MAX", "LON_MIN", "LON_MAX"))
    p.add_argument("--placement", choices=["uniform", "grid"], default="uniform")
    p.add_argument("--jitter", type=float, default=0.5)
    p.add_argument("--speed", type=float, default=30.0, help="fleet speed in km/h")
    p.set_defaults(func=cmd_gen_city)

    p = sub.add_parser("build-umst", parents=[common], help="union of K randomized MSTs")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--max-resample", type=int, default=100)
    p.set_defaults(func=cmd_build_umst)

    p = sub.add_parser("gen-workload", parents=[common], help="request trace CSV")
    p.add_argument("--graph", required=True)
    p.add_argument("--n", type=int, default=9234)
    _add_workload_args(p)
    p.set_defaults(func=cmd_gen_workload)

    p = sub.add_parser("simulate", parents=[common], help="run the delivery simulator")
    p.add_argument("--backbone", required=True)
    p.add_argument("--requests", required=True)
    p.add_argument("--bundling", choices=["on", "off"], default="on")
    p.add_argument("--trace", default=None, help="JSONL trace output")
    p.add_argument("--report", default=None, help="also write a metrics report")
    _add_fleet_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", parents=[common], help="metrics from a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--requests", required=True)
    p.add_argument("--baseline-trace", default=None)
    p.add_argument("--backbone", default=None, help="validate against this backbone instead of the trace header")
    p.add_argument("--label", default="")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", parents=[common], help="grid of backbones x K x rho x seeds")
    p.add_argument("--graph", default=None)
    p.add_argument("--city-n", type=int, default=26)
    p.add_argument("--k-values", type=int, nargs="+", default=[10, 20, 40, 100])
    p.add_argument("--rho-values", type=float, nargs="+", default=[0.1, 0.2, 0.5, 0.7])
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    p.add_argument("--n-seeds", type=int, default=10)
    p.add_argument("--backbones", nargs="+", choices=["clique", "mst", "umst"], default=["clique", "mst", "umst"])
    p.add_argument("--bundling", choices=["on", "off", "both"], default="on")
    p.add_argument("--n", type=int, default=9234, help="requests per cell")
    p.add_argument("--threads", type=int, default=None)
    _add_workload_args(p)
    _add_fleet_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot-data", parents=[common], help="plot-ready CSV from a sweep aggregate")
    p.add_argument("--aggregate", required=True)
    p.add_argument("--kind", required=True, choices=sorted(PLOT_KINDS))
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if a.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        return a.func(a)
    except (FormatError, InvalidInputError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    except (InvalidConfigError, ValueError) as exc:
        log.error("error: %s", exc)
        return EXIT_USAGE
    except (OSError, UmstNetError) as exc:
        log.error("error: %s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
