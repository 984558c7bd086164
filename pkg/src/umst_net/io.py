"""Readers and writers for graph, backbone, request, trace and report files.

Every format carries ``format_version``; readers reject unknown major
versions. JSON writers put one record per line so loader diagnostics can
point at a line number.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable

from .errors import FormatError, InvalidInputError, UmstNetError
from .graph import Edge, Hotspot, HotspotGraph
from .metrics import SimReport
from .sim import SimTrace, TraceEvent
from .umst import Backbone, UmstBackbone, UmstConfig
from .workload import DeliveryRequest

FORMAT_VERSION = "1.0"
REQUEST_FIELDS = ["id", "pickup", "dropoff", "earliest_pickup_s", "deadline_s"]


def _check_version(found: Any, where: str) -> None:
    if found is None:
        raise FormatError(f"{where}: missing format_version")
    major = str(found).split(".")[0]
    if major != FORMAT_VERSION.split(".")[0]:
        raise FormatError(f"{where}: unsupported format_version {found!r} (expected {FORMAT_VERSION})")


def _array_element_lines(text: str, key: str) -> list[int]:
    """1-based line of each element start in the top-level array ``key``."""
    lines: list[int] = []
    depth = 0
    in_str = False
    esc = False
    line = 1
    target_depth = None
    last_string = None
    str_start = 0
    pending_key = None
    expect_elem = False
    for i, ch in enumerate(text):
        if ch == "\n":
            line += 1
        if in_str:
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
                last_string = text[str_start:i]
            continue
        if ch == '"':
            if expect_elem:
                lines.append(line)
                expect_elem = False
            in_str = True
            str_start = i + 1
        elif ch == ":":
            if depth == 1:
                pending_key = last_string
        elif ch in "[{":
            if expect_elem:
                lines.append(line)
                expect_elem = False
            depth += 1
            if ch == "[" and depth == 2 and pending_key == key:
                target_depth = depth
                expect_elem = True
        elif ch in "]}":
            if target_depth is not None and depth == target_depth and ch == "]":
                return lines
            depth -= 1
            expect_elem = False
        elif ch == "," and target_depth is not None and depth == target_depth:
            expect_elem = True
        elif not ch.isspace() and expect_elem:
            lines.append(line)
            expect_elem = False
    return lines


def _load_json(path: Path) -> tuple[str, Any]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return text, json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None


def _write_records(fh, head: dict, arrays: dict[str, list[dict]]) -> None:
    fh.write("{\n")
    items = list(head.items())
    for k, v in items:
        fh.write(f"  {json.dumps(k)}: {json.dumps(v, sort_keys=True)},\n")
    names = list(arrays)
    for n_i, name in enumerate(names):
        fh.write(f"  {json.dumps(name)}: [\n")
        rows = arrays[name]
        for i, row in enumerate(rows):
            sep = "," if i < len(rows) - 1 else ""
            fh.write(f"    {json.dumps(row, sort_keys=True)}{sep}\n")
        fh.write("  ]" + ("," if n_i < len(names) - 1 else "") + "\n")
    fh.write("}\n")


def graph_records(g: HotspotGraph, frequency: dict[tuple[int, int], int] | None = None) -> dict[str, list[dict]]:
    hotspots = [{"id": h.id, "lat": h.lat, "lon": h.lon, "tract_label": h.tract_label} for h in g.hotspots]
    edges = []
    for e in g.edges:
        row = {"u": e.u, "v": e.v, "distance_km": e.distance_km, "travel_time_s": e.travel_time_s}
        if frequency is not None:
            row["frequency"] = frequency[e.key]
        edges.append(row)
    return {"hotspots": hotspots, "edges": edges}


def dumps_graph(g: HotspotGraph) -> str:
    buf = io.StringIO()
    _write_records(buf, {"format_version": FORMAT_VERSION}, graph_records(g))
    return buf.getvalue()


def dumps_backbone(b: UmstBackbone) -> str:
    buf = io.StringIO()
    head = {
        "format_version": FORMAT_VERSION,
        "provenance": {"umst_config": b.config.to_dict(), "source_edge_count": b.source_edge_count},
    }
    _write_records(buf, head, graph_records(b.graph, b.edge_frequency))
    return buf.getvalue()


def save_graph(g: HotspotGraph, path: Path) -> None:
    Path(path).write_text(dumps_graph(g), encoding="utf-8")


def save_backbone(b: Backbone, path: Path) -> None:
    text = dumps_backbone(b) if isinstance(b, UmstBackbone) else dumps_graph(b)
    Path(path).write_text(text, encoding="utf-8")


def _parse_graph(text: str, data: Any, where: str) -> tuple[HotspotGraph, dict]:
    if not isinstance(data, dict):
        raise FormatError(f"{where}:1: top level must be an object")
    _check_version(data.get("format_version"), where)
    errors: list[str] = []
    hs_lines = _array_element_lines(text, "hotspots")
    e_lines = _array_element_lines(text, "edges")

    def loc(lines: list[int], i: int) -> str:
        return f"{where}:{lines[i] if i < len(lines) else '?'}"

    hotspots = []
    raw_h = data.get("hotspots")
    if not isinstance(raw_h, list):
        raise FormatError(f"{where}: 'hotspots' must be a list")
    for i, row in enumerate(raw_h):
        try:
            hotspots.append(Hotspot(int(row["id"]), float(row["lat"]), float(row["lon"]), str(row.get("tract_label", ""))))
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"{loc(hs_lines, i)}: hotspots[{i}]: {exc}")
    ids = sorted(h.id for h in hotspots)
    if not errors and ids != list(range(len(ids))):
        errors.append(f"{where}: hotspot ids must be unique and contiguous from 0")

    edges = []
    seen: set[tuple[int, int]] = set()
    freq: dict[tuple[int, int], int] = {}
    raw_e = data.get("edges")
    if not isinstance(raw_e, list):
        raise FormatError(f"{where}: 'edges' must be a list")
    n = len(hotspots)
    for i, row in enumerate(raw_e):
        try:
            e = Edge(int(row["u"]), int(row["v"]), float(row["distance_km"]), float(row["travel_time_s"]))
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"{loc(e_lines, i)}: edges[{i}]: {exc}")
            continue
        if e.u < 0 or e.v >= n:
            errors.append(f"{loc(e_lines, i)}: edges[{i}]: endpoint outside 0..{n - 1}")
            continue
        if e.key in seen:
            errors.append(f"{loc(e_lines, i)}: edges[{i}]: duplicate edge {e.key}")
            continue
        if not (math.isfinite(e.distance_km) and math.isfinite(e.travel_time_s)):
            errors.append(f"{loc(e_lines, i)}: edges[{i}]: non-finite weight")
            continue
        seen.add(e.key)
        edges.append(e)
        if "frequency" in row:
            freq[e.key] = int(row["frequency"])
    if errors:
        raise FormatError("\n".join(errors))
    try:
        g = HotspotGraph(hotspots, edges)
    except InvalidInputError as exc:
        raise FormatError(f"{where}: {exc}") from None
    return g, {"frequency": freq, "provenance": data.get("provenance")}


def load_graph(path: Path) -> HotspotGraph:
    text, data = _load_json(path)
    return _parse_graph(text, data, str(path))[0]


def load_backbone(path: Path) -> Backbone:
    """A UMST backbone if the file carries provenance, else a plain graph."""
    text, data = _load_json(path)
    g, extra = _parse_graph(text, data, str(path))
    prov = extra["provenance"]
    if not prov:
        return g
    freq = extra["frequency"]
    if set(freq) != {e.key for e in g.edges}:
        raise FormatError(f"{path}: every backbone edge needs a frequency")
    cfg = UmstConfig.from_dict(prov["umst_config"])
    bad = [k for k, c in freq.items() if not 1 <= c <= cfg.k_trees]
    if bad:
        raise FormatError(f"{path}: frequencies outside [1, {cfg.k_trees}] for edges {bad[:5]}")
    return UmstBackbone(g, dict(sorted(freq.items())), cfg, int(prov.get("source_edge_count", 0)))


def dumps_requests(requests: Iterable[DeliveryRequest]) -> str:
    buf = io.StringIO()
    buf.write(f"# format_version: {FORMAT_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REQUEST_FIELDS)
    for r in requests:
        w.writerow([r.id, r.pickup, r.dropoff, repr(r.earliest_pickup_s), repr(r.deadline_s)])
    return buf.getvalue()


def save_requests(requests: Iterable[DeliveryRequest], path: Path) -> None:
    Path(path).write_text(dumps_requests(requests), encoding="utf-8")


def load_requests(path: Path) -> list[DeliveryRequest]:
    out = []
    version = None
    with open(path, newline="", encoding="utf-8") as fh:
        body = []
        for lineno, line in enumerate(fh, 1):
            if line.startswith("#"):
                if "format_version" in line:
                    version = line.split(":", 1)[1].strip()
                continue
            body.append((lineno, line))
    if version is not None:
        _check_version(version, str(path))
    reader = csv.reader([line for _, line in body])
    header = next(reader, None)
    if header != REQUEST_FIELDS:
        raise FormatError(f"{path}: expected header {','.join(REQUEST_FIELDS)}, got {header}")
    for (lineno, _), row in zip(body[1:], reader):
        try:
            out.append(DeliveryRequest(int(row[0]), int(row[1]), int(row[2]), float(row[3]), float(row[4])))
        except (IndexError, ValueError, UmstNetError) as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return out


def _event_record(ev: TraceEvent) -> dict:
    rec = {"t": ev.t, "kind": ev.kind, "vehicle": ev.vehicle, "hotspot": ev.hotspot, "requests": list(ev.requests)}
    if ev.to is not None:
        rec["to"] = ev.to
    if ev.distance_km is not None:
        rec["distance_km"] = ev.distance_km
    if ev.success is not None:
        rec["success"] = ev.success
    return rec


def dumps_trace(trace: SimTrace) -> str:
    head = {
        "kind": "header",
        "format_version": FORMAT_VERSION,
        "requests": list(trace.requests),
        "capacity": trace.capacity,
        "bundling_enabled": trace.bundling_enabled,
        "meta": trace.meta,
    }
    lines = [json.dumps(head, sort_keys=True)]
    lines.extend(json.dumps(_event_record(ev), sort_keys=True) for ev in trace.events)
    return "\n".join(lines) + "\n"


def save_trace(trace: SimTrace, path: Path) -> None:
    Path(path).write_text(dumps_trace(trace), encoding="utf-8")


def load_trace(path: Path) -> SimTrace:
    head = None
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None
            if rec.get("kind") == "header":
                _check_version(rec.get("format_version"), f"{path}:{lineno}")
                head = rec
                continue
            try:
                events.append(
                    TraceEvent(
                        float(rec["t"]), str(rec["kind"]), int(rec["vehicle"]), int(rec["hotspot"]),
                        tuple(int(r) for r in rec["requests"]), rec.get("to"), rec.get("distance_km"), rec.get("success"),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: bad event record: {exc}") from None
    if head is None:
        raise FormatError(f"{path}: missing header record")
    return SimTrace.from_events(head["requests"], events, int(head["capacity"]), bool(head["bundling_enabled"]), head.get("meta", {}))


def trace_backbone(trace: SimTrace, hotspots: Iterable[Hotspot] | None = None) -> HotspotGraph:
    """Backbone graph recorded in a trace header (coordinates are placeholders)."""
    n = int(trace.meta["n_hotspots"])
    hs = list(hotspots) if hotspots is not None else [Hotspot(i, 0.0, 0.0) for i in range(n)]
    return HotspotGraph(hs, [Edge(int(u), int(v), float(d), float(t)) for u, v, d, t in trace.meta["backbone_edges"]])


def save_report(report: SimReport, path: Path) -> None:
    data = {"format_version": FORMAT_VERSION, **report.to_dict()}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_report(path: Path) -> SimReport:
    _, data = _load_json(path)
    _check_version(data.get("format_version"), str(path))
    return SimReport.from_dict(data)
