"""Command-line interface: scenario parsing, simulation, comparison sweeps.

Exit codes: 0 success, 1 validation error, 2 I/O error. Output files are
written atomically (temp file + rename). ``CAAS_LOG`` selects the log level.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from importlib import resources
from pathlib import Path
from typing import Mapping

from .channel import LinkParams
from .constellation import OrbitalShell
from .control import LatLonRect
from .errors import CaasimError, ScenarioError
from .scenario import (
    ControlConfig,
    HandoverConfig,
    PredictionConfig,
    Scenario,
    StandaloneConfig,
)
from . import sim


# ---------------------------------------------------------------------------
# Scenario file parsing
# ---------------------------------------------------------------------------


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _reject_unknown(d: Mapping, allowed: set[str], path: str) -> None:
    for k in d:
        if k not in allowed:
            raise ScenarioError(_join(path, k), "unknown key")


def _get(d: Mapping, key: str, path: str, default=None, required: bool = False):
    if key not in d:
        if required:
            raise ScenarioError(_join(path, key), "missing required key")
        return default
    return d[key]


def _number(value, path: str, lo=None, hi=None, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ScenarioError(path, f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ScenarioError(path, f"must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ScenarioError(path, f"must be <= {hi}, got {value}")
    return int(value) if integer else float(value)


def _string(value, path: str, choices=None) -> str:
    if not isinstance(value, str):
        raise ScenarioError(path, f"expected a string, got {value!r}")
    if choices is not None and value not in choices:
        raise ScenarioError(path, f"must be one of {sorted(choices)}, got {value!r}")
    return value


def _parse_shell(raw, path: str) -> OrbitalShell:
    if not isinstance(raw, dict):
        raise ScenarioError(path, "expected an object")
    allowed = {
        "shell_id", "satellite_count", "plane_count", "inclination_deg",
        "altitude_km", "phasing_factor", "pattern",
    }
    _reject_unknown(raw, allowed, path)
    plane_count = _number(_get(raw, "plane_count", path, required=True), _join(path, "plane_count"), lo=1, integer=True)
    shell = dict(
        shell_id=_string(_get(raw, "shell_id", path, required=True), _join(path, "shell_id")),
        satellite_count=_number(
            _get(raw, "satellite_count", path, required=True), _join(path, "satellite_count"), lo=1, integer=True
        ),
        plane_count=plane_count,
        inclination_deg=_number(
            _get(raw, "inclination_deg", path, required=True), _join(path, "inclination_deg"), lo=0.0, hi=180.0
        ),
        altitude_km=_number(
            _get(raw, "altitude_km", path, required=True), _join(path, "altitude_km"), lo=1e-9
        ),
        phasing_factor=_number(
            _get(raw, "phasing_factor", path, default=1), _join(path, "phasing_factor"), lo=0, integer=True
        ),
    )
    if "pattern" in raw:
        shell["pattern"] = _string(raw["pattern"], _join(path, "pattern"), {"delta", "star"})
    try:
        return OrbitalShell(**shell)
    except (CaasimError, ValueError) as exc:
        raise ScenarioError(path, str(exc)) from exc


def _parse_section(raw, path: str, cls, fields: dict):
    """Build a config dataclass from a dict of {key: (lo, hi, integer/choices)} specs."""
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ScenarioError(path, "expected an object")
    _reject_unknown(raw, set(fields), path)
    kwargs = {}
    for key, spec in fields.items():
        if key not in raw:
            continue
        kind = spec[0]
        if kind == "number":
            kwargs[key] = _number(raw[key], _join(path, key), lo=spec[1], hi=spec[2])
        elif kind == "int":
            kwargs[key] = _number(raw[key], _join(path, key), lo=spec[1], hi=spec[2], integer=True)
        else:
            kwargs[key] = _string(raw[key], _join(path, key), spec[1])
    try:
        return cls(**kwargs)
    except (CaasimError, ValueError) as exc:
        raise ScenarioError(path, str(exc)) from exc


def scenario_from_dict(raw) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("<root>", "scenario must be a JSON object")
    allowed = {
        "name", "seed", "duration_s", "time_step_s", "elevation_mask_deg", "area",
        "ue_count", "demand_mean_bps", "shells", "link", "handover", "control",
        "standalone", "prediction",
    }
    _reject_unknown(raw, allowed, "")

    area_raw = _get(raw, "area", "", required=True)
    if not isinstance(area_raw, dict):
        raise ScenarioError("area", "expected an object")
    _reject_unknown(area_raw, {"lat_min_deg", "lat_max_deg", "lon_min_deg", "lon_max_deg"}, "area")
    area_kwargs = {
        k: _number(_get(area_raw, k, "area", required=True), _join("area", k), lo=-180.0, hi=180.0)
        for k in ("lat_min_deg", "lat_max_deg", "lon_min_deg", "lon_max_deg")
    }
    try:
        area = LatLonRect(**area_kwargs)
    except ValueError as exc:
        raise ScenarioError("area", str(exc)) from exc

    shells_raw = _get(raw, "shells", "", required=True)
    if not isinstance(shells_raw, list) or not shells_raw:
        raise ScenarioError("shells", "expected a non-empty list")
    shells = tuple(_parse_shell(s, f"shells[{i}]") for i, s in enumerate(shells_raw))

    link = _parse_section(
        raw.get("link"), "link", LinkParams,
        {
            "carrier_frequency_hz": ("number", 1.0, None),
            "bandwidth_hz": ("number", 1.0, None),
            "tx_power_dbw": ("number", None, None),
            "sat_antenna_gain_dbi": ("number", None, None),
            "ue_antenna_gain_dbi": ("number", None, None),
            "noise_temperature_k": ("number", 1e-3, None),
            "beamwidth_3db_deg": ("number", 1e-3, 180.0),
            "spectral_efficiency_cap": ("number", 1e-3, None),
            "excess_loss_db": ("number", 0.0, None),
        },
    )
    handover_cfg = _parse_section(
        raw.get("handover"), "handover", HandoverConfig,
        {
            "alpha": ("number", 0.0, 1.0),
            "beta": ("number", 0.0, 1.0),
            "min_overlap_s": ("number", 0.0, None),
            "guard_s": ("number", 0.0, None),
            "execution_s": ("number", 0.0, None),
            "pingpong_window_s": ("number", 0.0, None),
        },
    )
    control_cfg = _parse_section(
        raw.get("control"), "control", ControlConfig,
        {
            "max_ues_per_region": ("int", 1, None),
            "max_region_depth": ("int", 0, None),
            "slice_s": ("number", 1e-3, None),
            "sc_validity_s": ("number", 1e-3, None),
            "capacity_per_satellite": ("int", 1, None),
            "altitude_preference": ("number", 1.0, None),
            "target_load_per_satellite": ("int", 1, None),
        },
    )
    standalone_cfg = _parse_section(
        raw.get("standalone"), "standalone", StandaloneConfig,
        {
            "hysteresis_db": ("number", 0.0, None),
            "time_to_trigger_steps": ("int", 1, None),
            "grid_beams": ("int", 1, None),
        },
    )
    prediction_cfg = _parse_section(
        raw.get("prediction"), "prediction", PredictionConfig,
        {
            "history_capacity": ("int", 1, None),
            "temperature_s": ("number", 1e-9, None),
            "predictor": ("string", {"attention", "ephemeris"}),
        },
    )

    try:
        return Scenario(
            shells=shells,
            area=area,
            ue_count=_number(_get(raw, "ue_count", "", required=True), "ue_count", lo=0, integer=True),
            seed=_number(_get(raw, "seed", "", required=True), "seed", integer=True),
            name=_string(_get(raw, "name", "", default="scenario"), "name"),
            duration_s=_number(_get(raw, "duration_s", "", default=600.0), "duration_s", lo=0.0),
            time_step_s=_number(_get(raw, "time_step_s", "", default=1.0), "time_step_s", lo=1e-6),
            elevation_mask_deg=_number(
                _get(raw, "elevation_mask_deg", "", default=10.0), "elevation_mask_deg", lo=0.0, hi=89.999
            ),
            demand_mean_bps=_number(
                _get(raw, "demand_mean_bps", "", default=20e6), "demand_mean_bps", lo=1.0
            ),
            link=link,
            handover=handover_cfg,
            control=control_cfg,
            standalone=standalone_cfg,
            prediction=prediction_cfg,
        )
    except (CaasimError, ValueError) as exc:
        raise ScenarioError("<root>", str(exc)) from exc


def parse_scenario(path) -> Scenario:
    """Load and validate a scenario file; unknown keys are rejected."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("<root>", f"invalid JSON: {exc}") from exc
    return scenario_from_dict(raw)


def bundled_scenario_path(name: str = "leo_dual_shell") -> Path:
    """Filesystem path of a scenario shipped with the package."""
    return Path(resources.files("caasim").joinpath(f"scenarios/{name}.json"))


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _atomic_write(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_sweep_expr(expr: str) -> list[int]:
    """Parse "start..end:step" (inclusive) into a UE-count list."""
    try:
        span, step = expr.split(":") if ":" in expr else (expr, "1")
        lo_s, hi_s = span.split("..") if ".." in span else (span, span)
        lo, hi, inc = int(lo_s), int(hi_s), int(step)
    except ValueError as exc:
        raise ScenarioError("--ues", f"malformed sweep expression {expr!r}") from exc
    if inc <= 0 or hi < lo:
        raise ScenarioError("--ues", f"malformed sweep expression {expr!r}")
    return list(range(lo, hi + 1, inc))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_coverage(args) -> int:
    scenario = _load_scenario(args)
    world = sim.World(scenario)
    windows = [w for ws in world.windows_by_pair.values() for w in ws]
    windows.sort(key=lambda w: (w.ground_point_id, w.satellite_id, w.start_s))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["satellite_id", "ue_id", "start_s", "end_s", "peak_elevation_deg"])
    for w in windows:
        writer.writerow([w.satellite_id, w.ground_point_id, w.start_s, w.end_s, w.peak_elevation_deg])
    out = Path(args.out)
    _atomic_write(out, buf.getvalue())
    print(f"wrote {len(windows)} windows to {out}")
    return 0


def _cmd_simulate(args) -> int:
    scenario = _load_scenario(args)
    out_dir = Path(args.out_dir)
    alloc_rows: list[tuple] = []
    sink = None
    if args.verbose:
        sink = lambda t, sat, ue, p, s, r: alloc_rows.append((t, sat, ue, p, s, r))
    report, events = sim.run(scenario, args.strategy, alloc_sink=sink)
    _atomic_write(out_dir / "metrics.json", report.to_json())
    _atomic_write(out_dir / "events.jsonl", events.to_jsonl())
    if args.verbose:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time_s", "sat_id", "ue_id", "power_w", "sinr_db", "rate_bps"])
        writer.writerows(alloc_rows)
        _atomic_write(out_dir / "allocations.csv", buf.getvalue())
    print(
        f"{args.strategy}: atr={report.atr_bps / 1e6:.2f} Mbps, "
        f"ho_per_ue={report.ho_per_ue:.2f}, signaling={report.signaling_messages}"
    )
    return 0


def _cmd_compare(args) -> int:
    scenario = _load_scenario(args)
    ue_counts = _parse_sweep_expr(args.ues)
    seeds = [scenario.seed + i for i in range(args.seeds)]
    rows = sim.sweep(scenario, ue_counts, seeds)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "ue_count", "strategy", "atr_mean_bps", "atr_std",
            "ho_per_ue_mean", "ho_per_ue_std", "pingpong_mean", "signaling_mean",
        ]
    )
    for r in rows:
        writer.writerow(
            [
                r.ue_count, r.strategy, r.atr_mean_bps, r.atr_std,
                r.ho_per_ue_mean, r.ho_per_ue_std, r.pingpong_mean, r.signaling_mean,
            ]
        )
    _atomic_write(Path(args.out), buf.getvalue())
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_hgm(args) -> int:
    scenario = _load_scenario(args)
    graph, paths = sim.hgm_for_ue(scenario, args.ue)
    print(f"handover graph for {args.ue}: {len(graph.windows)} windows, {len(graph.edges)} edges")
    for v, w in enumerate(graph.windows, start=1):
        print(
            f"  v{v}: {w.satellite_id} [{w.start_s:.1f}, {w.end_s:.1f}] "
            f"peak {w.peak_elevation_deg:.1f} deg"
        )
    for i, p in enumerate(paths):
        hops = " -> ".join(f"{sat}@{sw:.1f}s" for sat, sw in p.sequence)
        print(f"  path[{i}] (benefit {p.cumulative_benefit:.4f}, {p.handover_count} HOs): {hops}")
    if args.dot:
        _atomic_write(Path(args.dot), _to_dot(graph, paths))
        print(f"wrote DOT graph to {args.dot}")
    return 0


def _to_dot(graph, paths) -> str:
    chosen = set()
    for p in paths:
        verts = [0]
        for sat, sw in p.sequence:
            for v in range(1, len(graph.windows) + 1):
                w = graph.window_of(v)
                if w.satellite_id == sat and w.start_s - 1e-6 <= sw <= w.end_s + 1e-6:
                    verts.append(v)
                    break
        chosen.update(zip(verts, verts[1:]))
    lines = ["digraph hgm {", '  0 [label="source", shape=box];']
    for v, w in enumerate(graph.windows, start=1):
        lines.append(f'  {v} [label="{w.satellite_id}\\n[{w.start_s:.0f},{w.end_s:.0f}]"];')
    for e in graph.edges:
        style = ", color=red, penwidth=2" if (e.src, e.dst) in chosen else ""
        lines.append(f'  {e.src} -> {e.dst} [label="{e.benefit:.3f}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _load_scenario(args) -> Scenario:
    scenario = parse_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace

        scenario = replace(scenario, seed=args.seed)
    return scenario


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caasim",
        description="Multi-constellation DS2D connectivity simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    p_cov = sub.add_parser("coverage", help="export coverage windows as CSV")
    add_common(p_cov)
    p_cov.add_argument("--out", default="windows.csv", help="output CSV path (default: windows.csv)")
    p_cov.set_defaults(func=_cmd_coverage)

    p_sim = sub.add_parser("simulate", help="run one strategy, write metrics + events")
    add_common(p_sim)
    p_sim.add_argument(
        "--strategy", choices=list(sim.STRATEGIES), default="caas",
        help="connectivity strategy (default: caas)",
    )
    p_sim.add_argument("--out-dir", default=".", help="output directory (default: .)")
    p_sim.add_argument(
        "--verbose", action="store_true", help="also dump per-beam allocations.csv"
    )
    p_sim.set_defaults(func=_cmd_simulate)

    p_cmp = sub.add_parser("compare", help="strategy comparison over a UE sweep")
    add_common(p_cmp)
    p_cmp.add_argument(
        "--ues", default="20..120:20", help="UE sweep 'start..end:step' (default: 20..120:20)"
    )
    p_cmp.add_argument("--seeds", type=int, default=5, help="seeds per point (default: 5)")
    p_cmp.add_argument("--out", default="compare.csv", help="output CSV path (default: compare.csv)")
    p_cmp.set_defaults(func=_cmd_compare)

    p_hgm = sub.add_parser("hgm", help="print one UE's handover graph and chosen path")
    add_common(p_hgm)
    p_hgm.add_argument("--ue", required=True, help="UE id, e.g. ue-000")
    p_hgm.add_argument("--dot", default=None, help="also write a Graphviz DOT file")
    p_hgm.set_defaults(func=_cmd_hgm)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CAAS_LOG", "WARNING").upper())
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else 1
    try:
        return args.func(args)
    except (ScenarioError, CaasimError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
