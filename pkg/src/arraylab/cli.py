"""Command-line front end: ``arraylab {geometry,pattern,compare,doa}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .beamforming import (
    DEFAULT_GRID,
    PatternError,
    ScanGrid,
    composite_pattern,
    pattern_csv,
    pattern_json,
    subarrays_csv,
)
from .geometry import ArrayKind, GeometryError, build_geometry, load_mra_file
from .metrics import MainLobeError, format_params, pattern_metrics, savings_ratio_of
from .simulation import (
    RNG_NAME,
    SceneError,
    detect_peaks,
    doa_spectrum,
    evaluate_detection,
    generate_snapshots,
    spectrum_csv,
    uniform_scene,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INVARIANT = 3

GRID_ENV = "ARRAYLAB_GRID"

PARAM_FLAGS = {"M": "m", "N": "n", "P": "p", "Q": "q", "K": "k", "c": "c"}

PRESETS = {
    # the five 32-sensor configurations compared in the text
    "l32": [
        ("sca", {"M": 3, "N": 4, "P": 4, "Q": 9}),
        ("ecsa", {"M": 2}),
        ("mcsa", {"M": 8}),
        ("csa", {"M": 16, "N": 17}),
        ("nsa", {"M": 16, "N": 17}),
    ],
    "ecsa-sweep": [("ecsa", {"M": m}) for m in range(2, 9)],
    "savings": (
        [("ecsa", {"M": m}) for m in range(2, 9)]
        + [("csa", {"M": m, "N": m + 1}) for m in range(2, 9)]
        + [("mcsa", {"M": m}) for m in range(2, 9)]
        + [("nsa", {"M": m, "N": m + 1}) for m in range(2, 9)]
        + [
            ("sca", {"M": m, "N": m + 1, "P": p, "Q": q})
            for m in (2, 3, 4)
            for p in range(2, 7)
            for q in range(2, 7)
        ]
    ),
}


class UsageError(Exception):
    """Invalid command-line input; maps to exit code 2."""


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(text: str, out):
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _add_array_args(p):
    g = p.add_argument_group("array")
    g.add_argument("--kind", choices=[k.value for k in ArrayKind], help="array family")
    for flag in ("m", "n", "p", "q", "k"):
        g.add_argument(f"--{flag}", type=int, default=None)
    g.add_argument("--c", type=float, default=None, help="ECSA extension factor (default 6.5)")
    g.add_argument("--positions", default=None, help="MRA positions, comma separated")
    g.add_argument("--mra-file", default=None, help="MRA positions file (JSON list or one per line)")


def _add_common(p, grid=True):
    if grid:
        p.add_argument("--grid", type=int, default=None, help=f"scan grid points (default {DEFAULT_GRID}, env {GRID_ENV})")
        p.add_argument("--steer", type=float, default=0.0, help="steer direction cosine u0")
    p.add_argument("--out", default=None, help="output path (stdout when omitted)")
    p.add_argument("--format", choices=["csv", "json"], default=None)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arraylab", description="Sparse linear array toolkit")
    parser.add_argument("--version", action="version", version=f"arraylab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geometry", help="construct an array and print its geometry JSON")
    _add_array_args(p)
    _add_common(p, grid=False)

    p = sub.add_parser("pattern", help="evaluate a composite beampattern")
    _add_array_args(p)
    _add_common(p)
    p.add_argument("--with-subarrays", action="store_true", help="also emit each subarray response")

    p = sub.add_parser("compare", help="sensor-savings table with measured MLW/PSL")
    _add_array_args(p)
    _add_common(p)
    p.add_argument("--specs", default=None, help="JSON list of {kind, params}")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--no-measure", action="store_true", help="skip pattern measurements")

    p = sub.add_parser("doa", help="run a direction-of-arrival experiment")
    _add_array_args(p)
    _add_common(p)
    p.add_argument("--specs", default=None, help="JSON list of {kind, params}; --out is then a directory")
    p.add_argument("--sources", type=int, default=54)
    p.add_argument("--span", type=float, default=0.95, help="sources evenly spaced over [-span, span]")
    p.add_argument("--snapshots", type=int, default=100)
    p.add_argument("--snr-db", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=None, help="matching tolerance in u (default 2/equivalent ULA size)")
    p.add_argument("--report", default=None, help="detection report JSON path")
    return parser


def resolve_grid(args) -> int:
    if args.grid is not None:
        res = args.grid
        source = "--grid"
    elif os.environ.get(GRID_ENV):
        try:
            res = int(os.environ[GRID_ENV])
        except ValueError:
            raise UsageError(f"{GRID_ENV} must be an integer, got {os.environ[GRID_ENV]!r}") from None
        source = GRID_ENV
    else:
        return DEFAULT_GRID
    if res < 2:
        raise UsageError(f"{source} must be >= 2, got {res}")
    return res


def _validate_steer(args):
    if not -1.0 <= args.steer <= 1.0:
        raise UsageError(f"--steer must lie in [-1, 1], got {args.steer}")


def array_spec_from_args(args) -> tuple:
    if args.kind is None:
        raise UsageError("--kind is required")
    kind = ArrayKind(args.kind)
    if kind is ArrayKind.MRA:
        if args.positions and args.mra_file:
            raise UsageError("give only one of --positions and --mra-file")
        if args.positions:
            try:
                pos = [int(x) for x in args.positions.split(",") if x.strip()]
            except ValueError:
                raise UsageError(f"--positions must be comma-separated integers, got {args.positions!r}") from None
            return kind.value, {"positions": pos}
        if args.mra_file:
            return kind.value, {"mra_file": args.mra_file}
        return kind.value, {}
    params = {}
    for name, flag in PARAM_FLAGS.items():
        val = getattr(args, flag)
        if val is not None:
            params[name] = val
    return kind.value, params


def make_geometry(kind: str, params: dict):
    try:
        if kind == "mra" and "mra_file" in params:
            return load_mra_file(params["mra_file"])
        return build_geometry(kind, params)
    except GeometryError as exc:
        msg = str(exc)
        for name, flag in PARAM_FLAGS.items():
            msg = msg.replace(f"parameter(s) {name}", f"parameter(s) --{flag}")
        raise UsageError(msg) from None
    except OSError as exc:
        raise UsageError(f"--mra-file: {exc}") from None


def load_specs(path) -> list:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"--specs: {exc}") from None
    if not isinstance(data, list) or not data:
        raise UsageError("--specs must hold a non-empty JSON list")
    specs = []
    for i, item in enumerate(data):
        if not isinstance(item, dict) or "kind" not in item:
            raise UsageError(f"--specs entry {i} needs a 'kind' field")
        specs.append((item["kind"], dict(item.get("params", {}))))
    return specs


def metadata(args, **extra) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    meta = {"arraylab_version": __version__, "config": cfg}
    meta.update(extra)
    return meta


def _header(meta) -> list:
    return [json.dumps(meta, sort_keys=True, default=str)]


def cmd_geometry(args) -> int:
    kind, params = array_spec_from_args(args)
    geom = make_geometry(kind, params)
    doc = geom.to_dict()
    doc["metadata"] = metadata(args, geometry_metadata=dict(geom.metadata))
    emit(json.dumps(doc, indent=2, default=str) + "\n", args.out)
    return EXIT_OK


def cmd_pattern(args) -> int:
    _validate_steer(args)
    res = resolve_grid(args)
    kind, params = array_spec_from_args(args)
    geom = make_geometry(kind, params)
    pattern = composite_pattern(geom, ScanGrid.uniform(res), args.steer)
    meta = metadata(args, grid_resolution=res, combiner=pattern.combiner.value, db_scale=pattern.db_scale)
    if args.format == "json":
        emit(pattern_json(pattern, meta, with_subarrays=args.with_subarrays) + "\n", args.out)
        return EXIT_OK
    emit(pattern_csv(pattern, _header(meta)), args.out)
    if args.with_subarrays and pattern.responses and pattern.responses[0].subarray is not None:
        text = subarrays_csv(pattern, _header(meta))
        if args.out:
            out = Path(args.out)
            atomic_write(out.with_name(out.stem + ".subarrays" + (out.suffix or ".csv")), text)
        else:
            sys.stdout.write(text)
    return EXIT_OK


COMPARE_COLUMNS = [
    "family", "params", "num_sensors", "equivalent_ula", "ratio", "matches_psl",
    "count_ratio", "consistent", "mlw", "psl_db",
]


def cmd_compare(args) -> int:
    _validate_steer(args)
    res = resolve_grid(args)
    sources = [args.specs is not None, args.preset is not None, args.kind is not None]
    if sum(sources) != 1:
        raise UsageError("give exactly one of --specs, --preset or --kind")
    if args.specs:
        specs = load_specs(args.specs)
    elif args.preset:
        specs = PRESETS[args.preset]
    else:
        specs = [array_spec_from_args(args)]

    geoms = [make_geometry(kind, dict(params)) for kind, params in specs]
    grid = None if args.no_measure else ScanGrid.uniform(res)
    rows, mismatches = [], []
    for geom in geoms:
        sr = savings_ratio_of(geom)
        mlw = psl = ""
        if grid is not None:
            try:
                pm = pattern_metrics(composite_pattern(geom, grid, args.steer))
                mlw, psl = repr(pm.main_lobe_width), repr(pm.psl_db)
            except MainLobeError:
                mlw = psl = "unresolved"
        shown = sr.formula_ratio if sr.formula_ratio is not None else sr.ratio
        rows.append({
            "family": geom.kind.value,
            "params": format_params(geom.params),
            "num_sensors": sr.num_sensors,
            "equivalent_ula": sr.equivalent_ula_sensors if sr.equivalent_ula_sensors is not None else "undefined",
            "ratio": str(shown) if shown is not None else "undefined",
            "matches_psl": "yes" if sr.matches_ula_psl else "no",
            "count_ratio": str(sr.ratio) if sr.ratio is not None else "undefined",
            "consistent": "yes" if sr.consistent else "no",
            "mlw": mlw,
            "psl_db": psl,
        })
        if not sr.consistent:
            mismatches.append(f"{geom.kind.value}({format_params(geom.params)}): "
                              f"formula {sr.formula_ratio} != counted {sr.ratio}")

    meta = metadata(args, grid_resolution=res)
    if args.format == "json":
        emit(json.dumps({"metadata": meta, "rows": rows}, indent=2, default=str) + "\n", args.out)
    else:
        buf = io.StringIO()
        for line in _header(meta):
            buf.write(f"# {line}\n")
        w = csv.DictWriter(buf, fieldnames=COMPARE_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        emit(buf.getvalue(), args.out)
    if mismatches:
        for m in mismatches:
            print(f"arraylab: invariant violation: {m}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _run_doa(args, geom, res):
    scene = uniform_scene(args.sources, args.span, seed=args.seed)
    snaps = generate_snapshots(geom, scene, args.snapshots, args.snr_db, seed=args.seed)
    spectrum = doa_spectrum(geom, snaps, ScanGrid.uniform(res))
    tol = args.tol
    if tol is None:
        eq = geom.equivalent_ula_sensors or (geom.aperture + 1)
        tol = 2.0 / eq
    k = max(args.sources, 1)
    peaks = detect_peaks(spectrum, k)
    report = evaluate_detection(peaks, scene, tol, seed=args.seed)
    return spectrum, peaks, report


def _validate_doa(args):
    if args.sources < 0:
        raise UsageError(f"--sources must be >= 0, got {args.sources}")
    if args.snapshots < 1:
        raise UsageError(f"--snapshots must be >= 1, got {args.snapshots}")
    if not 0 < args.span < 1:
        raise UsageError(f"--span must lie in (0, 1), got {args.span}")
    if args.tol is not None and args.tol <= 0:
        raise UsageError(f"--tol must be positive, got {args.tol}")
    if math.isnan(args.snr_db):
        raise UsageError("--snr-db must be a number")


def cmd_doa(args) -> int:
    _validate_doa(args)
    res = resolve_grid(args)
    if args.specs:
        if args.kind is not None:
            raise UsageError("give either --specs or --kind, not both")
        if not args.out:
            raise UsageError("--out (a directory) is required with --specs")
        specs = load_specs(args.specs)
    else:
        specs = [array_spec_from_args(args)]
    geoms = [make_geometry(kind, dict(params)) for kind, params in specs]

    for geom in geoms:
        try:
            spectrum, peaks, report = _run_doa(args, geom, res)
        except SceneError as exc:
            raise UsageError(str(exc)) from None
        meta = metadata(args, grid_resolution=res, rng=RNG_NAME, array=geom.to_dict(),
                        peaks_found=len(peaks.peaks), shortfall=peaks.shortfall)
        report_doc = {**report.to_dict(), "metadata": meta}
        report_text = json.dumps(report_doc, indent=2, default=str) + "\n"
        if args.specs:
            stem = f"{geom.kind.value}_{format_params(geom.params).replace(';', '_').replace('=', '')}"
            out_dir = Path(args.out)
            atomic_write(out_dir / f"{stem}.csv", spectrum_csv(spectrum, _header(meta)))
            atomic_write(out_dir / f"{stem}.detection.json", report_text)
            print(f"{stem}: {report.hits}/{report.hits + report.misses} hits")
            continue
        if args.out:
            atomic_write(args.out, spectrum_csv(spectrum, _header(meta)))
            report_path = args.report or str(Path(args.out).with_suffix(".detection.json"))
            atomic_write(report_path, report_text)
        elif args.report:
            atomic_write(args.report, report_text)
            sys.stdout.write(spectrum_csv(spectrum, _header(meta)))
        else:
            sys.stdout.write(report_text)
    return EXIT_OK


COMMANDS = {"geometry": cmd_geometry, "pattern": cmd_pattern, "compare": cmd_compare, "doa": cmd_doa}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, GeometryError, PatternError, SceneError) as exc:
        print(f"arraylab: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except MainLobeError as exc:
        print(f"arraylab: error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
