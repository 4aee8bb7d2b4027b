"""Command-line front door: build / calibrate / validate / optimize / evaluate / synth.

Every run writes a manifest (command, inputs, overrides, seed, version) into
the output directory before any result file, and all outputs are
deterministic given (inputs, seed): dB values are printed with 4 decimals and
JSON keys are sorted, so reruns are byte-identical.

Exit codes: 0 success, 2 input error, 3 computation error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import AirtwinError, InputError
from .interference import NoiseModel, build_sinr_field, export_sinr_csv
from .measurements import load_measurements, save_measurements
from .optimizer import ObjectiveWeights, greedy_optimize, save_trace
from .report import (
    DEFAULT_HEATMAP_ALTITUDES_M,
    compare_report,
    coverage_ratios,
    difference_heatmap,
    export_heatmap_csv,
    save_json_report,
)
from .scene import (
    BeamAssignment,
    build_voxel_grid,
    load_assignment,
    save_assignment,
    scene_from_dict,
)
from .spectrum import TwinModel, build_field, calibrate_offset, export_field_csv
from .synth import helix_trajectory, lawnmower_trajectory, synthesize_measurements
from .validation import (
    DEFAULT_LAYER_HEIGHT_M,
    KrigingPredictor,
    NearestNeighborPredictor,
    TwinPredictor,
    run_validation,
    save_validation_report,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPUTE = 3


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise InputError(f"--set expects key=value, got '{text}'")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _apply_override(doc: dict, dotted_key: str, value) -> None:
    parts = dotted_key.split(".")
    node = doc
    for part in parts[:-1]:
        if isinstance(node, list):
            node = node[int(part)]
        elif part in node:
            node = node[part]
        else:
            raise InputError(f"--set path '{dotted_key}' not found at '{part}'")
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def _load_scene_with_overrides(path: str, overrides: list[str]):
    if not os.path.exists(path):
        raise InputError(f"scene file not found: {path}")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    pairs = [_parse_override(o) for o in overrides]
    for key, value in pairs:
        _apply_override(doc, key, value)
    scene = scene_from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))
    return scene, dict(pairs)


def _write_manifest(out_dir: str, command: str, args: argparse.Namespace,
                    overrides: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "command": command,
        "tool": "airtwin",
        "version": __version__,
        "seed": getattr(args, "seed", 0),
        "inputs": {k: getattr(args, k) for k in
                   ("scene", "assignment", "initial", "measurements", "mapping", "compare_to")
                   if getattr(args, k, None) is not None},
        "overrides": overrides,
        "out_dir": out_dir,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _assignment_for(scene, path: str | None) -> BeamAssignment:
    if path is None:
        return BeamAssignment.baseline(scene)
    if not os.path.exists(path):
        raise InputError(f"assignment file not found: {path}")
    assignment = load_assignment(path)
    assignment.validate_for(scene, require_lattice=False)
    return assignment


def _measurements_for(args, scene):
    if not os.path.exists(args.measurements):
        raise InputError(f"measurement file not found: {args.measurements}")
    return load_measurements(args.measurements, mapping=args.mapping)


def _fields_for(scene, assignment, offset_db, threads, activity_factor):
    grid = build_voxel_grid(scene.airspace)
    field = build_field(scene, grid, assignment, offset_db, threads=threads)
    sinr = build_sinr_field(field, NoiseModel.from_radio(scene.radio), activity_factor)
    return grid, field, sinr


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------
def cmd_build(args) -> int:
    scene, overrides = _load_scene_with_overrides(args.scene, args.set)
    assignment = _assignment_for(scene, args.assignment)
    _write_manifest(args.out, "build", args, overrides)
    _, field, sinr = _fields_for(scene, assignment, args.offset_db, args.threads,
                                 args.activity_factor)
    with open(os.path.join(args.out, "field.csv"), "w") as fh:
        export_field_csv(field, fh)
    with open(os.path.join(args.out, "sinr.csv"), "w") as fh:
        export_sinr_csv(sinr, fh)
    print(f"wrote field.csv and sinr.csv for {field.grid.count} voxels "
          f"x {len(field.cell_ids)} cells in {args.out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    scene, overrides = _load_scene_with_overrides(args.scene, args.set)
    assignment = _assignment_for(scene, args.assignment)
    measurements = _measurements_for(args, scene)
    _write_manifest(args.out, "calibrate", args, overrides)
    model = TwinModel(scene, assignment, offset_db=0.0)
    cal = calibrate_offset(model.predict_set(measurements), measurements)
    save_json_report({
        "offset_db": round(cal.offset_db, 4),
        "residual_rmse_db": round(cal.residual_rmse_db, 4),
        "n_samples": cal.n_samples,
    }, os.path.join(args.out, "calibration.json"))
    print(f"offset {cal.offset_db:.4f} dB, residual RMSE {cal.residual_rmse_db:.4f} dB "
          f"over {cal.n_samples} samples")
    return EXIT_OK


def cmd_validate(args) -> int:
    scene, overrides = _load_scene_with_overrides(args.scene, args.set)
    assignment = _assignment_for(scene, args.assignment)
    measurements = _measurements_for(args, scene)
    _write_manifest(args.out, "validate", args, overrides)
    predictors = {
        "twin_offset": TwinPredictor(scene, assignment),
        "kriging": KrigingPredictor(args.layer_height),
        "nearest_neighbor": NearestNeighborPredictor(),
    }
    report = run_validation(measurements, predictors,
                            train_fraction=args.train_fraction, n_folds=args.folds)
    save_validation_report(report, os.path.join(args.out, "validation_report.json"))
    for name, value in sorted(report.pooled_rmse_db.items()):
        print(f"pooled RMSE {name}: {value:.4f} dB")
    return EXIT_OK


def cmd_optimize(args) -> int:
    scene, overrides = _load_scene_with_overrides(args.scene, args.set)
    initial = _assignment_for(scene, args.initial)
    _write_manifest(args.out, "optimize", args, overrides)
    weights = ObjectiveWeights(alpha=args.alpha, beta=args.beta,
                               margin_cap_db=args.margin_cap,
                               epsilon_gain=args.epsilon_gain)
    grid = build_voxel_grid(scene.airspace)
    optimized, trace = greedy_optimize(scene, grid, initial, weights,
                                       activity_factor=args.activity_factor,
                                       offset_db=args.offset_db, threads=args.threads)
    save_assignment(optimized, os.path.join(args.out, "assignment.json"))
    save_trace(trace, os.path.join(args.out, "trace.json"))

    noise = NoiseModel.from_radio(scene.radio)
    field_b = build_field(scene, grid, initial, args.offset_db, threads=args.threads)
    sinr_b = build_sinr_field(field_b, noise, args.activity_factor)
    field_a = build_field(scene, grid, optimized, args.offset_db, threads=args.threads)
    sinr_a = build_sinr_field(field_a, noise, args.activity_factor)
    report = compare_report((field_b, sinr_b), (field_a, sinr_a), scene.thresholds)
    save_json_report(report.to_json_dict(), os.path.join(args.out, "compare_report.json"))
    print(f"objective {trace.initial_objective:.4f} -> {trace.final_objective:.4f}; "
          f"strict RSRP ratio {report.before.ratio_rsrp_strict:.4f} -> "
          f"{report.after.ratio_rsrp_strict:.4f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    scene, overrides = _load_scene_with_overrides(args.scene, args.set)
    assignment = _assignment_for(scene, args.assignment)
    _write_manifest(args.out, "evaluate", args, overrides)
    mask = None
    if args.mask is not None:
        if not os.path.exists(args.mask):
            raise InputError(f"mask file not found: {args.mask}")
        mask = np.loadtxt(args.mask, dtype=np.int64, ndmin=1)
    grid, field, sinr = _fields_for(scene, assignment, args.offset_db, args.threads,
                                    args.activity_factor)
    if args.compare_to is None:
        report = coverage_ratios(field, sinr, scene.thresholds, mask)
        save_json_report(report.to_json_dict(), os.path.join(args.out, "coverage_report.json"))
        print(f"strict RSRP {report.ratio_rsrp_strict:.4f}, "
              f"joint basic {report.ratio_joint_basic:.4f}")
        return EXIT_OK

    other = _assignment_for(scene, args.compare_to)
    field_o = build_field(scene, grid, other, args.offset_db, threads=args.threads)
    sinr_o = build_sinr_field(field_o, NoiseModel.from_radio(scene.radio),
                              args.activity_factor)
    report = compare_report((field_o, sinr_o), (field, sinr), scene.thresholds, mask)
    save_json_report(report.to_json_dict(), os.path.join(args.out, "compare_report.json"))
    for alt in DEFAULT_HEATMAP_ALTITUDES_M:
        try:
            layer_r = difference_heatmap(sinr_o.serving_rsrp_dbm, sinr.serving_rsrp_dbm,
                                         grid, alt)
            layer_s = difference_heatmap(sinr_o.sinr_db, sinr.sinr_db, grid, alt)
        except AirtwinError:
            continue
        with open(os.path.join(args.out, f"heatmap_rsrp_{int(alt)}m.csv"), "w") as fh:
            export_heatmap_csv(layer_r, fh)
        with open(os.path.join(args.out, f"heatmap_sinr_{int(alt)}m.csv"), "w") as fh:
            export_heatmap_csv(layer_s, fh)
    print(f"strict RSRP ratio {report.before.ratio_rsrp_strict:.4f} -> "
          f"{report.after.ratio_rsrp_strict:.4f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    scene, overrides = _load_scene_with_overrides(args.scene, args.set)
    assignment = _assignment_for(scene, args.assignment)
    _write_manifest(args.out, "synth", args, overrides)
    if args.trajectory == "helix":
        trajectory = helix_trajectory(scene.airspace, n_points=args.samples,
                                      turns=args.turns)
    else:
        altitudes = [float(a) for a in args.altitudes.split(",")]
        trajectory = lawnmower_trajectory(scene.airspace, altitudes,
                                          line_spacing_m=args.line_spacing,
                                          step_m=args.step)
    measurements = synthesize_measurements(scene, assignment, trajectory,
                                           sigma_db=args.noise_sigma_db, seed=args.seed,
                                           offset_db=args.offset_db, cells=args.cells)
    with open(os.path.join(args.out, "measurements.csv"), "w") as fh:
        save_measurements(measurements, fh)
    print(f"wrote {len(measurements)} samples to {args.out}/measurements.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------
def _add_common(p, scene=True, out=True):
    if scene:
        p.add_argument("--scene", required=True, help="scene JSON file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a scene config value by dotted path")
    p.add_argument("--seed", type=int, default=0, help="recorded (and used where relevant)")
    p.add_argument("--threads", type=int, default=1, help="parallelism cap; output-invariant")
    p.add_argument("--offset-db", type=float, default=0.0, dest="offset_db",
                   help="calibration offset applied to predictions")
    p.add_argument("--activity-factor", type=float, default=1.0, dest="activity_factor",
                   help="fraction of full-load interference from non-serving cells")
    if out:
        p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airtwin",
        description="Voxel-level radio twin for low-altitude airspace: "
                    "predict, validate, and optimize sub-beam steering.")
    parser.add_argument("--version", action="version", version=f"airtwin {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="export RSRP and SINR fields for an assignment")
    _add_common(p)
    p.add_argument("--assignment", help="assignment JSON (default: scene baseline)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("calibrate", help="fit the global offset against measurements")
    _add_common(p)
    p.add_argument("--assignment", help="assignment JSON (default: scene baseline)")
    p.add_argument("--measurements", required=True, help="measurement CSV")
    p.add_argument("--mapping", help="JSON column/frame mapping for foreign CSVs")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("validate", help="block hold-out comparison of predictors")
    _add_common(p)
    p.add_argument("--assignment", help="assignment JSON (default: scene baseline)")
    p.add_argument("--measurements", required=True, help="measurement CSV")
    p.add_argument("--mapping", help="JSON column/frame mapping for foreign CSVs")
    p.add_argument("--train-fraction", type=float, default=0.7, dest="train_fraction")
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--layer-height", type=float, default=DEFAULT_LAYER_HEIGHT_M,
                   dest="layer_height", help="Kriging altitude layer height (m)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("optimize", help="greedy sequential sub-beam steering")
    _add_common(p)
    p.add_argument("--initial", help="initial assignment JSON (default: scene baseline)")
    p.add_argument("--alpha", type=float, default=1.0, help="weight per covered voxel")
    p.add_argument("--beta", type=float, default=0.1, help="weight per dB*voxel of margin")
    p.add_argument("--margin-cap", type=float, default=10.0, dest="margin_cap")
    p.add_argument("--epsilon-gain", type=float, default=0.005, dest="epsilon_gain")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="coverage report for an assignment")
    _add_common(p)
    p.add_argument("--assignment", help="assignment JSON (default: scene baseline)")
    p.add_argument("--compare-to", dest="compare_to",
                   help="baseline assignment to diff against (emits heatmaps)")
    p.add_argument("--mask", help="file of voxel indices restricting the ratios")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate synthetic UAV measurements")
    _add_common(p)
    p.add_argument("--assignment", help="assignment JSON (default: scene baseline)")
    p.add_argument("--trajectory", choices=("helix", "lawnmower"), default="helix")
    p.add_argument("--samples", type=int, default=400, help="helix sample count")
    p.add_argument("--turns", type=float, default=3.0, help="helix turns")
    p.add_argument("--altitudes", default="50,150,250",
                   help="lawnmower altitudes, comma separated (m)")
    p.add_argument("--line-spacing", type=float, default=100.0, dest="line_spacing")
    p.add_argument("--step", type=float, default=50.0, help="lawnmower step (m)")
    p.add_argument("--noise-sigma-db", type=float, default=0.0, dest="noise_sigma_db")
    p.add_argument("--cells", choices=("all", "serving"), default="all")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AirtwinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
