"""Command-line interface.

Subcommands: phantom, propagate, evaluate, measure, report
(table1 | table2 | temporal | orientation | summary), plot-data.
All outputs are deterministic; --strict makes report commands exit
nonzero when any degenerate-statistics flag was raised.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io, manifest as manifest_mod, metrics, morphometry, report, stats
from .errors import Valve4DError
from .phantom import PhantomSpec, generate_phantom
from .registration import RegistrationConfig, propagate_phase
from .schema import DEFAULT_SCHEMA, FusionType, PhaseTag
from .volume import Series4D


def _fusion(text: str) -> FusionType:
    try:
        return FusionType.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _spacing(text: str) -> tuple[float, ...]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) not in (1, 3) or min(parts) <= 0:
        raise argparse.ArgumentTypeError("spacing is one or three positive mm values")
    return tuple(parts) if len(parts) == 3 else (parts[0],) * 3


def _load_registration_config(path) -> RegistrationConfig:
    if path is None:
        return RegistrationConfig()
    doc = json.loads(Path(path).read_text())
    known = set(RegistrationConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise Valve4DError(
            "unknown registration config keys: " + ", ".join(sorted(unknown))
        )
    if "iterations" in doc:
        doc["iterations"] = tuple(doc["iterations"])
    return RegistrationConfig(**doc)


def _write(path: Path, text: str, what: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    report.write_report(text, path)
    print(f"wrote {what}: {path}")


def _cmd_phantom(args) -> int:
    spec = PhantomSpec(
        annulus_diameter_mm=args.annulus_diameter,
        root_height_mm=args.root_height,
        wall_thickness_mm=args.wall_thickness,
        cusp_geometric_height_mm=args.cusp_height,
        commissural_angle_deg=args.angle,
        fusion=args.fusion,
        n_frames=args.frames,
        spacing_mm=args.spacing,
        noise_voxels=args.noise,
        cusp_thickness_mm=args.thickness,
        min_dims=(args.min_dim,) * 3 if args.min_dim else None,
        seed=args.seed,
        scan_id=args.scan_id,
        patient_id=args.patient_id,
    )
    series, truth = generate_phantom(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(series.frames):
        p = out / f"{args.scan_id}_frame{i:02d}.nii.gz"
        io.save_volume(frame, p)
        paths.append(p)
    truth.save_json(out / f"{args.scan_id}_truth.json")
    entry = manifest_mod.ScanEntry(
        patient_id=series.patient_id,
        scan_id=series.scan_id,
        fusion=spec.fusion,
        frame_paths=tuple(paths),
        phase_tags=series.phase_tags,
        reference_indices=series.reference_indices,
    )
    manifest_mod.save_manifest(
        manifest_mod.Manifest(1, (entry,)), out / "manifest.json"
    )
    print(f"wrote {len(paths)} frames, truth, and manifest to {out}")
    return 0


def _cmd_propagate(args) -> int:
    mani = manifest_mod.load_manifest(args.manifest)
    series = manifest_mod.load_series(mani, args.scan)
    cfg = _load_registration_config(args.config)
    fields: dict = {}
    result = propagate_phase(series, args.phase, cfg, fields_out=fields)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(result.frames):
        io.save_volume(frame, out / f"{args.scan}_prop{i:02d}.nii.gz")
    if args.save_fields:
        for i, fld in sorted(fields.items()):
            io.save_field(fld, out / f"{args.scan}_field{i:02d}.nii.gz")
    print(f"propagated {args.phase} of {args.scan} to {out}")
    return 0


def _cmd_evaluate(args) -> int:
    mani = manifest_mod.load_manifest(args.manifest)
    truth = manifest_mod.load_series(mani, args.scan)
    pred_dir = Path(args.pred_dir)
    entry = mani.scan(args.scan)
    pred_frames = []
    for p in entry.frame_paths:
        q = pred_dir / p.name
        if not q.exists():
            raise Valve4DError(f"prediction missing for frame file {p.name}")
        pred_frames.append(io.load_volume(q))
    records, orients = [], []
    for i, (t, p) in enumerate(zip(truth.frames, pred_frames)):
        recs, orient = metrics.evaluate_frame(p, t, scan_id=args.scan, frame_index=i)
        records.extend(recs)
        orients.append((args.scan, i, orient))
    prefix = str(args.out_prefix)
    _write(Path(prefix + ".metrics.csv"), report.metrics_to_csv(records), "metrics CSV")
    _write(Path(prefix + ".metrics.json"), report.metrics_to_json(records), "metrics JSON")
    _write(
        Path(prefix + ".orientation.csv"),
        report.orientations_to_csv(orients),
        "orientation CSV",
    )
    if args.curves:
        pred_series = Series4D(
            frames=tuple(pred_frames),
            phase_tags=truth.phase_tags,
            reference_indices=truth.reference_indices,
            scan_id=truth.scan_id,
        )
        curves = stats.temporal_curve(truth, pred_series)
        _write(
            Path(prefix + ".temporal.csv"),
            report.temporal_csv(curves, z=args.z),
            "temporal CSV",
        )
    return 0


def _cmd_measure(args) -> int:
    records = []
    landmark_docs = []
    if args.manifest:
        mani = manifest_mod.load_manifest(args.manifest)
        series = manifest_mod.load_series(mani, args.scan)
        frames = series.frames
        fusion = series.fusion
        scan_id = args.scan
    else:
        frames = tuple(io.load_volume(p) for p in args.volumes)
        fusion = args.fusion
        scan_id = args.scan_id
        if fusion is None:
            raise Valve4DError("--fusion is required when measuring bare volumes")
    for i, vol in enumerate(frames):
        rec = morphometry.measure_frame(
            vol,
            fusion,
            scan_id=scan_id,
            frame=i,
            source=args.source,
            rater=args.rater,
            boundary=args.boundary,
        )
        records.append(rec)
        if args.landmarks_dir:
            lm = morphometry.extract_landmarks(vol, fusion)
            landmark_docs.append((i, morphometry.landmarks_to_dict(lm, DEFAULT_SCHEMA)))
    _write(Path(args.out), report.measurements_to_csv(records), "measurement CSV")
    if args.json_out:
        doc = {
            "units": {
                "geometric_cusp_height": "mm",
                "annulus_diameter": "mm",
                "commissural_angle": "degrees",
            },
            "rows": [
                {
                    "scan_id": r.scan_id,
                    "frame": r.frame,
                    "geometric_cusp_height_mm": r.geometric_cusp_height_mm,
                    "annulus_diameter_mm": r.annulus_diameter_mm,
                    "commissural_angle_deg": r.commissural_angle_deg,
                    "source": r.source.value,
                    "rater": r.rater,
                }
                for r in records
            ],
        }
        _write(Path(args.json_out), json.dumps(doc, indent=2) + "\n", "measurement JSON")
    if args.landmarks_dir:
        lm_dir = Path(args.landmarks_dir)
        lm_dir.mkdir(parents=True, exist_ok=True)
        for i, doc in landmark_docs:
            _write(
                lm_dir / f"{scan_id}_landmarks{i:02d}.json",
                json.dumps(doc, indent=2) + "\n",
                "landmarks JSON",
            )
    return 0


def _strict_exit(flagged: bool, strict: bool, what: str) -> int:
    if flagged and strict:
        print(f"strict mode: degenerate statistics in {what}", file=sys.stderr)
        return 3
    return 0


def _cmd_report_table1(args) -> int:
    gt = report.load_measurements(args.gt)
    pred = report.load_measurements(args.pred)
    raters = report.load_measurements(args.raters) if args.raters else None
    comparison = stats.measurement_comparison(
        gt, pred, raters, icc_model=args.icc_model, pairing=args.pairing
    )
    text = (
        report.table1_json(comparison) if args.format == "json"
        else report.table1_csv(comparison)
    )
    _write(Path(args.out), text, "table 1")
    return _strict_exit(comparison.any_degenerate, args.strict, "table 1 t-tests")


def _cmd_report_table2(args) -> int:
    raters = report.load_measurements(args.raters)
    comparison = stats.measurement_comparison([], [], raters, icc_model=args.icc_model)
    text = (
        report.table2_json(comparison) if args.format == "json"
        else report.table2_csv(comparison)
    )
    _write(Path(args.out), text, "table 2")
    return 0


def _cmd_report_temporal(args) -> int:
    curves = report.curves_from_csv(Path(args.curves).read_text(encoding="utf-8"))
    text = (
        report.temporal_json(curves, z=args.z) if args.format == "json"
        else report.temporal_csv(curves, z=args.z)
    )
    _write(Path(args.out), text, "temporal report")
    flagged = any(stats.detect_dips(c, z=args.z).unevaluable for c in curves)
    return _strict_exit(flagged, args.strict, "temporal dip detection")


def _cmd_report_orientation(args) -> int:
    rows = report.orientations_from_csv(Path(args.orientation).read_text(encoding="utf-8"))
    summary = stats.orientation_summary([r for _, _, r in rows])
    text = (
        report.orientation_json(summary) if args.format == "json"
        else report.orientation_csv(summary)
    )
    _write(Path(args.out), text, "orientation report")
    return _strict_exit(summary.sd_flagged, args.strict, "orientation summary")


def _cmd_report_summary(args) -> int:
    records = report.metrics_from_csv(Path(args.metrics).read_text(encoding="utf-8"))
    rows = stats.aggregate(records, group_by=args.group_by)
    _write(Path(args.out), report.aggregate_csv(rows), "summary report")
    flagged = any(r.sd_flagged for r in rows)
    return _strict_exit(flagged, args.strict, "aggregation")


def _cmd_plot_data(args) -> int:
    curves = report.curves_from_csv(Path(args.curves).read_text(encoding="utf-8"))
    _write(Path(args.out), report.plot_data_csv(curves), "plot data")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="valve4d",
        description="Aortic valve 4D CT label-map toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic valve phantom series")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--fusion", type=_fusion, default=FusionType.LR_FUSED)
    p.add_argument("--angle", type=float, default=160.0, help="commissural angle, degrees")
    p.add_argument("--annulus-diameter", type=float, default=24.0)
    p.add_argument("--root-height", type=float, default=28.0)
    p.add_argument("--wall-thickness", type=float, default=2.0)
    p.add_argument("--cusp-height", type=float, default=14.0)
    p.add_argument("--frames", type=int, default=4)
    p.add_argument("--spacing", type=_spacing, default=(0.5, 0.5, 0.5),
                   help="voxel spacing mm, one value or x,y,z")
    p.add_argument("--noise", type=float, default=0.0, help="boundary jitter, voxels")
    p.add_argument("--thickness", type=float, default=1.0, help="cusp thickness, mm")
    p.add_argument("--min-dim", type=int, default=0, help="minimum grid size per axis")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scan-id", default="PH01")
    p.add_argument("--patient-id", default="PH")
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("propagate", help="propagate a reference segmentation across a phase")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scan", required=True)
    p.add_argument("--phase", type=PhaseTag.parse, required=True)
    p.add_argument("--config", help="registration config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--save-fields", action="store_true")
    p.set_defaults(func=_cmd_propagate)

    p = sub.add_parser("evaluate", help="score predictions against a truth manifest")
    p.add_argument("--manifest", required=True, help="ground-truth manifest")
    p.add_argument("--scan", required=True)
    p.add_argument("--pred-dir", required=True, help="directory of predicted frames")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--curves", action="store_true", help="also emit temporal Dice curves")
    p.add_argument("--z", type=float, default=2.0, help="dip threshold in sds")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("measure", help="derive the three valve measurements")
    p.add_argument("--manifest")
    p.add_argument("--scan", help="scan id within the manifest")
    p.add_argument("volumes", nargs="*", help="bare label volumes (frame order)")
    p.add_argument("--fusion", type=_fusion, help="required with bare volumes")
    p.add_argument("--scan-id", default="", help="scan id for bare volumes")
    p.add_argument("--source", type=morphometry.MeasurementSource,
                   default=morphometry.MeasurementSource.PREDICTED,
                   choices=list(morphometry.MeasurementSource))
    p.add_argument("--rater", help="rater tag for manual measurement import")
    p.add_argument("--boundary", choices=("inner", "outer"), default="inner",
                   help="annulus diameter wall boundary")
    p.add_argument("--out", required=True, help="measurement CSV path")
    p.add_argument("--json-out", help="optional JSON mirror")
    p.add_argument("--landmarks-dir", help="export landmark point sets here")
    p.set_defaults(func=_cmd_measure)

    rep = sub.add_parser("report", help="emit statistics reports")
    repsub = rep.add_subparsers(dest="report_kind", required=True)

    p = repsub.add_parser("table1", help="gt vs predicted measurement differences")
    p.add_argument("--gt", required=True, help="ground-truth measurement CSV")
    p.add_argument("--pred", required=True, help="predicted measurement CSV")
    p.add_argument("--raters", help="rater-tagged measurement CSV")
    p.add_argument("--icc-model", choices=("icc3", "icc2"), default="icc3")
    p.add_argument(
        "--pairing", choices=("frame", "scan"), default="frame",
        help="t-test pairing unit: per-frame segmentations or per-scan means",
    )
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=_cmd_report_table1)

    p = repsub.add_parser("table2", help="inter-rater spread and ICC per source")
    p.add_argument("--raters", required=True, help="rater-tagged measurement CSV")
    p.add_argument("--icc-model", choices=("icc3", "icc2"), default="icc3")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=_cmd_report_table2)

    p = repsub.add_parser("temporal", help="per-frame Dice curves with dip flags")
    p.add_argument("--curves", required=True, help="curve CSV (scan_id,label,frame,phase,dice)")
    p.add_argument("--z", type=float, default=2.0)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=_cmd_report_temporal)

    p = repsub.add_parser("orientation", help="offset-angle summary")
    p.add_argument("--orientation", required=True, help="per-frame orientation CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=_cmd_report_orientation)

    p = repsub.add_parser("summary", help="grouped metric aggregation (mean/sd/min/max)")
    p.add_argument("--metrics", required=True, help="metric record CSV")
    p.add_argument("--group-by", choices=stats.GROUP_KEYS, default="scan")
    p.add_argument("--out", required=True)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=_cmd_report_summary)

    p = sub.add_parser("plot-data", help="bare (frame, dice) series for plotting")
    p.add_argument("--curves", required=True, help="curve CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Valve4DError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
