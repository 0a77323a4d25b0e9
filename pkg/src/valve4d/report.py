"""Report emission: Table-1/Table-2 measurement tables, temporal Dice
curves, orientation summaries, and the CSV/JSON record round-trips the
CLI builds on. All emissions are deterministic byte streams: rows are
sorted on (scan, frame, label) keys and floats use shortest round-trip
formatting, so identical inputs regenerate identical files.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
from pathlib import Path
from typing import Iterable, Sequence

from .errors import StatsError
from .metrics import MetricRecord, OrientationResult
from .morphometry import MeasurementRecord, MeasurementSource
from .schema import DEFAULT_SCHEMA, LabelSchema
from .stats import (
    AggregateRow,
    ComparisonReport,
    OrientationSummary,
    TemporalCurve,
    detect_dips,
)

MEASUREMENT_TITLES = {
    "geometric_cusp_height_mm": "Geometric Cusp Height (mm)",
    "commissural_angle_deg": "Commissural Angle (degrees)",
    "annulus_diameter_mm": "Annulus Diameter (mm)",
}
MEASUREMENT_ORDER = tuple(MEASUREMENT_TITLES)

MEASUREMENT_CSV_FIELDS = (
    "scan_id",
    "frame",
    "geometric_cusp_height_mm",
    "annulus_diameter_mm",
    "commissural_angle_deg",
    "source",
    "rater",
)

METRIC_CSV_FIELDS = (
    "scan_id",
    "frame_index",
    "label_id",
    "dice",
    "mean_sym_dist",
    "p95_sym_dist",
)


def format_stat(value: float) -> str:
    """Two-decimal rounding with trailing zeros trimmed: 5.90 -> "5.9"."""
    text = f"{value:.2f}".rstrip("0").rstrip(".")
    return text if text not in ("", "-0") else "0"


def _cell(mean: float, sd: float, paren: str) -> str:
    return f"{format_stat(mean)} ± {format_stat(sd)} ({paren})"


def _write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _csv_text(rows: Iterable[Sequence]) -> str:
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def table1_csv(report: ComparisonReport) -> str:
    """Paper Table-1 shape: per-rater |gt - pred| cells "mean ± sd (p=…)"."""
    by_rater: dict[str, dict[str, str]] = {}
    for row in report.table1:
        cell = _cell(row.mean_abs_diff, row.sd_abs_diff, f"p={format_stat(row.p)}")
        by_rater.setdefault(row.rater, {})[row.measurement] = cell
    header = [""] + [MEASUREMENT_TITLES[m] for m in MEASUREMENT_ORDER]
    rows = [header]
    for rater in sorted(by_rater):
        rows.append(
            [rater] + [by_rater[rater].get(m, "") for m in MEASUREMENT_ORDER]
        )
    return _csv_text(rows)


def table1_json(report: ComparisonReport) -> str:
    rows = [
        {
            "rater": r.rater,
            "measurement": r.measurement,
            "title": MEASUREMENT_TITLES[r.measurement],
            "mean_abs_diff": r.mean_abs_diff,
            "sd_abs_diff": r.sd_abs_diff,
            "t": r.t,
            "p": r.p,
            "n": r.n,
            "degenerate": r.degenerate,
        }
        for r in sorted(
            report.table1,
            key=lambda r: (r.rater, MEASUREMENT_ORDER.index(r.measurement)),
        )
    ]
    doc = {
        "table": "gt_vs_pred_measurement_differences",
        "units": {
            "geometric_cusp_height": "mm",
            "annulus_diameter": "mm",
            "commissural_angle": "degrees",
        },
        "rows": rows,
    }
    return _json_text(doc)


def table2_csv(report: ComparisonReport) -> str:
    """Paper Table-2 shape: per-source inter-rater "mean ± sd (ICC=…)"."""
    by_source: dict[str, dict[str, str]] = {}
    for row in report.table2:
        cell = _cell(
            row.mean_max_abs_diff, row.sd_max_abs_diff, f"ICC={format_stat(row.icc)}"
        )
        by_source.setdefault(row.source.value, {})[row.measurement] = cell
    header = [""] + [MEASUREMENT_TITLES[m] for m in MEASUREMENT_ORDER]
    rows = [header]
    for source in sorted(by_source):
        label = "Ground Truth" if source == MeasurementSource.GROUND_TRUTH.value else source
        rows.append(
            [label] + [by_source[source].get(m, "") for m in MEASUREMENT_ORDER]
        )
    return _csv_text(rows)


def table2_json(report: ComparisonReport) -> str:
    rows = [
        {
            "source": r.source.value,
            "measurement": r.measurement,
            "title": MEASUREMENT_TITLES[r.measurement],
            "mean_max_abs_diff": r.mean_max_abs_diff,
            "sd_max_abs_diff": r.sd_max_abs_diff,
            "icc": r.icc,
            "n_targets": r.n_targets,
            "n_raters": r.n_raters,
        }
        for r in sorted(
            report.table2,
            key=lambda r: (r.source.value, MEASUREMENT_ORDER.index(r.measurement)),
        )
    ]
    doc = {
        "table": "inter_rater_measurement_spread",
        "units": {
            "geometric_cusp_height": "mm",
            "annulus_diameter": "mm",
            "commissural_angle": "degrees",
        },
        "rows": rows,
    }
    return _json_text(doc)


def temporal_csv(
    curves: Sequence[TemporalCurve],
    z: float = 2.0,
    schema: LabelSchema = DEFAULT_SCHEMA,
) -> str:
    """Per-frame Dice with dip flags, one row per (scan, label, frame)."""
    rows = [["scan_id", "label", "frame", "phase", "dice", "dip", "unevaluable"]]
    for curve in sorted(curves, key=lambda c: (c.scan_id, c.label_id)):
        dips = detect_dips(curve, z=z)
        for i, (val, tag) in enumerate(zip(curve.dice_per_frame, curve.phase_tags)):
            rows.append(
                [
                    curve.scan_id,
                    schema.name_of(curve.label_id),
                    i,
                    tag.value,
                    repr(val),
                    int(i in dips.dips),
                    int(i in dips.unevaluable),
                ]
            )
    return _csv_text(rows)


def temporal_json(
    curves: Sequence[TemporalCurve],
    z: float = 2.0,
    schema: LabelSchema = DEFAULT_SCHEMA,
) -> str:
    out = []
    for curve in sorted(curves, key=lambda c: (c.scan_id, c.label_id)):
        dips = detect_dips(curve, z=z)
        out.append(
            {
                "scan_id": curve.scan_id,
                "label_id": curve.label_id,
                "label": schema.name_of(curve.label_id),
                "phase_tags": [t.value for t in curve.phase_tags],
                "dice_per_frame": list(curve.dice_per_frame),
                "dips": list(dips.dips),
                "unevaluable_frames": list(dips.unevaluable),
            }
        )
    return _json_text({"z_threshold": z, "units": {"dice": "1"}, "curves": out})


def plot_data_csv(curves: Sequence[TemporalCurve]) -> str:
    """Bare (frame, dice) series per curve, for external plotting."""
    rows = [["scan_id", "label_id", "frame", "dice"]]
    for curve in sorted(curves, key=lambda c: (c.scan_id, c.label_id)):
        for i, val in enumerate(curve.dice_per_frame):
            rows.append([curve.scan_id, curve.label_id, i, repr(val)])
    return _csv_text(rows)


def orientation_csv(summary: OrientationSummary) -> str:
    rows = [
        ["mean_deg", "sd_deg", "min_deg", "max_deg", "any_flipped", "n"],
        [
            repr(summary.mean_deg),
            repr(summary.sd_deg),
            repr(summary.min_deg),
            repr(summary.max_deg),
            int(summary.any_flipped),
            summary.n,
        ],
    ]
    return _csv_text(rows)


def orientation_json(summary: OrientationSummary) -> str:
    doc = {
        "units": {"angle": "degrees"},
        "mean_deg": summary.mean_deg,
        "sd_deg": summary.sd_deg,
        "min_deg": summary.min_deg,
        "max_deg": summary.max_deg,
        "any_flipped": summary.any_flipped,
        "n": summary.n,
        "sd_flagged": summary.sd_flagged,
    }
    return _json_text(doc)


def write_report(text: str, path) -> None:
    _write_text(path, text)


# ---------------------------------------------------------------------------
# record round-trips


def measurements_to_csv(records: Sequence[MeasurementRecord]) -> str:
    rows = [list(MEASUREMENT_CSV_FIELDS)]
    ordered = sorted(
        records, key=lambda r: (r.scan_id, r.frame, r.source.value, r.rater or "")
    )
    for r in ordered:
        rows.append(
            [
                r.scan_id,
                r.frame,
                repr(r.geometric_cusp_height_mm),
                repr(r.annulus_diameter_mm),
                repr(r.commissural_angle_deg),
                r.source.value,
                r.rater or "",
            ]
        )
    return _csv_text(rows)


def measurements_from_csv(text: str) -> list[MeasurementRecord]:
    reader = csv.DictReader(_stdio.StringIO(text))
    missing = set(MEASUREMENT_CSV_FIELDS) - set(reader.fieldnames or ())
    if missing:
        raise StatsError(
            "measurement CSV missing columns: " + ", ".join(sorted(missing))
        )
    records = []
    for i, row in enumerate(reader, start=2):
        try:
            records.append(
                MeasurementRecord(
                    scan_id=row["scan_id"],
                    frame=int(row["frame"]),
                    geometric_cusp_height_mm=float(row["geometric_cusp_height_mm"]),
                    annulus_diameter_mm=float(row["annulus_diameter_mm"]),
                    commissural_angle_deg=float(row["commissural_angle_deg"]),
                    source=MeasurementSource(row["source"]),
                    rater=row["rater"] or None,
                )
            )
        except (KeyError, ValueError) as exc:
            raise StatsError(f"measurement CSV line {i}: {exc}") from None
    return records


def load_measurements(path) -> list[MeasurementRecord]:
    return measurements_from_csv(Path(path).read_text(encoding="utf-8"))


def metrics_to_csv(records: Sequence[MetricRecord]) -> str:
    rows = [list(METRIC_CSV_FIELDS)]
    ordered = sorted(records, key=lambda r: (r.scan_id, r.frame_index, r.label_id))
    for r in ordered:
        rows.append(
            [
                r.scan_id,
                r.frame_index,
                r.label_id,
                repr(r.dice),
                repr(r.mean_sym_dist),
                repr(r.p95_sym_dist),
            ]
        )
    return _csv_text(rows)


def metrics_from_csv(text: str) -> list[MetricRecord]:
    reader = csv.DictReader(_stdio.StringIO(text))
    missing = set(METRIC_CSV_FIELDS) - set(reader.fieldnames or ())
    if missing:
        raise StatsError("metric CSV missing columns: " + ", ".join(sorted(missing)))
    records = []
    for i, row in enumerate(reader, start=2):
        try:
            records.append(
                MetricRecord(
                    scan_id=row["scan_id"],
                    frame_index=int(row["frame_index"]),
                    label_id=int(row["label_id"]),
                    dice=float(row["dice"]),
                    mean_sym_dist=float(row["mean_sym_dist"]),
                    p95_sym_dist=float(row["p95_sym_dist"]),
                )
            )
        except (KeyError, ValueError) as exc:
            raise StatsError(f"metric CSV line {i}: {exc}") from None
    return records


def metrics_to_json(records: Sequence[MetricRecord]) -> str:
    ordered = sorted(records, key=lambda r: (r.scan_id, r.frame_index, r.label_id))
    rows = [
        {
            "scan_id": r.scan_id,
            "frame_index": r.frame_index,
            "label_id": r.label_id,
            "dice": r.dice,
            "mean_sym_dist": r.mean_sym_dist,
            "p95_sym_dist": r.p95_sym_dist,
        }
        for r in ordered
    ]
    return _json_text({"units": {"distance": "mm", "dice": "1"}, "rows": rows})


def orientations_to_csv(
    results: Sequence[tuple[str, int, OrientationResult]]
) -> str:
    """Per-frame orientation rows: (scan_id, frame_index, result)."""
    rows = [["scan_id", "frame_index", "offset_angle_deg", "flipped"]]
    for scan_id, frame_index, res in sorted(results, key=lambda t: (t[0], t[1])):
        rows.append([scan_id, frame_index, repr(res.offset_angle_deg), int(res.flipped)])
    return _csv_text(rows)


def curves_from_csv(
    text: str, schema: LabelSchema = DEFAULT_SCHEMA
) -> list[TemporalCurve]:
    """Rebuild TemporalCurves from a temporal report CSV (dip columns
    and extra columns are ignored; frames must be contiguous from 0)."""
    reader = csv.DictReader(_stdio.StringIO(text))
    need = {"scan_id", "label", "frame", "phase", "dice"}
    missing = need - set(reader.fieldnames or ())
    if missing:
        raise StatsError("curve CSV missing columns: " + ", ".join(sorted(missing)))
    acc: dict[tuple[str, int], dict[int, tuple[float, str]]] = {}
    for i, row in enumerate(reader, start=2):
        try:
            key = (row["scan_id"], schema.id_of(row["label"]))
            acc.setdefault(key, {})[int(row["frame"])] = (
                float(row["dice"]),
                row["phase"],
            )
        except (KeyError, ValueError) as exc:
            raise StatsError(f"curve CSV line {i}: {exc}") from None
    curves = []
    for (scan_id, label_id), frames in sorted(acc.items()):
        if sorted(frames) != list(range(len(frames))):
            raise StatsError(
                f"curve {scan_id}/label {label_id}: frames not contiguous from 0"
            )
        ordered = [frames[i] for i in range(len(frames))]
        curves.append(
            TemporalCurve(
                scan_id,
                label_id,
                tuple(v for v, _ in ordered),
                tuple(t for _, t in ordered),
            )
        )
    return curves


def aggregate_csv(rows: Sequence[AggregateRow]) -> str:
    out = [["group", "metric", "mean", "sd", "min", "max", "n", "sd_flagged"]]
    for r in rows:
        out.append(
            [
                "/".join(r.group),
                r.metric,
                repr(r.mean),
                repr(r.sd),
                repr(r.min),
                repr(r.max),
                r.n,
                int(r.sd_flagged),
            ]
        )
    return _csv_text(out)


def orientations_from_csv(text: str) -> list[tuple[str, int, OrientationResult]]:
    reader = csv.DictReader(_stdio.StringIO(text))
    need = {"scan_id", "frame_index", "offset_angle_deg"}
    missing = need - set(reader.fieldnames or ())
    if missing:
        raise StatsError(
            "orientation CSV missing columns: " + ", ".join(sorted(missing))
        )
    out = []
    for i, row in enumerate(reader, start=2):
        try:
            out.append(
                (
                    row["scan_id"],
                    int(row["frame_index"]),
                    OrientationResult(float(row["offset_angle_deg"])),
                )
            )
        except (KeyError, ValueError) as exc:
            raise StatsError(f"orientation CSV line {i}: {exc}") from None
    return out
