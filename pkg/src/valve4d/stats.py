"""Statistics behind the reports: paired t-tests, intraclass correlation,
metric aggregation, temporal Dice curves with dip detection, measurement
comparison, and orientation summaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import betainc

from .errors import StatsError
from .metrics import MetricRecord, OrientationResult, dice
from .morphometry import MeasurementRecord, MeasurementSource
from .schema import DISTANCE_METRIC_IDS, PhaseTag
from .volume import LabelVolume, Series4D

MEASUREMENT_FIELDS = (
    "geometric_cusp_height_mm",
    "commissural_angle_deg",
    "annulus_diameter_mm",
)

GROUP_KEYS = ("scan", "label", "phase", "frame")


def _check_finite(values, what: str) -> None:
    arr = np.asarray(values, dtype=float)
    if not np.isfinite(arr).all():
        raise StatsError(f"non-finite value in {what}")


@dataclass(frozen=True)
class PairedSample:
    """Matched pairs of one measurement on the same items."""

    pairs: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pairs = tuple((float(a), float(b)) for a, b in self.pairs)
        if len(pairs) < 2:
            raise StatsError(f"paired sample needs n >= 2, got {len(pairs)}")
        _check_finite(pairs, "paired sample")
        object.__setattr__(self, "pairs", pairs)

    @property
    def n(self) -> int:
        return len(self.pairs)

    def differences(self) -> np.ndarray:
        arr = np.asarray(self.pairs)
        return arr[:, 0] - arr[:, 1]


@dataclass(frozen=True)
class RaterMatrix:
    """Complete n-targets x k-raters matrix of one measurement."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 2:
            raise StatsError("rater matrix must be 2-D")
        n, k = arr.shape
        if n < 2 or k < 2:
            raise StatsError(f"rater matrix needs >= 2 targets and raters, got {n}x{k}")
        _check_finite(arr, "rater matrix")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def n_targets(self) -> int:
        return self.values.shape[0]

    @property
    def n_raters(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class TemporalCurve:
    """Per-frame Dice of one label across a scan's cardiac cycle."""

    scan_id: str
    label_id: int
    dice_per_frame: tuple[float, ...]
    phase_tags: tuple[PhaseTag, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.dice_per_frame)
        tags = tuple(PhaseTag.parse(t) for t in self.phase_tags)
        if len(vals) != len(tags):
            raise StatsError("curve needs one phase tag per frame")
        if not vals:
            raise StatsError("empty temporal curve")
        _check_finite(vals, "temporal curve")
        object.__setattr__(self, "dice_per_frame", vals)
        object.__setattr__(self, "phase_tags", tags)

    @property
    def n_frames(self) -> int:
        return len(self.dice_per_frame)


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    n: int
    degenerate: bool = False


def paired_t_test(sample: PairedSample) -> TTestResult:
    """Two-tailed paired Student's t-test.

    Zero-variance differences with nonzero mean return p = 0 flagged
    degenerate; all-zero differences return t = 0, p = 1.
    """
    d = sample.differences()
    n = sample.n
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(t=0.0, p=1.0, n=n)
        return TTestResult(t=math.copysign(math.inf, mean), p=0.0, n=n, degenerate=True)
    t = mean / (sd / math.sqrt(n))
    p = student_t_sf_two_tailed(t, n - 1)
    return TTestResult(t=t, p=p, n=n)


def student_t_sf_two_tailed(t: float, dof: int) -> float:
    """Two-tailed p of Student's t via the regularized incomplete beta."""
    if dof < 1:
        raise StatsError(f"t distribution needs dof >= 1, got {dof}")
    if t == 0.0:
        return 1.0
    x = dof / (dof + t * t)
    return float(betainc(dof / 2.0, 0.5, x))


def _anova_two_way(m: RaterMatrix) -> tuple[float, float, float]:
    """Mean squares (targets, raters, residual) without interaction."""
    x = m.values
    n, k = x.shape
    grand = x.mean()
    row_means = x.mean(axis=1)
    col_means = x.mean(axis=0)
    ss_rows = k * float(((row_means - grand) ** 2).sum())
    ss_cols = n * float(((col_means - grand) ** 2).sum())
    resid = x - row_means[:, None] - col_means[None, :] + grand
    ss_err = float((resid**2).sum())
    ss_total = float(((x - grand) ** 2).sum())
    if ss_total == 0.0:
        raise StatsError("degenerate matrix")
    ms_rows = ss_rows / (n - 1)
    ms_cols = ss_cols / (k - 1)
    ms_err = ss_err / ((n - 1) * (k - 1))
    return ms_rows, ms_cols, ms_err


def icc_consistency(m: RaterMatrix, model: str = "icc3") -> float:
    """Single-rater intraclass correlation for a fixed rater panel.

    ``icc3`` is two-way mixed-effects consistency ICC(3,1); ``icc2``
    is two-way random-effects absolute agreement ICC(2,1). May be
    negative; returned as-is.
    """
    ms_rows, ms_cols, ms_err = _anova_two_way(m)
    n, k = m.n_targets, m.n_raters
    if model == "icc3":
        return (ms_rows - ms_err) / (ms_rows + (k - 1) * ms_err)
    if model == "icc2":
        return (ms_rows - ms_err) / (
            ms_rows + (k - 1) * ms_err + k * (ms_cols - ms_err) / n
        )
    raise StatsError(f"unknown ICC model {model!r} (use 'icc3' or 'icc2')")


@dataclass(frozen=True)
class AggregateRow:
    group: tuple[str, ...]
    metric: str
    mean: float
    sd: float
    min: float
    max: float
    n: int
    sd_flagged: bool = False  # single-member group: sd reported as 0


def _summary(values: Sequence[float]) -> tuple[float, float, float, float, int, bool]:
    arr = np.asarray(values, dtype=float)
    n = len(arr)
    if n == 1:
        return float(arr[0]), 0.0, float(arr[0]), float(arr[0]), 1, True
    return (
        float(arr.mean()),
        float(arr.std(ddof=1)),
        float(arr.min()),
        float(arr.max()),
        n,
        False,
    )


def aggregate(
    records: Sequence[MetricRecord],
    group_by: str = "scan",
    phases: Mapping[tuple[str, int], PhaseTag] | None = None,
) -> list[AggregateRow]:
    """Mean/sd/min/max/n of each metric per group.

    ``group_by`` is one of scan, label, phase, frame; grouping by phase
    needs a (scan_id, frame_index) -> PhaseTag mapping since metric
    records do not carry phase tags themselves.
    """
    if not records:
        raise StatsError("no records to aggregate")
    if group_by not in GROUP_KEYS:
        raise StatsError(f"unknown group_by {group_by!r} (use one of {GROUP_KEYS})")

    def key_of(r: MetricRecord) -> tuple[str, ...]:
        if group_by == "scan":
            return (r.scan_id,)
        if group_by == "label":
            return (str(r.label_id),)
        if group_by == "frame":
            return (str(r.frame_index),)
        if phases is None:
            raise StatsError("group_by='phase' needs the phases mapping")
        try:
            tag = phases[(r.scan_id, r.frame_index)]
        except KeyError:
            raise StatsError(
                f"no phase tag for scan {r.scan_id!r} frame {r.frame_index}"
            ) from None
        return (PhaseTag.parse(tag).value,)

    groups: dict[tuple[str, ...], list[MetricRecord]] = {}
    for r in records:
        groups.setdefault(key_of(r), []).append(r)
    rows = []
    for gkey in sorted(groups):
        for metric in ("dice", "mean_sym_dist", "p95_sym_dist"):
            vals = [getattr(r, metric) for r in groups[gkey]]
            mean, sd, lo, hi, n, flagged = _summary(vals)
            rows.append(
                AggregateRow(gkey, metric, mean, sd, lo, hi, n, flagged)
            )
    return rows


def temporal_curve(
    truth: Series4D, pred: Series4D, label_ids: tuple[int, ...] = DISTANCE_METRIC_IDS
) -> list[TemporalCurve]:
    """Per-label Dice against truth for every frame of the series."""
    if truth.n_frames != pred.n_frames:
        raise StatsError(
            f"frame count mismatch: truth {truth.n_frames}, predicted {pred.n_frames}"
        )
    curves = []
    for lid in label_ids:
        vals = []
        for ft, fp in zip(truth.frames, pred.frames):
            if not isinstance(ft, LabelVolume) or not isinstance(fp, LabelVolume):
                raise StatsError("temporal curves need label volumes on both sides")
            vals.append(dice(fp.label_mask(lid), ft.label_mask(lid)))
        curves.append(
            TemporalCurve(truth.scan_id, lid, tuple(vals), truth.phase_tags)
        )
    return curves


@dataclass(frozen=True)
class DipReport:
    dips: tuple[int, ...]
    unevaluable: tuple[int, ...]  # frames whose phase has too few members


def detect_dips(curve: TemporalCurve, z: float = 2.0) -> DipReport:
    """Frames whose Dice drops more than ``z`` sample standard deviations
    below the mean of the other frames of the same phase.

    Each frame is scored against its phase peers excluding itself, so a
    single outlier cannot mask itself by inflating the group's spread.
    Frames with fewer than two same-phase peers are unevaluable.
    """
    if z <= 0:
        raise StatsError("z threshold must be positive")
    values = np.asarray(curve.dice_per_frame)
    dips, unevaluable = [], []
    for i in range(curve.n_frames):
        peers = [
            values[j]
            for j in range(curve.n_frames)
            if j != i and curve.phase_tags[j] is curve.phase_tags[i]
        ]
        if len(peers) < 2:
            unevaluable.append(i)
            continue
        mean = float(np.mean(peers))
        sd = float(np.std(peers, ddof=1))
        if values[i] < mean - z * sd:
            dips.append(i)
    return DipReport(tuple(dips), tuple(unevaluable))


@dataclass(frozen=True)
class Table1Row:
    """Per-rater absolute gt-vs-pred differences for one measurement."""

    rater: str
    measurement: str
    mean_abs_diff: float
    sd_abs_diff: float
    t: float
    p: float
    n: int
    degenerate: bool = False


@dataclass(frozen=True)
class Table2Row:
    """Per-source inter-rater spread and consistency for one measurement."""

    source: MeasurementSource
    measurement: str
    mean_max_abs_diff: float
    sd_max_abs_diff: float
    icc: float
    n_targets: int
    n_raters: int


@dataclass(frozen=True)
class ComparisonReport:
    table1: tuple[Table1Row, ...]
    table2: tuple[Table2Row, ...]

    @property
    def any_degenerate(self) -> bool:
        return any(row.degenerate for row in self.table1)


def _match_by_key(
    gt: Iterable[MeasurementRecord], pred: Iterable[MeasurementRecord]
) -> list[tuple[MeasurementRecord, MeasurementRecord]]:
    gt_map = {(r.scan_id, r.frame): r for r in gt}
    pred_map = {(r.scan_id, r.frame): r for r in pred}
    missing = sorted(gt_map.keys() ^ pred_map.keys())
    if missing:
        listed = ", ".join(f"{s}/frame{f}" for s, f in missing)
        raise StatsError(f"unmatched (scan, frame) keys: {listed}")
    return [(gt_map[k], pred_map[k]) for k in sorted(gt_map)]


def _scan_means(records: Sequence[MeasurementRecord]) -> list[MeasurementRecord]:
    """Collapse to one synthetic record per scan (frame -1, fields averaged)."""
    by_scan: dict[str, list[MeasurementRecord]] = {}
    for rec in records:
        by_scan.setdefault(rec.scan_id, []).append(rec)
    out = []
    for scan_id in sorted(by_scan):
        group = by_scan[scan_id]
        means = {
            meas: float(np.mean([getattr(r, meas) for r in group]))
            for meas in MEASUREMENT_FIELDS
        }
        out.append(
            replace(group[0], frame=-1, **means)
        )
    return out


def measurement_comparison(
    gt: Sequence[MeasurementRecord],
    pred: Sequence[MeasurementRecord],
    raters: Sequence[MeasurementRecord] | None = None,
    icc_model: str = "icc3",
    pairing: str = "frame",
) -> ComparisonReport:
    """Ground-truth vs predicted measurement agreement.

    Table-1 rows compare matched (scan, frame) pairs per rater tag
    (untagged records form one "Automated" row): mean and sd of the
    absolute differences plus a paired t-test on the signed values.
    With pairing="scan" each side is first averaged per scan and the
    t-test pairs per-scan means instead of per-frame segmentations.
    Table-2 rows summarize rater-tagged records per source: the
    per-segmentation maximum absolute inter-rater difference averaged
    over segmentations, and the intraclass correlation across raters.
    """
    if pairing not in ("frame", "scan"):
        raise StatsError(f"unknown pairing {pairing!r} (expected frame or scan)")
    table1: list[Table1Row] = []
    by_rater: dict[str, tuple[list, list]] = {}
    for rec in gt:
        by_rater.setdefault(rec.rater or "", ([], []))[0].append(rec)
    for rec in pred:
        by_rater.setdefault(rec.rater or "", ([], []))[1].append(rec)
    for rater_tag in sorted(by_rater):
        gt_r, pred_r = by_rater[rater_tag]
        if pairing == "scan":
            gt_r, pred_r = _scan_means(gt_r), _scan_means(pred_r)
        matched = _match_by_key(gt_r, pred_r)
        for meas in MEASUREMENT_FIELDS:
            pairs = [
                (getattr(g, meas), getattr(p, meas)) for g, p in matched
            ]
            test = paired_t_test(PairedSample(tuple(pairs)))
            abs_d = np.abs(np.asarray(pairs)[:, 0] - np.asarray(pairs)[:, 1])
            mean, sd, _, _, n, _ = _summary(abs_d)
            table1.append(
                Table1Row(
                    rater=rater_tag or "Automated",
                    measurement=meas,
                    mean_abs_diff=mean,
                    sd_abs_diff=sd,
                    t=test.t,
                    p=test.p,
                    n=n,
                    degenerate=test.degenerate,
                )
            )

    table2: list[Table2Row] = []
    if raters:
        tagged = [r for r in raters if r.rater]
        if len(tagged) != len(raters):
            raise StatsError("table-2 records must all carry a rater tag")
        for source in sorted({r.source for r in tagged}, key=lambda s: s.value):
            of_source = [r for r in tagged if r.source is source]
            rater_ids = sorted({r.rater for r in of_source})
            targets = sorted({(r.scan_id, r.frame) for r in of_source})
            cell = {(r.scan_id, r.frame, r.rater): r for r in of_source}
            if len(cell) != len(of_source):
                raise StatsError(
                    f"duplicate rater measurement for source {source.value}"
                )
            for meas in MEASUREMENT_FIELDS:
                matrix = np.empty((len(targets), len(rater_ids)))
                for i, tgt in enumerate(targets):
                    for j, rid in enumerate(rater_ids):
                        rec = cell.get((*tgt, rid))
                        if rec is None:
                            raise StatsError(
                                f"missing measurement: scan {tgt[0]!r} frame "
                                f"{tgt[1]} rater {rid!r} ({source.value})"
                            )
                        matrix[i, j] = getattr(rec, meas)
                per_target_spread = matrix.max(axis=1) - matrix.min(axis=1)
                mean, sd, _, _, _, _ = _summary(per_target_spread)
                icc = icc_consistency(RaterMatrix(matrix), model=icc_model)
                table2.append(
                    Table2Row(
                        source=source,
                        measurement=meas,
                        mean_max_abs_diff=mean,
                        sd_max_abs_diff=sd,
                        icc=icc,
                        n_targets=len(targets),
                        n_raters=len(rater_ids),
                    )
                )
    return ComparisonReport(tuple(table1), tuple(table2))


@dataclass(frozen=True)
class OrientationSummary:
    mean_deg: float
    sd_deg: float
    min_deg: float
    max_deg: float
    any_flipped: bool
    n: int
    sd_flagged: bool = False


def orientation_summary(results: Sequence[OrientationResult]) -> OrientationSummary:
    """Mean +/- sd and range of offset angles, with the flipped flag."""
    if not results:
        raise StatsError("no orientation results")
    angles = [r.offset_angle_deg for r in results]
    mean, sd, lo, hi, n, flagged = _summary(angles)
    return OrientationSummary(
        mean_deg=mean,
        sd_deg=sd,
        min_deg=lo,
        max_deg=hi,
        any_flipped=any(r.flipped for r in results),
        n=n,
        sd_flagged=flagged,
    )
