"""Segmentation accuracy metrics: Dice, symmetric mesh distance,
outflow orientation, and majority-vote label fusion.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import EmptyLabelError, EmptyMeshError, GeometryMismatchError
from .mesh import DEFAULT_SUPERSAMPLE, SurfaceMesh, extract_surface
from .schema import DISTANCE_METRIC_IDS, LVO, STJ
from .volume import LabelVolume, require_same_geometry


class BothEmptyWarning(UserWarning):
    """Dice was requested for two empty masks; 1.0 returned by convention."""


@dataclass(frozen=True)
class MetricRecord:
    scan_id: str
    frame_index: int
    label_id: int
    dice: float
    mean_sym_dist: float
    p95_sym_dist: float
    dice_both_empty: bool = False

    def __post_init__(self):
        if not 0.0 <= self.dice <= 1.0:
            raise ValueError(f"dice {self.dice} outside [0, 1]")
        # mean > p95 is legitimate: nearest-rank p95 of a multiset that is
        # >=95% zeros is 0 while a few outliers pull the mean above it
        if self.mean_sym_dist < 0.0 or self.p95_sym_dist < 0.0:
            raise ValueError("distances must be nonnegative")


@dataclass(frozen=True)
class OrientationResult:
    offset_angle_deg: float
    flipped: bool = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.offset_angle_deg <= 180.0:
            raise ValueError(f"angle {self.offset_angle_deg} outside [0, 180]")
        object.__setattr__(self, "flipped", self.offset_angle_deg > 90.0)


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Dice overlap 2|a.b|/(|a|+|b|) of two binary masks.

    Both masks empty returns 1.0 and emits BothEmptyWarning.
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise GeometryMismatchError(f"mask shapes differ: {a.shape} vs {b.shape}")
    na = int(np.count_nonzero(a))
    nb = int(np.count_nonzero(b))
    if na + nb == 0:
        warnings.warn("Dice of two empty masks, returning 1.0", BothEmptyWarning)
        return 1.0
    inter = int(np.count_nonzero(a & b))
    return 2.0 * inter / (na + nb)


def symmetric_mesh_distance(a: SurfaceMesh, b: SurfaceMesh) -> tuple[float, float]:
    """Mean and 95th-percentile symmetric surface distance in mm.

    Each mesh's vertices are measured against the other mesh's full
    triangle surface (exact point-to-triangle distance); both directions
    are pooled into one multiset. The percentile is nearest-rank.
    """
    for name, m in (("first", a), ("second", b)):
        if m.n_vertices == 0 or m.n_triangles == 0:
            raise EmptyMeshError(f"{name} mesh is empty")
    d_ab = _kernels.min_distances_to_mesh(a.vertices, b.triangle_corners())
    d_ba = _kernels.min_distances_to_mesh(b.vertices, a.triangle_corners())
    pool = np.concatenate([d_ab, d_ba])
    pool.sort()
    rank = int(np.ceil(0.95 * len(pool))) - 1
    return float(pool.mean()), float(pool[rank])


def outflow_orientation(pred: LabelVolume, truth: LabelVolume) -> OrientationResult:
    """Angle between the LVO-to-STJ axes of two segmentations."""
    require_same_geometry(pred.geometry, truth.geometry, "volumes")
    vecs = []
    for name, vol in (("predicted", pred), ("truth", truth)):
        try:
            v = vol.centroid_mm(STJ) - vol.centroid_mm(LVO)
        except EmptyLabelError as exc:
            raise EmptyLabelError(f"{exc} in {name} volume") from None
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise EmptyLabelError(f"coincident LVO/STJ centroids in {name} volume")
        vecs.append(v / norm)
    cosang = float(np.clip(np.dot(vecs[0], vecs[1]), -1.0, 1.0))
    return OrientationResult(float(np.degrees(np.arccos(cosang))))


def majority_vote(preds: list[LabelVolume]) -> LabelVolume:
    """Per-voxel modal label across volumes; ties go to the smallest id."""
    if len(preds) < 2:
        raise ValueError("majority_vote needs at least 2 volumes")
    first = preds[0]
    for other in preds[1:]:
        require_same_geometry(first.geometry, other.geometry, "vote inputs")
    stack = np.ascontiguousarray(
        np.stack([p.data.reshape(-1) for p in preds])
    )
    n_ids = max(first.schema.ids) + 1
    fused = _kernels.majority_vote(stack, n_ids)
    return first.with_data(fused.reshape(first.geometry.dims))


def evaluate_frame(
    pred: LabelVolume,
    truth: LabelVolume,
    scan_id: str = "",
    frame_index: int = 0,
    label_ids: tuple[int, ...] = DISTANCE_METRIC_IDS,
    supersample: int = DEFAULT_SUPERSAMPLE,
) -> tuple[list[MetricRecord], OrientationResult]:
    """Dice + symmetric mesh distance per evaluated label, plus orientation.

    The evaluated labels default to the three cusps and the root wall;
    LVO/STJ enter only through the orientation angle.
    """
    require_same_geometry(pred.geometry, truth.geometry, "volumes")
    records = []
    for lid in label_ids:
        name = truth.schema.name_of(lid)
        d = dice(pred.label_mask(lid), truth.label_mask(lid))
        try:
            mesh_p = extract_surface(pred, lid, supersample)
            mesh_t = extract_surface(truth, lid, supersample)
        except EmptyLabelError as exc:
            raise EmptyLabelError(f"{exc} ({name} surface unavailable)") from None
        mean_d, p95_d = symmetric_mesh_distance(mesh_p, mesh_t)
        records.append(
            MetricRecord(
                scan_id=scan_id,
                frame_index=frame_index,
                label_id=lid,
                dice=d,
                mean_sym_dist=mean_d,
                p95_sym_dist=p95_d,
                dice_both_empty=False,
            )
        )
    orient = outflow_orientation(pred, truth)
    return records, orient
