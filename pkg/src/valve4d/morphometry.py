"""Automated valve landmark extraction and the three clinical measurements.

Replaces interactive point-picking with a deterministic voxel protocol:

  * attachment points: cusp voxels 26-adjacent to RootWall or LVO;
  * nadir center: centroid of each cusp's lowest attachment points along
    the outflow axis (lowest 5% by count);
  * commissures: connected clusters where two distinct cusp labels and
    RootWall meet within a 26-neighborhood; the commissure point is the
    cluster voxel with maximal axis projection;
  * free-margin center: centroid of the free-margin points (cusp boundary
    minus attachments) farthest from the attachment surface, restricted
    to the middle third of the arc between the cusp's two commissures;
  * annulus plane: least-squares plane through all nadir-region
    attachment points, normal oriented toward the STJ.

Measurements are taken on the non-fused cusp; for tricuspid valves the
convention is to measure the non-coronary cusp (NCusp), which keeps the
record schema uniform. Adjacency tests run in voxel index space; every
centroid, distance, and angle uses physical mm coordinates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import EmptyLabelError, LandmarkError
from .schema import (
    CUSP_IDS,
    LVO,
    NCUSP,
    ROOT_WALL,
    STJ,
    FusionType,
)
from .volume import LabelVolume

_N26 = np.ones((3, 3, 3), dtype=bool)
EXTREMAL_FRACTION = 0.05  # extremal point-band size for nadir / free margin


class MeasurementSource(str, enum.Enum):
    GROUND_TRUTH = "GroundTruth"
    PREDICTED = "Predicted"


@dataclass(frozen=True)
class CuspLandmarks:
    label_id: int
    nadir_center_mm: np.ndarray
    free_margin_center_mm: np.ndarray
    attachment_points_mm: np.ndarray  # (n, 3)
    nadir_points_mm: np.ndarray  # lowest-projection attachment band, (k, 3)


@dataclass(frozen=True)
class Commissure:
    point_mm: np.ndarray
    cusp_pair: tuple[int, int]  # sorted label ids


@dataclass(frozen=True)
class ValveLandmarks:
    outflow_axis: np.ndarray  # unit, LVO -> STJ
    annulus_plane_point_mm: np.ndarray
    annulus_plane_normal: np.ndarray  # unit, toward STJ
    annulus_center_mm: np.ndarray
    cusps: dict[int, CuspLandmarks]
    commissures: tuple[Commissure, ...]
    non_fused_cusp: int  # measured cusp; NCusp by convention when tricuspid

    def __post_init__(self):
        if float(np.dot(self.annulus_plane_normal, self.outflow_axis)) <= 0:
            raise LandmarkError("annulus normal does not point toward the STJ")

    def commissures_of(self, label_id: int) -> tuple[Commissure, ...]:
        return tuple(c for c in self.commissures if label_id in c.cusp_pair)


@dataclass(frozen=True)
class MeasurementRecord:
    scan_id: str
    frame: int
    geometric_cusp_height_mm: float
    annulus_diameter_mm: float
    commissural_angle_deg: float
    source: MeasurementSource
    rater: str | None = None

    def __post_init__(self):
        if self.geometric_cusp_height_mm <= 0 or self.annulus_diameter_mm <= 0:
            raise ValueError("measurements must be positive")
        if not 0 < self.commissural_angle_deg <= 180:
            raise ValueError("commissural angle must lie in (0, 180]")


def _require_labels(v: LabelVolume) -> None:
    present = set(v.present_ids())
    for lab in v.schema.ids:
        if lab not in present:
            raise EmptyLabelError(f"empty label {v.schema.name_of(lab)}")


def _world_points(v: LabelVolume, mask: np.ndarray) -> np.ndarray:
    return v.geometry.voxel_to_world(np.argwhere(mask))


def _extremal_band(points: np.ndarray, scores: np.ndarray, fraction: float,
                   lowest: bool) -> np.ndarray:
    """The `fraction` (by count, at least one) of points with extreme score.

    Score ties at the cutoff are included whole: slicing inside a tie class
    would keep a scan-order-dependent, spatially lopsided subset.
    """
    n_take = max(1, math.ceil(fraction * len(scores)))
    if lowest:
        thr = np.partition(scores, n_take - 1)[n_take - 1]
        take = scores <= thr + 1e-9
    else:
        thr = np.partition(scores, len(scores) - n_take)[len(scores) - n_take]
        take = scores >= thr - 1e-9
    return points[take]


def _commissure_clusters(v: LabelVolume, axis: np.ndarray) -> list[Commissure]:
    wall_near = ndimage.binary_dilation(v.label_mask(ROOT_WALL), structure=_N26)
    cusp_near = {c: ndimage.binary_dilation(v.label_mask(c), structure=_N26) for c in CUSP_IDS}
    labeled_any = np.isin(v.data, (*CUSP_IDS, ROOT_WALL))
    cap = v.geometry.voxel_diagonal_mm
    out = []
    for a in CUSP_IDS:
        for b in CUSP_IDS:
            if b <= a:
                continue
            support = cusp_near[a] & cusp_near[b] & wall_near & labeled_any
            if not support.any():
                continue
            comp, n_comp = ndimage.label(support, structure=_N26)
            for ci in range(1, n_comp + 1):
                pts = v.geometry.voxel_to_world(np.argwhere(comp == ci))
                proj = pts @ axis
                # centroid of the top cap: a single argmax voxel carries a
                # grid-quantized transverse position that biases the angle
                top = pts[proj >= proj.max() - cap]
                out.append(Commissure(top.mean(axis=0), (a, b)))
    if not out:
        raise LandmarkError("no commissure cluster found")
    # deterministic ordering: by cusp pair, then by axis projection
    out.sort(key=lambda c: (c.cusp_pair, float(np.dot(c.point_mm, axis))))
    return out


def _azimuth(points: np.ndarray, center: np.ndarray, axis: np.ndarray) -> np.ndarray:
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(axis)))] = 1.0
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    rel = np.atleast_2d(points) - center
    return np.arctan2(rel @ e2, rel @ e1)


def _mid_arc_mask(phi: np.ndarray, phi0: float, phi1: float) -> np.ndarray:
    """Middle third of the arc from phi0 to phi1 that contains the points."""
    two_pi = 2.0 * np.pi
    width = (phi1 - phi0) % two_pi
    if width == 0.0:
        return np.ones(phi.shape, dtype=bool)
    u = ((phi - phi0) % two_pi) / width
    inside = u <= 1.0
    if inside.sum() < phi.size - inside.sum():
        # points live on the complementary arc; reparametrize over it
        width_c = two_pi - width
        u = ((phi - phi1) % two_pi) / width_c
    return (u >= 1.0 / 3.0) & (u <= 2.0 / 3.0)


def _fit_plane(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    center = points.mean(axis=0)
    cov = np.cov((points - center).T)
    evals, evecs = np.linalg.eigh(cov)
    # a usable plane needs spread in two directions beyond the normal one
    if evals[1] <= 1e-9 * max(evals[2], 1e-30):
        raise LandmarkError("degenerate plane fit (collinear points)")
    return center, evecs[:, 0]


def extract_landmarks(
    v: LabelVolume,
    fusion: FusionType,
    extremal_fraction: float = EXTREMAL_FRACTION,
) -> ValveLandmarks:
    """Locate the measurement anchor points of one segmented frame."""
    _require_labels(v)
    fusion = FusionType.parse(fusion)
    axis = v.centroid_mm(STJ) - v.centroid_mm(LVO)
    norm = float(np.linalg.norm(axis))
    if norm == 0:
        raise LandmarkError("LVO and STJ centroids coincide")
    axis = axis / norm

    anchor_near = ndimage.binary_dilation(
        v.label_mask(ROOT_WALL) | v.label_mask(LVO), structure=_N26
    )
    attachments: dict[int, np.ndarray] = {}
    nadir_bands: dict[int, np.ndarray] = {}
    boundaries: dict[int, np.ndarray] = {}
    for c in CUSP_IDS:
        mask = v.label_mask(c)
        attach_mask = mask & anchor_near
        if not attach_mask.any():
            raise LandmarkError(
                f"cusp {v.schema.name_of(c)} has no wall attachment"
            )
        interior = ndimage.binary_erosion(mask, structure=_N26, border_value=0)
        boundaries[c] = mask & ~interior & ~attach_mask
        pts = _world_points(v, attach_mask)
        attachments[c] = pts
        nadir_bands[c] = _extremal_band(pts, pts @ axis, extremal_fraction, lowest=True)

    plane_pts = np.concatenate([nadir_bands[c] for c in CUSP_IDS])
    plane_point, normal = _fit_plane(plane_pts)
    if float(np.dot(normal, axis)) < 0:
        normal = -normal

    wall_centroid = v.centroid_mm(ROOT_WALL)
    annulus_center = wall_centroid - np.dot(wall_centroid - plane_point, normal) * normal

    commissures = _commissure_clusters(v, axis)

    cusps: dict[int, CuspLandmarks] = {}
    for c in CUSP_IDS:
        nadir_center = nadir_bands[c].mean(axis=0)
        fm_pts = _world_points(v, boundaries[c])
        if fm_pts.shape[0] == 0:
            raise LandmarkError(
                f"cusp {v.schema.name_of(c)} has no free-margin points"
            )
        own = [cm for cm in commissures if c in cm.cusp_pair]
        if len(own) == 2:
            phi = _azimuth(fm_pts, annulus_center, axis)
            phi0 = float(_azimuth(own[0].point_mm, annulus_center, axis)[0])
            phi1 = float(_azimuth(own[1].point_mm, annulus_center, axis)[0])
            mid = _mid_arc_mask(phi, phi0, phi1)
            if mid.any():
                fm_pts = fm_pts[mid]
        dist, _ = cKDTree(attachments[c]).query(fm_pts)
        fm_center = _extremal_band(fm_pts, dist, extremal_fraction, lowest=False).mean(axis=0)
        cusps[c] = CuspLandmarks(
            label_id=c,
            nadir_center_mm=nadir_center,
            free_margin_center_mm=fm_center,
            attachment_points_mm=attachments[c],
            nadir_points_mm=nadir_bands[c],
        )

    measured = fusion.non_fused_cusp if fusion is not FusionType.TRICUSPID else NCUSP
    return ValveLandmarks(
        outflow_axis=axis,
        annulus_plane_point_mm=plane_point,
        annulus_plane_normal=normal,
        annulus_center_mm=annulus_center,
        cusps=cusps,
        commissures=tuple(commissures),
        non_fused_cusp=measured,
    )


def geometric_cusp_height(lm: ValveLandmarks) -> float:
    """Nadir-center to free-margin-center distance of the measured cusp, mm."""
    cusp = lm.cusps.get(lm.non_fused_cusp)
    if cusp is None:
        raise LandmarkError("measured cusp landmarks missing")
    return float(
        np.linalg.norm(cusp.free_margin_center_mm - cusp.nadir_center_mm)
    )


def annulus_diameter(
    lm: ValveLandmarks, v: LabelVolume, boundary: str = "inner"
) -> float:
    """Nadir to the opposite root-wall crossing, along an in-plane ray, mm."""
    if boundary not in ("inner", "outer"):
        raise ValueError("boundary must be 'inner' or 'outer'")
    cusp = lm.cusps.get(lm.non_fused_cusp)
    if cusp is None:
        raise LandmarkError("measured cusp landmarks missing")
    origin = cusp.nadir_center_mm
    direction = lm.annulus_center_mm - origin
    direction = direction - np.dot(direction, lm.annulus_plane_normal) * lm.annulus_plane_normal
    half_span = float(np.linalg.norm(direction))
    if half_span == 0:
        raise LandmarkError("nadir center coincides with the annulus center")
    direction = direction / half_span

    step = min(v.geometry.spacing) / 4.0
    max_steps = int(np.ceil(4.0 * np.linalg.norm(
        np.asarray(v.geometry.dims) * np.asarray(v.geometry.spacing)
    ) / step))
    dims = v.geometry.dims
    s = half_span  # start at the center: the crossing must be opposite
    prev = s
    inside_wall = False
    for _ in range(max_steps):
        s += step
        idx = np.rint(v.geometry.world_to_voxel(origin + s * direction)).astype(int)
        if any(idx < 0) or any(idx >= dims):
            raise LandmarkError("no wall intersection")
        lab = int(v.data[tuple(idx)])
        if boundary == "inner":
            if lab == ROOT_WALL:
                return float(0.5 * (prev + s))
        else:
            if lab == ROOT_WALL:
                inside_wall = True
            elif inside_wall:
                return float(0.5 * (prev + s))
        prev = s
    raise LandmarkError("no wall intersection")


def commissural_angle(lm: ValveLandmarks) -> float:
    """Angle at the annulus center between the measured cusp's commissures."""
    own = lm.commissures_of(lm.non_fused_cusp)
    if len(own) != 2:
        raise LandmarkError(
            f"measured cusp has {len(own)} commissures, expected 2"
        )
    n = lm.annulus_plane_normal
    center = lm.annulus_center_mm

    def in_plane(p):
        rel = p - center
        return rel - np.dot(rel, n) * n

    v0, v1 = in_plane(own[0].point_mm), in_plane(own[1].point_mm)
    n0, n1 = np.linalg.norm(v0), np.linalg.norm(v1)
    if n0 == 0 or n1 == 0:
        raise LandmarkError("commissure projects onto the annulus center")
    ang = float(np.degrees(np.arccos(np.clip(np.dot(v0, v1) / (n0 * n1), -1.0, 1.0))))
    if ang <= 0:
        raise LandmarkError("degenerate commissural angle")
    return ang


def measure_frame(
    v: LabelVolume,
    fusion: FusionType,
    scan_id: str = "",
    frame: int = 0,
    source: MeasurementSource = MeasurementSource.PREDICTED,
    rater: str | None = None,
    boundary: str = "inner",
) -> MeasurementRecord:
    """The three clinical measurements of one frame as a single record."""
    lm = extract_landmarks(v, fusion)
    return MeasurementRecord(
        scan_id=scan_id,
        frame=frame,
        geometric_cusp_height_mm=geometric_cusp_height(lm),
        annulus_diameter_mm=annulus_diameter(lm, v, boundary=boundary),
        commissural_angle_deg=commissural_angle(lm),
        source=MeasurementSource(source),
        rater=rater,
    )


def landmarks_to_dict(lm: ValveLandmarks, schema=None) -> dict:
    """JSON-ready labeled point set, for external visualization."""
    name = (lambda i: schema.name_of(i)) if schema is not None else str
    return {
        "outflow_axis": lm.outflow_axis.tolist(),
        "annulus_plane_point_mm": lm.annulus_plane_point_mm.tolist(),
        "annulus_plane_normal": lm.annulus_plane_normal.tolist(),
        "annulus_center_mm": lm.annulus_center_mm.tolist(),
        "non_fused_cusp": name(lm.non_fused_cusp),
        "cusps": {
            name(c.label_id): {
                "nadir_center_mm": c.nadir_center_mm.tolist(),
                "free_margin_center_mm": c.free_margin_center_mm.tolist(),
                "n_attachment_points": int(c.attachment_points_mm.shape[0]),
            }
            for c in lm.cusps.values()
        },
        "commissures": [
            {
                "point_mm": c.point_mm.tolist(),
                "cusp_pair": [name(a) for a in c.cusp_pair],
            }
            for c in lm.commissures
        ],
    }
