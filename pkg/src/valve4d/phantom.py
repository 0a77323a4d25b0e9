"""Parametric aortic-valve label phantom with exact analytic ground truth.

Geometry, in a canonical frame with the outflow axis along +z and the
annulus (nadir) plane at z = 0:

  * root wall: cylindrical shell, inner radius R = annulus_diameter/2;
  * LVO and STJ: filled disk bands capping the wall below and above;
  * cusps: thin ruled sheets between an attachment saddle on the inner
    wall, z_att(u) = h * (1-2u)^2 (exactly 0 at the mid-arc nadir and
    deliberately steep at the sector ends, so the commissure peaks are
    sharply localized), and a free-margin curve that plateaus at radius
    r_c(open_fraction) over the middle third of the arc. The plateau
    height z_b is solved so that ||free_margin_center - nadir|| equals
    the requested geometric cusp height exactly, for every open fraction.

Every ruled segment lies in its azimuth half-plane, so voxel labeling and
the inter-frame displacement field reduce to 2D point-segment geometry in
(r, z). The displacement truth is a pull-back field: u(x) maps a target
frame position to its source position in the reference frame, matching
the convention warp_labels applies.

A bicuspid fused pair is modeled as two sectors whose shared boundary
(the raphe) only rises to a fraction of the commissure height; the
non-fused cusp keeps two full commissures, which is what the measurement
protocol relies on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import PhantomError
from .registration import warp_labels
from .schema import CUSP_IDS, LVO, NCUSP, ROOT_WALL, STJ, DEFAULT_SCHEMA, FusionType, PhaseTag
from .volume import DisplacementField, LabelVolume, Series4D, VolumeGeometry

_BAND_MM = 1.5  # LVO/STJ demarcation band thickness (per max spacing below)
_BELOW_NADIR_MM = 3.0  # wall extent below the annulus plane
_RC_MIN_FRAC = 0.30  # free-margin plateau radius at open_fraction 0 (of R)
_RC_MAX_FRAC = 0.80  # ... at open_fraction 1
_BUMP_MM = 1.2  # extra mid-arc dip localizing the free-margin tip
_RIM_RADIUS_MM = 0.9  # free-edge nodular thickening (mid-arc, tapered away)
_RAPHE_FRAC = 0.45  # raphe height as a fraction of commissure height
_FIELD_FALLOFF_TAU = 4.0  # displacement window half-width, in thicknesses


@dataclass(frozen=True)
class PhantomSpec:
    annulus_diameter_mm: float = 24.0
    root_height_mm: float = 28.0
    wall_thickness_mm: float = 2.0
    cusp_geometric_height_mm: float = 14.0
    commissural_angle_deg: float = 160.0
    fusion: FusionType = FusionType.LR_FUSED
    n_frames: int = 4
    open_fractions: tuple[float, ...] | None = None
    spacing_mm: tuple[float, float, float] = (0.5, 0.5, 0.5)
    outflow_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    noise_voxels: float = 0.0
    cusp_thickness_mm: float = 1.0
    margin_mm: float = 2.0
    min_dims: tuple[int, int, int] | None = None
    seed: int = 0
    scan_id: str = "PH01"
    patient_id: str = "PH"

    def __post_init__(self):
        if isinstance(self.spacing_mm, (int, float)):
            object.__setattr__(
                self, "spacing_mm", (float(self.spacing_mm),) * 3
            )
        d, wt = self.annulus_diameter_mm, self.wall_thickness_mm
        if not 0 < wt < d / 4:
            raise PhantomError("wall thickness must lie in (0, diameter/4)")
        if self.fusion is FusionType.TRICUSPID:
            if abs(self.commissural_angle_deg - 120.0) > 1e-9:
                raise PhantomError("tricuspid commissures sit at exactly 120 degrees")
        elif not 0 < self.commissural_angle_deg <= 180:
            raise PhantomError("commissural angle must lie in (0, 180]")
        if not 0 < self.cusp_geometric_height_mm < self.root_height_mm:
            raise PhantomError("cusp height must lie in (0, root height)")
        if self.n_frames < 1:
            raise PhantomError("need at least one frame")
        opens = self.open_fractions
        if opens is None:
            if self.n_frames == 1:
                opens = (0.0,)
            else:
                opens = tuple(np.linspace(0.0, 1.0, self.n_frames).tolist())
            object.__setattr__(self, "open_fractions", opens)
        if len(self.open_fractions) != self.n_frames:
            raise PhantomError("one open_fraction per frame required")
        if any(not 0.0 <= o <= 1.0 for o in self.open_fractions):
            raise PhantomError("open fractions must lie in [0, 1]")
        if min(self.spacing_mm) <= 0:
            raise PhantomError("spacing must be positive")
        if np.linalg.norm(self.outflow_axis) == 0:
            raise PhantomError("outflow axis must be nonzero")
        if self.noise_voxels < 0 or self.cusp_thickness_mm <= 0:
            raise PhantomError("degenerate noise or thickness")
        # derived feasibility: commissures must fit inside the wall band,
        # and the cusp must be able to span from wall to closed free margin
        R = d / 2.0
        hc = self.cusp_geometric_height_mm
        if hc + 1.0 > self.root_height_mm - _BELOW_NADIR_MM:
            raise PhantomError("root too short for the cusp apparatus")
        min_span = R * (1.0 - _RC_MIN_FRAC) + _BUMP_MM
        if hc <= min_span:
            raise PhantomError(
                "cusp height cannot span the closed valve "
                f"(needs > {min_span:.1f} mm here)"
            )


@dataclass(frozen=True)
class _Sector:
    label_id: int
    start: float  # radians
    width: float  # radians
    h0: float  # attachment height at u=0 (mm)
    h1: float  # attachment height at u=1 (mm)


@dataclass(frozen=True)
class FrameTruth:
    """Exact continuous-model landmarks and measurements for one frame."""

    open_fraction: float
    phase: PhaseTag
    nadir_mm: np.ndarray
    free_margin_center_mm: np.ndarray
    commissures_mm: tuple  # non-fused cusp's two first
    opposite_wall_point_mm: np.ndarray
    annulus_plane_point_mm: np.ndarray
    annulus_plane_normal: np.ndarray
    outflow_axis: np.ndarray
    annulus_diameter_mm: float
    geometric_cusp_height_mm: float
    commissural_angle_deg: float

    def verify(self, tol: float = 1e-9) -> None:
        """Recompute each scalar from the stored points; raises on drift."""
        h = float(np.linalg.norm(self.free_margin_center_mm - self.nadir_mm))
        if abs(h - self.geometric_cusp_height_mm) > tol:
            raise AssertionError(f"cusp height drift: {h}")
        dia = float(np.linalg.norm(self.opposite_wall_point_mm - self.nadir_mm))
        if abs(dia - self.annulus_diameter_mm) > tol:
            raise AssertionError(f"diameter drift: {dia}")
        c0, c1 = self.commissures_mm[0], self.commissures_mm[1]
        n = self.annulus_plane_normal
        p = self.annulus_plane_point_mm

        def proj(x):
            return x - np.dot(x - p, n) * n

        v0 = proj(c0) - p
        v1 = proj(c1) - p
        ang = np.degrees(
            np.arccos(
                np.clip(
                    np.dot(v0, v1) / (np.linalg.norm(v0) * np.linalg.norm(v1)),
                    -1.0,
                    1.0,
                )
            )
        )
        if abs(ang - self.commissural_angle_deg) > tol:
            raise AssertionError(f"commissural angle drift: {ang}")


@dataclass(frozen=True)
class PhantomTruth:
    frames: tuple[FrameTruth, ...]
    reference_index: int
    fields: tuple[DisplacementField, ...]  # reference -> each frame, pull-back
    non_fused_cusp: int | None

    def to_dict(self) -> dict:
        return {
            "reference_index": self.reference_index,
            "non_fused_cusp": self.non_fused_cusp,
            "frames": [
                {
                    "open_fraction": f.open_fraction,
                    "phase": f.phase.value,
                    "nadir_mm": f.nadir_mm.tolist(),
                    "free_margin_center_mm": f.free_margin_center_mm.tolist(),
                    "commissures_mm": [c.tolist() for c in f.commissures_mm],
                    "opposite_wall_point_mm": f.opposite_wall_point_mm.tolist(),
                    "annulus_plane_point_mm": f.annulus_plane_point_mm.tolist(),
                    "annulus_plane_normal": f.annulus_plane_normal.tolist(),
                    "outflow_axis": f.outflow_axis.tolist(),
                    "annulus_diameter_mm": f.annulus_diameter_mm,
                    "geometric_cusp_height_mm": f.geometric_cusp_height_mm,
                    "commissural_angle_deg": f.commissural_angle_deg,
                }
                for f in self.frames
            ],
        }

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


class _Model:
    """Derived canonical-frame quantities shared by voxelizer and truth."""

    def __init__(self, spec: PhantomSpec):
        self.spec = spec
        self.R = spec.annulus_diameter_mm / 2.0
        self.R_out = self.R + spec.wall_thickness_mm
        self.hc = spec.cusp_geometric_height_mm
        self.tau = spec.cusp_thickness_mm
        # the hinge is labeled as cusp slightly into the wall, as raters do;
        # keeps the detected attachment set centered on the true hinge line
        self.embed = 0.5 * spec.cusp_thickness_mm
        self.band = max(_BAND_MM, 2.2 * max(spec.spacing_mm))
        self.z_w0 = -_BELOW_NADIR_MM
        self.z_w1 = spec.root_height_mm - _BELOW_NADIR_MM
        self.z_lvo = (self.z_w0 - self.band, self.z_w0)
        self.z_stj = (self.z_w1, self.z_w1 + self.band)
        self.sectors = self._build_sectors()

    def _build_sectors(self) -> tuple[_Sector, ...]:
        spec = self.spec
        hc, hr = self.hc, _RAPHE_FRAC * self.hc
        if spec.fusion is FusionType.TRICUSPID:
            third = 2.0 * np.pi / 3.0
            order = (NCUSP, min(set(CUSP_IDS) - {NCUSP}), max(set(CUSP_IDS) - {NCUSP}))
            return tuple(
                _Sector(lab, -third / 2.0 + k * third, third, hc, hc)
                for k, lab in enumerate(order)
            )
        gamma = np.radians(spec.commissural_angle_deg)
        nf = spec.fusion.non_fused_cusp
        pair = sorted(set(CUSP_IDS) - {nf})
        w_f = np.pi - gamma / 2.0
        return (
            _Sector(nf, -gamma / 2.0, gamma, hc, hc),
            _Sector(pair[0], gamma / 2.0, w_f, hc, hr),
            _Sector(pair[1], np.pi, w_f, hr, hc),
        )

    def r_c(self, o: float) -> float:
        return self.R * (_RC_MIN_FRAC + (_RC_MAX_FRAC - _RC_MIN_FRAC) * o)

    def r_tip(self, o: float) -> float:
        return self.r_c(o) - _BUMP_MM

    def z_b(self, o: float) -> float:
        span = self.R - self.r_tip(o)
        return float(np.sqrt(self.hc**2 - span**2))

    def z_att(self, u: np.ndarray, s: _Sector) -> np.ndarray:
        h = np.where(u <= 0.5, s.h0, s.h1)
        return h * (1.0 - 2.0 * u) ** 2

    @staticmethod
    def _plateau(u: np.ndarray) -> np.ndarray:
        # smoothstep up over [0, 1/3], exactly 1 on [1/3, 2/3], mirrored down
        t = np.clip(3.0 * np.minimum(u, 1.0 - u), 0.0, 1.0)
        return t * t * (3.0 - 2.0 * t)

    @staticmethod
    def _bump(u: np.ndarray) -> np.ndarray:
        # cos^2 lobe on the middle third, peaking at the mid-arc tip
        inside = np.abs(u - 0.5) <= 1.0 / 6.0
        return np.where(inside, np.cos(3.0 * np.pi * (u - 0.5)) ** 2, 0.0)

    def r_f(self, u: np.ndarray, o: float) -> np.ndarray:
        return (
            self.R
            - (self.R - self.r_c(o)) * self._plateau(u)
            - _BUMP_MM * self._bump(u)
        )

    def z_fm(self, u: np.ndarray, o: float, s: _Sector) -> np.ndarray:
        ss = u * u * (3.0 - 2.0 * u)
        mid = 0.5 * (s.h0 + s.h1)
        return s.h0 + (s.h1 - s.h0) * ss + (self.z_b(o) - mid) * self._plateau(u)

    def rim_radius(self, u: np.ndarray) -> np.ndarray:
        # nodular thickening of the free edge on the mid arc; tapers back to
        # sheet thickness toward the commissures so the pinch stays sharp
        return self.tau / 2.0 + max(0.0, _RIM_RADIUS_MM - self.tau / 2.0) * self._plateau(u)

    @property
    def reach(self) -> float:
        """Largest half-thickness anywhere on a cusp."""
        return max(self.tau / 2.0, _RIM_RADIUS_MM)


def _seg_dist_2d(qr, qz, p0r, p0z, p1r, p1z):
    """Distance and clamped parameter of 2D points onto per-point segments."""
    vr = p1r - p0r
    vz = p1z - p0z
    denom = vr * vr + vz * vz
    t = ((qr - p0r) * vr + (qz - p0z) * vz) / np.where(denom > 0, denom, 1.0)
    t = np.clip(np.where(denom > 0, t, 0.0), 0.0, 1.0)
    dr = qr - (p0r + t * vr)
    dz = qz - (p0z + t * vz)
    return np.sqrt(dr * dr + dz * dz), t


def _basis_for_axis(axis) -> np.ndarray:
    """Orthonormal matrix whose third column is the given axis."""
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(a)))] = 1.0
    b1 = np.cross(a, helper)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(a, b1)
    return np.stack([b1, b2, a], axis=1)


def voxelization_error_bound(spec: PhantomSpec) -> float:
    """Half the voxel diagonal: the tolerance for voxel-derived landmarks."""
    s = np.asarray(spec.spacing_mm)
    return float(0.5 * np.sqrt((s**2).sum()))


def _grid_geometry(spec: PhantomSpec, model: _Model, Q: np.ndarray) -> VolumeGeometry:
    margin = max(spec.margin_mm, 2.0 * max(spec.spacing_mm))
    e_xy = model.R_out + margin
    z_lo = model.z_lvo[0] - margin
    z_hi = model.z_stj[1] + margin
    corners = np.array(
        [
            [sx * e_xy, sy * e_xy, z]
            for sx in (-1, 1)
            for sy in (-1, 1)
            for z in (z_lo, z_hi)
        ]
    )
    world = corners @ Q.T
    lo, hi = world.min(axis=0), world.max(axis=0)
    spacing = np.asarray(spec.spacing_mm)
    dims = np.ceil((hi - lo) / spacing).astype(int) + 1
    if spec.min_dims is not None:
        dims = np.maximum(dims, spec.min_dims)
    center = Q @ np.array([0.0, 0.0, 0.5 * (z_lo + z_hi)])
    origin = center - 0.5 * (dims - 1) * spacing
    return VolumeGeometry(tuple(int(d) for d in dims), tuple(spacing), tuple(origin), np.eye(3))


def _canonical_coords(geom: VolumeGeometry, Q: np.ndarray) -> tuple[np.ndarray, ...]:
    idx = np.meshgrid(*[np.arange(d, dtype=np.float64) for d in geom.dims], indexing="ij")
    spacing = np.asarray(geom.spacing)
    world = [idx[a] * spacing[a] + geom.origin[a] for a in range(3)]
    # canonical p = Q^T x_world
    x = Q[0, 0] * world[0] + Q[1, 0] * world[1] + Q[2, 0] * world[2]
    y = Q[0, 1] * world[0] + Q[1, 1] * world[1] + Q[2, 1] * world[2]
    z = Q[0, 2] * world[0] + Q[1, 2] * world[1] + Q[2, 2] * world[2]
    return x, y, z


def _static_labels(model: _Model, x, y, z) -> np.ndarray:
    r = np.hypot(x, y)
    labels = np.zeros(x.shape, dtype=np.uint8)
    in_disk = r <= model.R_out
    labels[(z >= model.z_lvo[0]) & (z < model.z_lvo[1]) & in_disk] = LVO
    labels[(z > model.z_stj[0]) & (z <= model.z_stj[1]) & in_disk] = STJ
    labels[
        (z >= model.z_w0) & (z <= model.z_w1) & (r >= model.R) & in_disk
    ] = ROOT_WALL
    return labels


def _cusp_candidates(model: _Model, x, y, z):
    r = np.hypot(x, y)
    pad = 2.0 * model.reach
    cand = (r < model.R + model.embed) & (z > -pad) & (z < model.hc + pad)
    return cand, r


def _sector_param(model: _Model, theta: np.ndarray, s: _Sector):
    delta = np.mod(theta - s.start, 2.0 * np.pi)
    member = delta <= s.width + 1e-12
    return member, delta / s.width


def _cusp_labels(model: _Model, o: float, x, y, z, labels: np.ndarray) -> None:
    cand, r = _cusp_candidates(model, x, y, z)
    cand &= (labels == 0) | (labels == ROOT_WALL)
    if not cand.any():
        return
    rr, zz = r[cand], z[cand]
    theta = np.arctan2(y[cand], x[cand])
    best_c = np.full(rr.shape, np.inf)
    best_lab = np.zeros(rr.shape, dtype=np.uint8)
    for s in sorted(model.sectors, key=lambda s: s.label_id):
        member, u = _sector_param(model, theta, s)
        if not member.any():
            continue
        u_m = np.clip(u[member], 0.0, 1.0)
        fr = model.r_f(u_m, o)
        fz = model.z_fm(u_m, o, s)
        d, _ = _seg_dist_2d(
            rr[member],
            zz[member],
            np.full(u_m.shape, model.R),
            model.z_att(u_m, s),
            fr,
            fz,
        )
        # signed clearance: inside the sheet or inside the free-edge nodule
        d_rim = np.hypot(rr[member] - fr, zz[member] - fz)
        clear = np.minimum(d - model.tau / 2.0, d_rim - model.rim_radius(u_m))
        # inside the wall only the opening-independent hinge tube is painted,
        # so the embedded layer (and hence the wall mask) is static in time
        d_hinge = np.hypot(rr[member] - model.R, zz[member] - model.z_att(u_m, s))
        clear = np.where(rr[member] >= model.R, d_hinge - model.tau / 2.0, clear)
        # strict improvement keeps the smallest label id on exact ties
        improve = clear < best_c[member]
        idxs = np.where(member)[0][improve]
        best_c[idxs] = clear[improve]
        best_lab[idxs] = s.label_id
    hit = best_c <= 0.0
    out_idx = np.where(cand.reshape(-1))[0][hit]
    labels.reshape(-1)[out_idx] = best_lab[hit]


def _frame_field(
    model: _Model, o_t: float, o_r: float, x, y, z, Q: np.ndarray
) -> np.ndarray:
    """Pull-back displacement (world mm) mapping frame t to the reference."""
    shape = x.shape
    out = np.zeros(shape + (3,), dtype=np.float32)
    if o_t == o_r:
        return out
    r = np.hypot(x, y)
    # the unit-weight zone must cover every labeled voxel of BOTH frames'
    # sheets: half-thickness plus the largest free-margin excursion between
    # the two openings, else voxels in transit get attenuated displacement
    uu = np.linspace(0.0, 1.0, 257)
    gap = 0.0
    for s in model.sectors:
        dr = model.r_f(uu, o_r) - model.r_f(uu, o_t)
        dz = model.z_fm(uu, o_r, s) - model.z_fm(uu, o_t, s)
        gap = max(gap, float(np.hypot(dr, dz).max()))
    flat = model.reach + gap
    pad = max(_FIELD_FALLOFF_TAU * model.tau, 2.0 * flat)
    cand = (r < model.R + model.embed) & (z > -pad) & (z < model.hc + pad)
    # the root and the hinge line do not move between frames: keep the field
    # exactly zero on every static structure (and its embedded hinge voxels)
    static = (
        ((r >= model.R) & (z >= model.z_w0) & (z <= model.z_w1))
        | ((z >= model.z_lvo[0]) & (z < model.z_lvo[1]))
        | ((z > model.z_stj[0]) & (z <= model.z_stj[1]))
    )
    cand &= ~static
    if not cand.any():
        return out
    rr, zz = r[cand], z[cand]
    theta = np.arctan2(y[cand], x[cand])
    best_d = np.full(rr.shape, np.inf)
    disp_r = np.zeros(rr.shape)
    disp_z = np.zeros(rr.shape)
    for s in model.sectors:
        member, u = _sector_param(model, theta, s)
        if not member.any():
            continue
        u_m = np.clip(u[member], 0.0, 1.0)
        p0r = np.full(u_m.shape, model.R)
        p0z = model.z_att(u_m, s)
        d, rho = _seg_dist_2d(
            rr[member], zz[member], p0r, p0z,
            model.r_f(u_m, o_t), model.z_fm(u_m, o_t, s),
        )
        # unit weight across the sheet's own thickness (nodule included), then
        # a linear taper: attenuating labeled voxels tears them off their image
        w = np.clip((pad - d) / (pad - flat), 0.0, 1.0)
        dr = model.r_f(u_m, o_r) - model.r_f(u_m, o_t)
        dz = model.z_fm(u_m, o_r, s) - model.z_fm(u_m, o_t, s)
        improve = d < best_d[member]
        idxs = np.where(member)[0][improve]
        best_d[idxs] = d[improve]
        disp_r[idxs] = (rho * w * dr)[improve]
        disp_z[idxs] = (rho * w * dz)[improve]
    u_can = np.zeros((rr.shape[0], 3))
    u_can[:, 0] = disp_r * np.cos(theta)
    u_can[:, 1] = disp_r * np.sin(theta)
    u_can[:, 2] = disp_z
    u_world = u_can @ Q.T
    flat = out.reshape(-1, 3)
    flat[cand.reshape(-1)] = u_world.astype(np.float32)
    return out


def jitter_labels(volume: LabelVolume, magnitude_voxels: float, seed: int = 0) -> LabelVolume:
    """Perturb label boundaries with a smooth random displacement field.

    The field's vector RMS is `magnitude_voxels` voxels, correlated over a
    few voxels, emulating segmentation noise without tearing structures.
    """
    if magnitude_voxels <= 0:
        return volume
    rng = np.random.default_rng(seed)
    dims = volume.geometry.dims
    eta = rng.standard_normal((3,) + dims).astype(np.float32)
    eta = ndimage.gaussian_filter(eta, sigma=(0, 3, 3, 3), mode="nearest")
    for c in range(3):
        sd = float(eta[c].std())
        if sd > 0:
            eta[c] *= magnitude_voxels / (sd * np.sqrt(3.0))
    base = np.meshgrid(*[np.arange(d, dtype=np.float32) for d in dims], indexing="ij")
    coords = np.ascontiguousarray(
        np.stack([base[a] + eta[a] for a in range(3)], axis=-1), dtype=np.float32
    )
    warped = _kernels.nn_warp(np.ascontiguousarray(volume.data), coords)
    return volume.with_data(warped)


def generate_phantom(spec: PhantomSpec) -> tuple[Series4D, PhantomTruth]:
    """Build the 4D phantom series and its exact analytic truth."""
    model = _Model(spec)
    Q = _basis_for_axis(spec.outflow_axis)
    geom = _grid_geometry(spec, model, Q)
    x, y, z = _canonical_coords(geom, Q)

    static = _static_labels(model, x, y, z)
    phases = tuple(
        PhaseTag.DIASTOLE if o <= 0.5 else PhaseTag.SYSTOLE
        for o in spec.open_fractions
    )
    ref_index = 0
    o_ref = spec.open_fractions[ref_index]

    frames = []
    truths = []
    fields = []
    nf = (
        spec.fusion.non_fused_cusp
        if spec.fusion is not FusionType.TRICUSPID
        else None
    )
    measured = nf if nf is not None else NCUSP
    nf_sector = next(s for s in model.sectors if s.label_id == measured)
    theta_mid = nf_sector.start + nf_sector.width / 2.0
    gamma = np.degrees(nf_sector.width)

    for i, o in enumerate(spec.open_fractions):
        labels = static.copy()
        _cusp_labels(model, o, x, y, z, labels)
        missing = set(DEFAULT_SCHEMA.ids) - set(np.unique(labels).tolist())
        if missing:
            names = ", ".join(DEFAULT_SCHEMA.name_of(m) for m in sorted(missing))
            raise PhantomError(f"grid too coarse: missing labels {names}")
        vol = LabelVolume(geom, labels)
        if spec.noise_voxels > 0:
            vol = jitter_labels(vol, spec.noise_voxels, seed=spec.seed * 1000 + i)
        frames.append(vol)

        r_tip, z_b = model.r_tip(o), model.z_b(o)
        nadir = Q @ np.array(
            [model.R * np.cos(theta_mid), model.R * np.sin(theta_mid), 0.0]
        )
        fm_center = Q @ np.array(
            [r_tip * np.cos(theta_mid), r_tip * np.sin(theta_mid), z_b]
        )
        opposite = Q @ np.array(
            [-model.R * np.cos(theta_mid), -model.R * np.sin(theta_mid), 0.0]
        )
        comm_angles = [nf_sector.start, nf_sector.start + nf_sector.width]
        if spec.fusion is FusionType.TRICUSPID:
            comm_angles.append(nf_sector.start + 2.0 * nf_sector.width)
        else:
            comm_angles.append(np.pi)  # raphe junction, reduced height
        comm_heights = [model.hc, model.hc] + (
            [model.hc] if spec.fusion is FusionType.TRICUSPID else [_RAPHE_FRAC * model.hc]
        )
        commissures = tuple(
            Q @ np.array([model.R * np.cos(a), model.R * np.sin(a), h])
            for a, h in zip(comm_angles, comm_heights)
        )
        truths.append(
            FrameTruth(
                open_fraction=o,
                phase=phases[i],
                nadir_mm=nadir,
                free_margin_center_mm=fm_center,
                commissures_mm=commissures,
                opposite_wall_point_mm=opposite,
                annulus_plane_point_mm=Q @ np.zeros(3),
                annulus_plane_normal=Q @ np.array([0.0, 0.0, 1.0]),
                outflow_axis=Q @ np.array([0.0, 0.0, 1.0]),
                annulus_diameter_mm=2.0 * model.R,
                geometric_cusp_height_mm=model.hc,
                commissural_angle_deg=float(gamma),
            )
        )
        fields.append(
            DisplacementField(geom, _frame_field(model, o, o_ref, x, y, z, Q))
        )

    ref_indices = {}
    for phase in (PhaseTag.DIASTOLE, PhaseTag.SYSTOLE):
        idxs = [i for i, p in enumerate(phases) if p is phase]
        if idxs:
            ref_indices[phase] = idxs[0]

    series = Series4D(
        frames=tuple(frames),
        phase_tags=phases,
        reference_indices=ref_indices,
        scan_id=spec.scan_id,
        patient_id=spec.patient_id,
        fusion=spec.fusion,
    )
    truth = PhantomTruth(
        frames=tuple(truths),
        reference_index=ref_index,
        fields=tuple(fields),
        non_fused_cusp=nf,
    )
    return series, truth


def apply_synthetic_deformation(frame: LabelVolume, disp: DisplacementField) -> LabelVolume:
    """Resample labels through a displacement field (pull-back, NN)."""
    return warp_labels(frame, disp)
