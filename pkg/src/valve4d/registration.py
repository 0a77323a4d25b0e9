"""Deformable intra-phase registration and label propagation.

Multiresolution additive demons over per-label signed-distance channels:
each label becomes a clamped signed distance map, the update force is the
classic SSD demons step with fixed-image gradients, updates are smoothed
with a fluid Gaussian and the accumulated field with an elastic Gaussian.
Displacement vectors are stored in world mm; warping is a pull-back with
nearest-neighbor label sampling, so propagating a reference segmentation
needs no field inversion (the target frame is registered as fixed, the
reference as moving).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import PropagationError, RegistrationError
from .schema import PhaseTag
from .volume import (
    DisplacementField,
    LabelVolume,
    ScalarVolume,
    Series4D,
    require_same_geometry,
)

SDT_CLAMP_MM = 5.0


@dataclass(frozen=True)
class RegistrationConfig:
    n_levels: int = 3
    iterations: tuple[int, ...] = (100, 100, 60)  # coarsest level first
    sigma_fluid_mm: float = 1.2
    sigma_elastic_mm: float = 0.4
    step_scale: float = 2.0
    tolerance_mm: float = 0.002
    crop_pad_voxels: int = 8

    def __post_init__(self):
        if self.n_levels < 1:
            raise ValueError("n_levels must be >= 1")
        if len(self.iterations) != self.n_levels:
            raise ValueError("iterations must list one count per level")
        if min(self.iterations) < 1:
            raise ValueError("iteration counts must be positive")
        for name in ("sigma_fluid_mm", "sigma_elastic_mm", "step_scale", "tolerance_mm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _label_channels(vol: LabelVolume) -> np.ndarray:
    """Per-label signed distance channels, clamped and scaled to [-1, 1]."""
    spacing = vol.geometry.spacing
    ids = sorted(vol.schema.ids)
    chans = np.empty((len(ids),) + vol.geometry.dims, dtype=np.float32)
    for c, lid in enumerate(ids):
        mask = vol.data == lid
        if mask.any():
            d_out = ndimage.distance_transform_edt(~mask, sampling=spacing)
            d_in = ndimage.distance_transform_edt(mask, sampling=spacing)
            sd = np.clip(d_out - d_in, -SDT_CLAMP_MM, SDT_CLAMP_MM)
        else:
            sd = np.full(vol.geometry.dims, SDT_CLAMP_MM)
        chans[c] = sd / SDT_CLAMP_MM
    return chans


def _scalar_channel(vol: ScalarVolume) -> np.ndarray:
    data = vol.data.astype(np.float32)
    sd = float(data.std())
    if sd > 0:
        data = (data - float(data.mean())) / sd
    return data[None]


def _channels_of(vol) -> np.ndarray:
    if isinstance(vol, LabelVolume):
        return _label_channels(vol)
    if isinstance(vol, ScalarVolume):
        return _scalar_channel(vol)
    raise TypeError(f"cannot register {type(vol).__name__}")


def _foreground_slices(a, b, pad: int):
    """Bounding box of nonzero content in either volume, padded."""
    mask = (a.data != 0) | (b.data != 0)
    idx = np.nonzero(mask)
    if len(idx[0]) == 0:
        return tuple(slice(0, d) for d in a.geometry.dims)
    return tuple(
        slice(max(0, int(ax.min()) - pad), min(d, int(ax.max()) + 1 + pad))
        for ax, d in zip(idx, a.geometry.dims)
    )


def _halve(chans: np.ndarray) -> np.ndarray:
    sm = ndimage.gaussian_filter(chans, sigma=(0,) + (1.0,) * 3, mode="nearest")
    return np.ascontiguousarray(sm[:, ::2, ::2, ::2])


def _resample_field(u: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    """Linearly resample a (X,Y,Z,3) mm field onto a new grid shape."""
    if u.shape[:3] == shape:
        return u
    coords = np.meshgrid(
        *[
            np.linspace(0, u.shape[a] - 1, shape[a], dtype=np.float32)
            for a in range(3)
        ],
        indexing="ij",
    )
    out = np.empty(shape + (3,), dtype=np.float32)
    for c in range(3):
        out[..., c] = ndimage.map_coordinates(
            u[..., c], coords, order=1, mode="nearest"
        )
    return out


def _demons_level(
    fixed: np.ndarray,
    moving: np.ndarray,
    spacing: np.ndarray,
    u: np.ndarray,
    n_iter: int,
    cfg: RegistrationConfig,
    level: int,
) -> np.ndarray:
    """Run additive demons at one pyramid level. u is (X,Y,Z,3) in mm."""
    n_chan = fixed.shape[0]
    dims = fixed.shape[1:]
    # fixed-image gradients per channel, in mm^-1 (direction assumed axis-
    # aligned here; the caller works in the volume's index frame)
    grads = np.stack(
        [np.stack(np.gradient(fixed[c], *spacing), axis=-1) for c in range(n_chan)]
    ).astype(np.float32)  # (C, X, Y, Z, 3)
    g2_sum = np.einsum("cxyzv,cxyzv->xyz", grads, grads)
    xi2 = float(np.mean(spacing) ** 2)

    base = np.meshgrid(
        *[np.arange(d, dtype=np.float32) for d in dims], indexing="ij"
    )
    sig_fluid = cfg.sigma_fluid_mm / spacing
    sig_elastic = cfg.sigma_elastic_mm / spacing
    warped = np.empty_like(fixed)

    for it in range(n_iter):
        coords = [base[a] + u[..., a] / spacing[a] for a in range(3)]
        for c in range(n_chan):
            ndimage.map_coordinates(
                moving[c], coords, output=warped[c], order=1, mode="nearest"
            )
        diff = warped - fixed
        num = np.einsum("cxyz,cxyzv->xyzv", diff, grads)
        den = g2_sum + np.einsum("cxyz,cxyz->xyz", diff, diff) / xi2
        np.maximum(den, 1e-12, out=den)
        # descend the SSD: u <- u - (M(x+u) - F(x)) grad F / den
        step = (-cfg.step_scale * num) / den[..., None]
        for a in range(3):
            step[..., a] = ndimage.gaussian_filter(
                step[..., a], sigma=sig_fluid, mode="nearest"
            )
        if not np.all(np.isfinite(step)):
            raise RegistrationError(
                f"non-finite update at level {level}, iteration {it}"
            )
        u = u + step
        for a in range(3):
            u[..., a] = ndimage.gaussian_filter(
                u[..., a], sigma=sig_elastic, mode="nearest"
            )
        mean_step = float(np.sqrt(np.einsum("xyzv,xyzv->xyz", step, step)).mean())
        if mean_step < cfg.tolerance_mm:
            break
    return u


def register_deformable(fixed, moving, cfg: RegistrationConfig | None = None) -> DisplacementField:
    """Estimate the displacement field warping `moving` onto `fixed`.

    The returned field is in `fixed`'s geometry: sampling moving content at
    x + u(x) reproduces fixed content, which is exactly the pull-back that
    warp_labels applies.
    """
    cfg = cfg or RegistrationConfig()
    require_same_geometry(fixed.geometry, moving.geometry, "registration inputs")
    if isinstance(fixed, LabelVolume) != isinstance(moving, LabelVolume):
        raise RegistrationError(
            "cannot register a label volume against a grayscale volume"
        )
    sl = _foreground_slices(fixed, moving, cfg.crop_pad_voxels)
    f_chans = _channels_of(fixed)[(slice(None),) + sl]
    m_chans = _channels_of(moving)[(slice(None),) + sl]
    spacing = np.asarray(fixed.geometry.spacing, dtype=np.float64)

    # pyramid, coarsest first
    pyr = [(f_chans, m_chans, spacing)]
    for _ in range(cfg.n_levels - 1):
        f_prev, m_prev, s_prev = pyr[0]
        if min(f_prev.shape[1:]) < 8:
            break
        pyr.insert(0, (_halve(f_prev), _halve(m_prev), s_prev * 2.0))
    iters = cfg.iterations[-len(pyr):]

    u = np.zeros(pyr[0][0].shape[1:] + (3,), dtype=np.float32)
    for level, ((f_l, m_l, s_l), n_iter) in enumerate(zip(pyr, iters)):
        u = _resample_field(u, f_l.shape[1:])
        u = _demons_level(f_l, m_l, s_l, u, n_iter, cfg, level)

    full = np.zeros(fixed.geometry.dims + (3,), dtype=np.float32)
    full[sl] = u
    # vectors are in the index-aligned frame; rotate into world axes
    direction = fixed.geometry.direction
    if not np.allclose(direction, np.eye(3)):
        full = full @ direction.T.astype(np.float32)
    return DisplacementField(fixed.geometry, full)


def warp_labels(seg: LabelVolume, field: DisplacementField) -> LabelVolume:
    """Pull-back warp: output(x) = seg(x + u(x)), nearest-neighbor labels."""
    require_same_geometry(seg.geometry, field.geometry, "segmentation and field")
    g = seg.geometry
    idx = np.meshgrid(
        *[np.arange(d, dtype=np.float32) for d in g.dims], indexing="ij"
    )
    base = np.stack(idx, axis=-1)
    spacing = np.asarray(g.spacing, dtype=np.float32)
    direction = g.direction.astype(np.float32)
    # x + u in world, converted back to index coordinates
    disp_idx = (field.vectors @ direction) / spacing
    coords = np.ascontiguousarray(base + disp_idx, dtype=np.float32)
    warped = _kernels.nn_warp(np.ascontiguousarray(seg.data), coords)
    return seg.with_data(warped)


def propagate_phase(
    series: Series4D,
    phase: PhaseTag,
    cfg: RegistrationConfig | None = None,
    fields_out: dict[int, DisplacementField] | None = None,
) -> Series4D:
    """Propagate the phase's reference segmentation to its other frames.

    Each same-phase frame is registered as the fixed image against the
    reference, and the reference labels are pulled back through the
    resulting field. Frames of the other phase pass through untouched.
    Per-frame failures are collected; if any occurred, a PropagationError
    carrying the partial result is raised after all frames were attempted.
    A dict passed as ``fields_out`` receives the per-frame fields.
    """
    cfg = cfg or RegistrationConfig()
    phase = PhaseTag.parse(phase)
    if phase not in series.reference_indices:
        raise PropagationError(f"no {phase.value} reference frame in series")
    ref_idx = series.reference_indices[phase]
    ref = series.frames[ref_idx]
    if not isinstance(ref, LabelVolume):
        raise PropagationError(
            f"reference frame {ref_idx} is not a label volume"
        )

    new_frames = list(series.frames)
    failures: dict[int, Exception] = {}
    for i, (frame, tag) in enumerate(zip(series.frames, series.phase_tags)):
        if tag is not phase or i == ref_idx:
            continue
        try:
            field = register_deformable(frame, ref, cfg)
            new_frames[i] = warp_labels(ref, field)
            if fields_out is not None:
                fields_out[i] = field
        except Exception as exc:  # noqa: BLE001 - per-frame isolation
            failures[i] = exc

    result = Series4D(
        frames=tuple(new_frames),
        phase_tags=series.phase_tags,
        reference_indices=series.reference_indices,
        scan_id=series.scan_id,
        patient_id=series.patient_id,
        fusion=series.fusion,
        phase_percent=series.phase_percent,
    )
    if failures:
        listing = ", ".join(f"frame {i}: {e}" for i, e in sorted(failures.items()))
        raise PropagationError(
            f"propagation failed for {len(failures)} frame(s) ({listing})",
            failed_frames=failures,
            partial=result,
        )
    return result
