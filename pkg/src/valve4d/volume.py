"""Core data model: 3D volumes with physical geometry and 4D series.

Arrays are indexed ``[ix, iy, iz]``; the physical position of a voxel
center is ``origin + direction @ (spacing * index)``. All containers are
treated as immutable after construction (data buffers are write-locked),
so they are safe to share across concurrent readers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyLabelError, GeometryMismatchError, UnknownLabelError
from .schema import DEFAULT_SCHEMA, FusionType, LabelSchema, PhaseTag

_ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class VolumeGeometry:
    """Voxel grid geometry: dims (voxels), spacing/origin (mm), direction."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    direction: np.ndarray  # 3x3 orthonormal

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        direction = np.asarray(self.direction, dtype=np.float64).reshape(3, 3)
        if any(d <= 0 for d in dims):
            raise ValueError(f"dims must be positive, got {dims}")
        if any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be strictly positive, got {spacing}")
        if not np.allclose(direction.T @ direction, np.eye(3), atol=_ORTHO_TOL):
            raise ValueError("direction matrix is not orthonormal within 1e-6")
        direction.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def voxel_diagonal_mm(self) -> float:
        return float(np.linalg.norm(self.spacing))

    def affine(self) -> np.ndarray:
        """4x4 voxel-index -> world-mm affine."""
        out = np.eye(4)
        out[:3, :3] = self.direction * np.asarray(self.spacing)
        out[:3, 3] = self.origin
        return out

    def voxel_to_world(self, indices) -> np.ndarray:
        """Map (fractional) voxel indices, shape (..., 3), to mm coordinates."""
        idx = np.asarray(indices, dtype=np.float64)
        scaled = idx * np.asarray(self.spacing)
        return scaled @ self.direction.T + np.asarray(self.origin)

    def world_to_voxel(self, points) -> np.ndarray:
        """Map mm coordinates, shape (..., 3), to fractional voxel indices."""
        pts = np.asarray(points, dtype=np.float64) - np.asarray(self.origin)
        return (pts @ self.direction) / np.asarray(self.spacing)

    def matches(self, other: "VolumeGeometry", tol: float = 1e-6) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, atol=tol)
            and np.allclose(self.origin, other.origin, atol=tol)
            and np.allclose(self.direction, other.direction, atol=tol)
        )


def require_same_geometry(a, b, what: str = "volumes"):
    ga = a if isinstance(a, VolumeGeometry) else a.geometry
    gb = b if isinstance(b, VolumeGeometry) else b.geometry
    if not ga.matches(gb):
        raise GeometryMismatchError(
            f"{what} do not share grid geometry: "
            f"dims {ga.dims} vs {gb.dims}, spacing {ga.spacing} vs {gb.spacing}"
        )


def _lock(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LabelVolume:
    """Dense multi-label volume; every voxel holds a schema id or 0."""

    geometry: VolumeGeometry
    data: np.ndarray  # uint8, shape == geometry.dims
    schema: LabelSchema = field(default=DEFAULT_SCHEMA)

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.issubdtype(data.dtype, np.integer):
            raise UnknownLabelError(f"label data must be integral, got {data.dtype}")
        if tuple(data.shape) != self.geometry.dims:
            raise ValueError(
                f"data shape {data.shape} does not match dims {self.geometry.dims}"
            )
        validate_labels(data, self.schema)
        object.__setattr__(self, "data", _lock(data.astype(np.uint8, copy=False)))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.geometry.dims

    def label_mask(self, label_id: int) -> np.ndarray:
        """Boolean mask of voxels equal to label_id."""
        if label_id not in self.schema.valid_ids:
            raise UnknownLabelError(f"unknown label id {label_id}")
        return self.data == label_id

    def label_count(self, label_id: int) -> int:
        return int(np.count_nonzero(self.label_mask(label_id)))

    def present_ids(self) -> tuple[int, ...]:
        return tuple(int(v) for v in np.unique(self.data))

    def centroid_mm(self, label_id: int) -> np.ndarray:
        """Mean physical position (mm) of the voxel centers of one label."""
        mask = self.label_mask(label_id)
        idx = np.argwhere(mask)
        if idx.shape[0] == 0:
            raise EmptyLabelError(f"empty label {self.schema.name_of(label_id)}")
        return self.geometry.voxel_to_world(idx.mean(axis=0))

    def with_data(self, data: np.ndarray) -> "LabelVolume":
        return LabelVolume(self.geometry, data, self.schema)


def validate_labels(data: np.ndarray, schema: LabelSchema):
    """Raise UnknownLabelError naming the first offending voxel, if any."""
    valid = np.zeros(max(max(schema.valid_ids) + 1, int(data.max()) + 1 if data.size else 1), dtype=bool)
    for i in schema.valid_ids:
        valid[i] = True
    flat = data.reshape(-1)
    if flat.size and (flat.min() < 0 or not valid[flat].all()):
        bad = (flat < 0) | ~valid[np.clip(flat, 0, len(valid) - 1)]
        count = int(np.count_nonzero(bad))
        first = int(np.flatnonzero(bad)[0])
        coord = tuple(int(c) for c in np.unravel_index(first, data.shape))
        raise UnknownLabelError(
            f"unknown label id {int(flat[first])} "
            f"({count} voxels, first at index {coord})"
        )


@dataclass(frozen=True)
class ScalarVolume:
    """Grayscale (or derived scalar) volume on the same grid model."""

    geometry: VolumeGeometry
    data: np.ndarray  # float32/float64, shape == geometry.dims

    def __post_init__(self):
        data = np.asarray(self.data)
        if tuple(data.shape) != self.geometry.dims:
            raise ValueError(
                f"data shape {data.shape} does not match dims {self.geometry.dims}"
            )
        object.__setattr__(self, "data", _lock(data.astype(np.float32, copy=False)))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.geometry.dims


@dataclass(frozen=True)
class DisplacementField:
    """Per-voxel world-mm displacement u(x); maps x to x + u(x)."""

    geometry: VolumeGeometry
    vectors: np.ndarray  # float32, shape (*dims, 3)

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float32)
        if tuple(vec.shape) != (*self.geometry.dims, 3):
            raise ValueError(
                f"vectors shape {vec.shape} does not match dims {self.geometry.dims}"
            )
        if not np.isfinite(vec).all():
            raise ValueError("displacement field contains non-finite values")
        object.__setattr__(self, "vectors", _lock(vec))

    @property
    def max_norm_mm(self) -> float:
        return float(np.sqrt((self.vectors.astype(np.float64) ** 2).sum(axis=-1).max()))


AnyVolume = LabelVolume | ScalarVolume


@dataclass(frozen=True)
class Series4D:
    """Ordered frames of one scan with cardiac-phase tags and references."""

    frames: tuple[AnyVolume, ...]
    phase_tags: tuple[PhaseTag, ...]
    reference_indices: dict[PhaseTag, int]
    scan_id: str = ""
    patient_id: str = ""
    fusion: FusionType | None = None
    phase_percent: tuple[float, ...] | None = None  # opaque; never interpreted

    def __post_init__(self):
        frames = tuple(self.frames)
        tags = tuple(PhaseTag.parse(t) for t in self.phase_tags)
        refs = {PhaseTag.parse(k): int(v) for k, v in self.reference_indices.items()}
        if not frames:
            raise ValueError("series has no frames")
        if len(tags) != len(frames):
            raise ValueError("one phase tag required per frame")
        for f in frames[1:]:
            require_same_geometry(frames[0], f, "series frames")
        for phase, idx in refs.items():
            if not 0 <= idx < len(frames):
                raise ValueError(f"reference index {idx} out of range")
            if tags[idx] is not phase:
                raise ValueError(
                    f"reference frame {idx} is tagged {tags[idx].value}, "
                    f"expected {phase.value}"
                )
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "phase_tags", tags)
        object.__setattr__(self, "reference_indices", refs)

    @property
    def geometry(self) -> VolumeGeometry:
        return self.frames[0].geometry

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def reference_index(self, phase: PhaseTag) -> int:
        phase = PhaseTag.parse(phase)
        if phase not in self.reference_indices:
            raise ValueError(f"series has no {phase.value} reference frame")
        return self.reference_indices[phase]

    def frame_indices(self, phase: PhaseTag) -> list[int]:
        phase = PhaseTag.parse(phase)
        return [i for i, t in enumerate(self.phase_tags) if t is phase]


def split_frames(series: Series4D, phase: PhaseTag) -> list[AnyVolume]:
    """Frames whose tag matches phase, in series order."""
    return [series.frames[i] for i in series.frame_indices(phase)]
