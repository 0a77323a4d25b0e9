"""Versioned JSON manifest describing scans, frame files, and folds.

Schema (version 1)::

    {
      "version": 1,
      "scans": [
        {
          "patient_id": "P01",
          "scan_id": "P01-S1",
          "fusion": "LR-fused",
          "frames": ["P01/frame00.nii.gz", ...],
          "phase_tags": ["diastole", ..., "systole", ...],
          "reference_indices": {"diastole": 0, "systole": 8},
          "phase_percent": [0, 5, ...]          # optional, opaque
        }
      ],
      "folds": [
        {"held_out": ["P01"], "training": ["P02", "P03"]}
      ]
    }

Frame paths are resolved relative to the manifest file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import io
from .errors import ManifestError
from .schema import DEFAULT_SCHEMA, FusionType, LabelSchema, PhaseTag
from .volume import Series4D

SUPPORTED_VERSIONS = (1,)


@dataclass(frozen=True)
class ScanEntry:
    patient_id: str
    scan_id: str
    fusion: FusionType
    frame_paths: tuple[Path, ...]
    phase_tags: tuple[PhaseTag, ...]
    reference_indices: dict[PhaseTag, int]
    phase_percent: tuple[float, ...] | None = None

    def __post_init__(self):
        n = len(self.frame_paths)
        if n == 0:
            raise ManifestError(f"scan {self.scan_id}: no frames")
        if len(self.phase_tags) != n:
            raise ManifestError(
                f"scan {self.scan_id}: {len(self.phase_tags)} phase tags for {n} frames"
            )
        if self.phase_percent is not None and len(self.phase_percent) != n:
            raise ManifestError(f"scan {self.scan_id}: phase_percent length mismatch")
        for phase, idx in self.reference_indices.items():
            if not 0 <= idx < n:
                raise ManifestError(
                    f"scan {self.scan_id}: reference index {idx} out of range"
                )
            if self.phase_tags[idx] is not phase:
                raise ManifestError(
                    f"scan {self.scan_id}: reference frame {idx} is tagged "
                    f"{self.phase_tags[idx].value}, not {phase.value}"
                )


@dataclass(frozen=True)
class Fold:
    held_out: tuple[str, ...]
    training: tuple[str, ...]

    def __post_init__(self):
        overlap = set(self.held_out) & set(self.training)
        if overlap:
            raise ManifestError(
                "fold held-out patients also appear in training: "
                + ", ".join(sorted(overlap))
            )


@dataclass(frozen=True)
class Manifest:
    version: int
    scans: tuple[ScanEntry, ...]
    folds: tuple[Fold, ...] = ()
    base_dir: Path = field(default_factory=Path)

    def scan(self, scan_id: str) -> ScanEntry:
        for entry in self.scans:
            if entry.scan_id == scan_id:
                return entry
        raise ManifestError(f"no scan {scan_id!r} in manifest")

    @property
    def scan_ids(self) -> tuple[str, ...]:
        return tuple(e.scan_id for e in self.scans)


def _parse_scan(obj: dict, base_dir: Path) -> ScanEntry:
    try:
        tags = tuple(PhaseTag.parse(t) for t in obj["phase_tags"])
        refs = {PhaseTag.parse(k): int(v) for k, v in obj["reference_indices"].items()}
        pct = obj.get("phase_percent")
        entry = ScanEntry(
            patient_id=str(obj["patient_id"]),
            scan_id=str(obj["scan_id"]),
            fusion=FusionType(obj.get("fusion", "Tricuspid")),
            frame_paths=tuple(base_dir / p for p in obj["frames"]),
            phase_tags=tags,
            reference_indices=refs,
            phase_percent=None if pct is None else tuple(float(v) for v in pct),
        )
    except ManifestError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ManifestError(f"malformed scan entry: {exc}") from exc
    return entry


def load_manifest(path, check_files: bool = True) -> Manifest:
    """Parse and validate a manifest file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc

    version = doc.get("version")
    if version not in SUPPORTED_VERSIONS:
        raise ManifestError(f"unsupported manifest version {version!r}")

    base_dir = path.parent
    scans = tuple(_parse_scan(s, base_dir) for s in doc.get("scans", []))
    if not scans:
        raise ManifestError("manifest lists no scans")
    folds = tuple(
        Fold(tuple(f["held_out"]), tuple(f["training"])) for f in doc.get("folds", [])
    )

    if check_files:
        missing = [
            str(p) for e in scans for p in e.frame_paths if not p.exists()
        ]
        if missing:
            raise ManifestError(
                f"{len(missing)} frame file(s) missing, first: {missing[0]}"
            )
    return Manifest(int(version), scans, folds, base_dir)


def save_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    doc = {
        "version": manifest.version,
        "scans": [
            {
                "patient_id": e.patient_id,
                "scan_id": e.scan_id,
                "fusion": e.fusion.value,
                "frames": [_relativize(p, path.parent) for p in e.frame_paths],
                "phase_tags": [t.value for t in e.phase_tags],
                "reference_indices": {
                    k.value: v for k, v in sorted(e.reference_indices.items())
                },
                **(
                    {"phase_percent": list(e.phase_percent)}
                    if e.phase_percent is not None
                    else {}
                ),
            }
            for e in manifest.scans
        ],
        "folds": [
            {"held_out": list(f.held_out), "training": list(f.training)}
            for f in manifest.folds
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _relativize(p: Path, base: Path) -> str:
    try:
        return str(p.relative_to(base))
    except ValueError:
        return str(p)


def load_series(
    manifest: Manifest, scan_id: str, schema: LabelSchema = DEFAULT_SCHEMA
) -> Series4D:
    """Read every frame of one scan into a Series4D."""
    entry = manifest.scan(scan_id)
    frames = tuple(io.load_volume(p, schema) for p in entry.frame_paths)
    return Series4D(
        frames=frames,
        phase_tags=entry.phase_tags,
        reference_indices=entry.reference_indices,
        scan_id=entry.scan_id,
        patient_id=entry.patient_id,
        fusion=entry.fusion,
        phase_percent=entry.phase_percent,
    )
