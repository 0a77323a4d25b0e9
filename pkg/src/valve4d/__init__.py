"""Aortic valve 4D CT label-map toolkit.

Propagates reference-frame segmentations across a cardiac cycle, scores
predictions against ground truth (Dice, symmetric mesh distance, outflow
orientation), derives the three surgically relevant valve measurements,
and produces the statistical reports - all testable against parametric
valve phantoms with known ground truth.
"""

from ._kernels import IMPL as KERNEL_IMPL
from .errors import (
    EmptyLabelError,
    EmptyMeshError,
    GeometryMismatchError,
    LandmarkError,
    ManifestError,
    PhantomError,
    PropagationError,
    RegistrationError,
    StatsError,
    UnknownLabelError,
    Valve4DError,
    VolumeFormatError,
)
from .io import load_field, load_volume, save_field, save_volume
from .manifest import Fold, Manifest, ScanEntry, load_manifest, load_series, save_manifest
from .mesh import SurfaceMesh, extract_surface
from .metrics import (
    BothEmptyWarning,
    MetricRecord,
    OrientationResult,
    dice,
    evaluate_frame,
    majority_vote,
    outflow_orientation,
    symmetric_mesh_distance,
)
from .morphometry import (
    Commissure,
    CuspLandmarks,
    MeasurementRecord,
    MeasurementSource,
    ValveLandmarks,
    annulus_diameter,
    commissural_angle,
    extract_landmarks,
    geometric_cusp_height,
    measure_frame,
)
from .phantom import (
    FrameTruth,
    PhantomSpec,
    PhantomTruth,
    apply_synthetic_deformation,
    generate_phantom,
    jitter_labels,
    voxelization_error_bound,
)
from .registration import (
    RegistrationConfig,
    propagate_phase,
    register_deformable,
    warp_labels,
)
from .schema import (
    BACKGROUND,
    CUSP_IDS,
    DEFAULT_SCHEMA,
    DISTANCE_METRIC_IDS,
    LCUSP,
    LVO,
    NCUSP,
    RCUSP,
    ROOT_WALL,
    STJ,
    FusionType,
    LabelSchema,
    PhaseTag,
)
from .stats import (
    ComparisonReport,
    DipReport,
    OrientationSummary,
    PairedSample,
    RaterMatrix,
    TemporalCurve,
    TTestResult,
    aggregate,
    detect_dips,
    icc_consistency,
    measurement_comparison,
    orientation_summary,
    paired_t_test,
    temporal_curve,
)
from .volume import (
    DisplacementField,
    LabelVolume,
    ScalarVolume,
    Series4D,
    VolumeGeometry,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
