"""Exception types raised across the toolkit."""


class Valve4DError(Exception):
    """Base class for all toolkit errors."""


class VolumeFormatError(Valve4DError):
    """A volume file is unreadable or outside the supported format subset."""


class UnknownLabelError(Valve4DError):
    """A volume contains a label id that is not in the schema."""


class EmptyLabelError(Valve4DError):
    """An operation needs voxels of a label that has none."""


class EmptyMeshError(Valve4DError):
    """A surface mesh operand has no vertices or triangles."""


class GeometryMismatchError(Valve4DError):
    """Two volumes that must share a grid do not."""


class ManifestError(Valve4DError):
    """A manifest file is invalid or references missing data."""


class PhantomError(Valve4DError):
    """A phantom specification is degenerate or does not fit its grid."""


class RegistrationError(Valve4DError):
    """Deformable registration failed (non-finite update, bad inputs)."""


class PropagationError(Valve4DError):
    """One or more frames failed during phase propagation.

    Frames that did succeed are kept on the exception so callers can
    inspect or salvage partial results.
    """

    def __init__(self, message, failed_frames=None, partial=None):
        super().__init__(message)
        self.failed_frames = dict(failed_frames or {})
        self.partial = partial


class LandmarkError(Valve4DError):
    """Landmark extraction or a derived measurement failed."""


class StatsError(Valve4DError):
    """A statistical routine received degenerate input."""
