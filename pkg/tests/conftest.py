import numpy as np
import pytest

from valve4d import FusionType, PhantomSpec, generate_phantom
from valve4d.volume import VolumeGeometry


@pytest.fixture(scope="session")
def small_phantom():
    """Coarse 4-frame LR-fused phantom shared by read-only tests."""
    spec = PhantomSpec(
        spacing_mm=(0.7, 0.7, 0.7), cusp_thickness_mm=1.5, scan_id="T01"
    )
    return generate_phantom(spec)


@pytest.fixture(scope="session")
def closed_frame(small_phantom):
    series, _ = small_phantom
    return series.frames[0]


@pytest.fixture(scope="session")
def tricuspid_phantom():
    spec = PhantomSpec(
        fusion=FusionType.TRICUSPID,
        commissural_angle_deg=120.0,
        spacing_mm=(0.7, 0.7, 0.7),
        cusp_thickness_mm=1.5,
        n_frames=2,
        open_fractions=(0.0, 0.6),
        scan_id="T02",
    )
    return generate_phantom(spec)


def unit_geometry(dims, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    return VolumeGeometry(dims, spacing, origin, np.eye(3))
