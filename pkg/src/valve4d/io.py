"""Volume file I/O: a NIfTI-1 subset and MetaImage (.mha) fixtures.

Supported on disk:
  * NIfTI-1 single-file ``.nii`` / ``.nii.gz``: little-endian, 348-byte
    header, integer datatypes for labels, float32 for scalar volumes and
    displacement fields (stored as 5D vector images, intent code 1007).
  * MetaImage ``.mha``: ASCII header + uncompressed local payload, used
    for plain-metadata test fixtures.

Payloads are stored x-fastest; in memory arrays are indexed [ix, iy, iz].
"""

from __future__ import annotations

import gzip
from pathlib import Path

import numpy as np

from .errors import VolumeFormatError
from .schema import DEFAULT_SCHEMA, LabelSchema
from .volume import DisplacementField, LabelVolume, ScalarVolume, VolumeGeometry

_HDR_SIZE = 348
_VOX_OFFSET = 352.0
_MAGIC = b"n+1\x00"
_INTENT_VECTOR = 1007

# numpy dtype <-> NIfTI datatype code (little-endian subset)
_NIFTI_DTYPES = {
    2: np.dtype("<u1"),
    4: np.dtype("<i2"),
    8: np.dtype("<i4"),
    16: np.dtype("<f4"),
    512: np.dtype("<u2"),
}
_NIFTI_CODES = {v: k for k, v in _NIFTI_DTYPES.items()}

_MET_TYPES = {
    "MET_UCHAR": np.dtype("<u1"),
    "MET_SHORT": np.dtype("<i2"),
    "MET_USHORT": np.dtype("<u2"),
    "MET_INT": np.dtype("<i4"),
    "MET_FLOAT": np.dtype("<f4"),
}
_MET_NAMES = {v: k for k, v in _MET_TYPES.items()}

_HEADER_DTYPE = np.dtype(
    [
        ("sizeof_hdr", "<i4"),
        ("data_type", "S10"),
        ("db_name", "S18"),
        ("extents", "<i4"),
        ("session_error", "<i2"),
        ("regular", "S1"),
        ("dim_info", "u1"),
        ("dim", "<i2", (8,)),
        ("intent_p1", "<f4"),
        ("intent_p2", "<f4"),
        ("intent_p3", "<f4"),
        ("intent_code", "<i2"),
        ("datatype", "<i2"),
        ("bitpix", "<i2"),
        ("slice_start", "<i2"),
        ("pixdim", "<f4", (8,)),
        ("vox_offset", "<f4"),
        ("scl_slope", "<f4"),
        ("scl_inter", "<f4"),
        ("slice_end", "<i2"),
        ("slice_code", "u1"),
        ("xyzt_units", "u1"),
        ("cal_max", "<f4"),
        ("cal_min", "<f4"),
        ("slice_duration", "<f4"),
        ("toffset", "<f4"),
        ("glmax", "<i4"),
        ("glmin", "<i4"),
        ("descrip", "S80"),
        ("aux_file", "S24"),
        ("qform_code", "<i2"),
        ("sform_code", "<i2"),
        ("quatern_b", "<f4"),
        ("quatern_c", "<f4"),
        ("quatern_d", "<f4"),
        ("qoffset_x", "<f4"),
        ("qoffset_y", "<f4"),
        ("qoffset_z", "<f4"),
        ("srow_x", "<f4", (4,)),
        ("srow_y", "<f4", (4,)),
        ("srow_z", "<f4", (4,)),
        ("intent_name", "S16"),
        ("magic", "S4"),
    ]
)
assert _HEADER_DTYPE.itemsize == _HDR_SIZE


def _open_read(path: Path):
    raw = path.open("rb")
    head = raw.read(2)
    raw.seek(0)
    if head == b"\x1f\x8b":
        return gzip.open(raw)
    return raw


def _read_nifti(path: Path):
    """Return (array shaped (nx,ny,nz[,nv]), VolumeGeometry)."""
    with _open_read(path) as fh:
        hdr_bytes = fh.read(_HDR_SIZE)
        if len(hdr_bytes) < _HDR_SIZE:
            raise VolumeFormatError(f"{path}: truncated NIfTI header")
        hdr = np.frombuffer(hdr_bytes, dtype=_HEADER_DTYPE)[0]
        if int(hdr["sizeof_hdr"]) != _HDR_SIZE:
            raise VolumeFormatError(
                f"{path}: bad sizeof_hdr {int(hdr['sizeof_hdr'])} "
                "(big-endian or non-NIfTI-1 files are not supported)"
            )
        if bytes(hdr["magic"]) not in (b"n+1", b"ni1"):  # numpy strips NULs
            raise VolumeFormatError(f"{path}: missing NIfTI magic")
        code = int(hdr["datatype"])
        if code not in _NIFTI_DTYPES:
            raise VolumeFormatError(f"{path}: unsupported NIfTI datatype code {code}")
        dtype = _NIFTI_DTYPES[code]

        ndim = int(hdr["dim"][0])
        if ndim < 3 or ndim > 5:
            raise VolumeFormatError(f"{path}: unsupported dimensionality {ndim}")
        shape = [max(1, int(hdr["dim"][i])) for i in range(1, ndim + 1)]
        n_items = int(np.prod(shape))

        fh.seek(int(hdr["vox_offset"]))
        payload = fh.read(n_items * dtype.itemsize)
        if len(payload) != n_items * dtype.itemsize:
            raise VolumeFormatError(f"{path}: truncated NIfTI payload")
        data = np.frombuffer(payload, dtype=dtype).reshape(shape, order="F")

    slope = float(hdr["scl_slope"])
    inter = float(hdr["scl_inter"])
    if slope not in (0.0, 1.0) or inter != 0.0:
        raise VolumeFormatError(f"{path}: scaled voxel data is not supported")

    dims = tuple(shape[:3])
    pixdim = np.array(hdr["pixdim"], dtype=np.float64)
    if int(hdr["sform_code"]) > 0:
        srow = np.stack([hdr["srow_x"], hdr["srow_y"], hdr["srow_z"]]).astype(np.float64)
        mat, origin = srow[:, :3], srow[:, 3]
    elif int(hdr["qform_code"]) > 0:
        mat, origin = _qform_affine(hdr, pixdim)
    else:
        mat, origin = np.diag(pixdim[1:4]), np.zeros(3)

    norms = np.linalg.norm(mat, axis=0)
    if np.any(norms <= 0):
        raise VolumeFormatError(f"{path}: degenerate orientation matrix")
    # pixdim is the authoritative spacing when it agrees with the affine scale.
    spacing = np.where(np.abs(pixdim[1:4] - norms) < 1e-4 * norms, pixdim[1:4], norms)
    direction = mat / norms
    geometry = VolumeGeometry(dims, tuple(spacing), tuple(origin), direction)

    if ndim > 3:
        data = data.reshape(dims + (-1,), order="F")
        if data.shape[-1] == 1:
            data = data[..., 0]
    return np.asarray(data), geometry


def _qform_affine(hdr, pixdim):
    b, c, d = (float(hdr[k]) for k in ("quatern_b", "quatern_c", "quatern_d"))
    a = np.sqrt(max(0.0, 1.0 - b * b - c * c - d * d))
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    qfac = -1.0 if pixdim[0] == -1.0 else 1.0
    scale = np.array([pixdim[1], pixdim[2], pixdim[3] * qfac])
    origin = np.array([float(hdr[k]) for k in ("qoffset_x", "qoffset_y", "qoffset_z")])
    return rot * scale, origin


def _write_nifti(path: Path, data: np.ndarray, geometry: VolumeGeometry, intent: int = 0):
    dtype = np.dtype(data.dtype).newbyteorder("<")
    if dtype not in _NIFTI_CODES:
        raise VolumeFormatError(f"cannot store dtype {data.dtype} in the NIfTI subset")
    hdr = np.zeros((), dtype=_HEADER_DTYPE)
    hdr["sizeof_hdr"] = _HDR_SIZE
    hdr["regular"] = b"r"
    dims = geometry.dims
    if data.ndim == 3:
        hdr["dim"] = [3, *dims, 1, 1, 1, 1]
    elif data.ndim == 4:  # vector volume: components in dim 5
        hdr["dim"] = [5, *dims, 1, data.shape[3], 1, 1]
        hdr["intent_code"] = intent
    else:
        raise VolumeFormatError(f"cannot store {data.ndim}D array")
    hdr["datatype"] = _NIFTI_CODES[dtype]
    hdr["bitpix"] = dtype.itemsize * 8
    hdr["pixdim"] = [1.0, *geometry.spacing, 1.0, 1.0, 1.0, 1.0]
    hdr["vox_offset"] = _VOX_OFFSET
    hdr["scl_slope"] = 1.0
    hdr["xyzt_units"] = 2  # millimeters
    hdr["sform_code"] = 1
    mat = geometry.direction * np.asarray(geometry.spacing)
    hdr["srow_x"] = [*mat[0], geometry.origin[0]]
    hdr["srow_y"] = [*mat[1], geometry.origin[1]]
    hdr["srow_z"] = [*mat[2], geometry.origin[2]]
    hdr["magic"] = _MAGIC

    payload = np.asfortranarray(data.astype(dtype, copy=False)).tobytes(order="F")
    blob = hdr.tobytes() + b"\x00\x00\x00\x00" + payload
    opener = gzip.open if path.name.endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(blob)


def _read_mha(path: Path):
    meta: dict[str, str] = {}
    with path.open("rb") as fh:
        while True:
            line = fh.readline()
            if not line:
                raise VolumeFormatError(f"{path}: header ended before ElementDataFile")
            key, _, value = line.decode("ascii", "replace").partition("=")
            key, value = key.strip(), value.strip()
            meta[key] = value
            if key == "ElementDataFile":
                if value != "LOCAL":
                    raise VolumeFormatError(f"{path}: only LOCAL payloads supported")
                break
        if meta.get("NDims") != "3":
            raise VolumeFormatError(f"{path}: NDims must be 3")
        if meta.get("CompressedData", "False") == "True":
            raise VolumeFormatError(f"{path}: compressed .mha not supported")
        if meta.get("BinaryDataByteOrderMSB", "False") == "True":
            raise VolumeFormatError(f"{path}: big-endian .mha not supported")
        elem = meta.get("ElementType", "")
        if elem not in _MET_TYPES:
            raise VolumeFormatError(f"{path}: unsupported ElementType {elem}")
        dtype = _MET_TYPES[elem]
        dims = tuple(int(v) for v in meta["DimSize"].split())
        payload = fh.read(int(np.prod(dims)) * dtype.itemsize)
    if len(payload) != int(np.prod(dims)) * dtype.itemsize:
        raise VolumeFormatError(f"{path}: truncated .mha payload")
    data = np.frombuffer(payload, dtype=dtype).reshape(dims, order="F")
    spacing = tuple(float(v) for v in meta.get("ElementSpacing", "1 1 1").split())
    origin = tuple(float(v) for v in meta.get("Offset", "0 0 0").split())
    direction = np.array(
        [float(v) for v in meta.get("TransformMatrix", "1 0 0 0 1 0 0 0 1").split()]
    ).reshape(3, 3)
    return np.asarray(data), VolumeGeometry(dims, spacing, origin, direction)


def _write_mha(path: Path, data: np.ndarray, geometry: VolumeGeometry):
    dtype = np.dtype(data.dtype).newbyteorder("<")
    if dtype not in _MET_NAMES:
        raise VolumeFormatError(f"cannot store dtype {data.dtype} in .mha")
    g = geometry
    lines = [
        "ObjectType = Image",
        "NDims = 3",
        "BinaryData = True",
        "BinaryDataByteOrderMSB = False",
        "CompressedData = False",
        "TransformMatrix = " + " ".join(f"{v:.17g}" for v in g.direction.reshape(-1)),
        "Offset = " + " ".join(f"{v:.17g}" for v in g.origin),
        "ElementSpacing = " + " ".join(f"{v:.17g}" for v in g.spacing),
        "DimSize = " + " ".join(str(d) for d in g.dims),
        f"ElementType = {_MET_NAMES[dtype]}",
        "ElementDataFile = LOCAL",
    ]
    with path.open("wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(np.asfortranarray(data.astype(dtype, copy=False)).tobytes(order="F"))


def _format_of(path: Path) -> str:
    name = path.name.lower()
    if name.endswith(".nii") or name.endswith(".nii.gz"):
        return "nifti"
    if name.endswith(".mha"):
        return "mha"
    raise VolumeFormatError(f"unsupported volume format: {path.name}")


def _read_any(path: Path):
    if not path.exists():
        raise VolumeFormatError(f"no such file: {path}")
    return _read_nifti(path) if _format_of(path) == "nifti" else _read_mha(path)


def load_volume(path, schema: LabelSchema = DEFAULT_SCHEMA) -> LabelVolume:
    """Load a label volume, validating voxel values against the schema."""
    path = Path(path)
    data, geometry = _read_any(path)
    if data.ndim != 3:
        raise VolumeFormatError(f"{path}: expected a 3D label volume")
    if not np.issubdtype(data.dtype, np.integer):
        raise VolumeFormatError(f"{path}: non-integer voxel data ({data.dtype})")
    return LabelVolume(geometry, data, schema)


def save_volume(volume: LabelVolume, path) -> None:
    path = Path(path)
    if _format_of(path) == "nifti":
        _write_nifti(path, volume.data, volume.geometry)
    else:
        _write_mha(path, volume.data, volume.geometry)


def load_scalar_volume(path) -> ScalarVolume:
    path = Path(path)
    data, geometry = _read_any(path)
    if data.ndim != 3:
        raise VolumeFormatError(f"{path}: expected a 3D scalar volume")
    return ScalarVolume(geometry, data.astype(np.float32))


def save_scalar_volume(volume: ScalarVolume, path) -> None:
    path = Path(path)
    if _format_of(path) == "nifti":
        _write_nifti(path, volume.data, volume.geometry)
    else:
        _write_mha(path, volume.data, volume.geometry)


def load_field(path) -> DisplacementField:
    """Load a displacement field stored as a 3-component vector volume."""
    path = Path(path)
    data, geometry = _read_any(path)
    if data.ndim != 4 or data.shape[-1] != 3:
        raise VolumeFormatError(f"{path}: expected a 3-component vector volume")
    return DisplacementField(geometry, data.astype(np.float32))


def save_field(field: DisplacementField, path) -> None:
    path = Path(path)
    if _format_of(path) != "nifti":
        raise VolumeFormatError("displacement fields are stored as NIfTI only")
    _write_nifti(path, field.vectors, field.geometry, intent=_INTENT_VECTOR)
