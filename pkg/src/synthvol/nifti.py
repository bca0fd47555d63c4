"""Single-file NIfTI-1 reader and writer.

Implements the 348-byte NIfTI-1.1 header (see the official nifti1.h
layout), voxel payloads in Fortran order, optional gzip containers, and
the sform-over-qform-over-pixdim geometry precedence.  Little- and
big-endian files are accepted; files are always emitted little-endian.

Supported on-disk datatypes: uint8, int16, int32, float32, float64.
Scalar volumes are written as 3D images; multi-channel volumes use the
5th dimension with the vector intent code, which is how deformation
fields and coordinate maps round-trip.
"""

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import LabelVolume, Volume, VoxelGrid
from .errors import FormatError, InputError

HEADER_SIZE = 348
MAGIC = b"n+1\x00"

_STRUCT_FIELDS = (
    "i 10s 18s i h b b 8h 3f h h h h 8f f f f h b b f f f f i i "
    "80s 24s h h 3f 3f 4f 4f 4f 16s 4s"
)

_DTYPE_CODES = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    8: np.dtype(np.int32),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
}
_CODE_FOR_DTYPE = {v: k for k, v in _DTYPE_CODES.items()}

_INTENT_VECTOR = 1007

assert struct.calcsize("<" + _STRUCT_FIELDS) == HEADER_SIZE


@dataclass(frozen=True)
class NiftiHeader:
    """Decoded header fields that matter downstream."""

    dims: tuple
    channels: int
    datatype: int
    pixdim: tuple
    affine: np.ndarray
    scl_slope: float
    scl_inter: float
    descrip: str
    geometry_source: str  # "sform" | "qform" | "pixdim"
    byte_order: str  # "<" | ">"


def _is_gzip(path: Path) -> bool:
    if str(path).endswith(".gz"):
        return True
    try:
        with open(path, "rb") as fh:
            return fh.read(2) == b"\x1f\x8b"
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from exc


def _read_bytes(path: Path) -> bytes:
    try:
        if _is_gzip(path):
            with gzip.open(path, "rb") as fh:
                return fh.read()
        with open(path, "rb") as fh:
            return fh.read()
    except (OSError, gzip.BadGzipFile) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _quaternion_rotation(b: float, c: float, d: float, qfac: float) -> np.ndarray:
    a2 = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(a2) if a2 > 0 else 0.0
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    if qfac < 0:
        rot[:, 2] *= -1.0
    return rot


def _grid_from_linear(linear: np.ndarray, origin, path: Path, source: str) -> VoxelGrid:
    spacing = np.linalg.norm(linear, axis=0)
    if np.any(spacing <= 0):
        raise FormatError(f"{path}: {source} matrix has a zero-length column")
    orientation = linear / spacing
    try:
        return VoxelGrid(dims=(1, 1, 1), spacing=spacing, origin=origin, orientation=orientation)
    except ValueError as exc:
        raise FormatError(f"{path}: {source} matrix is not orthogonal: {exc}") from exc


def read_nifti(path, as_labels: bool = False):
    """Read a .nii or .nii.gz file.

    Returns (grid, volume, header) where volume is a LabelVolume when
    ``as_labels`` is set (integer datatypes only, no intensity scaling)
    and a float32 Volume otherwise.
    """
    path = Path(path)
    raw = _read_bytes(path)
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes, need {HEADER_SIZE})")

    (size,) = struct.unpack_from("<i", raw, 0)
    if size == HEADER_SIZE:
        order = "<"
    else:
        (size_be,) = struct.unpack_from(">i", raw, 0)
        if size_be != HEADER_SIZE:
            raise FormatError(f"{path}: sizeof_hdr is {size}, expected {HEADER_SIZE}")
        order = ">"

    fields = struct.unpack_from(order + _STRUCT_FIELDS, raw, 0)
    (
        _size, _data_type, _db_name, _extents, _session_error, _regular, _dim_info,
        *rest,
    ) = fields
    dim = rest[0:8]
    datatype_code = rest[12]
    pixdim = rest[15:23]
    vox_offset = rest[23]
    scl_slope = rest[24]
    scl_inter = rest[25]
    descrip = rest[35].split(b"\x00", 1)[0].decode("latin-1")
    qform_code = rest[37]
    sform_code = rest[38]
    quatern = rest[39:42]
    qoffset = rest[42:45]
    srow_x = rest[45:49]
    srow_y = rest[49:53]
    srow_z = rest[53:57]
    magic = rest[58]

    if magic != MAGIC:
        raise FormatError(f"{path}: magic is {magic!r}, expected {MAGIC!r} (single-file NIfTI-1)")
    if datatype_code not in _DTYPE_CODES:
        raise InputError(f"{path}: unsupported datatype code {datatype_code}")

    ndim = dim[0]
    if ndim == 3:
        dims, channels = tuple(dim[1:4]), 1
    elif ndim == 4:
        dims, channels = tuple(dim[1:4]), max(1, dim[4])
    elif ndim == 5 and dim[4] == 1:
        dims, channels = tuple(dim[1:4]), max(1, dim[5])
    else:
        raise FormatError(f"{path}: unsupported dim field {dim}")
    if any(d < 1 for d in dims):
        raise FormatError(f"{path}: non-positive spatial dim in {dim}")

    if sform_code > 0:
        linear = np.array([srow_x[:3], srow_y[:3], srow_z[:3]], dtype=np.float64)
        origin = (srow_x[3], srow_y[3], srow_z[3])
        geometry_source = "sform"
    elif qform_code > 0:
        qfac = -1.0 if pixdim[0] < 0 else 1.0
        rot = _quaternion_rotation(*quatern, qfac)
        linear = rot * np.asarray(pixdim[1:4], dtype=np.float64)
        origin = qoffset
        geometry_source = "qform"
    else:
        linear = np.diag(np.asarray(pixdim[1:4], dtype=np.float64))
        origin = (0.0, 0.0, 0.0)
        geometry_source = "pixdim"

    grid_probe = _grid_from_linear(linear, origin, path, geometry_source)
    grid = VoxelGrid(dims=dims, spacing=grid_probe.spacing, origin=grid_probe.origin,
                     orientation=grid_probe.orientation)

    disk_dtype = _DTYPE_CODES[datatype_code].newbyteorder(order)
    offset = int(vox_offset)
    if offset < HEADER_SIZE:
        raise FormatError(f"{path}: vox_offset {vox_offset} precedes the header end")
    count = dims[0] * dims[1] * dims[2] * channels
    payload = raw[offset : offset + count * disk_dtype.itemsize]
    if len(payload) < count * disk_dtype.itemsize:
        raise FormatError(
            f"{path}: truncated data section ({len(payload)} bytes, "
            f"need {count * disk_dtype.itemsize})"
        )
    flat = np.frombuffer(payload, dtype=disk_dtype)
    arr = flat.reshape(dims + (channels,), order="F")

    header = NiftiHeader(
        dims=dims, channels=channels, datatype=datatype_code,
        pixdim=tuple(float(p) for p in pixdim[1:4]),
        affine=grid.affine(), scl_slope=float(scl_slope), scl_inter=float(scl_inter),
        descrip=descrip, geometry_source=geometry_source, byte_order=order,
    )

    if as_labels:
        if not np.issubdtype(_DTYPE_CODES[datatype_code], np.integer):
            raise InputError(f"{path}: label volumes require an integer datatype, "
                             f"got code {datatype_code}")
        return grid, LabelVolume(grid, arr[..., 0].astype(np.int32)), header

    data = arr.astype(np.float32)
    if scl_slope != 0.0 and (scl_slope != 1.0 or scl_inter != 0.0):
        data = data * np.float32(scl_slope) + np.float32(scl_inter)
    return grid, Volume(grid, data), header


def _encode_payload(data: np.ndarray, dtype: np.dtype, path: Path) -> bytes:
    if np.issubdtype(dtype, np.integer):
        rounded = np.rint(data)
        info = np.iinfo(dtype)
        if rounded.min() < info.min or rounded.max() > info.max:
            raise ValueError(
                f"{path}: data range [{rounded.min()}, {rounded.max()}] does not fit {dtype}"
            )
        return rounded.astype(dtype).tobytes(order="F")
    return data.astype(dtype).tobytes(order="F")


def write_nifti(path, grid: VoxelGrid, volume, datatype=None, compresslevel: int = 6):
    """Write a Volume or LabelVolume as single-file NIfTI-1.

    LabelVolumes default to int16 with no intensity scaling; Volumes
    default to float32.  Paths ending in .gz are gzip-compressed with a
    zeroed timestamp so identical volumes produce identical bytes.
    """
    path = Path(path)
    is_labels = isinstance(volume, LabelVolume)
    if is_labels:
        data = volume.labels[..., np.newaxis]
        dtype = np.dtype(datatype) if datatype is not None else np.dtype(np.int16)
        if not np.issubdtype(dtype, np.integer):
            raise ValueError(f"{path}: label volumes must use an integer datatype")
    else:
        data = volume.data
        dtype = np.dtype(datatype) if datatype is not None else np.dtype(np.float32)
    if dtype not in _CODE_FOR_DTYPE:
        raise ValueError(f"{path}: unsupported datatype {dtype}")
    if volume.grid.dims != grid.dims:
        raise ValueError(f"{path}: volume dims {volume.grid.dims} differ from grid {grid.dims}")

    channels = data.shape[3]
    if channels == 1:
        dim = (3, *grid.dims, 1, 1, 1, 1)
        intent = 0
    else:
        dim = (5, *grid.dims, 1, channels, 1, 1)
        intent = _INTENT_VECTOR

    affine = grid.affine()
    scl_slope, scl_inter = (0.0, 0.0) if is_labels else (1.0, 0.0)
    header = struct.pack(
        "<" + _STRUCT_FIELDS,
        HEADER_SIZE, b"", b"", 0, 0, 0, 0,
        *dim,
        0.0, 0.0, 0.0,
        intent,
        _CODE_FOR_DTYPE[dtype],
        dtype.itemsize * 8,
        0,
        1.0, *grid.spacing, 1.0, 1.0, 1.0, 1.0,
        352.0,
        scl_slope, scl_inter,
        0, 0, 0,
        0.0, 0.0, 0.0, 0.0,
        0, 0,
        b"synthvol", b"",
        0, 1,
        0.0, 0.0, 0.0,
        0.0, 0.0, 0.0,
        *affine[0], *affine[1], *affine[2],
        b"", MAGIC,
    )
    payload = header + b"\x00\x00\x00\x00" + _encode_payload(data, dtype, path)

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if str(path).endswith(".gz"):
            # filename="" and mtime=0 keep the emitted bytes path- and
            # time-independent, which the reproducibility contract needs
            with open(path, "wb") as fh:
                with gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0,
                                   compresslevel=compresslevel) as gz:
                    gz.write(payload)
        else:
            with open(path, "wb") as fh:
                fh.write(payload)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from exc
