"""Readers and writers for NIfTI-1, Analyze 7.5, MetaImage and NRRD volumes.

Voxel data is held as a numpy array indexed ``[x, y, z]``; the flat
x-fastest sequence is ``Volume.voxels``.  All codecs are pure functions of
bytes so they can be exercised without touching the filesystem; the
``load_volume`` / ``save_volume`` helpers deal with paths and two-file
variants (``.hdr``/``.img``, ``.nhdr`` + data file).
"""

from __future__ import annotations

import enum
import gzip
import io
import logging
import math
import os
import re
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    MalformedHeader,
    TruncatedFile,
    UnknownFormat,
    UnsupportedElementType,
    ValueOutOfRange,
)

logger = logging.getLogger(__name__)

ELEMENT_TYPES = {
    "uint8": np.dtype(np.uint8),
    "int16": np.dtype(np.int16),
    "float32": np.dtype(np.float32),
}

# axis code -> (world axis index, sign) in RAS+ world coordinates
_AXIS_CODES = {
    "R": (0, 1), "L": (0, -1),
    "A": (1, 1), "P": (1, -1),
    "S": (2, 1), "I": (2, -1),
}
_CODE_FOR = {v: k for k, v in _AXIS_CODES.items()}
CANONICAL = "RAS"


class FormatKind(enum.Enum):
    NIFTI1 = "nifti1"
    ANALYZE75 = "analyze75"
    METAIMAGE = "metaimage"
    NRRD = "nrrd"


def _check_orientation(orientation):
    if len(orientation) != 3 or any(c not in _AXIS_CODES for c in orientation):
        raise ValueError(f"invalid orientation code {orientation!r}")
    if sorted(_AXIS_CODES[c][0] for c in orientation) != [0, 1, 2]:
        raise ValueError(f"orientation {orientation!r} repeats an anatomical axis")


@dataclass(eq=False)
class Volume:
    """3-D voxel grid.

    ``orientation`` names, for each storage axis, the anatomical direction
    of increasing index (``"RAS"`` is canonical).
    """

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    orientation: str = CANONICAL

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"volume data must be a non-empty 3-D array, got shape {data.shape}")
        if data.dtype.newbyteorder("=") not in ELEMENT_TYPES.values():
            raise UnsupportedElementType(f"element type {data.dtype} is not one of {list(ELEMENT_TYPES)}")
        if not data.dtype.isnative:
            data = data.astype(data.dtype.newbyteorder("="))
        self.data = data
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or not all(math.isfinite(s) and s > 0 for s in spacing):
            raise ValueError(f"spacing must be three positive numbers, got {self.spacing}")
        self.spacing = spacing
        self.orientation = str(self.orientation).upper()
        _check_orientation(self.orientation)

    @classmethod
    def from_voxels(cls, voxels, dims, spacing=(1.0, 1.0, 1.0), orientation=CANONICAL):
        voxels = np.asarray(voxels)
        if voxels.size != int(np.prod(dims)):
            raise ValueError(f"{voxels.size} voxels do not fill dims {tuple(dims)}")
        return cls(voxels.reshape(tuple(dims), order="F"), spacing, orientation)

    @property
    def dims(self):
        return tuple(int(d) for d in self.data.shape)

    @property
    def element_type(self):
        return self.data.dtype.name

    @property
    def voxels(self):
        return self.data.ravel(order="F")

    def __eq__(self, other):
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and self.element_type == other.element_type
            and self.orientation == other.orientation
            and self.data.tobytes(order="F") == other.data.tobytes(order="F")
        )

    def __repr__(self):
        return (f"Volume(dims={self.dims}, spacing={self.spacing}, "
                f"element_type={self.element_type!r}, orientation={self.orientation!r})")


def _element_type(dtype):
    for name, dt in ELEMENT_TYPES.items():
        if np.dtype(dtype).newbyteorder("=") == dt:
            return name
    raise UnsupportedElementType(f"unsupported element type {dtype}")


def _endian_prefix(endianness):
    if endianness not in ("little", "big"):
        raise ValueError(f"endianness must be 'little' or 'big', got {endianness!r}")
    return "<" if endianness == "little" else ">"


def _decode_payload(payload, dims, dtype, prefix):
    n = int(np.prod(dims))
    dt = np.dtype(dtype).newbyteorder(prefix)
    need = n * dt.itemsize
    if len(payload) < need:
        raise TruncatedFile(f"payload has {len(payload)} bytes, dims {tuple(dims)} need {need}")
    flat = np.frombuffer(payload, dtype=dt, count=n).astype(np.dtype(dtype), copy=True)
    return flat.reshape(tuple(dims), order="F")


def _encode_payload(v, prefix):
    return v.data.astype(v.data.dtype.newbyteorder(prefix)).tobytes(order="F")


def _orientation_from_axes(axes):
    """Axis codes from a 3x3 matrix whose columns are storage-axis directions in RAS."""
    axes = np.asarray(axes, dtype=float)
    codes = [None, None, None]
    used = set()
    # greedy by magnitude so oblique matrices still map to a permutation
    order = sorted(((abs(axes[w, s]), s, w) for s in range(3) for w in range(3)), reverse=True)
    for mag, s, w in order:
        if codes[s] is not None or w in used or mag == 0:
            continue
        codes[s] = _CODE_FOR[(w, 1 if axes[w, s] > 0 else -1)]
        used.add(w)
    if None in codes:
        return None
    return "".join(codes)


def _axes_from_orientation(orientation, spacing):
    axes = np.zeros((3, 3))
    for s, code in enumerate(orientation):
        w, sign = _AXIS_CODES[code]
        axes[w, s] = sign * spacing[s]
    return axes


# ---------------------------------------------------------------- NIfTI-1 / Analyze 7.5

HEADER_SIZE = 348
_NIFTI_DTYPES = {2: "uint8", 4: "int16", 16: "float32"}
_NIFTI_CODES = {v: k for k, v in _NIFTI_DTYPES.items()}


def _header_prefix(hdr):
    if len(hdr) < HEADER_SIZE:
        raise TruncatedFile(f"header has {len(hdr)} bytes, need {HEADER_SIZE}")
    if struct.unpack_from("<i", hdr, 0)[0] == HEADER_SIZE:
        return "<"
    if struct.unpack_from(">i", hdr, 0)[0] == HEADER_SIZE:
        return ">"
    raise MalformedHeader("sizeof_hdr is not 348 in either byte order")


def _read_dims(hdr, e):
    dim = struct.unpack_from(e + "8h", hdr, 40)
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise MalformedHeader(f"dim[0]={ndim} out of range 1..7")
    dims = [dim[i] if i <= ndim else 1 for i in (1, 2, 3)]
    if any(d < 1 for d in dims):
        raise MalformedHeader(f"non-positive dimension in {dims}")
    if ndim > 3 and any(d > 1 for d in dim[4:ndim + 1]):
        warnings.warn(f"{ndim}-D volume; reading the first 3-D frame only", stacklevel=3)
    return tuple(dims)


def _read_dtype(hdr, e):
    code = struct.unpack_from(e + "h", hdr, 70)[0]
    if code not in _NIFTI_DTYPES:
        raise UnsupportedElementType(f"datatype code {code} not supported")
    return _NIFTI_DTYPES[code]


def _read_spacing(hdr, e):
    pixdim = struct.unpack_from(e + "8f", hdr, 76)
    spacing = tuple(abs(float(p)) for p in pixdim[1:4])
    if not all(math.isfinite(s) and s > 0 for s in spacing):
        raise MalformedHeader(f"invalid pixdim {pixdim[1:4]}")
    return spacing, float(pixdim[0])


def _quaternion_axes(b, c, d, qfac):
    a = math.sqrt(max(0.0, 1.0 - (b * b + c * c + d * d)))
    r = np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ])
    r[:, 2] *= -1.0 if qfac < 0 else 1.0
    return r


def _nifti_orientation(hdr, e, qfac):
    qform_code, sform_code = struct.unpack_from(e + "2h", hdr, 252)
    axes = None
    if sform_code > 0:
        axes = np.array([struct.unpack_from(e + "4f", hdr, off)[:3] for off in (280, 296, 312)])
    elif qform_code > 0:
        b, c, d = struct.unpack_from(e + "3f", hdr, 256)
        axes = _quaternion_axes(b, c, d, qfac)
    if axes is None:
        return CANONICAL
    orientation = _orientation_from_axes(axes)
    if orientation is None:
        warnings.warn("degenerate orientation matrix; assuming canonical", stacklevel=3)
        return CANONICAL
    return orientation


def _read_nifti(data):
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    e = _header_prefix(data)
    magic = bytes(data[344:348])
    if magic == b"ni1\x00":
        raise MalformedHeader("two-file NIfTI (ni1) is not supported; use single-file .nii")
    if magic != b"n+1\x00":
        raise MalformedHeader(f"bad NIfTI magic {magic!r}")
    dims = _read_dims(data, e)
    dtype = _read_dtype(data, e)
    spacing, qfac = _read_spacing(data, e)
    vox_offset = struct.unpack_from(e + "f", data, 108)[0]
    if not math.isfinite(vox_offset) or vox_offset < HEADER_SIZE:
        raise MalformedHeader(f"vox_offset {vox_offset} inside the header")
    voxels = _decode_payload(data[int(vox_offset):], dims, dtype, e)
    return Volume(voxels, spacing, _nifti_orientation(data, e, qfac))


def _pack_common_header(v, e):
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into(e + "i", hdr, 0, HEADER_SIZE)
    struct.pack_into(e + "8h", hdr, 40, 3, *v.dims, 1, 1, 1, 1)
    code = _NIFTI_CODES[v.element_type]
    struct.pack_into(e + "2h", hdr, 70, code, v.data.dtype.itemsize * 8)
    struct.pack_into(e + "8f", hdr, 76, 1.0, *v.spacing, 0.0, 0.0, 0.0, 0.0)
    return hdr


def _write_nifti(v, e, compress=False):
    hdr = _pack_common_header(v, e)
    struct.pack_into(e + "f", hdr, 108, 352.0)  # vox_offset
    struct.pack_into(e + "f", hdr, 112, 1.0)  # scl_slope
    hdr[123] = 2  # xyzt_units: mm
    struct.pack_into(e + "2h", hdr, 252, 0, 1)  # qform_code, sform_code
    axes = _axes_from_orientation(v.orientation, v.spacing)
    for row, off in enumerate((280, 296, 312)):
        struct.pack_into(e + "4f", hdr, off, *axes[row], 0.0)
    hdr[344:348] = b"n+1\x00"
    out = bytes(hdr) + b"\x00" * 4 + _encode_payload(v, e)
    if compress:
        out = gzip.compress(out, compresslevel=6, mtime=0)
    return out


def _read_analyze(data, payload=None):
    e = _header_prefix(data)
    dims = _read_dims(data, e)
    dtype = _read_dtype(data, e)
    spacing, _ = _read_spacing(data, e)
    if payload is None:
        payload = data[HEADER_SIZE:]
    vox_offset = struct.unpack_from(e + "f", data, 108)[0]
    offset = int(vox_offset) if math.isfinite(vox_offset) and vox_offset > 0 else 0
    return Volume(_decode_payload(payload[offset:], dims, dtype, e), spacing, CANONICAL)


def _write_analyze(v, e):
    """Header followed by the image payload; split at byte 348 for a .hdr/.img pair."""
    if v.orientation != CANONICAL:
        # Analyze carries no orientation, so storage is always canonical
        v = reorient_canonical(v)
    hdr = _pack_common_header(v, e)
    struct.pack_into(e + "i", hdr, 32, 16384)  # extents
    hdr[38] = ord("r")
    finite = v.data[np.isfinite(v.data)]
    if finite.size:
        # glmax/glmin are int32; clamp so huge float values still encode
        lo, hi = np.clip([finite.min(), finite.max()], -2**31, 2**31 - 1)
        struct.pack_into(e + "2i", hdr, 140, int(hi), int(lo))
    return bytes(hdr) + _encode_payload(v, e)


# ---------------------------------------------------------------- MetaImage

_MET_TYPES = {"MET_UCHAR": "uint8", "MET_SHORT": "int16", "MET_FLOAT": "float32"}
_MET_NAMES = {v: k for k, v in _MET_TYPES.items()}
_MET_DATAFILE = re.compile(rb"^[ \t]*ElementDataFile[ \t]*=[ \t]*([^\r\n]*?)[ \t]*(?:\r?\n|\Z)", re.M)


def _parse_key_values(text, sep):
    fields = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or sep not in line:
            continue
        key, _, value = line.partition(sep)
        fields[key.strip().lower()] = value.strip()
    return fields


def _read_metaimage(data):
    m = _MET_DATAFILE.search(data)
    if m is None:
        raise MalformedHeader("MetaImage header has no ElementDataFile line")
    if m.group(1).decode("ascii", "replace").upper() != "LOCAL":
        raise MalformedHeader("only ElementDataFile = LOCAL is supported")
    payload_start = m.end()
    fields = _parse_key_values(data[:m.start()].decode("ascii", "replace"), "=")
    try:
        if int(fields.get("ndims", "0")) != 3:
            raise MalformedHeader(f"NDims must be 3, got {fields.get('ndims')}")
        dims = tuple(int(x) for x in fields["dimsize"].split())
        if fields.get("compresseddata", "false").lower() == "true":
            raise MalformedHeader("compressed MetaImage is not supported")
        if int(fields.get("elementnumberofchannels", "1")) != 1:
            raise MalformedHeader("multi-channel MetaImage is not supported")
        type_name = fields["elementtype"].upper()
        spacing_text = fields.get("elementspacing", fields.get("elementsize", "1 1 1"))
        spacing = tuple(float(x) for x in spacing_text.split())
        msb = fields.get("binarydatabyteordermsb", fields.get("elementbyteordermsb", "False"))
        matrix = fields.get("transformmatrix")
        if matrix is not None:
            matrix = [float(x) for x in matrix.split()]
    except KeyError as exc:
        raise MalformedHeader(f"MetaImage header missing {exc.args[0]}") from None
    except ValueError as exc:
        if isinstance(exc, MalformedHeader):
            raise
        raise MalformedHeader(f"unparseable MetaImage field: {exc}") from None
    if len(dims) != 3 or any(d < 1 for d in dims) or len(spacing) != 3:
        raise MalformedHeader(f"bad DimSize/ElementSpacing {dims} {spacing}")
    if type_name not in _MET_TYPES:
        raise UnsupportedElementType(f"ElementType {type_name} not supported")
    e = ">" if msb.lower() == "true" else "<"
    orientation = CANONICAL
    if matrix is not None:
        if len(matrix) != 9:
            raise MalformedHeader("TransformMatrix needs 9 values")
        # triplets are storage-axis directions in LPS world coordinates
        axes = np.array(matrix).reshape(3, 3).T * np.array([[-1.0], [-1.0], [1.0]])
        orientation = _orientation_from_axes(axes) or CANONICAL
    voxels = _decode_payload(data[payload_start:], dims, _MET_TYPES[type_name], e)
    return Volume(voxels, spacing, orientation)


def _fmt(x):
    return repr(float(x))


def _write_metaimage(v, e):
    axes = _axes_from_orientation(v.orientation, (1.0, 1.0, 1.0))
    lps = (axes * np.array([[-1.0], [-1.0], [1.0]])).T.ravel()
    lines = [
        "ObjectType = Image",
        "NDims = 3",
        "BinaryData = True",
        f"BinaryDataByteOrderMSB = {'True' if e == '>' else 'False'}",
        "CompressedData = False",
        "TransformMatrix = " + " ".join(str(int(x)) for x in lps),
        "Offset = 0 0 0",
        "ElementSpacing = " + " ".join(_fmt(s) for s in v.spacing),
        "DimSize = " + " ".join(str(d) for d in v.dims),
        f"ElementType = {_MET_NAMES[v.element_type]}",
        "ElementDataFile = LOCAL",
    ]
    return ("\n".join(lines) + "\n").encode("ascii") + _encode_payload(v, e)


# ---------------------------------------------------------------- NRRD

_NRRD_MAGIC = re.compile(rb"^NRRD000([1-5])\r?\n")
_NRRD_TYPES = {
    "uint8": {"uchar", "unsigned char", "uint8", "uint8_t"},
    "int16": {"short", "short int", "signed short", "signed short int", "int16", "int16_t"},
    "float32": {"float"},
}
_NRRD_TYPE_NAMES = {"uint8": "uint8", "int16": "int16", "float32": "float"}
_NRRD_SPACES = {
    "right-anterior-superior": np.array([1.0, 1.0, 1.0]), "ras": np.array([1.0, 1.0, 1.0]),
    "left-posterior-superior": np.array([-1.0, -1.0, 1.0]), "lps": np.array([-1.0, -1.0, 1.0]),
}
_VECTOR = re.compile(r"\(([^)]*)\)|none")


def _split_nrrd(data):
    """Return (fields, payload offset) of an NRRD header."""
    if not _NRRD_MAGIC.match(data):
        raise MalformedHeader("missing NRRD000<1-5> magic line")
    end = data.find(b"\n\n")
    crlf_end = data.find(b"\r\n\r\n")
    if end < 0 and crlf_end < 0:
        # detached header: no blank line needed
        text, offset = data, len(data)
    elif crlf_end >= 0 and (end < 0 or crlf_end < end):
        text, offset = data[:crlf_end], crlf_end + 4
    else:
        text, offset = data[:end], end + 2
    lines = text.decode("latin-1").splitlines()[1:]
    fields = {}
    for line in lines:
        if not line or line.startswith("#") or ": " not in line:
            continue
        if ":=" in line and line.index(":=") < line.index(": "):
            continue  # key/value pair, not a field
        key, _, value = line.partition(": ")
        fields[key.strip().lower()] = value.strip()
    return fields, offset


def _nrrd_dtype(name):
    name = name.lower()
    for etype, aliases in _NRRD_TYPES.items():
        if name in aliases:
            return etype
    raise UnsupportedElementType(f"NRRD type {name!r} not supported")


def _read_nrrd(data, payload=None):
    fields, offset = _split_nrrd(data)
    try:
        if int(fields["dimension"]) != 3:
            raise MalformedHeader(f"dimension must be 3, got {fields['dimension']}")
        dims = tuple(int(x) for x in fields["sizes"].split())
        dtype = _nrrd_dtype(fields["type"])
    except KeyError as exc:
        raise MalformedHeader(f"NRRD header missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, (MalformedHeader, UnsupportedElementType)):
            raise
        raise MalformedHeader(f"unparseable NRRD field: {exc}") from None
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise MalformedHeader(f"bad sizes {dims}")

    spacing, orientation = (1.0, 1.0, 1.0), CANONICAL
    if "space directions" in fields:
        vectors = _VECTOR.findall(fields["space directions"])
        try:
            axes = np.array([[float(c) for c in vec.split(",")] for vec in vectors if vec]).T
        except ValueError:
            raise MalformedHeader("unparseable space directions") from None
        if axes.shape != (3, 3):
            raise MalformedHeader("space directions must give three 3-vectors")
        space = fields.get("space", "right-anterior-superior").lower()
        if space not in _NRRD_SPACES:
            raise MalformedHeader(f"unsupported space {space!r}")
        axes = axes * _NRRD_SPACES[space][:, None]
        spacing = tuple(float(np.sqrt(np.sum(axes[:, i] ** 2))) for i in range(3))
        orientation = _orientation_from_axes(axes) or CANONICAL
    elif "spacings" in fields:
        try:
            spacing = tuple(abs(float(x)) for x in fields["spacings"].split())
        except ValueError:
            raise MalformedHeader("unparseable spacings") from None

    encoding = fields.get("encoding", "raw").lower()
    if encoding not in ("raw", "gzip", "gz"):
        raise MalformedHeader(f"encoding {encoding!r} not supported (raw or gzip only)")
    detached = fields.get("data file", fields.get("datafile"))
    if detached is not None:
        if payload is None:
            raise MalformedHeader(f"detached NRRD needs its data file {detached!r}")
        body = payload
    else:
        body = data[offset:]
    if encoding in ("gzip", "gz"):
        try:
            body = gzip.decompress(body)
        except (OSError, EOFError) as exc:
            raise TruncatedFile(f"bad gzip payload: {exc}") from None
    itemsize = ELEMENT_TYPES[dtype].itemsize
    need = int(np.prod(dims)) * itemsize
    skip = int(fields.get("byte skip", "0"))
    if skip == -1:
        if encoding != "raw":
            raise MalformedHeader("byte skip -1 requires raw encoding")
        skip = max(len(body) - need, 0)
    body = body[skip:]
    endian = fields.get("endian", "little").lower()
    if endian not in ("little", "big"):
        raise MalformedHeader(f"bad endian {endian!r}")
    e = "<" if endian == "little" else ">"
    return Volume(_decode_payload(body, dims, dtype, e), spacing, orientation)


def _nrrd_header(v, e, encoding, data_file=None):
    axes = _axes_from_orientation(v.orientation, v.spacing)
    directions = " ".join(
        "(" + ",".join(_fmt(c) for c in axes[:, i]) + ")" for i in range(3)
    )
    lines = [
        "NRRD0004",
        f"type: {_NRRD_TYPE_NAMES[v.element_type]}",
        "dimension: 3",
        "space: right-anterior-superior",
        "sizes: " + " ".join(str(d) for d in v.dims),
        f"space directions: {directions}",
        "kinds: domain domain domain",
        f"endian: {'little' if e == '<' else 'big'}",
        f"encoding: {encoding}",
        "space origin: (0.0,0.0,0.0)",
    ]
    if data_file is not None:
        lines.append(f"data file: {data_file}")
    return ("\n".join(lines) + "\n").encode("ascii")


def _write_nrrd(v, e, encoding="raw"):
    if encoding not in ("raw", "gzip"):
        raise ValueError(f"NRRD encoding must be 'raw' or 'gzip', got {encoding!r}")
    body = _encode_payload(v, e)
    if encoding == "gzip":
        body = gzip.compress(body, compresslevel=6, mtime=0)
    return _nrrd_header(v, e, encoding) + b"\n" + body


def write_nrrd_detached(v, data_file, endianness="little"):
    """Detached ``.nhdr`` header and its raw payload, as ``(header, payload)``."""
    e = _endian_prefix(endianness)
    return _nrrd_header(v, e, "raw", data_file), _encode_payload(v, e)


# ---------------------------------------------------------------- dispatch

def detect_format(data, filename_hint=None):
    """Identify the container format from its leading bytes.

    Rules are checked in order: gzip-wrapped NIfTI, NRRD magic, NIfTI magic,
    MetaImage key/value header, then the Analyze ``sizeof_hdr == 348``
    heuristic.  A filename hint only vetoes the Analyze heuristic when it
    names some other extension.
    """
    data = bytes(data)
    if data[:2] == b"\x1f\x8b":
        try:
            with gzip.GzipFile(fileobj=io.BytesIO(data)) as fh:
                head = fh.read(HEADER_SIZE)
        except (OSError, EOFError):
            raise UnknownFormat("unreadable gzip stream") from None
        if len(head) == HEADER_SIZE and head[344:348] == b"n+1\x00":
            return FormatKind.NIFTI1
        raise UnknownFormat("gzip stream does not hold a NIfTI-1 file")
    if _NRRD_MAGIC.match(data):
        return FormatKind.NRRD
    if len(data) >= HEADER_SIZE and data[344:348] in (b"n+1\x00", b"ni1\x00"):
        return FormatKind.NIFTI1
    head = data[:4096]
    if _MET_DATAFILE.search(head) and re.match(rb"^\s*\w+\s*=", head):
        return FormatKind.METAIMAGE
    if len(data) >= 4 and HEADER_SIZE in (struct.unpack_from("<i", data)[0],
                                          struct.unpack_from(">i", data)[0]):
        suffix = Path(filename_hint).suffix.lower() if filename_hint else None
        if suffix in (None, "", ".hdr", ".img"):
            return FormatKind.ANALYZE75
    raise UnknownFormat("no format rule matches these bytes")


def read_volume(data, kind, payload=None):
    """Decode a volume.

    ``payload`` supplies the second file of two-file variants (Analyze
    ``.img``, detached NRRD data file); without it the Analyze payload is
    taken to follow the 348-byte header.
    """
    data = bytes(data)
    kind = FormatKind(kind)
    if kind is FormatKind.NIFTI1:
        return _read_nifti(data)
    if kind is FormatKind.ANALYZE75:
        return _read_analyze(data, payload)
    if kind is FormatKind.METAIMAGE:
        return _read_metaimage(data)
    return _read_nrrd(data, payload)


def write_volume(v, kind, endianness="little", compress=False):
    """Encode ``v``; output is deterministic (no timestamps).

    Analyze output is header and payload back to back.  ``compress`` gzips
    NIfTI output or selects gzip encoding for NRRD.
    """
    e = _endian_prefix(endianness)
    kind = FormatKind(kind)
    _element_type(v.data.dtype)
    if kind is FormatKind.NIFTI1:
        return _write_nifti(v, e, compress)
    if kind is FormatKind.ANALYZE75:
        return _write_analyze(v, e)
    if kind is FormatKind.METAIMAGE:
        if compress:
            raise ValueError("compressed MetaImage is not supported")
        return _write_metaimage(v, e)
    return _write_nrrd(v, e, "gzip" if compress else "raw")


def reorient_canonical(v):
    """Permute and flip storage axes so they run Right, Anterior, Superior."""
    if v.orientation == CANONICAL:
        return v
    src_for = [None, None, None]
    for s, code in enumerate(v.orientation):
        src_for[_AXIS_CODES[code][0]] = s
    data = np.transpose(v.data, src_for)
    for t, s in enumerate(src_for):
        if _AXIS_CODES[v.orientation[s]][1] < 0:
            data = np.flip(data, axis=t)
    spacing = tuple(v.spacing[s] for s in src_for)
    return Volume(np.ascontiguousarray(data), spacing, CANONICAL)


# ---------------------------------------------------------------- paths

_EXTENSIONS = (".nii.gz", ".nii", ".hdr", ".mha", ".nhdr", ".nrrd")


def is_volume_path(path):
    name = str(path).lower()
    return name.endswith(_EXTENSIONS)


def load_volume(path):
    """Read a volume file, following ``.hdr``/``.img`` and ``.nhdr`` data-file links."""
    path = Path(path)
    if path.suffix.lower() == ".img":
        path = path.with_suffix(".hdr")
    data = path.read_bytes()
    kind = detect_format(data, path.name)
    payload = None
    if kind is FormatKind.ANALYZE75:
        img = path.with_suffix(".img")
        payload = img.read_bytes() if img.exists() else None
    elif kind is FormatKind.NRRD:
        fields, _ = _split_nrrd(data)
        data_file = fields.get("data file", fields.get("datafile"))
        if data_file is not None:
            payload = (path.parent / data_file).read_bytes()
    return read_volume(data, kind, payload)


def save_volume(v, path, endianness="little"):
    """Write ``v`` choosing the format from the extension; returns written paths."""
    path = Path(path)
    name = path.name.lower()
    if name.endswith(".nii.gz"):
        written = {path: write_volume(v, FormatKind.NIFTI1, endianness, compress=True)}
    elif name.endswith(".nii"):
        written = {path: write_volume(v, FormatKind.NIFTI1, endianness)}
    elif name.endswith(".hdr"):
        blob = write_volume(v, FormatKind.ANALYZE75, endianness)
        written = {path: blob[:HEADER_SIZE], path.with_suffix(".img"): blob[HEADER_SIZE:]}
    elif name.endswith(".mha"):
        written = {path: write_volume(v, FormatKind.METAIMAGE, endianness)}
    elif name.endswith(".nhdr"):
        raw = path.with_suffix(".raw")
        header, payload = write_nrrd_detached(v, raw.name, endianness)
        written = {path: header, raw: payload}
    elif name.endswith(".nrrd"):
        written = {path: write_volume(v, FormatKind.NRRD, endianness)}
    else:
        raise UnknownFormat(f"cannot infer a volume format from {path.name!r}")
    for target, blob in written.items():
        atomic_write(target, blob)
    return list(written)


def atomic_write(path, blob):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


# ---------------------------------------------------------------- PNG

def quantize(image):
    """Map values in [0, 1] to uint8 with round-half-up of ``value * 255``."""
    image = np.asarray(image, dtype=np.float64)
    if not np.all(np.isfinite(image)):
        raise ValueOutOfRange("image contains non-finite values")
    if image.size and (image.min() < 0.0 or image.max() > 1.0):
        raise ValueOutOfRange(f"image values span [{image.min()}, {image.max()}], outside [0, 1]")
    return np.floor(image * 255.0 + 0.5).astype(np.uint8)


def export_png(image):
    """Encode an H x W or H x W x C (C in 1, 3) image in [0, 1] as 8-bit PNG."""
    pixels = quantize(image)
    if pixels.ndim == 3 and pixels.shape[2] == 1:
        pixels = pixels[:, :, 0]
    if pixels.ndim == 2:
        mode = "L"
    elif pixels.ndim == 3 and pixels.shape[2] == 3:
        mode = "RGB"
    else:
        raise ValueError(f"expected H x W or H x W x 3 image, got shape {pixels.shape}")
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels), mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data):
    """Decode PNG bytes to a uint8 array (H x W or H x W x 3)."""
    with Image.open(io.BytesIO(data)) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        return np.asarray(img).copy()
