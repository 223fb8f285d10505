"""Volume / mask data model, NRRD-style I/O and region cropping.

Arrays are indexed ``data[x, y, z]``.  Linear voxel indices (file payloads,
connected-component tie breaks) are x-fastest, i.e. ``x + nx*(y + ny*z)``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyMask,
    GeometryMismatch,
    IoFailure,
    MalformedHeader,
    RegionOutOfBounds,
    UnsupportedEncoding,
)

DEFAULT_SPACING = 0.076  # mm, isotropic CBCT voxel

_TYPES = {
    "uint8": np.uint8,
    "uchar": np.uint8,
    "unsigned char": np.uint8,
    "uint8_t": np.uint8,
    "int16": np.int16,
    "short": np.int16,
    "int16_t": np.int16,
    "uint16": np.uint16,
    "ushort": np.uint16,
    "unsigned short": np.uint16,
    "uint16_t": np.uint16,
    "float32": np.float32,
    "float": np.float32,
    "float64": np.float64,
    "double": np.float64,
}
_TYPE_NAMES = {
    np.dtype(np.uint8): "uint8",
    np.dtype(np.int16): "int16",
    np.dtype(np.uint16): "uint16",
    np.dtype(np.float32): "float",
    np.dtype(np.float64): "double",
}


def _as_spacing(spacing) -> tuple[float, float, float]:
    if np.isscalar(spacing):
        spacing = (spacing,) * 3
    sp = tuple(float(s) for s in spacing)
    if len(sp) != 3 or not all(s > 0 for s in sp):
        raise ValueError(f"spacing must be 3 positive values, got {spacing!r}")
    return sp


@dataclass(frozen=True, eq=False)
class _Grid:
    data: np.ndarray
    spacing: tuple[float, float, float] = (DEFAULT_SPACING,) * 3
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise DimensionMismatch(f"expected a non-empty 3-D array, got shape {self.data.shape}")
        object.__setattr__(self, "spacing", _as_spacing(self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if len(self.origin) != 3:
            raise ValueError("origin must have 3 components")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    @property
    def voxel_volume(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def same_geometry(self, other: "_Grid") -> bool:
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and self.origin == other.origin
        )

    def require_geometry(self, other: "_Grid", what: str = "inputs") -> None:
        if not self.same_geometry(other):
            raise GeometryMismatch(
                f"{what}: dims/spacing/origin differ "
                f"({self.dims}, {self.spacing}, {self.origin}) vs "
                f"({other.dims}, {other.spacing}, {other.origin})"
            )

    def linear(self) -> np.ndarray:
        """Data flattened x-fastest."""
        return self.data.ravel(order="F")


@dataclass(frozen=True, eq=False)
class Volume(_Grid):
    """Scalar 3-D grid stored as float64."""

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        super().__post_init__()

    def with_data(self, data: np.ndarray) -> "Volume":
        return Volume(data, self.spacing, self.origin)

    def __eq__(self, other):
        if not isinstance(other, Volume):
            return NotImplemented
        return self.same_geometry(other) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class Mask(_Grid):
    """Binary 3-D grid aligned to a :class:`Volume`."""

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=bool)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        super().__post_init__()

    @classmethod
    def like(cls, grid: _Grid, data: np.ndarray | None = None) -> "Mask":
        if data is None:
            data = np.zeros(grid.dims, dtype=bool)
        return cls(data, grid.spacing, grid.origin)

    def with_data(self, data: np.ndarray) -> "Mask":
        return Mask(data, self.spacing, self.origin)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.data))

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.same_geometry(other) and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class Region:
    """Inclusive voxel box ``lo..hi``."""

    lo: tuple[int, int, int]
    hi: tuple[int, int, int]

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"invalid region lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    @property
    def slices(self) -> tuple[slice, slice, slice]:
        return tuple(slice(a, b + 1) for a, b in zip(self.lo, self.hi))

    def fits(self, dims) -> bool:
        return all(a >= 0 and b < n for a, b, n in zip(self.lo, self.hi, dims))

    def to_mask(self, grid: _Grid) -> Mask:
        if not self.fits(grid.dims):
            raise RegionOutOfBounds(f"{self} outside dims {grid.dims}")
        data = np.zeros(grid.dims, dtype=bool)
        data[self.slices] = True
        return Mask.like(grid, data)


# --------------------------------------------------------------------------- I/O


def _parse_header(lines: list[str]) -> dict[str, str]:
    fields: dict[str, str] = {}
    for line in lines:
        if not line or line.startswith("#"):
            continue
        if ":=" in line:  # key/value pairs
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise MalformedHeader(f"header line without ':' -> {line!r}")
        fields[key.strip().lower()] = value.strip()
    return fields


def _parse_triple(text: str) -> tuple[float, float, float]:
    vals = text.strip().strip("()").replace(",", " ").split()
    if len(vals) != 3:
        raise MalformedHeader(f"expected 3 values, got {text!r}")
    try:
        return tuple(float(v) for v in vals)
    except ValueError as exc:
        raise MalformedHeader(f"bad numeric triple {text!r}") from exc


def _read_raw(path: Path) -> tuple[np.ndarray, tuple, tuple]:
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not blob.startswith(b"NRRD"):
        raise MalformedHeader(f"{path}: missing NRRD magic")
    sep = blob.find(b"\n\n")
    if sep < 0:
        header_bytes, payload = blob, b""
    else:
        header_bytes, payload = blob[:sep], blob[sep + 2:]
    try:
        lines = header_bytes.decode("ascii").splitlines()
    except UnicodeDecodeError as exc:
        raise MalformedHeader(f"{path}: non-ASCII header") from exc
    fields = _parse_header(lines[1:])

    for key in ("dimension", "sizes", "type", "encoding"):
        if key not in fields:
            raise MalformedHeader(f"{path}: missing required field {key!r}")
    try:
        ndim = int(fields["dimension"])
    except ValueError as exc:
        raise MalformedHeader(f"{path}: bad dimension") from exc
    if ndim != 3:
        raise MalformedHeader(f"{path}: dimension {ndim}, expected 3")
    try:
        sizes = tuple(int(s) for s in fields["sizes"].split())
    except ValueError as exc:
        raise MalformedHeader(f"{path}: bad sizes") from exc
    if len(sizes) != 3 or min(sizes) < 1:
        raise MalformedHeader(f"{path}: sizes {fields['sizes']!r}")

    type_name = fields["type"].lower()
    if type_name not in _TYPES:
        raise UnsupportedEncoding(f"{path}: scalar type {fields['type']!r}")
    dtype = np.dtype(_TYPES[type_name])
    if fields["encoding"].lower() != "raw":
        raise UnsupportedEncoding(f"{path}: encoding {fields['encoding']!r}")
    endian = fields.get("endian", "little").lower()
    if dtype.itemsize > 1 and endian != "little":
        raise UnsupportedEncoding(f"{path}: endian {endian!r}")

    if "data file" in fields or "datafile" in fields:
        ref = fields.get("data file", fields.get("datafile"))
        data_path = (path.parent / ref) if not os.path.isabs(ref) else Path(ref)
        try:
            payload = data_path.read_bytes()
        except OSError as exc:
            raise IoFailure(f"cannot read data file {data_path}: {exc}") from exc

    n = sizes[0] * sizes[1] * sizes[2]
    if len(payload) != n * dtype.itemsize:
        raise DimensionMismatch(
            f"{path}: payload holds {len(payload)} bytes, sizes need {n * dtype.itemsize}"
        )
    flat = np.frombuffer(payload, dtype=dtype.newbyteorder("<"))
    data = flat.reshape(sizes, order="F")

    if "spacings" in fields:
        spacing = _parse_triple(fields["spacings"])
    else:
        spacing = (DEFAULT_SPACING,) * 3
    origin = _parse_triple(fields["space origin"]) if "space origin" in fields else (0.0, 0.0, 0.0)
    return data, spacing, origin


def read_volume(path) -> Volume:
    """Read an NRRD-style file; data is converted to float64."""
    data, spacing, origin = _read_raw(Path(path))
    return Volume(data.astype(np.float64), spacing, origin)


def read_mask(path) -> Mask:
    """Read a mask file; any nonzero voxel is set."""
    data, spacing, origin = _read_raw(Path(path))
    return Mask(data != 0, spacing, origin)


def write_volume(v: Volume | Mask, path, dtype=None, detached: bool = False) -> None:
    """Write ``v`` as NRRD (attached payload unless ``detached``).

    Masks default to uint8, volumes to float64.
    """
    path = Path(path)
    if dtype is None:
        dtype = np.uint8 if isinstance(v, Mask) else np.float64
    dtype = np.dtype(dtype)
    if dtype not in _TYPE_NAMES:
        raise UnsupportedEncoding(f"cannot write scalar type {dtype}")
    payload = np.asarray(v.data).astype(dtype.newbyteorder("<")).ravel(order="F").tobytes()
    nx, ny, nz = v.dims
    sp = " ".join(repr(s) for s in v.spacing)
    org = ",".join(repr(o) for o in v.origin)
    header = [
        "NRRD0004",
        "# written by ecrseg",
        f"type: {_TYPE_NAMES[dtype]}",
        "dimension: 3",
        f"sizes: {nx} {ny} {nz}",
        f"spacings: {sp}",
        "space dimension: 3",
        f"space origin: ({org})",
        "encoding: raw",
        "endian: little",
    ]
    try:
        if detached:
            raw_name = path.with_suffix(".raw").name
            header.append(f"data file: {raw_name}")
            (path.parent / raw_name).write_bytes(payload)
            path.write_bytes(("\n".join(header) + "\n\n").encode("ascii"))
        else:
            path.write_bytes(("\n".join(header) + "\n\n").encode("ascii") + payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# ----------------------------------------------------------------------- regions


def lesion_bounding_region(lesion: Mask, margin: int = 5) -> Region:
    """Tight box around the set voxels, grown by ``margin`` and clamped."""
    idx = np.nonzero(lesion.data)
    if idx[0].size == 0:
        raise EmptyMask("lesion mask has no set voxels")
    lo = [max(int(a.min()) - margin, 0) for a in idx]
    hi = [min(int(a.max()) + margin, n - 1) for a, n in zip(idx, lesion.dims)]
    return Region(tuple(lo), tuple(hi))


def crop(v: Volume | Mask, r: Region) -> Volume | Mask:
    if not r.fits(v.dims):
        raise RegionOutOfBounds(f"region {r.lo}..{r.hi} exceeds dims {v.dims}")
    origin = tuple(o + lo * s for o, lo, s in zip(v.origin, r.lo, v.spacing))
    return type(v)(np.array(v.data[r.slices]), v.spacing, origin)
