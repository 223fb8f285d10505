"""Binary erosion / dilation, largest 26-connected component, and cleanup.

Out-of-bounds voxels count as background everywhere.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit, prange
from .volume import Mask

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StructuringElement:
    offsets: tuple
    name: str = "custom"

    def __post_init__(self):
        offs = tuple(sorted({tuple(int(c) for c in o) for o in self.offsets}))
        if not offs or any(len(o) != 3 for o in offs):
            raise ValueError("structuring element needs at least one 3-D offset")
        object.__setattr__(self, "offsets", offs)

    @classmethod
    def cube(cls, size: int = 6) -> "StructuringElement":
        """Cube of side ``size``; even sizes extend one further on the negative side."""
        if size < 1:
            raise ValueError("cube size must be >= 1")
        lo = -(size // 2)
        rng = range(lo, lo + size)
        offs = [(x, y, z) for x in rng for y in rng for z in rng]
        return cls(tuple(offs), f"cube{size}")

    def reflect(self) -> "StructuringElement":
        return StructuringElement(tuple(tuple(-c for c in o) for o in self.offsets), f"reflect({self.name})")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.offsets, dtype=np.int64).reshape(-1, 3)

    @property
    def box(self) -> tuple | None:
        """Per-axis (lo, hi) when the element fills its bounding box, else None."""
        a = self.array
        lo, hi = a.min(axis=0), a.max(axis=0)
        if len(self.offsets) != int(np.prod(hi - lo + 1)):
            return None
        return tuple((int(l), int(h)) for l, h in zip(lo, hi))


CUBE6 = StructuringElement.cube(6)


# ------------------------------------------------------------------ kernels


@njit(parallel=True, cache=True)
def _erode_nb(m, offs):
    nx, ny, nz = m.shape
    out = np.zeros(m.shape, dtype=np.bool_)
    for x in prange(nx):
        for y in range(ny):
            for z in range(nz):
                keep = True
                for k in range(offs.shape[0]):
                    a = x + offs[k, 0]
                    b = y + offs[k, 1]
                    c = z + offs[k, 2]
                    if a < 0 or a >= nx or b < 0 or b >= ny or c < 0 or c >= nz or not m[a, b, c]:
                        keep = False
                        break
                out[x, y, z] = keep
    return out


@njit(parallel=True, cache=True)
def _dilate_nb(m, offs):
    nx, ny, nz = m.shape
    out = np.zeros(m.shape, dtype=np.bool_)
    for x in prange(nx):
        for y in range(ny):
            for z in range(nz):
                hit = False
                for k in range(offs.shape[0]):
                    a = x - offs[k, 0]
                    b = y - offs[k, 1]
                    c = z - offs[k, 2]
                    if 0 <= a < nx and 0 <= b < ny and 0 <= c < nz and m[a, b, c]:
                        hit = True
                        break
                out[x, y, z] = hit
    return out


@njit(parallel=True, cache=True)
def _box_pass_nb(m, lo, hi, erode_):
    # 1-D box erosion/dilation along the last axis via a running count
    nx, ny, n = m.shape
    out = np.zeros(m.shape, dtype=np.bool_)
    width = hi - lo + 1
    for line in prange(nx * ny):
        x = line // ny
        y = line % ny
        count = np.zeros(n + 1, dtype=np.int64)
        for z in range(n):
            count[z + 1] = count[z] + (1 if m[x, y, z] else 0)
        for z in range(n):
            if erode_:
                a = z + lo
                b = z + hi
                if a >= 0 and b < n:
                    out[x, y, z] = count[b + 1] - count[a] == width
            else:
                a = max(z - hi, 0)
                b = min(z - lo, n - 1)
                if a <= b:
                    out[x, y, z] = count[b + 1] - count[a] > 0
    return out


def _box_nb(m: np.ndarray, box, erode_: bool) -> np.ndarray:
    # a box is the Minkowski sum of three axis segments, so the passes compose exactly
    out = m
    for axis, (lo, hi) in enumerate(box):
        moved = np.ascontiguousarray(np.moveaxis(out, axis, -1))
        out = np.moveaxis(_box_pass_nb(moved, lo, hi, erode_), -1, axis)
    return np.ascontiguousarray(out)


def _shifted(m: np.ndarray, o) -> np.ndarray:
    """``out[v] = m[v + o]`` with zeros outside."""
    out = np.zeros_like(m)
    src = []
    dst = []
    for n, s in zip(m.shape, o):
        if abs(s) >= n:
            return out
        src.append(slice(max(s, 0), n + min(s, 0)))
        dst.append(slice(max(-s, 0), n - max(s, 0)))
    out[tuple(dst)] = m[tuple(src)]
    return out


def _erode_np(m, offs):
    out = np.ones_like(m)
    for o in offs:
        out &= _shifted(m, o)
    return out


def _dilate_np(m, offs):
    out = np.zeros_like(m)
    for o in offs:
        out |= _shifted(m, tuple(-c for c in o))
    return out


@njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit(cache=True)
def _largest_cc_nb(m):
    """Union-find over the 13 backward neighbours; returns keep-mask."""
    nx, ny, nz = m.shape
    n = nx * ny * nz
    parent = np.arange(n)
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if not m[x, y, z]:
                    continue
                i = x + nx * (y + ny * z)
                for dz in (-1, 0):
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            if dz == 0 and (dy > 0 or (dy == 0 and dx >= 0)):
                                continue
                            a = x + dx
                            b = y + dy
                            c = z + dz
                            if a < 0 or a >= nx or b < 0 or b >= ny or c < 0:
                                continue
                            if not m[a, b, c]:
                                continue
                            j = a + nx * (b + ny * c)
                            ri = _find(parent, i)
                            rj = _find(parent, j)
                            if ri != rj:
                                # smaller root index wins: root == min linear index
                                if ri < rj:
                                    parent[rj] = ri
                                else:
                                    parent[ri] = rj
    size = np.zeros(n, dtype=np.int64)
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if m[x, y, z]:
                    size[_find(parent, x + nx * (y + ny * z))] += 1
    best = -1
    best_size = 0
    for i in range(n):  # ascending root index settles ties
        if size[i] > best_size:
            best_size = size[i]
            best = i
    out = np.zeros(m.shape, dtype=np.bool_)
    if best < 0:
        return out
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if m[x, y, z] and _find(parent, x + nx * (y + ny * z)) == best:
                    out[x, y, z] = True
    return out


def _largest_cc_np(m):
    from scipy import ndimage

    labels, n = ndimage.label(m, structure=np.ones((3, 3, 3), dtype=bool))
    if n == 0:
        return np.zeros_like(m)
    flat = labels.ravel(order="F")
    sizes = np.bincount(flat, minlength=n + 1)
    sizes[0] = 0
    first = np.full(n + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat, np.arange(flat.size))
    cand = np.nonzero(sizes == sizes.max())[0]
    best = cand[np.argmin(first[cand])]
    return labels == best


# ------------------------------------------------------------------ public


def erode(m: Mask, se: StructuringElement = CUBE6, backend: str | None = None) -> Mask:
    """Voxel stays set iff every ``v + o`` is in bounds and set."""
    data = np.ascontiguousarray(m.data)
    if _accel.resolve_backend(backend) == "numba":
        out = _box_nb(data, se.box, True) if se.box else _erode_nb(data, se.array)
    else:
        out = _erode_np(data, se.offsets)
    return m.with_data(out)


def dilate(m: Mask, se: StructuringElement = CUBE6, backend: str | None = None) -> Mask:
    """Voxel set iff some ``w - o`` is set (adjoint of :func:`erode`)."""
    data = np.ascontiguousarray(m.data)
    if _accel.resolve_backend(backend) == "numba":
        out = _box_nb(data, se.box, False) if se.box else _dilate_nb(data, se.array)
    else:
        out = _dilate_np(data, se.offsets)
    return m.with_data(out)


def opening(m: Mask, se: StructuringElement = CUBE6, backend: str | None = None) -> Mask:
    return dilate(erode(m, se, backend), se, backend)


def largest_connected_component(m: Mask, backend: str | None = None) -> Mask:
    """Largest 26-connected component; ties go to the smallest linear index.

    An empty input yields an empty mask (logged, not raised).
    """
    if not m.data.any():
        log.warning("largest_connected_component: empty mask")
        return m.with_data(np.zeros(m.dims, dtype=bool))
    data = np.ascontiguousarray(m.data)
    if _accel.resolve_backend(backend) == "numba":
        out = _largest_cc_nb(data)
    else:
        out = _largest_cc_np(data)
    return m.with_data(out)


@dataclass(frozen=True, eq=False)
class PostprocessResult:
    mask: Mask
    degraded: bool


def postprocess(raw: Mask, se: StructuringElement = CUBE6, backend: str | None = None) -> PostprocessResult:
    """Erode, keep the largest component, dilate back.

    Falls back to the largest component of ``raw`` (``degraded=True``) when
    erosion removes everything.
    """
    eroded = erode(raw, se, backend)
    if not eroded.data.any():
        return PostprocessResult(largest_connected_component(raw, backend), True)
    core = largest_connected_component(eroded, backend)
    return PostprocessResult(dilate(core, se, backend), False)
