"""Gray-level discretization and per-neighborhood GLCM / run-length matrices.

These are the single-voxel entry points.  Whole-volume maps go through the
batched kernels in :mod:`ecrseg.texture.maps`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import CenterOutsideMask, DegenerateRange
from ..volume import Mask, Volume

# 13 unique 3-D directions, no antiparallel duplicates.
DIRECTIONS_13 = (
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 1, 0),
    (1, -1, 0),
    (1, 0, 1),
    (1, 0, -1),
    (0, 1, 1),
    (0, 1, -1),
    (1, 1, 1),
    (1, 1, -1),
    (1, -1, 1),
    (1, -1, -1),
)

GLCM_FEATURES = (
    "energy",
    "entropy",
    "correlation",
    "idm",
    "inertia",
    "cluster_shade",
    "cluster_prominence",
    "haralick_correlation",
)
GLRLM_FEATURES = (
    "sre",
    "lre",
    "gln",
    "rln",
    "lgre",
    "hgre",
    "srlge",
    "srhge",
    "lrlge",
    "lrhge",
)
FEATURE_NAMES = GLCM_FEATURES + GLRLM_FEATURES

LONG_NAMES = {
    "energy": "Energy",
    "entropy": "Entropy",
    "correlation": "Correlation",
    "idm": "InverseDifferenceMoment",
    "inertia": "Inertia",
    "cluster_shade": "ClusterShade",
    "cluster_prominence": "ClusterProminence",
    "haralick_correlation": "HaralickCorrelation",
    "sre": "ShortRunEmphasis",
    "lre": "LongRunEmphasis",
    "gln": "GreyLevelNonuniformity",
    "rln": "RunLengthNonuniformity",
    "lgre": "LowGreyLevelRunEmphasis",
    "hgre": "HighGreyLevelRunEmphasis",
    "srlge": "ShortRunLowGreyLevelEmphasis",
    "srhge": "ShortRunHighGreyLevelEmphasis",
    "lrlge": "LongRunLowGreyLevelEmphasis",
    "lrhge": "LongRunHighGreyLevelEmphasis",
}
_ALIASES = {v.lower(): k for k, v in LONG_NAMES.items()}


def canonical_feature(name: str) -> str:
    key = name.strip().lower()
    if key in LONG_NAMES:
        return key
    if key in _ALIASES:
        return _ALIASES[key]
    raise KeyError(f"unknown texture feature {name!r}")


def parse_selection(text: str | None) -> tuple[str, ...]:
    """``"lgre,hgre"`` / ``"all"`` / ``"glcm"`` / ``"glrlm"`` -> canonical names."""
    if not text:
        return ("lgre", "hgre")
    out: list[str] = []
    for part in text.split(","):
        part = part.strip().lower()
        if not part:
            continue
        if part == "all":
            group = FEATURE_NAMES
        elif part == "glcm":
            group = GLCM_FEATURES
        elif part == "glrlm":
            group = GLRLM_FEATURES
        else:
            group = (canonical_feature(part),)
        out.extend(g for g in group if g not in out)
    return tuple(out)


@dataclass(frozen=True)
class TextureParams:
    radius: int = 5
    n_bins: int = 16
    offsets: tuple = DIRECTIONS_13
    value_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if self.n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        offs = tuple(tuple(int(c) for c in o) for o in self.offsets)
        seen = set()
        for o in offs:
            if len(o) != 3 or o == (0, 0, 0):
                raise ValueError(f"bad offset {o}")
            neg = tuple(-c for c in o)
            if o in seen or neg in seen:
                raise ValueError(f"offset {o} duplicates an existing direction")
            seen.add(o)
        object.__setattr__(self, "offsets", offs)

    @property
    def offset_array(self) -> np.ndarray:
        return np.asarray(self.offsets, dtype=np.int64).reshape(-1, 3)

    @property
    def max_run(self) -> int:
        return 2 * self.radius + 1


@dataclass(frozen=True, eq=False)
class QuantizedVolume:
    """Bin index per voxel, 1..n_bins inside ``valid``; 0 elsewhere."""

    bins: np.ndarray
    valid: Mask
    n_bins: int


@dataclass(frozen=True, eq=False)
class GlcmMatrix:
    p: np.ndarray
    n_pairs: int


@dataclass(frozen=True, eq=False)
class RlmMatrix:
    """``r[i-1, j-1]`` counts maximal runs of gray level i with length j."""

    r: np.ndarray
    n_runs: int = field(default=-1)

    def __post_init__(self):
        if self.n_runs < 0:
            object.__setattr__(self, "n_runs", int(self.r.sum()))


def quantize(v: Volume, mask: Mask, n_bins: int = 16, value_range=(0.0, 1.0)) -> QuantizedVolume:
    lo, hi = (float(x) for x in value_range)
    if hi == lo:
        raise DegenerateRange(f"value_range ({lo}, {hi}) is empty")
    mask.require_geometry(v, "quantize")
    x = np.clip(v.data, lo, hi)
    bins = np.floor((x - lo) / (hi - lo) * n_bins).astype(np.int64) + 1
    np.minimum(bins, n_bins, out=bins)
    bins[~mask.data] = 0
    return QuantizedVolume(bins.astype(np.int32), mask, int(n_bins))


def _box(center, radius, dims):
    lo = [max(c - radius, 0) for c in center]
    hi = [min(c + radius, n - 1) for c, n in zip(center, dims)]
    return lo, hi


def _check_center(q: QuantizedVolume, center) -> tuple[int, int, int]:
    c = tuple(int(v) for v in center)
    dims = q.bins.shape
    if not all(0 <= a < n for a, n in zip(c, dims)) or q.bins[c] == 0:
        raise CenterOutsideMask(f"center {c} is not an in-mask voxel")
    return c


def _neighborhood(q: QuantizedVolume, center, radius) -> np.ndarray:
    """Bins of the clipped cube around ``center``; 0 marks unusable voxels."""
    lo, hi = _box(center, radius, q.bins.shape)
    return q.bins[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1]


def glcm_at(q: QuantizedVolume, center, radius: int = 5, offsets=DIRECTIONS_13) -> GlcmMatrix:
    """Symmetric co-occurrence matrix pooled over all offsets."""
    c = _check_center(q, center)
    nb = q.n_bins
    hood = _neighborhood(q, c, radius)
    counts = np.zeros((nb, nb), dtype=np.float64)
    n_pairs = 0
    shape = hood.shape
    for d in offsets:
        src = []
        dst = []
        for ax, step in enumerate(d):
            n = shape[ax]
            if step >= 0:
                src.append(slice(0, max(n - step, 0)))
                dst.append(slice(step, n))
            else:
                src.append(slice(-step, n))
                dst.append(slice(0, max(n + step, 0)))
        a = hood[tuple(src)].ravel()
        b = hood[tuple(dst)].ravel()
        ok = (a > 0) & (b > 0)
        a = a[ok] - 1
        b = b[ok] - 1
        n_pairs += int(a.size)
        np.add.at(counts, (a, b), 1.0)
        np.add.at(counts, (b, a), 1.0)
    total = counts.sum()
    p = counts / total if total > 0 else counts
    return GlcmMatrix(p, n_pairs)


def _line_starts(shape, d):
    """All in-box positions whose predecessor along ``d`` leaves the box."""
    idx = np.indices(shape).reshape(3, -1).T
    prev = idx - np.asarray(d)
    outside = np.any((prev < 0) | (prev >= np.asarray(shape)), axis=1)
    return idx[outside]


def glrlm_at(q: QuantizedVolume, center, radius: int = 5, offsets=DIRECTIONS_13) -> RlmMatrix:
    """Run-length matrix pooled over all directions, one count per run."""
    c = _check_center(q, center)
    hood = _neighborhood(q, c, radius)
    max_run = 2 * radius + 1
    r = np.zeros((q.n_bins, max_run), dtype=np.int64)
    shape = np.asarray(hood.shape)
    for d in offsets:
        step = np.asarray(d)
        for start in _line_starts(hood.shape, d):
            pos = start.copy()
            cur = 0
            length = 0
            while np.all(pos >= 0) and np.all(pos < shape):
                b = hood[tuple(pos)]
                if b == 0:
                    if length:
                        r[cur - 1, length - 1] += 1
                    cur, length = 0, 0
                elif b == cur:
                    length += 1
                else:
                    if length:
                        r[cur - 1, length - 1] += 1
                    cur, length = b, 1
                pos += step
            if length:
                r[cur - 1, length - 1] += 1
    return RlmMatrix(r)
