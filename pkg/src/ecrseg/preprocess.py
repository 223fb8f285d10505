"""Intensity conditioning applied to cropped scans before texture extraction."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .volume import Volume


@dataclass(frozen=True)
class PreprocessParams:
    lo_pct: float = 5.0
    hi_pct: float = 95.0
    sigma: float = 1.0
    truncate: float = 3.0

    def __post_init__(self):
        if not 0 <= self.lo_pct < self.hi_pct <= 100:
            raise ValueError(f"need 0 <= lo_pct < hi_pct <= 100, got {self.lo_pct}, {self.hi_pct}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.truncate <= 0:
            raise ValueError("truncate must be positive")


def percentile_bounds(v: Volume, lo_pct: float = 5.0, hi_pct: float = 95.0) -> tuple[float, float]:
    """Linear-interpolation percentiles at fractional rank q*(n-1), over all voxels."""
    lo, hi = np.percentile(v.data, [lo_pct, hi_pct], method="linear")
    return float(lo), float(hi)


def percentile_clip(v: Volume, lo_pct: float = 5.0, hi_pct: float = 95.0) -> Volume:
    """Clamp to the [lo_pct, hi_pct] percentiles of all voxels."""
    lo, hi = percentile_bounds(v, lo_pct, hi_pct)
    return v.with_data(np.clip(v.data, lo, hi))


def normalize_unit(v: Volume) -> Volume:
    lo = v.data.min()
    hi = v.data.max()
    if hi == lo:
        return v.with_data(np.zeros(v.dims))
    return v.with_data((v.data - lo) / (hi - lo))


def gaussian_kernel(sigma: float, truncate: float = 3.0) -> np.ndarray:
    half = int(math.ceil(truncate * sigma))
    x = np.arange(-half, half + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def _smooth_axis(a: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    half = kernel.size // 2
    pad = [(0, 0)] * a.ndim
    pad[axis] = (half, half)
    # half-sample symmetric reflection: x[-1] == x[0]
    padded = np.pad(a, pad, mode="symmetric")
    n = a.shape[axis]
    out = np.zeros_like(a)
    for k, w in enumerate(kernel):
        out += w * np.take(padded, np.arange(k, k + n), axis=axis)
    return out


def gaussian_smooth(v: Volume, sigma: float = 1.0, truncate: float = 3.0) -> Volume:
    """Separable Gaussian blur with mirror boundaries."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    kernel = gaussian_kernel(sigma, truncate)
    out = np.array(v.data)
    for axis in range(3):
        out = _smooth_axis(out, kernel, axis)
    return v.with_data(out)


def preprocess(v: Volume, params: PreprocessParams | None = None) -> Volume:
    """Clip to percentiles, rescale to [0, 1], then smooth."""
    p = params or PreprocessParams()
    out = percentile_clip(v, p.lo_pct, p.hi_pct)
    out = normalize_unit(out)
    return gaussian_smooth(out, p.sigma, p.truncate)
