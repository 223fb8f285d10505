"""Voxel-wise texture feature maps over a tooth mask."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import _accel
from ..errors import GeometryMismatch, MissingFeatureMap
from ..volume import Mask, Region, Volume, read_volume, write_volume
from .matrices import FEATURE_NAMES, GLCM_FEATURES, GLRLM_FEATURES, TextureParams, quantize

DEFAULT_SELECTION = ("lgre", "hgre")


@dataclass(frozen=True, eq=False)
class FeatureMapStack:
    """Named feature volumes sharing one geometry."""

    maps: dict[str, Volume]

    def __post_init__(self):
        vols = list(self.maps.values())
        for v in vols[1:]:
            vols[0].require_geometry(v, "feature map stack")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.maps)

    @property
    def geometry(self) -> Volume:
        return next(iter(self.maps.values()))

    def __getitem__(self, name: str) -> Volume:
        try:
            return self.maps[name]
        except KeyError:
            raise MissingFeatureMap(f"feature map {name!r} not present (have {self.names})") from None

    def rows(self, where: Mask, names=None) -> np.ndarray:
        """(n, d) samples at set voxels of ``where``, x-fastest voxel order."""
        names = tuple(names or self.names)
        cols = []
        for name in names:
            vol = self[name]
            vol.require_geometry(where, "feature rows")
            cols.append(vol.data.ravel(order="F")[where.data.ravel(order="F")])
        return np.stack(cols, axis=1) if cols else np.zeros((0, 0))

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, vol in self.maps.items():
            write_volume(vol, out / f"{name}.nrrd")

    @classmethod
    def read(cls, in_dir, names=None) -> "FeatureMapStack":
        d = Path(in_dir)
        if names is None:
            names = [n for n in FEATURE_NAMES if (d / f"{n}.nrrd").exists()]
        maps = {}
        for name in names:
            path = d / f"{name}.nrrd"
            if not path.exists():
                raise MissingFeatureMap(f"{path} not found")
            maps[name] = read_volume(path)
        if not maps:
            raise MissingFeatureMap(f"no feature maps in {d}")
        return cls(maps)


def feature_maps(
    v: Volume,
    mask: Mask,
    params: TextureParams | None = None,
    selection=DEFAULT_SELECTION,
    region: Region | None = None,
    backend: str | None = None,
    threads: int | None = None,
) -> FeatureMapStack:
    """Evaluate the selected features at every in-mask voxel.

    ``region`` restricts which centers are evaluated (neighborhoods still
    see the whole volume); voxels outside mask or region stay 0.
    """
    params = params or TextureParams()
    selection = tuple(selection)
    unknown = [s for s in selection if s not in FEATURE_NAMES]
    if unknown:
        raise KeyError(f"unknown features {unknown}")
    if not mask.same_geometry(v):
        raise GeometryMismatch("volume and mask geometry differ")

    q = quantize(v, mask, params.n_bins, params.value_range)
    centers_mask = mask.data
    if region is not None:
        centers_mask = centers_mask & region.to_mask(mask).data
    centers = np.argwhere(centers_mask).astype(np.int64)

    do_glcm = any(s in GLCM_FEATURES for s in selection)
    do_glrlm = any(s in GLRLM_FEATURES for s in selection)
    rows = _texture_rows(q.bins, centers, params, do_glcm, do_glrlm, backend, threads)

    maps = {}
    for name in selection:
        col = FEATURE_NAMES.index(name)
        data = np.zeros(v.dims)
        if centers.size:
            data[centers[:, 0], centers[:, 1], centers[:, 2]] = rows[:, col]
        maps[name] = v.with_data(data)
    return FeatureMapStack(maps)


def _texture_rows(bins, centers, params, do_glcm, do_glrlm, backend=None, threads=None):
    backend = _accel.resolve_backend(backend)
    offsets = params.offset_array
    if backend == "numba":
        if threads is not None:
            _accel.set_threads(threads)
        from ._kernels_numba import texture_rows

        if centers.shape[0] == 0:
            return np.zeros((0, 18))
        return texture_rows(
            np.ascontiguousarray(bins, dtype=np.int32),
            centers,
            params.radius,
            offsets,
            params.n_bins,
            do_glcm,
            do_glrlm,
        )
    from ._kernels_numpy import texture_rows

    n = threads if threads is not None else _accel.get_threads()
    return texture_rows(bins, centers, params.radius, offsets, params.n_bins, do_glcm, do_glrlm, threads=n)


def overlap_coefficient(a: np.ndarray, b: np.ndarray, bins: int = 64) -> float:
    """Shared mass of the two normalized histograms on common bin edges."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        return 0.0
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        return 1.0
    edges = np.linspace(lo, hi, bins + 1)
    ha = np.histogram(a, edges)[0] / a.size
    hb = np.histogram(b, edges)[0] / b.size
    return float(np.minimum(ha, hb).sum())


def feature_histograms(maps: FeatureMapStack, tooth: Mask, lesion: Mask, bins: int = 64) -> dict:
    """Lesion vs healthy histograms per feature, for manual feature selection."""
    healthy = tooth.with_data(tooth.data & ~lesion.data)
    inside = tooth.with_data(tooth.data & lesion.data)
    report = {}
    for name in maps.names:
        les = maps.rows(inside, [name])[:, 0]
        hea = maps.rows(healthy, [name])[:, 0]
        allv = np.concatenate([les, hea])
        if allv.size == 0:
            continue
        lo, hi = float(allv.min()), float(allv.max())
        edges = np.linspace(lo, hi if hi > lo else lo + 1.0, bins + 1)
        report[name] = {
            "edges": edges.tolist(),
            "lesion": np.histogram(les, edges)[0].tolist(),
            "healthy": np.histogram(hea, edges)[0].tolist(),
            "overlap": overlap_coefficient(les, hea, bins),
        }
    return report
