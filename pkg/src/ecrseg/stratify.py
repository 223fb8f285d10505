"""Within-lesion k-means stratification and lesion volumetry."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._accel import njit
from .errors import DimensionMismatch, GeometryMismatch, TooFewSamples
from .svm import Standardizer, fit_standardizer
from .texture.maps import FeatureMapStack
from .volume import Mask, Volume

MAX_ITER = 300
MOVE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ClusterModel:
    k: int
    centers: np.ndarray
    seed: int
    inertia: float
    feature_names: tuple[str, ...] = ("lgre", "hgre")
    degenerate: bool = False
    standardizer: Standardizer | None = None
    labels: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "centers": self.centers.tolist(),
            "seed": self.seed,
            "inertia": self.inertia,
            "feature_names": list(self.feature_names),
            "degenerate": self.degenerate,
            "standardizer": self.standardizer.to_dict() if self.standardizer else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        std = d.get("standardizer")
        return cls(
            k=int(d["k"]),
            centers=np.asarray(d["centers"], dtype=np.float64),
            seed=int(d["seed"]),
            inertia=float(d["inertia"]),
            feature_names=tuple(d.get("feature_names", ("lgre", "hgre"))),
            degenerate=bool(d.get("degenerate", False)),
            standardizer=Standardizer.from_dict(std) if std else None,
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ClusterModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _sq_dists(x, centers):
    return ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers[c] = x[idx]
        d2 = np.minimum(d2, ((x - centers[c]) ** 2).sum(axis=1))
    return centers


def _lloyd(x, centers):
    """Returns (centers, labels, inertia, reseeded)."""
    k = centers.shape[0]
    reseeded = False
    for _ in range(MAX_ITER):
        d2 = _sq_dists(x, centers)
        labels = np.argmin(d2, axis=1)
        new = centers.copy()
        for c in range(k):
            members = labels == c
            if members.any():
                new[c] = x[members].mean(axis=0)
            else:
                far = int(np.argmax(d2[np.arange(x.shape[0]), labels]))
                new[c] = x[far]
                labels[far] = c
                reseeded = True
        move = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        if move < MOVE_TOL:
            break
    d2 = _sq_dists(x, centers)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(x.shape[0]), labels].sum())
    return centers, labels, inertia, reseeded


@njit(cache=True)
def _hartigan(x, labels, k):
    """Single-point transfers that lower the inertia, until none is left.

    Every Hartigan-stable partition is also a Lloyd fixed point, so this only
    escapes Lloyd optima that are not local minima under one-point moves.
    """
    n, d = x.shape
    sums = np.zeros((k, d))
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        counts[labels[i]] += 1
        for j in range(d):
            sums[labels[i], j] += x[i, j]
    moved = True
    passes = 0
    while moved and passes < 1000:
        moved = False
        passes += 1
        for i in range(n):
            a = labels[i]
            if counts[a] <= 1:
                continue
            da = 0.0
            for j in range(d):
                diff = x[i, j] - sums[a, j] / counts[a]
                da += diff * diff
            remove = counts[a] / (counts[a] - 1.0) * da
            best = a
            best_add = remove
            for b in range(k):
                if b == a:
                    continue
                db = 0.0
                if counts[b] > 0:
                    for j in range(d):
                        diff = x[i, j] - sums[b, j] / counts[b]
                        db += diff * diff
                add = counts[b] / (counts[b] + 1.0) * db
                # relative slack keeps rounding noise from cycling a point back and forth
                if add < best_add - 1e-12 * (remove + 1e-300):
                    best = b
                    best_add = add
            if best != a:
                for j in range(d):
                    sums[a, j] -= x[i, j]
                    sums[best, j] += x[i, j]
                counts[a] -= 1
                counts[best] += 1
                labels[i] = best
                moved = True
    centers = np.zeros((k, d))
    for c in range(k):
        if counts[c] > 0:
            for j in range(d):
                centers[c, j] = sums[c, j] / counts[c]
    return centers


def kmeans_fit(
    features: np.ndarray,
    k: int = 2,
    seed: int = 0,
    n_init: int = 30,
    feature_names=("lgre", "hgre"),
    standardize: bool = False,
) -> ClusterModel:
    """k-means++ seeded Lloyd iterations; best of ``n_init`` restarts.

    Each restart's Lloyd optimum is polished by Hartigan single-point
    transfers and re-settled by Lloyd, so the result is still a Lloyd fixed
    point.  Centers come back sorted by first coordinate (then the rest), so
    cluster indices are stable across runs and timepoints.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if k < 2:
        raise ValueError("k must be >= 2")
    if x.shape[0] < k:
        raise TooFewSamples(f"need at least k={k} rows, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("features contain NaN or inf")
    std = None
    if standardize:
        std = fit_standardizer(x)
        x = std.transform(x)

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        centers, labels, _, _ = _lloyd(x, _kmeanspp(x, k, rng))
        polished = _hartigan(np.ascontiguousarray(x), labels.astype(np.int64), k)
        if np.all(np.bincount(labels, minlength=k) > 0):
            result = _lloyd(x, polished)
        else:
            result = _lloyd(x, centers)
        if best is None or result[2] < best[2]:
            best = result
    centers, labels, inertia, _ = best

    order = np.lexsort(centers.T[::-1])
    centers = centers[order]
    remap = np.empty(k, dtype=np.int64)
    remap[order] = np.arange(k)
    labels = remap[labels]
    distinct = len({tuple(c) for c in centers}) == k
    return ClusterModel(
        k=k,
        centers=centers,
        seed=int(seed),
        inertia=inertia,
        feature_names=tuple(feature_names),
        degenerate=not distinct,
        standardizer=std,
        labels=labels,
    )


def kmeans_assign(model: ClusterModel, features: np.ndarray) -> np.ndarray:
    """Nearest center (Euclidean); ties resolve to the lower index."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != model.centers.shape[1]:
        raise DimensionMismatch(f"features have {x.shape[1]} columns, centers {model.centers.shape[1]}")
    if model.standardizer is not None:
        x = model.standardizer.transform(x)
    if x.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return np.argmin(_sq_dists(x, model.centers), axis=1)


def lesion_volume(m: Mask) -> float:
    """Set-voxel count times voxel volume, in mm^3."""
    return m.count * m.voxel_volume


def cluster_report(lesion: Mask, maps: FeatureMapStack, model: ClusterModel) -> tuple[Volume, list[dict]]:
    """Label volume (0 outside, cluster+1 inside) and per-cluster statistics."""
    geom = maps.geometry
    if not lesion.same_geometry(geom):
        raise GeometryMismatch("lesion mask and feature maps differ in geometry")
    labels = np.zeros(lesion.dims)
    if not lesion.data.any():
        return geom.with_data(labels), []
    x = maps.rows(lesion, model.feature_names)
    assign = kmeans_assign(model, x)
    flat = labels.ravel(order="F")
    flat[lesion.data.ravel(order="F")] = assign + 1
    labels = flat.reshape(lesion.dims, order="F")
    stats = []
    for c in range(model.k):
        members = assign == c
        n = int(members.sum())
        entry = {
            "cluster": c + 1,
            "voxels": n,
            "volume_mm3": n * lesion.voxel_volume,
        }
        for j, name in enumerate(model.feature_names):
            entry[f"mean_{name}"] = float(x[members, j].mean()) if n else None
        stats.append(entry)
    return geom.with_data(labels), stats
