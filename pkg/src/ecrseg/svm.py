"""Feature standardization and a deterministic linear SVM.

Training minimizes the primal hinge objective

    0.5 * ||w||^2 + C * sum_i max(0, 1 - y_i (w . x_i + b)),   y in {-1, +1}

by majorization-minimization: each epoch replaces every hinge term by the
quadratic upper bound that touches it at the current residual, solves the
resulting (d+1)-dimensional linear system, then takes an exact line search
on the true objective along the step.  The recorded objective never
increases, and no random numbers are drawn.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyMask, NonFiniteFeature, SingleClass, TooFewSamples
from .texture.maps import FeatureMapStack
from .volume import Mask, lesion_bounding_region

_EPS = 1e-8


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        scale = np.where(self.scale > 0, self.scale, 1.0)
        return (np.asarray(x, dtype=np.float64) - self.mean) / scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["scale"], dtype=np.float64))


@dataclass(frozen=True, eq=False)
class TrainingSet:
    samples: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[0] != self.labels.shape[0]:
            raise ValueError("samples must be (n, d) with one label per row")

    @property
    def n(self) -> int:
        return int(self.samples.shape[0])

    @staticmethod
    def concat(sets: list["TrainingSet"]) -> "TrainingSet":
        if not sets:
            raise TooFewSamples("no training sets to concatenate")
        names = sets[0].feature_names
        if any(s.feature_names != names for s in sets):
            raise ValueError("training sets use different feature orders")
        prov = [p for s in sets for p in s.provenance]
        return TrainingSet(
            np.concatenate([s.samples for s in sets]),
            np.concatenate([s.labels for s in sets]),
            names,
            prov,
        )


@dataclass(frozen=True, eq=False)
class SvmModel:
    weights: np.ndarray
    bias: float
    standardizer: Standardizer
    c: float
    feature_names: tuple[str, ...]
    seed: int = 0
    epochs: int = 0
    params: dict = field(default_factory=dict)
    objective_trace: tuple = ()

    def decision(self, x: np.ndarray) -> np.ndarray:
        return self.standardizer.transform(x) @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {
            "kind": "linear_svm",
            "feature_names": list(self.feature_names),
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "standardizer": self.standardizer.to_dict(),
            "c": self.c,
            "seed": self.seed,
            "epochs": self.epochs,
            "params": self.params,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        return cls(
            weights=np.asarray(d["weights"], dtype=np.float64),
            bias=float(d["bias"]),
            standardizer=Standardizer.from_dict(d["standardizer"]),
            c=float(d["c"]),
            feature_names=tuple(d["feature_names"]),
            seed=int(d.get("seed", 0)),
            epochs=int(d.get("epochs", 0)),
            params=dict(d.get("params", {})),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "SvmModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def assemble_training_set(
    maps: FeatureMapStack,
    tooth: Mask,
    lesion: Mask,
    margin: int = 5,
    feature_names=None,
    case_id: str = "",
) -> TrainingSet:
    """Rows from (lesion bounding box grown by ``margin``) inside the tooth."""
    names = tuple(feature_names or maps.names)
    geom = maps.geometry
    tooth.require_geometry(geom, "tooth mask vs feature maps")
    lesion.require_geometry(geom, "lesion mask vs feature maps")
    if not lesion.data.any():
        raise EmptyMask(f"case {case_id!r}: lesion mask is empty")
    region = lesion_bounding_region(lesion, margin)
    where = tooth.with_data(region.to_mask(tooth).data & tooth.data)
    x = maps.rows(where, names)
    y = lesion.data.ravel(order="F")[where.data.ravel(order="F")].astype(np.int8)
    voxels = np.nonzero(where.data.ravel(order="F"))[0]
    return TrainingSet(x, y, names, [(case_id, int(i)) for i in voxels])


def fit_standardizer(ts: TrainingSet | np.ndarray) -> Standardizer:
    x = ts.samples if isinstance(ts, TrainingSet) else np.asarray(ts, dtype=np.float64)
    if x.shape[0] < 2:
        raise TooFewSamples(f"need at least 2 samples, got {x.shape[0]}")
    return Standardizer(x.mean(axis=0), x.std(axis=0))


def hinge_objective(w, b, x, y, c) -> float:
    margins = 1.0 - y * (x @ w + b)
    return 0.5 * float(w @ w) + c * float(np.maximum(margins, 0.0).sum())


def _line_search(w, dw, r, s, c) -> float:
    """argmin_{t>=0} 0.5||w + t dw||^2 + c * sum max(0, r_i - t s_i)."""
    a = float(w @ dw)
    q = float(dw @ dw)
    active0 = (r > 0) | ((r == 0) & (s < 0))
    g = -c * float(s[active0].sum())
    if a + g >= 0:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ev = np.where(s != 0, r / s, -1.0)
    ev = t_ev > 0
    t_ev = t_ev[ev]
    order = np.argsort(t_ev, kind="stable")
    t_ev = t_ev[order]
    inc = c * np.abs(s[ev][order])
    g_before = g + np.concatenate(([0.0], np.cumsum(inc)[:-1]))
    left = a + q * t_ev + g_before
    right = left + inc
    hit = np.nonzero(right >= 0)[0]
    if hit.size:
        k = hit[0]
        if left[k] >= 0:
            t_prev = t_ev[k - 1] if k > 0 else 0.0
            return max(t_prev, -(a + g_before[k]) / q)
        return float(t_ev[k])
    g_last = g + float(inc.sum())
    if q > 0:
        return max(float(t_ev[-1]) if t_ev.size else 0.0, -(a + g_last) / q)
    raise ArithmeticError("hinge objective unbounded along search direction")


def train_linear_svm(
    ts: TrainingSet,
    c: float = 1.0,
    seed: int = 0,
    max_epochs: int = 10_000,
    tol: float = 1e-6,
    params: dict | None = None,
) -> SvmModel:
    """Fit a linear SVM on standardized features (standardizer is stored)."""
    if not np.all(np.isfinite(ts.samples)):
        raise NonFiniteFeature("training samples contain NaN or inf")
    labels = np.asarray(ts.labels).astype(np.int64)
    if np.unique(labels).size < 2:
        raise SingleClass("training set contains a single class")
    std = fit_standardizer(ts)
    x = std.transform(ts.samples)
    y = np.where(labels > 0, 1.0, -1.0)
    n, d = x.shape

    a_mat = y[:, None] * np.hstack([x, np.ones((n, 1))])
    reg = np.eye(d + 1)
    reg[d, d] = 0.0
    w = np.zeros(d)
    b = 0.0
    obj = hinge_objective(w, b, x, y, c)
    trace = [obj]
    epochs = 0
    for epochs in range(1, max_epochs + 1):
        r = 1.0 - y * (x @ w + b)
        inv_m = 1.0 / np.maximum(np.abs(r), _EPS)
        h = reg + 0.5 * c * (a_mat.T * inv_m) @ a_mat
        rhs = 0.5 * c * a_mat.T @ (1.0 + inv_m)
        try:
            z = np.linalg.solve(h, rhs)
        except np.linalg.LinAlgError:
            z = np.linalg.lstsq(h, rhs, rcond=None)[0]
        dw = z[:d] - w
        db = z[d] - b
        s = a_mat @ np.append(dw, db)
        t = _line_search(w, dw, r, s, c)
        w_new = w + t * dw
        b_new = b + t * db
        new_obj = hinge_objective(w_new, b_new, x, y, c)
        if new_obj <= obj:
            w, b = w_new, b_new
        else:
            new_obj = obj
        trace.append(new_obj)
        if obj - new_obj <= tol * max(abs(obj), 1e-300):
            obj = new_obj
            break
        obj = new_obj
    return SvmModel(
        weights=w,
        bias=float(b),
        standardizer=std,
        c=float(c),
        feature_names=tuple(ts.feature_names),
        seed=int(seed),
        epochs=epochs,
        params=dict(params or {}),
        objective_trace=tuple(trace),
    )


def predict_mask(model: SvmModel, maps: FeatureMapStack, tooth: Mask) -> Mask:
    """Lesion where inside the tooth and the decision value is strictly positive."""
    for name in model.feature_names:
        maps[name]  # raises MissingFeatureMap
    tooth.require_geometry(maps.geometry, "tooth mask vs feature maps")
    out = np.zeros(tooth.dims, dtype=bool)
    idx = np.nonzero(tooth.data)
    if idx[0].size:
        x = np.stack([maps[name].data[idx] for name in model.feature_names], axis=1)
        out[idx] = model.decision(x) > 0
    return tooth.with_data(out)
