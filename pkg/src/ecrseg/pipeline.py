"""End-to-end run: preprocess -> features -> SVM -> cleanup -> metrics -> stratify."""
from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import _accel
from .errors import EcrsegError
from .evaluation import dice, evaluation_domain, load_case, load_manifest, weighted_precision_recall
from .morphology import StructuringElement, postprocess
from .preprocess import PreprocessParams, preprocess
from .stratify import ClusterModel, cluster_report, kmeans_fit, lesion_volume
from .svm import SvmModel, TrainingSet, assemble_training_set, predict_mask, train_linear_svm
from .texture.maps import feature_maps
from .texture.matrices import TextureParams, parse_selection
from .volume import lesion_bounding_region, read_mask, read_volume, write_volume

log = logging.getLogger(__name__)


class ConfigError(EcrsegError, ValueError):
    stage = "config"


class StageError(EcrsegError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def bundled_model_path() -> Path:
    return Path(str(resources.files("ecrseg") / "data" / "phantom_model_r5.json"))


@dataclass
class PipelineConfig:
    scan: str = ""
    tooth: str = ""
    lesion: str | None = None
    out_dir: str = "ecrseg_out"
    model: str | None = None
    train_manifest: str | None = None
    radius: int = 5
    bins: int = 16
    select: str = "lgre,hgre"
    c: float = 1.0
    seed: int = 7
    margin: int = 5
    kernel: int = 6
    lo: float = 5.0
    hi: float = 95.0
    sigma: float = 1.0
    stratify: bool = False
    k: int = 2
    centers: str | None = None
    overlays: bool = True
    threads: int | None = None

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "PipelineConfig":
        data = json.loads(Path(path).read_text()) if path else {}
        base = Path(path).parent if path else Path(".")
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("scan", "tooth", "lesion", "model", "train_manifest", "centers", "out_dir"):
            if data.get(key) and not Path(data[key]).is_absolute():
                data[key] = str(base / data[key])
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls(**data)

    def validate(self) -> None:
        if not self.scan:
            raise ConfigError("scan path is required")
        if not self.tooth:
            raise ConfigError("tooth mask path is required")
        for label, path in (
            ("scan", self.scan),
            ("tooth mask", self.tooth),
            ("lesion mask", self.lesion),
            ("model", self.model),
            ("training manifest", self.train_manifest),
            ("cluster centers", self.centers),
        ):
            if path and not Path(path).exists():
                raise ConfigError(f"{label} not found: {path}")
        if self.radius < 1 or self.bins < 2 or self.kernel < 1 or self.k < 2:
            raise ConfigError("radius >= 1, bins >= 2, kernel >= 1 and k >= 2 are required")
        try:
            PreprocessParams(self.lo, self.hi, self.sigma)
            parse_selection(self.select)
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc


class _Timer:
    def __init__(self):
        self.timings: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as exc:  # tag and re-raise
            raise StageError(name, exc) from exc
        finally:
            self.timings[name] = time.perf_counter() - t0


def train_from_manifest(manifest_path, tp: TextureParams, selection, c, seed, margin, pre_params, threads=None):
    """Train on every case of a manifest, features only inside each training crop."""
    sets = []
    for rec in load_manifest(manifest_path):
        lc = load_case(rec, pre_params)
        region = lesion_bounding_region(lc.lesion, margin)
        maps = feature_maps(lc.pre, lc.tooth, tp, selection, region=region, threads=threads)
        sets.append(assemble_training_set(maps, lc.tooth, lc.lesion, margin, selection, rec.case_id))
    ts = TrainingSet.concat(sets)
    params = {
        "radius": tp.radius,
        "bins": tp.n_bins,
        "select": list(selection),
        "margin": margin,
        "lo": pre_params.lo_pct,
        "hi": pre_params.hi_pct,
        "sigma": pre_params.sigma,
    }
    return train_linear_svm(ts, c=c, seed=seed, params=params)


def _overlays(scan, truth, pred, out_dir: Path) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.colors import ListedColormap

    ref = truth if truth is not None and truth.data.any() else pred
    if not ref.data.any():
        centroid = [n // 2 for n in scan.dims]
    else:
        centroid = [int(round(a.mean())) for a in np.nonzero(ref.data)]
    written = []
    for axis, name in enumerate(("sagittal", "coronal", "axial")):
        sl = [slice(None)] * 3
        sl[axis] = centroid[axis]
        sl = tuple(sl)
        fig, ax = plt.subplots(figsize=(4, 4), dpi=100)
        ax.imshow(scan.data[sl].T, cmap="gray", origin="lower")
        fill = np.ma.masked_where(~pred.data[sl].T, np.ones(pred.data[sl].T.shape))
        ax.imshow(fill, cmap=ListedColormap(["red"]), alpha=0.45, origin="lower", vmin=0, vmax=1)
        if truth is not None and truth.data[sl].any():
            ax.contour(truth.data[sl].T.astype(float), levels=[0.5], colors="yellow", linewidths=1.0)
        ax.set_axis_off()
        ax.set_title(f"{name} slice {centroid[axis]}")
        path = out_dir / f"overlay_{name}.png"
        fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
        plt.close(fig)
        written.append(path.name)
    return written


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage, write intermediates into ``cfg.out_dir``, return the summary."""
    cfg.validate()
    if cfg.threads is not None:
        _accel.set_threads(cfg.threads)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timer = _Timer()
    selection = parse_selection(cfg.select)
    tp = TextureParams(radius=cfg.radius, n_bins=cfg.bins)
    pre_params = PreprocessParams(cfg.lo, cfg.hi, cfg.sigma)
    se = StructuringElement.cube(cfg.kernel)
    summary: dict = {"config": {k: v for k, v in asdict(cfg).items() if k not in ("threads",)}}

    with timer.stage("load"):
        scan = read_volume(cfg.scan)
        tooth = read_mask(cfg.tooth)
        tooth.require_geometry(scan, "tooth mask vs scan")
        truth = None
        if cfg.lesion:
            truth = read_mask(cfg.lesion)
            truth.require_geometry(scan, "lesion mask vs scan")

    with timer.stage("preprocess"):
        pre = preprocess(scan, pre_params)
        write_volume(pre, out / "pre.nrrd")

    with timer.stage("model"):
        if cfg.model:
            model = SvmModel.load(cfg.model)
            summary["model_source"] = "file"
        elif cfg.train_manifest:
            model = train_from_manifest(
                cfg.train_manifest, tp, selection, cfg.c, cfg.seed, cfg.margin, pre_params, cfg.threads
            )
            summary["model_source"] = "trained"
        else:
            model = SvmModel.load(bundled_model_path())
            summary["model_source"] = "bundled"
        model.save(out / "model.json")
        needed = tuple(model.feature_names)
        m_radius = int(model.params.get("radius", tp.radius))
        m_bins = int(model.params.get("bins", tp.n_bins))
        if (m_radius, m_bins) != (tp.radius, tp.n_bins):
            log.warning("model was trained with radius=%d bins=%d; using those", m_radius, m_bins)
            tp = TextureParams(radius=m_radius, n_bins=m_bins)

    with timer.stage("features"):
        names = tuple(dict.fromkeys(needed + selection))
        maps = feature_maps(pre, tooth, tp, names, threads=cfg.threads)
        maps.write(out / "maps")

    with timer.stage("predict"):
        raw = predict_mask(model, maps, tooth)
        write_volume(raw, out / "raw_pred.nrrd")

    with timer.stage("postprocess"):
        post = postprocess(raw, se)
        write_volume(post.mask, out / "pred.nrrd")
        summary["degraded"] = post.degraded
        summary["predicted_volume_mm3"] = lesion_volume(post.mask)
        summary["predicted_voxels"] = post.mask.count

    if truth is not None:
        with timer.stage("metrics"):
            domain = evaluation_domain(tooth, truth, cfg.margin)
            p, r = weighted_precision_recall(post.mask, truth, domain)
            p_raw, r_raw = weighted_precision_recall(raw, truth, domain)
            summary["metrics"] = {
                "dsc": dice(post.mask, truth),
                "dsc_raw": dice(raw, truth),
                "precision": p,
                "recall": r,
                "precision_raw": p_raw,
                "recall_raw": r_raw,
                "truth_volume_mm3": lesion_volume(truth),
            }

    if cfg.stratify and post.mask.count < cfg.k:
        log.warning("stratify skipped: %d predicted voxels for k=%d", post.mask.count, cfg.k)
        summary["clusters"] = []
    elif cfg.stratify:
        with timer.stage("stratify"):
            strat_names = ("lgre", "hgre")
            # neighborhoods restricted to the lesion so healthy dentin stays out
            strat_maps = feature_maps(pre, post.mask, tp, strat_names, threads=cfg.threads)
            strat_maps.write(out / "strat_maps")
            if cfg.centers:
                cm = ClusterModel.load(cfg.centers)
            else:
                rows = strat_maps.rows(post.mask, strat_names)
                cm = kmeans_fit(rows, cfg.k, cfg.seed, feature_names=strat_names)
            cm.save(out / "centers.json")
            labels, stats = cluster_report(post.mask, strat_maps, cm)
            write_volume(labels, out / "cluster_labels.nrrd", dtype=np.uint8)
            summary["clusters"] = stats

    if cfg.overlays:
        with timer.stage("overlays"):
            summary["overlays"] = _overlays(pre, truth, post.mask, out)

    summary["runtime"] = {
        "timings_s": timer.timings,
        "threads": _accel.get_threads(),
        "backend": _accel.BACKEND,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
