"""Segmentation metrics and the patient-level leave-one-out harness."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientPatients
from .morphology import CUBE6, StructuringElement, postprocess
from .preprocess import PreprocessParams, preprocess
from .svm import TrainingSet, assemble_training_set, predict_mask, train_linear_svm
from .texture.maps import DEFAULT_SELECTION, feature_maps
from .texture.matrices import TextureParams
from .volume import Mask, lesion_bounding_region, read_mask, read_volume

log = logging.getLogger(__name__)


# ------------------------------------------------------------------ metrics


def dice(a: Mask, b: Mask) -> float:
    a.require_geometry(b, "dice")
    sa = int(a.data.sum())
    sb = int(b.data.sum())
    if sa + sb == 0:
        return 1.0
    inter = int(np.count_nonzero(a.data & b.data))
    return 2.0 * inter / (sa + sb)


def weighted_precision_recall(pred: Mask, truth: Mask, domain: Mask | None = None) -> tuple[float, float]:
    """Per-class precision/recall over ``domain``, weighted by true class support."""
    pred.require_geometry(truth, "precision/recall")
    if domain is None:
        dom = np.ones(truth.dims, dtype=bool)
    else:
        domain.require_geometry(truth, "precision/recall domain")
        dom = domain.data
    p = pred.data[dom]
    t = truth.data[dom]
    n = t.size
    if n == 0:
        return 0.0, 0.0
    precision = 0.0
    recall = 0.0
    for cls in (True, False):
        support = int(np.count_nonzero(t == cls))
        if support == 0:
            continue
        predicted = int(np.count_nonzero(p == cls))
        tp = int(np.count_nonzero((p == cls) & (t == cls)))
        w = support / n
        precision += w * (tp / predicted if predicted else 0.0)
        recall += w * (tp / support)
    return precision, recall


# ------------------------------------------------------------------ manifest


@dataclass(frozen=True)
class CaseRecord:
    patient_id: str
    timepoint: str
    scan: str
    tooth: str
    lesion: str

    @property
    def case_id(self) -> str:
        return f"{self.patient_id}/{self.timepoint}"


def load_manifest(path) -> list[CaseRecord]:
    """JSON array of case records; relative paths resolve against the manifest."""
    path = Path(path)
    entries = json.loads(path.read_text())
    if isinstance(entries, dict):
        entries = entries.get("cases", [])
    cases = []
    seen = set()
    for e in entries:
        rec = CaseRecord(
            patient_id=str(e["patient_id"]),
            timepoint=str(e["timepoint"]),
            **{k: str((path.parent / e[k]).resolve()) for k in ("scan", "tooth", "lesion")},
        )
        if (rec.patient_id, rec.timepoint) in seen:
            raise ValueError(f"duplicate case {rec.case_id} in {path}")
        seen.add((rec.patient_id, rec.timepoint))
        cases.append(rec)
    return cases


def write_manifest(cases: list[CaseRecord], path) -> None:
    path = Path(path)
    rows = []
    for c in cases:
        row = asdict(c)
        for k in ("scan", "tooth", "lesion"):
            try:
                row[k] = str(Path(row[k]).resolve().relative_to(path.parent.resolve()))
            except ValueError:
                pass
        rows.append(row)
    path.write_text(json.dumps(rows, indent=2) + "\n")


# ------------------------------------------------------------------ LOOCV


@dataclass
class LoadedCase:
    record: CaseRecord
    pre: object
    tooth: Mask
    lesion: Mask


def load_case(rec: CaseRecord, pre_params: PreprocessParams | None = None) -> LoadedCase:
    scan = read_volume(rec.scan)
    tooth = read_mask(rec.tooth)
    lesion = read_mask(rec.lesion)
    tooth.require_geometry(scan, f"{rec.case_id} tooth")
    lesion.require_geometry(scan, f"{rec.case_id} lesion")
    return LoadedCase(rec, preprocess(scan, pre_params), tooth, lesion)


def evaluation_domain(tooth: Mask, lesion: Mask, margin: int = 5) -> Mask:
    """Training-style support: lesion box grown by ``margin``, inside the tooth."""
    if not lesion.data.any():
        return tooth
    region = lesion_bounding_region(lesion, margin)
    return tooth.with_data(region.to_mask(tooth).data & tooth.data)


@dataclass
class MetricsReport:
    cases: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    folds: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"cases": self.cases, "summary": self.summary, "folds": self.folds}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def table(self) -> str:
        return render_table(self.summary)


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def render_table(summary: list[dict]) -> str:
    header = ("Neighborhood Radius", "Dice Score Coefficient", "Precision", "Recall")
    rows = [
        (
            str(s["radius"]),
            f"{s['dsc_mean']:.2f} ± {s['dsc_std']:.2f}",
            f"{s['precision_mean']:.2f} ± {s['precision_std']:.2f}",
            f"{s['recall_mean']:.2f} ± {s['recall_std']:.2f}",
        )
        for s in summary
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
    line = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    out = [line, "| " + " | ".join(h.center(w) for h, w in zip(header, widths)) + " |", line]
    for r in rows:
        out.append("| " + " | ".join(c.center(w) for c, w in zip(r, widths)) + " |")
        out.append(line)
    return "\n".join(out)


def loocv(
    manifest: list[CaseRecord],
    params: TextureParams | None = None,
    c: float = 1.0,
    seed: int = 7,
    radii=None,
    selection=DEFAULT_SELECTION,
    margin: int = 5,
    se: StructuringElement = CUBE6,
    pre_params: PreprocessParams | None = None,
    threads: int | None = None,
    loaded: list[LoadedCase] | None = None,
) -> MetricsReport:
    """Hold out one patient per fold, train on the rest, score every held-out case.

    DSC is computed on the post-processed mask over the whole volume;
    precision/recall over the training-style domain, for both the raw and
    post-processed predictions.
    """
    params = params or TextureParams()
    patients = sorted({rec.patient_id for rec in manifest})
    if len(patients) < 2:
        raise InsufficientPatients(f"need >= 2 patients, got {len(patients)}")
    radii = list(radii) if radii else [params.radius]
    if loaded is None:
        loaded = [load_case(rec, pre_params) for rec in manifest]

    report = MetricsReport()
    for radius in radii:
        tp = TextureParams(radius, params.n_bins, params.offsets, params.value_range)
        maps = {}
        for lc in loaded:
            log.info("features r=%d case=%s", radius, lc.record.case_id)
            maps[lc.record.case_id] = feature_maps(lc.pre, lc.tooth, tp, selection, threads=threads)
        per_case = []
        for patient in patients:
            train = [lc for lc in loaded if lc.record.patient_id != patient]
            test = [lc for lc in loaded if lc.record.patient_id == patient]
            ts = TrainingSet.concat(
                [
                    assemble_training_set(
                        maps[lc.record.case_id], lc.tooth, lc.lesion, margin, selection, lc.record.case_id
                    )
                    for lc in train
                ]
            )
            model = train_linear_svm(ts, c=c, seed=seed)
            report.folds.append(
                {
                    "radius": radius,
                    "held_out_patient": patient,
                    "train_cases": sorted({p[0] for p in ts.provenance}),
                    "test_cases": [lc.record.case_id for lc in test],
                    "n_train_rows": ts.n,
                    "weights": model.weights.tolist(),
                    "bias": model.bias,
                }
            )
            for lc in test:
                fm = maps[lc.record.case_id]
                raw = predict_mask(model, fm, lc.tooth)
                post = postprocess(raw, se)
                domain = evaluation_domain(lc.tooth, lc.lesion, margin)
                p_post, r_post = weighted_precision_recall(post.mask, lc.lesion, domain)
                p_raw, r_raw = weighted_precision_recall(raw, lc.lesion, domain)
                entry = {
                    "radius": radius,
                    "case": lc.record.case_id,
                    "patient_id": lc.record.patient_id,
                    "timepoint": lc.record.timepoint,
                    "dsc": dice(post.mask, lc.lesion),
                    "dsc_raw": dice(raw, lc.lesion),
                    "precision": p_post,
                    "recall": r_post,
                    "precision_raw": p_raw,
                    "recall_raw": r_raw,
                    "degraded": post.degraded,
                }
                per_case.append(entry)
        report.cases.extend(per_case)
        row = {"radius": radius, "n_cases": len(per_case)}
        for key in ("dsc", "precision", "recall", "precision_raw", "recall_raw"):
            row[f"{key}_mean"], row[f"{key}_std"] = _mean_std([e[key] for e in per_case])
        report.summary.append(row)
    return report
