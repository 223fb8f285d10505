"""Command line entry point: ``ecrseg <subcommand> ...``.

Exit codes: 0 success, 2 validation error, 3 stage failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import _accel
from .errors import EcrsegError
from .evaluation import load_manifest, loocv
from .morphology import StructuringElement, postprocess
from .phantom import PhantomSpec, write_case, write_cohort
from .pipeline import ConfigError, PipelineConfig, StageError, run_pipeline, train_from_manifest
from .preprocess import PreprocessParams, preprocess
from .stratify import ClusterModel, cluster_report, kmeans_fit
from .svm import SvmModel, predict_mask
from .texture.maps import FeatureMapStack, feature_histograms, feature_maps
from .texture.matrices import TextureParams, parse_selection
from .volume import read_mask, read_volume, write_volume

log = logging.getLogger("ecrseg")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_STAGE = 3


def _common(suppress: bool = False) -> argparse.ArgumentParser:
    # subcommands must not reset values given before the subcommand name
    p = argparse.ArgumentParser(add_help=False)
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--threads", type=int, default=default, help="worker cap (default: all cores)")
    p.add_argument(
        "-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False, help="log progress"
    )
    return p


# fallback help so ArgumentDefaultsHelpFormatter prints every default
_HELP = {
    "inp": "input NRRD",
    "out": "output path",
    "mask": "region mask NRRD",
    "tooth": "tooth mask NRRD",
    "lesion": "lesion mask NRRD",
    "model": "SVM model JSON",
    "maps": "feature-map directory",
    "lo": "lower clip percentile",
    "hi": "upper clip percentile",
    "sigma": "Gaussian sigma, voxels",
    "truncate": "kernel half-width in sigmas",
    "radius": "neighborhood radius, voxels",
    "bins": "gray levels",
    "select": "feature names",
    "c": "SVM regularization",
    "seed": "random seed",
    "margin": "lesion bounding-box margin, voxels",
    "out_dir": "output directory",
    "manifest": "cohort manifest JSON",
    "k": "number of clusters",
    "train_manifest": "train on this manifest instead of loading a model",
    "config": "pipeline config JSON",
    "scan": "scan NRRD",
}


class _Formatter(argparse.ArgumentDefaultsHelpFormatter):
    def _get_help_string(self, action):
        if action.default is None or action.default is False:
            return action.help
        return super()._get_help_string(action)


def _fill_help(parser: argparse.ArgumentParser, config_defaults: dict | None = None) -> None:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for name, sub in action.choices.items():
                _fill_help(sub, asdict(PipelineConfig()) if name == "pipeline" else None)
            continue
        if action.help is None:
            action.help = _HELP.get(action.dest, action.dest.replace("_", " "))
        # pipeline flags default to None so config-file values survive; show the effective default
        shown = (config_defaults or {}).get(action.dest)
        if action.default is None and action.nargs != 0 and shown not in (None, ""):
            action.help += f" (default: {shown})"


def _radii(text: str) -> list[int]:
    return [int(r) for r in text.split(",") if r.strip()]


def build_parser() -> argparse.ArgumentParser:
    fmt = _Formatter
    parser = argparse.ArgumentParser(prog="ecrseg", description=__doc__, formatter_class=fmt, parents=[_common()])
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common(suppress=True)

    def add(name, help_):
        return sub.add_parser(name, help=help_, formatter_class=fmt, parents=[common])

    p = add("preprocess", "percentile clip, [0,1] rescale, Gaussian smoothing")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lo", type=float, default=5.0)
    p.add_argument("--hi", type=float, default=95.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--truncate", type=float, default=3.0)

    p = add("features", "voxel-wise texture feature maps inside a mask")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--radius", type=int, default=5)
    p.add_argument("--bins", type=int, default=16)
    p.add_argument("--select", default="lgre,hgre", help="comma list, or all/glcm/glrlm")
    p.add_argument("--out-dir", required=True)

    p = add("histograms", "lesion vs healthy feature histograms (JSON)")
    p.add_argument("--maps", required=True)
    p.add_argument("--tooth", required=True)
    p.add_argument("--lesion", required=True)
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--out", default=None, help="write JSON here instead of stdout")

    p = add("train", "train the linear SVM on every case of a manifest")
    p.add_argument("--cases", required=True, help="manifest JSON")
    p.add_argument("--radius", type=int, default=5)
    p.add_argument("--bins", type=int, default=16)
    p.add_argument("--select", default="lgre,hgre")
    p.add_argument("--C", dest="c", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--margin", type=int, default=5)
    p.add_argument("--out", required=True)

    p = add("predict", "voxel-wise SVM prediction inside the tooth")
    p.add_argument("--model", required=True)
    p.add_argument("--maps", required=True)
    p.add_argument("--tooth", required=True)
    p.add_argument("--out", required=True)

    p = add("postprocess", "erosion, largest component, dilation")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kernel", type=int, default=6, help="cube side of the structuring element")

    p = add("evaluate", "patient-level leave-one-out evaluation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--radii", default="5", help="comma list of neighborhood radii")
    p.add_argument("--bins", type=int, default=16)
    p.add_argument("--select", default="lgre,hgre")
    p.add_argument("--C", dest="c", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--margin", type=int, default=5)
    p.add_argument("--kernel", type=int, default=6)
    p.add_argument("--report", default=None, help="JSON report path")
    p.add_argument("--table", default=None, help="also write the text table here")

    p = add("stratify", "fit k-means on lesion voxels and label them")
    p.add_argument("--lesion", required=True)
    p.add_argument("--maps", default=None, help="directory holding lgre.nrrd / hgre.nrrd")
    p.add_argument("--scan", default=None, help="preprocessed scan; computes lesion-restricted maps instead of --maps")
    p.add_argument("--radius", type=int, default=5, help="texture radius when --scan is used")
    p.add_argument("--bins", type=int, default=16, help="gray levels when --scan is used")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--standardize", action="store_true", help="cluster in standardized feature space")
    p.add_argument("--save-centers", default=None)
    p.add_argument("--labels-out", default=None)
    p.add_argument("--report", default=None, help="stats JSON path (default stdout)")

    p = add("stratify-apply", "label lesion voxels with saved centers")
    p.add_argument("--centers", required=True)
    p.add_argument("--lesion", required=True)
    p.add_argument("--maps", default=None)
    p.add_argument("--scan", default=None, help="preprocessed scan; computes lesion-restricted maps instead of --maps")
    p.add_argument("--radius", type=int, default=5)
    p.add_argument("--bins", type=int, default=16)
    p.add_argument("--labels-out", default=None)
    p.add_argument("--report", default=None)

    p = add("phantom", "write a synthetic phantom case or cohort")
    p.add_argument("--spec", default=None, help="PhantomSpec JSON (defaults when omitted)")
    p.add_argument("--cohort", type=int, default=0, help="write N patients x 2 timepoints + manifest")
    p.add_argument("--seed", type=int, default=0, help="cohort seed")
    p.add_argument("--out-dir", required=True)

    p = add("pipeline", "full run from a JSON config; flags override the file")
    p.add_argument("--config", default=None)
    p.add_argument("--scan", default=None)
    p.add_argument("--tooth", default=None)
    p.add_argument("--lesion", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--train-manifest", default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--radius", type=int, default=None, help="neighborhood radius, voxels")
    p.add_argument("--bins", type=int, default=None, help="gray levels")
    p.add_argument("--select", default=None, help="feature names")
    p.add_argument("--C", dest="c", type=float, default=None, help="SVM regularization")
    p.add_argument("--seed", type=int, default=None, help="random seed")
    p.add_argument("--kernel", type=int, default=None, help="cube side of the structuring element")
    p.add_argument("--stratify", action="store_true", default=None, help="run k-means stratification")
    p.add_argument("--k", type=int, default=None, help="number of clusters")
    p.add_argument("--centers", default=None, help="apply saved cluster centers")
    p.add_argument("--no-overlays", dest="overlays", action="store_false", default=None, help="skip PNG overlays")
    _fill_help(parser)
    return parser


def _emit(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _cmd_preprocess(a):
    params = PreprocessParams(a.lo, a.hi, a.sigma, a.truncate)
    write_volume(preprocess(read_volume(a.inp), params), a.out)


def _cmd_features(a):
    v = read_volume(a.inp)
    m = read_mask(a.mask)
    tp = TextureParams(radius=a.radius, n_bins=a.bins)
    maps = feature_maps(v, m, tp, parse_selection(a.select), threads=a.threads)
    maps.write(a.out_dir)


def _cmd_histograms(a):
    maps = FeatureMapStack.read(a.maps)
    _emit(feature_histograms(maps, read_mask(a.tooth), read_mask(a.lesion), a.bins), a.out)


def _cmd_train(a):
    tp = TextureParams(radius=a.radius, n_bins=a.bins)
    model = train_from_manifest(
        a.cases, tp, parse_selection(a.select), a.c, a.seed, a.margin, PreprocessParams(), a.threads
    )
    model.save(a.out)


def _cmd_predict(a):
    model = SvmModel.load(a.model)
    maps = FeatureMapStack.read(a.maps, model.feature_names)
    write_volume(predict_mask(model, maps, read_mask(a.tooth)), a.out)


def _cmd_postprocess(a):
    res = postprocess(read_mask(a.inp), StructuringElement.cube(a.kernel))
    write_volume(res.mask, a.out)
    _emit({"degraded": res.degraded, "voxels": res.mask.count})


def _cmd_evaluate(a):
    cases = load_manifest(a.manifest)
    report = loocv(
        cases,
        TextureParams(n_bins=a.bins),
        c=a.c,
        seed=a.seed,
        radii=_radii(a.radii),
        selection=parse_selection(a.select),
        margin=a.margin,
        se=StructuringElement.cube(a.kernel),
        threads=a.threads,
    )
    if a.report:
        report.save(a.report)
    table = report.table()
    if a.table:
        Path(a.table).write_text(table + "\n")
    print(table)


def _stratify_out(a, lesion, maps, model):
    labels, stats = cluster_report(lesion, maps, model)
    if a.labels_out:
        write_volume(labels, a.labels_out, dtype=np.uint8)
    _emit({"centers": model.centers.tolist(), "clusters": stats}, a.report)


def _stratify_maps(a, lesion, names):
    if a.scan:
        tp = TextureParams(radius=a.radius, n_bins=a.bins)
        return feature_maps(read_volume(a.scan), lesion, tp, names, threads=a.threads)
    if not a.maps:
        raise ConfigError("one of --maps or --scan is required")
    return FeatureMapStack.read(a.maps, names)


def _cmd_stratify(a):
    lesion = read_mask(a.lesion)
    maps = _stratify_maps(a, lesion, ("lgre", "hgre"))
    model = kmeans_fit(maps.rows(lesion), a.k, a.seed, feature_names=maps.names, standardize=a.standardize)
    if a.save_centers:
        model.save(a.save_centers)
    _stratify_out(a, lesion, maps, model)


def _cmd_stratify_apply(a):
    model = ClusterModel.load(a.centers)
    lesion = read_mask(a.lesion)
    maps = _stratify_maps(a, lesion, model.feature_names)
    _stratify_out(a, lesion, maps, model)


def _cmd_phantom(a):
    base = PhantomSpec.load(a.spec) if a.spec else PhantomSpec()
    if a.cohort:
        print(write_cohort(a.cohort, a.out_dir, base, seed=a.seed))
    else:
        write_case(base, a.out_dir)


def _cmd_pipeline(a):
    overrides = {
        "scan": a.scan,
        "tooth": a.tooth,
        "lesion": a.lesion,
        "model": a.model,
        "train_manifest": a.train_manifest,
        "out_dir": a.out_dir,
        "radius": a.radius,
        "bins": a.bins,
        "select": a.select,
        "c": a.c,
        "seed": a.seed,
        "kernel": a.kernel,
        "stratify": a.stratify,
        "k": a.k,
        "centers": a.centers,
        "overlays": a.overlays,
        "threads": a.threads,
    }
    try:
        cfg = PipelineConfig.from_file(a.config, overrides)
    except (TypeError, json.JSONDecodeError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    summary = run_pipeline(cfg)
    _emit({k: v for k, v in summary.items() if k != "config"})


COMMANDS = {
    "preprocess": _cmd_preprocess,
    "features": _cmd_features,
    "histograms": _cmd_histograms,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "postprocess": _cmd_postprocess,
    "evaluate": _cmd_evaluate,
    "stratify": _cmd_stratify,
    "stratify-apply": _cmd_stratify_apply,
    "phantom": _cmd_phantom,
    "pipeline": _cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads is not None:
        _accel.set_threads(args.threads)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc.cause}", file=sys.stderr)
        return EXIT_STAGE
    except (EcrsegError, OSError) as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ValueError, KeyError) as exc:
        print(f"error [{args.command}]: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
