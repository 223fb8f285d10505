"""Seeded synthetic CBCT-like phantoms with exact tooth and lesion masks.

Spec JSON schema (all keys optional, defaults shown by ``PhantomSpec()``)::

    {
      "dims": [96, 96, 96],
      "spacing": 0.076,
      "tooth_center": [48, 48, 48],        # voxel coordinates
      "tooth_radii": [36, 26, 26],         # ellipsoid semi-axes, voxels
      "lesion_center": [48, 60, 48],
      "lesion_radius": 10.0,
      "delta": 0.35,                       # lesion intensity depression
      "core_center": null,                 # optional calcified core
      "core_radius": 0.0,
      "noise_sigma": 0.02,
      "seed": 0
    }
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import SpecInvalid
from .volume import DEFAULT_SPACING, Mask, Volume

BACKGROUND = 0.1
TOOTH = 0.8


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (96, 96, 96)
    spacing: float = DEFAULT_SPACING
    tooth_center: tuple[float, float, float] = (48.0, 48.0, 48.0)
    tooth_radii: tuple[float, float, float] = (36.0, 26.0, 26.0)
    lesion_center: tuple[float, float, float] = (48.0, 60.0, 48.0)
    lesion_radius: float = 10.0
    delta: float = 0.35
    core_center: tuple[float, float, float] | None = None
    core_radius: float = 0.0
    noise_sigma: float = 0.02
    seed: int = 0

    def __post_init__(self):
        for name in ("dims", "tooth_center", "tooth_radii", "lesion_center"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.core_center is not None:
            object.__setattr__(self, "core_center", tuple(self.core_center))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise SpecInvalid(f"unknown phantom spec keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "PhantomSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _ellipsoid(dims, center, radii):
    grids = np.indices(dims, dtype=np.float64)
    acc = np.zeros(dims)
    for g, c, r in zip(grids, center, radii):
        acc += ((g - c) / r) ** 2
    return acc <= 1.0


def _validate(spec: PhantomSpec) -> None:
    if len(spec.dims) != 3 or min(spec.dims) < 1:
        raise SpecInvalid(f"dims {spec.dims}")
    if spec.spacing <= 0:
        raise SpecInvalid("spacing must be positive")
    if not 0 < spec.delta < 1:
        raise SpecInvalid(f"delta {spec.delta} outside (0, 1)")
    if spec.noise_sigma < 0:
        raise SpecInvalid("noise_sigma must be >= 0")
    if spec.lesion_radius <= 0 or min(spec.tooth_radii) <= 0:
        raise SpecInvalid("radii must be positive")
    if spec.lesion_radius > min(spec.tooth_radii):
        raise SpecInvalid(f"lesion radius {spec.lesion_radius} exceeds tooth radius {min(spec.tooth_radii)}")
    if spec.core_center is not None and spec.core_radius <= 0:
        raise SpecInvalid("core_radius must be positive when core_center is set")


def generate_phantom(spec: PhantomSpec) -> tuple[Volume, Mask, Mask]:
    """Returns (scan, tooth mask, lesion mask)."""
    _validate(spec)
    tooth = _ellipsoid(spec.dims, spec.tooth_center, spec.tooth_radii)
    lesion = _ellipsoid(spec.dims, spec.lesion_center, (spec.lesion_radius,) * 3)
    if not lesion.any():
        raise SpecInvalid("lesion contains no voxels")
    if np.any(lesion & ~tooth):
        raise SpecInvalid("lesion escapes the tooth")

    data = np.full(spec.dims, BACKGROUND)
    data[tooth] = TOOTH
    data[lesion] = TOOTH - spec.delta
    if spec.core_center is not None:
        core = _ellipsoid(spec.dims, spec.core_center, (spec.core_radius,) * 3)
        if np.any(core & ~lesion):
            raise SpecInvalid("calcified core escapes the lesion")
        data[core] = TOOTH - spec.delta + spec.delta / 2
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        data = data + rng.normal(0.0, spec.noise_sigma, size=spec.dims)

    sp = (spec.spacing,) * 3
    return Volume(data, sp), Mask(tooth, sp), Mask(lesion, sp)


def core_mask(spec: PhantomSpec) -> Mask:
    """Calcified-core voxels of ``spec`` (empty when it has none)."""
    sp = (spec.spacing,) * 3
    if spec.core_center is None:
        return Mask(np.zeros(spec.dims, dtype=bool), sp)
    return Mask(_ellipsoid(spec.dims, spec.core_center, (spec.core_radius,) * 3), sp)


def patient_specs(
    patient: int,
    base: PhantomSpec | None = None,
    growth: float = 1.5,
    seed: int = 0,
) -> tuple[PhantomSpec, PhantomSpec]:
    """Two timepoints of one synthetic patient.

    Both share tooth geometry; the lesion position is drawn per patient and
    its radius grows by ``growth`` voxels at the second timepoint.
    """
    base = base or PhantomSpec()
    rng = np.random.default_rng([seed, patient])
    dims = np.asarray(base.dims, dtype=np.float64)
    tc = np.asarray(base.tooth_center, dtype=np.float64)
    radii = np.asarray(base.tooth_radii, dtype=np.float64)
    r1 = base.lesion_radius * float(rng.uniform(0.9, 1.1))
    r2 = r1 + growth
    # keep the grown lesion plus a 1-voxel shell inside the tooth
    room = radii - r2 - 1.5
    if np.any(room < 0):
        raise SpecInvalid("tooth too small for the requested lesion growth")
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    frac = float(rng.uniform(0.3, 0.8))
    center = tc + direction * room * frac
    center = np.clip(center, 0, dims - 1)

    core_center = None
    core_r1 = core_r2 = 0.0
    if base.core_center is not None:
        core_center = tuple(float(c) for c in center)
        core_r1 = base.core_radius
        core_r2 = base.core_radius + growth / 2
    t1 = replace(
        base,
        lesion_center=tuple(float(c) for c in center),
        lesion_radius=r1,
        core_center=core_center,
        core_radius=core_r1,
        seed=int(rng.integers(2**31)),
    )
    t2 = replace(
        t1,
        lesion_radius=r2,
        core_radius=core_r2,
        seed=int(rng.integers(2**31)),
    )
    return t1, t2


def write_case(spec: PhantomSpec, out_dir) -> dict[str, str]:
    """Write scan/tooth/lesion NRRDs plus its spec.json; returns the file paths."""
    from .volume import write_volume

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scan, tooth, lesion = generate_phantom(spec)
    paths = {
        "scan": out / "scan.nrrd",
        "tooth": out / "tooth.nrrd",
        "lesion": out / "lesion.nrrd",
    }
    write_volume(scan, paths["scan"])
    write_volume(tooth, paths["tooth"])
    write_volume(lesion, paths["lesion"])
    if spec.core_center is not None:
        write_volume(core_mask(spec), out / "core.nrrd")
    (out / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
    return {k: str(v) for k, v in paths.items()}


def write_cohort(n_patients: int, out_dir, base: PhantomSpec | None = None, seed: int = 0):
    """``n_patients`` x 2 timepoints on disk plus ``manifest.json``; returns its path."""
    from .evaluation import CaseRecord, write_manifest

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cases = []
    for p in range(n_patients):
        for tp, spec in zip(("t1", "t2"), patient_specs(p, base, seed=seed)):
            paths = write_case(spec, out / f"case{p + 1:02d}_{tp}")
            cases.append(CaseRecord(f"case{p + 1:02d}", tp, paths["scan"], paths["tooth"], paths["lesion"]))
    manifest = out / "manifest.json"
    write_manifest(cases, manifest)
    return manifest
