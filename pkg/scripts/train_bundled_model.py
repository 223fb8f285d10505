"""Regenerate src/ecrseg/data/phantom_model_r5.json from a seeded phantom cohort."""
import tempfile
from pathlib import Path

from ecrseg.phantom import PhantomSpec, write_cohort
from ecrseg.pipeline import bundled_model_path, train_from_manifest
from ecrseg.preprocess import PreprocessParams
from ecrseg.texture import TextureParams

COHORT_SEED = 2024


def main():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = write_cohort(3, Path(tmp) / "cohort", PhantomSpec(), seed=COHORT_SEED)
        model = train_from_manifest(
            manifest, TextureParams(radius=5, n_bins=16), ("lgre", "hgre"), 1.0, 7, 5, PreprocessParams()
        )
    out = Path(__file__).resolve().parents[1] / "src" / "ecrseg" / "data" / bundled_model_path().name
    model.save(out)
    print(f"wrote {out} ({model.epochs} epochs)")


if __name__ == "__main__":
    main()
