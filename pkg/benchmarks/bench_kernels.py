"""Time the numba kernels against the numpy fallback on a phantom.

    python benchmarks/bench_kernels.py --size 64 --radius 3 --repeat 3

Both backends are checked for identical output before timing is reported.
"""
import argparse
import time

import numpy as np

from ecrseg import _accel
from ecrseg.morphology import CUBE6, dilate, erode, largest_connected_component
from ecrseg.phantom import PhantomSpec, generate_phantom
from ecrseg.preprocess import preprocess
from ecrseg.texture import TextureParams, feature_maps


def _phantom(size: int):
    c = size / 2
    spec = PhantomSpec(
        dims=(size,) * 3,
        tooth_center=(c, c, c),
        tooth_radii=(0.38 * size, 0.27 * size, 0.27 * size),
        lesion_center=(c, c + 0.12 * size, c),
        lesion_radius=0.1 * size,
    )
    scan, tooth, _ = generate_phantom(spec)
    return preprocess(scan), tooth


def _best(fn, repeat):
    out, times = None, []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--size", type=int, default=64, help="phantom edge length, voxels")
    ap.add_argument("--radius", type=int, default=3, help="texture neighborhood radius")
    ap.add_argument("--repeat", type=int, default=3, help="best-of repeats per measurement")
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args(argv)

    if not _accel.NUMBA_OK:
        raise SystemExit("numba is unavailable (or ECRSEG_NO_NUMBA is set); nothing to compare")
    threads = _accel.set_threads(args.threads)
    pre, tooth = _phantom(args.size)
    speckled = tooth.with_data(tooth.data & (np.random.default_rng(0).random(tooth.dims) < 0.9))
    tp = TextureParams(radius=args.radius)

    kernels = {
        "texture maps (lgre, hgre, energy)": lambda b: feature_maps(
            pre, tooth, tp, ("lgre", "hgre", "energy"), backend=b
        ),
        "erosion cube6": lambda b: erode(speckled, CUBE6, b),
        "dilation cube6": lambda b: dilate(speckled, CUBE6, b),
        "largest component": lambda b: largest_connected_component(speckled, b),
    }
    print(f"phantom {args.size}^3, {tooth.count} tooth voxels, radius {args.radius}, {threads} thread(s)")
    print(f"{'kernel':<36}{'numba s':>10}{'numpy s':>10}{'speedup':>9}")
    for name, fn in kernels.items():
        fn("numba")  # JIT warm-up
        t_fast, a = _best(lambda: fn("numba"), args.repeat)
        t_slow, b = _best(lambda: fn("numpy"), args.repeat)
        if hasattr(a, "names"):
            same = all(np.allclose(a[n].data, b[n].data, rtol=1e-12, atol=0) for n in a.names)
        else:
            same = a == b
        flag = "" if same else "  OUTPUT MISMATCH"
        print(f"{name:<36}{t_fast:>10.3f}{t_slow:>10.3f}{t_slow / t_fast:>8.1f}x{flag}")


if __name__ == "__main__":
    main()
