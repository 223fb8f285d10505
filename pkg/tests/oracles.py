"""Brute-force reference implementations used only by the tests.

Everything here is written with plain Python loops, sets and dicts so it
shares no code path with the vectorized or compiled kernels under test.
"""
from __future__ import annotations

import itertools
import math

DIRS = (
    (1, 0, 0), (0, 1, 0), (0, 0, 1),
    (1, 1, 0), (1, -1, 0), (1, 0, 1), (1, 0, -1), (0, 1, 1), (0, 1, -1),
    (1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1),
)


def quantize_value(x: float, n_bins: int, lo: float = 0.0, hi: float = 1.0) -> int:
    x = min(max(x, lo), hi)
    return min(n_bins, int(math.floor((x - lo) / (hi - lo) * n_bins)) + 1)


def neighborhood(bins, mask, center, radius):
    """{voxel: bin} for in-mask voxels of the clipped cube around ``center``."""
    nx, ny, nz = len(bins), len(bins[0]), len(bins[0][0])
    cx, cy, cz = center
    hood = {}
    for x in range(cx - radius, cx + radius + 1):
        for y in range(cy - radius, cy + radius + 1):
            for z in range(cz - radius, cz + radius + 1):
                if 0 <= x < nx and 0 <= y < ny and 0 <= z < nz and mask[x][y][z]:
                    hood[(x, y, z)] = bins[x][y][z]
    return hood


def glcm_counts(hood, dirs=DIRS):
    counts = {}
    pairs = 0
    for a, ba in hood.items():
        for d in dirs:
            b = (a[0] + d[0], a[1] + d[1], a[2] + d[2])
            if b in hood:
                bb = hood[b]
                pairs += 1
                counts[(ba, bb)] = counts.get((ba, bb), 0) + 1
                counts[(bb, ba)] = counts.get((bb, ba), 0) + 1
    return counts, pairs


def glrlm_counts(hood, dirs=DIRS):
    runs = {}
    for d in dirs:
        for a, ba in hood.items():
            prev = (a[0] - d[0], a[1] - d[1], a[2] - d[2])
            if hood.get(prev) == ba:
                continue  # not a run start
            length = 1
            nxt = (a[0] + d[0], a[1] + d[1], a[2] + d[2])
            while hood.get(nxt) == ba:
                length += 1
                nxt = (nxt[0] + d[0], nxt[1] + d[1], nxt[2] + d[2])
            runs[(ba, length)] = runs.get((ba, length), 0) + 1
    return runs


def glcm_feature_values(counts, n_bins):
    total = sum(counts.values())
    names = ("energy", "entropy", "correlation", "idm", "inertia",
             "cluster_shade", "cluster_prominence", "haralick_correlation")
    if total == 0:
        return dict.fromkeys(names, 0.0)
    p = {k: v / total for k, v in counts.items()}
    levels = range(1, n_bins + 1)
    marg = {i: sum(p.get((i, j), 0.0) for j in levels) for i in levels}
    mu = sum(i * marg[i] for i in levels)
    var = sum((i - mu) ** 2 * marg[i] for i in levels)
    out = dict.fromkeys(names, 0.0)
    ijp = 0.0
    cov = 0.0
    for (i, j), v in p.items():
        out["energy"] += v * v
        out["entropy"] -= v * math.log2(v)
        out["idm"] += v / (1 + (i - j) ** 2)
        out["inertia"] += (i - j) ** 2 * v
        s = (i - mu) + (j - mu)
        out["cluster_shade"] += s ** 3 * v
        out["cluster_prominence"] += s ** 4 * v
        cov += (i - mu) * (j - mu) * v
        ijp += i * j * v
    if var > 0:
        out["correlation"] = cov / var
        out["haralick_correlation"] = (ijp - mu * mu) / var
    return out


def glrlm_feature_values(runs):
    names = ("sre", "lre", "gln", "rln", "lgre", "hgre", "srlge", "srhge", "lrlge", "lrhge")
    n = sum(runs.values())
    if n == 0:
        return dict.fromkeys(names, 0.0)
    out = dict.fromkeys(names, 0.0)
    by_level = {}
    by_length = {}
    for (i, j), r in runs.items():
        out["sre"] += r / j**2
        out["lre"] += r * j**2
        out["lgre"] += r / i**2
        out["hgre"] += r * i**2
        out["srlge"] += r / (i**2 * j**2)
        out["srhge"] += r * i**2 / j**2
        out["lrlge"] += r * j**2 / i**2
        out["lrhge"] += r * i**2 * j**2
        by_level[i] = by_level.get(i, 0) + r
        by_length[j] = by_length.get(j, 0) + r
    out["gln"] = sum(v * v for v in by_level.values())
    out["rln"] = sum(v * v for v in by_length.values())
    return {k: v / n for k, v in out.items()}


def all_features(values, mask, n_bins, radius, lo=0.0, hi=1.0):
    """{center: {feature: value}} for every in-mask voxel of nested lists."""
    nx, ny, nz = len(values), len(values[0]), len(values[0][0])
    bins = [[[quantize_value(values[x][y][z], n_bins, lo, hi) for z in range(nz)]
             for y in range(ny)] for x in range(nx)]
    result = {}
    for c in itertools.product(range(nx), range(ny), range(nz)):
        if not mask[c[0]][c[1]][c[2]]:
            continue
        hood = neighborhood(bins, mask, c, radius)
        counts, _ = glcm_counts(hood)
        feats = glcm_feature_values(counts, n_bins)
        feats.update(glrlm_feature_values(glrlm_counts(hood)))
        result[c] = feats
    return result


def close(a: float, b: float, rel: float = 1e-9, floor: float = 1e-12) -> bool:
    return abs(a - b) <= rel * max(abs(a), abs(b)) + floor


# --------------------------------------------------------------- other oracles


def interpolated_quantile(values, q):
    """Fractional rank q*(n-1) over the sorted values."""
    s = sorted(values)
    pos = q * (len(s) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def best_two_partition(points):
    """Exhaustive k=2 optimum: (inertia, frozenset of member indices of one side)."""
    n = len(points)
    d = len(points[0])
    best = (math.inf, None)
    for bits in range(1, 2 ** (n - 1)):
        side = [i for i in range(n) if bits >> i & 1]
        other = [i for i in range(n) if not bits >> i & 1]
        total = 0.0
        for group in (side, other):
            c = [sum(points[i][k] for i in group) / len(group) for k in range(d)]
            total += sum(sum((points[i][k] - c[k]) ** 2 for k in range(d)) for i in group)
        if total < best[0]:
            best = (total, frozenset(side))
    return best


def confusion_weighted(pred, truth):
    """Class-support weighted precision/recall from flat boolean lists."""
    n = len(truth)
    p_out = r_out = 0.0
    for cls in (True, False):
        support = sum(1 for t in truth if t == cls)
        if not support:
            continue
        predicted = sum(1 for p in pred if p == cls)
        tp = sum(1 for p, t in zip(pred, truth) if p == cls and t == cls)
        p_out += support / n * (tp / predicted if predicted else 0.0)
        r_out += support / n * tp / support
    return p_out, r_out
