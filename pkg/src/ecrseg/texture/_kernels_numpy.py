"""Pure-numpy texture kernels, vectorized over blocks of centers.

The quantized volume is zero-padded by ``radius`` so every neighborhood is
a full cube; padding voxels carry bin 0 and therefore behave exactly like
the clipped-at-bounds cube of the compiled kernels.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .formulas import glcm_features_batch, glrlm_features_batch

_BLOCK_ELEMS = 1 << 21


def _cube(radius):
    r = np.arange(-radius, radius + 1)
    return np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)


class _Plan:
    """Offsets shared by every block for a given geometry."""

    def __init__(self, padded_shape, radius, offsets):
        self.radius = radius
        strides = np.array(
            [padded_shape[1] * padded_shape[2], padded_shape[2], 1], dtype=np.int64
        )
        cube = _cube(radius)
        self.cube_flat = cube @ strides
        self.pairs = []
        self.lines = []
        pos = {tuple(u): k for k, u in enumerate(cube)}
        for d in offsets:
            d = np.asarray(d, dtype=np.int64)
            moved = cube + d
            inside = np.all(np.abs(moved) <= radius, axis=1)
            self.pairs.append((cube[inside] @ strides, moved[inside] @ strides))

            nxt = np.array([pos.get(tuple(u), -1) for u in moved])
            prv = np.array([pos.get(tuple(u), -1) for u in cube - d])
            # steps left before leaving the cube along d
            steps = np.full(len(cube), 2 * radius + 1)
            for ax in range(3):
                if d[ax] > 0:
                    steps = np.minimum(steps, radius - cube[:, ax])
                elif d[ax] < 0:
                    steps = np.minimum(steps, cube[:, ax] + radius)
            layers = [np.nonzero(steps == t)[0] for t in range(2 * radius + 1)]
            self.lines.append((nxt, prv, layers))


def _glcm_block(flat, cf, plan, nb):
    m = cf.size
    rows = np.arange(m, dtype=np.int64)[:, None]
    acc = np.zeros(m * nb * nb)
    for src, dst in plan.pairs:
        a = flat[cf[:, None] + src[None, :]].astype(np.int64)
        b = flat[cf[:, None] + dst[None, :]].astype(np.int64)
        ok = (a > 0) & (b > 0)
        base = rows * nb
        c1 = ((base + a - 1) * nb + b - 1)[ok]
        c2 = ((base + b - 1) * nb + a - 1)[ok]
        acc += np.bincount(c1, minlength=acc.size)
        acc += np.bincount(c2, minlength=acc.size)
    return acc.reshape(m, nb, nb)


def _glrlm_block(flat, cf, plan, nb):
    m = cf.size
    nr = 2 * plan.radius + 1
    rows = np.arange(m, dtype=np.int64)[:, None]
    values = flat[cf[:, None] + plan.cube_flat[None, :]].astype(np.int64)
    valid = values > 0
    acc = np.zeros(m * nb * nr)
    for nxt, prv, layers in plan.lines:
        length = np.zeros_like(values)
        for t, idx in enumerate(layers):
            if idx.size == 0:
                continue
            v = values[:, idx]
            if t == 0:
                length[:, idx] = v > 0
            else:
                nv = values[:, nxt[idx]]
                nl = length[:, nxt[idx]]
                length[:, idx] = np.where(v > 0, np.where(nv == v, nl + 1, 1), 0)
        has_prev = prv >= 0
        start = valid.copy()
        start[:, has_prev] &= values[:, prv[has_prev]] != values[:, has_prev]
        code = ((rows * nb + values - 1) * nr + length - 1)[start]
        acc += np.bincount(code, minlength=acc.size)
    return acc.reshape(m, nb, nr)


def texture_rows(q, centers, radius, offsets, n_bins, do_glcm, do_glrlm, threads=1):
    """Same contract as the compiled ``texture_rows``."""
    centers = np.asarray(centers, dtype=np.int64).reshape(-1, 3)
    m = centers.shape[0]
    out = np.zeros((m, 18))
    if m == 0:
        return out
    padded = np.pad(np.asarray(q, dtype=np.int32), radius)
    flat = padded.ravel()
    plan = _Plan(padded.shape, radius, offsets)
    strides = np.array([padded.shape[1] * padded.shape[2], padded.shape[2], 1], dtype=np.int64)
    cf_all = (centers + radius) @ strides

    per_center = (2 * radius + 1) ** 3
    block = max(1, _BLOCK_ELEMS // per_center)
    spans = [(s, min(s + block, m)) for s in range(0, m, block)]

    def work(span):
        s, e = span
        cf = cf_all[s:e]
        if do_glcm:
            out[s:e, :8] = glcm_features_batch(_glcm_block(flat, cf, plan, n_bins))
        if do_glrlm:
            out[s:e, 8:] = glrlm_features_batch(_glrlm_block(flat, cf, plan, n_bins))

    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, spans))
    else:
        for span in spans:
            work(span)
    return out
