"""Scalar texture features derived from co-occurrence and run-length matrices.

Gray levels and run lengths are 1-based.  Degenerate conventions:
zero pairs / zero runs -> every feature of that family is 0; zero marginal
variance -> both correlation features are 0; 0*log(0) = 0.
"""
from __future__ import annotations

import numpy as np

from .._accel import njit
from .matrices import GLCM_FEATURES, GLRLM_FEATURES, GlcmMatrix, RlmMatrix


def glcm_features_batch(counts: np.ndarray) -> np.ndarray:
    """Features for a stack of (unnormalized) symmetric co-occurrence counts.

    ``counts`` has shape (m, nb, nb); returns (m, 8) in GLCM_FEATURES order.
    """
    counts = np.asarray(counts, dtype=np.float64)
    m, nb, _ = counts.shape
    total = counts.sum(axis=(1, 2))
    ok = total > 0
    p = np.zeros_like(counts)
    p[ok] = counts[ok] / total[ok, None, None]

    lv = np.arange(1, nb + 1, dtype=np.float64)
    i = lv[:, None]
    j = lv[None, :]
    marg = p.sum(axis=2)
    mu = marg @ lv
    var = np.einsum("mi,mi->m", marg, (lv[None, :] - mu[:, None]) ** 2)

    out = np.zeros((m, 8))
    out[:, 0] = np.einsum("mij,mij->m", p, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    out[:, 1] = -plogp.sum(axis=(1, 2))
    di = i[None] - mu[:, None, None]
    dj = j[None] - mu[:, None, None]
    cov = (di * dj * p).sum(axis=(1, 2))
    nz = var > 0
    out[nz, 2] = cov[nz] / var[nz]
    out[:, 3] = (p / (1.0 + (i - j) ** 2)).sum(axis=(1, 2))
    out[:, 4] = (p * (i - j) ** 2).sum(axis=(1, 2))
    s = di + dj
    out[:, 5] = (p * s**3).sum(axis=(1, 2))
    out[:, 6] = (p * s**4).sum(axis=(1, 2))
    ijp = (p * (i * j)).sum(axis=(1, 2))
    out[nz, 7] = (ijp[nz] - mu[nz] ** 2) / var[nz]
    out[~ok] = 0.0
    return out


def glrlm_features_batch(runs: np.ndarray) -> np.ndarray:
    """Features for a stack of run-length matrices of shape (m, nb, max_run)."""
    runs = np.asarray(runs, dtype=np.float64)
    m, nb, nr = runs.shape
    n = runs.sum(axis=(1, 2))
    ok = n > 0
    i2 = (np.arange(1, nb + 1, dtype=np.float64) ** 2)[:, None]
    j2 = (np.arange(1, nr + 1, dtype=np.float64) ** 2)[None, :]

    out = np.zeros((m, 10))
    r = runs[ok]
    nn = n[ok]
    out[ok, 0] = (r / j2).sum(axis=(1, 2)) / nn
    out[ok, 1] = (r * j2).sum(axis=(1, 2)) / nn
    out[ok, 2] = (r.sum(axis=2) ** 2).sum(axis=1) / nn
    out[ok, 3] = (r.sum(axis=1) ** 2).sum(axis=1) / nn
    out[ok, 4] = (r / i2).sum(axis=(1, 2)) / nn
    out[ok, 5] = (r * i2).sum(axis=(1, 2)) / nn
    out[ok, 6] = (r / (i2 * j2)).sum(axis=(1, 2)) / nn
    out[ok, 7] = (r * i2 / j2).sum(axis=(1, 2)) / nn
    out[ok, 8] = (r * j2 / i2).sum(axis=(1, 2)) / nn
    out[ok, 9] = (r * i2 * j2).sum(axis=(1, 2)) / nn
    return out


def glcm_features(m: GlcmMatrix) -> dict[str, float]:
    vals = glcm_features_batch(m.p[None]) if m.n_pairs > 0 else np.zeros((1, 8))
    return dict(zip(GLCM_FEATURES, (float(v) for v in vals[0])))


def glrlm_features(m: RlmMatrix) -> dict[str, float]:
    vals = glrlm_features_batch(m.r[None])
    return dict(zip(GLRLM_FEATURES, (float(v) for v in vals[0])))


# ---------------------------------------------------------------- numba scalar


@njit(cache=True)
def glcm_features_nb(counts, out, base):
    nb = counts.shape[0]
    total = 0.0
    for a in range(nb):
        for b in range(nb):
            total += counts[a, b]
    for k in range(8):
        out[base + k] = 0.0
    if total <= 0.0:
        return
    mu = 0.0
    for a in range(nb):
        row = 0.0
        for b in range(nb):
            row += counts[a, b]
        mu += (a + 1) * (row / total)
    var = 0.0
    for a in range(nb):
        row = 0.0
        for b in range(nb):
            row += counts[a, b]
        var += ((a + 1) - mu) ** 2 * (row / total)
    energy = 0.0
    entropy = 0.0
    cov = 0.0
    idm = 0.0
    inertia = 0.0
    shade = 0.0
    prom = 0.0
    ijp = 0.0
    for a in range(nb):
        i = a + 1.0
        for b in range(nb):
            c = counts[a, b]
            if c == 0.0:
                continue
            p = c / total
            j = b + 1.0
            energy += p * p
            entropy -= p * np.log2(p)
            cov += (i - mu) * (j - mu) * p
            idm += p / (1.0 + (i - j) ** 2)
            inertia += (i - j) ** 2 * p
            s = (i - mu) + (j - mu)
            shade += s * s * s * p
            prom += s * s * s * s * p
            ijp += i * j * p
    out[base + 0] = energy
    out[base + 1] = entropy
    if var > 0.0:
        out[base + 2] = cov / var
        out[base + 7] = (ijp - mu * mu) / var
    out[base + 3] = idm
    out[base + 4] = inertia
    out[base + 5] = shade
    out[base + 6] = prom


@njit(cache=True)
def glrlm_features_nb(runs, out, base):
    nb, nr = runs.shape
    for k in range(10):
        out[base + k] = 0.0
    n = 0.0
    for a in range(nb):
        for b in range(nr):
            n += runs[a, b]
    if n <= 0.0:
        return
    sre = lre = lgre = hgre = srlge = srhge = lrlge = lrhge = 0.0
    gln = 0.0
    for a in range(nb):
        i2 = (a + 1.0) ** 2
        row = 0.0
        for b in range(nr):
            r = runs[a, b]
            if r == 0.0:
                continue
            row += r
            j2 = (b + 1.0) ** 2
            sre += r / j2
            lre += r * j2
            lgre += r / i2
            hgre += r * i2
            srlge += r / (i2 * j2)
            srhge += r * i2 / j2
            lrlge += r * j2 / i2
            lrhge += r * i2 * j2
        gln += row * row
    rln = 0.0
    for b in range(nr):
        col = 0.0
        for a in range(nb):
            col += runs[a, b]
        rln += col * col
    out[base + 0] = sre / n
    out[base + 1] = lre / n
    out[base + 2] = gln / n
    out[base + 3] = rln / n
    out[base + 4] = lgre / n
    out[base + 5] = hgre / n
    out[base + 6] = srlge / n
    out[base + 7] = srhge / n
    out[base + 8] = lrlge / n
    out[base + 9] = lrhge / n
