"""Per-voxel texture kernels compiled with numba.

Each center writes only its own output row, so results are independent of
thread count and scheduling.
"""
import numpy as np

from .._accel import njit, prange
from .formulas import glcm_features_nb, glrlm_features_nb


@njit(cache=True)
def _glcm_counts(q, cx, cy, cz, radius, offsets, counts):
    nx, ny, nz = q.shape
    x0 = max(cx - radius, 0)
    x1 = min(cx + radius, nx - 1)
    y0 = max(cy - radius, 0)
    y1 = min(cy + radius, ny - 1)
    z0 = max(cz - radius, 0)
    z1 = min(cz + radius, nz - 1)
    for k in range(offsets.shape[0]):
        dx = offsets[k, 0]
        dy = offsets[k, 1]
        dz = offsets[k, 2]
        for x in range(x0, x1 + 1):
            xb = x + dx
            if xb < x0 or xb > x1:
                continue
            for y in range(y0, y1 + 1):
                yb = y + dy
                if yb < y0 or yb > y1:
                    continue
                for z in range(z0, z1 + 1):
                    zb = z + dz
                    if zb < z0 or zb > z1:
                        continue
                    a = q[x, y, z]
                    if a == 0:
                        continue
                    b = q[xb, yb, zb]
                    if b == 0:
                        continue
                    counts[a - 1, b - 1] += 1.0
                    counts[b - 1, a - 1] += 1.0


@njit(cache=True)
def _glrlm_counts(q, cx, cy, cz, radius, offsets, runs):
    nx, ny, nz = q.shape
    x0 = max(cx - radius, 0)
    x1 = min(cx + radius, nx - 1)
    y0 = max(cy - radius, 0)
    y1 = min(cy + radius, ny - 1)
    z0 = max(cz - radius, 0)
    z1 = min(cz + radius, nz - 1)
    for k in range(offsets.shape[0]):
        dx = offsets[k, 0]
        dy = offsets[k, 1]
        dz = offsets[k, 2]
        for sx in range(x0, x1 + 1):
            px = sx - dx
            for sy in range(y0, y1 + 1):
                py = sy - dy
                for sz in range(z0, z1 + 1):
                    pz = sz - dz
                    if x0 <= px <= x1 and y0 <= py <= y1 and z0 <= pz <= z1:
                        continue  # not a line start
                    x, y, z = sx, sy, sz
                    cur = 0
                    length = 0
                    while x0 <= x <= x1 and y0 <= y <= y1 and z0 <= z <= z1:
                        b = q[x, y, z]
                        if b == 0:
                            if length > 0:
                                runs[cur - 1, length - 1] += 1.0
                            cur = 0
                            length = 0
                        elif b == cur:
                            length += 1
                        else:
                            if length > 0:
                                runs[cur - 1, length - 1] += 1.0
                            cur = b
                            length = 1
                        x += dx
                        y += dy
                        z += dz
                    if length > 0:
                        runs[cur - 1, length - 1] += 1.0


@njit(parallel=True, cache=True)
def texture_rows(q, centers, radius, offsets, n_bins, do_glcm, do_glrlm):
    """(m, 18) feature rows for ``centers``; families not requested stay 0."""
    m = centers.shape[0]
    out = np.zeros((m, 18))
    max_run = 2 * radius + 1
    for c in prange(m):
        cx = centers[c, 0]
        cy = centers[c, 1]
        cz = centers[c, 2]
        row = out[c]
        if do_glcm:
            counts = np.zeros((n_bins, n_bins))
            _glcm_counts(q, cx, cy, cz, radius, offsets, counts)
            glcm_features_nb(counts, row, 0)
        if do_glrlm:
            runs = np.zeros((n_bins, max_run))
            _glrlm_counts(q, cx, cy, cz, radius, offsets, runs)
            glrlm_features_nb(runs, row, 8)
    return out
