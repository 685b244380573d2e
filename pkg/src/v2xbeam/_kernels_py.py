"""Numpy implementations of the hot kernels.

Each function mirrors the compiled version in ``_kernels.pyx`` operation for
operation so both back-ends return bitwise identical results.
"""
import numpy as np


def segments_blocked(a, b, centers, half, cos_az, sin_az, exclude):
    n, m = len(a), len(centers)
    if n == 0 or m == 0:
        return np.zeros(n, dtype=bool)
    # world -> box-local: x = c*dx - s*dy, y = s*dx + c*dy, z = dz
    dax = a[:, None, 0] - centers[None, :, 0]
    day = a[:, None, 1] - centers[None, :, 1]
    p = np.stack([cos_az * dax - sin_az * day,
                  sin_az * dax + cos_az * day,
                  a[:, None, 2] - centers[None, :, 2]], axis=-1)
    dbx = b[:, None, 0] - centers[None, :, 0]
    dby = b[:, None, 1] - centers[None, :, 1]
    q = np.stack([cos_az * dbx - sin_az * dby,
                  sin_az * dbx + cos_az * dby,
                  b[:, None, 2] - centers[None, :, 2]], axis=-1)
    d = q - p
    h = np.broadcast_to(half[None], p.shape)

    t_lo = np.zeros((n, m))
    t_hi = np.ones((n, m))
    miss = np.zeros((n, m), dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(3):
            dk, pk, hk = d[..., k], p[..., k], h[..., k]
            flat = dk == 0.0
            miss |= flat & (np.abs(pk) >= hk)
            t1 = (-hk - pk) / dk
            t2 = (hk - pk) / dk
            lo = np.where(flat, -np.inf, np.minimum(t1, t2))
            hi = np.where(flat, np.inf, np.maximum(t1, t2))
            t_lo = np.maximum(t_lo, lo)
            t_hi = np.minimum(t_hi, hi)
    hit = ~miss & (t_lo < t_hi)
    hit[np.arange(n), exclude] &= exclude < 0
    return hit.any(axis=1)


def fill_convex_polygon(img, poly, value):
    """Paint pixels whose centers lie in the closed convex polygon ``poly``."""
    k = len(poly)
    if k < 3:
        return
    area = 0.0
    for i in range(k):
        j = (i + 1) % k
        area += poly[i, 0] * poly[j, 1] - poly[j, 0] * poly[i, 1]
    if area == 0.0:
        return
    sign = 1.0 if area > 0 else -1.0
    height, width = img.shape[0], img.shape[1]
    r0 = max(int(np.floor(poly[:, 1].min())), 0)
    r1 = min(int(np.ceil(poly[:, 1].max())), height)
    c0 = max(int(np.floor(poly[:, 0].min())), 0)
    c1 = min(int(np.ceil(poly[:, 0].max())), width)
    if r0 >= r1 or c0 >= c1:
        return
    qy = np.arange(r0, r1, dtype=float)[:, None] + 0.5
    qx = np.arange(c0, c1, dtype=float)[None, :] + 0.5
    inside = np.ones((r1 - r0, c1 - c0), dtype=bool)
    for i in range(k):
        j = (i + 1) % k
        x0, y0 = poly[i, 0], poly[i, 1]
        ex, ey = poly[j, 0] - x0, poly[j, 1] - y0
        inside &= ((ex * (qy - y0)) - (ey * (qx - x0))) * sign >= 0.0
    img[r0:r1, c0:c1][inside] = value


def run_lengths(labels):
    """``out[i]`` = length of the run of equal labels starting at ``i``."""
    labels = np.asarray(labels)
    n = len(labels)
    out = np.empty(n, dtype=np.int64)
    if n == 0:
        return out
    # position of the first index after each run end
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    ends = np.append(change, n)
    run_end = np.repeat(ends, np.diff(np.concatenate([[0], ends])))
    out[:] = run_end - np.arange(n)
    return out
