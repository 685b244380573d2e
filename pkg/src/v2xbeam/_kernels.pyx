# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops; ``_kernels_py`` holds the numpy twins."""
import numpy as np
from libc.math cimport fabs, floor, ceil, INFINITY


cdef inline bint _hits(double ax, double ay, double az, double bx, double by, double bz,
                       double cx, double cy, double cz, double hx, double hy, double hz,
                       double c, double s) nogil:
    cdef double dax = ax - cx, day = ay - cy
    cdef double dbx = bx - cx, dby = by - cy
    cdef double p[3]
    cdef double q[3]
    cdef double h[3]
    p[0] = c * dax - s * day
    p[1] = s * dax + c * day
    p[2] = az - cz
    q[0] = c * dbx - s * dby
    q[1] = s * dbx + c * dby
    q[2] = bz - cz
    h[0] = hx
    h[1] = hy
    h[2] = hz
    cdef double t_lo = 0.0, t_hi = 1.0, d, t1, t2, lo, hi
    cdef int k
    for k in range(3):
        d = q[k] - p[k]
        if d == 0.0:
            if fabs(p[k]) >= h[k]:
                return False
            lo = -INFINITY
            hi = INFINITY
        else:
            t1 = (-h[k] - p[k]) / d
            t2 = (h[k] - p[k]) / d
            if t1 < t2:
                lo = t1
                hi = t2
            else:
                lo = t2
                hi = t1
        if lo > t_lo:
            t_lo = lo
        if hi < t_hi:
            t_hi = hi
    return t_lo < t_hi


def segments_blocked(const double[:, ::1] a, const double[:, ::1] b,
                     const double[:, ::1] centers, const double[:, ::1] half,
                     const double[::1] cos_az, const double[::1] sin_az,
                     const long long[::1] exclude):
    cdef Py_ssize_t n = a.shape[0], m = centers.shape[0], i, j
    out = np.zeros(n, dtype=bool)
    cdef unsigned char[::1] o = out.view(np.uint8)
    with nogil:
        for i in range(n):
            for j in range(m):
                if j == exclude[i]:
                    continue
                if _hits(a[i, 0], a[i, 1], a[i, 2], b[i, 0], b[i, 1], b[i, 2],
                         centers[j, 0], centers[j, 1], centers[j, 2],
                         half[j, 0], half[j, 1], half[j, 2], cos_az[j], sin_az[j]):
                    o[i] = 1
                    break
    return out


def fill_convex_polygon(float[:, :, :] img, const double[:, ::1] poly, value):
    cdef Py_ssize_t k = poly.shape[0], i, j, r, col, ch
    if k < 3:
        return
    cdef double area = 0.0
    for i in range(k):
        j = (i + 1) % k
        area += poly[i, 0] * poly[j, 1] - poly[j, 0] * poly[i, 1]
    if area == 0.0:
        return
    cdef double sign = 1.0 if area > 0 else -1.0
    cdef double ymin = poly[0, 1], ymax = poly[0, 1], xmin = poly[0, 0], xmax = poly[0, 0]
    for i in range(1, k):
        ymin = min(ymin, poly[i, 1])
        ymax = max(ymax, poly[i, 1])
        xmin = min(xmin, poly[i, 0])
        xmax = max(xmax, poly[i, 0])
    cdef Py_ssize_t r0 = max(<Py_ssize_t>floor(ymin), 0)
    cdef Py_ssize_t r1 = min(<Py_ssize_t>ceil(ymax), img.shape[0])
    cdef Py_ssize_t c0 = max(<Py_ssize_t>floor(xmin), 0)
    cdef Py_ssize_t c1 = min(<Py_ssize_t>ceil(xmax), img.shape[1])
    cdef float v[3]
    for ch in range(3):
        v[ch] = value[ch]
    cdef double qx, qy, x0, y0, ex, ey
    cdef bint inside
    with nogil:
        for r in range(r0, r1):
            qy = r + 0.5
            for col in range(c0, c1):
                qx = col + 0.5
                inside = True
                for i in range(k):
                    j = (i + 1) % k
                    x0 = poly[i, 0]
                    y0 = poly[i, 1]
                    ex = poly[j, 0] - x0
                    ey = poly[j, 1] - y0
                    if ((ex * (qy - y0)) - (ey * (qx - x0))) * sign < 0.0:
                        inside = False
                        break
                if inside:
                    img[r, col, 0] = v[0]
                    img[r, col, 1] = v[1]
                    img[r, col, 2] = v[2]


def run_lengths(labels):
    cdef long long[::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = lab.shape[0], i
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out
    if n == 0:
        return out
    o[n - 1] = 1
    for i in range(n - 2, -1, -1):
        o[i] = o[i + 1] + 1 if lab[i] == lab[i + 1] else 1
    return out
