"""Coordinate frames, cuboid primitives, pinhole projection and blockage tests.

Frames follow one convention throughout: Z is up, an object's azimuth is
measured from the frame's +Y axis and is positive clockwise (towards +X), so
a heading ``theta`` points along ``(sin theta, cos theta)``.

Three frames are used:

* RCS, fixed at the road-side unit, Y along the lane direction;
* MCS, attached to the mobile station (MS), axes parallel to the RCS;
* CCS_i, attached to camera ``i``; its +Y axis is the optical axis.

A child frame rotated by ``theta`` inside its parent maps points with
``p_parent = R(theta) @ p_child + offset`` where
``R(theta) = [[cos, sin, 0], [-sin, cos, 0], [0, 0, 1]]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Wrap radians to (-pi, pi]. Works on scalars and arrays."""
    w = np.asarray(a, dtype=float)
    w = w - TWO_PI * np.ceil((w - math.pi) / TWO_PI)
    if np.ndim(w) == 0:
        return float(w)
    return w


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def heading(theta):
    """Unit horizontal direction for an azimuth."""
    return np.array([np.sin(theta), np.cos(theta)])


def azimuth_of(dx, dy):
    """Azimuth (clockwise from +Y) of a horizontal direction."""
    return np.arctan2(dx, dy)


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    azimuth: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "azimuth", wrap_angle(self.azimuth))


@dataclass(frozen=True)
class Cuboid:
    """Box on an azimuth-rotated frame; ``length`` runs along the heading."""

    center: tuple
    length: float
    width: float
    height: float
    azimuth: float = 0.0

    def __post_init__(self):
        if min(self.length, self.width, self.height) <= 0:
            raise ValueError(f"cuboid dimensions must be positive, got "
                             f"{self.length}, {self.width}, {self.height}")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    @property
    def half_extents(self) -> np.ndarray:
        # local x is the width axis, local y the length axis
        return np.array([self.width / 2, self.length / 2, self.height / 2])

    def corners(self) -> np.ndarray:
        return cuboid_corners(self)


@dataclass(frozen=True)
class CameraMount:
    offset_in_mcs: tuple
    azimuth_in_mcs: float
    hfov: float = math.pi / 2
    image_width: int = 320
    image_height: int = 120

    def __post_init__(self):
        if not 0 < self.hfov < math.pi:
            raise ValueError(f"hfov must lie in (0, pi), got {self.hfov}")
        object.__setattr__(self, "offset_in_mcs", tuple(float(v) for v in self.offset_in_mcs))
        object.__setattr__(self, "azimuth_in_mcs", wrap_angle(self.azimuth_in_mcs))

    @property
    def focal(self) -> float:
        return (self.image_width / 2) / math.tan(self.hfov / 2)


def default_mounts(roof_height: float, count: int = 4, width: int = 320,
                   height: int = 120, lift: float = 0.5) -> list[CameraMount]:
    """``count`` cameras over the roof center, evenly spaced, tiling 360 degrees."""
    hfov = TWO_PI / count
    return [CameraMount((0.0, 0.0, roof_height + lift), i * hfov, hfov, width, height)
            for i in range(count)]


def check_mounts_tile(mounts: Sequence[CameraMount], tol: float = 1e-9) -> None:
    """Raise unless the mounts' horizontal sectors tile the circle exactly once."""
    total = sum(m.hfov for m in mounts)
    if abs(total - TWO_PI) > tol:
        raise ValueError(f"camera sectors cover {math.degrees(total):.3f} deg, not 360")
    order = sorted(mounts, key=lambda m: m.azimuth_in_mcs % TWO_PI)
    for a, b in zip(order, order[1:] + order[:1]):
        gap = wrap_angle((b.azimuth_in_mcs - b.hfov / 2) - (a.azimuth_in_mcs + a.hfov / 2))
        if abs(gap) > tol:
            raise ValueError("camera sectors overlap or leave a gap")


# -- frame transforms ---------------------------------------------------------

def ccs_to_mcs(p, azimuth_ccs: float, mount: CameraMount):
    p_m = rotation(mount.azimuth_in_mcs) @ np.asarray(p, dtype=float) + np.asarray(mount.offset_in_mcs)
    return p_m, wrap_angle(mount.azimuth_in_mcs + azimuth_ccs)


def mcs_to_ccs(p, azimuth_mcs: float, mount: CameraMount):
    p_c = rotation(mount.azimuth_in_mcs).T @ (np.asarray(p, dtype=float) - np.asarray(mount.offset_in_mcs))
    return p_c, wrap_angle(azimuth_mcs - mount.azimuth_in_mcs)


def mcs_to_rcs(p, ms_in_rcs):
    return np.asarray(p, dtype=float) + np.asarray(ms_in_rcs, dtype=float)


def rcs_to_mcs(p, ms_in_rcs):
    return np.asarray(p, dtype=float) - np.asarray(ms_in_rcs, dtype=float)


def world_to_camera(points, cam: CameraMount, ms_pose: Pose2D) -> np.ndarray:
    """RCS points (n, 3) into the camera frame of ``cam`` on an MS at ``ms_pose``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rel = pts - np.array([ms_pose.x, ms_pose.y, 0.0])
    p_m = rel @ rotation(ms_pose.azimuth)  # row-vector form of R^T @ p
    return (p_m - np.asarray(cam.offset_in_mcs)) @ rotation(cam.azimuth_in_mcs)


# -- cuboids ------------------------------------------------------------------

_CORNER_SIGNS = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                         dtype=float)


def cuboid_corners(c: Cuboid) -> np.ndarray:
    local = _CORNER_SIGNS * c.half_extents
    return local @ rotation(c.azimuth).T + np.asarray(c.center)


def pack_boxes(boxes: Sequence[Cuboid]):
    """Arrays consumed by the blockage kernel: centers, half extents, cos, sin."""
    n = len(boxes)
    centers = np.empty((n, 3))
    half = np.empty((n, 3))
    az = np.empty(n)
    for i, b in enumerate(boxes):
        centers[i] = b.center
        half[i] = b.half_extents
        az[i] = b.azimuth
    return centers, half, np.cos(az), np.sin(az)


def segments_blocked(a, b, boxes, exclude=None) -> np.ndarray:
    """Vectorized :func:`segment_blocked` for ``n`` segments against the same boxes.

    ``exclude[i]`` names a box index ignored for segment ``i`` (-1 for none).
    """
    a = np.ascontiguousarray(np.atleast_2d(a), dtype=float)
    b = np.ascontiguousarray(np.atleast_2d(b), dtype=float)
    if exclude is None:
        exclude = np.full(len(a), -1, dtype=np.int64)
    packed = boxes if isinstance(boxes, tuple) else pack_boxes(boxes)
    if len(packed[0]) == 0:
        return np.zeros(len(a), dtype=bool)
    return kernels.segments_blocked(a, b, *packed, np.ascontiguousarray(exclude, dtype=np.int64))


def segment_blocked(a, b, obstacles: Sequence[Cuboid]) -> bool:
    """True iff the open segment (a, b) passes through some obstacle's interior.

    A segment that only grazes a face is not blocked.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.array_equal(a, b):
        raise ValueError("segment endpoints coincide")
    return bool(segments_blocked(a[None], b[None], obstacles)[0])


# -- projection ---------------------------------------------------------------

def project_camera_points(cam: CameraMount, pts_cam) -> np.ndarray:
    """Pinhole projection of camera-frame points with positive depth.

    Principal point at the image center, square pixels; rows grow downwards.
    """
    pts = np.atleast_2d(pts_cam)
    f = cam.focal
    u = cam.image_width / 2 + f * pts[:, 0] / pts[:, 1]
    v = cam.image_height / 2 - f * pts[:, 2] / pts[:, 1]
    return np.column_stack([u, v])


def convex_hull(points) -> np.ndarray:
    """Monotone-chain hull, counter-clockwise in (u, v) order, no repeated end."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def clip_polygon(poly, width: float, height: float) -> np.ndarray:
    """Sutherland-Hodgman clip against the rectangle [0, width] x [0, height]."""
    out = [tuple(p) for p in np.asarray(poly, dtype=float)]
    # each edge: (axis, bound, keep-if-greater)
    for axis, bound, keep_ge in ((0, 0.0, True), (0, width, False),
                                 (1, 0.0, True), (1, height, False)):
        if not out:
            break

        def inside(p):
            return p[axis] >= bound if keep_ge else p[axis] <= bound

        src, out = out, []
        for i, cur in enumerate(src):
            prev = src[i - 1]
            if inside(cur):
                if not inside(prev):
                    out.append(_intersect(prev, cur, axis, bound))
                out.append(cur)
            elif inside(prev):
                out.append(_intersect(prev, cur, axis, bound))
    if len(out) < 3:
        return np.empty((0, 2))
    return np.array(out)


def _intersect(p, q, axis, bound):
    t = (bound - p[axis]) / (q[axis] - p[axis])
    r = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
    r[axis] = bound  # exact on the clip line
    return tuple(r)


def project_camera_cuboid(cam: CameraMount, corners_cam) -> np.ndarray:
    corners_cam = np.asarray(corners_cam)
    front = corners_cam[corners_cam[:, 1] > 1e-9]
    if len(front) == 0:
        return np.empty((0, 2))
    hull = convex_hull(project_camera_points(cam, front))
    if len(hull) < 3:
        return np.empty((0, 2))
    return clip_polygon(hull, cam.image_width, cam.image_height)


def project_cuboid(cam: CameraMount, ms_pose_rcs: Pose2D, c: Cuboid) -> np.ndarray:
    """Image-space convex polygon (k, 2) covered by ``c``, or an empty (0, 2) array."""
    return project_camera_cuboid(cam, world_to_camera(cuboid_corners(c), cam, ms_pose_rcs))
