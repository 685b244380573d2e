"""Detections, VDF and SIF construction, BCT labels, splits and re-sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .geometry import (CameraMount, Cuboid, Pose2D, ccs_to_mcs, mcs_to_ccs, mcs_to_rcs,
                       project_camera_cuboid, rcs_to_mcs, world_to_camera, wrap_angle)
from .scenario import MAX_DIMS, LaneSpec, Snapshot


@dataclass(frozen=True)
class Detection:
    camera_index: int
    object_index: int
    size: tuple  # (l, w, h)
    center_ccs: tuple
    azimuth_ccs: float

    def __post_init__(self):
        if self.center_ccs[1] <= 0:
            raise ValueError("detected center must have positive camera depth")


@dataclass(frozen=True)
class DetectionNoise:
    center: float = 0.0
    size: float = 0.0
    azimuth: float = 0.0

    def __post_init__(self):
        if min(self.center, self.size, self.azimuth) < 0:
            raise ValueError("noise standard deviations must be >= 0")


def in_sector(p_ccs, mount: CameraMount) -> bool:
    """Half-open horizontal sector ``[-hfov/2, hfov/2)`` around the optical axis."""
    az = math.atan2(p_ccs[0], p_ccs[1])
    return -mount.hfov / 2 <= az < mount.hfov / 2


def detect_vehicles(snapshot: Snapshot, mounts: Sequence[CameraMount],
                    noise: DetectionNoise = DetectionNoise(),
                    rng: np.random.Generator | None = None) -> list[list[Detection]]:
    """Ground-truth boxes of the other vehicles, per camera, with Gaussian noise.

    A vehicle is reported by the one camera whose sector holds its center.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    ms = np.array([*snapshot.ms_location, 0.0])
    out: list[list[Detection]] = [[] for _ in mounts]
    for j, box in snapshot.other_vehicles():
        p_m = rcs_to_mcs(box.center, ms)
        for i, m in enumerate(mounts):
            p_c, az_c = mcs_to_ccs(p_m, box.azimuth, m)
            if in_sector(p_c, m):
                break
        else:  # pragma: no cover - sectors tile the circle
            raise RuntimeError("camera sectors do not cover a vehicle")
        size = np.array([box.length, box.width, box.height])
        if noise.center:
            p_c = p_c + rng.normal(0.0, noise.center, 3)
        if noise.size:
            size = np.maximum(size + rng.normal(0.0, noise.size, 3), 1e-3)
        if noise.azimuth:
            az_c = wrap_angle(az_c + rng.normal(0.0, noise.azimuth))
        out[i].append(Detection(i, j, tuple(float(v) for v in size),
                                tuple(float(v) for v in p_c), float(az_c)))
    return out


# -- grid and VDF -------------------------------------------------------------

@dataclass(frozen=True)
class GridConfig:
    cell_length: float
    cell_width: float
    cells: tuple  # ((iX, iY), ...) ordered by iY then iX

    def __post_init__(self):
        if self.cell_length <= 0 or self.cell_width <= 0:
            raise ValueError("grid cell sizes must be positive")
        object.__setattr__(self, "_index", {c: g for g, c in enumerate(self.cells)})

    @property
    def G(self) -> int:
        return len(self.cells)

    def cell_of(self, x: float, y: float) -> int:
        """Row of the cell holding ``(x, y)``, or -1 when off the grid."""
        key = (math.floor(x / self.cell_length), math.floor(y / self.cell_width))
        return self._index.get(key, -1)


def _polys_intersect(p: np.ndarray, q: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons with positive-area overlap."""
    for poly in (p, q):
        for i in range(len(poly)):
            e = poly[(i + 1) % len(poly)] - poly[i]
            axis = np.array([-e[1], e[0]])
            a, b = p @ axis, q @ axis
            if a.max() <= b.min() or b.max() <= a.min():
                return False
    return True


def make_grid(lanes: Sequence[LaneSpec], cell_length: float = 11.7, cell_width: float = 2.0,
              y_range: tuple = (-40.0, 40.0)) -> GridConfig:
    """Cells anchored at the RCS origin that overlap some lane inside ``y_range``."""
    y0, y1 = y_range
    iy_lo, iy_hi = math.floor(y0 / cell_width), math.ceil(y1 / cell_width)
    xs = np.concatenate([ln.polygon()[:, 0] for ln in lanes])
    ix_lo, ix_hi = math.floor(xs.min() / cell_length), math.ceil(xs.max() / cell_length)
    polys = [ln.polygon() for ln in lanes]
    cells = []
    for iy in range(iy_lo, iy_hi):
        for ix in range(ix_lo, ix_hi):
            x0, yb = ix * cell_length, iy * cell_width
            rect = np.array([[x0, yb], [x0 + cell_length, yb],
                             [x0 + cell_length, yb + cell_width], [x0, yb + cell_width]])
            if any(_polys_intersect(rect, p) for p in polys):
                cells.append((ix, iy))
    return GridConfig(cell_length, cell_width, tuple(cells))


def vdf_from_boxes(xy, sizes, azimuths, grid: GridConfig, maxima=MAX_DIMS) -> np.ndarray:
    """Per-cell max normalized (l, w, h) and arithmetic-mean azimuth; shape (G, 4)."""
    out = np.zeros((grid.G, 4))
    az_sum = np.zeros(grid.G)
    count = np.zeros(grid.G, dtype=np.int64)
    norm = np.asarray(maxima, dtype=float)
    for (x, y), s, az in zip(np.reshape(xy, (-1, 2)), np.reshape(sizes, (-1, 3)), np.ravel(azimuths)):
        g = grid.cell_of(x, y)
        if g < 0:
            continue
        out[g, :3] = np.maximum(out[g, :3], np.clip(s / norm, 0.0, 1.0))
        az_sum[g] += az
        count[g] += 1
    hit = count > 0
    out[hit, 3] = az_sum[hit] / count[hit]
    return out


def _flatten(detections):
    if detections and isinstance(detections[0], (list, tuple)):
        return [d for cam in detections for d in cam]
    return list(detections)


def detections_to_mcs(detections, mounts: Sequence[CameraMount]) -> np.ndarray:
    """Rows ``(x, y, z, l, w, h, azimuth)`` of each detection in the MCS."""
    flat = _flatten(detections)
    out = np.empty((len(flat), 7))
    for n, d in enumerate(flat):
        p_m, az_m = ccs_to_mcs(d.center_ccs, d.azimuth_ccs, mounts[d.camera_index])
        out[n, :3] = p_m
        out[n, 3:6] = d.size
        out[n, 6] = az_m
    return out


def vdf_from_mcs(det: np.ndarray, ms_location, grid: GridConfig, maxima=MAX_DIMS) -> np.ndarray:
    """VDF from MCS detection rows shifted by the MS location into the RCS."""
    det = np.reshape(det, (-1, 7))
    ms = np.array([ms_location[0], ms_location[1], 0.0])
    xy = mcs_to_rcs(det[:, :3], ms)[:, :2]
    return vdf_from_boxes(xy, det[:, 3:6], det[:, 6], grid, maxima)


def build_vdf(detections, ms_location, grid: GridConfig, mounts: Sequence[CameraMount],
              maxima=MAX_DIMS) -> np.ndarray:
    """VDF from camera-frame detections plus the (possibly noisy) MS location."""
    return vdf_from_mcs(detections_to_mcs(detections, mounts), ms_location, grid, maxima)


def vdf_from_truth(snapshot: Snapshot, grid: GridConfig, maxima=MAX_DIMS) -> np.ndarray:
    boxes = [b for _, b in snapshot.other_vehicles()]
    xy = np.array([b.center[:2] for b in boxes]).reshape(-1, 2)
    sizes = np.array([(b.length, b.width, b.height) for b in boxes]).reshape(-1, 3)
    az = np.array([b.azimuth for b in boxes])
    return vdf_from_boxes(xy, sizes, az, grid, maxima)


# -- scene image feature ------------------------------------------------------

SKY, GROUND = 200.0, 90.0


def size_triple(size, maxima=MAX_DIMS) -> np.ndarray:
    return (-255.0 * np.asarray(size, dtype=float) / np.asarray(maxima, dtype=float)).astype(np.float32)


def _building_shade(k: int) -> float:
    return 120.0 + 15.0 * (k % 5)


def build_sif(snapshot: Snapshot, mounts: Sequence[CameraMount], detections,
              maxima=MAX_DIMS) -> np.ndarray:
    """(f_H, f_W, 3C) float32 image stack; vehicle masks carry negative size triples.

    Buildings and detected vehicles are painted far to near so the nearest
    surface wins each pixel.
    """
    ms_pose = Pose2D(*snapshot.ms_location, 0.0)
    fh, fw = mounts[0].image_height, mounts[0].image_width
    out = np.empty((fh, fw, 3 * len(mounts)), dtype=np.float32)
    for i, cam in enumerate(mounts):
        img = np.empty((fh, fw, 3), dtype=np.float32)
        img[: fh // 2] = SKY
        img[fh // 2:] = GROUND
        items = []  # (depth, polygon, value)
        for k, b in enumerate(snapshot.buildings):
            corners = world_to_camera(b.corners(), cam, ms_pose)
            poly = project_camera_cuboid(cam, corners)
            if len(poly):
                depth = float(world_to_camera(np.asarray(b.center)[None], cam, ms_pose)[0, 1])
                items.append((depth, poly, np.full(3, _building_shade(k), dtype=np.float32)))
        for d in detections[i]:
            box = Cuboid(d.center_ccs, *d.size, d.azimuth_ccs)
            poly = project_camera_cuboid(cam, box.corners())
            if len(poly):
                items.append((d.center_ccs[1], poly, size_triple(d.size, maxima)))
        items.sort(key=lambda t: -t[0])
        for _, poly, value in items:
            kernels.fill_convex_polygon(img, np.ascontiguousarray(poly, dtype=float), value)
        out[:, :, 3 * i:3 * i + 3] = img
    return out


def build_seq(sifs: Sequence[np.ndarray], times: Sequence[float], S: int = 3) -> np.ndarray:
    """Stack ``S`` time-ordered SIFs along a new leading axis (newest last)."""
    if len(sifs) != S or len(times) != S:
        raise ValueError(f"need exactly {S} SIFs, got {len(sifs)}")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("SIF timestamps must strictly ascend")
    return np.stack(sifs)


# -- BCT labels ---------------------------------------------------------------

def label_bct(beam_labels: Sequence[int], r: int) -> int:
    """Length of the run of equal labels starting at 1-based position ``r``."""
    n = len(beam_labels)
    if not 1 <= r <= n:
        raise ValueError(f"r={r} outside 1..{n}")
    m = 1
    while r - 1 + m < n and beam_labels[r - 1 + m] == beam_labels[r - 1]:
        m += 1
    return m


def label_bct_all(beam_labels: Sequence[int]) -> np.ndarray:
    return kernels.run_lengths(np.asarray(beam_labels, dtype=np.int64))


def group_bct(m) -> int | np.ndarray:
    """BCT group: 1 for M=1, 2 for M=2, 3 for M>=3."""
    arr = np.asarray(m)
    if np.any(arr < 1):
        raise ValueError("BCT must be >= 1")
    g = np.minimum(arr, 3)
    return int(g) if g.ndim == 0 else g.astype(np.int64)


def group_min_bct(group: int) -> int:
    """BCT the policy uses for a predicted group: the group's smallest member."""
    if group not in (1, 2, 3):
        raise ValueError(f"unknown BCT group {group}")
    return group


# -- splits and re-sampling ---------------------------------------------------

def split_dataset(scenario_ids: Sequence[int], fractions=(0.8, 0.1, 0.1),
                  seed: int = 0) -> tuple[list[int], ...]:
    """Assign whole scenarios to splits after a seeded shuffle."""
    fr = np.asarray(fractions, dtype=float)
    if np.any(fr < 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be nonnegative and sum to 1, got {list(fractions)}")
    ids = sorted(set(int(q) for q in scenario_ids))
    if len(ids) < len(fr):
        raise ValueError(f"{len(ids)} scenarios cannot fill {len(fr)} splits")
    order = np.random.default_rng(seed).permutation(len(ids))
    counts = np.diff(np.concatenate([[0], np.round(np.cumsum(fr) * len(ids)).astype(int)]))
    counts[-1] += len(ids) - counts.sum()
    for k in np.flatnonzero((counts == 0) & (fr > 0)):  # give tiny splits one scenario
        donor = int(np.argmax(counts))
        if counts[donor] <= 1:
            break
        counts[donor] -= 1
        counts[k] += 1
    parts, lo = [], 0
    for c in counts:
        parts.append(sorted(ids[k] for k in order[lo:lo + c]))
        lo += c
    if any(not p for p in parts):
        raise ValueError(f"fractions {list(fractions)} leave a split empty with {len(ids)} scenarios")
    return tuple(parts)


def resample_balanced(groups: Sequence[int], seed: int = 0) -> np.ndarray:
    """Indices that oversample minority groups (with replacement) up to the largest count."""
    groups = np.asarray(groups)
    if groups.size == 0:
        raise ValueError("nothing to resample")
    rng = np.random.default_rng(seed)
    present = np.unique(groups)
    target = max(int(np.sum(groups == g)) for g in present)
    chunks = []
    for g in present:
        idx = np.flatnonzero(groups == g)
        extra = rng.choice(idx, target - len(idx), replace=True) if target > len(idx) else idx[:0]
        chunks.append(np.concatenate([idx, extra]))
    return rng.permutation(np.concatenate(chunks))
