"""Seeded traffic scenes around one road-side unit and their time evolution.

The default street has three lanes per direction. The RSU stands at the RCS
origin on the sidewalk next to the oncoming (-Y) carriageway; the MS drives in
the inner +Y lane and is sampled every ``T_d`` while inside the 30 m x 15 m
coverage rectangle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import CameraMount, Cuboid, Pose2D, azimuth_of, check_mounts_tile, default_mounts


@dataclass(frozen=True)
class VehicleKind:
    name: str
    length: float
    width: float
    height: float


VEHICLE_KINDS = (
    VehicleKind("car", 3.71, 1.79, 1.55),
    VehicleKind("van", 5.20, 2.61, 2.47),
    VehicleKind("bus", 11.08, 3.25, 3.33),
)
KIND_BY_NAME = {k.name: k for k in VEHICLE_KINDS}
MAX_DIMS = (11.08, 3.25, 3.33)  # largest kind, used to normalize sizes


@dataclass(frozen=True)
class LaneSpec:
    id: str
    start: tuple
    end: tuple
    width: float = 3.5

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError(f"lane {self.id}: width must be positive")
        if self.length <= 0:
            raise ValueError(f"lane {self.id}: zero-length centerline")

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)

    @property
    def direction(self) -> np.ndarray:
        return (np.asarray(self.end, float) - np.asarray(self.start, float)) / self.length

    @property
    def azimuth(self) -> float:
        d = self.direction
        return float(azimuth_of(d[0], d[1]))

    def point(self, s: float) -> np.ndarray:
        return np.asarray(self.start, float) + s * self.direction

    def s_of_y(self, y: float) -> float:
        return (y - self.start[1]) / self.direction[1]

    def polygon(self) -> np.ndarray:
        d = self.direction
        n = np.array([d[1], -d[0]]) * self.width / 2
        a, b = np.asarray(self.start, float), np.asarray(self.end, float)
        return np.array([a - n, b - n, b + n, a + n])

    def contains_footprint(self, box: Cuboid, tol: float = 1e-9) -> bool:
        corners = box.corners()[:, :2] - np.asarray(self.start, float)
        d = self.direction
        along = corners @ d
        across = corners @ np.array([d[1], -d[0]])
        return bool(np.all(np.abs(across) <= self.width / 2 + tol)
                    and np.all(along >= -tol) and np.all(along <= self.length + tol))


def default_lanes(length: float = 2000.0) -> tuple[LaneSpec, ...]:
    """Six 3.5 m lanes; the 11.7 m wide oncoming carriageway starts 1.2 m off the RSU."""
    lanes = []
    half = length / 2
    for i in range(3):
        x = 1.2 + 3.5 * i + 1.75
        lanes.append(LaneSpec(f"ST1L-{2 - i}", (x, half), (x, -half)))
    for i in range(3):
        x = 11.7 + 3.5 * i + 1.75
        lanes.append(LaneSpec(f"ST1R-{i}", (x, -half), (x, half)))
    return tuple(lanes)


def default_buildings() -> tuple[Cuboid, ...]:
    """Two static rows of blocks flanking the street."""
    heights = (12.0, 20.0, 9.0, 16.0, 24.0, 11.0, 18.0)
    out = []
    k = 0
    for x_center, depth in ((-9.0, 12.0), (31.7, 12.0)):
        y = -100.0
        while y < 100.0:
            out.append(Cuboid((x_center, y + 10.0, heights[k % 7] / 2), 20.0, depth,
                              heights[k % 7], 0.0))
            y += 26.0
            k += 1
    return tuple(out)


@dataclass(frozen=True)
class VehicleGroup:
    lanes: tuple
    count: int
    window: tuple  # RCS y-range for initial placement


@dataclass(frozen=True)
class ScenarioConfig:
    groups: tuple = (
        VehicleGroup(("ST1L-0", "ST1L-1", "ST1L-2"), 15, (-60.0, 240.0)),
        VehicleGroup(("ST1R-0", "ST1R-1", "ST1R-2"), 14, (-200.0, 100.0)),
    )
    ms_group: int = 1
    ms_lane: str = "ST1R-0"
    ms_entry_lead: tuple = (0.0, 5.0)  # MS starts this far (m) before the coverage edge
    speed_range: tuple = (8.0, 15.0)
    gap_min: float = 2.0
    lanes: tuple = field(default_factory=default_lanes)
    buildings: tuple = field(default_factory=default_buildings)
    coverage: tuple = (0.0, 15.0, -15.0, 15.0)  # xmin, xmax, ymin, ymax
    rsu_position: tuple = (0.0, 0.0, 3.0)
    snapshot_interval: float = 0.05
    horizon: float = 12.0
    num_cameras: int = 4
    camera_lift: float = 0.5
    image_width: int = 320
    image_height: int = 120
    antenna_lift: float = 0.05

    def lane(self, lane_id: str) -> int:
        for i, ln in enumerate(self.lanes):
            if ln.id == lane_id:
                return i
        raise KeyError(f"unknown lane {lane_id!r}")


@dataclass(frozen=True)
class VehicleState:
    kind: VehicleKind
    lane: int
    s: float
    speed: float
    desired_speed: float


@dataclass(frozen=True)
class Scenario:
    seed: int
    config: ScenarioConfig
    vehicles: tuple
    ms_index: int
    camera_mounts: tuple
    time: float = 0.0

    @property
    def lanes(self):
        return self.config.lanes

    @property
    def buildings(self):
        return self.config.buildings

    @property
    def rsu_pose(self) -> np.ndarray:
        return np.asarray(self.config.rsu_position, float)

    @property
    def coverage(self):
        return self.config.coverage

    def cuboid(self, i: int) -> Cuboid:
        return vehicle_cuboid(self.vehicles[i], self.lanes)

    @property
    def ms_location(self) -> np.ndarray:
        v = self.vehicles[self.ms_index]
        return self.lanes[v.lane].point(v.s)

    def ms_inside(self) -> bool:
        x, y = self.ms_location
        xmin, xmax, ymin, ymax = self.coverage
        return bool(xmin <= x <= xmax and ymin <= y <= ymax)


def vehicle_cuboid(v: VehicleState, lanes: Sequence[LaneSpec]) -> Cuboid:
    ln = lanes[v.lane]
    x, y = ln.point(v.s)
    k = v.kind
    return Cuboid((x, y, k.height / 2), k.length, k.width, k.height, ln.azimuth)


@dataclass(frozen=True)
class Snapshot:
    """Scene state at one camera shot; ``r`` counts from 1 within a trajectory."""

    r: int
    step: int
    time: float
    vehicles: tuple
    ms_index: int
    config: ScenarioConfig
    camera_mounts: tuple

    @property
    def lanes(self):
        return self.config.lanes

    @property
    def buildings(self):
        return self.config.buildings

    @property
    def rsu_antenna(self) -> np.ndarray:
        return np.asarray(self.config.rsu_position, float)

    @property
    def ms_location(self) -> np.ndarray:
        v = self.vehicles[self.ms_index]
        return self.lanes[v.lane].point(v.s)

    @property
    def ms_pose(self) -> Pose2D:
        x, y = self.ms_location
        return Pose2D(float(x), float(y), self.lanes[self.vehicles[self.ms_index].lane].azimuth)

    @property
    def ms_antenna(self) -> np.ndarray:
        x, y = self.ms_location
        return np.array([x, y, self.vehicles[self.ms_index].kind.height + self.config.antenna_lift])

    def vehicle_cuboids(self) -> list[Cuboid]:
        return [vehicle_cuboid(v, self.lanes) for v in self.vehicles]

    def other_vehicles(self) -> list[tuple[int, Cuboid]]:
        return [(i, vehicle_cuboid(v, self.lanes)) for i, v in enumerate(self.vehicles)
                if i != self.ms_index]

    @property
    def obstacles(self) -> list[Cuboid]:
        """Blockers and reflectors seen by the radio link; the MS body is excluded."""
        return [c for _, c in self.other_vehicles()] + list(self.buildings)

    @property
    def materials(self) -> list[str]:
        return ["metal"] * (len(self.vehicles) - 1) + ["concrete"] * len(self.buildings)


def _place_lane(rng, lengths, s_lo, s_hi, gap):
    """Uniform non-overlapping placement of items with given lengths in [s_lo, s_hi]."""
    n = len(lengths)
    if n == 0:
        return np.empty(0)
    free = (s_hi - s_lo) - float(np.sum(lengths)) - (n - 1) * gap
    if free < 0:
        raise ValueError(f"lane window of {s_hi - s_lo:.1f} m cannot fit {n} vehicles "
                         f"with {gap} m gaps")
    order = rng.permutation(n)
    u = np.sort(rng.uniform(0.0, free, n))
    centers = np.empty(n)
    cursor = s_lo
    for slot, idx in enumerate(order):
        centers[idx] = cursor + u[slot] + lengths[idx] / 2
        cursor += lengths[idx] + gap
    return centers


def spawn_scenario(seed: int, config: ScenarioConfig | None = None) -> Scenario:
    """Random initial scene; identical for identical ``(seed, config)``."""
    cfg = config or ScenarioConfig()
    rng = np.random.default_rng(seed)
    lo_v, hi_v = cfg.speed_range
    ms_lane = cfg.lane(cfg.ms_lane)

    # (kind, lane, speed, group) in generation order; the MS comes first in its group
    drafts = []
    ms_index = -1
    for gi, grp in enumerate(cfg.groups):
        lane_ids = [cfg.lane(l) for l in grp.lanes]
        if gi == cfg.ms_group:
            ms_index = len(drafts)
            drafts.append((KIND_BY_NAME["car"], ms_lane, rng.uniform(lo_v, hi_v), gi))
        for _ in range(grp.count):
            kind = VEHICLE_KINDS[rng.integers(len(VEHICLE_KINDS))]
            lane = lane_ids[rng.integers(len(lane_ids))]
            drafts.append((kind, lane, rng.uniform(lo_v, hi_v), gi))
    if ms_index < 0:
        raise ValueError("ms_group does not name a vehicle group")

    positions = np.empty(len(drafts))
    for lane_idx, ln in enumerate(cfg.lanes):
        members = [i for i, d in enumerate(drafts) if d[1] == lane_idx]
        if not members:
            continue
        window = cfg.groups[drafts[members[0]][3]].window
        s_a, s_b = sorted((ln.s_of_y(window[0]), ln.s_of_y(window[1])))
        lengths = np.array([drafts[i][0].length for i in members])
        positions[members] = _place_lane(rng, lengths, s_a, s_b, cfg.gap_min)
        if lane_idx == ms_lane:
            # slide the lane so the MS starts just before the coverage edge
            lead = rng.uniform(*cfg.ms_entry_lead)
            target = ln.s_of_y(cfg.coverage[2]) - lead
            positions[members] += target - positions[ms_index]

    vehicles = tuple(VehicleState(d[0], d[1], float(positions[i]), float(d[2]), float(d[2]))
                     for i, d in enumerate(drafts))
    ms_kind = drafts[ms_index][0]
    mounts = tuple(default_mounts(ms_kind.height, cfg.num_cameras, cfg.image_width,
                                  cfg.image_height, cfg.camera_lift))
    check_mounts_tile(mounts)
    return Scenario(int(seed), cfg, vehicles, ms_index, mounts)


def step(scenario: Scenario, dt: float) -> Scenario:
    """Advance all vehicles by ``dt`` at their desired speed, clamped to keep ``gap_min``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    gap_min = scenario.config.gap_min
    new = list(scenario.vehicles)
    by_lane: dict[int, list[int]] = {}
    for i, v in enumerate(scenario.vehicles):
        by_lane.setdefault(v.lane, []).append(i)
    for members in by_lane.values():
        members.sort(key=lambda i: -scenario.vehicles[i].s)
        leader = None  # (new_s, speed, length)
        for i in members:
            v = scenario.vehicles[i]
            speed = v.desired_speed
            if leader is not None:
                lead_s, lead_v, lead_len = leader
                limit = lead_s - (lead_len + v.kind.length) / 2
                if v.s + speed * dt > limit - gap_min:
                    keep_gap = (limit - gap_min - v.s) / dt
                    speed = min(v.desired_speed, max(lead_v, keep_gap))
            s_new = v.s + speed * dt
            new[i] = replace(v, s=s_new, speed=speed)
            leader = (s_new, speed, v.kind.length)
    return replace(scenario, vehicles=tuple(new), time=scenario.time + dt)


def snapshot_of(scenario: Scenario, r: int, k: int) -> Snapshot:
    return Snapshot(r, k, k * scenario.config.snapshot_interval, scenario.vehicles,
                    scenario.ms_index, scenario.config, scenario.camera_mounts)


def sample_trajectory(scenario: Scenario) -> list[Snapshot]:
    """Snapshots at multiples of ``T_d`` while the MS is inside the coverage area."""
    cfg = scenario.config
    td = cfg.snapshot_interval
    n_steps = int(math.floor(cfg.horizon / td + 1e-9))
    out: list[Snapshot] = []
    state = scenario
    for k in range(n_steps + 1):
        if state.ms_inside():
            out.append(snapshot_of(state, len(out) + 1, k))
        elif out:
            break
        if k < n_steps:
            state = step(state, td)
    if not out:
        raise ValueError(f"MS never enters the coverage area within {cfg.horizon} s "
                         f"(scenario seed {scenario.seed})")
    return out
