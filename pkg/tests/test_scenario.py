import math
from dataclasses import replace

import numpy as np
import pytest

from v2xbeam.scenario import (KIND_BY_NAME, ScenarioConfig, VehicleGroup, VehicleState,
                              sample_trajectory, spawn_scenario, step)


def test_spawn_is_deterministic():
    a, b = spawn_scenario(42), spawn_scenario(42)
    assert a.vehicles == b.vehicles
    assert spawn_scenario(43).vehicles != a.vehicles


def test_spawn_layout():
    sc = spawn_scenario(3)
    cfg = sc.config
    assert len(sc.vehicles) == 1 + sum(g.count for g in cfg.groups)
    ms = sc.vehicles[sc.ms_index]
    assert ms.kind.name == "car"
    assert cfg.lanes[ms.lane].id == "ST1R-0"
    # MS starts at most ms_entry_lead before the coverage edge
    y = sc.ms_location[1]
    assert cfg.coverage[2] - cfg.ms_entry_lead[1] - 1e-9 <= y <= cfg.coverage[2] + 1e-9
    for i, v in enumerate(sc.vehicles):
        assert cfg.lanes[v.lane].contains_footprint(sc.cuboid(i))
        assert cfg.speed_range[0] <= v.speed <= cfg.speed_range[1]


def test_no_initial_overlap():
    sc = spawn_scenario(9)
    by_lane = {}
    for v in sc.vehicles:
        by_lane.setdefault(v.lane, []).append(v)
    for members in by_lane.values():
        members.sort(key=lambda v: v.s)
        for a, b in zip(members, members[1:]):
            gap = (b.s - b.kind.length / 2) - (a.s + a.kind.length / 2)
            assert gap >= sc.config.gap_min - 1e-9


def _single(vehicles, lane=3):
    cfg = ScenarioConfig(groups=(VehicleGroup(("ST1R-0",), 0, (-10, 10)),))
    sc = spawn_scenario(0, replace(cfg, ms_group=0))
    return replace(sc, vehicles=tuple(vehicles), ms_index=0)


def test_step_constant_speed():
    car = KIND_BY_NAME["car"]
    sc = _single([VehicleState(car, 3, 100.0, 10.0, 10.0)])
    nxt = step(sc, 0.05)
    assert math.isclose(nxt.vehicles[0].s - 100.0, 0.5)
    assert math.isclose(nxt.time, 0.05)


def test_step_follower_clamped_to_leader():
    car = KIND_BY_NAME["car"]
    leader = VehicleState(car, 3, 100.0, 5.0, 5.0)
    follower = VehicleState(car, 3, 100.0 - car.length - 1.0, 15.0, 15.0)
    nxt = step(_single([follower, leader]), 0.05)
    assert nxt.vehicles[0].speed == pytest.approx(5.0)


def test_step_rejects_bad_dt():
    with pytest.raises(ValueError):
        step(spawn_scenario(0), 0.0)


def test_trajectory_inside_coverage_and_times():
    snaps = sample_trajectory(spawn_scenario(5))
    assert 20 <= len(snaps) <= 120
    td = snaps[0].config.snapshot_interval
    xmin, xmax, ymin, ymax = snaps[0].config.coverage
    for i, s in enumerate(snaps):
        assert s.r == i + 1
        assert abs(s.time - round(s.time / td) * td) < 1e-12
        x, y = s.ms_location
        assert xmin <= x <= xmax and ymin <= y <= ymax
    steps = [s.step for s in snaps]
    assert steps == list(range(steps[0], steps[0] + len(steps)))


def test_snapshot_geometry():
    snap = sample_trajectory(spawn_scenario(5))[0]
    assert snap.rsu_antenna[2] == 3.0
    ms_box = snap.vehicle_cuboids()[snap.ms_index]
    assert snap.ms_antenna[2] == pytest.approx(ms_box.height + 0.05)
    assert len(snap.other_vehicles()) == len(snap.vehicles) - 1
    assert len(snap.obstacles) == len(snap.materials)
    assert ms_box not in [b for _, b in snap.other_vehicles()]


def test_trajectory_never_entering_raises():
    cfg = replace(ScenarioConfig(), horizon=0.1, ms_entry_lead=(50.0, 60.0))
    with pytest.raises(ValueError, match="never enters"):
        sample_trajectory(spawn_scenario(1, cfg))
