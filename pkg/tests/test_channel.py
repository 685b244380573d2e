import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from v2xbeam.channel import (C_LIGHT, ChannelConfig, PathParam, Scene, assemble_channel,
                             calibrate_noise_power, channel_snapshot, read_channel_dump,
                             steering_vector, tap_sum_channel, trace_paths, ula_angle,
                             write_channel_dump)
from v2xbeam.geometry import Cuboid

CFG = ChannelConfig(num_bs_antennas=8, num_ms_antennas=8, noise_power=1e-12)


def test_steering_vector_known_values():
    v = steering_vector(0.0, 4)
    np.testing.assert_allclose(v, np.full(4, 0.5))
    v = steering_vector(math.pi / 2, 3)
    np.testing.assert_allclose(v * math.sqrt(3), [1, -1, 1], atol=1e-12)
    assert np.linalg.norm(steering_vector(0.3, 64)) == pytest.approx(1.0)


def test_ula_angle():
    assert ula_angle([1.0, 0.0, 0.0]) == 0.0
    assert ula_angle([0.0, 2.0, 0.0]) == pytest.approx(math.pi / 2)
    assert ula_angle([1.0, -1.0, 5.0]) == pytest.approx(-math.pi / 4)


def test_config_validation():
    with pytest.raises(ValueError):
        ChannelConfig(max_reflections=2)
    with pytest.raises(ValueError):
        ChannelConfig().snr_scale
    assert ChannelConfig().gamma("metal") == pytest.approx(0.9)
    assert ChannelConfig().sampling_interval == pytest.approx(1 / (16 * 25e6))


def test_free_space_paths():
    tx, rx = np.array([0.0, 0.0, 3.0]), np.array([10.0, 0.0, 1.5])
    paths = trace_paths(Scene(), tx, rx, CFG)
    assert [p.kind for p in paths] == ["los", "ground_reflection"]
    los, gnd = paths
    d = math.dist(tx, rx)
    assert los.delay == pytest.approx(d / C_LIGHT)
    assert abs(los.gain) == pytest.approx(CFG.wavelength / (4 * math.pi * d))
    d_g = math.hypot(10.0, 4.5)  # image of tx below ground
    assert gnd.delay == pytest.approx(d_g / C_LIGHT)
    assert abs(gnd.gain) == pytest.approx(0.6 * CFG.wavelength / (4 * math.pi * d_g))
    assert los.aoa == los.aod == 0.0


def test_wall_reflection_geometry():
    wall = Cuboid((5.0, 10.0, 5.0), 2.0, 20.0, 10.0)  # face at y=9 facing -Y
    tx, rx = np.array([0.0, 0.0, 2.0]), np.array([10.0, 0.0, 2.0])
    paths = trace_paths(Scene((wall,), ("concrete",)), tx, rx, CFG)
    face = [p for p in paths if p.kind == "face_reflection"]
    assert len(face) == 1
    d = 2 * math.hypot(5.0, 9.0)
    assert face[0].delay == pytest.approx(d / C_LIGHT)
    assert face[0].aod == pytest.approx(math.asin(9.0 / math.hypot(5.0, 9.0)))


def test_blocked_los_and_outage():
    box = Cuboid((5.0, 0.0, 5.0), 2.0, 40.0, 10.0, math.pi / 2)
    tx, rx = np.array([0.0, 0.0, 2.0]), np.array([10.0, 0.0, 2.0])
    paths = trace_paths(Scene((box,), ("metal",)), tx, rx, CFG)
    assert paths == []
    snap = channel_snapshot(Scene((box,), ("metal",)), tx, rx, CFG)
    assert not snap.los_flag
    assert not snap.h.any()


def test_paths_sorted_and_truncated():
    boxes = tuple(Cuboid((5.0, y, 2.0), 2.0, 2.0, 4.0) for y in (-8, -5, 5, 8, 12, -12))
    cfg = ChannelConfig(num_bs_antennas=4, num_ms_antennas=4, max_paths=3)
    paths = trace_paths(Scene(boxes, ("metal",) * 6), [0, 0, 3.0], [10, 0, 1.0], cfg)
    assert len(paths) == 3
    mags = [abs(p.gain) for p in paths]
    assert mags == sorted(mags, reverse=True)


def test_path_param_validation():
    with pytest.raises(ValueError):
        PathParam(1 + 0j, 0.0, 0, 0, "los")
    with pytest.raises(ValueError):
        PathParam(0j, 1e-9, 0, 0, "los")
    with pytest.raises(ValueError):
        PathParam(1 + 0j, 1e-9, 0, 0, "diffraction")


def _random_paths(rng, ts, on_grid=True, n_max=16):
    out = []
    for _ in range(rng.integers(1, 6)):
        tau = (rng.integers(1, n_max) if on_grid else rng.uniform(1, n_max)) * ts
        g = complex(*rng.normal(size=2))
        out.append(PathParam(g, tau, rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), "los"))
    return out


def test_channel_forms_agree_on_grid():
    rng = np.random.default_rng(0)
    ts = CFG.sampling_interval
    for _ in range(30):
        paths = _random_paths(rng, ts)
        a = assemble_channel(paths, CFG)
        b = tap_sum_channel(paths, CFG)
        assert np.abs(a - b).max() / np.abs(a).max() <= 1e-6


def test_channel_forms_off_grid_wide_window():
    """Off-grid delays need many taps for the sinc tails; low subcarriers converge."""
    rng = np.random.default_rng(1)
    ts = CFG.sampling_interval
    K = CFG.num_subcarriers
    taps = np.arange(-4000, 4000)
    for _ in range(5):
        paths = _random_paths(rng, ts, on_grid=False, n_max=8)
        ks = np.arange(K // 2)
        a = assemble_channel(paths, CFG)[ks]
        b = tap_sum_channel(paths, CFG, taps=taps, subcarriers=ks)
        assert np.abs(a - b).max() / np.abs(a).max() < 1e-2


def test_channel_shape_and_rank_one_path():
    p = PathParam(1 + 0j, 1e-8, 0.2, -0.4, "los")
    h = assemble_channel([p], CFG)
    assert h.shape == (16, 8, 8)
    assert np.linalg.matrix_rank(h[3]) == 1
    assert np.linalg.norm(h[0]) == pytest.approx(1.0)


@given(st.integers(1, 4), st.integers(0, 3))
def test_dump_round_trip(n_paths, q):
    rng = np.random.default_rng(n_paths)
    paths = tuple(PathParam(complex(*rng.normal(size=2)), float(rng.uniform(1e-8, 1e-7)),
                            float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)), "face_reflection")
                  for _ in range(n_paths))
    from v2xbeam.channel import ChannelSnapshot
    h = assemble_channel(paths, CFG)
    snap = ChannelSnapshot(paths, h, True)
    buf = io.BytesIO()
    write_channel_dump(buf, q, 7, snap)
    write_channel_dump(buf, q, 8, ChannelSnapshot((), np.zeros_like(h), False))
    buf.seek(0)
    got = list(read_channel_dump(buf, CFG))
    assert [(g[0], g[1]) for g in got] == [(q, 7), (q, 8)]
    assert got[0][2].paths == paths
    np.testing.assert_array_equal(got[0][2].h, h.astype(np.complex64))
    assert got[1][2].los_flag is False and got[1][2].paths == ()


def test_dump_truncated():
    from v2xbeam.channel import ChannelSnapshot
    buf = io.BytesIO()
    write_channel_dump(buf, 0, 1, ChannelSnapshot((), np.zeros((16, 8, 8), complex), True))
    data = buf.getvalue()[:-10]
    with pytest.raises(ValueError):
        list(read_channel_dump(io.BytesIO(data), CFG))


def test_noise_calibration_hits_target():
    rng = np.random.default_rng(2)
    cfg = ChannelConfig(num_bs_antennas=4, num_ms_antennas=4)
    hs = [rng.normal(size=(16, 4, 4)) + 1j * rng.normal(size=(16, 4, 4)) for _ in range(5)]
    total = sum(float(np.sum(np.abs(h) ** 2)) for h in hs)
    s2 = calibrate_noise_power(total, len(hs), cfg)
    snr = cfg.per_subcarrier_power / (16 * s2 * len(hs)) * total
    assert 10 * math.log10(snr) == pytest.approx(29.5)
    with pytest.raises(ValueError):
        calibrate_noise_power(0.0, 5, cfg)
