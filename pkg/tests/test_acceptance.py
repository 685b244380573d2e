"""Acceptance criteria 1-9. Each test records one PASS/FAIL line, printed at the end of the run."""
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from gradcheck import max_relative_error, toy_problem
from v2xbeam.beams import dft_codebook, sweep_optimal
from v2xbeam.channel import ChannelConfig, PathParam, assemble_channel, tap_sum_channel
from v2xbeam.config import RunConfig, sub_seed
from v2xbeam.dataset import generate
from v2xbeam.evaluate import (ScenarioTrace, atrr_policy, atrr_selection, bctpa, fixed_policy,
                              perfect_policy, robustness_sweep)
from v2xbeam.features import group_bct, group_min_bct, label_bct, label_bct_all
from v2xbeam.geometry import (CameraMount, Cuboid, ccs_to_mcs, mcs_to_ccs, mcs_to_rcs,
                              rcs_to_mcs, segment_blocked)
from v2xbeam.predict.baselines import KnnLocationBaseline
from v2xbeam.predict.training import TrainConfig, train_vdban, vdban_spec_from, with_signal


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    assert ok, detail


# -- 1 ------------------------------------------------------------------------

def _brute_force(h, cb_tx, cb_rx, snr):
    best_p, best_r = -1, -math.inf
    for b in range(cb_tx.size):
        hw = h @ cb_tx[b]
        for u in range(cb_rx.size):
            g = hw @ cb_rx[u].conj()
            r = float(np.mean(np.log2(1.0 + snr * np.abs(g) ** 2)))
            if r > best_r:
                best_p, best_r = b * cb_rx.size + u, r
    return best_p, best_r


def _random_channel(rng, cfg):
    paths = [PathParam(complex(*rng.normal(size=2)) * 1e-4, rng.uniform(2e-8, 2e-7),
                       rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), "los")
             for _ in range(rng.integers(1, 6))]
    h = assemble_channel(paths, cfg)
    if rng.random() < 0.3:  # unstructured channels too
        h = h + 1e-5 * (rng.normal(size=h.shape) + 1j * rng.normal(size=h.shape))
    return h


def test_criterion_1_oracle_exactness():
    cfg = ChannelConfig(noise_power=1e-10)
    cb_tx, cb_rx = dft_codebook(64, 64), dft_codebook(64, 64)
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(50):
        h = _random_channel(rng, cfg)
        mismatches += sweep_optimal(h, cb_tx, cb_rx, cfg) != _brute_force(h, cb_tx, cb_rx, cfg.snr_scale)
    dt = time.perf_counter() - t0
    record(1, mismatches == 0 and dt < 60,
           f"{50 - mismatches}/50 exact (index and rate) in {dt:.1f} s (limit 60 s)")


# -- 2 ------------------------------------------------------------------------

def test_criterion_2_channel_form_equivalence():
    cfg = ChannelConfig()
    ts = cfg.sampling_interval
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        paths = [PathParam(complex(*rng.normal(size=2)), int(rng.integers(1, cfg.taps)) * ts,
                           rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), "los")
                 for _ in range(rng.integers(1, 6))]
        a = assemble_channel(paths, cfg)
        b = tap_sum_channel(paths, cfg)
        worst = max(worst, float(np.abs(a - b).max() / np.abs(b).max()))
    record(2, worst <= 1e-6, f"max relative error {worst:.2e} over 100 on-grid path sets (limit 1e-6)")


# -- 3 ------------------------------------------------------------------------

def test_criterion_3_gradient_fidelity():
    t0 = time.perf_counter()
    err = max_relative_error(*toy_problem(seed=7))
    dt = time.perf_counter() - t0
    record(3, err < 1e-4 and dt < 30,
           f"max relative error {err:.2e} (limit 1e-4), float64, {dt:.1f} s (limit 30 s)")


# -- 4 ------------------------------------------------------------------------

def _inside_by_sampling(a, b, box, step=1e-3):
    n = max(2, int(math.ceil(np.linalg.norm(b - a) / step)))
    t = (np.arange(1, n) / n)[:, None]
    rel = a + t * (b - a) - np.asarray(box.center)
    c, s = math.cos(box.azimuth), math.sin(box.azimuth)
    lx, ly = c * rel[:, 0] - s * rel[:, 1], s * rel[:, 0] + c * rel[:, 1]
    h = box.half_extents
    return bool(((np.abs(lx) < h[0]) & (np.abs(ly) < h[1]) & (np.abs(rel[:, 2]) < h[2])).any())


def test_criterion_4_round_trips_and_blockage():
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(100_000):
        mount = CameraMount((*rng.uniform(-1, 1, 2), rng.uniform(1, 3)), rng.uniform(-math.pi, math.pi))
        ms = np.array([*rng.uniform(-50, 50, 2), 0.0])
        p = rng.uniform(-60, 60, 3)
        az = rng.uniform(-math.pi, math.pi)
        p_m, a_m = ccs_to_mcs(p, az, mount)
        p_r = mcs_to_rcs(p_m, ms)
        back, a_c = mcs_to_ccs(rcs_to_mcs(p_r, ms), a_m, mount)
        worst = max(worst, float(np.abs(back - p).max()))
    disagree = 0
    for _ in range(1000):
        box = Cuboid(tuple(rng.uniform(-3, 3, 3)), *rng.uniform(0.5, 5, 3), rng.uniform(-math.pi, math.pi))
        a, b = rng.uniform(-8, 8, 3), rng.uniform(-8, 8, 3)
        disagree += segment_blocked(a, b, [box]) != _inside_by_sampling(a, b, box)
    record(4, worst <= 1e-12 and disagree == 0,
           f"round-trip error {worst:.1e} m over 1e5 poses (limit 1e-12); "
           f"{disagree} blockage disagreements in 1000 pairs (limit 0)")


# -- 5 ------------------------------------------------------------------------

def _traces(ds, idx):
    out = []
    for q in np.unique(ds.records["q"][idx]):
        r = ds.records[idx[ds.records["q"][idx] == q]]
        out.append(ScenarioTrace(r["rates"], r["beam_label"], r["optimal_rate"], r["bct_label"]))
    return out


def test_criterion_5_metric_identities(small_dataset):
    ds = small_dataset
    idx = np.arange(len(ds.records))
    rec = ds.records
    ranked = np.tile(np.arange(ds.n_pairs), (len(idx), 1))
    ranked[:, 0], ranked[idx, rec["beam_label"]] = rec["beam_label"], 0
    atrr_oracle = atrr_selection(rec["rates"], rec["optimal_rate"], ranked, 1).value
    traces = _traces(ds, idx)
    perfect0 = atrr_policy(traces, perfect_policy(traces), 0.0).value
    always = {t: atrr_policy(traces, fixed_policy(1), t).value for t in (0.25, 1 / 3, 0.5)}
    always_ok = all(v == 1 - t for t, v in always.items())
    perfect_bctpa = bctpa(rec["bct_label"], group_bct(rec["bct_label"]), rec["r"], 3).value
    ok = atrr_oracle == 1.0 and perfect0 == 1.0 and always_ok and perfect_bctpa == 1.0
    record(5, ok, f"oracle ATRR={atrr_oracle!r}, perfect-BCT ATRR_p(T_b=0)={perfect0!r}, "
                  f"always-align ATRR_p==1-T_b/T_d: {always_ok}, perfect BCTPA={perfect_bctpa!r}")


# -- 6, 7, 8 on one generated dataset -------------------------------------------

TOY_ARCH = dict(dims=[32, 64], key_dims=[8, 16], heads=2, ff_dim=64, head=[256, 256])


@pytest.fixture(scope="module")
def pipeline():
    t0 = time.perf_counter()
    cfg = RunConfig({"scenarios": 200, "features": {"sif": False}})
    ds = generate(cfg)
    t_gen = time.perf_counter() - t0
    tr, va, te = (ds.split_indices(s) for s in ("train", "validation", "test"))
    tcfg = TrainConfig(epochs=30, batch_size=64, lr=1e-3, seed=sub_seed(cfg.seed, "train_vdban") % 2**32)
    model, _ = train_vdban(ds, tr, va, vdban_spec_from(ds, TOY_ARCH), tcfg)
    ref = with_signal(ds.records, tr)
    knn = KnnLocationBaseline(ds.records["ms_location"][ref], ds.records["beam_label"][ref], ds.n_pairs, 5)
    rec = ds.records[te]
    ranks = {"vdban": model.rank(rec["vdf"], rec["ms_location"]),
             "knn": knn.rank(rec["vdf"], rec["ms_location"])}
    return dict(cfg=cfg, ds=ds, te=te, rec=rec, model=model, ranks=ranks, t0=t0, t_gen=t_gen)


@pytest.mark.slow
def test_criterion_6_directional_learning(pipeline):
    ds, rec, ranks = pipeline["ds"], pipeline["rec"], pipeline["ranks"]
    los = rec["los"].astype(bool)
    curves = {}
    for name, rk in ranks.items():
        curves[name] = [atrr_selection(rec["rates"], rec["optimal_rate"], rk, B, los, "nlos").value
                        for B in (1, 2, 3, 5, 10)]
        curves[name + "_all"] = [atrr_selection(rec["rates"], rec["optimal_rate"], rk, B).value
                                 for B in (1, 2, 3, 5, 10)]
    monotone = all(all(a <= b for a, b in zip(c, c[1:])) for c in curves.values())
    gap = curves["vdban"][0] - curves["knn"][0]
    elapsed = time.perf_counter() - pipeline["t0"]
    n_q = len(np.unique(ds.records["q"]))
    record(6, gap >= 0.05 and monotone and elapsed <= 1800 and n_q >= 200,
           f"{n_q} scenarios / {len(ds.records)} records; NLOS Top-1 VDBAN {curves['vdban'][0]:.3f} "
           f"vs k-NN {curves['knn'][0]:.3f} (gap {100 * gap:+.1f} pp, need >= +5); "
           f"Top-B nondecreasing: {monotone}; end-to-end {elapsed:.0f} s (limit 1800)")


@pytest.mark.slow
def test_criterion_7_bct_tradeoff(pipeline, small_dataset):
    ds, te = pipeline["ds"], pipeline["te"]
    traces = _traces(ds, te)
    curve = [atrr_policy(traces, fixed_policy(m), 1 / 3).value for m in range(1, 9)]
    peak = 1 + int(np.argmax(curve))
    dominance = []
    for d in (ds, small_dataset):
        for idx in (np.arange(len(d.records)), d.split_indices("test")):
            tr = _traces(d, idx)
            for t in (1 / 3, 0.5):
                dominance.append(atrr_policy(tr, perfect_policy(tr), t).value
                                 >= atrr_policy(tr, fixed_policy(1), t).value)
    record(7, peak >= 2 and all(dominance),
           f"fixed-M_f ATRR_p at T_b/T_d=1/3 peaks at M_f={peak} (need >= 2): "
           f"{[round(v, 3) for v in curve]}; perfect-BCT >= M_f=1 on every dataset: {all(dominance)}")


@pytest.mark.slow
def test_criterion_8_robustness(pipeline):
    ds, te, rec, model = pipeline["ds"], pipeline["te"], pipeline["rec"], pipeline["model"]
    los = rec["los"].astype(bool)
    seeds = [sub_seed(pipeline["cfg"].seed, "location_noise", k) for k in range(2)]

    def run():
        return robustness_sweep(rec["vdf"], rec["ms_location"], los, rec["rates"], rec["optimal_rate"],
                                model.rank, lambda k, loc: ds.vdf_at(te[k], loc), [0.0, 0.5], seeds, 5)

    first, second = run(), run()
    nlos = {r.params["sigma_c"]: r.value for r in first if r.subset == "nlos"}
    same = [(r.value, r.n, r.params) for r in first] == [(r.value, r.n, r.params) for r in second]
    record(8, nlos[0.5] <= nlos[0.0] and same,
           f"NLOS Top-5 ATRR sigma_c=0: {nlos[0.0]:.4f}, sigma_c=0.5 m: {nlos[0.5]:.4f}; "
           f"bitwise reproducible: {same}")


# -- 9 ------------------------------------------------------------------------

def test_criterion_9_label_correctness():
    rng = np.random.default_rng(909)
    mismatches = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 60))
        labels = rng.integers(0, int(rng.integers(1, 5)), n)
        all_m = label_bct_all(labels)
        for r in range(1, n + 1):
            m = 1
            while r - 1 + m < n and labels[r - 1 + m] == labels[r - 1]:
                m += 1
            mismatches += (m != all_m[r - 1]) + (r % 7 == 1 and label_bct(labels, r) != m)
    groups_ok = all(group_bct(m) == (1 if m == 1 else 2 if m == 2 else 3) for m in range(1, 51))
    groups_ok &= [group_min_bct(g) for g in (1, 2, 3)] == [1, 2, 3]
    record(9, mismatches == 0 and groups_ok,
           f"{mismatches} mismatches vs brute-force scanner on 1e4 sequences; "
           f"groups {{1}},{{2}},{{3+}} exact for M=1..50: {groups_ok}")
