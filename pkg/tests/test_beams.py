import math

import numpy as np
import pytest

from v2xbeam.beams import (codebook_angle, dft_codebook, pair_of, rate, rate_table,
                           restrict_pairs, sweep_optimal, top_b_from_table, top_b_rate)
from v2xbeam.channel import ChannelConfig

CFG = ChannelConfig(num_bs_antennas=8, num_ms_antennas=8, noise_power=0.1)


def _h(rng, k=16, nu=8, nb=8):
    return rng.normal(size=(k, nu, nb)) + 1j * rng.normal(size=(k, nu, nb))


def test_codebook_known_beams():
    cb = dft_codebook(64, 64)
    np.testing.assert_allclose(cb[32], np.full(64, 1 / 8))  # beam 33, broadside
    assert codebook_angle(1, 64) == pytest.approx(-math.pi / 2)
    m = np.arange(64)
    np.testing.assert_allclose(cb[0] * 8, np.exp(-1j * math.pi * m), atol=1e-9)
    with pytest.raises(ValueError):
        dft_codebook(4, 0)


def test_codebook_beams_distinct():
    cb = dft_codebook(16, 32).matrix
    gram = np.abs(cb.conj().T @ cb)
    np.fill_diagonal(gram, 0)
    assert gram.max() < 1 - 1e-9


def test_rate_table_matches_scalar():
    rng = np.random.default_rng(0)
    h = _h(rng)
    tx, rx = dft_codebook(8, 8), dft_codebook(8, 6)
    table = rate_table(h, tx, rx, CFG)
    for p in range(len(table)):
        b, u = pair_of(p, rx.size)
        assert table[p] == pytest.approx(rate(h, tx[b], rx[u], CFG), rel=1e-12)


def test_sweep_matches_double_loop():
    rng = np.random.default_rng(1)
    tx, rx = dft_codebook(8, 8), dft_codebook(8, 8)
    for _ in range(10):
        h = _h(rng)
        best = (-1, -math.inf)
        for b in range(8):
            for u in range(8):
                r = rate(h, tx[b], rx[u], CFG)
                if r > best[1]:
                    best = (b * 8 + u, r)
        assert sweep_optimal(h, tx, rx, CFG) == best


def test_sweep_ties_and_zero_channel():
    tx, rx = dft_codebook(8, 8), dft_codebook(8, 8)
    assert sweep_optimal(np.zeros((16, 8, 8), complex), tx, rx, CFG) == (0, 0.0)
    # identical columns produce exact ties; the lowest index must win
    h = np.zeros((16, 8, 8), complex)
    h[:, :, :] = np.outer(rx[2], tx[5].conj())
    p, r = sweep_optimal(h, tx, rx, CFG)
    assert pair_of(p, 8) == (5, 2)


def test_restrict_and_top_b():
    np.testing.assert_array_equal(restrict_pairs([5, 3, 5, 9]), [3, 5, 9])
    with pytest.raises(ValueError):
        restrict_pairs([])
    rates = np.array([1.0, 4.0, 2.0, 3.0])
    assert top_b_from_table(rates, [2, 3, 1], 1) == 2.0
    assert top_b_from_table(rates, [2, 3, 1], 2) == 3.0
    assert top_b_from_table(rates, [2, 3, 1], 10) == 4.0
    with pytest.raises(ValueError):
        top_b_from_table(rates, [0], 0)


def test_top_b_rate_monotone_and_reaches_optimum():
    rng = np.random.default_rng(2)
    h = _h(rng)
    tx, rx = dft_codebook(8, 8), dft_codebook(8, 8)
    p_opt, r_opt = sweep_optimal(h, tx, rx, CFG)
    ranked = list(rng.permutation(64))
    vals = [top_b_rate(h, ranked, B, CFG, tx, rx) for B in range(1, 65)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == r_opt
