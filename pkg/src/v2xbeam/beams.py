"""DFT codebooks, achievable rate and the exhaustive beam-pair sweep.

Beam pairs are flattened tx-major: ``pair = tx_index * n_rx + rx_index``,
with 0-based indices into the two codebooks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import ChannelConfig, steering_vector


@dataclass(frozen=True)
class Codebook:
    matrix: np.ndarray  # (n_antennas, n_cb); column b is beam b

    @property
    def size(self) -> int:
        return self.matrix.shape[1]

    def __getitem__(self, b: int) -> np.ndarray:
        return self.matrix[:, b]

    def __len__(self) -> int:
        return self.size


def codebook_angle(b: int, n_cb: int) -> float:
    """Pointing angle of 1-based beam ``b``."""
    return (2 * b - 2 - n_cb) / (2 * n_cb) * math.pi


def dft_codebook(n: int, n_cb: int) -> Codebook:
    if n_cb < 1:
        raise ValueError("codebook size must be >= 1")
    cols = [steering_vector(codebook_angle(b, n_cb), n) for b in range(1, n_cb + 1)]
    return Codebook(np.stack(cols, axis=1))


def codebooks_for(cfg: ChannelConfig, n_cb_tx: int | None = None, n_cb_rx: int | None = None):
    """Transmit (RSU, N_B) and receive (MS, N_U) codebooks."""
    return (dft_codebook(cfg.num_bs_antennas, n_cb_tx or cfg.num_bs_antennas),
            dft_codebook(cfg.num_ms_antennas, n_cb_rx or cfg.num_ms_antennas))


def rate(h: np.ndarray, w_tx: np.ndarray, w_rx: np.ndarray, cfg: ChannelConfig) -> float:
    """Mean over subcarriers of ``log2(1 + P/sigma^2 |w_rx^H H_k w_tx|^2)`` in bit/s/Hz."""
    g = (h @ w_tx) @ w_rx.conj()
    return float(np.mean(np.log2(1.0 + cfg.snr_scale * np.abs(g) ** 2)))


def effective_gains(h: np.ndarray, cb_tx: Codebook, cb_rx: Codebook) -> np.ndarray:
    """``G[k, u, b] = w_rx,u^H H_k w_tx,b``."""
    return cb_rx.matrix.conj().T[None] @ h @ cb_tx.matrix[None]


def rate_table(h: np.ndarray, cb_tx: Codebook, cb_rx: Codebook, cfg: ChannelConfig) -> np.ndarray:
    """Rates for every pair, flattened tx-major (length n_tx * n_rx)."""
    g = effective_gains(h, cb_tx, cb_rx)
    r = np.mean(np.log2(1.0 + cfg.snr_scale * np.abs(g) ** 2), axis=0)  # (u, b)
    return np.ascontiguousarray(r.T).reshape(-1)


def pair_of(p: int, n_rx: int) -> tuple[int, int]:
    return divmod(int(p), n_rx)


def sweep_optimal(h: np.ndarray, cb_tx: Codebook, cb_rx: Codebook,
                  cfg: ChannelConfig) -> tuple[int, float]:
    """Exhaustive argmax over all pairs; the lowest pair index wins ties.

    The vectorized table only shortlists pairs; the winner is decided with
    :func:`rate` so the result is identical to a scalar double loop.
    """
    if cb_tx.size == 0 or cb_rx.size == 0:
        raise ValueError("codebooks must be nonempty")
    table = rate_table(h, cb_tx, cb_rx, cfg)
    top = table.max()
    if top == 0.0:  # zero channel: every pair ties at rate 0
        return 0, rate(h, cb_tx[0], cb_rx[0], cfg)
    shortlist = np.flatnonzero(table >= top - 1e-9 * max(1.0, abs(top)))
    best_p, best_r = -1, -math.inf
    for p in shortlist:  # ascending, so strict > keeps the lowest index
        b, u = pair_of(p, cb_rx.size)
        r = rate(h, cb_tx[b], cb_rx[u], cfg)
        if r > best_r:
            best_p, best_r = int(p), r
    return best_p, best_r


def restrict_pairs(labels: Sequence[int]) -> np.ndarray:
    """Sorted distinct optimal pair indices observed in a dataset."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("need at least one label")
    return np.unique(labels)


def top_b_from_table(rates: np.ndarray, ranked: Sequence[int], B: int) -> float:
    """Best rate among the first ``B`` ranked entries of a per-pair rate row."""
    if B < 1:
        raise ValueError("B must be >= 1")
    ranked = list(ranked)[:B]
    if not ranked:
        raise ValueError("empty ranking")
    return max(float(rates[p]) for p in ranked)


def top_b_rate(h: np.ndarray, ranked_pairs: Sequence[int], B: int, cfg: ChannelConfig,
               cb_tx: Codebook | None = None, cb_rx: Codebook | None = None) -> float:
    """Rate after sweeping the first ``B`` candidate pairs and keeping the best."""
    if B < 1:
        raise ValueError("B must be >= 1")
    if cb_tx is None or cb_rx is None:
        cb_tx, cb_rx = codebooks_for(cfg)
    best = -math.inf
    for p in list(ranked_pairs)[:B]:
        b, u = pair_of(p, cb_rx.size)
        best = max(best, rate(h, cb_tx[b], cb_rx[u], cfg))
    if best == -math.inf:
        raise ValueError("empty ranking")
    return best
