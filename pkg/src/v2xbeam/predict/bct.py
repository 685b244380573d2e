"""Lightweight BCT-group classifier over a short feature sequence.

Input is the time-stacked sequence ``D`` of the last ``S`` snapshots. With
scene images present each SIF is average-pooled and flattened; otherwise the
VDF sequence is used. One ReLU hidden layer feeds a 3-way softmax.
"""
from __future__ import annotations

import numpy as np

from .nn import Adam, check_finite, cross_entropy, glorot, minibatches, softmax

N_GROUPS = 3


def pool_sif(sif: np.ndarray, factor: int) -> np.ndarray:
    """Average-pool the two spatial axes of an (H, W, C) image by ``factor``."""
    h, w, c = sif.shape
    h2, w2 = h // factor, w // factor
    x = sif[: h2 * factor, : w2 * factor].reshape(h2, factor, w2, factor, c)
    return x.mean(axis=(1, 3))


def sequence_features(ds, idx, pool: int = 4):
    """Flattened sequence features and record indices for records with ``r >= S``."""
    from ..dataset import iter_sequences  # local import keeps predict free of dataset deps

    rows, keep = [], []
    for i, window in iter_sequences(ds, idx):
        if ds.has_sif:
            seq = np.stack([pool_sif(ds.records["sif"][k], pool) / 255.0 for k in window])
        else:
            seq = ds.records["vdf"][window].astype(np.float64)
            seq[..., 3] /= np.pi
        rows.append(seq.reshape(-1))
        keep.append(i)
    if not rows:
        return np.empty((0, 0)), np.empty(0, dtype=np.int64)
    return np.stack(rows), np.asarray(keep, dtype=np.int64)


class BctClassifier:
    def __init__(self, n_in: int, hidden: int = 128, params: dict | None = None):
        self.n_in, self.hidden = int(n_in), int(hidden)
        if params is None:
            params = {"W1": np.zeros((n_in, hidden)), "b1": np.zeros(hidden),
                      "W2": np.zeros((hidden, N_GROUPS)), "b2": np.zeros(N_GROUPS)}
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    @classmethod
    def init(cls, n_in: int, hidden: int, seed: int) -> "BctClassifier":
        rng = np.random.default_rng(seed)
        return cls(n_in, hidden, {"W1": glorot(rng, (n_in, hidden)), "b1": np.zeros(hidden),
                                  "W2": glorot(rng, (hidden, N_GROUPS)), "b2": np.zeros(N_GROUPS)})

    def _forward(self, x):
        P = self.params
        pre = x @ P["W1"] + P["b1"]
        hid = np.maximum(pre, 0)
        return hid @ P["W2"] + P["b2"], (x, pre, hid)

    def logits(self, x) -> np.ndarray:
        return self._forward(np.atleast_2d(x))[0]

    def predict_proba(self, x) -> np.ndarray:
        return softmax(self.logits(x), axis=1)

    def predict_group(self, x) -> np.ndarray:
        """Most likely group, 1-based."""
        return np.argmax(self.logits(x), axis=1) + 1

    def loss_and_grads(self, x, groups):
        logits, (x, pre, hid) = self._forward(x)
        loss, dz = cross_entropy(logits, np.asarray(groups) - 1)
        P = self.params
        g = {"W2": hid.T @ dz, "b2": dz.sum(axis=0)}
        dpre = (dz @ P["W2"].T) * (pre > 0)
        g["W1"] = x.T @ dpre
        g["b1"] = dpre.sum(axis=0)
        return loss, g

    def fit(self, x, groups, epochs: int = 40, batch_size: int = 64, lr: float = 1e-3,
            seed: int = 0, opt: Adam | None = None) -> list[float]:
        """Adam on mean cross-entropy; returns the per-epoch mean training loss.

        Pass ``opt`` to keep optimizer state across successive calls.
        """
        x = np.asarray(x, dtype=np.float64)
        groups = np.asarray(groups)
        opt = opt or Adam(self.params, lr)
        rng = np.random.default_rng(seed)
        trace = []
        for ep in range(epochs):
            total = 0.0
            for bi, b in enumerate(minibatches(len(x), batch_size, rng)):
                loss, g = self.loss_and_grads(x[b], groups[b])
                check_finite(loss, f"BCT epoch {ep + 1}, batch {bi}")
                opt.step(self.params, g)
                total += loss * len(b)
            trace.append(total / len(x))
        return trace
