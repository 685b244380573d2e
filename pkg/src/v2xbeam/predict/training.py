"""Training loops with best-epoch selection on validation Top-1 ATRR."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..evaluate import atrr_selection
from ..features import resample_balanced
from .bct import BctClassifier, sequence_features
from .nn import check_finite, make_optimizer, minibatches
from .vdban import VdbanModel, VdbanSpec


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    label_key: str = "beam_label"
    resample: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.label_key not in ("beam_label", "bct_group"):
            raise ValueError("label_key must be 'beam_label' or 'bct_group'")


def vdban_spec_from(ds, arch: dict) -> VdbanSpec:
    return VdbanSpec(G=ds.grid.G, n_out=ds.n_pairs, dims=tuple(arch["dims"]),
                     key_dims=tuple(arch["key_dims"]), heads=int(arch["heads"]),
                     ff_dim=int(arch["ff_dim"]), head=tuple(arch["head"]))


def with_signal(records, idx) -> np.ndarray:
    """Drop outage records from a supervised index set.

    In an outage every pair rates zero, so the stored label is arbitrary and
    would only teach the model a meaningless class. Evaluation keeps them;
    they add zero to both sides of every rate ratio.
    """
    idx = np.asarray(idx, dtype=np.int64)
    return idx[records["optimal_rate"][idx] > 0]


def validation_atrr(model, ds, idx) -> float:
    rec = ds.records[idx]
    ranked = model.rank(rec["vdf"], rec["ms_location"])
    return atrr_selection(rec["rates"], rec["optimal_rate"], ranked, 1).value


def train_vdban(ds, train_idx, val_idx, spec: VdbanSpec, cfg: TrainConfig,
                dtype=np.float32, progress=None):
    """Train from a seeded init; returns (best model, per-epoch trace rows)."""
    train_idx = np.asarray(train_idx)
    val_idx = np.asarray(val_idx)
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ValueError("train and validation splits must be nonempty")
    rec = ds.records
    train_idx = with_signal(rec, train_idx)
    if len(train_idx) == 0:
        raise ValueError("every training record is an outage")
    locs = rec["ms_location"][train_idx]
    scale = locs.std(axis=0)
    scale[scale == 0] = 1.0
    model = VdbanModel.init(spec, cfg.seed, dtype, locs.mean(axis=0), scale)
    rng = np.random.default_rng(cfg.seed)
    if cfg.resample:
        train_idx = train_idx[resample_balanced(rec["bct_group"][train_idx], cfg.seed)]
    vdf = rec["vdf"][train_idx]
    loc = rec["ms_location"][train_idx]
    y = rec[cfg.label_key][train_idx]
    opt = make_optimizer(cfg.optimizer, model.params, cfg.lr)
    best, best_score, trace = model.copy(), -1.0, []
    for ep in range(1, cfg.epochs + 1):
        total = 0.0
        for bi, b in enumerate(minibatches(len(y), cfg.batch_size, rng)):
            loss, grads = model.loss_and_grads(vdf[b], loc[b], y[b])
            check_finite(loss, f"epoch {ep}, batch {bi} (lr={cfg.lr}, batch size {len(b)})")
            opt.step(model.params, grads)
            total += loss * len(b)
        score = validation_atrr(model, ds, val_idx)
        trace.append({"epoch": ep, "train_loss": total / len(y), "val_top1_atrr": score})
        if score > best_score:
            best, best_score = model.copy(), score
        if progress:
            progress(trace[-1])
    return best, trace


def train_bct(ds, train_idx, val_idx, hidden: int, cfg: TrainConfig, pool: int = 4,
              progress=None):
    """BCT-group classifier; model chosen by validation group accuracy."""
    x, keep = sequence_features(ds, train_idx, pool)
    xv, keep_v = sequence_features(ds, val_idx, pool)
    if len(keep) == 0 or len(keep_v) == 0:
        raise ValueError("no training or validation record has a full feature sequence")
    groups = ds.records["bct_group"][keep]
    if cfg.resample:
        sel = resample_balanced(groups, cfg.seed)
        x, groups = x[sel], groups[sel]
    gv = ds.records["bct_group"][keep_v]
    model = BctClassifier.init(x.shape[1], hidden, cfg.seed)
    opt = make_optimizer(cfg.optimizer, model.params, cfg.lr)
    best_params, best_acc, trace = None, -1.0, []
    for ep in range(1, cfg.epochs + 1):
        loss = model.fit(x, groups, 1, cfg.batch_size, cfg.lr, seed=cfg.seed + ep, opt=opt)[0]
        acc = float(np.mean(model.predict_group(xv) == gv))
        trace.append({"epoch": ep, "train_loss": loss, "val_bctpa": acc})
        if acc > best_acc:
            best_params = {k: v.copy() for k, v in model.params.items()}
            best_acc = acc
        if progress:
            progress(trace[-1])
    return BctClassifier(model.n_in, model.hidden, best_params), trace
