"""Transformer-fusion beam classifier over the VDF and the MS location.

Architecture (defaults in brackets):

* VDF encoder: a kernel-1 convolution mapping the 4 columns of each grid row to
  one value, ReLU, then an affine map G -> D0 giving ``f``.
* Location encoder: affine map of the normalized (x, y) to D0 giving ``u``.
* Attention blocks [D=64, d=16 then D=128, d=32; h=4]: ``[u; f]`` goes through
  multi-head self-attention with output map ``W_O`` and a residual, then a
  feed-forward map shared by both rows, also with a residual. A linear
  projection sits in front of a block whose width differs from its input.
* Head: ``u + f`` through ReLU layers [1024, 1024] and a final affine layer.

All gradients are written out by hand.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .nn import cross_entropy, glorot, softmax

AZIMUTH_SCALE = math.pi  # VDF azimuth column is divided by this before the encoder


@dataclass(frozen=True)
class VdbanSpec:
    G: int
    n_out: int
    dims: tuple = (64, 128)
    key_dims: tuple = (16, 32)
    heads: int = 4
    ff_dim: int = 256
    head: tuple = (1024, 1024)

    def __post_init__(self):
        if len(self.dims) != len(self.key_dims) or not self.dims:
            raise ValueError("dims and key_dims must be nonempty and of equal length")
        if self.heads < 1 or self.G < 1 or self.n_out < 1:
            raise ValueError("heads, G and n_out must be >= 1")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "key_dims", tuple(int(d) for d in self.key_dims))
        object.__setattr__(self, "head", tuple(int(d) for d in self.head))

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def param_shapes(spec: VdbanSpec) -> list[tuple[str, tuple]]:
    """Every trainable tensor in its declared (checkpoint) order."""
    D0 = spec.dims[0]
    out = [("conv_w", (4,)), ("conv_b", ()), ("f_W", (spec.G, D0)), ("f_b", (D0,)),
           ("loc_W", (2, D0)), ("loc_b", (D0,))]
    prev = D0
    for k, (D, d) in enumerate(zip(spec.dims, spec.key_dims)):
        p = f"blk{k}."
        if D != prev:
            out += [(p + "proj_W", (prev, D)), (p + "proj_b", (D,))]
        h = spec.heads
        out += [(p + "Wq", (h, D, d)), (p + "Wk", (h, D, d)), (p + "Wv", (h, D, d)),
                (p + "Wo", (h * d, D)), (p + "ff1_W", (D, spec.ff_dim)), (p + "ff1_b", (spec.ff_dim,)),
                (p + "ff2_W", (spec.ff_dim, D)), (p + "ff2_b", (D,))]
        prev = D
    for i, n in enumerate(spec.head):
        out += [(f"head{i}_W", (prev, n)), (f"head{i}_b", (n,))]
        prev = n
    out += [("out_W", (prev, spec.n_out)), ("out_b", (spec.n_out,))]
    return out


# -- attention primitives (single sample, used for documentation and tests) ----

def attention_forward(u, f, Wq, Wk, Wv):
    """One head of self-attention over the two rows ``[u; f]``."""
    X = np.stack([u, f])
    Q, K, V = X @ Wq, X @ Wk, X @ Wv
    A = softmax(Q @ K.T / math.sqrt(Wq.shape[1]), axis=-1)
    out = A @ V
    return out[0], out[1]


def multihead_forward(u, f, block: dict):
    """Full block on one sample: heads, ``W_O``, residual, shared feed-forward, residual."""
    X = np.stack([u, f])[None]
    Y, _ = _block_forward(X, block)
    return Y[0, 0], Y[0, 1]


def _block_forward(X, P):
    Wq, Wk, Wv, Wo = P["Wq"], P["Wk"], P["Wv"], P["Wo"]
    h, _, d = Wq.shape
    B = X.shape[0]
    Q = np.einsum("btD,hDd->bhtd", X, Wq)
    K = np.einsum("btD,hDd->bhtd", X, Wk)
    V = np.einsum("btD,hDd->bhtd", X, Wv)
    A = softmax(Q @ K.transpose(0, 1, 3, 2) / math.sqrt(d), axis=-1)
    O = A @ V
    C = O.transpose(0, 2, 1, 3).reshape(B, 2, h * d)
    Y = X + C @ Wo
    H1pre = Y @ P["ff1_W"] + P["ff1_b"]
    H1 = np.maximum(H1pre, 0)
    out = Y + H1 @ P["ff2_W"] + P["ff2_b"]
    return out, (X, Q, K, V, A, C, Y, H1pre, H1)


def _block_backward(dOut, P, cache):
    X, Q, K, V, A, C, Y, H1pre, H1 = cache
    Wq, Wk, Wv, Wo = P["Wq"], P["Wk"], P["Wv"], P["Wo"]
    h, _, d = Wq.shape
    B = X.shape[0]
    g = {}
    g["ff2_W"] = np.einsum("btF,btD->FD", H1, dOut)
    g["ff2_b"] = dOut.sum(axis=(0, 1))
    dH1pre = (dOut @ P["ff2_W"].T) * (H1pre > 0)
    g["ff1_W"] = np.einsum("btD,btF->DF", Y, dH1pre)
    g["ff1_b"] = dH1pre.sum(axis=(0, 1))
    dY = dOut + dH1pre @ P["ff1_W"].T
    g["Wo"] = np.einsum("btc,btD->cD", C, dY)
    dO = (dY @ Wo.T).reshape(B, 2, h, d).transpose(0, 2, 1, 3)
    dA = dO @ V.transpose(0, 1, 3, 2)
    dV = A.transpose(0, 1, 3, 2) @ dO
    dS = A * (dA - np.sum(dA * A, axis=-1, keepdims=True)) / math.sqrt(d)
    dQ = dS @ K
    dK = dS.transpose(0, 1, 3, 2) @ Q
    g["Wq"] = np.einsum("btD,bhtd->hDd", X, dQ)
    g["Wk"] = np.einsum("btD,bhtd->hDd", X, dK)
    g["Wv"] = np.einsum("btD,bhtd->hDd", X, dV)
    dX = (dY + np.einsum("bhtd,hDd->btD", dQ, Wq) + np.einsum("bhtd,hDd->btD", dK, Wk)
          + np.einsum("bhtd,hDd->btD", dV, Wv))
    return dX, g


class VdbanModel:
    def __init__(self, spec: VdbanSpec, params: dict, loc_offset=(0.0, 0.0), loc_scale=(1.0, 1.0),
                 dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        expected = dict(param_shapes(spec))
        if set(params) != set(expected):
            raise ValueError("parameter names do not match the architecture")
        for k, shp in expected.items():
            if tuple(np.shape(params[k])) != shp:
                raise ValueError(f"{k}: shape {np.shape(params[k])} != {shp}")
        self.params = {k: np.array(params[k], dtype=self.dtype) for k, _ in param_shapes(spec)}
        self.loc_offset = np.asarray(loc_offset, dtype=np.float64)
        self.loc_scale = np.asarray(loc_scale, dtype=np.float64)

    @classmethod
    def init(cls, spec: VdbanSpec, seed: int, dtype=np.float32, loc_offset=(0.0, 0.0),
             loc_scale=(1.0, 1.0)) -> "VdbanModel":
        rng = np.random.default_rng(seed)
        params = {}
        for name, shp in param_shapes(spec):
            if name.endswith("_b") or name == "conv_b":
                params[name] = np.zeros(shp)
            elif name == "conv_w":
                params[name] = glorot(rng, (4, 1))[:, 0]
            else:
                params[name] = glorot(rng, shp)
        return cls(spec, params, loc_offset, loc_scale, dtype)

    def copy(self) -> "VdbanModel":
        return VdbanModel(self.spec, {k: v.copy() for k, v in self.params.items()},
                          self.loc_offset, self.loc_scale, self.dtype)

    # -- forward / backward ------------------------------------------------

    def _inputs(self, vdf, loc):
        vdf = np.asarray(vdf)
        loc = np.asarray(loc, dtype=np.float64)
        if vdf.ndim == 2:
            vdf, loc = vdf[None], loc[None]
        if vdf.shape[1:] != (self.spec.G, 4):
            raise ValueError(f"VDF shape {vdf.shape[1:]} does not match model G={self.spec.G}")
        if loc.shape != (vdf.shape[0], 2):
            raise ValueError(f"location batch shape {loc.shape} does not match VDF batch")
        x = vdf.astype(self.dtype, copy=True)
        x[..., 3] /= AZIMUTH_SCALE
        ln = ((loc - self.loc_offset) / self.loc_scale).astype(self.dtype)
        return x, ln

    def _forward(self, vdf, loc):
        P = self.params
        x, ln = self._inputs(vdf, loc)
        a0 = x @ P["conv_w"] + P["conv_b"]
        z0 = np.maximum(a0, 0)
        f = z0 @ P["f_W"] + P["f_b"]
        u = ln @ P["loc_W"] + P["loc_b"]
        X = np.stack([u, f], axis=1)
        blocks = []
        for k in range(len(self.spec.dims)):
            bp = self._block_params(k)
            Xin = X
            if "proj_W" in bp:
                X = X @ bp["proj_W"] + bp["proj_b"]
            X, cache = _block_forward(X, bp)
            blocks.append((Xin, cache))
        s = X[:, 0] + X[:, 1]
        acts = [s]
        pres = []
        for i in range(len(self.spec.head)):
            pre = acts[-1] @ P[f"head{i}_W"] + P[f"head{i}_b"]
            pres.append(pre)
            acts.append(np.maximum(pre, 0))
        logits = acts[-1] @ P["out_W"] + P["out_b"]
        return logits, (x, ln, a0, z0, blocks, acts, pres)

    def _block_params(self, k: int) -> dict:
        p = f"blk{k}."
        return {name[len(p):]: v for name, v in self.params.items() if name.startswith(p)}

    def forward(self, vdf, loc) -> np.ndarray:
        return self._forward(vdf, loc)[0]

    def backward(self, cache, dlogits) -> dict:
        P = self.params
        x, ln, a0, z0, blocks, acts, pres = cache
        g = {}
        g["out_W"] = acts[-1].T @ dlogits
        g["out_b"] = dlogits.sum(axis=0)
        da = dlogits @ P["out_W"].T
        for i in reversed(range(len(self.spec.head))):
            dpre = da * (pres[i] > 0)
            g[f"head{i}_W"] = acts[i].T @ dpre
            g[f"head{i}_b"] = dpre.sum(axis=0)
            da = dpre @ P[f"head{i}_W"].T
        dX = np.stack([da, da], axis=1)
        for k in reversed(range(len(self.spec.dims))):
            bp = self._block_params(k)
            Xin, cache_k = blocks[k]
            dX, gb = _block_backward(dX, bp, cache_k)
            if "proj_W" in bp:
                gb["proj_W"] = np.einsum("btE,btD->ED", Xin, dX)
                gb["proj_b"] = dX.sum(axis=(0, 1))
                dX = dX @ bp["proj_W"].T
            for name, v in gb.items():
                g[f"blk{k}.{name}"] = v
        du, df = dX[:, 0], dX[:, 1]
        g["loc_W"] = ln.T @ du
        g["loc_b"] = du.sum(axis=0)
        g["f_W"] = z0.T @ df
        g["f_b"] = df.sum(axis=0)
        da0 = (df @ P["f_W"].T) * (a0 > 0)
        g["conv_w"] = np.einsum("bgc,bg->c", x, da0)
        g["conv_b"] = np.asarray(da0.sum(), dtype=self.dtype)
        return g

    def loss_and_grads(self, vdf, loc, labels) -> tuple[float, dict]:
        logits, cache = self._forward(vdf, loc)
        loss, dlogits = cross_entropy(logits.astype(np.float64), np.asarray(labels))
        return loss, self.backward(cache, dlogits.astype(self.dtype))

    def loss(self, vdf, loc, labels) -> float:
        return cross_entropy(self.forward(vdf, loc).astype(np.float64), np.asarray(labels))[0]

    def rank(self, vdf, loc, batch: int = 512) -> np.ndarray:
        """Class indices per sample, best first; equal logits keep index order."""
        out = []
        for lo in range(0, len(vdf), batch):
            logits = self.forward(vdf[lo:lo + batch], loc[lo:lo + batch])
            out.append(np.argsort(-logits, axis=1, kind="stable"))
        return np.concatenate(out) if out else np.empty((0, self.spec.n_out), dtype=np.int64)
