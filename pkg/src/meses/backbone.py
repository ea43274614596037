"""Factorized-attention encoder over (batch, time, feature, clique) tensors.

Each of the L blocks applies three axis-restricted sub-layers to the rank-5
input (B, T, F, C, d_f): pre-LN self-attention over the feature axis on every
(t, c) slot, a one-way cross-attention that rewrites only the focal slot
(c = 0) from its peers, and pre-LN self-attention over the sequence axis on
the focal slot alone.  Peer slots pass through the last two sub-layers
unchanged, so information flows focal <- peers but never back.  The readout
flattens the focal slot's F tokens per event into a d = F * d_f vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .featencode import uniform_init
from .params import ParamRegistry
from .schema import DataError

LAYER_NORM_EPS = 1e-5


@dataclass(frozen=True)
class BackboneConfig:
    d: int
    L: int
    H: int
    F: int = 5
    C: int = 4
    T: int = 16
    d_ff: int | None = None  # defaults to d
    bypass_cooc: bool = False

    def validate(self) -> None:
        if self.d % self.F:
            raise DataError(f"model width d={self.d} must be divisible by F={self.F}")
        if self.d_f % self.H:
            raise DataError(f"token width d_f={self.d_f} must be divisible by H={self.H}")
        if min(self.L, self.H, self.C, self.T) < 0 or self.H < 1 or self.C < 1 or self.T < 1:
            raise DataError("L >= 0 and H, C, T >= 1 required")

    @property
    def d_f(self) -> int:
        return self.d // self.F

    @property
    def ff_width(self) -> int:
        return self.d_ff if self.d_ff is not None else self.d


@dataclass
class CliqueTensor:
    """Input to the backbone: values plus the two masks.

    peer_mask is (B, T, C) with True on padded peer slots; slot 0 is the
    focal event and is never masked.  pad_mask is (B, T) with True on padded
    sequence positions.  Masked slots are expected to carry zeros.
    """

    x: Tensor  # (B, T, F, C, d_f)
    peer_mask: np.ndarray
    pad_mask: np.ndarray

    def validate(self) -> None:
        B, T, F, C, d_f = self.x.shape
        if self.peer_mask.shape != (B, T, C):
            raise DataError(f"peer mask shape {self.peer_mask.shape} != {(B, T, C)}")
        if self.pad_mask.shape != (B, T):
            raise DataError(f"pad mask shape {self.pad_mask.shape} != {(B, T)}")
        if self.peer_mask[:, :, 0].any():
            raise DataError("focal slot must never be masked")


class _SubLayerParams:
    """Pre-LN attention + MLP parameter bundle of one sub-layer."""

    def __init__(self, registry: ParamRegistry, dm: int, d_ff: int, rng, prefix: str):
        reg = registry.register
        self.ln1_g = reg(f"{prefix}.ln1.g", np.ones(dm))
        self.ln1_b = reg(f"{prefix}.ln1.b", np.zeros(dm))
        self.wq = reg(f"{prefix}.wq", uniform_init(rng, (dm, dm), dm))
        self.bq = reg(f"{prefix}.bq", np.zeros(dm))
        # No key bias: softmax cancels a constant shift of every key exactly,
        # so the parameter would be dead weight with an identically-zero gradient.
        self.wk = reg(f"{prefix}.wk", uniform_init(rng, (dm, dm), dm))
        self.wv = reg(f"{prefix}.wv", uniform_init(rng, (dm, dm), dm))
        self.bv = reg(f"{prefix}.bv", np.zeros(dm))
        self.wo = reg(f"{prefix}.wo", uniform_init(rng, (dm, dm), dm))
        self.bo = reg(f"{prefix}.bo", np.zeros(dm))
        self.ln2_g = reg(f"{prefix}.ln2.g", np.ones(dm))
        self.ln2_b = reg(f"{prefix}.ln2.b", np.zeros(dm))
        self.w1 = reg(f"{prefix}.mlp.w1", uniform_init(rng, (d_ff, dm), dm))
        self.b1 = reg(f"{prefix}.mlp.b1", np.zeros(d_ff))
        self.w2 = reg(f"{prefix}.mlp.w2", uniform_init(rng, (dm, d_ff), d_ff))
        self.b2 = reg(f"{prefix}.mlp.b2", np.zeros(dm))


def _ln(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    return ad.layer_norm(x, axis=-1, eps=LAYER_NORM_EPS) * gamma + beta


def _mlp(x: Tensor, p: _SubLayerParams) -> Tensor:
    return ad.linear(ad.relu(ad.linear(x, p.w1, p.b1)), p.w2, p.b2)


def multi_head_attention(q_in: Tensor, kv_in: Tensor, p: _SubLayerParams, n_heads: int, key_mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product attention; q_in (..., Tq, dm), kv_in (..., Tk, dm),
    key_mask (..., Tk) True = excluded."""
    dm = q_in.shape[-1]
    hd = dm // n_heads

    def split_heads(t: Tensor) -> Tensor:
        t = ad.reshape(t, t.shape[:-1] + (n_heads, hd))
        return ad.swapaxes(t, -2, -3)  # (..., H, Tx, hd)

    q = split_heads(ad.linear(q_in, p.wq, p.bq))
    k = split_heads(ad.linear(kv_in, p.wk))
    v = split_heads(ad.linear(kv_in, p.wv, p.bv))
    scores = ad.matmul(q, ad.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(hd))  # (..., H, Tq, Tk)
    mask = None
    if key_mask is not None:
        mask = np.broadcast_to(key_mask[..., None, None, :], scores.shape)
    attn = ad.softmax(scores, axis=-1, mask=mask)
    out = ad.matmul(attn, v)  # (..., H, Tq, hd)
    out = ad.swapaxes(out, -2, -3)
    out = ad.reshape(out, out.shape[:-2] + (dm,))
    return ad.linear(out, p.wo, p.bo)


def encoder_sublayer(x: Tensor, p: _SubLayerParams, n_heads: int, key_mask: np.ndarray | None = None) -> Tensor:
    """Standard pre-LN encoder layer on the (..., T, dm) token axis."""
    a = _ln(x, p.ln1_g, p.ln1_b)
    x = x + multi_head_attention(a, a, p, n_heads, key_mask=key_mask)
    return x + _mlp(_ln(x, p.ln2_g, p.ln2_b), p)


def cross_attention_sublayer(y: Tensor, p: _SubLayerParams, n_heads: int, peer_mask: np.ndarray) -> Tensor:
    """Focal-to-peer cross-attention: the focal slot queries all C slots
    (padded peers masked) and is rewritten; peer slots pass through."""
    B, T, F, C, d_f = y.shape
    a = _ln(y, p.ln1_g, p.ln1_b)
    q = a[:, :, :, 0:1, :]  # (B, T, F, 1, d_f)
    key_mask = np.broadcast_to(peer_mask[:, :, None, :], (B, T, F, C))
    focal = y[:, :, :, 0:1, :] + multi_head_attention(q, a, p, n_heads, key_mask=key_mask)
    focal = focal + _mlp(_ln(focal, p.ln2_g, p.ln2_b), p)
    return ad.concat([focal, y[:, :, :, 1:, :]], axis=3)


class FactorizedBackbone:
    """L blocks of (feature, cross, sequence) attention plus the focal readout."""

    def __init__(self, registry: ParamRegistry, cfg: BackboneConfig, rng, prefix: str = "backbone"):
        cfg.validate()
        self.cfg = cfg
        self.blocks = []
        for i in range(cfg.L):
            self.blocks.append(
                {
                    "feat": _SubLayerParams(registry, cfg.d_f, cfg.ff_width, rng, f"{prefix}.b{i}.feat"),
                    "cross": _SubLayerParams(registry, cfg.d_f, cfg.ff_width, rng, f"{prefix}.b{i}.cross"),
                    "seq": _SubLayerParams(registry, cfg.d_f, cfg.ff_width, rng, f"{prefix}.b{i}.seq"),
                }
            )

    def feature_attention(self, x: Tensor, block: dict) -> Tensor:
        moved = ad.moveaxis(x, 2, -2)  # (B, T, C, F, d_f): tokens = feature axis
        out = encoder_sublayer(moved, block["feat"], self.cfg.H)
        return ad.moveaxis(out, -2, 2)

    def peer_cross_attention(self, y: Tensor, block: dict, peer_mask: np.ndarray) -> Tensor:
        if self.cfg.bypass_cooc:
            return y
        return cross_attention_sublayer(y, block["cross"], self.cfg.H, peer_mask)

    def sequence_attention(self, y: Tensor, block: dict, pad_mask: np.ndarray) -> Tensor:
        B, T, F, C, d_f = y.shape
        focal = ad.moveaxis(y[:, :, :, 0, :], 1, 2)  # (B, F, T, d_f): tokens = sequence axis
        key_mask = np.broadcast_to(pad_mask[:, None, :], (B, F, T))
        out = ad.moveaxis(encoder_sublayer(focal, block["seq"], self.cfg.H, key_mask=key_mask), 2, 1)
        out = ad.reshape(out, (B, T, F, 1, d_f))
        return ad.concat([out, y[:, :, :, 1:, :]], axis=3)

    def forward(self, clique: CliqueTensor) -> Tensor:
        """Contextualized per-event embeddings (B, T, d)."""
        clique.validate()
        x = clique.x
        for block in self.blocks:
            x = self.feature_attention(x, block)
            x = self.peer_cross_attention(x, block, clique.peer_mask)
            x = self.sequence_attention(x, block, clique.pad_mask)
        B, T, F, C, d_f = x.shape
        return ad.reshape(x[:, :, :, 0, :], (B, T, F * d_f))
