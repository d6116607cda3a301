"""Joint/bone cross-attention with layer-wise EMA of the joint-to-bone attention block."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

EMA_BETA = 0.99


@dataclass
class EmaState:
    """Running (per head) M x N joint-bone attention average across layers."""

    beta: float = EMA_BETA
    value: np.ndarray | None = None

    @property
    def initialized(self) -> bool:
        return self.value is not None

    def update(self, block: np.ndarray) -> "EmaState":
        block = np.asarray(block, dtype=np.float64)
        if self.value is None:
            self.value = block.copy()
        elif self.value.shape != block.shape:
            raise ValueError(f"EMA shape conflict: state {self.value.shape}, block {block.shape}")
        else:
            self.value = self.beta * self.value + (1.0 - self.beta) * block
        return self


def ema_update(state: EmaState, block) -> EmaState:
    return state.update(block)


def split_heads(x: ad.Tensor, heads: int) -> ad.Tensor:
    b, t, d = x.shape
    return ad.transpose(ad.reshape(x, (b, t, heads, d // heads)), (0, 2, 1, 3))


def merge_heads(x: ad.Tensor) -> ad.Tensor:
    b, h, t, dh = x.shape
    return ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (b, t, h * dh))


def _batched(x) -> tuple[ad.Tensor, bool]:
    x = ad.as_tensor(x)
    if x.ndim == 2:
        return ad.reshape(x, (1,) + x.shape), True
    return x, False


def cross_attention_layer(x: ad.Tensor, p: dict, heads: int) -> tuple[ad.Tensor, np.ndarray]:
    """Plain multi-head self-attention over all tokens, residual, then a GELU FFN."""
    d = x.shape[-1]
    q = split_heads(ad.matmul(x, p["wq"]), heads)
    k = split_heads(ad.matmul(x, p["wk"]), heads)
    v = split_heads(ad.matmul(x, p["wv"]), heads)
    logits = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(d // heads))
    attn = ad.softmax_rows(logits)
    ctx = ad.matmul(merge_heads(ad.matmul(attn, v)), p["wo"])
    x = ad.add(x, ctx)
    hidden = ad.gelu(ad.add(ad.matmul(x, p["w1"]), p["b1"]))
    x = ad.add(x, ad.add(ad.matmul(hidden, p["w2"]), p["b2"]))
    return x, attn.data


def joint_bone_block(attn: np.ndarray, num_joints: int) -> np.ndarray:
    """(B, H, T, T) attention -> (B, H, M, N): entry (p, i) is joint query i on bone key p."""
    return np.swapaxes(attn[..., :num_joints, num_joints:], -1, -2)


def correlation_scores(ema: EmaState, batch: int, num_joints: int, heads: int) -> np.ndarray:
    """Average the EMA block over heads and bones -> (B, N) per-joint scores."""
    if ema.value is None or ema.value.shape[-2] == 0:
        return np.zeros((batch, num_joints))
    m = ema.value.shape[-2]
    return ema.value.sum(axis=(-3, -2)) / (heads * m)


def cross_attention_forward(tokens, layers: list[dict], num_joints: int, heads: int,
                            ema: EmaState | None = None, attn_maps: list | None = None):
    """Run the stack over joint-then-bone tokens.

    Returns ``(x_jc, x_bc, scores)``. A fresh :class:`EmaState` is used per call
    unless one is passed in. Attention maps are appended to ``attn_maps`` if given.
    """
    x, squeeze = _batched(tokens)
    b, t, d = x.shape
    if d % heads:
        raise ValueError(f"D={d} not divisible by H={heads}")
    if t < num_joints:
        raise ValueError(f"{t} tokens but {num_joints} joints")
    ema = EmaState() if ema is None else ema
    for p in layers:
        x, attn = cross_attention_layer(x, p, heads)
        if attn_maps is not None:
            attn_maps.append(attn)
        if t > num_joints:
            ema.update(joint_bone_block(attn, num_joints))
    scores = correlation_scores(ema, b, num_joints, heads)
    x_jc, x_bc = ad.split(x, [num_joints, t - num_joints], axis=1)
    if squeeze:
        x_jc = ad.reshape(x_jc, x_jc.shape[1:])
        x_bc = ad.reshape(x_bc, x_bc.shape[1:])
        scores = scores[0]
    return x_jc, x_bc, scores
