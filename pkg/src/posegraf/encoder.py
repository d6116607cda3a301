"""Distance-rescaled transformer encoder layer."""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .attention import merge_heads, split_heads


def distance_rescale(hops, w: float = 1.0) -> np.ndarray:
    """(1 + e^w) / (1 + e^(w - hops)): 1 at hop 0, rising towards 1 + e^w."""
    h = np.asarray(hops, dtype=np.float64)
    return (1.0 + math.exp(w)) / (1.0 + np.exp(w - h))


def biased_attention(x, p: dict, heads: int, bias) -> tuple[ad.Tensor, np.ndarray]:
    """softmax(ReLU(Q K^T) * bias / sqrt(d_g)) V, heads merged and projected."""
    d = x.shape[-1]
    q = split_heads(ad.matmul(x, p["wq"]), heads)
    k = split_heads(ad.matmul(x, p["wk"]), heads)
    v = split_heads(ad.matmul(x, p["wv"]), heads)
    logits = ad.relu(ad.matmul(q, ad.transpose(k)))
    if bias is not None:
        logits = ad.mul(logits, bias)
    attn = ad.softmax_rows(ad.scale(logits, 1.0 / math.sqrt(d // heads)))
    return ad.matmul(merge_heads(ad.matmul(attn, v)), p["wo"]), attn.data


def ffn(x, p: dict) -> ad.Tensor:
    h = ad.gelu(ad.add(ad.matmul(x, p["w1"]), p["b1"]))
    h = ad.gelu(ad.add(ad.matmul(h, p["w2"]), p["b2"]))
    return ad.gelu(ad.add(ad.matmul(h, p["w3"]), p["b3"]))


def encoder_layer_forward(x_in, bias, x_jc, p: dict, heads: int, layer_norm: bool = False,
                          attn_maps: list | None = None) -> ad.Tensor:
    """X_mid = attention(x_in) + x_jc; returns X_mid + FFN(X_mid).

    ``x_in`` and ``x_jc`` are (B, N, D) or (N, D). ``bias=None`` gives plain
    ReLU-logit attention.
    """
    x_in, x_jc = ad.as_tensor(x_in), ad.as_tensor(x_jc)
    single = x_in.ndim == 2
    if single:
        x_in = ad.reshape(x_in, (1,) + x_in.shape)
        x_jc = ad.reshape(x_jc, (1,) + x_jc.shape)
    if x_in.shape != x_jc.shape:
        raise ValueError(f"token shape {x_in.shape} != joint feature shape {x_jc.shape}")
    if x_in.shape[-1] % heads:
        raise ValueError(f"D={x_in.shape[-1]} not divisible by H={heads}")
    h = ad.layer_norm(x_in) if layer_norm else x_in
    ctx, attn = biased_attention(h, p, heads, bias)
    if attn_maps is not None:
        attn_maps.append(attn)
    x_mid = ad.add(ctx, x_jc)
    out = ad.add(x_mid, ffn(ad.layer_norm(x_mid) if layer_norm else x_mid, p))
    if single:
        out = ad.reshape(out, out.shape[1:])
    return out
