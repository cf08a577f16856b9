"""Shared building blocks for the differentiable model: parameter creation,
linear/MLP application, sinusoidal embeddings, and attention."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

MASK_NEG = -1e9          # additive logit bias for invalid attention keys
LAMBDA_BIAS_INIT = -4.0  # softplus(-4) ~ 0.018 / m: near-vanilla attention at init


def init_linear(tensors: dict, rng: np.random.Generator, name: str,
                din: int, dout: int, zero: bool = False, bias: float = 0.0) -> None:
    if zero:
        w = np.zeros((din, dout))
    else:
        w = rng.standard_normal((din, dout)) / np.sqrt(din)
    tensors[f"{name}.w"] = Tensor(w, requires_grad=True)
    tensors[f"{name}.b"] = Tensor(np.full(dout, bias), requires_grad=True)


def linear(x: Tensor, params: dict, name: str) -> Tensor:
    return ad.add(ad.matmul(x, params[f"{name}.w"]), params[f"{name}.b"])


def mlp2(x: Tensor, params: dict, name: str) -> Tensor:
    """Two-layer MLP with GELU: names ``{name}.l1`` and ``{name}.l2``."""
    return linear(ad.gelu(linear(x, params, f"{name}.l1")), params, f"{name}.l2")


def init_mlp2(tensors: dict, rng, name: str, din: int, hidden: int, dout: int) -> None:
    init_linear(tensors, rng, f"{name}.l1", din, hidden)
    init_linear(tensors, rng, f"{name}.l2", hidden, dout)


def sinusoidal(pos: np.ndarray, dim: int) -> np.ndarray:
    """Fixed sin/cos embedding of positions; ``dim`` must be even."""
    if dim % 2 != 0:
        raise ValueError(f"sinusoidal: dim must be even, got {dim}")
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = np.asarray(pos, dtype=np.float64)[..., None] * freqs
    return np.concatenate([np.cos(args), np.sin(args)], axis=-1)


def key_bias_from_mask(valid: np.ndarray) -> np.ndarray:
    """(B, M) validity -> (B, 1, 1, M) additive attention bias."""
    return ((1.0 - valid) * MASK_NEG)[:, None, None, :]


def modulate(x: Tensor, shift: Tensor, scale: Tensor) -> Tensor:
    """adaLN core: (1 + scale) * LayerNorm(x) + shift, no learned affine.

    ``shift``/``scale`` are (B, d) and broadcast over the token axis.
    """
    B, d = shift.shape
    s1 = ad.reshape(scale, (B, 1, d))
    s0 = ad.reshape(shift, (B, 1, d))
    return ad.add(ad.mul(ad.layernorm(x), ad.add(s1, 1.0)), s0)


def init_attention(tensors: dict, rng: np.random.Generator, name: str, d: int) -> None:
    for part in ("q", "k", "v", "out"):
        init_linear(tensors, rng, f"{name}.{part}", d, d)


def attention(x: Tensor, params: dict, name: str, heads: int,
              key_bias: np.ndarray, penalty: Tensor | None = None) -> Tensor:
    """Multi-head softmax attention over (B, M, d) tokens.

    ``penalty`` (B, heads, M, M), when given, is subtracted from the scaled
    dot-product logits before masking; this is the distance-scaled variant.
    """
    B, M, d = x.shape
    if d % heads != 0:
        raise ad.ShapeError(f"attention: width {d} not divisible by {heads} heads")
    dh = d // heads
    q, k, v = (ad.transpose(ad.reshape(linear(x, params, f"{name}.{part}"),
                                       (B, M, heads, dh)), (0, 2, 1, 3))
               for part in ("q", "k", "v"))
    logits = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
    if penalty is not None:
        logits = ad.sub(logits, penalty)
    w = ad.softmax(ad.add(logits, key_bias))
    out = ad.matmul(w, v)
    out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (B, M, d))
    return linear(out, params, f"{name}.out")


def scale_adaptive_attention(x: Tensor, dist: np.ndarray, params: dict, name: str,
                             heads: int, key_bias: np.ndarray) -> Tensor:
    """Attention with per-query, per-head learned distance penalties.

    ``dist`` is the (B, M, M) pairwise anchor distance matrix in meters. The
    receptive scaler lambda = softplus(linear(token)) is nonnegative, so
    spatially distant tokens can only be down-weighted, never promoted.
    """
    B, M, _ = x.shape
    lam = ad.softplus(linear(x, params, f"{name}.lam"))      # (B, M, heads)
    lam = ad.reshape(ad.transpose(lam, (0, 2, 1)), (B, heads, M, 1))
    penalty = ad.mul(lam, dist[:, None, :, :])               # (B, heads, M, M)
    return attention(x, params, name, heads, key_bias, penalty=penalty)


def pairwise_distances(anchors: np.ndarray) -> np.ndarray:
    """(B, M, 2) anchor positions -> (B, M, M) Euclidean distances."""
    diff = anchors[:, :, None, :] - anchors[:, None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))
