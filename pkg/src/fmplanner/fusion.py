"""Interaction-enhanced spatiotemporal fusion blocks.

Each block runs, per modality stream (lane+static geometry, agents, ego
segments): adaptive layer norm modulated by the conditioning vector, a
shared scale-adaptive attention over the concatenation of all streams, a
gated residual, then a modality-specific FFN behind its own adaLN with a
second gated residual. Modulation heads are zero-initialized, so a fresh
block is the identity map on its token streams.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import (attention, init_attention, init_linear, init_mlp2,
                     key_bias_from_mask, linear, modulate, mlp2,
                     scale_adaptive_attention, LAMBDA_BIAS_INIT)

MODALITIES = ("lane", "agent", "ego")


def init_block_params(tensors: dict, rng: np.random.Generator, prefix: str,
                      d: int, heads: int, ffn_mult: int) -> None:
    for mod in MODALITIES:
        init_linear(tensors, rng, f"{prefix}.mod.{mod}", d, 6 * d, zero=True)
        init_mlp2(tensors, rng, f"{prefix}.ffn.{mod}", d, ffn_mult * d, d)
    init_attention(tensors, rng, f"{prefix}.attn", d)
    init_linear(tensors, rng, f"{prefix}.attn.lam", d, heads,
                zero=True, bias=LAMBDA_BIAS_INIT)


def _mod_chunks(c: Tensor, params: dict, name: str, n: int) -> list:
    d = c.shape[-1]
    m = linear(ad.gelu(c), params, name)
    return [ad.narrow(m, 1, i * d, d) for i in range(n)]


def _gated_residual(x: Tensor, gate: Tensor, delta: Tensor, valid: np.ndarray) -> Tensor:
    B, d = gate.shape
    out = ad.add(x, ad.mul(ad.reshape(gate, (B, 1, d)), delta))
    return ad.mul(out, valid[:, :, None])


def fusion_block(streams: list, dist: np.ndarray, c: Tensor, params: dict,
                 prefix: str, heads: int) -> list:
    """One fusion block over ``streams`` = [(tokens, valid), ...] in the fixed
    modality order (lane, agent, ego). ``dist`` is the anchor distance matrix
    of the concatenated token sequence."""
    mods = [_mod_chunks(c, params, f"{prefix}.mod.{m}", 6) for m in MODALITIES]
    normed = [modulate(x, mm[0], mm[1]) for (x, _), mm in zip(streams, mods)]
    valid_all = np.concatenate([v for _, v in streams], axis=1)
    g = ad.concat(normed, axis=1)
    att = scale_adaptive_attention(g, dist, params, f"{prefix}.attn", heads,
                                   key_bias_from_mask(valid_all))
    out = []
    offset = 0
    for (x, valid), mm in zip(streams, mods):
        n = x.shape[1]
        part = ad.narrow(att, 1, offset, n)
        offset += n
        x = _gated_residual(x, mm[2], part, valid)
        branch = mlp2(modulate(x, mm[3], mm[4]), params,
                      f"{prefix}.ffn.{MODALITIES[len(out)]}")
        x = _gated_residual(x, mm[5], branch, valid)
        out.append((x, valid))
    return out


def init_final_params(tensors: dict, rng: np.random.Generator, d: int) -> None:
    tensors["fin.ln.g"] = Tensor(np.ones(d), requires_grad=True)
    tensors["fin.ln.b"] = Tensor(np.zeros(d), requires_grad=True)
    init_linear(tensors, rng, "fin.attn.qkv", d, 3 * d)
    init_linear(tensors, rng, "fin.attn.out", d, d)


def final_self_attention(g: Tensor, valid: np.ndarray, params: dict,
                         heads: int) -> Tensor:
    """Plain pre-LN residual self-attention used for the final aggregation."""
    h = ad.add(ad.mul(ad.layernorm(g), params["fin.ln.g"]), params["fin.ln.b"])
    att = attention(h, params, "fin.attn", heads, key_bias_from_mask(valid))
    return ad.mul(ad.add(g, att), valid[:, :, None])
