"""Scene encoding: per-entity MLP-Mixer stacks pooled into one token per
entity, a plain MLP for static objects, and a pooled navigation vector.

Agent and lane features keep their raw (sequence x feature) shape through the
mixer blocks; each block adds a residual MLP along the sequence axis and then
one along the feature axis. A masked mean over valid sequence steps reduces
each entity to a single vector, which a linear projection lifts to the
decoder width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import Config
from .layers import init_linear, init_mlp2, linear, mlp2
from .scenario import AGENT_DIM, LANE_DIM, STATIC_DIM, Batch


@dataclass
class SceneTokens:
    """Per-entity embeddings plus pooled navigation conditioning.

    Token tensors live on the autodiff tape; masks and anchors (meters) are
    plain arrays consumed by the attention distance matrix.
    """
    agent_tokens: Tensor      # (B, 1+Nn, d); slot 0 is the ego history
    agent_valid: np.ndarray
    agent_anchor: np.ndarray
    lane_tokens: Tensor       # (B, Nl, d)
    lane_valid: np.ndarray
    lane_anchor: np.ndarray
    static_tokens: Tensor     # (B, Ns, d)
    static_valid: np.ndarray
    static_anchor: np.ndarray
    nav_vector: Tensor        # (B, d)


def init_encoder_params(tensors: dict, rng: np.random.Generator, cfg: Config) -> None:
    hid = cfg.dim_encoder_hidden
    d = cfg.dim_decoder
    for mod, seq_len, feat in (("agent", cfg.num_past_steps, AGENT_DIM),
                               ("lane", cfg.points_per_polyline, LANE_DIM),
                               ("nav", cfg.points_per_polyline, LANE_DIM)):
        for i in range(cfg.num_encoder_blocks):
            init_mlp2(tensors, rng, f"enc.{mod}.b{i}.seq", seq_len, hid, seq_len)
            init_mlp2(tensors, rng, f"enc.{mod}.b{i}.feat", feat, hid, feat)
        init_linear(tensors, rng, f"enc.{mod}.proj", feat, d)
    init_mlp2(tensors, rng, "enc.static", STATIC_DIM, hid, d)


def mixer_block(f: Tensor, params: dict, name: str) -> Tensor:
    """Residual MLP along the sequence axis, then along the feature axis."""
    n = f.ndim
    swap = tuple(range(n - 2)) + (n - 1, n - 2)
    f = ad.add(f, ad.transpose(mlp2(ad.transpose(f, swap), params, f"{name}.seq"), swap))
    return ad.add(f, mlp2(f, params, f"{name}.feat"))


def _encode_entities(feat: np.ndarray, step_valid: np.ndarray, params: dict,
                     mod: str, num_blocks: int) -> Tensor:
    """(B, E, S, H) features -> (B, E, d) pooled entity tokens."""
    B, E, S, H = feat.shape
    x = Tensor(feat.reshape(B * E, S, H))
    for i in range(num_blocks):
        x = mixer_block(x, params, f"enc.{mod}.b{i}")
    m = step_valid.reshape(B * E, S, 1)
    denom = np.maximum(m.sum(axis=1, keepdims=False), 1.0)  # (B*E, 1)
    pooled = ad.mul(ad.tsum(ad.mul(x, m), axis=1), 1.0 / denom)
    tok = linear(pooled, params, f"enc.{mod}.proj")
    return ad.reshape(tok, (B, E, tok.shape[-1]))


def encode_scene(params: dict, batch: Batch, cfg: Config) -> SceneTokens:
    """Encode a normalized batch into per-entity tokens and the nav vector."""
    if not batch.normalized:
        raise ValueError("encode_scene: batch is not normalized")
    B = batch.size

    agent_tok = _encode_entities(batch.agents, batch.agent_step_valid, params,
                                 "agent", cfg.num_encoder_blocks)
    agent_tok = ad.mul(agent_tok, batch.agent_valid[:, :, None])

    lane_steps = np.broadcast_to(batch.lane_valid[:, :, None],
                                 batch.lanes.shape[:3]).copy()
    lane_tok = _encode_entities(batch.lanes, lane_steps, params,
                                "lane", cfg.num_encoder_blocks)
    lane_tok = ad.mul(lane_tok, batch.lane_valid[:, :, None])

    nav_steps = np.broadcast_to(batch.nav_valid[:, :, None], batch.nav.shape[:3]).copy()
    nav_tok = _encode_entities(batch.nav, nav_steps, params,
                               "nav", cfg.num_encoder_blocks)
    nav_tok = ad.mul(nav_tok, batch.nav_valid[:, :, None])
    nav_denom = np.maximum(batch.nav_valid.sum(axis=1, keepdims=True), 1.0)
    nav_vec = ad.mul(ad.tsum(nav_tok, axis=1), 1.0 / nav_denom)

    static_tok = mlp2(Tensor(batch.statics), params, "enc.static")
    static_tok = ad.mul(static_tok, batch.static_valid[:, :, None])

    return SceneTokens(agent_tokens=agent_tok, agent_valid=batch.agent_valid,
                       agent_anchor=batch.agent_anchor,
                       lane_tokens=lane_tok, lane_valid=batch.lane_valid,
                       lane_anchor=batch.lane_anchor,
                       static_tokens=static_tok, static_valid=batch.static_valid,
                       static_anchor=batch.static_anchor,
                       nav_vector=nav_vec)
