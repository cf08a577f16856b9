"""Full planner model: parameter table, conditioning, and the decoder that
maps a noisy trajectory plus scene tokens to a clean trajectory prediction.

Parameters live in a flat name -> Tensor table so checkpointing, the
optimizer, and EMA tracking all operate generically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import Config
from .encoder import SceneTokens, encode_scene, init_encoder_params
from .fusion import (final_self_attention, fusion_block, init_block_params,
                     init_final_params)
from .layers import init_linear, init_mlp2, linear, mlp2, modulate, pairwise_distances, sinusoidal
from .scenario import MODEL_DIM, Batch, NormStats, denorm_xy
from .tokenizer import SegmentLayout

TIME_EMBED_SCALE = 1000.0  # flow time in [0, 1] stretched for the sinusoid


@dataclass
class ModelParams:
    """Everything learnable plus the config and normalization it was built for."""
    cfg: Config
    stats: NormStats
    tensors: dict

    def layout(self) -> SegmentLayout:
        return SegmentLayout(self.cfg.traj_len, self.cfg.seg_len, self.cfg.seg_overlap)

    def names(self) -> list:
        return sorted(self.tensors)

    def clone_arrays(self) -> dict:
        return {k: self.tensors[k].data.copy() for k in self.names()}

    def frozen(self) -> "ModelParams":
        """Constant view for inference: same arrays, no gradient tracking."""
        return ModelParams(self.cfg, self.stats,
                           {k: Tensor(v.data) for k, v in self.tensors.items()})

    def with_arrays(self, arrays: dict, trainable: bool = True) -> "ModelParams":
        return ModelParams(self.cfg, self.stats,
                           {k: Tensor(v, requires_grad=trainable)
                            for k, v in arrays.items()})


def build_params(cfg: Config, stats: NormStats, seed: int) -> ModelParams:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6D6F64]))
    d = cfg.dim_decoder
    tensors: dict = {}
    init_encoder_params(tensors, rng, cfg)
    init_mlp2(tensors, rng, "cond.time", d, d, d)
    init_mlp2(tensors, rng, "tok.embed", cfg.seg_len * MODEL_DIM, d, d)
    for i in range(cfg.num_decoder_blocks):
        init_block_params(tensors, rng, f"blk{i}", d, cfg.num_heads, cfg.ffn_mult)
    init_final_params(tensors, rng, d)
    init_linear(tensors, rng, "head.mod", d, 2 * d, zero=True)
    init_linear(tensors, rng, "head.out", d, cfg.seg_len * MODEL_DIM, zero=True)
    return ModelParams(cfg, stats, tensors)


def cond_vector(params: ModelParams, nav_vector: Tensor, t: np.ndarray) -> Tensor:
    """Conditioning c = MLP(sinusoid(flow time)) + pooled navigation vector."""
    emb = sinusoidal(np.asarray(t, dtype=np.float64) * TIME_EMBED_SCALE,
                     params.cfg.dim_decoder)
    return ad.add(mlp2(Tensor(emb), params.tensors, "cond.time"), nav_vector)


def embed_trajectory(params: ModelParams, tau: np.ndarray) -> Tensor:
    """(B, L, 4) noisy trajectory -> (B, K, d) segment tokens with index
    encodings added."""
    lay = params.layout()
    B = tau.shape[0]
    K, Ls = lay.num_segments, lay.seg_len
    segs = (lay.segment_matrix() @ tau).reshape(B, K, Ls * MODEL_DIM)
    tok = mlp2(Tensor(segs), params.tensors, "tok.embed")
    pe = sinusoidal(np.arange(K, dtype=np.float64), params.cfg.dim_decoder)
    return ad.add(tok, pe[None])


def ego_segment_anchors(params: ModelParams, tau: np.ndarray) -> np.ndarray:
    """Mean denormalized position of each segment of the current noisy
    trajectory; recomputed at every denoising step."""
    lay = params.layout()
    B = tau.shape[0]
    xy = denorm_xy(tau[..., 0:2], params.stats)
    segs = (lay.segment_matrix() @ xy).reshape(B, lay.num_segments, lay.seg_len, 2)
    return segs.mean(axis=2)


def decode(params: ModelParams, scene: SceneTokens, tau: np.ndarray,
           t: np.ndarray) -> tuple:
    """Predict the clean trajectory from the noisy one.

    Returns ``(traj, segments)``: the overlap-averaged (B, L, 4) prediction
    and the raw (B, K, seg_len, 4) per-segment predictions feeding the
    consistency loss. Both are tape tensors in normalized units.
    """
    cfg, p = params.cfg, params.tensors
    lay = params.layout()
    B, K = tau.shape[0], lay.num_segments

    c = cond_vector(params, scene.nav_vector, t)
    ego_tok = embed_trajectory(params, tau)
    ego_anchor = ego_segment_anchors(params, tau)
    ego_valid = np.ones((B, K))

    lane_tok = ad.concat([scene.lane_tokens, scene.static_tokens], axis=1)
    lane_valid = np.concatenate([scene.lane_valid, scene.static_valid], axis=1)
    lane_anchor = np.concatenate([scene.lane_anchor, scene.static_anchor], axis=1)

    anchors = np.concatenate([lane_anchor, scene.agent_anchor, ego_anchor], axis=1)
    if not np.isfinite(anchors).all():
        raise ValueError("decode: non-finite token anchors")
    dist = pairwise_distances(anchors)

    streams = [(lane_tok, lane_valid),
               (scene.agent_tokens, scene.agent_valid),
               (ego_tok, ego_valid)]
    for i in range(cfg.num_decoder_blocks):
        streams = fusion_block(streams, dist, c, p, f"blk{i}", cfg.num_heads)

    valid_all = np.concatenate([v for _, v in streams], axis=1)
    g = ad.concat([x for x, _ in streams], axis=1)
    g = final_self_attention(g, valid_all, p, cfg.num_heads)

    ego_out = ad.narrow(g, 1, g.shape[1] - K, K)
    head_mod = linear(ad.gelu(c), p, "head.mod")
    shift = ad.narrow(head_mod, 1, 0, cfg.dim_decoder)
    scale = ad.narrow(head_mod, 1, cfg.dim_decoder, cfg.dim_decoder)
    h = modulate(ego_out, shift, scale)
    segs = ad.reshape(linear(h, p, "head.out"), (B, K, lay.seg_len, MODEL_DIM))
    avg = lay.average_matrix()
    traj = ad.matmul(Tensor(avg), ad.reshape(segs, (B, K * lay.seg_len, MODEL_DIM)))
    return traj, segs


def predict(params: ModelParams, batch: Batch, tau: np.ndarray,
            t: np.ndarray) -> tuple:
    """Convenience wrapper: encode the scene, then decode."""
    scene = encode_scene(params.tensors, batch, params.cfg)
    return decode(params, scene, tau, t)
