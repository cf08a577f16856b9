"""Run configuration: flat ``key = value`` files, profiles, and hashing.

Two built-in profiles exist. ``paper`` carries the full-scale hyperparameters
(the documented defaults); ``desk`` shrinks the scene and the network so that
training finishes in minutes on one CPU. A config file may start from either
profile via ``profile = desk`` and override individual keys; unknown keys are
rejected.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

__all__ = ["Config", "ConfigError", "parse_config", "load_config",
           "config_text", "config_hash", "PROFILES"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    # scene geometry fed to the model
    num_neighbors: int = 32          # agent slots excluding the ego history slot
    num_past_steps: int = 21         # history length at 10 Hz, current frame included
    dim_neighbor: int = 11           # per-step agent feature width
    num_lanes: int = 70
    points_per_polyline: int = 20
    dim_lane: int = 12               # per-point lane feature width
    num_nav_lanes: int = 5
    num_statics: int = 16
    dim_static: int = 9
    # network
    num_encoder_blocks: int = 3
    num_decoder_blocks: int = 4
    dim_encoder_hidden: int = 192
    dim_decoder: int = 256
    num_heads: int = 8
    ffn_mult: int = 4
    # trajectory tokenization
    traj_len: int = 80               # 8 s at 10 Hz, current instant at index 0
    seg_len: int = 20
    seg_overlap: int = 10
    # flow matching / guidance
    flow_path: str = "conditional-ot"
    temperature: float = 1.0
    ode_steps: int = 4
    omega: float = 1.8
    mask_prob: float = 0.1
    t_clamp: float = 1e-3
    alpha_consistency: float = 0.1
    # optimization
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    ema_decay: float = 0.999
    batch_size: int = 2048
    train_steps: int = 5000
    augment_prob: float = 0.5
    seed: int = 0
    # harness
    suite: str = "straight"
    episode_s: float = 8.0

    def validate(self) -> "Config":
        if self.dim_neighbor != 11 or self.dim_lane != 12 or self.dim_static != 9:
            raise ConfigError("feature widths are fixed by the featurizer: "
                              "dim_neighbor=11, dim_lane=12, dim_static=9")
        if not (0 <= self.seg_overlap < self.seg_len <= self.traj_len):
            raise ConfigError(f"need 0 <= seg_overlap < seg_len <= traj_len, "
                              f"got ({self.seg_overlap}, {self.seg_len}, {self.traj_len})")
        stride = self.seg_len - self.seg_overlap
        if (self.traj_len - self.seg_len) % stride != 0:
            raise ConfigError(f"segment layout does not tile: "
                              f"({self.traj_len} - {self.seg_len}) % {stride} != 0")
        if self.dim_decoder % self.num_heads != 0:
            raise ConfigError(f"dim_decoder {self.dim_decoder} not divisible by "
                              f"num_heads {self.num_heads}")
        if self.flow_path != "conditional-ot":
            raise ConfigError(f"unsupported flow_path {self.flow_path!r}")
        if not (0.0 <= self.mask_prob < 1.0):
            raise ConfigError(f"mask_prob must lie in [0, 1), got {self.mask_prob}")
        if self.ode_steps < 1:
            raise ConfigError(f"ode_steps must be >= 1, got {self.ode_steps}")
        if self.omega < 0.0:
            raise ConfigError(f"omega must be >= 0, got {self.omega}")
        if not (0.0 < self.t_clamp < 1.0):
            raise ConfigError(f"t_clamp must lie in (0, 1), got {self.t_clamp}")
        if min(self.num_neighbors, self.num_lanes, self.num_nav_lanes) < 1:
            raise ConfigError("scene slot counts must be >= 1")
        if self.num_statics < 0 or self.num_statics > 16:
            raise ConfigError("num_statics must lie in [0, 16]")
        return self

    @property
    def num_segments(self) -> int:
        return (self.traj_len - self.seg_len) // (self.seg_len - self.seg_overlap) + 1


_DESK_OVERRIDES = dict(
    num_neighbors=8,
    num_lanes=10,
    num_nav_lanes=2,
    num_statics=4,
    num_encoder_blocks=2,
    num_decoder_blocks=2,
    dim_encoder_hidden=32,
    dim_decoder=64,
    ffn_mult=2,
    batch_size=64,
    train_steps=5000,
)

PROFILES = {
    "paper": Config(),
    "desk": replace(Config(), **_DESK_OVERRIDES),
}

_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def _parse_value(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r}")
    return raw


def parse_config(text: str) -> Config:
    """Parse ``key = value`` lines; '#' starts a comment; unknown keys error."""
    overrides = {}
    profile = "paper"
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key == "profile":
            if raw not in PROFILES:
                raise ConfigError(f"line {lineno}: unknown profile {raw!r}")
            profile = raw
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        overrides[key] = _parse_value(key, raw)
    return replace(PROFILES[profile], **overrides).validate()


def load_config(path) -> Config:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_text(cfg: Config) -> str:
    """Canonical serialization: every resolved key, sorted, one per line."""
    lines = []
    for f in sorted(fields(Config), key=lambda f: f.name):
        v = getattr(cfg, f.name)
        if isinstance(v, float):
            lines.append(f"{f.name} = {v!r}")
        else:
            lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: Config) -> bytes:
    return hashlib.sha256(config_text(cfg).encode("utf-8")).digest()


def config_diff(a: Config, b: Config) -> list:
    """Names and values of keys that differ, for mismatch reports."""
    out = []
    for f in fields(Config):
        va, vb = getattr(a, f.name), getattr(b, f.name)
        if va != vb:
            out.append(f"{f.name}: {va} != {vb}")
    return out
