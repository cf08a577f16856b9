"""Domain data model for one planning instant and its normalization.

A :class:`ScenarioFrame` holds everything the planner sees at a single
timestamp, already expressed in the ego frame of that instant and in meters:
agent histories, lane polylines, navigation lanes, static objects, and (for
training data) the ground-truth future.

Feature layouts are fixed and shared between data generation and closed-loop
observation building:

* agent history step (11): x, y, cos h, sin h, vx, vy, length, width,
  one-hot type (vehicle, pedestrian, cyclist)
* lane point (12): center x/y, left-boundary vector x/y, right-boundary
  vector x/y, connection vector x/y, speed limit, one-hot signal
  (green, red, unknown)
* static object (9): x, y, cos h, sin h, length, width, one-hot type
  (barrier, cone, parked vehicle)

Model-facing trajectories use four channels: z-scored x, scaled y, and the
raw heading as (cos, sin) to avoid wrap discontinuities; ``model_to_traj``
converts back through atan2.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .config import Config
from .quintic import quintic_eval, quintic_fit

__all__ = [
    "AGENT_DIM", "LANE_DIM", "STATIC_DIM", "TRAJ_DIM", "MODEL_DIM", "DT",
    "NormStats", "ScenarioFrame", "Batch",
    "fit_stats", "traj_to_model", "model_to_traj",
    "prepare_batch", "augment",
    "AUG_DX", "AUG_DY", "AUG_DTHETA", "AUG_DV",
]

AGENT_DIM = 11
LANE_DIM = 12
STATIC_DIM = 9
TRAJ_DIM = 3      # domain trajectory channels: x, y, heading
MODEL_DIM = 4     # model trajectory channels: x, y, cos, sin
DT = 0.1          # tick length in seconds (10 Hz everywhere)

# Augmentation perturbation half-ranges (uniform).
AUG_DX = 1.0      # m
AUG_DY = 0.5      # m
AUG_DTHETA = 0.1  # rad
AUG_DV = 1.0      # m/s

_AUG_HORIZON_STEPS = 20  # quintic replaces future[0..20]; seam at 2.0 s


@dataclass(frozen=True)
class NormStats:
    """Coordinate normalization fitted on training futures.

    x is z-scored, y is scaled only (it is already centered on the ego lane);
    both scales are floored at 1 m so degenerate suites (e.g. straight-only
    data with y ~ 0) cannot collapse a channel.
    """
    x_mean: float
    x_std: float
    y_scale: float

    def __post_init__(self):
        for name in ("x_mean", "x_std", "y_scale"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"NormStats.{name} is not finite")
        if self.x_std <= 0 or self.y_scale <= 0:
            raise ValueError("NormStats scales must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.x_mean, self.x_std, self.y_scale])


def fit_stats(futures) -> NormStats:
    """Fit stats from an iterable of (L, 3) future trajectories."""
    xs = np.concatenate([np.asarray(f)[:, 0] for f in futures])
    ys = np.concatenate([np.asarray(f)[:, 1] for f in futures])
    return NormStats(x_mean=float(xs.mean()),
                     x_std=float(max(xs.std(), 1.0)),
                     y_scale=float(max(ys.std(), 1.0)))


@dataclass
class ScenarioFrame:
    """One planning instant in the ego frame, meters and radians."""
    ego_speed: float
    ego_accel: float
    ego_history: np.ndarray     # (T, 11); last row is the current instant
    neighbors: np.ndarray       # (Nn, T, 11)
    neighbor_valid: np.ndarray  # (Nn, T) in {0, 1}
    lanes: np.ndarray           # (Nl, P, 12)
    lane_valid: np.ndarray      # (Nl,)
    nav: np.ndarray             # (Nv, P, 12)
    nav_valid: np.ndarray       # (Nv,)
    statics: np.ndarray         # (Ns, 9)
    static_valid: np.ndarray    # (Ns,)
    future: np.ndarray | None = None  # (L, 3); index 0 is the current instant
    suite: str = ""

    def copy(self) -> "ScenarioFrame":
        return ScenarioFrame(
            ego_speed=self.ego_speed, ego_accel=self.ego_accel,
            ego_history=self.ego_history.copy(),
            neighbors=self.neighbors.copy(), neighbor_valid=self.neighbor_valid.copy(),
            lanes=self.lanes.copy(), lane_valid=self.lane_valid.copy(),
            nav=self.nav.copy(), nav_valid=self.nav_valid.copy(),
            statics=self.statics.copy(), static_valid=self.static_valid.copy(),
            future=None if self.future is None else self.future.copy(),
            suite=self.suite)


# ---------------------------------------------------------------------------
# model-space trajectory codec


def traj_to_model(traj: np.ndarray, stats: NormStats) -> np.ndarray:
    """(..., 3) domain trajectory -> (..., 4) normalized model channels."""
    traj = np.asarray(traj, dtype=np.float64)
    out = np.empty(traj.shape[:-1] + (MODEL_DIM,))
    out[..., 0] = (traj[..., 0] - stats.x_mean) / stats.x_std
    out[..., 1] = traj[..., 1] / stats.y_scale
    out[..., 2] = np.cos(traj[..., 2])
    out[..., 3] = np.sin(traj[..., 2])
    return out


def model_to_traj(arr: np.ndarray, stats: NormStats) -> np.ndarray:
    """Inverse of :func:`traj_to_model`; heading recovered via atan2."""
    arr = np.asarray(arr, dtype=np.float64)
    out = np.empty(arr.shape[:-1] + (TRAJ_DIM,))
    out[..., 0] = arr[..., 0] * stats.x_std + stats.x_mean
    out[..., 1] = arr[..., 1] * stats.y_scale
    out[..., 2] = np.arctan2(arr[..., 3], arr[..., 2])
    return out


def denorm_xy(xy: np.ndarray, stats: NormStats) -> np.ndarray:
    out = np.empty_like(xy)
    out[..., 0] = xy[..., 0] * stats.x_std + stats.x_mean
    out[..., 1] = xy[..., 1] * stats.y_scale
    return out


# ---------------------------------------------------------------------------
# per-modality normalization (applied when assembling batches)


def _normalize_agents(hist: np.ndarray, stats: NormStats) -> np.ndarray:
    out = hist.copy()
    out[..., 0] = (hist[..., 0] - stats.x_mean) / stats.x_std
    out[..., 1] = hist[..., 1] / stats.y_scale
    out[..., 4] = hist[..., 4] / stats.x_std
    out[..., 5] = hist[..., 5] / stats.y_scale
    return out


def _normalize_lanes(lanes: np.ndarray, stats: NormStats) -> np.ndarray:
    out = lanes.copy()
    out[..., 0] = (lanes[..., 0] - stats.x_mean) / stats.x_std
    out[..., 1] = lanes[..., 1] / stats.y_scale
    for j in (2, 4, 6):  # boundary / connection vectors scale without shift
        out[..., j] = lanes[..., j] / stats.x_std
        out[..., j + 1] = lanes[..., j + 1] / stats.y_scale
    out[..., 8] = lanes[..., 8] / stats.x_std
    return out


def _normalize_statics(statics: np.ndarray, stats: NormStats) -> np.ndarray:
    out = statics.copy()
    out[..., 0] = (statics[..., 0] - stats.x_mean) / stats.x_std
    out[..., 1] = statics[..., 1] / stats.y_scale
    return out


@dataclass
class Batch:
    """Stacked, normalized model inputs plus anchors in meters.

    Agent slot 0 carries the ego's own history; slots 1.. are neighbors and
    are the part nulled by classifier-free-guidance masking.
    """
    agents: np.ndarray        # (B, 1+Nn, T, 11) normalized
    agent_step_valid: np.ndarray   # (B, 1+Nn, T)
    agent_valid: np.ndarray   # (B, 1+Nn)
    agent_anchor: np.ndarray  # (B, 1+Nn, 2) meters
    lanes: np.ndarray         # (B, Nl, P, 12) normalized
    lane_valid: np.ndarray    # (B, Nl)
    lane_anchor: np.ndarray   # (B, Nl, 2) meters
    nav: np.ndarray           # (B, Nv, P, 12) normalized
    nav_valid: np.ndarray     # (B, Nv)
    statics: np.ndarray       # (B, Ns, 9) normalized
    static_valid: np.ndarray  # (B, Ns)
    static_anchor: np.ndarray  # (B, Ns, 2) meters
    target: np.ndarray | None  # (B, L, 4) normalized model trajectory
    normalized: bool = True

    @property
    def size(self) -> int:
        return self.agents.shape[0]

    def null_neighbors(self) -> "Batch":
        """Null condition: zero the neighbor slots, keep the ego history."""
        agents = self.agents.copy()
        agents[:, 1:] = 0.0
        step = self.agent_step_valid.copy()
        step[:, 1:] = 0.0
        valid = self.agent_valid.copy()
        valid[:, 1:] = 0.0
        return replace(self, agents=agents, agent_step_valid=step, agent_valid=valid)

    def mask_neighbors(self, drop: np.ndarray) -> "Batch":
        """Per-item Bernoulli nulling; ``drop`` is a (B,) 0/1 array."""
        keep = 1.0 - drop.reshape(-1, 1, 1, 1)
        agents = self.agents.copy()
        agents[:, 1:] *= keep
        step = self.agent_step_valid.copy()
        step[:, 1:] *= keep[..., 0]
        valid = self.agent_valid.copy()
        valid[:, 1:] *= keep[..., 0, 0]
        return replace(self, agents=agents, agent_step_valid=step, agent_valid=valid)


def prepare_batch(frames, stats: NormStats, cfg: Config) -> Batch:
    """Normalize and stack frames; anchors stay in meters for the attention
    distance matrix."""
    B = len(frames)
    T, Nn = cfg.num_past_steps, cfg.num_neighbors
    agents = np.zeros((B, 1 + Nn, T, AGENT_DIM))
    astep = np.zeros((B, 1 + Nn, T))
    avalid = np.zeros((B, 1 + Nn))
    aanchor = np.zeros((B, 1 + Nn, 2))
    lanes = np.zeros((B, cfg.num_lanes, cfg.points_per_polyline, LANE_DIM))
    lvalid = np.zeros((B, cfg.num_lanes))
    lanchor = np.zeros((B, cfg.num_lanes, 2))
    nav = np.zeros((B, cfg.num_nav_lanes, cfg.points_per_polyline, LANE_DIM))
    nvalid = np.zeros((B, cfg.num_nav_lanes))
    statics = np.zeros((B, max(cfg.num_statics, 1), STATIC_DIM))
    svalid = np.zeros((B, max(cfg.num_statics, 1)))
    sanchor = np.zeros((B, max(cfg.num_statics, 1), 2))
    has_future = all(f.future is not None for f in frames)
    target = np.zeros((B, cfg.traj_len, MODEL_DIM)) if has_future else None

    for i, f in enumerate(frames):
        raw_agents = np.concatenate([f.ego_history[None], f.neighbors], axis=0)
        raw_step = np.concatenate([np.ones((1, T)), f.neighbor_valid], axis=0)
        agents[i] = _normalize_agents(raw_agents, stats) * raw_step[..., None]
        astep[i] = raw_step
        avalid[i] = (raw_step.sum(axis=1) > 0).astype(np.float64)
        aanchor[i] = raw_agents[:, -1, 0:2]
        lanes[i] = _normalize_lanes(f.lanes, stats) * f.lane_valid[:, None, None]
        lvalid[i] = f.lane_valid
        lanchor[i] = f.lanes[:, :, 0:2].mean(axis=1)
        nav[i] = _normalize_lanes(f.nav, stats) * f.nav_valid[:, None, None]
        nvalid[i] = f.nav_valid
        ns = f.statics.shape[0]
        if ns:
            statics[i, :ns] = _normalize_statics(f.statics, stats) * f.static_valid[:, None]
            svalid[i, :ns] = f.static_valid
            sanchor[i, :ns] = f.statics[:, 0:2]
        if has_future:
            target[i] = traj_to_model(f.future, stats)

    return Batch(agents=agents, agent_step_valid=astep, agent_valid=avalid,
                 agent_anchor=aanchor, lanes=lanes, lane_valid=lvalid,
                 lane_anchor=lanchor, nav=nav, nav_valid=nvalid,
                 statics=statics, static_valid=svalid, static_anchor=sanchor,
                 target=target)


# ---------------------------------------------------------------------------
# augmentation


def _heading_from_velocity(vx, vy, fallback):
    speed = np.hypot(vx, vy)
    h = np.arctan2(vy, vx)
    return np.where(speed < 1e-3, fallback, h)


def augment(frame: ScenarioFrame, rng: np.random.Generator) -> ScenarioFrame:
    """Perturb the ego's current state and re-interpolate the future prefix.

    The future's first 21 points (2 s) are replaced by a quintic between the
    perturbed state and the untouched state at the 2 s mark, so the model
    learns to recover toward the expert path from off-nominal starts.
    """
    if frame.future is None:
        raise ValueError("augment: frame has no ground-truth future")
    out = frame.copy()
    out.future = frame.future.copy()
    fut = frame.future
    n = _AUG_HORIZON_STEPS

    dx = rng.uniform(-AUG_DX, AUG_DX)
    dy = rng.uniform(-AUG_DY, AUG_DY)
    dth = rng.uniform(-AUG_DTHETA, AUG_DTHETA)
    dv = rng.uniform(-AUG_DV, AUG_DV)
    v_new = max(0.0, frame.ego_speed + dv)

    p0 = np.array([dx, dy])
    v0 = v_new * np.array([np.cos(dth), np.sin(dth)])
    a0 = frame.ego_accel * np.array([np.cos(dth), np.sin(dth)])
    # boundary state at the seam from central differences on the original path
    p1 = fut[n, 0:2]
    v1 = (fut[n + 1, 0:2] - fut[n - 1, 0:2]) / (2 * DT)
    a1 = (fut[n + 1, 0:2] - 2 * fut[n, 0:2] + fut[n - 1, 0:2]) / (DT * DT)

    horizon = n * DT
    coeffs = quintic_fit(p0, v0, a0, p1, v1, a1, horizon)
    ts = np.arange(n + 1) * DT
    xy = quintic_eval(coeffs, ts)
    vel = quintic_eval(coeffs, ts, order=1)
    heading = _heading_from_velocity(vel[:, 0], vel[:, 1], fallback=dth)

    out.future[:n, 0:2] = xy[:n]
    out.future[:n, 2] = heading[:n]
    out.future[0] = [dx, dy, dth]   # boundary exact by construction
    out.future[n] = fut[n]          # seam row keeps the original state verbatim

    out.ego_speed = v_new
    # the ego history's current-frame row carries the perturbed state
    out.ego_history[-1, 0] = dx
    out.ego_history[-1, 1] = dy
    out.ego_history[-1, 2] = np.cos(dth)
    out.ego_history[-1, 3] = np.sin(dth)
    out.ego_history[-1, 4] = v0[0]
    out.ego_history[-1, 5] = v0[1]
    return out
