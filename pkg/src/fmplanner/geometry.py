"""Poses, angle wrapping, and the ego-centric rigid transform.

The ego frame is front-left-up: +x along the vehicle heading, +y to its
left. Transforming a scene into the ego frame maps the ego's own pose to
(0, 0, 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    r = np.remainder(np.asarray(a, dtype=np.float64) + np.pi, TWO_PI) - np.pi
    r = np.where(r == -np.pi, np.pi, r)
    return float(r) if np.ndim(a) == 0 else r


@dataclass
class Pose:
    x: float
    y: float
    heading: float

    def __post_init__(self):
        self.heading = wrap_angle(self.heading)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading])


def to_ego_frame(p: Pose, ego: Pose) -> Pose:
    """Express ``p`` in the frame anchored at ``ego`` (rotation-translation)."""
    c, s = np.cos(ego.heading), np.sin(ego.heading)
    dx, dy = p.x - ego.x, p.y - ego.y
    return Pose(c * dx + s * dy, -s * dx + c * dy, wrap_angle(p.heading - ego.heading))


def from_ego_frame(p: Pose, ego: Pose) -> Pose:
    """Inverse of :func:`to_ego_frame`."""
    c, s = np.cos(ego.heading), np.sin(ego.heading)
    return Pose(ego.x + c * p.x - s * p.y,
                ego.y + s * p.x + c * p.y,
                wrap_angle(p.heading + ego.heading))


def points_to_ego(xy: np.ndarray, ego: Pose) -> np.ndarray:
    """Transform an (..., 2) array of points into the ego frame."""
    c, s = np.cos(ego.heading), np.sin(ego.heading)
    d = xy - np.array([ego.x, ego.y])
    out = np.empty_like(d)
    out[..., 0] = c * d[..., 0] + s * d[..., 1]
    out[..., 1] = -s * d[..., 0] + c * d[..., 1]
    return out


def points_from_ego(xy: np.ndarray, ego: Pose) -> np.ndarray:
    c, s = np.cos(ego.heading), np.sin(ego.heading)
    out = np.empty_like(xy)
    out[..., 0] = ego.x + c * xy[..., 0] - s * xy[..., 1]
    out[..., 1] = ego.y + s * xy[..., 0] + c * xy[..., 1]
    return out


def vectors_to_ego(v: np.ndarray, ego: Pose) -> np.ndarray:
    """Rotate (..., 2) direction/velocity vectors into the ego frame."""
    c, s = np.cos(ego.heading), np.sin(ego.heading)
    out = np.empty_like(v)
    out[..., 0] = c * v[..., 0] + s * v[..., 1]
    out[..., 1] = -s * v[..., 0] + c * v[..., 1]
    return out


def poses_to_ego(xyh: np.ndarray, ego: Pose) -> np.ndarray:
    """Transform an (..., 3) array of (x, y, heading) rows into the ego frame."""
    out = np.empty_like(xyh)
    out[..., :2] = points_to_ego(xyh[..., :2], ego)
    out[..., 2] = wrap_angle(xyh[..., 2] - ego.heading)
    return out


def poses_from_ego(xyh: np.ndarray, ego: Pose) -> np.ndarray:
    out = np.empty_like(xyh)
    out[..., :2] = points_from_ego(xyh[..., :2], ego)
    out[..., 2] = wrap_angle(xyh[..., 2] + ego.heading)
    return out
