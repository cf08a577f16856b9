"""Fine-grained trajectory tokenization: overlapping fixed-length segments.

A trajectory of L points is cut into K segments of ``seg_len`` points with
``overlap`` shared points between neighbors; indices are zero-based and
segment ranges half-open. Besides the direct numpy operations, the layout
exposes two constant matrices so that segmentation and overlap-averaged
reassembly run as single matmuls inside the differentiable model:

* ``segment_matrix`` (K*seg_len, L): 0/1 selection of the covering point
* ``average_matrix`` (L, K*seg_len): 1.0 for uniquely covered points, 0.5 for
  each of the two predictions of an overlapped point
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SegmentLayout", "segment", "reassemble", "consistency_loss"]


@dataclass(frozen=True)
class SegmentLayout:
    traj_len: int
    seg_len: int
    overlap: int

    def __post_init__(self):
        if not (0 <= self.overlap < self.seg_len <= self.traj_len):
            raise ValueError(f"segment layout needs 0 <= overlap < seg_len <= traj_len, "
                             f"got ({self.traj_len}, {self.seg_len}, {self.overlap})")
        if (self.traj_len - self.seg_len) % self.stride != 0:
            raise ValueError(f"layout ({self.traj_len}, {self.seg_len}, {self.overlap}) "
                             f"does not tile the trajectory exactly")

    @property
    def stride(self) -> int:
        return self.seg_len - self.overlap

    @property
    def num_segments(self) -> int:
        return (self.traj_len - self.seg_len) // self.stride + 1

    def start(self, k: int) -> int:
        """Zero-based first point index of segment k in [0, K)."""
        return k * self.stride

    def segment_matrix(self) -> np.ndarray:
        K, Ls = self.num_segments, self.seg_len
        m = np.zeros((K * Ls, self.traj_len))
        for k in range(K):
            for j in range(Ls):
                m[k * Ls + j, self.start(k) + j] = 1.0
        return m

    def average_matrix(self) -> np.ndarray:
        K, Ls = self.num_segments, self.seg_len
        counts = np.zeros(self.traj_len)
        for k in range(K):
            counts[self.start(k):self.start(k) + Ls] += 1.0
        m = np.zeros((self.traj_len, K * Ls))
        for k in range(K):
            for j in range(Ls):
                i = self.start(k) + j
                m[i, k * Ls + j] = 1.0 / counts[i]
        return m


def segment(traj: np.ndarray, layout: SegmentLayout) -> np.ndarray:
    """Cut (..., L, C) into (..., K, seg_len, C) overlapping segments."""
    traj = np.asarray(traj)
    if traj.shape[-2] != layout.traj_len:
        raise ValueError(f"segment: trajectory length {traj.shape[-2]} does not match "
                         f"layout length {layout.traj_len}")
    parts = [traj[..., layout.start(k):layout.start(k) + layout.seg_len, :]
             for k in range(layout.num_segments)]
    return np.stack(parts, axis=-3)


def reassemble(segments: np.ndarray, layout: SegmentLayout) -> np.ndarray:
    """Merge (..., K, seg_len, C) back to (..., L, C), averaging overlaps."""
    segments = np.asarray(segments)
    K, Ls = layout.num_segments, layout.seg_len
    if segments.shape[-3:-1] != (K, Ls):
        raise ValueError(f"reassemble: expected segment block ({K}, {Ls}, C), "
                         f"got {segments.shape}")
    out = np.zeros(segments.shape[:-3] + (layout.traj_len, segments.shape[-1]))
    counts = np.zeros(layout.traj_len)
    for k in range(K):
        sl = slice(layout.start(k), layout.start(k) + Ls)
        out[..., sl, :] += segments[..., k, :, :]
        counts[sl] += 1.0
    return out / counts[:, None]


def consistency_loss(segments: np.ndarray, layout: SegmentLayout) -> float:
    """Mean squared disagreement over the K-1 adjacent overlap regions.

    Each pair contributes the mean over its overlap elements, then pairs are
    averaged, so the value is independent of overlap length and channel
    count. Returns 0 for a single segment or zero overlap.
    """
    K, Lo = layout.num_segments, layout.overlap
    if K < 2 or Lo == 0:
        return 0.0
    total = 0.0
    for k in range(K - 1):
        a = segments[..., k, layout.seg_len - Lo:, :]
        b = segments[..., k + 1, :Lo, :]
        total += float(((a - b) ** 2).mean())
    return total / (K - 1)
