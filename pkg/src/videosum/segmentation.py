"""Kernel temporal segmentation: split a feature sequence into homogeneous clips.

The objective is the classic within-segment scatter sum_j sum_{t in seg_j}
||x_t - mu_j||^2 in its linear-kernel form, which prefix sums reduce to an
O(1) query per candidate segment.  Dynamic programming picks the optimal
boundaries for every allowed number of change points m, and a penalized
criterion objective(m) + penalty_coeff * m * (log(N/m) + 1) selects m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["SegmentList", "kts_segment", "clip_values"]


@dataclass(frozen=True)
class SegmentList:
    """Disjoint, covering clip boundaries for an N-frame video.

    ``boundaries`` holds M+1 ordered frame indices 0 = t_0 < t_1 < ... < t_M = N;
    segment i is the half-open frame range [t_i, t_{i+1}).
    """

    boundaries: np.ndarray
    values: np.ndarray | None = field(default=None)

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=np.int64)
        object.__setattr__(self, "boundaries", b)
        if b.ndim != 1 or b.size < 2:
            raise ValueError("boundaries must be a 1-D index array with at least 2 entries")
        if b[0] != 0:
            raise ValueError("boundaries must start at frame 0")
        if np.any(np.diff(b) < 1):
            raise ValueError("boundaries must be strictly increasing (segments of >= 1 frame)")
        if self.values is not None:
            v = np.asarray(self.values, dtype=np.float64)
            if v.shape != (self.num_segments,):
                raise ValueError("values must have one entry per segment")
            object.__setattr__(self, "values", v)

    @property
    def num_segments(self) -> int:
        return self.boundaries.size - 1

    @property
    def num_frames(self) -> int:
        return int(self.boundaries[-1])

    @property
    def weights(self) -> np.ndarray:
        """Segment lengths in frames; always >= 1 and summing to N."""
        return np.diff(self.boundaries)

    def to_json_dict(self) -> dict:
        return {"boundaries": [int(t) for t in self.boundaries]}


def _scatter_fn(features: np.ndarray):
    """Return scatter(i, j): within-segment scatter of frames [i, j)."""
    x = np.asarray(features, dtype=np.float64)
    s1 = np.zeros((x.shape[0] + 1, x.shape[1]))
    np.cumsum(x, axis=0, out=s1[1:])
    s2 = np.zeros(x.shape[0] + 1)
    np.cumsum((x * x).sum(axis=1), out=s2[1:])

    def scatter(i: int, j: int) -> float:
        n = j - i
        seg_sum = s1[j] - s1[i]
        return float(s2[j] - s2[i] - seg_sum @ seg_sum / n)

    return scatter


def kts_segment(features: np.ndarray, max_segments: int, penalty_coeff: float = 1.0) -> SegmentList:
    """Segment an ``N x D_in`` feature sequence at up to ``max_segments`` change points.

    For each change-point count m the dynamic program finds the boundary set
    minimizing total within-segment scatter; the returned segmentation uses
    the m minimizing ``scatter(m) + penalty_coeff * m * (log(N/m) + 1)``
    (the m = 0 penalty is 0).  Ties on the criterion go to the smaller m.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"features must be N x D_in, got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 frames to segment")
    if max_segments < 1:
        raise ValueError("max_segments must be >= 1")
    if max_segments >= n:
        raise ValueError(f"max_segments must be < N ({n}), got {max_segments}")

    scatter = _scatter_fn(x)
    max_m = max_segments

    # cost[k][j]: minimal scatter of frames [0, j) split at exactly k change
    # points; parent[k][j] backtracks the last boundary.
    inf = math.inf
    cost = np.full((max_m + 1, n + 1), inf)
    parent = np.zeros((max_m + 1, n + 1), dtype=np.int64)
    for j in range(1, n + 1):
        cost[0, j] = scatter(0, j)
    for k in range(1, max_m + 1):
        # With k change points the prefix needs at least k+1 frames.
        for j in range(k + 1, n + 1):
            best, arg = inf, k
            for i in range(k, j):
                c = cost[k - 1, i] + scatter(i, j)
                if c < best:
                    best, arg = c, i
            cost[k, j] = best
            parent[k, j] = arg

    def criterion(m: int) -> float:
        pen = 0.0 if m == 0 else penalty_coeff * m * (math.log(n / m) + 1.0)
        return cost[m, n] + pen

    feasible = [m for m in range(max_m + 1) if np.isfinite(cost[m, n])]
    best_m = min(feasible, key=lambda m: (criterion(m), m))

    bounds = [n]
    j, k = n, best_m
    while k > 0:
        j = int(parent[k, j])
        bounds.append(j)
        k -= 1
    bounds.append(0)
    return SegmentList(boundaries=np.array(sorted(bounds), dtype=np.int64))


def clip_values(scores: np.ndarray, seg: SegmentList) -> np.ndarray:
    """Per-segment mean score; stays inside [0, 1] when the scores do."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size != seg.num_frames:
        raise ValueError(
            f"scores length {s.shape} does not match segmentation over {seg.num_frames} frames"
        )
    sums = np.add.reduceat(s, seg.boundaries[:-1])
    return sums / seg.weights
