"""Exact 0/1 knapsack machinery for summary selection.

The DP runs over integer capacity (frame counts) with real-valued profits, so
optimal values are exact float arithmetic and never rounded.  All routines
share one suffix table best[i][c] = optimal value using items i.. with
capacity c, which supports deterministic lexicographic tie-breaking, optimum
counting, and enumeration with co-optimal back-pointers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .segmentation import SegmentList, clip_values

__all__ = [
    "KPInstance",
    "BinarySummary",
    "OptimaSet",
    "StudyRow",
    "solve_kp",
    "count_optima",
    "enumerate_optima",
    "generate_summary",
    "kp_multiplicity_study",
    "quantize_values",
    "study_rows_to_csv",
    "STUDY_CSV_HEADER",
]


@dataclass(frozen=True)
class KPInstance:
    """values >= 0 (floats), positive integer weights, integer capacity >= 0."""

    values: np.ndarray
    weights: np.ndarray
    capacity: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        w = np.asarray(self.weights)
        if v.ndim != 1 or w.ndim != 1 or v.size != w.size:
            raise ValueError("values and weights must be 1-D arrays of equal length")
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            raise ValueError("values must be finite and non-negative")
        if w.dtype.kind not in ("i", "u") or np.any(w < 1):
            raise ValueError("weights must be positive integers")
        if int(self.capacity) != self.capacity or self.capacity < 0:
            raise ValueError("capacity must be a non-negative integer")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", np.asarray(w, dtype=np.int64))
        object.__setattr__(self, "capacity", int(self.capacity))

    @property
    def num_items(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class BinarySummary:
    """A feasible selection with its value/weight bookkeeping."""

    selection: np.ndarray
    total_value: float
    total_weight: int

    @classmethod
    def from_selection(cls, inst: KPInstance, y: np.ndarray, value: float | None = None) -> "BinarySummary":
        y = np.asarray(y, dtype=np.int64)
        tw = int(inst.weights @ y)
        if tw > inst.capacity:
            raise ValueError(f"selection weight {tw} exceeds capacity {inst.capacity}")
        if value is None:
            # Accumulate in the DP's association order (later items first) so
            # the value is bit-identical to what the suffix table reports.
            value = 0.0
            for i in range(inst.num_items - 1, -1, -1):
                if y[i]:
                    value += inst.values[i]
        return cls(selection=y, total_value=float(value), total_weight=tw)


@dataclass(frozen=True)
class OptimaSet:
    """Distinct optimal selections; ``complete`` is False when truncated at a limit."""

    selections: list
    complete: bool


def _suffix_table(inst: KPInstance) -> np.ndarray:
    """best[i][c] = optimal value using items i..M-1 under capacity c."""
    m, cap = inst.num_items, inst.capacity
    best = np.zeros((m + 1, cap + 1))
    for i in range(m - 1, -1, -1):
        wi, vi = int(inst.weights[i]), inst.values[i]
        best[i] = best[i + 1]
        if wi <= cap:
            np.maximum(best[i, wi:], best[i + 1, : cap + 1 - wi] + vi, out=best[i, wi:])
    return best


def solve_kp(inst: KPInstance) -> BinarySummary:
    """Exact optimum; ties resolve to the lexicographically smallest selection.

    (Item 0 excluded before included, then item 1, and so on.  The comparisons
    driving the walk are against values the max itself produced, so float
    equality is exact here.)
    """
    best = _suffix_table(inst)
    m = inst.num_items
    y = np.zeros(m, dtype=np.int64)
    c = inst.capacity
    for i in range(m):
        if best[i + 1, c] == best[i, c]:
            continue  # excluding item i still achieves the optimum
        y[i] = 1
        c -= int(inst.weights[i])
    return BinarySummary.from_selection(inst, y, value=float(best[0, inst.capacity]))


def count_optima(inst: KPInstance) -> int:
    """Number of distinct optimal selections, by a counting DP over the suffix table."""
    best = _suffix_table(inst)
    m, cap = inst.num_items, inst.capacity
    cnt = np.ones(cap + 1, dtype=np.int64)
    for i in range(m - 1, -1, -1):
        wi, vi = int(inst.weights[i]), inst.values[i]
        nxt = np.where(best[i + 1] == best[i], cnt, 0)
        if wi <= cap:
            include_ok = best[i, wi:] == best[i + 1, : cap + 1 - wi] + vi
            nxt[wi:] += np.where(include_ok, cnt[: cap + 1 - wi], 0)
        cnt = nxt
    return int(cnt[cap])


def enumerate_optima(inst: KPInstance, limit: int | None = None) -> OptimaSet:
    """All distinct optimal selections by DFS over the co-optimal back-pointers.

    Exclusion branches first, so the enumeration is in lexicographic order and
    its first element always equals :func:`solve_kp`'s answer.  With ``limit``
    set, at most that many selections are returned and ``complete`` reports
    whether the enumeration was exhaustive.
    """
    best = _suffix_table(inst)
    m = inst.num_items
    out: list[np.ndarray] = []
    prefix = np.zeros(m, dtype=np.int64)
    truncated = False

    def rec(i: int, c: int) -> bool:
        nonlocal truncated
        if limit is not None and len(out) >= limit:
            truncated = True
            return False
        if i == m:
            out.append(prefix.copy())
            return True
        if best[i + 1, c] == best[i, c]:
            prefix[i] = 0
            if not rec(i + 1, c):
                return False
        wi, vi = int(inst.weights[i]), inst.values[i]
        if wi <= c and vi + best[i + 1, c - wi] == best[i, c]:
            prefix[i] = 1
            ok = rec(i + 1, c - wi)
            prefix[i] = 0
            if not ok:
                return False
        return True

    rec(0, inst.capacity)
    opt_value = float(best[0, inst.capacity])
    return OptimaSet(
        selections=[BinarySummary.from_selection(inst, y, value=opt_value) for y in out],
        complete=not truncated,
    )


def generate_summary(scores: np.ndarray, seg: SegmentList, rho: float):
    """Budgeted frame summary: knapsack over segment mean-scores and lengths.

    Returns ``(frame_selection, clip_summary)`` where ``frame_selection`` is
    the {0,1}^N expansion of the selected clips and ``clip_summary`` the
    segment-level :class:`BinarySummary`.  The budget is ``floor(rho * N)``
    frames.
    """
    if not (0 < rho <= 1):
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    n = seg.num_frames
    inst = KPInstance(
        values=clip_values(scores, seg),
        weights=seg.weights,
        capacity=int(np.floor(rho * n)),
    )
    clip_summary = solve_kp(inst)
    frames = np.zeros(n, dtype=np.int64)
    for j, picked in enumerate(clip_summary.selection):
        if picked:
            frames[seg.boundaries[j]:seg.boundaries[j + 1]] = 1
    return frames, clip_summary


def quantize_values(values: np.ndarray, num_bins: int) -> np.ndarray:
    """Snap values to the centers of ``num_bins`` uniform bins over [0, 1].

    Out-of-range values are clamped into the edge bins, so the result is
    always a valid non-negative profit vector.
    """
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    v = np.asarray(values, dtype=np.float64)
    bins = np.clip(np.floor(v * num_bins).astype(np.int64), 0, num_bins - 1)
    return (bins + 0.5) / num_bins


@dataclass(frozen=True)
class StudyRow:
    K: int
    expected_num_optima: float
    expected_l1_delta: float
    stderr_optima: float
    stderr_delta: float


STUDY_CSV_HEADER = "K,expected_num_optima,expected_l1_delta,stderr_optima,stderr_delta"


def kp_multiplicity_study(
    N_items: int = 15,
    K_list=(4, 16, 64, 256, 1024),
    trials: int = 2000,
    rho: float = 0.15,
    weight_dist: tuple = (1, 10),
    seed: int = 0,
) -> list[StudyRow]:
    """How value quantization multiplies optima and destabilizes selections.

    Per trial: draw profits v1 ~ U(0,1)^M and integer weights uniform in
    ``weight_dist`` (inclusive); quantize v1 to K bins and count the distinct
    optima of the quantized instance; then redraw v2 = v1 + dv with
    dv ~ N(0, (1/K) I), quantize, and record the L1 distance between the two
    deterministic solutions.  Rows carry Monte-Carlo means and standard errors.

    Trials use per-(K, trial) derived seeds, so results do not depend on how
    the loop is scheduled.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    lo, hi = weight_dist
    rows = []
    for k_index, K in enumerate(K_list):
        counts = np.empty(trials)
        l1s = np.empty(trials)
        for trial in range(trials):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=seed, spawn_key=(k_index, trial))
            )
            w = rng.integers(lo, hi + 1, size=N_items)
            v1 = rng.uniform(0.0, 1.0, size=N_items)
            cap = int(np.floor(rho * w.sum()))
            inst1 = KPInstance(quantize_values(v1, K), w, cap)
            counts[trial] = count_optima(inst1)
            dv = rng.normal(0.0, np.sqrt(1.0 / K), size=N_items)
            inst2 = KPInstance(quantize_values(v1 + dv, K), w, cap)
            y1 = solve_kp(inst1).selection
            y2 = solve_kp(inst2).selection
            l1s[trial] = np.abs(y1 - y2).sum()
        rows.append(
            StudyRow(
                K=int(K),
                expected_num_optima=float(counts.mean()),
                expected_l1_delta=float(l1s.mean()),
                stderr_optima=float(counts.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0,
                stderr_delta=float(l1s.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0,
            )
        )
    return rows


def study_rows_to_csv(rows: list[StudyRow]) -> str:
    lines = [STUDY_CSV_HEADER]
    for r in rows:
        lines.append(
            f"{r.K},{r.expected_num_optima!r},{r.expected_l1_delta!r},"
            f"{r.stderr_optima!r},{r.stderr_delta!r}"
        )
    return "\n".join(lines) + "\n"
