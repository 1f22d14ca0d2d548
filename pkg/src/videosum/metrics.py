"""Evaluation metrics: rank correlations, highlight MAP, F1, and the
knapsack-sensitivity certificates (CIS, inclusion intervals, WIR, WSE).

The sensitivity half treats an importance-score prediction as a perturbation
of the true per-clip profits of a 0/1 knapsack and asks when the true optimal
summary provably survives that perturbation.  All bounds here are computed by
exact re-solves of reduced instances, so "inside the interval" is a sharp
safe/unsafe boundary, not a heuristic; brute-force theorem checks in the test
suite hold with zero counterexamples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .knapsack import BinarySummary, KPInstance, solve_kp

__all__ = [
    "SensitivityContext",
    "InclusionIntervals",
    "make_sensitivity_context",
    "kendall_tau",
    "spearman_rho",
    "average_ranks",
    "map_at_rho",
    "average_precision_at_rho",
    "f1_summary",
    "psi_terms",
    "cis",
    "inclusion_intervals",
    "wir",
    "wse",
    "annotator_coverage",
    "power_iteration_pca",
    "pca_project",
]


# ---------------------------------------------------------------------------
# Rank correlation
# ---------------------------------------------------------------------------

def _merge_count_inversions(x: np.ndarray) -> int:
    """Number of strict inversions in x, by iterative merge sort."""
    x = list(x)
    n = len(x)
    buf = x[:]
    count = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if x[j] < x[i]:
                    # x[j] jumps over the mid - i remaining left elements
                    count += mid - i
                    buf[k] = x[j]
                    j += 1
                else:
                    buf[k] = x[i]
                    i += 1
                k += 1
            buf[k:hi] = x[i:mid] if i < mid else x[j:hi]
            x[lo:hi] = buf[lo:hi]
        width *= 2
    return count


def _tie_pair_count(sorted_vals: np.ndarray) -> int:
    """Sum of g*(g-1)/2 over runs of equal values (input must be sorted)."""
    total = 0
    run = 1
    for i in range(1, len(sorted_vals)):
        if sorted_vals[i] == sorted_vals[i - 1]:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    total += run * (run - 1) // 2
    return total


def kendall_tau(a: np.ndarray, b: np.ndarray) -> float:
    """Tie-corrected rank correlation (the tau-b variant).

    Computed with sort/merge counting in O(N log N):
    ``(C - D) / sqrt((C + D + Ta) * (C + D + Tb))`` where Ta/Tb count pairs
    tied in exactly one of the inputs; pairs tied in both are discarded.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("kendall_tau needs two equal-length 1-D arrays with N >= 2")
    n = a.size
    n0 = n * (n - 1) // 2
    order = np.lexsort((b, a))
    a_sorted, b_by_a = a[order], b[order]
    n1 = _tie_pair_count(a_sorted)  # pairs tied in a
    n2 = _tie_pair_count(np.sort(b))  # pairs tied in b
    # Pairs tied in both: runs of equal (a, b) rows.
    both = 0
    run = 1
    for i in range(1, n):
        if a_sorted[i] == a_sorted[i - 1] and b_by_a[i] == b_by_a[i - 1]:
            run += 1
        else:
            both += run * (run - 1) // 2
            run = 1
    both += run * (run - 1) // 2
    discordant = _merge_count_inversions(b_by_a)
    concordant = n0 - n1 - n2 + both - discordant
    ties_a_only = n1 - both
    ties_b_only = n2 - both
    denom = math.sqrt(
        float(concordant + discordant + ties_a_only)
        * float(concordant + discordant + ties_b_only)
    )
    if denom == 0:
        raise ValueError("kendall_tau undefined: an input is constant (all pairs tied)")
    return (concordant - discordant) / denom


def average_ranks(a: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the average of their positions."""
    a = np.asarray(a, dtype=np.float64)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.size)
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and a[order[j + 1]] == a[order[i]]:
            j += 1
        # positions i..j (0-based) share the average rank ((i+1) + (j+1)) / 2
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def spearman_rho(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation of average-tie ranks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("spearman_rho needs two equal-length 1-D arrays with N >= 2")
    ra, rb = average_ranks(a), average_ranks(b)
    da = ra - ra.mean()
    db = rb - rb.mean()
    denom = math.sqrt(float(np.sum(da * da)) * float(np.sum(db * db)))
    if denom == 0:
        raise ValueError("spearman_rho undefined: an input has zero rank variance")
    return float(np.sum(da * db)) / denom


# ---------------------------------------------------------------------------
# Highlight detection protocol
# ---------------------------------------------------------------------------

def _shot_means(scores: np.ndarray, shot_len: int) -> np.ndarray:
    n = scores.size
    bounds = np.arange(0, n, shot_len)
    return np.array([scores[s:s + shot_len].mean() for s in bounds])


def average_precision_at_rho(pred: np.ndarray, gt: np.ndarray, fps: float, rho: float) -> float:
    """AP of predicted shot ranking against budget-thresholded true highlights.

    The video splits into 5-second shots (``ceil(5 * fps)`` frames, last shot
    possibly short).  The top ``ceil(rho * num_shots)`` shots by ground-truth
    mean score are the positives (ties go to the earlier shot), and the
    predicted shot ranking (descending mean, ties to the earlier shot) is
    scored by average precision.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 1:
        raise ValueError("pred and gt must be equal-length 1-D score vectors")
    if not (0 < rho <= 1):
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    if fps <= 0:
        raise ValueError("fps must be positive")
    shot_len = math.ceil(5 * fps)
    pred_means = _shot_means(pred, shot_len)
    gt_means = _shot_means(gt, shot_len)
    num_shots = pred_means.size
    if num_shots < 2:
        raise ValueError(f"need >= 2 shots, got {num_shots} (video too short for fps={fps})")
    k = math.ceil(rho * num_shots)
    by_gt = sorted(range(num_shots), key=lambda s: (-gt_means[s], s))
    positives = set(by_gt[:k])
    by_pred = sorted(range(num_shots), key=lambda s: (-pred_means[s], s))
    hits = 0
    precisions = []
    for rank, shot in enumerate(by_pred, start=1):
        if shot in positives:
            hits += 1
            precisions.append(hits / rank)
    return float(np.mean(precisions))


def map_at_rho(preds, gts, fps, rho: float) -> float:
    """Mean of per-video :func:`average_precision_at_rho` over a dataset.

    ``fps`` may be a scalar (shared) or a per-video sequence.
    """
    preds = list(preds)
    gts = list(gts)
    if len(preds) != len(gts) or not preds:
        raise ValueError("need equally many predictions and ground truths (>= 1)")
    fps_list = [fps] * len(preds) if np.isscalar(fps) else list(fps)
    aps = [
        average_precision_at_rho(p, g, f, rho)
        for p, g, f in zip(preds, gts, fps_list)
    ]
    return float(np.mean(aps))


def f1_summary(pred_summary: np.ndarray, gt_summary: np.ndarray) -> float:
    """Frame-overlap F1 between binary summaries; 0 when there is no overlap."""
    p = np.asarray(pred_summary)
    g = np.asarray(gt_summary)
    if p.shape != g.shape or p.ndim != 1:
        raise ValueError("summaries must be equal-length 1-D binary vectors")
    if not (np.isin(p, (0, 1)).all() and np.isin(g, (0, 1)).all()):
        raise ValueError("summaries must be binary")
    inter = int(np.sum((p == 1) & (g == 1)))
    if inter == 0:
        return 0.0
    precision = inter / int(p.sum())
    recall = inter / int(g.sum())
    return 2 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# Knapsack sensitivity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensitivityContext:
    """True clip profits vs predicted ones, around the true optimal summary.

    ``capacity`` is ``floor(rho * N)`` with N the total frame count (the sum
    of clip weights).  ``gamma0_plus`` collects excluded items whose predicted
    value rose; ``gamma1_minus`` included items whose predicted value fell.
    The two sets are disjoint by construction.
    """

    values: np.ndarray
    weights: np.ndarray
    rho: float
    capacity: int
    y_star: BinarySummary
    predicted: np.ndarray
    deltas: np.ndarray
    gamma0_plus: np.ndarray
    gamma1_minus: np.ndarray

    @property
    def num_items(self) -> int:
        return self.values.size

    @property
    def num_frames(self) -> int:
        return int(self.weights.sum())


def make_sensitivity_context(values, weights, rho: float, predicted) -> SensitivityContext:
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if values.shape != predicted.shape:
        raise ValueError("predicted values must align with true values")
    if not (0 < rho <= 1):
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    capacity = int(np.floor(rho * weights.sum()))
    inst = KPInstance(values, weights, capacity)
    y_star = solve_kp(inst)
    deltas = predicted - values
    y = y_star.selection
    return SensitivityContext(
        values=values,
        weights=weights,
        rho=float(rho),
        capacity=capacity,
        y_star=y_star,
        predicted=predicted,
        deltas=deltas,
        gamma0_plus=np.flatnonzero((y == 0) & (deltas > 0)),
        gamma1_minus=np.flatnonzero((y == 1) & (deltas < 0)),
    )


def _resolve_without(ctx: SensitivityContext, item: int, capacity: int) -> float:
    """Optimal value (under the ORIGINAL profits) once item's profit is zeroed.

    A zero-profit item is never selected by the deterministic tie-break, so
    this equals the best selection excluding ``item`` within ``capacity``.
    Negative capacity means nothing fits: value 0 (the empty summary).
    """
    if capacity < 0:
        return 0.0
    v = ctx.values.copy()
    v[item] = 0.0
    sol = solve_kp(KPInstance(v, ctx.weights, capacity))
    return float(ctx.values @ sol.selection)


def psi_terms(ctx: SensitivityContext) -> tuple[float, float]:
    """(Psi+, Psi-): worst adversarial summary values, under the true profits.

    Psi+ ranges over excluded items whose prediction rose: it is the value of
    the best summary FORCED to contain item i (v_i plus a re-solve of the
    rest within the budget shrunk by w_i frames).  Psi- ranges over included
    items whose prediction fell: the best summary forced to omit item i
    (profit zeroed, budget unchanged).  Either max is ``-inf`` when its set
    is empty.  Bounding the forced summaries is what makes the certificate in
    :func:`cis` sound: any selection that could overtake the optimum under
    the predicted profits must contain a risen excluded item or omit a fallen
    included one, so its true value is at most ``max(Psi+, Psi-)``.
    """
    psi_plus = -math.inf
    for i in ctx.gamma0_plus:
        forced = ctx.values[i] + _resolve_without(
            ctx, int(i), ctx.capacity - int(ctx.weights[i])
        )
        psi_plus = max(psi_plus, forced)
    psi_minus = -math.inf
    for i in ctx.gamma1_minus:
        psi_minus = max(psi_minus, _resolve_without(ctx, int(i), ctx.capacity))
    return psi_plus, psi_minus


def cis(ctx: SensitivityContext) -> float:
    """Confidence of the importance scores: non-positive certifies the optimum.

    ``sum(deltas over Gamma0+) - sum(deltas over Gamma1-) - v . y* + max(Psi+, Psi-)``.
    When both adversarial sets are empty the max term is dropped and the value
    is exactly ``-v . y*`` (the prediction cannot dethrone the optimum).
    """
    adversarial_mass = float(
        ctx.deltas[ctx.gamma0_plus].sum() - ctx.deltas[ctx.gamma1_minus].sum()
    )
    base = adversarial_mass - ctx.y_star.total_value
    psi_plus, psi_minus = psi_terms(ctx)
    psi = max(psi_plus, psi_minus)
    if psi == -math.inf:
        return base
    return base + psi


@dataclass(frozen=True)
class InclusionIntervals:
    """Per-item safe perturbation ranges plus the machinery behind them.

    Item i's interval is ``[lower[i], upper[i]]`` (closed at any finite end):
    perturbing profit i alone by any delta inside it keeps the true optimum
    optimal, and any delta outside loses that guarantee.  ``delta_plus`` and
    ``delta_minus`` hold the finite ends by exclusion/inclusion case (NaN for
    the other case); ``mu`` holds the greedy critical ratios (NaN where the
    reduced budget is degenerate).
    """

    lower: np.ndarray
    upper: np.ndarray
    delta_plus: np.ndarray
    delta_minus: np.ndarray
    mu: np.ndarray

    def contains(self, deltas: np.ndarray) -> np.ndarray:
        d = np.asarray(deltas, dtype=np.float64)
        return (d >= self.lower) & (d <= self.upper)


def _critical_ratio(values, weights, exclude: int, budget_frames: float):
    """Greedy critical-item ratio over all items but ``exclude``.

    Sort by value/weight descending (ties to the earlier item), walk until the
    cumulative weight strictly exceeds the budget; that item's ratio is the
    critical ratio.  Returns NaN when everything fits (degenerate budget).
    """
    idx = [i for i in range(len(values)) if i != exclude]
    idx.sort(key=lambda i: (-(values[i] / weights[i]), i))
    cum = 0
    for i in idx:
        cum += int(weights[i])
        if cum > budget_frames:
            return values[i] / weights[i]
    return math.nan


def inclusion_intervals(ctx: SensitivityContext) -> InclusionIntervals:
    """Sharp per-item safe intervals for single-profit perturbations.

    For an included item, the optimum survives while the profit does not drop
    below the best summary forced to omit the item: lower end
    ``delta_minus[i] = v . KP(v - v_i e_i, w, rho) - v . y*``.  For an
    excluded item, it survives while the profit does not overtake the best
    summary forced to contain it: upper end
    ``delta_plus[i] = v . y* - (v_i + v . KP(v - v_i e_i, w, rho - w_i/N))``.
    An excluded item that cannot fit at all is safe under any increase.  Zero
    is always inside its interval, and both ends are exact: stepping any
    finite end by an epsilon loses the optimum on some instance.

    The greedy critical ratios ``mu_k`` (budget ``rho - 1{y*_k = 0} w_k / N``)
    are computed alongside as screening diagnostics only.  Tightening the
    ends with the greedy bounds ``v_i - w_i min_k mu_k`` / ``w_i max_k mu_k -
    v_i`` looks attractive but can push an interval past zero on small
    instances (e.g. profits [0.9, 0.8, 0.75, 0.1], unit weights, one-item
    budget), so the ends come from the re-solves alone.
    """
    m = ctx.num_items
    n_frames = ctx.num_frames
    z = ctx.y_star.total_value
    y = ctx.y_star.selection
    lower = np.full(m, -math.inf)
    upper = np.full(m, math.inf)
    delta_plus = np.full(m, math.nan)
    delta_minus = np.full(m, math.nan)
    mu = np.full(m, math.nan)
    for i in range(m):
        budget = ctx.rho * n_frames - (int(ctx.weights[i]) if y[i] == 0 else 0)
        mu[i] = _critical_ratio(ctx.values, ctx.weights, i, budget)
        if y[i] == 1:
            delta_minus[i] = _resolve_without(ctx, i, ctx.capacity) - z
            lower[i] = delta_minus[i]
        else:
            wi = int(ctx.weights[i])
            if wi <= ctx.capacity:
                forced_in = ctx.values[i] + _resolve_without(ctx, i, ctx.capacity - wi)
                delta_plus[i] = z - forced_in
                upper[i] = delta_plus[i]
            # else: the item can never enter; upper stays +inf
    return InclusionIntervals(
        lower=lower, upper=upper, delta_plus=delta_plus, delta_minus=delta_minus, mu=mu
    )


def wir(ctx: SensitivityContext, intervals: InclusionIntervals) -> float:
    """Weight-normalized fraction of predictions inside their safe intervals."""
    inside = intervals.contains(ctx.deltas)
    return float(ctx.weights[inside].sum() / ctx.weights.sum())


def wse(ctx: SensitivityContext) -> float:
    """Weighted sum of absolute profit errors: ``sum w_i |delta_i|``."""
    return float(np.sum(ctx.weights * np.abs(ctx.deltas)))


# ---------------------------------------------------------------------------
# Distribution-level evaluation
# ---------------------------------------------------------------------------

def annotator_coverage(generated, annotations, threshold: float = 0.25) -> np.ndarray:
    """Coverage matrix over (video, annotator) pairs.

    ``generated[v]`` is the list of sampled score vectors for video v and
    ``annotations[v]`` the (num_annotators, N) array of human scores.  Entry
    (v, r) is the fraction of samples whose Kendall tau against annotator r
    meets the threshold.  All videos must share one annotator count.
    """
    if len(generated) != len(annotations):
        raise ValueError("need one sample list per annotated video")
    if any(len(g) == 0 for g in generated):
        raise ValueError("every video needs at least one generated sample")
    num_annotators = {np.asarray(a).shape[0] for a in annotations}
    if len(num_annotators) != 1:
        raise ValueError("videos disagree on annotator count")
    r_count = num_annotators.pop()
    out = np.zeros((len(generated), r_count))
    for vi, (samples, anns) in enumerate(zip(generated, annotations)):
        anns = np.asarray(anns, dtype=np.float64)
        for ri in range(r_count):
            hits = sum(
                1 for s in samples if kendall_tau(s, anns[ri]) >= threshold
            )
            out[vi, ri] = hits / len(samples)
    return out


def power_iteration_pca(X: np.ndarray, num_components: int = 2,
                        iters: int = 200, seed: int = 0):
    """Top principal components of the rows of X by deflated power iteration.

    Returns ``(mean, components)`` with ``components`` of shape
    ``(num_components, D)``, orthonormal, deterministically seeded.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a 2-D matrix with at least 2 rows")
    mean = X.mean(axis=0)
    xc = X - mean
    cov = xc.T @ xc
    rng = np.random.default_rng(seed)
    comps = []
    for _ in range(num_components):
        v = rng.normal(size=X.shape[1])
        v /= np.linalg.norm(v)
        for _ in range(iters):
            nv = cov @ v
            norm = np.linalg.norm(nv)
            if norm < 1e-300:
                break  # null direction: keep the current unit vector
            nv /= norm
            if np.linalg.norm(nv - v) < 1e-14:
                v = nv
                break
            v = nv
        comps.append(v)
        lam = float(v @ cov @ v)
        cov = cov - lam * np.outer(v, v)
    return mean, np.array(comps)


def pca_project(X: np.ndarray, mean: np.ndarray, components: np.ndarray) -> np.ndarray:
    """Project rows of X onto the fitted components."""
    return (np.asarray(X, dtype=np.float64) - mean) @ components.T
