"""
Segment knapsack and stability certificates
===========================================

From a per-frame score profile to a budgeted clip summary, then the
sensitivity side: how wrong can a predicted profile be before the chosen
summary stops being optimal, and how to certify that it hasn't.
"""

import numpy as np

from videosum.knapsack import KPInstance, generate_summary, solve_kp
from videosum.metrics import (cis, inclusion_intervals,
                              make_sensitivity_context, psi_terms, wir, wse)
from videosum.segmentation import clip_values, kts_segment

rng = np.random.default_rng(0)

# A 48-frame video with two high-importance stretches.  The features change
# where the content changes, so the kernel segmenter can find the cuts.
n = 48
truth = np.full(n, 0.2)
truth[6:14] = 0.85    # first highlight
truth[30:40] = 0.7    # second, longer highlight
features = np.column_stack([truth, 1 - truth]) + rng.normal(0, 0.05, (n, 2))

seg = kts_segment(features, max_segments=8, penalty_coeff=0.1)
print("boundaries:", seg.boundaries.tolist())
print("segment lengths:", seg.weights.tolist())

# Clip value = mean score over the clip; budget = floor(rho * N) frames.
values = clip_values(truth, seg)
print("clip values:", np.round(values, 3).tolist())
frames, summary = generate_summary(truth, seg, rho=0.3)
print(f"budget {int(np.floor(0.3 * n))} frames -> picked clips "
      f"{np.flatnonzero(summary.selection).tolist()}, "
      f"used {summary.total_weight} frames, value {summary.total_value:.3f}")

# Now pretend the profile came from a model: same shape, some error.
predicted = np.clip(truth + rng.normal(0, 0.04, n), 0, 1)
ctx = make_sensitivity_context(clip_values(truth, seg), seg.weights, 0.3,
                               clip_values(predicted, seg))
print("\nprediction deltas per clip:", np.round(ctx.deltas, 3).tolist())
print("risen-excluded clips:", ctx.gamma0_plus.tolist(),
      " fallen-included clips:", ctx.gamma1_minus.tolist())

# The certificate: a non-positive score proves no selection can overtake the
# true optimum under these predictions.
score = cis(ctx)
print("psi terms:", tuple(round(float(p), 3) for p in psi_terms(ctx)))
print(f"certificate value: {score:.3f} "
      f"({'stable: certified' if score <= 0 else 'not certified'})")
check = solve_kp(KPInstance(ctx.predicted, ctx.weights, ctx.capacity))
print("re-solving with predicted profits picks the same clips:",
      bool(np.array_equal(check.selection, ctx.y_star.selection)))

# Per-clip safe intervals: a single profit may move anywhere inside its
# interval without dethroning the optimum.  Push one profit to an interval
# end and re-solve to see the guarantee hold.
iv = inclusion_intervals(ctx)
for i in range(ctx.num_items):
    print(f"clip {i}: delta in [{iv.lower[i]:+.3f}, {iv.upper[i]:+.3f}]"
          f"  (prediction delta {ctx.deltas[i]:+.3f}, "
          f"{'inside' if iv.contains(ctx.deltas)[i] else 'outside'})")
i = int(ctx.y_star.selection.argmax())            # an included clip
bumped = ctx.values.copy()
bumped[i] += iv.lower[i] + 1e-9                   # worst allowed drop
again = solve_kp(KPInstance(np.maximum(bumped, 0), ctx.weights, ctx.capacity))
print(f"dropping clip {i}'s profit to its interval floor keeps it selected:",
      bool(again.selection[i]))

print(f"\nweighted inclusion rate: {wir(ctx, iv):.3f}")
print(f"weighted score error:     {wse(ctx):.3f}")
