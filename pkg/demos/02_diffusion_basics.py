"""
Forward noising and the reverse step grid
=========================================

Walks through the continuous half of the pipeline: importance scores are
mapped to logits, noised with a closed-form forward process, and recovered
by a short deterministic-to-stochastic reverse schedule.
"""

import numpy as np

from videosum.diffusion import (SamplerConfig, ddim_steps, forward_sample,
                                from_logit, make_schedule, reverse_step,
                                to_logit)

rng = np.random.default_rng(0)

# A score profile with one clear peak, mapped into logit space.  The clip
# keeps 0/1 finite; eps=1e-3 bounds logits to about +/-6.9.
scores = np.clip(0.5 + 0.4 * np.sin(np.linspace(0, 3 * np.pi, 24)), 0, 1)
u0 = to_logit(scores)
print("score range:", round(scores.min(), 3), "..", round(scores.max(), 3))
print("logit range:", round(u0.min(), 3), "..", round(u0.max(), 3))

# Closed-form forward marginals: u_t = sqrt(abar_t) u0 + sqrt(1-abar_t) eps.
sched = make_schedule("cosine", 1000)
for t in (1, 100, 500, 1000):
    u_t = forward_sample(u0, t, sched, rng.standard_normal(u0.shape))
    print(f"t={t:4d}  sqrt(abar)={np.sqrt(sched.abar_at(t)):.4f}  "
          f"corr(u_t,u0)={np.corrcoef(u_t, u0)[0, 1]:+.3f}")

# The reverse pass visits a thinned time grid; ten steps is the default and
# the grid always ends at t=1.
grid = ddim_steps(1000, 10)
print("10-step grid:", list(grid))

# With an oracle denoiser (one that returns the true u0) a single reverse
# sweep reconstructs the profile exactly at eta=0: the t_prev=0 step copies
# the clean estimate.
cfg = SamplerConfig(num_steps=10, eta=0.0)
u = forward_sample(u0, 1000, sched, rng.standard_normal(u0.shape))
for i, t in enumerate(grid):
    t_prev = int(grid[i + 1]) if i + 1 < len(grid) else 0
    u = reverse_step(u, int(t), t_prev, u0, sched, cfg)
recon = from_logit(u).values
print("oracle reverse pass, max |recon - clipped s|:",
      float(np.max(np.abs(recon - np.clip(scores, 1e-3, 1 - 1e-3)))))
