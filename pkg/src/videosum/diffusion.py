"""Noise schedules, the logit-space forward process, DDIM/DDPM reverse
sampling, and the guidance combinators (classifier-free and self-attention).

Everything here is denoiser-agnostic: a denoiser is any callable
``denoiser(u_t, t, cond) -> (x0_pred, attention)`` returning its clean-logit
estimate and an aggregated per-position attention profile.  ``cond`` is the
(N, D_in) feature matrix, or None for the null condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.special import expit

from .data import ScoreVector, logit_clip

__all__ = [
    "NoiseSchedule",
    "SamplerConfig",
    "make_schedule",
    "to_logit",
    "from_logit",
    "forward_sample",
    "reverse_step",
    "cfg_combine",
    "sag_adjust",
    "ddim_steps",
    "sample",
]


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule: per-step beta and its running signal fraction."""

    T_train: int
    beta: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        abar = np.asarray(self.alpha_bar, dtype=np.float64)
        if not (self.T_train >= 1 and beta.shape == abar.shape == (self.T_train,)):
            raise ValueError("beta and alpha_bar must both have length T_train >= 1")
        if beta.min() <= 0 or beta.max() >= 1:
            raise ValueError("beta must lie strictly inside (0, 1)")
        if abar.min() <= 0 or abar.max() >= 1:
            raise ValueError("alpha_bar must lie strictly inside (0, 1)")
        if self.T_train > 1 and not (np.diff(abar) < 0).all():
            raise ValueError("alpha_bar must be strictly decreasing")
        if np.max(np.abs(abar - np.cumprod(1.0 - beta))) > 1e-12:
            raise ValueError("alpha_bar inconsistent with beta (cumprod mismatch)")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha_bar", abar)

    def abar_at(self, t: int) -> float:
        """alpha_bar at step t, 1-based; t=0 is the clean signal (1.0)."""
        if not 0 <= t <= self.T_train:
            raise ValueError(f"step {t} outside [0, {self.T_train}]")
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])


@dataclass(frozen=True)
class SamplerConfig:
    num_steps: int = 10
    eta: float = 1.0
    cfg_weight: float = 0.0
    sag_scale: float = 0.0
    sag_threshold: float | None = None  # None: use the attention map's mean
    sag_blur_sigma: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if self.num_steps < 1:
            raise ValueError("num_steps must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.sag_blur_sigma <= 0:
            raise ValueError("sag_blur_sigma must be positive")


def make_schedule(kind: str, T_train: int = 1000) -> NoiseSchedule:
    """Build a *linear* (beta from 1e-4 to 0.02) or *cosine* schedule."""
    if T_train < 1:
        raise ValueError("T_train must be >= 1")
    if kind == "linear":
        beta = np.linspace(1e-4, 0.02, T_train)
    elif kind == "cosine":
        s = 0.008
        t = np.arange(T_train + 1, dtype=np.float64)
        f = np.cos((t / T_train + s) / (1 + s) * math.pi / 2) ** 2
        abar = f / f[0]
        beta = np.clip(1.0 - abar[1:] / abar[:-1], None, 0.999)
    else:
        raise ValueError(f"unknown schedule kind {kind!r} (want 'linear' or 'cosine')")
    # alpha_bar is rebuilt from beta so the stored pair is exactly consistent
    return NoiseSchedule(T_train=T_train, beta=beta, alpha_bar=np.cumprod(1.0 - beta))


# ---------------------------------------------------------------------------
# Logit transform + forward process
# ---------------------------------------------------------------------------

def to_logit(scores, eps: float = 1e-3) -> np.ndarray:
    """Map scores into unconstrained logit space (clipping to [eps, 1-eps] first)."""
    s = logit_clip(scores, eps)
    if isinstance(s, ScoreVector):
        s = s.values
    return np.log(s / (1.0 - s))


def from_logit(u) -> ScoreVector:
    """Inverse of :func:`to_logit`: elementwise sigmoid."""
    return ScoreVector(expit(np.asarray(u, dtype=np.float64)))


def forward_sample(u0: np.ndarray, t: int, schedule: NoiseSchedule,
                   noise: np.ndarray) -> np.ndarray:
    """Noise the clean logits to level t: ``sqrt(abar_t) u0 + sqrt(1-abar_t) eps``."""
    if not 1 <= t <= schedule.T_train:
        raise ValueError(f"t={t} outside [1, {schedule.T_train}]")
    abar = schedule.abar_at(t)
    return math.sqrt(abar) * np.asarray(u0) + math.sqrt(1.0 - abar) * np.asarray(noise)


# ---------------------------------------------------------------------------
# Reverse process
# ---------------------------------------------------------------------------

def reverse_step(u_t: np.ndarray, t_cur: int, t_prev: int, x0_pred: np.ndarray,
                 schedule: NoiseSchedule, cfg: SamplerConfig,
                 noise: np.ndarray | None = None) -> np.ndarray:
    """One DDIM update from level t_cur down to t_prev.

    With ``eta=1`` the injected noise scale equals the DDPM posterior's; with
    ``eta=0`` the step is deterministic.  The final step (``t_prev=0``)
    returns the clean estimate directly, removing the residual stochasticity.
    """
    if not 0 <= t_prev < t_cur <= schedule.T_train:
        raise ValueError(
            f"need 0 <= t_prev < t_cur <= {schedule.T_train}, got ({t_cur}, {t_prev})"
        )
    x0_pred = np.asarray(x0_pred, dtype=np.float64)
    if t_prev == 0:
        return x0_pred.copy()
    abar_cur = schedule.abar_at(t_cur)
    abar_prev = schedule.abar_at(t_prev)
    sigma = (
        cfg.eta
        * math.sqrt((1.0 - abar_prev) / (1.0 - abar_cur))
        * math.sqrt(1.0 - abar_cur / abar_prev)
    )
    eps_implied = (np.asarray(u_t) - math.sqrt(abar_cur) * x0_pred) / math.sqrt(
        1.0 - abar_cur
    )
    dir_coeff = math.sqrt(max(0.0, 1.0 - abar_prev - sigma**2))
    out = math.sqrt(abar_prev) * x0_pred + dir_coeff * eps_implied
    if sigma > 0:
        if noise is None:
            raise ValueError("stochastic step (eta > 0) needs a noise draw")
        out = out + sigma * np.asarray(noise)
    return out


def cfg_combine(cond_pred: np.ndarray, uncond_pred: np.ndarray, w: float) -> np.ndarray:
    """Classifier-free guidance: ``(1+w) * cond - w * uncond``."""
    cond_pred = np.asarray(cond_pred, dtype=np.float64)
    uncond_pred = np.asarray(uncond_pred, dtype=np.float64)
    if cond_pred.shape != uncond_pred.shape:
        raise ValueError("conditional and unconditional predictions must align")
    return (1.0 + w) * cond_pred - w * uncond_pred


def sag_adjust(denoiser, u_t: np.ndarray, t: int, cond, attention: np.ndarray,
               pred: np.ndarray, schedule: NoiseSchedule,
               cfg: SamplerConfig) -> np.ndarray:
    """Self-attention-guided correction of a clean-logit prediction.

    Positions the denoiser attends to (attention above the threshold; the
    map's own mean when no threshold is set) are degraded: the prediction is
    blurred along time, those positions are re-noised back to level t with
    the implied noise, and the denoiser re-runs on the degraded input.  The
    result steers away from what degradation destroyed:
    ``pred + (1 + s) * (pred - degraded_pred)``.
    """
    pred = np.asarray(pred, dtype=np.float64)
    attention = np.asarray(attention, dtype=np.float64)
    threshold = cfg.sag_threshold
    if threshold is None:
        threshold = float(attention.mean())
    mask = attention > threshold
    blurred = gaussian_filter1d(pred, sigma=cfg.sag_blur_sigma, mode="nearest")
    degraded_x0 = np.where(mask, blurred, pred)
    abar = schedule.abar_at(t)
    eps_implied = (np.asarray(u_t) - math.sqrt(abar) * pred) / math.sqrt(1.0 - abar)
    degraded_u = math.sqrt(abar) * degraded_x0 + math.sqrt(1.0 - abar) * eps_implied
    degraded_pred, _ = denoiser(degraded_u, t, cond)
    return pred + (1.0 + cfg.sag_scale) * (pred - degraded_pred)


# ---------------------------------------------------------------------------
# Full sampler
# ---------------------------------------------------------------------------

def ddim_steps(T_train: int, num_steps: int) -> list[int]:
    """Descending step subsequence: uniform over [1, T], first T, last 1."""
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    raw = np.linspace(T_train, 1, num=min(num_steps, T_train))
    steps = []
    for t in np.rint(raw).astype(int):
        if not steps or steps[-1] != t:
            steps.append(int(t))
    return steps


def sample(denoiser, cond, schedule: NoiseSchedule, cfg: SamplerConfig,
           rng: np.random.Generator | None = None,
           num_frames: int | None = None) -> ScoreVector:
    """Draw one importance-score profile for the conditioning features.

    Starts from pure noise at level T, walks the DDIM subsequence applying
    classifier-free guidance (when ``cfg_weight != 0``) and attention-guided
    correction (when ``sag_scale != 0``) to each clean estimate, and returns
    the sigmoid of the final one.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if num_frames is None:
        if cond is None:
            raise ValueError("num_frames is required when sampling unconditionally")
        num_frames = np.asarray(cond).shape[0]
    def predict(u_in, t_in, cond_in):
        # the guided prediction SAG degrades must match the one it corrects,
        # so classifier-free mixing happens inside this closure
        pred_in, attn_in = denoiser(u_in, t_in, cond_in)
        if cfg.cfg_weight != 0.0 and cond_in is not None:
            uncond_pred, _ = denoiser(u_in, t_in, None)
            pred_in = cfg_combine(pred_in, uncond_pred, cfg.cfg_weight)
        return pred_in, attn_in

    u = rng.standard_normal(num_frames)
    steps = ddim_steps(schedule.T_train, cfg.num_steps)
    for k, t_cur in enumerate(steps):
        t_prev = steps[k + 1] if k + 1 < len(steps) else 0
        pred, attention = predict(u, t_cur, cond)
        if cfg.sag_scale != 0.0:
            pred = sag_adjust(predict, u, t_cur, cond, attention, pred, schedule, cfg)
        noise = rng.standard_normal(num_frames) if (cfg.eta > 0 and t_prev > 0) else None
        u = reverse_step(u, t_cur, t_prev, pred, schedule, cfg, noise)
    return from_logit(u)
