"""Dataset types, JSON (de)serialization, and a synthetic multi-annotator
generator with a known ground-truth summary distribution.

The synthetic protocol builds, per video, ``num_modes`` smooth score
templates whose bumps live over disjoint stretches of the timeline.  The
templates are balanced so their across-mode average is exactly flat: a model
that regresses to the mean of all annotators lands on an uninformative
constant profile, while a model that commits to one mode matches that mode's
annotators closely.  Each annotator is assigned one mode round-robin and
emits its template plus clipped Gaussian jitter; one feature channel per
mode carries the template signal so a conditional model can learn the full
distribution from features alone.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ScoreVector",
    "VideoRecord",
    "SynthConfig",
    "ModeTable",
    "load_dataset",
    "save_dataset",
    "synth_generate",
    "logit_clip",
]


def _frozen_array(a, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ScoreVector:
    """A per-frame importance profile, bounded to [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen_array(self.values)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("scores must form a non-empty 1-D vector")
        if not np.isfinite(v).all():
            raise ValueError("scores must be finite")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("scores must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class VideoRecord:
    """One video: frame features plus the human score vectors attached to it."""

    id: str
    features: np.ndarray          # (N, D_in)
    annotations: tuple            # of ScoreVector, each length N
    fps: float

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("video id must be a non-empty string")
        f = _frozen_array(self.features)
        if f.ndim != 2:
            raise ValueError(f"video {self.id!r}: features must be 2-D (frames x dims)")
        n, d = f.shape
        if n < 2 or d < 1:
            raise ValueError(
                f"video {self.id!r}: need at least 2 frames and 1 feature dim, got {f.shape}"
            )
        if not np.isfinite(f).all():
            raise ValueError(f"video {self.id!r}: features must be finite")
        anns = tuple(
            a if isinstance(a, ScoreVector) else ScoreVector(a) for a in self.annotations
        )
        for r, a in enumerate(anns):
            if len(a) != n:
                raise ValueError(
                    f"video {self.id!r}: annotation {r} has length {len(a)}, expected {n}"
                )
        if not (isinstance(self.fps, (int, float)) and np.isfinite(self.fps) and self.fps > 0):
            raise ValueError(f"video {self.id!r}: fps must be a positive number")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "annotations", anns)
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_annotators(self) -> int:
        return len(self.annotations)

    @property
    def annotation_matrix(self) -> np.ndarray:
        """All annotations stacked as an (R, N) array."""
        return np.stack([a.values for a in self.annotations])


# ---------------------------------------------------------------------------
# On-disk format
# ---------------------------------------------------------------------------

def save_dataset(records, path) -> None:
    """Write records to the versioned JSON dataset format."""
    payload = {
        "version": 1,
        "videos": [
            {
                "id": rec.id,
                "fps": rec.fps,
                "features": rec.features.tolist(),
                "annotations": [a.values.tolist() for a in rec.annotations],
            }
            for rec in records
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_dataset(path):
    """Read and fully validate a dataset file; any violation rejects it."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"dataset file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("version") != 1:
        raise ValueError(f"dataset file {path}: expected an object with version 1")
    if "videos" not in payload or not isinstance(payload["videos"], list):
        raise ValueError(f"dataset file {path}: missing 'videos' list")
    records = []
    for entry in payload["videos"]:
        if not isinstance(entry, dict):
            raise ValueError(f"dataset file {path}: video entries must be objects")
        missing = {"id", "fps", "features", "annotations"} - set(entry)
        if missing:
            raise ValueError(
                f"dataset file {path}: video entry missing {sorted(missing)}"
            )
        records.append(
            VideoRecord(
                id=entry["id"],
                features=np.array(entry["features"], dtype=np.float64),
                annotations=tuple(
                    ScoreVector(np.array(a, dtype=np.float64))
                    for a in entry["annotations"]
                ),
                fps=entry["fps"],
            )
        )
    return records


# ---------------------------------------------------------------------------
# Synthetic generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    num_videos: int = 20
    frames_per_video: int = 60
    feature_dim: int = 8
    num_annotators: int = 10
    num_modes: int = 2
    mode_noise: float = 0.05
    fps: float = 2.0
    seed: int = 0

    def __post_init__(self):
        counts = {
            "num_videos": self.num_videos,
            "frames_per_video": self.frames_per_video,
            "feature_dim": self.feature_dim,
            "num_annotators": self.num_annotators,
            "num_modes": self.num_modes,
        }
        for name, val in counts.items():
            if not isinstance(val, (int, np.integer)) or val < 1:
                raise ValueError(f"{name} must be a positive integer, got {val!r}")
        if self.frames_per_video < 2:
            raise ValueError("frames_per_video must be at least 2")
        if self.num_modes > self.num_annotators:
            raise ValueError("num_modes cannot exceed num_annotators")
        if self.feature_dim < self.num_modes:
            raise ValueError(
                "feature_dim must be at least num_modes (one informative channel per mode)"
            )
        if not (self.mode_noise >= 0 and np.isfinite(self.mode_noise)):
            raise ValueError("mode_noise must be a finite non-negative float")
        if not (self.fps > 0 and np.isfinite(self.fps)):
            raise ValueError("fps must be positive")


@dataclass(frozen=True)
class ModeTable:
    """Ground truth behind a synthetic dataset, for oracle-style checks.

    ``assignment[r]`` is the mode index annotator r follows (shared across
    videos); ``templates[video_id]`` is the (num_modes, N) array of noise-free
    score templates for that video.
    """

    assignment: np.ndarray
    templates: dict = field(default_factory=dict)

    def annotators_of_mode(self, mode: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == mode)


_BUMP_AMPLITUDE = 0.4


def _mode_templates(rng, n_frames: int, num_modes: int) -> np.ndarray:
    """Balanced per-mode templates whose across-mode mean is exactly 0.5.

    Mode m gets a Gaussian bump over its own slice of the timeline (center
    jittered per video) and a compensating dip over every other mode's slice,
    so no frame carries information about the video in the across-mode mean.
    """
    frames = np.arange(n_frames, dtype=np.float64)
    width = n_frames / num_modes
    sigma = width / 6.0
    bumps = np.empty((num_modes, n_frames))
    for m in range(num_modes):
        center = (m + 0.5) * width + rng.uniform(-width / 8, width / 8)
        bumps[m] = np.exp(-0.5 * ((frames - center) / sigma) ** 2)
    templates = np.full((num_modes, n_frames), 0.5)
    for m in range(num_modes):
        templates[m] += _BUMP_AMPLITUDE * bumps[m]
        if num_modes > 1:
            others = [mm for mm in range(num_modes) if mm != m]
            templates[m] -= (
                _BUMP_AMPLITUDE / (num_modes - 1)
            ) * bumps[others].sum(axis=0)
    return np.clip(templates, 0.0, 1.0)


def synth_generate(cfg: SynthConfig):
    """Generate a synthetic dataset; returns (records, mode_table)."""
    rng = np.random.default_rng(cfg.seed)
    assignment = np.arange(cfg.num_annotators) % cfg.num_modes
    templates = {}
    records = []
    for vi in range(cfg.num_videos):
        vid = f"synth-{vi:03d}"
        temps = _mode_templates(rng, cfg.frames_per_video, cfg.num_modes)
        templates[vid] = temps
        anns = []
        for r in range(cfg.num_annotators):
            jitter = rng.normal(0.0, cfg.mode_noise, size=cfg.frames_per_video)
            anns.append(ScoreVector(np.clip(temps[assignment[r]] + jitter, 0.0, 1.0)))
        feats = rng.normal(0.0, 0.25, size=(cfg.frames_per_video, cfg.feature_dim))
        for m in range(cfg.num_modes):
            feats[:, m] = temps[m] + rng.normal(0.0, 0.05, size=cfg.frames_per_video)
        records.append(
            VideoRecord(id=vid, features=feats, annotations=tuple(anns), fps=cfg.fps)
        )
    return records, ModeTable(assignment=_frozen_array(assignment, dtype=np.int64),
                              templates=templates)


def logit_clip(scores, eps: float = 1e-3):
    """Clamp scores into [eps, 1-eps] so the logit transform stays finite."""
    if not (0.0 < eps < 0.5):
        raise ValueError(f"eps must lie in (0, 0.5), got {eps}")
    if isinstance(scores, ScoreVector):
        return ScoreVector(np.clip(scores.values, eps, 1.0 - eps))
    return np.clip(np.asarray(scores, dtype=np.float64), eps, 1.0 - eps)
