"""Shared fixtures: the two trained-model setups the end-to-end tests reuse.

Both fixtures train real models and are session-scoped — the single-video
overfit run takes about a minute, the two-mode benchmark about a quarter of
an hour.  Every seed is pinned, so reruns are byte-identical.
"""

import time
from dataclasses import dataclass

import pytest

from videosum.data import ScoreVector, SynthConfig, VideoRecord, synth_generate
from videosum.denoiser import (
    ModelConfig,
    TrainConfig,
    TrainResult,
    init_params,
    train,
)


@dataclass(frozen=True)
class OverfitRun:
    """One video, one annotator, trained until sampling recovers the target."""

    record: VideoRecord
    result: TrainResult
    optimizer_steps: int
    t_train: int


@pytest.fixture(scope="session")
def overfit_run() -> OverfitRun:
    records, _ = synth_generate(
        SynthConfig(num_videos=1, frames_per_video=32, feature_dim=4,
                    num_annotators=1, num_modes=1, seed=0)
    )
    mcfg = ModelConfig(d_in=4, d_model=32, l_enc=1, l_dec=2,
                       codebook_bins=64, heads=4, ffn_mult=2)
    tcfg = TrainConfig(learning_rate=2e-3, batch_size=8, epochs=1000,
                       ema_decay=0.95, cond_dropout_prob=0.0, seed=2,
                       t_train=100)
    result = train(records, init_params(mcfg, seed=1), tcfg)
    # one optimizer step per epoch: a single (video, annotator) pair never
    # fills the batch, so each epoch is one update
    return OverfitRun(record=records[0], result=result,
                      optimizer_steps=tcfg.epochs, t_train=tcfg.t_train)


@dataclass(frozen=True)
class BenchmarkRun:
    """The two-mode annotator-disagreement benchmark with both trained arms.

    ``conditional`` is trained on every individual annotation; ``averaged``
    is the same architecture trained on per-video mean scores (the
    regress-to-the-mean reference arm).
    """

    records: list
    mode_table: object
    conditional: TrainResult
    averaged: TrainResult
    t_train: int
    train_seconds: float


@pytest.fixture(scope="session")
def benchmark_run() -> BenchmarkRun:
    records, table = synth_generate(SynthConfig())  # 20 videos, 60 frames,
    # 10 annotators split over 2 modes
    mcfg = ModelConfig(d_in=8, d_model=32, l_enc=1, l_dec=2,
                       codebook_bins=64, heads=4, ffn_mult=2)
    tcfg = TrainConfig(learning_rate=1.2e-3, batch_size=24, epochs=300,
                       ema_decay=0.97, cond_dropout_prob=0.0, seed=3,
                       t_train=100)
    start = time.perf_counter()
    conditional = train(records, init_params(mcfg, seed=1), tcfg)
    averaged_records = [
        VideoRecord(id=rec.id, features=rec.features,
                    annotations=(ScoreVector(rec.annotation_matrix.mean(axis=0)),),
                    fps=rec.fps)
        for rec in records
    ]
    averaged = train(averaged_records, init_params(mcfg, seed=1), tcfg)
    train_seconds = time.perf_counter() - start
    return BenchmarkRun(records=records, mode_table=table,
                        conditional=conditional, averaged=averaged,
                        t_train=tcfg.t_train, train_seconds=train_seconds)
