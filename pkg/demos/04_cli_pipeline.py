"""
The command-line pipeline end to end
====================================

Drives the five subcommands in-process through their Python entry point:
generate a dataset, train, sample with summaries, evaluate, and peek at the
files each stage writes.  Every run is reproducible from (config, seed).
"""

import json
import os
import tempfile

from videosum.cli import main

out = tempfile.mkdtemp(prefix="videosum-demo-")
tiny_model = [
    "--train.model.d_in", "4", "--train.model.d_model", "16",
    "--train.model.l_enc", "1", "--train.model.l_dec", "1",
    "--train.model.codebook_bins", "32", "--train.model.heads", "2",
]

# 1. Synthesize a small annotated dataset (also writes the mode table).
rc = main(["synth", "--out", out, "--seed", "0",
           "--synth.num_videos", "3", "--synth.frames_per_video", "24",
           "--synth.feature_dim", "4", "--synth.num_annotators", "2",
           "--synth.num_modes", "1"])
print("synth exit code:", rc)

# 2. Train a tiny denoiser on it; the checkpoint holds the EMA weights.
rc = main(["train", "--out", out, "--seed", "1",
           "--train.dataset", os.path.join(out, "dataset.json"),
           "--train.epochs", "50", "--train.learning_rate", "3e-3",
           "--train.batch_size", "4", "--train.t_train", "40",
           "--train.schedule", "cosine", *tiny_model])
print("train exit code:", rc)

# 3. Draw 8 score samples per video and attach budgeted frame summaries.
rc = main(["sample", "--out", out, "--seed", "2", "--summarize",
           "--sample.dataset", os.path.join(out, "dataset.json"),
           "--sample.checkpoint", os.path.join(out, "checkpoint.json"),
           "--sample.num_samples", "8", "--sample.t_train", "40",
           "--sample.rho", "0.3", "--sample.penalty_coeff", "0.1",
           "--sample.max_segments", "5"])
print("sample exit code:", rc)

# 4. Score the samples against the annotations.
rc = main(["evaluate", "--out", out, "--seed", "3",
           "--evaluate.dataset", os.path.join(out, "dataset.json"),
           "--evaluate.samples", os.path.join(out, "samples.json"),
           "--evaluate.rho", "0.3", "--evaluate.penalty_coeff", "0.1",
           "--evaluate.max_segments", "5"])
print("evaluate exit code:", rc)

print("\nfiles written:", sorted(os.listdir(out)))

with open(os.path.join(out, "samples.json")) as fh:
    samples = json.load(fh)
video = samples["videos"][0]
print(f"\nsamples.json: {len(samples['videos'])} videos, "
      f"{len(video['samples'])} samples each, "
      f"first summary uses {sum(video['summaries'][0])} of "
      f"{len(video['summaries'][0])} frames")

with open(os.path.join(out, "report.json")) as fh:
    report = json.load(fh)
for key in ("tau", "rho", "f1", "cis", "wir"):
    agg = report["aggregate"][key]
    print(f"{key:4s} mean {agg['mean']:+.3f}  std {agg['std']:.3f}")

# Config errors are distinguishable from crashes: unknown keys exit with 2.
rc = main(["synth", "--out", out, "--synth.frames", "10"])
print("\nmisspelled key exit code:", rc)
