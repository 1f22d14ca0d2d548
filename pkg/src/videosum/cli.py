"""Command-line pipeline: data synthesis, training, sampling, evaluation,
and the quantization-multiplicity study.

One JSON config document drives every subcommand, with one section per
command (the ``kp-study`` subcommand reads section ``kp_study``).  Any key
can be overridden on the command line by its dotted path::

    videosum synth --out run/ --synth.num_videos 5
    videosum train --config exp.json --train.epochs 40

Override values are parsed as JSON when possible (so ``true``, ``null`` and
numbers work) and fall back to plain strings.  ``--seed`` replaces the active
section's seed; ``--out`` is the output directory.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Identical config + seed produces byte-identical output files.  Sampling and
evaluation derive one child seed per video from the run seed, so per-video
work is order-independent and could be farmed out to workers without
changing any output.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys

import numpy as np

from .data import SynthConfig, load_dataset, save_dataset, synth_generate
from .denoiser import (
    ModelConfig,
    TrainConfig,
    as_sampling_denoiser,
    init_params,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .diffusion import SamplerConfig, make_schedule, sample
from .knapsack import generate_summary, kp_multiplicity_study, study_rows_to_csv
from .metrics import (
    annotator_coverage,
    average_precision_at_rho,
    cis,
    f1_summary,
    inclusion_intervals,
    kendall_tau,
    make_sensitivity_context,
    pca_project,
    power_iteration_pca,
    spearman_rho,
    wir,
    wse,
)
from .segmentation import clip_values, kts_segment

__all__ = ["main", "run_command", "load_config", "apply_overrides",
           "REPORT_SCHEMA", "DEFAULT_CONFIG"]


DEFAULT_CONFIG = {
    "synth": {
        "num_videos": 20,
        "frames_per_video": 60,
        "feature_dim": 8,
        "num_annotators": 10,
        "num_modes": 2,
        "mode_noise": 0.05,
        "fps": 2.0,
        "seed": 0,
        "dataset_name": "dataset.json",
        "modes_name": "modes.json",
    },
    "train": {
        "dataset": None,
        "model": {
            "d_in": 8,
            "d_model": 64,
            "l_enc": 2,
            "l_dec": 2,
            "codebook_bins": 200,
            "heads": 4,
            "ffn_mult": 4,
            "logit_eps": 1e-3,
        },
        "learning_rate": 5e-5,
        "weight_decay": 0.01,
        "batch_size": 256,
        "epochs": 1,
        "ema_decay": 0.999,
        "cond_dropout_prob": 0.1,
        "schedule": "cosine",
        "t_train": 1000,
        "seed": 0,
        "init_seed": 0,
        "init_checkpoint": None,
        "checkpoint_name": "checkpoint.json",
        "log_name": "training_log.csv",
    },
    "sample": {
        "dataset": None,
        "checkpoint": None,
        "num_samples": 100,
        "num_steps": 10,
        "eta": 1.0,
        "cfg_weight": 0.0,
        "sag_scale": 0.0,
        "sag_threshold": None,
        "sag_blur_sigma": 1.5,
        "schedule": "cosine",
        "t_train": 1000,
        "seed": 0,
        "summarize": False,
        "rho": 0.15,
        "max_segments": 10,
        "penalty_coeff": 1.0,
        "samples_name": "samples.json",
    },
    "evaluate": {
        "dataset": None,
        "samples": None,
        "rho": 0.15,
        "coverage_threshold": 0.25,
        "max_segments": 10,
        "penalty_coeff": 1.0,
        "seed": 0,
        "report_name": "report.json",
        "coverage_name": "coverage.csv",
        "projection_name": "projection.csv",
    },
    "kp_study": {
        "num_items": 15,
        "k_values": [4, 16, 64, 256, 1024],
        "trials": 2000,
        "rho": 0.15,
        "weight_min": 1,
        "weight_max": 10,
        "seed": 0,
        "study_name": "kp_study.csv",
    },
}

_METRIC_KEYS = ("tau", "rho", "map50", "map15", "f1", "cis", "wir", "wse")

_METRIC_PROPS = {key: {"type": "number"} for key in _METRIC_KEYS}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["version", "per_video", "aggregate"],
    "properties": {
        "version": {"const": 1},
        "per_video": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": list(_METRIC_KEYS),
                "properties": _METRIC_PROPS,
                "additionalProperties": False,
            },
        },
        "aggregate": {
            "type": "object",
            "required": list(_METRIC_KEYS),
            "properties": {
                key: {
                    "type": "object",
                    "required": ["mean", "std"],
                    "properties": {
                        "mean": {"type": "number"},
                        "std": {"type": "number"},
                    },
                    "additionalProperties": False,
                }
                for key in _METRIC_KEYS
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------

def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | None) -> dict:
    """Defaults, deep-merged with the JSON document at ``path`` when given."""
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(user, dict):
        raise ValueError("config document must be a JSON object")
    unknown = set(user) - set(DEFAULT_CONFIG)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    return _deep_merge(DEFAULT_CONFIG, user)


def _parse_override_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, pairs) -> dict:
    """Apply ``(dotted.key, raw_value)`` pairs onto a config dict."""
    out = copy.deepcopy(config)
    for dotted, raw in pairs:
        parts = dotted.split(".")
        node = out
        for part in parts[:-1]:
            nxt = node.get(part)
            if not isinstance(nxt, dict):
                raise ValueError(f"unknown config key: {dotted}")
            node = nxt
        leaf = parts[-1]
        if leaf not in node:
            raise ValueError(f"unknown config key: {dotted}")
        if isinstance(node[leaf], dict):
            raise ValueError(f"{dotted} is a section, not a value")
        node[leaf] = _parse_override_value(raw)
    return out


def _collect_override_pairs(extra: list) -> list:
    pairs = []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or "." not in tok:
            raise ValueError(f"unrecognized argument: {tok}")
        if "=" in tok:
            key, raw = tok[2:].split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise ValueError(f"override {tok} is missing a value")
            key, raw = tok[2:], extra[i + 1]
            i += 1
        pairs.append((key, raw))
        i += 1
    return pairs


def _require_file(path, label: str) -> str:
    if not path:
        raise ValueError(f"{label} must be set (a path to an existing file)")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{label}: no such file: {path}")
    return path


def _dump_json(payload) -> str:
    return json.dumps(payload, sort_keys=True) + "\n"


def _write_text(out_dir: str, name: str, text: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(section: dict, out_dir: str) -> None:
    cfg = SynthConfig(
        num_videos=section["num_videos"],
        frames_per_video=section["frames_per_video"],
        feature_dim=section["feature_dim"],
        num_annotators=section["num_annotators"],
        num_modes=section["num_modes"],
        mode_noise=section["mode_noise"],
        fps=section["fps"],
        seed=section["seed"],
    )
    records, modes = synth_generate(cfg)
    os.makedirs(out_dir, exist_ok=True)
    save_dataset(records, os.path.join(out_dir, section["dataset_name"]))
    payload = {
        "version": 1,
        "assignment": modes.assignment.tolist(),
        "templates": {vid: t.tolist() for vid, t in modes.templates.items()},
    }
    _write_text(out_dir, section["modes_name"], _dump_json(payload))


def cmd_train(section: dict, out_dir: str) -> None:
    dataset_path = _require_file(section["dataset"], "train.dataset")
    init_ckpt = section["init_checkpoint"]
    if init_ckpt is not None:
        _require_file(init_ckpt, "train.init_checkpoint")
    tc = TrainConfig(
        learning_rate=section["learning_rate"],
        weight_decay=section["weight_decay"],
        batch_size=section["batch_size"],
        epochs=section["epochs"],
        ema_decay=section["ema_decay"],
        cond_dropout_prob=section["cond_dropout_prob"],
        seed=section["seed"],
        schedule=section["schedule"],
        t_train=section["t_train"],
    )
    if init_ckpt is not None:
        params = load_checkpoint(init_ckpt)
    else:
        params = init_params(ModelConfig(**section["model"]), seed=section["init_seed"])
    dataset = load_dataset(dataset_path)
    result = train(dataset, params, tc)
    os.makedirs(out_dir, exist_ok=True)
    save_checkpoint(result.ema_params(),
                    os.path.join(out_dir, section["checkpoint_name"]))
    lines = ["epoch,loss"]
    lines.extend(f"{row['epoch']},{row['loss']!r}" for row in result.log)
    _write_text(out_dir, section["log_name"], "\n".join(lines) + "\n")


def cmd_sample(section: dict, out_dir: str) -> None:
    dataset_path = _require_file(section["dataset"], "sample.dataset")
    ckpt_path = _require_file(section["checkpoint"], "sample.checkpoint")
    num_samples = section["num_samples"]
    if num_samples < 1:
        raise ValueError("sample.num_samples must be >= 1")
    scfg = SamplerConfig(
        num_steps=section["num_steps"],
        eta=section["eta"],
        cfg_weight=section["cfg_weight"],
        sag_scale=section["sag_scale"],
        sag_threshold=section["sag_threshold"],
        sag_blur_sigma=section["sag_blur_sigma"],
        seed=section["seed"],
    )
    schedule = make_schedule(section["schedule"], section["t_train"])
    params = load_checkpoint(ckpt_path)
    denoiser = as_sampling_denoiser(params)
    dataset = load_dataset(dataset_path)
    children = np.random.SeedSequence(section["seed"]).spawn(len(dataset))
    videos = []
    for rec, child in zip(dataset, children):
        rng = np.random.default_rng(child)
        drawn = [sample(denoiser, rec.features, schedule, scfg, rng=rng)
                 for _ in range(num_samples)]
        entry = {
            "id": rec.id,
            "fps": rec.fps,
            "samples": [s.values.tolist() for s in drawn],
        }
        if section["summarize"]:
            seg = kts_segment(rec.features, section["max_segments"],
                              section["penalty_coeff"])
            entry["summaries"] = [
                generate_summary(s.values, seg, section["rho"])[0].tolist()
                for s in drawn
            ]
        videos.append(entry)
    payload = {
        "version": 1,
        "sampler": {
            "num_steps": scfg.num_steps,
            "eta": scfg.eta,
            "cfg_weight": scfg.cfg_weight,
            "sag_scale": scfg.sag_scale,
            "schedule": section["schedule"],
            "t_train": section["t_train"],
            "seed": section["seed"],
        },
        "videos": videos,
    }
    _write_text(out_dir, section["samples_name"], _dump_json(payload))


def _evaluate_video(record, samples: np.ndarray, rho: float, max_segments: int,
                    penalty_coeff: float) -> dict:
    anns = record.annotation_matrix
    taus, rhos = [], []
    for s in samples:
        taus.append(max(kendall_tau(s, a) for a in anns))
        rhos.append(max(spearman_rho(s, a) for a in anns))
    gt_profile = anns.mean(axis=0)
    pred_profile = samples.mean(axis=0)
    map50 = float(np.mean(
        [average_precision_at_rho(s, gt_profile, record.fps, 0.5) for s in samples]
    ))
    map15 = float(np.mean(
        [average_precision_at_rho(s, gt_profile, record.fps, 0.15) for s in samples]
    ))
    seg = kts_segment(record.features, max_segments, penalty_coeff)
    ctx = make_sensitivity_context(
        clip_values(gt_profile, seg), seg.weights, rho,
        clip_values(pred_profile, seg),
    )
    pred_frames, _ = generate_summary(pred_profile, seg, rho)
    gt_frames, _ = generate_summary(gt_profile, seg, rho)
    return {
        "tau": float(np.mean(taus)),
        "rho": float(np.mean(rhos)),
        "map50": map50,
        "map15": map15,
        "f1": float(f1_summary(pred_frames, gt_frames)),
        "cis": float(cis(ctx)),
        "wir": float(wir(ctx, inclusion_intervals(ctx))),
        "wse": float(wse(ctx)),
    }


def cmd_evaluate(section: dict, out_dir: str) -> None:
    dataset_path = _require_file(section["dataset"], "evaluate.dataset")
    samples_path = _require_file(section["samples"], "evaluate.samples")
    dataset = {rec.id: rec for rec in load_dataset(dataset_path)}
    with open(samples_path) as fh:
        samples_doc = json.load(fh)
    if samples_doc.get("version") != 1:
        raise ValueError(f"unsupported samples file version in {samples_path}")
    entries = samples_doc["videos"]
    if not entries:
        raise ValueError("samples file contains no videos")
    missing = [e["id"] for e in entries if e["id"] not in dataset]
    if missing:
        raise ValueError(f"samples reference unknown videos: {missing}")

    per_video = {}
    sample_lists, ann_lists = [], []
    for entry in entries:
        rec = dataset[entry["id"]]
        samples = np.asarray(entry["samples"], dtype=np.float64)
        if samples.ndim != 2 or samples.shape[1] != rec.num_frames:
            raise ValueError(
                f"samples for {rec.id!r} must be (num_samples, {rec.num_frames})"
            )
        per_video[rec.id] = _evaluate_video(
            rec, samples, section["rho"], section["max_segments"],
            section["penalty_coeff"],
        )
        sample_lists.append(list(samples))
        ann_lists.append(rec.annotation_matrix)

    aggregate = {}
    for key in _METRIC_KEYS:
        vals = np.array([per_video[vid][key] for vid in per_video])
        aggregate[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
    report = {"version": 1, "per_video": per_video, "aggregate": aggregate}
    _write_text(out_dir, section["report_name"], _dump_json(report))

    coverage = annotator_coverage(sample_lists, ann_lists,
                                  section["coverage_threshold"])
    header = "video_id," + ",".join(
        f"annotator_{r}" for r in range(coverage.shape[1])
    )
    rows = [header]
    for entry, row in zip(entries, coverage):
        rows.append(entry["id"] + "," + ",".join(repr(float(x)) for x in row))
    _write_text(out_dir, section["coverage_name"], "\n".join(rows) + "\n")

    # 2-D projection: components fitted on the human annotations alone,
    # then both populations are projected into that plane
    lengths = {a.shape[1] for a in ann_lists}
    if len(lengths) != 1:
        raise ValueError("projection needs all videos to share one frame count")
    ann_matrix = np.vstack(ann_lists)
    mean, components = power_iteration_pca(ann_matrix, num_components=2,
                                           seed=section["seed"])
    proj_rows = ["kind,video_id,index,pc1,pc2"]
    for entry, anns in zip(entries, ann_lists):
        pts = pca_project(anns, mean, components)
        proj_rows.extend(
            f"annotation,{entry['id']},{ri},{float(p[0])!r},{float(p[1])!r}"
            for ri, p in enumerate(pts)
        )
    for entry, samples in zip(entries, sample_lists):
        pts = pca_project(np.asarray(samples), mean, components)
        proj_rows.extend(
            f"generated,{entry['id']},{si},{float(p[0])!r},{float(p[1])!r}"
            for si, p in enumerate(pts)
        )
    _write_text(out_dir, section["projection_name"], "\n".join(proj_rows) + "\n")


def cmd_kp_study(section: dict, out_dir: str) -> None:
    rows = kp_multiplicity_study(
        N_items=section["num_items"],
        K_list=tuple(section["k_values"]),
        trials=section["trials"],
        rho=section["rho"],
        weight_dist=(section["weight_min"], section["weight_max"]),
        seed=section["seed"],
    )
    _write_text(out_dir, section["study_name"], study_rows_to_csv(rows))


_HANDLERS = {
    "synth": ("synth", cmd_synth),
    "train": ("train", cmd_train),
    "sample": ("sample", cmd_sample),
    "evaluate": ("evaluate", cmd_evaluate),
    "kp-study": ("kp_study", cmd_kp_study),
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def run_command(command: str, config: dict, out_dir: str) -> None:
    """Run one subcommand from an already-merged config (library entry)."""
    section_key, handler = _HANDLERS[command]
    handler(config[section_key], out_dir)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="videosum",
        description="Diverse video-summary generation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _HANDLERS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", default=None, metavar="PATH",
                       help="JSON config document")
        p.add_argument("--seed", type=int, default=None,
                       help="override the section seed")
        p.add_argument("--out", default=".", metavar="DIR",
                       help="output directory")
        if name == "sample":
            p.add_argument("--summarize", action="store_true",
                           help="also emit budgeted binary summaries")
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    section_key, _ = _HANDLERS[args.command]
    try:
        config = load_config(args.config)
        config = apply_overrides(config, _collect_override_pairs(extra))
        if args.seed is not None:
            if "seed" not in config[section_key]:
                raise ValueError(f"section {section_key} takes no seed")
            config[section_key]["seed"] = args.seed
        if args.command == "sample" and args.summarize:
            config["sample"]["summarize"] = True
    except (ValueError, FileNotFoundError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        run_command(args.command, config, args.out)
    except (ValueError, FileNotFoundError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
