"""The conditional importance-score denoiser: frame encoder, score
quantization codebook, gated cross-attention stack, prediction head, loss,
and the training loop (adaptive optimizer, EMA, condition dropout).

Architecture notes.  The noised logits are quantized and embedded through a
codebook rather than projected continuously; the conditioning video tokens
come from a position-free self-attention encoder; timestep and position
information enter only through per-layer modulation tensors (A1, B1, G1, A2,
B2, G2) produced by a zero-initialized MLP, so every block is exactly the
identity map at initialization and the model grows away from it during
training.  No layer normalization anywhere — the gated residuals carry the
conditioning instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .autodiff import (
    Tape,
    Tensor,
    add,
    concat_cols,
    gather_rows,
    matmul,
    mul,
    scale_shift,
    sigmoid,
    silu,
    slice_cols,
    softmax_rows,
    sum_squared_error,
    transpose,
    zero_grad,
)
from .diffusion import NoiseSchedule, forward_sample, make_schedule, to_logit

__all__ = [
    "ModelConfig",
    "DenoiserParams",
    "TrainConfig",
    "TrainResult",
    "DenoiseOutput",
    "init_params",
    "sinusoid_embedding",
    "pos_embed",
    "time_embed",
    "quantize_bins",
    "quantize_embed",
    "encode_video",
    "adaln_block",
    "denoise_forward",
    "batch_loss",
    "train",
    "as_sampling_denoiser",
    "clone_with_values",
    "save_checkpoint",
    "load_checkpoint",
]


# ---------------------------------------------------------------------------
# Configuration + parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    """Shape of the denoiser.  Defaults are the desk-scale test model."""

    d_in: int = 8
    d_model: int = 64
    l_enc: int = 2
    l_dec: int = 2
    codebook_bins: int = 200
    heads: int = 4
    ffn_mult: int = 4
    logit_eps: float = 1e-3

    def __post_init__(self):
        for name in ("d_in", "d_model", "l_enc", "l_dec", "codebook_bins", "heads",
                     "ffn_mult"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.d_model % 2 != 0:
            raise ValueError("d_model must be even (interleaved sinusoids)")
        if self.d_model % self.heads != 0:
            raise ValueError("d_model must divide evenly into heads")
        if self.codebook_bins < 2:
            raise ValueError("need at least 2 codebook bins")
        if not 0.0 < self.logit_eps < 0.5:
            raise ValueError("logit_eps must lie in (0, 0.5)")

    @property
    def ffn_dim(self) -> int:
        return self.ffn_mult * self.d_model

    @property
    def logit_bound(self) -> float:
        return math.log((1.0 - self.logit_eps) / self.logit_eps)


@dataclass
class DenoiserParams:
    """All learnable tensors, keyed by the checkpoint schema.

    Keys: ``proj.*``, ``enc.{i}.attn|mlp.*``, ``dec.{i}.attn|mlp|adaln.*``,
    ``time_mlp.*``, ``codebook``, ``head.*``.
    """

    config: ModelConfig
    tensors: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> Tensor:
        return self.tensors[key]

    def names(self):
        return self.tensors.keys()


def _attn_keys(prefix: str, d: int, rng) -> dict:
    out = {}
    for gate in ("q", "k", "v", "o"):
        out[f"{prefix}.w{gate}"] = Tensor(
            rng.normal(0.0, 1.0 / math.sqrt(d), size=(d, d)), requires_grad=True
        )
        out[f"{prefix}.b{gate}"] = Tensor(np.zeros(d), requires_grad=True)
    return out


def _mlp_keys(prefix: str, d: int, hidden: int, rng) -> dict:
    return {
        f"{prefix}.w1": Tensor(
            rng.normal(0.0, 1.0 / math.sqrt(d), size=(d, hidden)), requires_grad=True
        ),
        f"{prefix}.b1": Tensor(np.zeros(hidden), requires_grad=True),
        f"{prefix}.w2": Tensor(
            rng.normal(0.0, 1.0 / math.sqrt(hidden), size=(hidden, d)),
            requires_grad=True,
        ),
        f"{prefix}.b2": Tensor(np.zeros(d), requires_grad=True),
    }


def init_params(cfg: ModelConfig, seed: int = 0) -> DenoiserParams:
    """Fresh parameters; all modulation projections start at exactly zero."""
    rng = np.random.default_rng(seed)
    d = cfg.d_model
    t = {}
    t["proj.w"] = Tensor(
        rng.normal(0.0, 1.0 / math.sqrt(cfg.d_in), size=(cfg.d_in, d)),
        requires_grad=True,
    )
    t["proj.b"] = Tensor(np.zeros(d), requires_grad=True)
    for i in range(cfg.l_enc):
        t.update(_attn_keys(f"enc.{i}.attn", d, rng))
        t.update(_mlp_keys(f"enc.{i}.mlp", d, cfg.ffn_dim, rng))
    for i in range(cfg.l_dec):
        t.update(_attn_keys(f"dec.{i}.attn", d, rng))
        t.update(_mlp_keys(f"dec.{i}.mlp", d, cfg.ffn_dim, rng))
        t[f"dec.{i}.adaln.w1"] = Tensor(
            rng.normal(0.0, 1.0 / math.sqrt(d), size=(d, d)), requires_grad=True
        )
        t[f"dec.{i}.adaln.b1"] = Tensor(np.zeros(d), requires_grad=True)
        # zero init: every A/B/G modulation starts at 0, so blocks start as
        # the identity
        t[f"dec.{i}.adaln.w2"] = Tensor(np.zeros((d, 6 * d)), requires_grad=True)
        t[f"dec.{i}.adaln.b2"] = Tensor(np.zeros(6 * d), requires_grad=True)
    t.update(_mlp_keys("time_mlp", d, d, rng))
    # codebook rows start with their bin's center value written along one
    # shared direction, so the noised score is linearly readable before any
    # embedding learning has happened
    centers = (np.arange(cfg.codebook_bins) + 0.5) / cfg.codebook_bins - 0.5
    direction = rng.normal(0.0, 1.0, size=d)
    direction /= np.linalg.norm(direction)
    t["codebook"] = Tensor(
        rng.normal(0.0, 1.0 / math.sqrt(d), size=(cfg.codebook_bins, d))
        + 2.0 * centers[:, None] * direction[None, :],
        requires_grad=True,
    )
    t["head.w"] = Tensor(
        rng.normal(0.0, 1.0 / math.sqrt(d), size=(d, 1)), requires_grad=True
    )
    t["head.b"] = Tensor(np.zeros(1), requires_grad=True)
    return DenoiserParams(config=cfg, tensors=t)


def clone_with_values(params: DenoiserParams, values: dict) -> DenoiserParams:
    """A parameter set with the same shapes but data taken from ``values``
    (name -> array), e.g. an EMA snapshot."""
    tensors = {}
    for name, t in params.tensors.items():
        arr = np.array(values[name], dtype=np.float64)
        if arr.shape != t.data.shape:
            raise ValueError(f"{name}: shape {arr.shape} != {t.data.shape}")
        tensors[name] = Tensor(arr, requires_grad=True)
    return DenoiserParams(config=params.config, tensors=tensors)


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------

def sinusoid_embedding(positions: np.ndarray, dim: int) -> np.ndarray:
    """Interleaved sin/cos over geometric frequencies; position 0 row is
    [0, 1, 0, 1, ...]."""
    positions = np.asarray(positions, dtype=np.float64)
    half = dim // 2
    freqs = np.power(10000.0, -np.arange(half) / half)
    angles = positions[:, None] * freqs[None, :]
    out = np.empty((positions.size, dim))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


def pos_embed(num_frames: int, dim: int) -> np.ndarray:
    """Raw positional sinusoids for the frame axis, shape (N, dim)."""
    return sinusoid_embedding(np.arange(num_frames), dim)


def _time_mlp(base: Tensor, params: DenoiserParams) -> Tensor:
    h = silu(add(matmul(base, params["time_mlp.w1"]), params["time_mlp.b1"]))
    return add(matmul(h, params["time_mlp.w2"]), params["time_mlp.b2"])


def time_embed(t: int, params: DenoiserParams) -> Tensor:
    """Timestep embedding tau, shape (1, D): sinusoidal base through an MLP."""
    if t < 1:
        raise ValueError(f"timestep must be >= 1, got {t}")
    base = Tensor(sinusoid_embedding(np.array([t]), params.config.d_model))
    return _time_mlp(base, params)


# ---------------------------------------------------------------------------
# Quantization
# ---------------------------------------------------------------------------

def quantize_bins(u: np.ndarray, num_bins: int) -> np.ndarray:
    """Map logits to uniform score bins over [0,1]; the top bin is closed."""
    s = expit(np.asarray(u, dtype=np.float64))
    return np.minimum((s * num_bins).astype(np.int64), num_bins - 1)


def quantize_embed(u: np.ndarray, params: DenoiserParams) -> Tensor:
    """Codebook rows for the bins of u; gradients reach only selected rows."""
    bins = quantize_bins(u, params.config.codebook_bins)
    return gather_rows(params["codebook"], bins)


# ---------------------------------------------------------------------------
# Attention stack
# ---------------------------------------------------------------------------

def _mha(q_in: Tensor, k_in: Tensor, v_in: Tensor, params: DenoiserParams,
         prefix: str, attn_sink: list | None = None) -> Tensor:
    """Standard multi-head attention (per-head 1/sqrt(d_head) scaling)."""
    cfg = params.config
    d_head = cfg.d_model // cfg.heads
    q = add(matmul(q_in, params[f"{prefix}.wq"]), params[f"{prefix}.bq"])
    k = add(matmul(k_in, params[f"{prefix}.wk"]), params[f"{prefix}.bk"])
    v = add(matmul(v_in, params[f"{prefix}.wv"]), params[f"{prefix}.bv"])
    heads = []
    for h in range(cfg.heads):
        lo, hi = h * d_head, (h + 1) * d_head
        qh, kh, vh = (slice_cols(x, lo, hi) for x in (q, k, v))
        scores = mul(matmul(qh, transpose(kh)), 1.0 / math.sqrt(d_head))
        probs = softmax_rows(scores)
        if attn_sink is not None:
            attn_sink.append(probs.data)
        heads.append(matmul(probs, vh))
    merged = concat_cols(heads)
    return add(matmul(merged, params[f"{prefix}.wo"]), params[f"{prefix}.bo"])


def _mlp(x: Tensor, params: DenoiserParams, prefix: str) -> Tensor:
    h = silu(add(matmul(x, params[f"{prefix}.w1"]), params[f"{prefix}.b1"]))
    return add(matmul(h, params[f"{prefix}.w2"]), params[f"{prefix}.b2"])


def encode_video(features: np.ndarray, params: DenoiserParams) -> Tensor:
    """Project frame features to width D and contextualize with position-free
    self-attention (a frame permutation permutes the output rows)."""
    feats = features if isinstance(features, Tensor) else Tensor(
        np.asarray(features, dtype=np.float64)
    )
    if feats.data.ndim != 2 or feats.data.shape[1] != params.config.d_in:
        raise ValueError(
            f"features must be (N, {params.config.d_in}), got {feats.data.shape}"
        )
    x = add(matmul(feats, params["proj.w"]), params["proj.b"])
    for i in range(params.config.l_enc):
        x = add(_mha(x, x, x, params, f"enc.{i}.attn"), x)
        x = add(_mlp(x, params, f"enc.{i}.mlp"), x)
    return x


def adaln_block(q_t: Tensor, keys: Tensor, values: Tensor, tau: Tensor,
                phi: Tensor, params: DenoiserParams, layer: int,
                attn_sink: list | None = None) -> Tensor:
    """One gated cross-attention block.

    The modulation MLP maps (tau + phi) to six (N, D) tensors A1, B1, G1,
    A2, B2, G2; with all of them zero (the initial state) the block reduces
    to the identity on ``q_t``:

        H'  = G1*H + H + B1          for H in {q_t, keys, values}
        X1  = A1*MHA(Q', K', V') + Q'
        X2  = G2*X1 + X1 + B2
        out = A2*MLP(X2) + X2
    """
    d = params.config.d_model
    prefix = f"dec.{layer}"
    mod_in = add(tau, phi)
    hidden = silu(
        add(matmul(mod_in, params[f"{prefix}.adaln.w1"]), params[f"{prefix}.adaln.b1"])
    )
    mods = add(
        matmul(hidden, params[f"{prefix}.adaln.w2"]), params[f"{prefix}.adaln.b2"]
    )
    a1, b1, g1 = (slice_cols(mods, i * d, (i + 1) * d) for i in range(3))
    a2, b2, g2 = (slice_cols(mods, i * d, (i + 1) * d) for i in range(3, 6))
    q_mod = scale_shift(q_t, g1, b1)
    k_mod = scale_shift(keys, g1, b1)
    v_mod = scale_shift(values, g1, b1)
    x1 = add(mul(_mha(q_mod, k_mod, v_mod, params, f"{prefix}.attn", attn_sink), a1),
             q_mod)
    x2 = scale_shift(x1, g2, b2)
    return add(mul(_mlp(x2, params, f"{prefix}.mlp"), a2), x2)


# ---------------------------------------------------------------------------
# Full forward
# ---------------------------------------------------------------------------

@dataclass
class DenoiseOutput:
    s_hat: Tensor           # (N, 1) scores in (0,1); differentiable
    u_hat: np.ndarray       # (N,) clean-logit estimate, clamped; detached
    attention: np.ndarray | None  # (N,) aggregated attention, when collected
    stack_out: Tensor       # (N, D) pre-head representation


def denoise_forward(u_t: np.ndarray, t: int, z: Tensor, params: DenoiserParams,
                    collect_attention: bool = False) -> DenoiseOutput:
    """Predict the clean score profile from noised logits at level t.

    ``z`` is the encoded video (from :func:`encode_video`).  ``u_hat`` is the
    logit of the eps-clipped prediction — exactly a clamp of the raw head
    logits — and is what the reverse sampler consumes.
    """
    if t < 1:
        raise ValueError(f"timestep must be >= 1, got {t}")
    u_t = np.asarray(u_t, dtype=np.float64)
    n = u_t.size
    if z.data.shape != (n, params.config.d_model):
        raise ValueError(
            f"encoded video shape {z.data.shape} does not match "
            f"(num_frames={n}, D={params.config.d_model})"
        )

    q = quantize_embed(u_t, params)
    phi = Tensor(pos_embed(n, params.config.d_model))
    tau_base = Tensor(
        np.tile(sinusoid_embedding(np.array([t]), params.config.d_model), (n, 1))
    )
    tau = _time_mlp(tau_base, params)
    sink = [] if collect_attention else None
    for layer in range(params.config.l_dec):
        q = adaln_block(q, z, z, tau, phi, params, layer, sink)
    logits = add(matmul(q, params["head.w"]), params["head.b"])
    s_hat = sigmoid(logits)
    bound = params.config.logit_bound
    u_hat = np.clip(logits.data[:, 0], -bound, bound)
    attention = None
    if collect_attention:
        attention = np.mean([p.mean(axis=0) for p in sink], axis=0)
    return DenoiseOutput(s_hat=s_hat, u_hat=u_hat, attention=attention, stack_out=q)


def batch_loss(outputs, targets) -> Tensor:
    """Mean over the batch of per-sample summed squared errors."""
    if len(outputs) != len(targets) or not outputs:
        raise ValueError("need equally many outputs and targets (>= 1)")
    total = None
    for out, tgt in zip(outputs, targets):
        tgt = np.asarray(tgt, dtype=np.float64).reshape(-1, 1)
        if out.s_hat.data.shape != tgt.shape:
            raise ValueError(
                f"prediction shape {out.s_hat.data.shape} vs target {tgt.shape}"
            )
        term = sum_squared_error(out.s_hat, Tensor(tgt))
        total = term if total is None else add(total, term)
    return mul(total, 1.0 / len(outputs))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    weight_decay: float = 0.01
    batch_size: int = 256
    epochs: int = 1
    ema_decay: float = 0.999
    cond_dropout_prob: float = 0.1
    seed: int = 0
    schedule: str = "cosine"
    t_train: int = 1000

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning_rate, batch_size, epochs must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in [0, 1)")
        if not 0.0 <= self.cond_dropout_prob < 1.0:
            raise ValueError("cond_dropout_prob must lie in [0, 1)")
        if self.t_train < 1:
            raise ValueError("t_train must be >= 1")


@dataclass
class TrainResult:
    params: DenoiserParams
    ema: dict                 # name -> np.ndarray
    log: list                 # per-epoch dicts: {"epoch", "loss"}

    def ema_params(self) -> DenoiserParams:
        return clone_with_values(self.params, self.ema)


_ADAM_B1, _ADAM_B2, _ADAM_EPS = 0.9, 0.999, 1e-8


def train(dataset, params: DenoiserParams, cfg: TrainConfig,
          schedule: NoiseSchedule | None = None) -> TrainResult:
    """Optimize the denoiser on (video, single-annotator) regression pairs.

    Per step: draw ``batch_size`` videos uniformly, one annotator uniformly
    per video, a timestep uniformly in [1, T]; noise the clipped logit
    target forward to that level; minimize the mean summed squared score
    error.  Updates use decoupled weight decay with per-parameter adaptive
    moments under a cosine-annealed learning rate; an exponential moving
    average of the weights is maintained throughout; the conditioning is
    dropped (zeroed features) with ``cond_dropout_prob`` so guided sampling
    has an unconditional branch to mix against.
    """
    if schedule is None:
        schedule = make_schedule(cfg.schedule, cfg.t_train)
    usable = [rec for rec in dataset if rec.num_annotators > 0]
    if not usable:
        raise ValueError("training needs at least one annotated video")
    for rec in usable:
        if rec.feature_dim != params.config.d_in:
            raise ValueError(
                f"video {rec.id!r} feature dim {rec.feature_dim} != model d_in"
            )
    rng = np.random.default_rng(cfg.seed)
    eps = params.config.logit_eps
    pairs_per_epoch = sum(rec.num_annotators for rec in usable)
    steps_per_epoch = max(1, math.ceil(pairs_per_epoch / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch
    moment1 = {name: np.zeros_like(p.data) for name, p in params.tensors.items()}
    moment2 = {name: np.zeros_like(p.data) for name, p in params.tensors.items()}
    ema = {name: p.data.copy() for name, p in params.tensors.items()}
    log = []
    step_index = 0
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for _ in range(steps_per_epoch):
            lr = cfg.learning_rate * 0.5 * (
                1.0 + math.cos(math.pi * step_index / total_steps)
            )
            zero_grad(params.tensors)
            with Tape() as tape:
                outputs, targets = [], []
                for _ in range(cfg.batch_size):
                    rec = usable[rng.integers(len(usable))]
                    s0 = rec.annotations[rng.integers(rec.num_annotators)].values
                    t = int(rng.integers(1, schedule.T_train + 1))
                    u0 = to_logit(s0, eps)
                    u_t = forward_sample(u0, t, schedule,
                                         rng.standard_normal(s0.size))
                    if cfg.cond_dropout_prob > 0 and rng.random() < cfg.cond_dropout_prob:
                        feats = np.zeros_like(rec.features)
                    else:
                        feats = rec.features
                    z = encode_video(feats, params)
                    outputs.append(denoise_forward(u_t, t, z, params))
                    targets.append(s0)
                loss = batch_loss(outputs, targets)
            loss_val = float(loss.data)
            if not math.isfinite(loss_val):
                raise RuntimeError(
                    f"non-finite loss {loss_val} at epoch {epoch}, "
                    f"step {step_index} — training aborted"
                )
            tape.backward(loss)
            step_index += 1
            for name, p in params.tensors.items():
                g = p.grad
                if g is None:
                    continue
                if not np.isfinite(g).all():
                    raise RuntimeError(
                        f"non-finite gradient in {name!r} at step {step_index}"
                    )
                m = moment1[name]
                v = moment2[name]
                m *= _ADAM_B1
                m += (1 - _ADAM_B1) * g
                v *= _ADAM_B2
                v += (1 - _ADAM_B2) * g * g
                m_hat = m / (1 - _ADAM_B1 ** step_index)
                v_hat = v / (1 - _ADAM_B2 ** step_index)
                # decoupled decay: the shrink term uses the pre-step weights
                p.data -= (lr * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
                           + lr * cfg.weight_decay * p.data)
            for name, p in params.tensors.items():
                ema[name] *= cfg.ema_decay
                ema[name] += (1 - cfg.ema_decay) * p.data
            epoch_losses.append(loss_val)
        log.append({"epoch": epoch, "loss": float(np.mean(epoch_losses))})
    return TrainResult(params=params, ema=ema, log=log)


# ---------------------------------------------------------------------------
# Sampling adapter + checkpoints
# ---------------------------------------------------------------------------

# ---------------------------------------------------------------------------
# Inference path
# ---------------------------------------------------------------------------
#
# Sampling never needs gradients, and a 200-draw reverse pass makes thousands
# of forward calls, so the tape-recording ops above are pure overhead there.
# The functions below replay the identical arithmetic on raw arrays.  A unit
# test holds them to the tape path at tight tolerance.

def _np_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _np_silu(x: np.ndarray) -> np.ndarray:
    return x * _np_sigmoid(x)


def _np_softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


def _np_mha(q_in, k_in, v_in, params: DenoiserParams, prefix: str,
            attn_sink: list | None = None) -> np.ndarray:
    cfg = params.config
    d_head = cfg.d_model // cfg.heads
    P = params.tensors
    q = q_in @ P[f"{prefix}.wq"].data + P[f"{prefix}.bq"].data
    k = k_in @ P[f"{prefix}.wk"].data + P[f"{prefix}.bk"].data
    v = v_in @ P[f"{prefix}.wv"].data + P[f"{prefix}.bv"].data
    heads = []
    for h in range(cfg.heads):
        lo, hi = h * d_head, (h + 1) * d_head
        probs = _np_softmax_rows(
            (q[:, lo:hi] @ k[:, lo:hi].T) / math.sqrt(d_head)
        )
        if attn_sink is not None:
            attn_sink.append(probs)
        heads.append(probs @ v[:, lo:hi])
    merged = np.concatenate(heads, axis=1)
    return merged @ P[f"{prefix}.wo"].data + P[f"{prefix}.bo"].data


def _np_mlp(x: np.ndarray, params: DenoiserParams, prefix: str) -> np.ndarray:
    P = params.tensors
    h = _np_silu(x @ P[f"{prefix}.w1"].data + P[f"{prefix}.b1"].data)
    return h @ P[f"{prefix}.w2"].data + P[f"{prefix}.b2"].data


def encode_video_infer(features: np.ndarray, params: DenoiserParams) -> np.ndarray:
    """Gradient-free twin of :func:`encode_video`; returns a plain array."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != params.config.d_in:
        raise ValueError(
            f"features must be (N, {params.config.d_in}), got {feats.shape}"
        )
    P = params.tensors
    x = feats @ P["proj.w"].data + P["proj.b"].data
    for i in range(params.config.l_enc):
        x = _np_mha(x, x, x, params, f"enc.{i}.attn") + x
        x = _np_mlp(x, params, f"enc.{i}.mlp") + x
    return x


def denoise_infer(u_t: np.ndarray, t: int, z: np.ndarray,
                  params: DenoiserParams) -> tuple[np.ndarray, np.ndarray]:
    """Gradient-free twin of :func:`denoise_forward`.

    Returns ``(u_hat, attention)`` — the clamped clean-logit estimate and the
    aggregated cross-attention profile — which is exactly the pair a sampler
    callable must produce.
    """
    if t < 1:
        raise ValueError(f"timestep must be >= 1, got {t}")
    cfg = params.config
    u_t = np.asarray(u_t, dtype=np.float64)
    n = u_t.size
    if z.shape != (n, cfg.d_model):
        raise ValueError(
            f"encoded video shape {z.shape} does not match "
            f"(num_frames={n}, D={cfg.d_model})"
        )
    P = params.tensors
    d = cfg.d_model
    q = P["codebook"].data[quantize_bins(u_t, cfg.codebook_bins)]
    phi = pos_embed(n, d)
    tau_base = np.tile(sinusoid_embedding(np.array([t]), d), (n, 1))
    h = _np_silu(tau_base @ P["time_mlp.w1"].data + P["time_mlp.b1"].data)
    tau = h @ P["time_mlp.w2"].data + P["time_mlp.b2"].data
    sink: list = []
    mod_in = tau + phi
    for layer in range(cfg.l_dec):
        prefix = f"dec.{layer}"
        hidden = _np_silu(
            mod_in @ P[f"{prefix}.adaln.w1"].data + P[f"{prefix}.adaln.b1"].data
        )
        mods = hidden @ P[f"{prefix}.adaln.w2"].data + P[f"{prefix}.adaln.b2"].data
        a1, b1, g1 = (mods[:, i * d:(i + 1) * d] for i in range(3))
        a2, b2, g2 = (mods[:, i * d:(i + 1) * d] for i in range(3, 6))
        q_mod = q * g1 + q + b1
        k_mod = z * g1 + z + b1
        x1 = _np_mha(q_mod, k_mod, k_mod, params, f"{prefix}.attn", sink) * a1 + q_mod
        x2 = x1 * g2 + x1 + b2
        q = _np_mlp(x2, params, f"{prefix}.mlp") * a2 + x2
    logits = q @ P["head.w"].data + P["head.b"].data
    u_hat = np.clip(logits[:, 0], -cfg.logit_bound, cfg.logit_bound)
    attention = np.mean([p.mean(axis=0) for p in sink], axis=0)
    return u_hat, attention


def as_sampling_denoiser(params: DenoiserParams):
    """Wrap trained parameters as the ``denoiser(u, t, cond)`` callable the
    sampler expects.  ``cond=None`` runs the null (all-zero) condition.
    Encoded videos are cached per conditioning matrix; the gradient-free
    forward keeps long sampling runs cheap."""
    cache: dict = {}

    def fn(u, t, cond):
        n = np.asarray(u).size
        key = ("null", n) if cond is None else id(cond)
        z = cache.get(key)
        if z is None:
            feats = (
                np.zeros((n, params.config.d_in)) if cond is None
                else np.asarray(cond, dtype=np.float64)
            )
            z = encode_video_infer(feats, params)
            cache[key] = z
        return denoise_infer(u, t, z, params)

    return fn


def save_checkpoint(params: DenoiserParams, path) -> None:
    payload = {
        "version": 1,
        "config": {
            "d_in": params.config.d_in,
            "d_model": params.config.d_model,
            "l_enc": params.config.l_enc,
            "l_dec": params.config.l_dec,
            "codebook_bins": params.config.codebook_bins,
            "heads": params.config.heads,
            "ffn_mult": params.config.ffn_mult,
            "logit_eps": params.config.logit_eps,
        },
        "params": {name: p.data.tolist() for name, p in params.tensors.items()},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> DenoiserParams:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != 1:
        raise ValueError(f"unsupported checkpoint version in {path}")
    cfg = ModelConfig(**payload["config"])
    fresh = init_params(cfg, seed=0)
    stored = payload["params"]
    missing = set(fresh.names()) - set(stored)
    extra = set(stored) - set(fresh.names())
    if missing or extra:
        raise ValueError(
            f"checkpoint key mismatch: missing {sorted(missing)}, extra {sorted(extra)}"
        )
    return clone_with_values(fresh, stored)
