"""Pairwise comparison networks: variants, forward, exact gradients, training.

Every time step of an input pair is processed identically: each side's
frame goes through a shared 3-layer dense branch (dense -> batch norm ->
ReLU -> dropout), the two 128-d outputs are concatenated, and an MLP
(256 -> 256 -> 128, same layer recipe) produces a per-step hidden state
h_t. An output map f gives per-category status probabilities per step;
a second map v gives attention scores, and predictions are pooled along
time with softmax-normalized weights:

    y = sum_t v(h_t) * f(h_t) / sum_t v(h_t)

Attention weights are per output unit, so the pooled rows are
renormalized to stay probability distributions over the 3 statuses
(with equal scores the weights are uniform and the renormalization is
the identity, so the pooling reduces exactly to a mean over time).

Variants: the siamese branch can be dropped (raw frame concatenation
feeds the MLP), attention can be replaced by mean pooling, and the
single network predicting all 8 category rows can be split into 8
independent towers predicting one row each.

Training-mode batch norm pools statistics jointly over the whole batch
per layer invocation (both siamese sides included), so results depend
on the batch partition; training fixes the partition order to keep runs
reproducible. Inference uses the stored running statistics.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .presence import N_CATEGORIES, N_STATUSES, MatrixMode, PresenceMatrix

BN_EPS = 1e-5
BN_MOMENTUM = 0.99
CE_CLAMP = 1e-12

CHECKPOINT_MAGIC = b"SERM"
CHECKPOINT_VERSION = 1


class NetworkError(RuntimeError):
    """Shape mismatch, non-finite activations, or bad checkpoint data."""


class Variant(enum.Enum):
    SINGLE = "single"
    MULTI = "multi"


@dataclass(frozen=True)
class NetworkConfig:
    variant: Variant = Variant.SINGLE
    siamese: bool = True
    attention: bool = True
    branch_layers: tuple[int, ...] = (128, 128, 128)
    mlp_layers: tuple[int, ...] = (256, 128)
    dropout_rate: float = 0.5
    categories: int = N_CATEGORIES
    statuses: int = N_STATUSES

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if any(u <= 0 for u in self.branch_layers + self.mlp_layers):
            raise ValueError("layer sizes must be positive")

    @property
    def n_towers(self) -> int:
        return self.categories if self.variant is Variant.MULTI else 1

    @property
    def rows_per_tower(self) -> int:
        return 1 if self.variant is Variant.MULTI else self.categories

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "siamese": self.siamese,
            "attention": self.attention,
            "branch_layers": list(self.branch_layers),
            "mlp_layers": list(self.mlp_layers),
            "dropout_rate": self.dropout_rate,
            "categories": self.categories,
            "statuses": self.statuses,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "NetworkConfig":
        return cls(
            variant=Variant(d["variant"]),
            siamese=bool(d["siamese"]),
            attention=bool(d["attention"]),
            branch_layers=tuple(d["branch_layers"]),
            mlp_layers=tuple(d["mlp_layers"]),
            dropout_rate=float(d["dropout_rate"]),
            categories=int(d["categories"]),
            statuses=int(d["statuses"]),
        )


@dataclass
class NetworkParams:
    """Named parameter tensors; running batch-norm stats ride along."""

    tensors: dict[str, np.ndarray]

    def trainable_names(self) -> list[str]:
        return [n for n in sorted(self.tensors) if not n.endswith((".bn_mean", ".bn_var"))]

    def copy(self) -> "NetworkParams":
        return NetworkParams({n: t.copy() for n, t in self.tensors.items()})

    def equals(self, other: "NetworkParams") -> bool:
        return set(self.tensors) == set(other.tensors) and all(
            np.array_equal(self.tensors[n], other.tensors[n]) for n in self.tensors
        )

    def validate(self) -> None:
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise NetworkError(f"non-finite parameter tensor {name}")
            if name.endswith(".bn_var") and not np.all(t > 0):
                raise NetworkError(f"non-positive running variance in {name}")


def _he_uniform(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def _layer_dims(cfg: NetworkConfig, input_dim: int) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    branch = []
    if cfg.siamese:
        d = input_dim
        for units in cfg.branch_layers:
            branch.append((d, units))
            d = units
        mlp_in = 2 * d
    else:
        mlp_in = 2 * input_dim
    mlp = []
    d = mlp_in
    for units in cfg.mlp_layers:
        mlp.append((d, units))
        d = units
    return branch, mlp


def init_params(cfg: NetworkConfig, seed: int | np.random.Generator = 0, input_dim: int = 128) -> NetworkParams:
    """He-uniform fan-in initialization for every tower, seeded."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    branch_dims, mlp_dims = _layer_dims(cfg, input_dim)
    tensors: dict[str, np.ndarray] = {}

    def add_dense_bn(prefix: str, din: int, dout: int) -> None:
        tensors[f"{prefix}.W"] = _he_uniform(rng, din, (din, dout))
        tensors[f"{prefix}.b"] = np.zeros(dout)
        tensors[f"{prefix}.bn_gamma"] = np.ones(dout)
        tensors[f"{prefix}.bn_beta"] = np.zeros(dout)
        tensors[f"{prefix}.bn_mean"] = np.zeros(dout)
        tensors[f"{prefix}.bn_var"] = np.ones(dout)

    head_out = cfg.rows_per_tower * cfg.statuses
    hidden = cfg.mlp_layers[-1]
    for m in range(cfg.n_towers):
        for li, (din, dout) in enumerate(branch_dims):
            add_dense_bn(f"tower{m}.branch{li}", din, dout)
        for li, (din, dout) in enumerate(mlp_dims):
            add_dense_bn(f"tower{m}.mlp{li}", din, dout)
        tensors[f"tower{m}.attention_f.W"] = _he_uniform(rng, hidden, (hidden, head_out))
        tensors[f"tower{m}.attention_f.b"] = np.zeros(head_out)
        if cfg.attention:
            tensors[f"tower{m}.attention_v.W"] = _he_uniform(rng, hidden, (hidden, head_out))
            tensors[f"tower{m}.attention_v.b"] = np.zeros(head_out)
    return NetworkParams(tensors)


# ---------------------------------------------------------------------------
# forward / backward


def _dense_bn_forward(tensors, prefix, x, training, drop_rate, rng, caches):
    """dense -> batch norm -> ReLU -> dropout on (B, S, Din) arrays.

    Training mode normalizes with statistics pooled over the whole batch
    and all frames jointly; inference uses the stored running stats.
    """
    w, b = tensors[f"{prefix}.W"], tensors[f"{prefix}.b"]
    gamma, beta = tensors[f"{prefix}.bn_gamma"], tensors[f"{prefix}.bn_beta"]
    if x.shape[-1] != w.shape[0]:
        raise NetworkError(f"layer {prefix}: input dim {x.shape[-1]} != weight dim {w.shape[0]}")
    z = x @ w + b
    cache = {"prefix": prefix, "x": x, "training": training}
    if training:
        mean = z.mean(axis=(0, 1))
        var = z.var(axis=(0, 1))
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (z - mean) * inv_std
        cache["batch_mean"] = mean
        cache["batch_var"] = var
    else:
        rmean, rvar = tensors[f"{prefix}.bn_mean"], tensors[f"{prefix}.bn_var"]
        inv_std = 1.0 / np.sqrt(rvar + BN_EPS)
        xhat = (z - rmean) * inv_std
    out = gamma * xhat + beta
    cache.update(inv_std=inv_std, xhat=xhat)
    relu_mask = out > 0
    out = out * relu_mask
    cache["relu_mask"] = relu_mask
    if training and drop_rate > 0.0:
        mask = (rng.random(out.shape) >= drop_rate) / (1.0 - drop_rate)
        out = out * mask
        cache["drop_mask"] = mask
    caches.append(cache)
    if not np.all(np.isfinite(out)):
        raise NetworkError(f"non-finite activations after layer {prefix}")
    return out


def _dense_bn_backward(tensors, grads, cache, dout):
    prefix = cache["prefix"]
    if "drop_mask" in cache:
        dout = dout * cache["drop_mask"]
    dout = dout * cache["relu_mask"]
    gamma = tensors[f"{prefix}.bn_gamma"]
    xhat, inv_std = cache["xhat"], cache["inv_std"]
    grads[f"{prefix}.bn_gamma"] += (dout * xhat).sum(axis=(0, 1))
    grads[f"{prefix}.bn_beta"] += dout.sum(axis=(0, 1))
    dxhat = dout * gamma
    if cache["training"]:
        dz = (
            dxhat
            - dxhat.mean(axis=(0, 1))
            - xhat * (dxhat * xhat).mean(axis=(0, 1))
        ) * inv_std
    else:
        dz = dxhat * inv_std
    x = cache["x"]
    w = tensors[f"{prefix}.W"]
    flat_x = x.reshape(-1, x.shape[-1])
    flat_dz = dz.reshape(-1, dz.shape[-1])
    grads[f"{prefix}.W"] += flat_x.T @ flat_dz
    grads[f"{prefix}.b"] += flat_dz.sum(axis=0)
    return (dz @ w.T).reshape(x.shape)


@dataclass
class _TowerTrace:
    caches: list
    hidden: np.ndarray          # (B, T, H)
    f_logits: np.ndarray        # (B, T, R, C)
    f_probs: np.ndarray         # (B, T, R, C)
    attn_scores: np.ndarray | None  # (B, T, R, C) raw, pre-exp
    attn_weights: np.ndarray    # (B, T, R, C), sums to 1 along T
    pooled_raw: np.ndarray      # (B, R, C), per-unit weighted average
    row_sums: np.ndarray        # (B, R, 1)
    pooled: np.ndarray          # (B, R, C), rows renormalized to sum 1


@dataclass
class BatchTrace:
    """Everything the backward pass needs, for a batch of pairs."""

    towers: list[_TowerTrace]
    pooled: np.ndarray          # (B, categories, statuses)
    training: bool
    t_steps: int


@dataclass
class ForwardTrace:
    """Single-pair view of a forward pass (see BatchTrace for batches)."""

    hidden: np.ndarray              # (n_towers, T, H)
    step_predictions: np.ndarray    # (T, categories, statuses)
    attn_scores: np.ndarray | None  # (T, categories, statuses)
    attn_weights: np.ndarray        # (T, categories, statuses)
    pooled: PresenceMatrix
    training: bool
    batch: BatchTrace = field(repr=False, default=None)


def _tower_forward(tensors, cfg, prefix_m, ea, eb, training, rng) -> _TowerTrace:
    b_pairs, t_steps, _ = ea.shape
    caches: list = []
    if cfg.siamese:
        stacked = np.concatenate([ea, eb], axis=1)  # (B, 2T, D): one shared branch pass
        for li in range(len(cfg.branch_layers)):
            stacked = _dense_bn_forward(
                tensors, f"{prefix_m}.branch{li}", stacked, training, cfg.dropout_rate, rng, caches
            )
        h = np.concatenate([stacked[:, :t_steps, :], stacked[:, t_steps:, :]], axis=2)
    else:
        h = np.concatenate([ea, eb], axis=2)
    for li in range(len(cfg.mlp_layers)):
        h = _dense_bn_forward(tensors, f"{prefix_m}.mlp{li}", h, training, cfg.dropout_rate, rng, caches)

    r, c = cfg.rows_per_tower, cfg.statuses
    f_logits = (h @ tensors[f"{prefix_m}.attention_f.W"] + tensors[f"{prefix_m}.attention_f.b"]).reshape(
        b_pairs, t_steps, r, c
    )
    shifted = f_logits - f_logits.max(axis=3, keepdims=True)
    exp_f = np.exp(shifted)
    f_probs = exp_f / exp_f.sum(axis=3, keepdims=True)

    if cfg.attention:
        scores = (h @ tensors[f"{prefix_m}.attention_v.W"] + tensors[f"{prefix_m}.attention_v.b"]).reshape(
            b_pairs, t_steps, r, c
        )
        # exp(score) normalized along time == softmax over t, computed stably
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        weights = e / e.sum(axis=1, keepdims=True)
    else:
        scores = None
        weights = np.full((b_pairs, t_steps, r, c), 1.0 / t_steps)
    pooled_raw = (weights * f_probs).sum(axis=1)
    row_sums = pooled_raw.sum(axis=2, keepdims=True)
    pooled = pooled_raw / row_sums
    return _TowerTrace(caches, h, f_logits, f_probs, scores, weights, pooled_raw, row_sums, pooled)


def forward_batch(
    params: NetworkParams,
    cfg: NetworkConfig,
    ea: np.ndarray,
    eb: np.ndarray,
    training: bool,
    rng: np.random.Generator | None = None,
) -> BatchTrace:
    """Run the configured variant on (B, T, D) input pairs."""
    ea = np.asarray(ea, dtype=np.float64)
    eb = np.asarray(eb, dtype=np.float64)
    if ea.shape != eb.shape or ea.ndim != 3:
        raise NetworkError(f"input pair shapes must match, got {ea.shape} vs {eb.shape}")
    if training and cfg.dropout_rate > 0.0 and rng is None:
        raise NetworkError("training-mode forward with dropout needs an rng")
    towers = [
        _tower_forward(params.tensors, cfg, f"tower{m}", ea, eb, training, rng)
        for m in range(cfg.n_towers)
    ]
    pooled = np.concatenate([tw.pooled for tw in towers], axis=1)
    if not np.all(np.isfinite(pooled)):
        raise NetworkError("non-finite pooled output")
    return BatchTrace(towers, pooled, training, ea.shape[1])


def forward(
    params: NetworkParams,
    cfg: NetworkConfig,
    ea,
    eb,
    training: bool = False,
    rng: np.random.Generator | int | None = None,
) -> ForwardTrace:
    """Single-pair forward; accepts EmbeddingSequence or (T, D) arrays."""
    a = ea.frames if hasattr(ea, "frames") else np.asarray(ea)
    b = eb.frames if hasattr(eb, "frames") else np.asarray(eb)
    if isinstance(rng, int):
        rng = np.random.default_rng(rng)
    batch = forward_batch(params, cfg, a[None], b[None], training, rng)
    hidden = np.stack([tw.hidden[0] for tw in batch.towers])
    preds = np.concatenate([tw.f_probs[0] for tw in batch.towers], axis=1)
    weights = np.concatenate([tw.attn_weights[0] for tw in batch.towers], axis=1)
    if cfg.attention:
        scores = np.concatenate([tw.attn_scores[0] for tw in batch.towers], axis=1)
    else:
        scores = None
    pooled = PresenceMatrix(batch.pooled[0], MatrixMode.PROBABILISTIC)
    return ForwardTrace(hidden, preds, scores, weights, pooled, training, batch)


def loss(pooled: PresenceMatrix | np.ndarray, target: PresenceMatrix) -> float:
    """Summed per-category cross-entropy between pooled output and target."""
    y = pooled.rows if isinstance(pooled, PresenceMatrix) else np.asarray(pooled)
    return float(_loss_batch(y[None], target.rows[None]))


def _loss_batch(pooled: np.ndarray, targets: np.ndarray) -> float:
    return float(-(targets * np.log(np.maximum(pooled, CE_CLAMP))).sum())


def _loss_grad(pooled: np.ndarray, targets: np.ndarray) -> np.ndarray:
    grad = np.zeros_like(pooled)
    live = pooled > CE_CLAMP
    grad[live] = -targets[live] / pooled[live]
    return grad


def _zero_grads(params: NetworkParams) -> dict[str, np.ndarray]:
    return {n: np.zeros_like(params.tensors[n]) for n in params.trainable_names()}


def backward_batch(
    params: NetworkParams,
    cfg: NetworkConfig,
    trace: BatchTrace,
    targets: np.ndarray,
) -> dict[str, np.ndarray]:
    """Exact gradients of the summed batch loss for every trainable tensor."""
    tensors = params.tensors
    grads = _zero_grads(params)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 2:
        targets = targets[None]
    dy_full = _loss_grad(trace.pooled, targets)  # (B, categories, statuses)
    for m, tw in enumerate(trace.towers):
        r = cfg.rows_per_tower
        dy = dy_full[:, m * r : (m + 1) * r, :]  # rows owned by this tower
        b_pairs, t_steps, _, c = tw.f_probs.shape
        w_att, f_probs = tw.attn_weights, tw.f_probs
        # through the row renormalization y = u / sum_c(u)
        du = (dy - (dy * tw.pooled).sum(axis=2, keepdims=True)) / tw.row_sums
        df = w_att * du[:, None]
        if cfg.attention:
            dscore = w_att * (f_probs - tw.pooled_raw[:, None]) * du[:, None]
        # f-head softmax over statuses
        dlogits = f_probs * (df - (df * f_probs).sum(axis=3, keepdims=True))
        prefix = f"tower{m}"
        h = tw.hidden
        flat_h = h.reshape(-1, h.shape[-1])
        flat_dl = dlogits.reshape(b_pairs * t_steps, r * c)
        grads[f"{prefix}.attention_f.W"] += flat_h.T @ flat_dl
        grads[f"{prefix}.attention_f.b"] += flat_dl.sum(axis=0)
        dh = (flat_dl @ tensors[f"{prefix}.attention_f.W"].T).reshape(h.shape)
        if cfg.attention:
            flat_ds = dscore.reshape(b_pairs * t_steps, r * c)
            grads[f"{prefix}.attention_v.W"] += flat_h.T @ flat_ds
            grads[f"{prefix}.attention_v.b"] += flat_ds.sum(axis=0)
            dh += (flat_ds @ tensors[f"{prefix}.attention_v.W"].T).reshape(h.shape)

        caches = list(tw.caches)
        n_mlp = len(cfg.mlp_layers)
        for cache in reversed(caches[-n_mlp:]):
            dh = _dense_bn_backward(tensors, grads, cache, dh)
        if cfg.siamese:
            half = dh.shape[-1] // 2
            dstacked = np.concatenate([dh[..., :half], dh[..., half:]], axis=1)
            for cache in reversed(caches[:-n_mlp]):
                dstacked = _dense_bn_backward(tensors, grads, cache, dstacked)
    return grads


def backward(
    params: NetworkParams,
    cfg: NetworkConfig,
    trace: ForwardTrace | BatchTrace,
    target: PresenceMatrix | np.ndarray,
) -> dict[str, np.ndarray]:
    """Per-pair gradient structure matching the trainable tensors."""
    batch = trace.batch if isinstance(trace, ForwardTrace) else trace
    t = target.rows if isinstance(target, PresenceMatrix) else np.asarray(target)
    return backward_batch(params, cfg, batch, t)


# ---------------------------------------------------------------------------
# gradient checking


def gradient_check(
    params: NetworkParams,
    cfg: NetworkConfig,
    ea: np.ndarray,
    eb: np.ndarray,
    target: np.ndarray,
    step: float = 1e-4,
    coords_per_tensor: int = 6,
    seed: int = 0,
    perturb: float = 0.0,
) -> dict[str, float]:
    """Central-difference check of every trainable tensor (inference mode).

    Returns max relative error per tensor. Coordinates whose probe
    interval straddles a relu kink are re-probed at a narrower step,
    which separates non-smoothness artifacts from genuine gradient
    errors. `perturb` scales the analytic gradients before comparison,
    for fault-injection self-tests.
    """
    rng = np.random.default_rng(seed)
    trace = forward_batch(params, cfg, ea[None], eb[None], training=False)
    grads = backward_batch(params, cfg, trace, target[None])
    if perturb:
        grads = {n: g * (1.0 + perturb) for n, g in grads.items()}

    def loss_at(tweaked: dict[str, np.ndarray]) -> float:
        p = NetworkParams({**params.tensors, **tweaked})
        tr = forward_batch(p, cfg, ea[None], eb[None], training=False)
        return _loss_batch(tr.pooled, target[None])

    errors: dict[str, float] = {}
    for name in params.trainable_names():
        tensor = params.tensors[name]
        n_coords = min(coords_per_tensor, tensor.size)
        flat_idx = rng.choice(tensor.size, size=n_coords, replace=False)
        worst = 0.0
        for fi in flat_idx:
            idx = np.unravel_index(fi, tensor.shape)

            def probe(h: float) -> float:
                bumped = tensor.copy()
                bumped[idx] = tensor[idx] + h
                up = loss_at({name: bumped})
                bumped[idx] = tensor[idx] - h
                down = loss_at({name: bumped})
                return (up - down) / (2.0 * h)

            numeric = probe(step)
            analytic = grads[name][idx]
            diff = abs(analytic - numeric)
            if diff / max(abs(analytic), abs(numeric), 1e-8) > 1e-4:
                # a relu kink inside [theta-step, theta+step] invalidates
                # the quotient; a wrong gradient stays wrong at any step
                refined = probe(step / 16.0)
                if abs(analytic - refined) < diff:
                    numeric = refined
                    diff = abs(analytic - refined)
            if diff < 1e-9:
                continue
            worst = max(worst, diff / max(abs(analytic), abs(numeric), 1e-8))
        errors[name] = worst
    return errors


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 50
    validation_fraction: float = 0.10
    seed: int = 0
    rms_decay: float = 0.9
    rms_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float | None


@dataclass
class TrainReport:
    seed: int
    config: NetworkConfig
    train_config: TrainConfig
    phase1: list[EpochStats]
    best_epoch: int
    phase2: list[EpochStats]

    def to_text(self) -> str:
        lines = [
            "training report",
            f"seed: {self.seed}",
            f"network: {json.dumps(self.config.to_dict(), sort_keys=True)}",
            f"optimizer: rmsprop decay={self.train_config.rms_decay} eps={self.train_config.rms_eps}",
            f"learning_rate: {self.train_config.learning_rate}",
            f"batch_size: {self.train_config.batch_size}",
            f"validation_fraction: {self.train_config.validation_fraction}",
            f"best_epoch: {self.best_epoch}",
            "phase1 (train/validation split):",
            "epoch\ttrain_loss\tval_loss",
        ]
        for st in self.phase1:
            val = f"{st.val_loss:.6f}" if st.val_loss is not None else "-"
            lines.append(f"{st.epoch}\t{st.train_loss:.6f}\t{val}")
        lines.append("phase2 (all pairs, fresh initialization):")
        lines.append("epoch\ttrain_loss")
        for st in self.phase2:
            lines.append(f"{st.epoch}\t{st.train_loss:.6f}")
        return "\n".join(lines) + "\n"


class RmsProp:
    """theta <- theta - lr * g / (sqrt(s) + eps), s <- decay*s + (1-decay)*g^2."""

    def __init__(self, params: NetworkParams, lr: float, decay: float = 0.9, eps: float = 1e-8):
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.accum = {n: np.zeros_like(params.tensors[n]) for n in params.trainable_names()}

    def step(self, params: NetworkParams, grads: Mapping[str, np.ndarray]) -> None:
        for name, g in grads.items():
            s = self.accum[name]
            s *= self.decay
            s += (1.0 - self.decay) * g * g
            params.tensors[name] -= self.lr * g / (np.sqrt(s) + self.eps)


def _update_running_stats(params: NetworkParams, trace: BatchTrace) -> None:
    for tw in trace.towers:
        for cache in tw.caches:
            if "batch_mean" not in cache:
                continue
            prefix = cache["prefix"]
            rmean = params.tensors[f"{prefix}.bn_mean"]
            rvar = params.tensors[f"{prefix}.bn_var"]
            rmean *= BN_MOMENTUM
            rmean += (1.0 - BN_MOMENTUM) * cache["batch_mean"]
            rvar *= BN_MOMENTUM
            rvar += (1.0 - BN_MOMENTUM) * cache["batch_var"]


def _pair_arrays(pairs, embeddings) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ea = np.stack([embeddings.get(p.id_a).frames for p in pairs]).astype(np.float64)
    eb = np.stack([embeddings.get(p.id_b).frames for p in pairs]).astype(np.float64)
    targets = np.stack([p.target.rows for p in pairs])
    return ea, eb, targets


def _run_epochs(
    params: NetworkParams,
    cfg: NetworkConfig,
    tcfg: TrainConfig,
    train_pairs: Sequence,
    val_pairs: Sequence,
    embeddings,
    n_epochs: int,
    shuffle_rng: np.random.Generator,
    dropout_rng: np.random.Generator,
) -> list[EpochStats]:
    opt = RmsProp(params, tcfg.learning_rate, tcfg.rms_decay, tcfg.rms_eps)
    stats: list[EpochStats] = []
    order = np.arange(len(train_pairs))
    for epoch in range(1, n_epochs + 1):
        shuffle_rng.shuffle(order)
        total = 0.0
        for bi, start in enumerate(range(0, len(order), tcfg.batch_size)):
            batch = [train_pairs[i] for i in order[start : start + tcfg.batch_size]]
            ea, eb, targets = _pair_arrays(batch, embeddings)
            try:
                trace = forward_batch(params, cfg, ea, eb, training=True, rng=dropout_rng)
            except NetworkError as exc:
                # runaway parameters surface as non-finite activations
                raise NetworkError(
                    f"training diverged: {exc} at epoch {epoch}, batch {bi}"
                ) from None
            batch_loss = _loss_batch(trace.pooled, targets)
            if not np.isfinite(batch_loss):
                raise NetworkError(f"training diverged: non-finite loss at epoch {epoch}, batch {bi}")
            total += batch_loss
            grads = backward_batch(params, cfg, trace, targets)
            opt.step(params, grads)
            _update_running_stats(params, trace)
        val_loss = evaluate_loss(params, cfg, val_pairs, embeddings) if val_pairs else None
        stats.append(EpochStats(epoch, total / len(train_pairs), val_loss))
    return stats


def evaluate_loss(params: NetworkParams, cfg: NetworkConfig, pairs, embeddings, chunk: int = 256) -> float:
    """Mean per-pair loss in inference mode (no dropout, running stats)."""
    if not pairs:
        raise ValueError("no pairs to evaluate")
    total = 0.0
    for start in range(0, len(pairs), chunk):
        batch = pairs[start : start + chunk]
        ea, eb, targets = _pair_arrays(batch, embeddings)
        trace = forward_batch(params, cfg, ea, eb, training=False)
        total += _loss_batch(trace.pooled, targets)
    return total / len(pairs)


def train(
    pairs: Sequence,
    embeddings,
    cfg: NetworkConfig,
    tcfg: TrainConfig,
) -> tuple[NetworkParams, TrainReport]:
    """Two-phase protocol: pick the epoch count on a held-out split, retrain.

    Phase 1 holds out validation_fraction of the pairs (seeded split) and
    trains up to max_epochs, recording the epoch with minimum validation
    loss. Phase 2 reinitializes and trains on all pairs for exactly that
    many epochs.
    """
    if not pairs:
        raise ValueError("no training pairs")
    pairs = list(pairs)
    root = np.random.SeedSequence(tcfg.seed)
    sq_init1, sq_split, sq_shuf1, sq_drop1, sq_init2, sq_shuf2, sq_drop2 = root.spawn(7)

    input_dim = embeddings.get(pairs[0].id_a).frames.shape[1]
    n_val = int(round(len(pairs) * tcfg.validation_fraction))
    perm = np.random.default_rng(sq_split).permutation(len(pairs))
    val_pairs = [pairs[i] for i in perm[:n_val]]
    fit_pairs = [pairs[i] for i in perm[n_val:]]
    if not fit_pairs:
        raise ValueError("validation split leaves no training pairs")

    params1 = init_params(cfg, np.random.default_rng(sq_init1), input_dim)
    phase1 = _run_epochs(
        params1, cfg, tcfg, fit_pairs, val_pairs, embeddings, tcfg.max_epochs,
        np.random.default_rng(sq_shuf1), np.random.default_rng(sq_drop1),
    )
    if phase1 and any(st.val_loss is not None for st in phase1):
        best = min((st for st in phase1 if st.val_loss is not None), key=lambda st: (st.val_loss, st.epoch))
        best_epoch = best.epoch
    else:
        # no validation pairs (tiny sets) or max_epochs == 0
        best_epoch = len(phase1)

    params2 = init_params(cfg, np.random.default_rng(sq_init2), input_dim)
    phase2 = _run_epochs(
        params2, cfg, tcfg, pairs, [], embeddings, best_epoch,
        np.random.default_rng(sq_shuf2), np.random.default_rng(sq_drop2),
    )
    report = TrainReport(tcfg.seed, cfg, tcfg, phase1, best_epoch, phase2)
    return params2, report


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: NetworkParams, cfg: NetworkConfig, path) -> None:
    """Write magic, version, config JSON, then named float32 tensors."""
    blobs = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    cfg_bytes = json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
    blobs.append(struct.pack("<I", len(cfg_bytes)))
    blobs.append(cfg_bytes)
    names = sorted(params.tensors)
    blobs.append(struct.pack("<I", len(names)))
    for name in names:
        tensor = np.ascontiguousarray(params.tensors[name], dtype="<f4")
        name_b = name.encode("utf-8")
        blobs.append(struct.pack("<I", len(name_b)))
        blobs.append(name_b)
        blobs.append(struct.pack("<I", tensor.ndim))
        blobs.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        blobs.append(tensor.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(blobs))


def load_checkpoint(path) -> tuple[NetworkParams, NetworkConfig]:
    with open(path, "rb") as fh:
        raw = fh.read()
    view = memoryview(raw)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise NetworkError(f"truncated checkpoint {path}")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != CHECKPOINT_MAGIC:
        raise NetworkError(f"bad checkpoint magic in {path}")
    (version,) = struct.unpack("<I", take(4))
    if version != CHECKPOINT_VERSION:
        raise NetworkError(f"unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack("<I", take(4))
    cfg = NetworkConfig.from_dict(json.loads(bytes(take(cfg_len)).decode("utf-8")))
    (n_tensors,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape)
        tensors[name] = data.astype(np.float64)
    if pos != len(view):
        raise NetworkError(f"trailing bytes in checkpoint {path}")
    params = NetworkParams(tensors)
    params.validate()
    return params, cfg
