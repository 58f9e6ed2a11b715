"""Joint two-domain training: tape-recorded forward, exact reverse-mode
gradients, elementwise clipping, Adam, early stopping on validation MRR@5,
and a finite-difference gradient oracle.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import backward  # re-exported: gradients of a recorded loss
from .data import DOMAIN_A, DOMAIN_B, DOMAINS, HybridSequence
from .errors import ConfigError, DataError
from .evaluation import evaluate_ranks, leave_last_out, pooled_metrics
from .graph import CdsGraph
from .model import (
    GraphArrays,
    ModelConfig,
    ModelParams,
    build_graph_arrays,
    param_tensors,
    propagate_tensors,
)

__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainResult",
    "backward",
    "joint_loss",
    "clip_gradients",
    "adam_step",
    "xavier_init",
    "init_params",
    "build_examples",
    "batch_loss",
    "train",
    "finite_difference_check",
    "FiniteDifferenceReport",
]


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 128
    clip_low: float = -5.0
    clip_high: float = 5.0
    max_epochs: int = 20
    patience: int = 5
    domain_weight: float = 1.0     # weight on the domain-B loss term
    rng_seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.clip_low >= self.clip_high:
            raise ConfigError("clip range must satisfy low < high")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ConfigError("batch_size/max_epochs must be >= 1, patience >= 0")

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "batch_size": self.batch_size,
            "clip_low": self.clip_low,
            "clip_high": self.clip_high,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "domain_weight": self.domain_weight,
            "rng_seed": self.rng_seed,
        }


# ---------------------------------------------------------------------------
# Loss and optimizer primitives
# ---------------------------------------------------------------------------


def _cross_entropy(logits: np.ndarray, target: int) -> float:
    z = np.asarray(logits, dtype=np.float64)
    m = float(np.max(z))
    return m + float(np.log(np.sum(np.exp(z - m)))) - float(z[target])


def joint_loss(
    logits_a: np.ndarray | None,
    target_a: int | None,
    logits_b: np.ndarray | None,
    target_b: int | None,
    domain_weight: float = 1.0,
) -> float:
    """Sum of softmax cross-entropies over the present domain targets."""
    if target_a is None and target_b is None:
        raise DataError("no training signal")
    total = 0.0
    if target_a is not None:
        total += _cross_entropy(logits_a, target_a)
    if target_b is not None:
        total += domain_weight * _cross_entropy(logits_b, target_b)
    return total


def clip_gradients(
    grads: dict[str, np.ndarray], low: float = -5.0, high: float = 5.0
) -> dict[str, np.ndarray]:
    """Elementwise value clipping (range semantics, not norm clipping)."""
    return {name: np.clip(g, low, high) for name, g in grads.items()}


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        state = cls()
        for name, arr in params.as_dict().items():
            state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        return state


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState, lr: float):
    """Standard bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, g in grads.items():
        arr = getattr(params, name)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        arr -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def xavier_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform on [-b, b] with b = sqrt(6 / (rows + cols))."""
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def init_params(
    config: ModelConfig, n_accounts: int, n_items_a: int, n_items_b: int,
    rng: np.random.Generator,
) -> ModelParams:
    d, dp, h = config.embed_dim, config.proj_dim, config.latent_users
    return ModelParams(
        item_emb_a=xavier_init(n_items_a, d, rng),
        item_emb_b=xavier_init(n_items_b, d, rng),
        user_emb=xavier_init(n_accounts * h, d, rng).reshape(n_accounts, h, d),
        user_w_neighbor=xavier_init(dp, d, rng),
        user_w_interact=xavier_init(dp, d, rng),
        item_w_neighbor=xavier_init(dp, d, rng),
        item_w_interact=xavier_init(dp, d, rng),
        score_w_a=xavier_init(d, 2 * dp, rng),
        score_w_b=xavier_init(d, 2 * dp, rng),
    )


# ---------------------------------------------------------------------------
# Training examples and the batched tape forward
# ---------------------------------------------------------------------------


@dataclass
class TrainExample:
    """Per-sequence leave-last-out targets with domain-filtered histories."""

    account: int
    hist: dict
    target: dict

    @classmethod
    def from_sequence(cls, seq: HybridSequence) -> "TrainExample | None":
        hist, target = {}, {}
        for domain in DOMAINS:
            split = leave_last_out(seq, domain)
            if split is None:
                target[domain] = None
                hist[domain] = np.empty(0, dtype=np.int64)
                continue
            history, tgt = split
            idx = [e.index for e in history if e.domain == domain]
            if not idx:
                # No in-domain context to pool; skip this domain.
                target[domain] = None
                hist[domain] = np.empty(0, dtype=np.int64)
                continue
            target[domain] = tgt
            hist[domain] = np.asarray(idx, dtype=np.int64)
        if target[DOMAIN_A] is None and target[DOMAIN_B] is None:
            return None
        return cls(seq.account, hist, target)


def build_examples(sequences: Sequence[HybridSequence]) -> list[TrainExample]:
    examples = [TrainExample.from_sequence(s) for s in sequences]
    examples = [e for e in examples if e is not None]
    if not examples:
        raise DataError("no training signal")
    return examples


def batch_loss(
    tape: ad.Tape,
    arrays: GraphArrays,
    tensors: dict,
    config: ModelConfig,
    batch: Sequence[TrainExample],
    domain_weight: float = 1.0,
) -> ad.Tensor:
    """Mean per-sequence joint loss of a batch, recorded on the tape."""
    u, xa, xb, acc = propagate_tensors(tape, arrays, tensors, config, config.rounds)
    item_reps = {DOMAIN_A: xa, DOMAIN_B: xb}
    emb_name = {DOMAIN_A: "item_emb_a", DOMAIN_B: "item_emb_b"}
    score_name = {DOMAIN_A: "score_w_a", DOMAIN_B: "score_w_b"}
    total = None
    for domain in DOMAINS:
        exs = [e for e in batch if e.target[domain] is not None]
        if not exs:
            continue
        hist_cat = np.concatenate([e.hist[domain] for e in exs])
        seg = np.repeat(np.arange(len(exs)), [len(e.hist[domain]) for e in exs])
        hv = ad.gather_rows(item_reps[domain], hist_cat)
        if config.seq_pooling == "mean":
            pooled = ad.segment_mean_rows(hv, seg, len(exs))
        else:
            pooled = ad.segment_max_rows(hv, seg, len(exs))
        accounts = np.asarray([e.account for e in exs], dtype=np.int64)
        seq_emb = ad.concat_cols(pooled, ad.gather_rows(acc, accounts))
        z = ad.linear_t(seq_emb, tensors[score_name[domain]])
        logits = ad.linear_t(z, tensors[emb_name[domain]])
        targets = np.asarray([e.target[domain] for e in exs], dtype=np.int64)
        part = ad.sum_vec(ad.cross_entropy_rows(logits, targets))
        if domain == DOMAIN_B and domain_weight != 1.0:
            part = ad.scale_const(part, domain_weight)
        total = part if total is None else ad.add(total, part)
    if total is None:
        raise DataError("no training signal")
    return ad.scale_const(total, 1.0 / len(batch))


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    params: ModelParams
    log: list[dict]
    best_epoch: int
    best_val_mrr5: float


def _grads_for_step(tape, loss_t, tensors, params: ModelParams) -> dict[str, np.ndarray]:
    grads = backward(loss_t, list(tensors.values()))
    grads["user_emb"] = grads["user_emb"].reshape(params.user_emb.shape)
    return grads


def train(
    train_seqs: Sequence[HybridSequence],
    valid_seqs: Sequence[HybridSequence],
    graph: CdsGraph,
    config: ModelConfig,
    train_config: TrainConfig,
) -> TrainResult:
    """Epoch loop: shuffled batches, forward/backward/clip/Adam, per-epoch
    validation MRR@5 with early stopping, best-validation parameters kept."""
    if not train_seqs or not valid_seqs:
        raise DataError("train and validation splits must be nonempty")
    rng = np.random.default_rng(train_config.rng_seed)
    params = init_params(
        config, graph.n_accounts, graph.n_items[DOMAIN_A], graph.n_items[DOMAIN_B], rng
    )
    arrays = build_graph_arrays(graph, config.latent_users)
    examples = build_examples(train_seqs)
    state = AdamState.for_params(params)

    best_params = params.copy()
    best_mrr = -np.inf
    best_epoch = 0
    bad_epochs = 0
    log: list[dict] = []

    for epoch in range(1, train_config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(examples))
        loss_sum = 0.0
        for start in range(0, len(examples), train_config.batch_size):
            batch = [examples[i] for i in order[start : start + train_config.batch_size]]
            tape = ad.Tape()
            tensors = param_tensors(tape, params)
            loss_t = batch_loss(tape, arrays, tensors, config, batch, train_config.domain_weight)
            loss = float(loss_t.value)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch starting at index {start}"
                )
            grads = _grads_for_step(tape, loss_t, tensors, params)
            tape.release()
            grads = clip_gradients(grads, train_config.clip_low, train_config.clip_high)
            adam_step(params, grads, state, train_config.lr)
            loss_sum += loss * len(batch)

        ranks = evaluate_ranks(params, config, graph, valid_seqs, arrays=arrays)
        val_mrr5, val_recall5 = pooled_metrics(ranks, 5)
        log.append(
            {
                "epoch": epoch,
                "train_loss": loss_sum / len(examples),
                "val_mrr5": val_mrr5,
                "val_recall5": val_recall5,
                "seconds": time.perf_counter() - t0,
            }
        )
        if val_mrr5 > best_mrr:
            best_mrr = val_mrr5
            best_epoch = epoch
            best_params = params.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= train_config.patience:
                break
    return TrainResult(best_params, log, best_epoch, best_mrr)


# ---------------------------------------------------------------------------
# Finite-difference gradient oracle
# ---------------------------------------------------------------------------


@dataclass
class FiniteDifferenceReport:
    max_rel_error: float
    per_array: dict[str, float]
    n_checked: int
    n_skipped: int

    def passed(self, threshold: float = 1e-4) -> bool:
        return self.max_rel_error < threshold


def finite_difference_check(
    params: ModelParams,
    config: ModelConfig,
    arrays: GraphArrays,
    batch: Sequence[TrainExample],
    eps: float = 1e-5,
    coords_per_array: int = 20,
    rng: np.random.Generator | None = None,
    domain_weight: float = 1.0,
    corrupt: str | None = None,
) -> FiniteDifferenceReport:
    """Central differences vs tape gradients on sampled coordinates.

    Coordinates whose evaluation passes within 10*eps of a LeakyReLU kink are
    excluded. Relative error uses max(|analytic|, |numeric|) as denominator,
    absolute error where |analytic| < 1e-8. ``corrupt`` doubles one named
    array's analytic gradient to prove the check detects faults.
    """
    rng = rng or np.random.default_rng(0)

    def loss_and_kink(p: ModelParams) -> tuple[float, float]:
        tape = ad.Tape()
        tensors = param_tensors(tape, p)
        loss_t = batch_loss(tape, arrays, tensors, config, batch, domain_weight)
        out = float(loss_t.value), tape.min_abs_preact
        tape.release()
        return out

    tape = ad.Tape()
    tensors = param_tensors(tape, params)
    loss_t = batch_loss(tape, arrays, tensors, config, batch, domain_weight)
    grads = _grads_for_step(tape, loss_t, tensors, params)
    tape.release()
    if corrupt is not None:
        if corrupt not in grads:
            raise ConfigError(f"unknown parameter array {corrupt!r}")
        grads[corrupt] = grads[corrupt] * 2.0

    _, center_kink = loss_and_kink(params)
    per_array: dict[str, float] = {}
    n_checked = 0
    n_skipped = 0
    work = params.copy()
    for name, arr in work.as_dict().items():
        flat = arr.reshape(-1)
        n_coords = min(coords_per_array, flat.size)
        coords = rng.choice(flat.size, size=n_coords, replace=False)
        worst = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            lp, kink_p = loss_and_kink(work)
            flat[c] = orig - eps
            lm, kink_m = loss_and_kink(work)
            flat[c] = orig
            if min(center_kink, kink_p, kink_m) < 10.0 * eps:
                n_skipped += 1
                continue
            numeric = (lp - lm) / (2.0 * eps)
            analytic = float(grads[name].reshape(-1)[c])
            if abs(analytic) < 1e-8:
                err = abs(analytic - numeric)
            else:
                err = abs(analytic - numeric) / max(abs(analytic), abs(numeric))
            worst = max(worst, err)
            n_checked += 1
        per_array[name] = worst
    return FiniteDifferenceReport(
        max_rel_error=max(per_array.values()),
        per_array=per_array,
        n_checked=n_checked,
        n_skipped=n_skipped,
    )
