"""Pairwise ranking training loop with early stopping and checkpointing."""

from __future__ import annotations

import copy
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import DatasetSplit, Item, build_compat_pairs, sample_negative_outfit
from .errors import NumericError
from .features import EmbeddingStore, ModalityConfig
from .graphs import build_cooccurrence_graph
from .models import CompatModel, ModelConfig, build_param_spec, sigmoid
from .nn import (
    AdamState,
    Params,
    RMSPropState,
    adam_step,
    init_params,
    is_bias,
    rmsprop_step,
    save_checkpoint,
)


@dataclass
class TrainConfig:
    model: str = "ngnn"
    modality: str = "multimodal"
    learning_rate: float = 0.001
    batch_size: int = 16
    beta: float = 0.2
    lambda_l2: float = 0.001
    hidden_d: int = 12
    steps_t: int = 3
    optimizer: str = "adam"
    max_epochs: int = 50
    patience: int = 3
    min_delta: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.hidden_d < 1:
            raise ValueError("invalid training hyperparameters")
        if self.optimizer not in ("adam", "rmsprop"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_auc: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)

    def val_losses(self) -> list[float]:
        return [e.val_loss for e in self.epochs]

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,val_auc,seconds"]
        for e in self.epochs:
            lines.append(
                f"{e.epoch},{e.train_loss!r},{e.val_loss!r},{e.val_auc!r},{e.seconds!r}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class TrainResult:
    params: Params
    history: TrainHistory
    best_val_loss: float
    model_config: ModelConfig


def l2_penalty(params: Params, lambda_l2: float) -> float:
    """L2 over weight tensors only; biases are exempt."""
    if lambda_l2 == 0:
        return 0.0
    total = 0.0
    for name, value in params.items():
        if not is_bias(name):
            total += float(np.sum(value * value))
    return lambda_l2 * total


def bpr_loss(s_pos: float, s_neg: float, lambda_l2: float = 0.0,
             params: Params | None = None) -> float:
    """-ln sigmoid(s_pos - s_neg) plus the optional L2 penalty."""
    loss = float(np.logaddexp(0.0, -(s_pos - s_neg)))
    if lambda_l2 and params is not None:
        loss += l2_penalty(params, lambda_l2)
    return loss


def early_stop_check(val_losses: list[float], patience: int, min_delta: float) -> bool:
    """True iff the last `patience` epochs each improved the prior best by
    less than min_delta (boundary counts as stagnant, with a tiny float
    tolerance)."""
    if len(val_losses) < patience:
        return False
    stagnant = 0
    best = np.inf
    flags: list[bool] = []
    for loss in val_losses:
        improvement = best - loss
        flags.append(improvement < min_delta + 1e-12)
        best = min(best, loss)
    for flag in flags[-patience:]:
        if not flag:
            return False
        stagnant += 1
    return stagnant >= patience


def _mean_bpr(model: CompatModel, params: Params, pairs, item_table, stores) -> float:
    if not pairs:
        return float("nan")
    total = 0.0
    for pair in pairs:
        s_pos = model.score(pair.positive, params, item_table, stores)
        s_neg = model.score(pair.negative, params, item_table, stores)
        total += bpr_loss(s_pos, s_neg)
    return total / len(pairs)


def build_model(config: TrainConfig, split: DatasetSplit,
                item_table: dict[str, Item],
                stores: dict[str, EmbeddingStore]) -> tuple[CompatModel, ModelConfig]:
    """Assemble the model over the split's retained categories."""
    if split.category_set:
        categories = tuple(sorted(split.category_set))
    else:
        categories = tuple(sorted({
            item_table[i].category_id for o in split.all_outfits() for i in o.items
        }))
    modality = ModalityConfig(config.modality, config.beta)
    channel_dims = {ch: stores[ch].dim for ch, _ in modality.channels()}
    model_config = ModelConfig(
        kind=config.model,
        modality=modality,
        categories=categories,
        channel_dims=channel_dims,
        hidden_d=config.hidden_d,
        steps=config.steps_t,
    )
    graph = None
    if config.model == "ngnn":
        graph = build_cooccurrence_graph(split.train, item_table)
    return CompatModel(model_config, graph), model_config


def train(config: TrainConfig, split: DatasetSplit, item_table: dict[str, Item],
          stores: dict[str, EmbeddingStore], run_dir: str | Path | None = None,
          log=None) -> TrainResult:
    """Full training loop: fresh negatives per epoch, batched BPR updates,
    early stopping on validation loss, best-checkpoint selection."""
    from .evaluation import compat_auc  # local import avoids a cycle

    model, model_config = build_model(config, split, item_table, stores)
    params = init_params(build_param_spec(model_config), config.seed)
    opt_state = (AdamState(lr=config.learning_rate) if config.optimizer == "adam"
                 else RMSPropState(lr=config.learning_rate))
    step_fn = adam_step if config.optimizer == "adam" else rmsprop_step

    corpus_ids = sorted(item_table)
    val_pairs = build_compat_pairs(
        split.validation, corpus_ids, seed=_derive_seed(config.seed, "validation")
    ) if split.validation else []

    deterministic_clock = "SOURCE_DATE_EPOCH" in os.environ
    history = TrainHistory()
    best_val = np.inf
    best_params = copy.deepcopy(params)

    for epoch in range(1, config.max_epochs + 1):
        started = time.monotonic()
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(split.train))
        epoch_loss = 0.0
        n_batches = 0
        for batch_start in range(0, len(order), config.batch_size):
            batch_idx = order[batch_start : batch_start + config.batch_size]
            pairs = [
                sample_negative_outfit(split.train[i], corpus_ids, rng)
                for i in batch_idx
            ]
            grads: Params = {}
            batch_loss = 0.0
            for pair in pairs:
                s_pos, cache_pos = model.score_with_cache(
                    pair.positive, params, item_table, stores)
                s_neg, cache_neg = model.score_with_cache(
                    pair.negative, params, item_table, stores)
                delta = s_pos - s_neg
                batch_loss += bpr_loss(s_pos, s_neg)
                slope = sigmoid(-delta) / len(pairs)
                for upstream, cache in ((-slope, cache_pos), (slope, cache_neg)):
                    for name, g in model.backward(cache, params, upstream).items():
                        if name in grads:
                            grads[name] = grads[name] + g
                        else:
                            grads[name] = g
            batch_loss = batch_loss / len(pairs) + l2_penalty(params, config.lambda_l2)
            if not np.isfinite(batch_loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}"
                )
            full_grads = {}
            for name, value in params.items():
                g = grads.get(name)
                g = np.zeros_like(value) if g is None else g
                if config.lambda_l2 and not is_bias(name):
                    g = g + 2.0 * config.lambda_l2 * value
                full_grads[name] = g
            params, opt_state = step_fn(params, full_grads, opt_state)
            epoch_loss += batch_loss
            n_batches += 1

        train_loss = epoch_loss / max(n_batches, 1)
        if val_pairs:
            val_loss = _mean_bpr(model, params, val_pairs, item_table, stores)
            scorer = lambda o: model.score(o, params, item_table, stores)
            val_auc = compat_auc(scorer, val_pairs)
        else:
            val_loss = train_loss
            val_auc = float("nan")
        seconds = 0.0 if deterministic_clock else time.monotonic() - started
        history.epochs.append(EpochStats(epoch, train_loss, val_loss, val_auc, seconds))
        if log is not None:
            log(f"epoch {epoch}: train_loss={train_loss:.6f} "
                f"val_loss={val_loss:.6f} val_auc={val_auc:.4f}")

        if val_loss < best_val:
            best_val = val_loss
            best_params = copy.deepcopy(params)
        if run_dir is not None:
            _save(run_dir, "last.ckpt", params, config, model_config)
            _save(run_dir, "best.ckpt", best_params, config, model_config)
            Path(run_dir, "history.csv").write_text(history.to_csv())
        if early_stop_check(history.val_losses(), config.patience, config.min_delta):
            break

    return TrainResult(best_params, history, float(best_val), model_config)


def _derive_seed(seed: int, label: str) -> int:
    return int(np.random.SeedSequence(
        [seed, sum(ord(c) for c in label)]).generate_state(1)[0])


def _save(run_dir, name: str, params: Params, config: TrainConfig,
          model_config: ModelConfig) -> None:
    path = Path(run_dir)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "model": config.model,
        "modality": config.modality,
        "beta": repr(config.beta),
        "hidden_d": str(config.hidden_d),
        "steps_t": str(config.steps_t),
        "categories": ",".join(str(c) for c in model_config.categories),
        "seed": str(config.seed),
    }
    save_checkpoint(path / name, params, meta=meta)
