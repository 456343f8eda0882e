"""Joint training over many stance datasets.

Every batch holds examples of exactly one dataset, with the dataset picked
uniformly at random among those that still have examples left in the
current epoch.  The loss is a fixed blend of the negative log-likelihood
under the combined expert distribution, the NLL under the batch dataset's
own domain expert, and the domain-adversarial term behind the gradient
reversal::

    total = lambda * combined_nll + (1 - lambda) * expert_nll + gamma * adversary

After each epoch the model is scored on every training dataset's dev split
and the checkpoint with the best average macro-F1 wins (earliest epoch on
ties).
"""

from __future__ import annotations

import copy
import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .corpus import Corpus, StanceExample
from .errors import StanceError, TrainingDivergedError
from .evaluation import macro_f1
from .labelspace import LabelSpace, build_label_space
from .model import EncoderBase, HashEncoder, PretrainedEncoder, StanceMoLE

logger = logging.getLogger(__name__)

Batch = tuple[str, list[StanceExample]]

DEFAULT_SEED = 13


@dataclass
class TrainConfig:
    """Flat training configuration; serialises 1:1 to the config JSON."""

    encoder_id: str = "roberta-base"
    max_length: int = 100
    epochs: int = 5
    batch_size: int = 64
    learning_rate: float = 1e-5
    warmup_fraction: float = 0.06
    weight_decay: float = 1e-8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    lambda_weight: float = 0.5
    gamma: float = 0.01
    expert_init_std: float = 0.02
    num_heads: int = 4
    hidden_size: int = 32  # hash encoder only
    encoder_layers: int = 2  # hash encoder only
    seed: int = DEFAULT_SEED
    held_out: str | None = None
    datasets: list[str] | None = None
    group_table: str = "repaired"
    meta_groups: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise StanceError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def apply_overrides(self, overrides: Sequence[str]) -> "TrainConfig":
        """Apply ``key=value`` strings on top of this config."""
        data = self.to_dict()
        for item in overrides:
            if "=" not in item:
                raise StanceError(f"override {item!r} is not of the form key=value")
            key, raw = item.split("=", 1)
            if key not in data:
                raise StanceError(f"unknown config key {key!r}")
            data[key] = _coerce(key, raw, data[key])
        return TrainConfig.from_dict(data)


def _coerce(key: str, raw: str, current):
    if raw.lower() in ("none", "null"):
        return None
    if key == "datasets":
        return [part for part in raw.split(",") if part]
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes")
    try:
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError:
        raise StanceError(f"override {key}={raw!r} is not a {type(current).__name__}") from None
    return raw


# =========================================================================
# Loss composition
# =========================================================================


@dataclass
class LossBreakdown:
    """The three loss terms and their weighted total."""

    combined_nll: float | torch.Tensor
    expert_nll: float | torch.Tensor
    adversary_loss: float | torch.Tensor
    lambda_weight: float
    gamma: float
    total: float | torch.Tensor

    @classmethod
    def compose(cls, combined_nll, expert_nll, adversary_loss, lambda_weight, gamma):
        if isinstance(combined_nll, torch.Tensor):
            total = (
                lambda_weight * combined_nll
                + (1.0 - lambda_weight) * expert_nll
                + gamma * adversary_loss
            )
        else:
            # fsum keeps the three weighted terms correctly rounded.
            total = math.fsum(
                [lambda_weight * combined_nll, (1.0 - lambda_weight) * expert_nll, gamma * adversary_loss]
            )
        return cls(combined_nll, expert_nll, adversary_loss, lambda_weight, gamma, total)

    def as_floats(self) -> dict[str, float]:
        def value(term) -> float:
            return float(term.detach()) if isinstance(term, torch.Tensor) else float(term)

        return {
            "combined_nll": value(self.combined_nll),
            "expert_nll": value(self.expert_nll),
            "adversary_loss": value(self.adversary_loss),
            "total": value(self.total),
        }


# =========================================================================
# Batching
# =========================================================================


def make_epoch_batches(
    corpus: Corpus,
    batch_size: int,
    seed: int,
    datasets: Sequence[str] | None = None,
    split: str = "train",
) -> list[Batch]:
    """One epoch of single-dataset batches in a deterministic shuffled order.

    Every example of the split appears exactly once.  Each step picks the
    next dataset uniformly at random among those with examples remaining,
    then takes its next ``batch_size`` examples (fewer for a final
    partial batch).
    """
    if batch_size < 1:
        raise StanceError("batch size must be positive")
    rng = random.Random(seed)
    names = list(datasets) if datasets is not None else list(corpus.datasets)
    pools: dict[str, list[StanceExample]] = {}
    for name in names:
        examples = list(corpus.examples(name, split))
        rng.shuffle(examples)
        if examples:
            pools[name] = examples
    cursors = {name: 0 for name in pools}
    remaining = [name for name in names if name in pools]
    batches: list[Batch] = []
    while remaining:
        name = remaining[rng.randrange(len(remaining))]
        start = cursors[name]
        batch = pools[name][start : start + batch_size]
        cursors[name] = start + len(batch)
        batches.append((name, batch))
        if cursors[name] >= len(pools[name]):
            remaining.remove(name)
    return batches


# =========================================================================
# Loss computation
# =========================================================================


def compute_losses(
    batch: Batch, model: StanceMoLE, space: LabelSpace, config: TrainConfig
) -> LossBreakdown:
    """Forward one single-dataset batch and compose the training loss.

    The adversarial term is an ordinary cross-entropy over the dataset
    meta-classes computed behind the gradient reversal, so one backward
    pass trains the classifier head while pushing the shared encoder
    toward domain confusion.  With a single training dataset the adversary
    is disabled (weight forced to zero).
    """
    dataset, examples = batch
    if not examples:
        raise StanceError("cannot compute losses for an empty batch")
    mask = space.mask_for(dataset)
    gold = []
    for ex in examples:
        label = space.label_of(dataset, ex.label)
        if not mask[label.global_index]:
            raise StanceError(f"gold label {label.qualified()} of record {ex.id!r} is outside the mask")
        gold.append(label.global_index)
    input_ids, attention_mask = model.encode_batch([(ex.context, ex.target) for ex in examples])
    out = model.forward(input_ids, attention_mask, mask)
    gold_t = torch.tensor(gold, dtype=torch.long)
    rows = torch.arange(len(examples))

    combined_nll = -torch.log(out.combined_probs[rows, gold_t].clamp_min(1e-12)).mean()
    own = model.domain_index[dataset]
    own_position = out.expert_ids.index(own)
    expert_nll = -torch.log(out.expert_probs[rows, own_position, gold_t].clamp_min(1e-12)).mean()

    effective_gamma = config.gamma if len(model.adversary_index) > 1 else 0.0
    if effective_gamma != 0.0:
        domain_target = torch.full((len(examples),), model.adversary_index[dataset], dtype=torch.long)
        adversary_loss = nn.functional.cross_entropy(out.domain_logits, domain_target)
    else:
        adversary_loss = torch.zeros((), dtype=out.combined_probs.dtype)
    return LossBreakdown.compose(
        combined_nll, expert_nll, adversary_loss, config.lambda_weight, effective_gamma
    )


# =========================================================================
# Training loop
# =========================================================================


@dataclass
class Checkpoint:
    epoch: int
    state_dict: dict
    dev_scores: dict[str, float]
    average_dev_score: float
    space_version: str
    datasets: tuple[str, ...]
    config: TrainConfig


@dataclass
class TrainResult:
    best: Checkpoint
    checkpoints: list[Checkpoint]
    history: list[dict]
    space: LabelSpace
    model: StanceMoLE


def select_checkpoint(checkpoints: Sequence[Checkpoint]) -> Checkpoint:
    """The checkpoint with the highest average dev score, earliest on ties."""
    if not checkpoints:
        raise StanceError("no checkpoints to select from")
    best = checkpoints[0]
    for candidate in checkpoints[1:]:
        if candidate.average_dev_score > best.average_dev_score:
            best = candidate
    return best


def build_encoder(config: TrainConfig) -> EncoderBase:
    if config.encoder_id == "hash":
        return HashEncoder(
            hidden_size=config.hidden_size,
            num_layers=config.encoder_layers,
            num_heads=config.num_heads,
            max_length=config.max_length,
        )
    return PretrainedEncoder(config.encoder_id, max_length=config.max_length)


def evaluate_split(
    model: StanceMoLE,
    corpus: Corpus,
    space: LabelSpace,
    split: str = "dev",
    batch_size: int = 64,
) -> dict[str, float]:
    """Macro-F1 of combined-distribution argmax per dataset of ``corpus``."""
    from .ood import predict_in_domain  # local import to avoid a cycle

    scores: dict[str, float] = {}
    for name in corpus.datasets:
        examples = corpus.examples(name, split)
        if not examples:
            continue
        predicted = predict_in_domain(
            examples, model, space, datasets=[name], batch_size=batch_size
        )
        inventory = [label.name for label in space.inventory(name)]
        scores[name] = macro_f1([p.name for p in predicted], [ex.label for ex in examples], inventory)
    return scores


def train(
    corpus: Corpus,
    config: TrainConfig,
    checkpoint_dir: str | Path | None = None,
) -> TrainResult:
    """Train on every dataset of ``corpus`` except ``config.held_out``.

    Returns the per-epoch checkpoints, the selected best one, and the
    training history.  When ``checkpoint_dir`` is given, every epoch is
    saved under ``epoch-<n>/`` and a ``best`` marker names the winner.
    """
    random.seed(config.seed)
    np.random.seed(config.seed % (2**32))
    torch.manual_seed(config.seed)

    names = list(config.datasets) if config.datasets else list(corpus.datasets)
    if config.held_out is not None:
        if config.held_out not in names:
            raise StanceError(f"held-out dataset {config.held_out!r} is not in the corpus")
        names = [n for n in names if n != config.held_out]
    if not names:
        raise StanceError("no datasets left to train on")
    train_corpus = corpus.subset(names)

    space = build_label_space(
        [train_corpus.descriptor(n) for n in names], group_table=config.group_table
    )
    encoder = build_encoder(config)
    model = StanceMoLE(
        encoder, space, num_heads=config.num_heads, expert_init_std=config.expert_init_std
    )
    optimizer = torch.optim.AdamW(
        model.parameters(),
        lr=config.learning_rate,
        betas=(config.adam_beta1, config.adam_beta2),
        eps=config.adam_epsilon,
        weight_decay=config.weight_decay,
    )
    batches_per_epoch = len(make_epoch_batches(train_corpus, config.batch_size, seed=0))
    total_steps = max(1, batches_per_epoch * config.epochs)
    warmup_steps = int(round(config.warmup_fraction * total_steps))

    def lr_factor(step: int) -> float:
        if warmup_steps > 0 and step < warmup_steps:
            return (step + 1) / warmup_steps
        if total_steps == warmup_steps:
            return 1.0
        return max(0.0, (total_steps - step) / (total_steps - warmup_steps))

    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lr_factor)

    checkpoints: list[Checkpoint] = []
    history: list[dict] = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        model.train()
        batches = make_epoch_batches(
            train_corpus, config.batch_size, seed=config.seed * 100_003 + epoch
        )
        epoch_losses = []
        for dataset, examples in batches:
            optimizer.zero_grad()
            losses = compute_losses((dataset, examples), model, space, config)
            if not torch.isfinite(losses.total):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} step {step}: {losses.as_floats()}"
                )
            losses.total.backward()
            optimizer.step()
            scheduler.step()
            step += 1
            epoch_losses.append(losses.as_floats()["total"])
        model.eval()
        dev_scores = evaluate_split(model, train_corpus, space, "dev", config.batch_size)
        average = float(np.mean(list(dev_scores.values()))) if dev_scores else 0.0
        checkpoint = Checkpoint(
            epoch=epoch,
            state_dict=copy.deepcopy(model.state_dict()),
            dev_scores=dev_scores,
            average_dev_score=average,
            space_version=space.version,
            datasets=tuple(names),
            config=config,
        )
        checkpoints.append(checkpoint)
        record = {
            "epoch": epoch,
            "train_loss": float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
            "dev_macro_f1": dev_scores,
            "dev_macro_f1_avg": average,
        }
        history.append(record)
        logger.info(
            "epoch %d: train loss %.4f, dev macro-F1 %.2f", epoch, record["train_loss"], average
        )
        if checkpoint_dir is not None:
            save_checkpoint(checkpoint, Path(checkpoint_dir) / f"epoch-{epoch}")

    best = select_checkpoint(checkpoints)
    if checkpoint_dir is not None:
        marker = Path(checkpoint_dir) / "best"
        marker.write_text(f"epoch-{best.epoch}\n", encoding="utf-8")
    model.load_state_dict(best.state_dict)
    model.eval()
    return TrainResult(best=best, checkpoints=checkpoints, history=history, space=space, model=model)


# =========================================================================
# Checkpoint persistence
# =========================================================================


def save_checkpoint(checkpoint: Checkpoint, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "state_dict": checkpoint.state_dict,
            "meta": {
                "epoch": checkpoint.epoch,
                "space_version": checkpoint.space_version,
                "datasets": list(checkpoint.datasets),
                "config": checkpoint.config.to_dict(),
            },
        },
        directory / "model.pt",
    )
    metrics = {
        "epoch": checkpoint.epoch,
        "dev_scores": checkpoint.dev_scores,
        "average_dev_score": checkpoint.average_dev_score,
    }
    with open(directory / "metrics.json", "w", encoding="utf-8") as f:
        json.dump(metrics, f, indent=2, sort_keys=True)
        f.write("\n")


def load_checkpoint(directory: str | Path, corpus: Corpus) -> tuple[StanceMoLE, LabelSpace, TrainConfig]:
    """Rebuild a trained model from an ``epoch-<n>/`` directory.

    The corpus must contain descriptors for the datasets the model was
    trained on; label ordering is verified via the stored space version.
    """
    directory = Path(directory)
    weights_file = directory / "model.pt"
    if not weights_file.exists():
        raise StanceError(f"no checkpoint at {directory} (missing {weights_file.name})")
    payload = torch.load(weights_file, map_location="cpu", weights_only=False)
    meta = payload["meta"]
    config = TrainConfig.from_dict(meta["config"])
    names = meta["datasets"]
    space = build_label_space(
        [corpus.descriptor(n) for n in names], group_table=config.group_table
    )
    if space.version != meta["space_version"]:
        raise StanceError(
            f"label space mismatch: checkpoint was trained with {meta['space_version']}, "
            f"rebuilding gave {space.version}"
        )
    encoder = build_encoder(config)
    model = StanceMoLE(
        encoder, space, num_heads=config.num_heads, expert_init_std=config.expert_init_std
    )
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, space, config
