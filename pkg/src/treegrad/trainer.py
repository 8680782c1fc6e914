"""Minibatch AdaGrad training with dev-set early stopping.

Gradients are summed over each minibatch and applied in one AdaGrad step;
a short final batch still gets its own step. Embedding updates are sparse:
only rows whose tokens appeared in the batch move, and only those rows'
accumulator entries grow.

Training stops when the dev accuracy has not strictly improved for
`patience` consecutive epochs (or at `max_epochs`), and the returned model
is the snapshot from the best epoch, earliest epoch winning ties. With the
default patience of 5 a run always sees at least 6 epochs.

Epoch shuffles draw from a stream derived from the run seed and the epoch
number, so a run is reproducible end to end. Wall-clock seconds are kept in
the epoch log but written to disk as 0.0 unless timing output is requested;
that keeps logs byte-identical across reruns.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .model import (
    ForwardTrace,
    Gradients,
    Model,
    TreeSchedule,
    backward,
    clone_model,
    compile_tree,
    forward,
    predict,
)
from .numerics import make_rng
from .treebank import LabeledExample

ADAGRAD_EPS = 1e-8

# Stream tag under the run seed for per-epoch shuffles (model init uses 1-3).
_SHUFFLE_STREAM = 4

# An observer of completed backward passes: sink(epoch, tree_id, trace).
# tree_id is the example's index in the unshuffled training list.
RatioSink = Callable[[int, int, ForwardTrace], None]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 20
    patience: int = 5
    max_epochs: int = 100
    n_dim: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("batch_size", "patience", "max_epochs", "n_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")


def default_config(kind: str, **overrides) -> TrainConfig:
    """Per-kind defaults: the gated model trains with batch size 5."""
    base = TrainConfig(batch_size=20 if kind == "rnn" else 5)
    return replace(base, **overrides)


@dataclass
class AdaGradState:
    eps: float
    embed_accum: np.ndarray  # (EMBED_ROWS, n)
    dense_accum: dict[str, np.ndarray]

    @staticmethod
    def zeros(model: Model, eps: float = ADAGRAD_EPS) -> "AdaGradState":
        return AdaGradState(
            eps=eps,
            embed_accum=np.zeros_like(model.embeddings),
            dense_accum={name: np.zeros_like(arr) for name, arr in model.dense_blocks()},
        )


def adagrad_step(model: Model, grads: Gradients, state: AdaGradState,
                 learning_rate: float) -> None:
    """theta -= lr * g / (sqrt(accumulated g^2) + eps), in place."""
    for (name, param), (gname, g) in zip(model.dense_blocks(), grads.dense_blocks()):
        if name != gname:
            raise ValueError(f"gradient block {gname!r} does not match model block {name!r}")
        acc = state.dense_accum[name]
        acc += g * g
        param -= learning_rate * g / (np.sqrt(acc) + state.eps)
    if grads.embed_rows:
        tokens = sorted(grads.embed_rows)
        rows = np.asarray(tokens, dtype=np.int64)
        G = np.stack([grads.embed_rows[t] for t in tokens])
        state.embed_accum[rows] += G * G
        model.embeddings[rows] -= learning_rate * G / (
            np.sqrt(state.embed_accum[rows]) + state.eps
        )


def compile_examples(examples: Sequence[LabeledExample]) -> list[TreeSchedule]:
    return [compile_tree(ex.tree) for ex in examples]


def train_epoch(
    model: Model,
    examples: Sequence[LabeledExample],
    schedules: Sequence[TreeSchedule],
    config: TrainConfig,
    opt_state: AdaGradState,
    epoch: int,
    sink: Optional[RatioSink] = None,
) -> float:
    """One shuffled pass; returns the mean per-example loss."""
    if len(examples) != len(schedules):
        raise ValueError("examples and schedules differ in length")
    order = make_rng(config.seed, _SHUFFLE_STREAM, epoch).permutation(len(examples))
    total_loss = 0.0
    for start in range(0, len(order), config.batch_size):
        batch = order[start : start + config.batch_size]
        grads = Gradients.zeros(model)
        for idx in batch:
            ex = examples[idx]
            trace = forward(schedules[idx], model, label=ex.label)
            total_loss += trace.loss
            backward(trace, model, grads)
            if sink is not None:
                sink(epoch, int(idx), trace)
        adagrad_step(model, grads, opt_state, config.learning_rate)
    return total_loss / len(examples)


def evaluate(
    model: Model,
    examples: Sequence[LabeledExample],
    schedules: Optional[Sequence[TreeSchedule]] = None,
) -> float:
    """Fraction of examples whose argmax class matches the label."""
    if len(examples) == 0:
        raise ValueError("cannot evaluate on zero examples")
    if schedules is None:
        schedules = compile_examples(examples)
    hits = 0
    for ex, sched in zip(examples, schedules):
        if predict(forward(sched, model)) == ex.label:
            hits += 1
    return hits / len(examples)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_accuracy: float
    seconds: float


@dataclass
class TrainResult:
    model: Model  # snapshot from the best epoch
    best_epoch: int
    best_dev_accuracy: float
    log: list[EpochRecord] = field(default_factory=list)


def train(
    model: Model,
    train_examples: Sequence[LabeledExample],
    dev_examples: Sequence[LabeledExample],
    config: TrainConfig,
    sink: Optional[RatioSink] = None,
    epoch_hook: Optional[Callable[[EpochRecord, Model], None]] = None,
) -> TrainResult:
    """Fit in place; returns the best-dev-epoch snapshot and the epoch log.

    ``epoch_hook`` runs after each epoch's record is appended; it must not
    mutate the model if reproducibility against hook-free runs matters.
    """
    if len(train_examples) == 0:
        raise ValueError("cannot train on zero examples")
    if len(dev_examples) == 0:
        raise ValueError("cannot early-stop without dev examples")
    train_schedules = compile_examples(train_examples)
    dev_schedules = compile_examples(dev_examples)
    opt_state = AdaGradState.zeros(model)
    best_model = clone_model(model)
    best_epoch = 0
    best_acc = -np.inf
    log: list[EpochRecord] = []
    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        loss = train_epoch(model, train_examples, train_schedules, config,
                           opt_state, epoch, sink=sink)
        acc = evaluate(model, dev_examples, dev_schedules)
        log.append(EpochRecord(epoch=epoch, train_loss=loss, dev_accuracy=acc,
                               seconds=time.perf_counter() - started))
        if epoch_hook is not None:
            epoch_hook(log[-1], model)
        if acc > best_acc:
            best_acc = acc
            best_epoch = epoch
            best_model = clone_model(model)
        if epoch - best_epoch >= config.patience:
            break
    return TrainResult(model=best_model, best_epoch=best_epoch,
                       best_dev_accuracy=float(best_acc), log=log)


def write_train_log(log: Sequence[EpochRecord], path: Union[str, Path],
                    include_timing: bool = False) -> Path:
    """CSV epoch log; seconds are zeroed unless timing output is wanted."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "dev_accuracy", "seconds"])
        for rec in log:
            seconds = rec.seconds if include_timing else 0.0
            writer.writerow(
                [rec.epoch, repr(float(rec.train_loss)),
                 repr(float(rec.dev_accuracy)), repr(float(seconds))]
            )
    return path


def read_train_log(path: Union[str, Path]) -> list[EpochRecord]:
    path = Path(path)
    out: list[EpochRecord] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["epoch", "train_loss", "dev_accuracy", "seconds"]
        if reader.fieldnames != expected:
            raise ValueError(f"{path}: header {reader.fieldnames}, expected {expected}")
        for row in reader:
            try:
                out.append(
                    EpochRecord(
                        epoch=int(row["epoch"]),
                        train_loss=float(row["train_loss"]),
                        dev_accuracy=float(row["dev_accuracy"]),
                        seconds=float(row["seconds"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path} line {reader.line_num}: bad row ({exc})") from exc
    return out
