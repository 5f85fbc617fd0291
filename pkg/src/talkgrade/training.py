"""Loss, optimizers, dropout, data splitting, and the training loop.

The loop runs seeded mini-batch updates, evaluates the development loss
with all dropout disabled after every epoch, keeps the parameters only on
strict improvement, and stops early once the development loss stops
improving by more than a small delta for several consecutive epochs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .autodiff import Tensor, backward, hadamard, log, zero_grads
from .errors import TalkgradeError
from .models import predict

SATURATION_PATIENCE = 10
SATURATION_MIN_DELTA = 1e-4

_mask_draws = 0  # dropout masks drawn so far; dev evaluation must not move it


class TrainingError(TalkgradeError):
    pass


def mask_draw_count() -> int:
    return _mask_draws


@dataclass
class TrainConfig:
    optimizer: str = "adagrad"
    learning_rate: float = 0.01
    batch_size: int = 10
    epochs: int = 50
    weight_drop_p: float = 0.2
    fc_dropout_p: float = 0.2
    seed: int = 0
    dev_fraction: float = 0.1
    weight_decay: float = 0.0  # off by default; tends to hurt these models

    def __post_init__(self):
        if self.optimizer not in ("adagrad", "adam"):
            raise TrainingError(f"unknown optimizer '{self.optimizer}'")
        if self.learning_rate <= 0:
            raise TrainingError("learning_rate must be positive")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be at least 1")
        if self.epochs < 0:
            raise TrainingError("epochs must be non-negative")
        for name in ("weight_drop_p", "fc_dropout_p"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise TrainingError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.dev_fraction < 1.0:
            raise TrainingError("dev_fraction must lie strictly between 0 and 1")
        if self.weight_decay < 0:
            raise TrainingError("weight_decay must be non-negative")

    def to_file_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    @classmethod
    def from_file(cls, path, **overrides) -> "TrainConfig":
        """Read a flat key=value config file; keyword overrides win."""
        values: dict = {}
        casts: dict = {"optimizer": str}
        for f in fields(cls):
            if f.name != "optimizer":
                casts[f.name] = int if f.name in ("batch_size", "epochs", "seed") else float
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                key, sep, value = text.partition("=")
                key, value = key.strip(), value.strip()
                if not sep or not key:
                    raise TrainingError(f"config line {lineno}: expected key=value")
                if key not in casts:
                    raise TrainingError(f"config line {lineno}: unknown key '{key}'")
                try:
                    values[key] = casts[key](value)
                except ValueError as exc:
                    raise TrainingError(f"config line {lineno}: bad value for '{key}'") from exc
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def bce_loss(r: Tensor, y) -> Tensor:
    """Mean binary cross-entropy over the categories.

    r must lie strictly inside (0, 1); sigmoid outputs do unless the logits
    saturate double precision, so a hard 0 or 1 signals a corrupted
    checkpoint and raises.
    """
    y = np.asarray(y, dtype=np.float64)
    if r.data.ndim != 1 or y.shape != r.shape:
        raise TrainingError(f"prediction/label shape mismatch: {r.shape} vs {y.shape}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise TrainingError("labels must be binary")
    if np.any(r.data <= 0.0) or np.any(r.data >= 1.0):
        raise TrainingError("prediction touches 0 or 1 exactly")
    n = r.data.size
    term = hadamard(Tensor(y), log(r)) + hadamard(Tensor(1.0 - y), log(1.0 - r))
    return term.sum() * (-1.0 / n)


class Adagrad:
    """Accumulate squared gradients; scale each step by their root."""

    def __init__(self, tensors, learning_rate: float, epsilon: float = 1e-10):
        self.tensors = list(tensors)
        self.learning_rate = learning_rate
        self.epsilon = epsilon
        self.accum = [np.zeros_like(t.data) for t in self.tensors]

    def step(self) -> None:
        for t, acc in zip(self.tensors, self.accum):
            if t.grad is None:
                continue
            g = t.grad
            acc += g * g
            t.data -= self.learning_rate * g / (np.sqrt(acc) + self.epsilon)


class Adam:
    """Bias-corrected first/second moment updates (beta1=0.9, beta2=0.999)."""

    def __init__(
        self,
        tensors,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.tensors = list(tensors)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = [np.zeros_like(t.data) for t in self.tensors]
        self.v = [np.zeros_like(t.data) for t in self.tensors]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for t, m, v in zip(self.tensors, self.m, self.v):
            if t.grad is None:
                continue
            g = t.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            t.data -= self.learning_rate * (m / b1c) / (np.sqrt(v / b2c) + self.epsilon)


def make_optimizer(name: str, tensors, learning_rate: float):
    if name == "adagrad":
        return Adagrad(tensors, learning_rate)
    if name == "adam":
        return Adam(tensors, learning_rate)
    raise TrainingError(f"unknown optimizer '{name}'")


def dropout_mask(shape, p: float, rng) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability p, survivors scaled 1/(1-p)."""
    global _mask_draws
    if not 0.0 <= p < 1.0:
        raise TrainingError("degenerate dropout (p must lie in [0, 1))")
    _mask_draws += 1
    return (rng.random(shape) >= p) / (1.0 - p)


def weight_drop(matrices, p: float, rng, training: bool = True) -> list[Tensor]:
    """Mask recurrent weight matrices element-wise for one batch.

    Returns graph nodes downstream of the originals, so gradients flow back
    to the unmasked parameters. In evaluation mode (or at p=0) the input
    tensors are returned unchanged.
    """
    matrices = list(matrices)
    if not training or p == 0.0:
        return matrices
    if p >= 1.0:
        raise TrainingError("degenerate dropout (p=1 with training enabled)")
    return [hadamard(m, Tensor(dropout_mask(m.shape, p, rng))) for m in matrices]


def fc_dropout(vector: Tensor, p: float, rng, training: bool = True) -> Tensor:
    """Inverted dropout on a plain vector (the pooled talk embedding)."""
    if not training or p == 0.0:
        return vector
    if p >= 1.0:
        raise TrainingError("degenerate dropout (p=1 with training enabled)")
    return hadamard(vector, Tensor(dropout_mask(vector.shape, p, rng)))


def masked_params(params, p: float, rng, training: bool = True):
    """Copy of params whose four V matrices are weight-dropped for this batch."""
    if not training or p == 0.0:
        return params
    v_i, v_f, v_u, v_o = weight_drop(
        [params.V_i, params.V_f, params.V_u, params.V_o], p, rng, training=True
    )
    return replace(params, V_i=v_i, V_f=v_f, V_u=v_u, V_o=v_o)


def split_indices(n: int, test_n: int, dev_fraction: float, seed: int):
    """Disjoint (train, dev, test) index arrays: test first, then dev from the rest."""
    if n <= test_n:
        raise TrainingError(f"need more than {test_n} talks, got {n}")
    if not 0.0 < dev_fraction < 1.0:
        raise TrainingError("dev_fraction must lie strictly between 0 and 1")
    order = np.random.default_rng(seed).permutation(n)
    test = order[:test_n]
    rest = order[test_n:]
    dev_n = int(math.floor(dev_fraction * len(rest)))
    return rest[dev_n:], rest[:dev_n], test


def split_data(items, test_n: int, dev_fraction: float, seed: int):
    train_idx, dev_idx, test_idx = split_indices(len(items), test_n, dev_fraction, seed)
    pick = lambda idx: [items[i] for i in idx]
    return pick(train_idx), pick(dev_idx), pick(test_idx)


class CheckpointGate:
    """Keep a checkpoint only when the dev loss beats every previous epoch."""

    def __init__(self):
        self.best = math.inf

    def update(self, dev_loss: float) -> bool:
        if dev_loss < self.best:
            self.best = dev_loss
            return True
        return False


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_loss: float
    saved: bool


@dataclass
class TrainResult:
    params: object  # best-so-far copy (initial params if no epoch improved)
    curves: list[EpochRecord]
    best_epoch: int
    best_dev_loss: float


def curves_to_csv(curves) -> str:
    lines = ["epoch,train_loss,dev_loss,saved"]
    for rec in curves:
        lines.append(f"{rec.epoch},{rec.train_loss:.6f},{rec.dev_loss:.6f},{int(rec.saved)}")
    return "\n".join(lines) + "\n"


def evaluate_loss(params, dataset, wordvecs) -> float:
    """Mean BCE over a dataset with dropout disabled."""
    if not dataset:
        raise TrainingError("cannot evaluate on an empty dataset")
    total = 0.0
    for sentences, y in dataset:
        total += float(bce_loss(predict(params, sentences, wordvecs), y).data)
    return total / len(dataset)


def _params_sq_mean(params) -> Tensor:
    tensors = params.tensors()
    total = None
    count = 0
    for t in tensors:
        sq = hadamard(t, t).sum()
        total = sq if total is None else total + sq
        count += t.data.size
    return total * (1.0 / count)


def train(
    params,
    train_set,
    dev_set,
    wordvecs,
    config: TrainConfig,
    on_save=None,
    patience: int = SATURATION_PATIENCE,
    min_delta: float = SATURATION_MIN_DELTA,
) -> TrainResult:
    """Mini-batch training with checkpoint-on-dev-improvement.

    train_set and dev_set are sequences of (sentences, labels) pairs in the
    representation `predict` expects for the given params. Returns the best
    parameter copy, per-epoch loss curves, and the best epoch. `on_save`
    is invoked as on_save(params, epoch) whenever the gate fires.
    """
    if not train_set:
        raise TrainingError("empty training set")
    rng = np.random.default_rng(config.seed)
    optimizer = make_optimizer(config.optimizer, params.tensors(), config.learning_rate)
    gate = CheckpointGate()
    curves: list[EpochRecord] = []
    best_params = params.copy()
    best_epoch = 0
    stall = 0
    stop_best = math.inf
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        running = 0.0
        for batch_no, start in enumerate(range(0, len(order), config.batch_size)):
            batch = order[start : start + config.batch_size]
            current = masked_params(params, config.weight_drop_p, rng, training=True)
            fc_mask = None
            if config.fc_dropout_p > 0.0:
                fc_mask = dropout_mask(params.hidden, config.fc_dropout_p, rng)
            loss = None
            for i in batch:
                sentences, y = train_set[i]
                r = predict(current, sentences, wordvecs, fc_mask=fc_mask)
                example_loss = bce_loss(r, y)
                loss = example_loss if loss is None else loss + example_loss
            loss = loss * (1.0 / len(batch))
            if config.weight_decay > 0.0:
                loss = loss + config.weight_decay * _params_sq_mean(params)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {batch_no}")
            zero_grads(params.tensors())
            backward(loss)
            optimizer.step()
            running += value * len(batch)
        train_loss = running / len(order)
        dev_loss = evaluate_loss(params, dev_set, wordvecs)
        saved = gate.update(dev_loss)
        if saved:
            best_params = params.copy()
            best_epoch = epoch
            if on_save is not None:
                on_save(params, epoch)
        curves.append(EpochRecord(epoch, train_loss, dev_loss, saved))
        if dev_loss < stop_best - min_delta:
            stop_best = dev_loss
            stall = 0
        else:
            stall += 1
            if stall >= patience:
                break
    return TrainResult(
        params=best_params, curves=curves, best_epoch=best_epoch, best_dev_loss=gate.best
    )
