"""Cross-entropy training with decoupled weight decay and early stopping.

``fit`` runs seeded mini-batch epochs over a LabeledSet, tracks validation
loss after every epoch, stops once the validation loss has gone
``patience`` epochs past its best, and hands back the parameters from the
best epoch.  Two calls with identical inputs and config produce
bit-identical parameters and logs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .model import EmoMsase

CROSS_ENTROPY_EPS = 1e-12


class TrainError(ValueError):
    pass


class EmptySplitError(TrainError):
    pass


class DivergedLossError(TrainError):
    pass


class NonFiniteGradientError(TrainError):
    pass


class InvalidClassError(TrainError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 16
    max_epochs: int = 50
    patience: int = 10          # non-improving epochs tolerated before stopping
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise TrainError("learning rate, batch size and epochs must be positive")
        if not (0 <= self.patience <= self.max_epochs):
            raise TrainError("patience must lie in [0, max_epochs]")


@dataclass
class TrainLog:
    """Per-epoch traces plus where training stopped and which epoch won."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    def n_epochs(self) -> int:
        return len(self.train_loss)


@dataclass
class LabeledSet:
    """Stacked per-channel tensors with labels, one row per sample."""

    inputs: dict[str, np.ndarray]   # channel -> (N, T, F)
    labels: np.ndarray              # (N,) class indices
    participants: tuple[str, ...]   # per-sample owner, for leakage checks

    def __post_init__(self):
        n = self.labels.shape[0]
        if len(self.participants) != n:
            raise TrainError("one participant id per sample required")
        for ch, x in self.inputs.items():
            if x.shape[0] != n:
                raise TrainError(f"{ch}: {x.shape[0]} rows but {n} labels")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def take(self, idx: np.ndarray) -> dict[str, np.ndarray]:
        return {ch: x[idx] for ch, x in self.inputs.items()}


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """Negative log probability of the true class for one probability row."""
    probs = np.asarray(probs)
    if label < 0 or label >= probs.shape[-1]:
        raise InvalidClassError(
            f"class {label} outside 0..{probs.shape[-1] - 1}")
    return float(-np.log(probs[label] + CROSS_ENTROPY_EPS))


class AdamW:
    """Adam moments with weight decay applied directly to the weights.

    The decay step w -= lr * wd * w happens alongside (not inside) the
    moment-scaled gradient step, so decay is independent of the gradient
    history; a zero-gradient parameter still shrinks by lr * wd per step.
    """

    def __init__(self, params: list[ad.Param], config: TrainConfig):
        self.params = params
        self.lr = config.learning_rate
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.eps = config.eps
        self.weight_decay = config.weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.value) for p in params]
        self._v = [np.zeros_like(p.value) for p in params]

    def step(self) -> None:
        self.t += 1
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(f"non-finite gradient for {p.name}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            p.value -= self.lr * self.weight_decay * p.value
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def evaluate_loss(model: EmoMsase, data: LabeledSet,
                  batch_size: int = 128) -> tuple[float, float]:
    """Mean cross-entropy and accuracy of the model on a labelled set."""
    probs = model.predict(data.inputs, batch_size=batch_size)
    picked = probs[np.arange(len(data)), data.labels]
    loss = float(-np.log(picked + CROSS_ENTROPY_EPS).mean())
    acc = float((probs.argmax(axis=1) == data.labels).mean())
    return loss, acc


def fit(model: EmoMsase, train_set: LabeledSet, val_set: LabeledSet,
        config: TrainConfig = TrainConfig()) -> tuple[EmoMsase, TrainLog]:
    """Train in place and return the model restored to its best-epoch weights.

    Batches come from a seeded shuffle each epoch; a short final batch is
    kept.  Stops early once validation loss has failed to improve for more
    than ``patience`` consecutive epochs.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise EmptySplitError("both training and validation sets must be non-empty")
    rng = np.random.default_rng(config.seed)
    opt = AdamW(model.parameters(), config)
    log = TrainLog()
    best_loss = np.inf
    best_values = None
    best_epoch = 0
    bad_streak = 0

    n = len(train_set)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            probs, tape = model.forward(train_set.take(idx))
            loss = ad.nll_mean(tape, probs, train_set.labels[idx])
            if not np.isfinite(loss.value):
                raise DivergedLossError(f"training loss diverged at epoch {epoch}")
            model.zero_grad()
            tape.backward(loss)
            opt.step()
            total += float(loss.value) * idx.shape[0]
        val_loss, val_acc = evaluate_loss(model, val_set)
        if not np.isfinite(val_loss):
            raise DivergedLossError(f"validation loss diverged at epoch {epoch}")
        log.train_loss.append(total / n)
        log.val_loss.append(val_loss)
        log.val_accuracy.append(val_acc)

        if val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            best_values = [p.value.copy() for p in model.parameters()]
            bad_streak = 0
        else:
            bad_streak += 1
        if bad_streak > config.patience:
            break

    log.stopped_epoch = log.n_epochs()
    log.best_epoch = best_epoch
    for p, value in zip(model.parameters(), best_values):
        p.value = value
    return model, log
