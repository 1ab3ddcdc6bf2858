"""Training loop: cross-entropy, SGD with Nesterov momentum, Adam, stop rules."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..datasets import LabeledDataset
from ..errors import DivergenceError
from .network import Network, NetworkSpec

STOP_RULES = ("interpolation", "early_stopping")
OPTIMIZERS = ("sgd_nesterov", "adam")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 0.01
    lr_decay_factor: float = 0.99
    lr_decay_every_n_epochs: int = 10
    nesterov_momentum: float = 0.99
    max_epochs: int = 1000
    stop_rule: str = "interpolation"
    patience_fraction: float = 0.2
    seed: int = 0
    optimizer: str = "sgd_nesterov"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.patience_fraction <= 1:
            raise ValueError("patience_fraction must lie in (0, 1]")
        if self.stop_rule not in STOP_RULES:
            raise ValueError(f"unknown stop_rule {self.stop_rule!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    lr: float


@dataclass
class TrainedModel:
    network: Network
    spec: NetworkSpec
    config: TrainConfig
    seed: int
    history: list[EpochStats] = field(default_factory=list)
    stopped: str = "max_epochs"
    final_train_acc: float = 0.0


class SGDNesterov:
    """Nesterov momentum: v <- mu*v + g; p <- p - lr*(g + mu*v)."""

    def __init__(self, pairs, momentum):
        self.pairs = pairs
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p, _ in pairs]

    def step(self, lr):
        mu = self.momentum
        for v, (p, g) in zip(self.velocity, self.pairs):
            v *= mu
            v += g
            p -= lr * (g + mu * v)


class Adam:
    """Adam with bias correction; the paper's default betas and eps."""

    def __init__(self, pairs, beta1=0.9, beta2=0.999, eps=1e-8):
        self.pairs = pairs
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p, _ in pairs]
        self.v = [np.zeros_like(p) for p, _ in pairs]
        self.t = 0

    def step(self, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for m, v, (p, g) in zip(self.m, self.v, self.pairs):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(network: Network, config: TrainConfig):
    pairs = network.parameters()
    if config.optimizer == "adam":
        return Adam(pairs, config.adam_beta1, config.adam_beta2, config.adam_eps)
    return SGDNesterov(pairs, config.nesterov_momentum)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy plus the logits gradient (softmax - onehot)/N."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    nll = -(shifted[np.arange(n), labels]
            - np.log(exp.sum(axis=1)))
    loss = float(nll.mean())
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad, probs


def evaluate_accuracy(network: Network, images: np.ndarray, labels: np.ndarray,
                      batch_size: int = 256) -> float:
    """Eval-mode classification accuracy (BatchNorm uses running stats)."""
    correct = 0
    for start in range(0, len(labels), batch_size):
        batch = images[start:start + batch_size]
        logits = network.forward(batch, train=False)[-1]
        correct += int((logits.argmax(axis=1) == labels[start:start + batch_size]).sum())
    return correct / len(labels)


def current_lr(config: TrainConfig, epoch: int) -> float:
    """Learning rate for a 0-based epoch under the multiplicative schedule."""
    steps = epoch // config.lr_decay_every_n_epochs
    return config.learning_rate * config.lr_decay_factor ** steps


def train(spec: NetworkSpec, train_ds: LabeledDataset, val_ds: LabeledDataset,
          config: TrainConfig, dtype=np.float32) -> TrainedModel:
    """Train a network per the configured recipe.

    Deterministic given (seed, config, data order). Shuffles each epoch with
    a dedicated seeded stream; applies the multiplicative learning-rate
    schedule; stops on interpolation (100% train accuracy confirmed in eval
    mode) or early stopping on validation error with the configured patience,
    restoring the best-validation parameters on the latter.
    """
    network = Network(spec, seed=np.random.SeedSequence([config.seed, 0]),
                      dtype=dtype)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    optimizer = make_optimizer(network, config)

    images = np.ascontiguousarray(train_ds.images.data, dtype=dtype)
    labels = train_ds.labels
    val_images = np.ascontiguousarray(val_ds.images.data, dtype=dtype)
    val_labels = val_ds.labels
    n = len(labels)

    patience = max(1, int(np.ceil(config.patience_fraction * config.max_epochs)))
    best_val_err = np.inf
    best_snapshot = None
    epochs_since_best = 0
    model = TrainedModel(network=network, spec=spec, config=config,
                         seed=config.seed)

    for epoch in range(config.max_epochs):
        lr = current_lr(config, epoch)
        perm = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        epoch_correct = 0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            x, y = images[idx], labels[idx]
            acts = network.forward(x, train=True)
            loss, grad, probs = softmax_cross_entropy(acts[-1], y)
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            epoch_loss += loss * len(idx)
            epoch_correct += int((probs.argmax(axis=1) == y).sum())
            network.backward(grad.astype(dtype))
            optimizer.step(lr)
        train_acc = epoch_correct / n
        val_acc = evaluate_accuracy(network, val_images, val_labels,
                                    config.batch_size)
        model.history.append(EpochStats(epoch, epoch_loss / n, train_acc,
                                        val_acc, lr))

        if config.stop_rule == "interpolation" and train_acc == 1.0:
            # Confirm with a deterministic eval-mode pass before stopping.
            eval_train_acc = evaluate_accuracy(network, images, labels,
                                               config.batch_size)
            if eval_train_acc == 1.0:
                model.stopped = "interpolated"
                model.final_train_acc = eval_train_acc
                return model
        if config.stop_rule == "early_stopping":
            val_err = 1.0 - val_acc
            if val_err < best_val_err:
                best_val_err = val_err
                best_snapshot = network.snapshot()
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if epochs_since_best >= patience:
                    network.restore(best_snapshot)
                    model.stopped = "early_stopped"
                    break

    model.final_train_acc = evaluate_accuracy(network, images, labels,
                                              config.batch_size)
    return model
