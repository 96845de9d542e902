"""Mean-squared-error loss, plain SGD, and the epoch/batch training loop.

The loss is pixel-wise MSE against one-hot targets, normalized by the
image count of the batch only (an optional flag divides by the per-image
element count as well). Curves record training/validation pixel accuracy
and mean training loss per epoch, and can be streamed to a CSV file with
one flushed line per epoch.
"""

from dataclasses import dataclass

import numpy as np

from .data import batch_iterator
from .errors import ConfigurationError, ContractViolation
from .model import backward, forward
from .tensor import argmax_channel


@dataclass
class TrainConfig:
    epochs: int
    learning_rate: float
    seed: int
    batch_size: int = 20
    normalize_per_pixel: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigurationError(
                f"learning_rate must be > 0, got {self.learning_rate}")


@dataclass
class EpochRecord:
    epoch: int
    train_acc: float
    val_acc: float
    mean_loss: float


@dataclass
class LearningCurves:
    records: list

    def csv_lines(self):
        return [f"{r.epoch},{r.train_acc:.6f},{r.val_acc:.6f},{r.mean_loss:.6f}"
                for r in self.records]


def mse_loss(pred, target, normalize_per_pixel=False):
    """Loss and its gradient: sum of squared differences over image count.

    Returns (loss, grad) where grad is d(loss)/d(pred). With
    normalize_per_pixel the divisor additionally includes each image's
    pixel-channel count, giving a scale-stable learning rate.
    """
    if pred.shape != target.shape:
        raise ContractViolation(
            f"prediction shape {pred.shape} does not match target {target.shape}")
    n = pred.shape[0]
    denom = float(n)
    if normalize_per_pixel:
        denom *= pred[0].size
    diff = pred - target
    loss = float(np.sum(diff * diff) / denom)
    grad = (2.0 / denom) * diff
    return loss, grad


def sgd_step(net, grads, learning_rate):
    """In-place update: every parameter moves against its gradient."""
    pairs = list(grads)
    if len(pairs) != len(net.convs):
        raise ContractViolation(
            f"{len(pairs)} gradient pairs for {len(net.convs)} convolutions")
    for p, (gw, gb) in zip(net.convs, pairs):
        if gw.shape != p.weights.shape or gb.shape != p.bias.shape:
            raise ContractViolation(
                f"gradient shapes {gw.shape}/{gb.shape} do not match parameter "
                f"shapes {p.weights.shape}/{p.bias.shape}")
        p.weights -= learning_rate * gw
        p.bias -= learning_rate * gb


def batch_pixel_accuracy(probs, target):
    """Fraction of pixels whose argmax class matches the target's."""
    pred_cls = argmax_channel(probs)
    true_cls = argmax_channel(target)
    return int(np.sum(pred_cls == true_cls)), pred_cls.size


def evaluate(net, dataset, batch_size=20, normalize_per_pixel=False):
    """Aggregate pixel accuracy and mean per-batch loss over a dataset."""
    if not dataset:
        raise ConfigurationError("cannot evaluate an empty dataset")
    correct = 0
    total = 0
    losses = []
    for images, masks in _ordered_batches(dataset, batch_size):
        probs, _ = forward(net, images)
        loss, _ = mse_loss(probs, masks, normalize_per_pixel)
        losses.append(loss)
        c, t = batch_pixel_accuracy(probs, masks)
        correct += c
        total += t
    return correct / total, float(np.mean(losses))


def _ordered_batches(dataset, batch_size):
    for start in range(0, len(dataset), batch_size):
        chunk = dataset[start:start + batch_size]
        images = np.concatenate([s.image for s in chunk], axis=0)
        masks = np.concatenate([s.mask for s in chunk], axis=0)
        yield images, masks


def train(net, train_set, val_set, cfg, curves_path=None):
    """Run the full training loop and return the learning curves.

    Each epoch reshuffles the training set (seed = cfg.seed + epoch index),
    trains every batch including a final partial one, then measures pixel
    accuracy on the training and validation sets. When curves_path is given,
    one CSV line per epoch is appended and flushed as the run progresses.
    """
    if not train_set:
        raise ConfigurationError("training set is empty")
    if not val_set:
        raise ConfigurationError("validation set is empty")
    records = []
    sink = open(curves_path, "w", encoding="utf-8") if curves_path else None
    try:
        for epoch in range(cfg.epochs):
            losses = []
            for images, masks in batch_iterator(train_set, cfg.batch_size,
                                                cfg.seed, epoch):
                probs, caches = forward(net, images)
                loss, grad = mse_loss(probs, masks, cfg.normalize_per_pixel)
                grads = backward(net, caches, grad)
                sgd_step(net, grads, cfg.learning_rate)
                losses.append(loss)
            train_acc, _ = evaluate(net, train_set, cfg.batch_size,
                                    cfg.normalize_per_pixel)
            val_acc, _ = evaluate(net, val_set, cfg.batch_size,
                                  cfg.normalize_per_pixel)
            rec = EpochRecord(epoch=epoch + 1, train_acc=train_acc,
                              val_acc=val_acc, mean_loss=float(np.mean(losses)))
            records.append(rec)
            if sink is not None:
                sink.write(f"{rec.epoch},{rec.train_acc:.6f},{rec.val_acc:.6f},"
                           f"{rec.mean_loss:.6f}\n")
                sink.flush()
    finally:
        if sink is not None:
            sink.close()
    return LearningCurves(records=records)
