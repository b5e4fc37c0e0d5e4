"""Optimizers, the projected training loop, and the synthetic task generators.

Every run is deterministic given its seed: dataset sampling, shuffling and
initialization all draw from explicit generators, and constrained nets are
re-projected onto their constraint set after every parameter update.
"""

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteLossError, ShapeMismatchError, UnsatisfiableError
from .losses import LossSpec
from .net import CONSTRAINED, LipNet, backward, forward, lipschitz_upper_bound, project
from .linalg import power_iteration

__all__ = [
    "LabeledDataset",
    "OptimizerCfg",
    "EpochRecord",
    "TrainHistory",
    "train",
    "gaussian_mixture_task",
    "gaussian_mixture_minority_centers",
    "linear_pair_task",
    "random_label_task",
    "two_moons_task",
    "separable_blobs_task",
    "overlapping_gaussians_task",
]


@dataclass
class LabeledDataset:
    """Point set with labels (+1/-1 binary, or 0-based class indices) and
    optional regression targets."""

    points: np.ndarray
    labels: np.ndarray
    regression_targets: np.ndarray = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.points.shape[0] == 0:
            raise ValueError("dataset must be nonempty")
        if self.labels.shape != (self.points.shape[0],):
            raise ShapeMismatchError("one label per point required")
        if self.regression_targets is not None:
            self.regression_targets = np.asarray(self.regression_targets, dtype=np.float64)
            if self.regression_targets.shape != (self.points.shape[0],):
                raise ShapeMismatchError("one regression target per point required")
        uniq = set(np.unique(self.labels).tolist())
        if not (uniq <= {-1, 1} or min(uniq) >= 0):
            raise ValueError("labels must be +1/-1 or 0-based class indices")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def binary(self) -> bool:
        return set(np.unique(self.labels).tolist()) <= {-1, 1}

    def subset(self, idx) -> "LabeledDataset":
        targets = None if self.regression_targets is None else self.regression_targets[idx]
        return LabeledDataset(self.points[idx], self.labels[idx], targets)


@dataclass(frozen=True)
class OptimizerCfg:
    """Optimizer choice plus the loop parameters (epochs, batching, seed)."""

    kind: str = "adam"  # "adam" or "sgd"
    lr: float = 1e-3
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    cosine_decay: float = None  # optional floor fraction for a cosine lr factor

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    eval_loss: float
    eval_accuracy: float
    mcr: float
    max_spectral_norm: float
    lipschitz_upper_bound: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.asarray([getattr(r, name) for r in self.records])

    def last(self) -> EpochRecord:
        return self.records[-1]

    def write_csv(self, path: str) -> None:
        fields = list(EpochRecord.__dataclass_fields__)
        directory = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(fields)
                for r in self.records:
                    writer.writerow([getattr(r, f) for f in fields])
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


class _OptState:
    """Per-parameter optimizer slots (momentum or Adam moments)."""

    def __init__(self, net: LipNet):
        self.slots = [
            (np.zeros_like(l.W), np.zeros_like(l.b), np.zeros_like(l.W), np.zeros_like(l.b))
            for l in net.dense_layers()
        ]
        self.t = 0


def _apply_update(net, grads, state: _OptState, opt: OptimizerCfg, lr: float):
    state.t += 1
    for (layer, dW, db, slot) in zip(net.dense_layers(), grads.dW, grads.db, state.slots):
        mW, mb, vW, vb = slot
        if opt.kind == "sgd":
            mW *= opt.momentum
            mW += dW
            mb *= opt.momentum
            mb += db
            layer.W -= lr * mW
            layer.b -= lr * mb
        else:
            mW *= opt.beta1
            mW += (1 - opt.beta1) * dW
            mb *= opt.beta1
            mb += (1 - opt.beta1) * db
            vW *= opt.beta2
            vW += (1 - opt.beta2) * dW * dW
            vb *= opt.beta2
            vb += (1 - opt.beta2) * db * db
            c1 = 1 - opt.beta1**state.t
            c2 = 1 - opt.beta2**state.t
            layer.W -= lr * (mW / c1) / (np.sqrt(vW / c2) + opt.eps_hat)
            layer.b -= lr * (mb / c1) / (np.sqrt(vb / c2) + opt.eps_hat)


def _lr_at(opt: OptimizerCfg, epoch: int) -> float:
    if opt.cosine_decay is None:
        return opt.lr
    frac = epoch / max(1, opt.epochs)
    floor = opt.cosine_decay
    return opt.lr * ((1 - floor) * 0.5 * (1 + math.cos(math.pi * frac)) + floor)


def _accuracy(logits, labels, binary):
    if binary:
        pred = np.where(logits[:, 0] >= 0.0, 1, -1)
        return float(np.mean(pred == labels))
    return float(np.mean(logits.argmax(axis=1) == labels))


def _metrics(net, loss: LossSpec, data: LabeledDataset):
    logits = forward(net, data.points)
    values, _ = loss.batch_value_and_grad(logits, data.labels)
    acc = _accuracy(logits, data.labels, not loss.multiclass)
    if loss.multiclass:
        n = logits.shape[0]
        own = logits[np.arange(n), data.labels]
        masked = logits.copy()
        masked[np.arange(n), data.labels] = -np.inf
        robustness = float(np.mean(own - masked.max(axis=1)))
    else:
        robustness = float(np.mean(data.labels * logits[:, 0]))
    return float(np.mean(values)), acc, robustness


def max_spectral_norm(net: LipNet) -> float:
    return max(power_iteration(l.W, max_iters=200, tol=1e-12, min_iters=10).sigma for l in net.dense_layers())


def train(net: LipNet, data: LabeledDataset, loss: LossSpec, opt: OptimizerCfg, eval_data: LabeledDataset = None) -> TrainHistory:
    """Mini-batch training with post-step projection in constrained mode.

    Shuffling is seeded, the net is projected after every update when
    constrained, and the history carries one record per completed epoch.
    Raises NonFiniteLossError (with the epoch) if the loss leaves the reals.
    """
    if data.dim != net.in_dim:
        raise ShapeMismatchError(f"data dim {data.dim} does not match net input {net.in_dim}")
    if loss.multiclass and net.out_dim < 2:
        raise ShapeMismatchError("multiclass loss needs a multi-logit net")
    if not loss.multiclass and net.out_dim != 1:
        raise ShapeMismatchError("binary loss needs a scalar-output net")
    rng = np.random.default_rng(opt.seed)
    state = _OptState(net)
    history = TrainHistory()
    eval_set = eval_data if eval_data is not None else data
    for epoch in range(opt.epochs):
        lr = _lr_at(opt, epoch)
        perm = rng.permutation(data.n)
        for lo in range(0, data.n, opt.batch_size):
            idx = perm[lo : lo + opt.batch_size]
            X = data.points[idx]
            y = data.labels[idx]
            logits = forward(net, X)
            values, dlogits = loss.batch_value_and_grad(logits, y)
            batch_loss = float(np.mean(values))
            if not np.isfinite(batch_loss):
                raise NonFiniteLossError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            grads = backward(net, X, dlogits / len(idx))
            _apply_update(net, grads, state, opt, lr)
            if net.constrained:
                project(net)
        train_loss, train_acc, robustness = _metrics(net, loss, data)
        eval_loss, eval_acc, _ = _metrics(net, loss, eval_set)
        history.records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                train_accuracy=train_acc,
                eval_loss=eval_loss,
                eval_accuracy=eval_acc,
                mcr=robustness,
                max_spectral_norm=max_spectral_norm(net),
                lipschitz_upper_bound=lipschitz_upper_bound(net),
            )
        )
    return history


# ---------------------------------------------------------------------------
# Synthetic tasks
# ---------------------------------------------------------------------------

_MIXTURE_CENTERS = {
    # (majority, minority) per class; each minority sits deep in the other
    # class's majority territory
    1: ((-1.5, 0.0), (1.5, 1.5)),
    -1: ((1.5, 0.0), (-1.5, -1.5)),
}
_MIXTURE_SIGMA = 0.3


def gaussian_mixture_task(seed: int, n: int = 2000) -> LabeledDataset:
    """Binary task where each class is a two-mode mixture with weights 0.9/0.1."""
    rng = np.random.default_rng(seed)
    per_class = n // 2
    pts, labs = [], []
    for label in (1, -1):
        major, minor = _MIXTURE_CENTERS[label]
        use_minor = rng.uniform(size=per_class) < 0.1
        centers = np.where(use_minor[:, None], np.asarray(minor), np.asarray(major))
        pts.append(centers + _MIXTURE_SIGMA * rng.standard_normal((per_class, 2)))
        labs.append(np.full(per_class, label))
    return LabeledDataset(np.concatenate(pts), np.concatenate(labs))


def gaussian_mixture_minority_centers():
    """Minority-mode centers, keyed by their true class label."""
    return {1: np.asarray(_MIXTURE_CENTERS[1][1]), -1: np.asarray(_MIXTURE_CENTERS[-1][1])}


def linear_pair_task() -> LabeledDataset:
    """The two-point 1D task {(-1, -1), (+1, +1)}."""
    return LabeledDataset(np.asarray([[-1.0], [1.0]]), np.asarray([-1, 1]))


def random_label_task(n: int, min_sep: float, seed: int) -> LabeledDataset:
    """n points in the unit square, pairwise at least min_sep apart, with
    iid uniform +1/-1 labels. Raises UnsatisfiableError when rejection
    sampling exhausts its budget (the square only packs so many points)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if min_sep <= 0:
        raise ValueError("min_sep must be > 0")
    rng = np.random.default_rng(seed)
    budget = 1000 * n
    accepted = np.empty((n, 2))
    count = 0
    for _ in range(budget):
        candidate = rng.uniform(size=2)
        if count == 0 or np.min(np.linalg.norm(accepted[:count] - candidate, axis=1)) >= min_sep:
            accepted[count] = candidate
            count += 1
            if count == n:
                break
    if count < n:
        raise UnsatisfiableError(
            f"placed {count}/{n} points at separation {min_sep} within {budget} draws; "
            f"the unit square cannot hold this many at that separation"
        )
    labels = np.where(rng.uniform(size=n) < 0.5, 1, -1)
    return LabeledDataset(accepted, labels)


def two_moons_task(n: int, noise: float, seed: int) -> LabeledDataset:
    """Two interleaved half-circles with Gaussian jitter, labels +1/-1."""
    rng = np.random.default_rng(seed)
    half = n // 2
    t = np.linspace(0.0, np.pi, half)
    outer = np.stack([np.cos(t), np.sin(t)], axis=1)
    inner = np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)
    pts = np.concatenate([outer, inner]) + noise * rng.standard_normal((2 * half, 2))
    labels = np.concatenate([np.full(half, 1), np.full(half, -1)])
    return LabeledDataset(pts, labels)


def separable_blobs_task(n: int, gap: float, seed: int) -> LabeledDataset:
    """Two uniform disks with supports exactly gap apart (strictly separable)."""
    rng = np.random.default_rng(seed)
    half = n // 2
    radius = 0.5
    offset = radius + gap / 2.0
    pts, labs = [], []
    for label, cx in ((1, -offset), (-1, offset)):
        angles = rng.uniform(0.0, 2.0 * np.pi, half)
        radii = radius * np.sqrt(rng.uniform(size=half))
        pts.append(np.stack([cx + radii * np.cos(angles), radii * np.sin(angles)], axis=1))
        labs.append(np.full(half, label))
    return LabeledDataset(np.concatenate(pts), np.concatenate(labs))


def overlapping_gaussians_task(n: int, seed: int, separation: float = 2.0, sigma: float = 0.8) -> LabeledDataset:
    """Two overlapping isotropic Gaussians; irreducible error makes the
    generalization gap visible at small sample sizes."""
    rng = np.random.default_rng(seed)
    half = n // 2
    pts = np.concatenate(
        [
            np.asarray([-separation / 2.0, 0.0]) + sigma * rng.standard_normal((half, 2)),
            np.asarray([separation / 2.0, 0.0]) + sigma * rng.standard_normal((half, 2)),
        ]
    )
    labels = np.concatenate([np.full(half, 1), np.full(half, -1)])
    return LabeledDataset(pts, labels)
