"""Desk-scale experiment drivers: divergence, consistency, the
accuracy/robustness sweep, and signed-distance regression.

Each driver is deterministic given its seeds and returns plain rows or small
result objects that the CLI serializes to CSV/JSON.
"""

from dataclasses import dataclass, replace

import numpy as np

from .geometry import RegionLabeler, koch_snowflake, sdf_grid_dataset, snowflake_bbox
from .losses import LossSpec
from .net import (
    CONSTRAINED,
    UNCONSTRAINED,
    DenseLayer,
    LipNet,
    build_mlp,
    forward,
    backward,
    project,
)
from .robustness import robust_accuracy
from .train import (
    LabeledDataset,
    OptimizerCfg,
    TrainHistory,
    _OptState,
    _apply_update,
    _lr_at,
    linear_pair_task,
    separable_blobs_task,
    train,
)

__all__ = [
    "DivergenceReport",
    "divergence_experiment",
    "consistency_experiment",
    "pareto_sweep",
    "SdfFitResult",
    "sdf_fit_experiment",
    "binary_to_classes",
]


def binary_to_classes(labels) -> np.ndarray:
    """Map +1/-1 labels to class indices {1, 0} for the multiclass losses."""
    return ((np.asarray(labels) + 1) // 2).astype(np.int64)


@dataclass
class DivergenceReport:
    linear: TrainHistory
    constrained_control: TrainHistory
    relu_baseline: TrainHistory


def divergence_experiment(steps: int = 2000, *, include_relu_baseline: bool = True) -> DivergenceReport:
    """Cross-entropy on separable data without a Lipschitz constraint.

    Trains the one-weight affine model on the two-point task with full-batch
    steps and records the weight magnitude per step: the loss heads to zero
    while the weight grows without bound. A constrained control run on the
    same data keeps its Lipschitz upper bound pinned at 1, and an
    unconstrained ReLU baseline on a 2D task shows the same growth at MLP
    scale.
    """
    data = linear_pair_task()
    bce = LossSpec("bce", tau=1.0)

    linear_net = LipNet(
        [DenseLayer(np.zeros((1, 1)), np.zeros(1), constraint=UNCONSTRAINED)],
        mode=UNCONSTRAINED,
    )
    # beta2 = 0.99: the second moment must track the exponentially decaying
    # gradient or the steps stall and mask the weight growth
    linear_hist = train(
        linear_net,
        data,
        bce,
        OptimizerCfg(kind="adam", lr=0.1, beta2=0.99, epochs=steps, batch_size=2, seed=0),
    )

    control_net = build_mlp((1, 8, 8, 1), seed=1)
    control_hist = train(
        control_net,
        data,
        bce,
        OptimizerCfg(kind="adam", lr=1e-3, epochs=min(steps, 300), batch_size=2, seed=1),
    )

    if include_relu_baseline:
        blob_data = separable_blobs_task(200, gap=0.1, seed=2)
        relu_net = build_mlp((2, 32, 32, 1), seed=2, mode=UNCONSTRAINED, activation="relu")
        relu_hist = train(
            relu_net,
            blob_data,
            bce,
            OptimizerCfg(kind="adam", lr=1e-3, epochs=min(steps, 300), batch_size=200, seed=2),
        )
    else:
        relu_hist = TrainHistory()
    return DivergenceReport(linear=linear_hist, constrained_control=control_hist, relu_baseline=relu_hist)


def consistency_experiment(
    fractions,
    tau_list,
    base_data: LabeledDataset,
    seeds,
    eval_data: LabeledDataset,
    *,
    widths=(64, 64, 64),
    epochs: int = 150,
    lr: float = 1e-3,
    batch_size: int = 50,
    include_unconstrained: bool = True,
):
    """Generalization gap versus train-set size and temperature.

    For every (fraction, tau, seed) a constrained net is trained with
    temperature cross-entropy on a deterministic prefix slice of a seeded
    shuffle of base_data; the unconstrained ReLU baseline is trained per
    (fraction, seed). Rows report final train/eval loss and accuracy gaps.
    """
    if not all(0.0 < f <= 1.0 for f in fractions):
        raise ValueError("fractions must lie in (0, 1]")
    rows = []
    for seed in seeds:
        perm = np.random.default_rng(seed).permutation(base_data.n)
        for fraction in fractions:
            n_train = max(2, int(round(fraction * base_data.n)))
            subset = base_data.subset(perm[:n_train])
            runs = [("constrained", tau) for tau in tau_list]
            if include_unconstrained:
                runs.append(("relu_unconstrained", 1.0))
            for arch, tau in runs:
                if arch == "constrained":
                    net = build_mlp((base_data.dim, *widths, 1), seed=seed)
                else:
                    net = build_mlp((base_data.dim, *widths, 1), seed=seed, mode=UNCONSTRAINED, activation="relu")
                hist = train(
                    net,
                    subset,
                    LossSpec("bce", tau=tau),
                    OptimizerCfg(kind="adam", lr=lr, epochs=epochs, batch_size=min(batch_size, n_train), seed=seed),
                    eval_data,
                )
                last = hist.last()
                rows.append(
                    {
                        "fraction": fraction,
                        "n_train": n_train,
                        "tau": tau,
                        "seed": seed,
                        "arch": arch,
                        "train_loss": last.train_loss,
                        "eval_loss": last.eval_loss,
                        "loss_gap": abs(last.eval_loss - last.train_loss),
                        "train_accuracy": last.train_accuracy,
                        "eval_accuracy": last.eval_accuracy,
                        "accuracy_gap": abs(last.train_accuracy - last.eval_accuracy),
                    }
                )
    return rows


def pareto_sweep(
    task,
    grid,
    opt: OptimizerCfg,
    seeds,
    *,
    eps_list=(0.1, 0.2),
    widths=(64, 64, 64),
):
    """One row per (loss grid point, seed): clean accuracy, certified robust
    accuracy at each eps, the mean-certifiable-robustness metric, and the
    average certificate value.

    task(seed) must return (train_data, eval_data) with +1/-1 labels; the
    multiclass losses run on a two-logit head with converted labels.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    rows = []
    for spec in grid:
        for seed in seeds:
            train_data, eval_data = task(seed)
            if spec.multiclass:
                out_dim = 2
                train_set = LabeledDataset(train_data.points, binary_to_classes(train_data.labels))
                eval_set = LabeledDataset(eval_data.points, binary_to_classes(eval_data.labels))
            else:
                out_dim = 1
                train_set, eval_set = train_data, eval_data
            net = build_mlp((train_data.dim, *widths, out_dim), seed=seed)
            train(net, train_set, spec, replace(opt, seed=seed), eval_set)
            logits = forward(net, eval_set.points)
            if spec.multiclass:
                pred = logits.argmax(axis=1)
                n = logits.shape[0]
                masked = logits.copy()
                masked[np.arange(n), pred] = -np.inf
                certs = np.maximum(0.0, (logits[np.arange(n), pred] - masked.max(axis=1)) / 2.0)
                own = logits[np.arange(n), eval_set.labels]
                masked_true = logits.copy()
                masked_true[np.arange(n), eval_set.labels] = -np.inf
                robustness = float(np.mean(own - masked_true.max(axis=1)))
                clean = float(np.mean(pred == eval_set.labels))
            else:
                pred = np.where(logits[:, 0] >= 0.0, 1, -1)
                certs = np.abs(logits[:, 0])
                robustness = float(np.mean(eval_set.labels * logits[:, 0]))
                clean = float(np.mean(pred == eval_set.labels))
            row = {
                "loss_kind": spec.kind,
                "tau": spec.tau,
                "alpha": spec.alpha,
                "m": spec.m,
                "seed": seed,
                "clean_accuracy": clean,
                "mcr": robustness,
                "avg_certificate": float(np.mean(certs)),
            }
            for eps in eps_list:
                row[f"certified_robust_accuracy_{eps}"] = robust_accuracy(net, eval_set, eps, "certified")
            rows.append(row)
    return rows


@dataclass
class SdfFitResult:
    net: LipNet
    final_mae: float
    converged: bool
    epochs_run: int


def sdf_fit_experiment(
    resolution: int,
    stop_mae: float,
    *,
    iterations: int = 4,
    widths=(128, 128, 128),
    seed: int = 0,
    max_epochs: int = 600,
    lr: float = 5e-3,
    batch_size: int = 1024,
) -> SdfFitResult:
    """Regress a constrained net onto the exact snowflake signed distance.

    Mean-square-error training on the resolution^2 grid, stopping as soon as
    the grid mean absolute error drops below stop_mae. When the epoch budget
    runs out first, the result is flagged converged=False and carries the best
    error seen.
    """
    if stop_mae <= 0:
        raise ValueError("stop_mae must be > 0")
    boundary = koch_snowflake(iterations)
    grid = sdf_grid_dataset(boundary, RegionLabeler(), resolution, snowflake_bbox())
    targets = grid.regression_targets
    net = build_mlp((2, *widths, 1), seed=seed)
    opt = OptimizerCfg(kind="adam", lr=lr, epochs=max_epochs, batch_size=batch_size, seed=seed, cosine_decay=0.05)
    rng = np.random.default_rng(seed)
    state = _OptState(net)
    best_mae = np.inf
    for epoch in range(max_epochs):
        lr_now = _lr_at(opt, epoch)
        perm = rng.permutation(grid.n)
        for lo in range(0, grid.n, batch_size):
            idx = perm[lo : lo + batch_size]
            X = grid.points[idx]
            pred = forward(net, X)[:, 0]
            residual = pred - targets[idx]
            upstream = (2.0 * residual / len(idx))[:, None]
            grads = backward(net, X, upstream)
            _apply_update(net, grads, state, opt, lr_now)
            project(net)
        mae = float(np.mean(np.abs(forward(net, grid.points)[:, 0] - targets)))
        best_mae = min(best_mae, mae)
        if mae < stop_mae:
            return SdfFitResult(net=net, final_mae=mae, converged=True, epochs_run=epoch + 1)
    return SdfFitResult(net=net, final_mae=best_mae, converged=False, epochs_run=max_epochs)
