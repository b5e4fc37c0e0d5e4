"""Command-line surface: every experiment and oracle behind one entry point.

Commands write CSV/JSON for external plotting; outputs are atomic
(temp-then-rename) and byte-reproducible given the same config. Exit codes:
0 success, 1 config validation error, 2 runtime failure.
"""

import argparse
import csv
import json
import os
import sys
import tempfile

import numpy as np

from .errors import ConfigInvalidError, LipnetsError, OutputUnwritableError
from .experiments import consistency_experiment, divergence_experiment, pareto_sweep, sdf_fit_experiment
from .geometry import boundary_to_json, koch_snowflake
from .losses import LossSpec
from .net import CONSTRAINED, UNCONSTRAINED, build_mlp, load_checkpoint, save_checkpoint
from .robustness import evaluation_report, write_evaluation_report
from .train import (
    LabeledDataset,
    OptimizerCfg,
    gaussian_mixture_task,
    linear_pair_task,
    overlapping_gaussians_task,
    random_label_task,
    separable_blobs_task,
    train,
    two_moons_task,
)
from .transport import dist_pair_from_json, packing_bounds, w1_exact_1d


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise OutputUnwritableError(f"output directory does not exist: {directory}")
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise OutputUnwritableError(str(exc)) from exc


def _write_rows_csv(path: str, rows) -> None:
    if not rows:
        raise ValueError("no rows to write")
    fieldnames = list(rows[0].keys())
    lines = []
    out = []
    writer_target = out

    class _Sink:
        def write(self, s):
            writer_target.append(s)

    writer = csv.DictWriter(_Sink(), fieldnames=fieldnames)
    writer.writeheader()
    writer.writerows(rows)
    _atomic_write(path, "".join(out))


def _require(cfg: dict, path: str, expected_type, pred=None, what: str = ""):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigInvalidError(f"{path}: missing")
        node = node[part]
    if expected_type is float and isinstance(node, int) and not isinstance(node, bool):
        node = float(node)
    if not isinstance(node, expected_type) or isinstance(node, bool):
        raise ConfigInvalidError(f"{path}: expected {expected_type.__name__}")
    if pred is not None and not pred(node):
        raise ConfigInvalidError(f"{path}: {what}")
    return node


_TASKS = {
    "two_moons": lambda seed, p: two_moons_task(int(p.get("n", 500)), float(p.get("noise", 0.15)), seed),
    "gaussian_mixture": lambda seed, p: gaussian_mixture_task(seed, int(p.get("n", 2000))),
    "blobs": lambda seed, p: separable_blobs_task(int(p.get("n", 200)), float(p.get("gap", 0.1)), seed),
    "overlapping_gaussians": lambda seed, p: overlapping_gaussians_task(
        int(p.get("n", 2000)), seed, float(p.get("separation", 2.0)), float(p.get("sigma", 0.8))
    ),
    "random_labels": lambda seed, p: random_label_task(int(p.get("n", 40)), float(p.get("min_sep", 0.2)), seed),
    "linear_pair": lambda seed, p: linear_pair_task(),
}


def _make_task(cfg: dict, path: str, seed: int) -> LabeledDataset:
    name = _require(cfg, f"{path}.name", str, lambda s: s in _TASKS, f"must be one of {sorted(_TASKS)}")
    node = cfg
    for part in path.split("."):
        node = node[part]
    params = {k: v for k, v in node.items() if k != "name"}
    return _TASKS[name](seed, params)


def _load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigInvalidError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigInvalidError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigInvalidError("config root must be an object")
    return cfg


def _optimizer_from(cfg: dict, seed: int) -> OptimizerCfg:
    opt = cfg.get("optimizer", {})
    if not isinstance(opt, dict):
        raise ConfigInvalidError("optimizer: expected object")
    known = {"kind", "lr", "momentum", "beta1", "beta2", "eps_hat", "epochs", "batch_size", "cosine_decay"}
    extra = set(opt) - known
    if extra:
        raise ConfigInvalidError(f"optimizer.{sorted(extra)[0]}: unknown field")
    try:
        return OptimizerCfg(seed=seed, **opt)
    except (ValueError, TypeError) as exc:
        raise ConfigInvalidError(f"optimizer: {exc}") from exc


def _loss_from(node) -> LossSpec:
    if not isinstance(node, dict):
        raise ConfigInvalidError("loss: expected object")
    try:
        return LossSpec.from_dict(node)
    except (ValueError, TypeError) as exc:
        raise ConfigInvalidError(f"loss: {exc}") from exc


def _net_widths(cfg: dict, in_dim: int, out_dim: int):
    net_cfg = cfg.get("net", {})
    widths = net_cfg.get("widths", [64, 64, 64])
    if not (isinstance(widths, list) and widths and all(isinstance(w, int) and w > 0 for w in widths)):
        raise ConfigInvalidError("net.widths: expected a nonempty list of positive ints")
    return (in_dim, *widths, out_dim)


def _cmd_train(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else _require(cfg, "seed", int)
    loss = _loss_from(cfg.get("loss", {"kind": "bce", "tau": 1.0}))
    opt = _optimizer_from(cfg, seed)
    mode = cfg.get("net", {}).get("mode", "constrained")
    if mode not in (CONSTRAINED, UNCONSTRAINED):
        raise ConfigInvalidError("net.mode: expected 'constrained' or 'unconstrained'")
    data = _make_task(cfg, "task", seed)
    eval_data = _make_task(cfg, "eval_task", seed + 10_000) if "eval_task" in cfg else None
    if loss.multiclass:
        from .experiments import binary_to_classes

        labels = binary_to_classes(data.labels)
        data = LabeledDataset(data.points, labels)
        if eval_data is not None:
            eval_data = LabeledDataset(eval_data.points, binary_to_classes(eval_data.labels))
        out_dim = int(labels.max()) + 1
    else:
        out_dim = 1
    widths = _net_widths(cfg, data.dim, out_dim)
    activation = cfg.get("net", {}).get("activation", "groupsort" if mode == CONSTRAINED else "relu")
    net = build_mlp(widths, seed=seed, mode=mode, activation=activation)
    history = train(net, data, loss, opt, eval_data)
    os.makedirs(args.out, exist_ok=True)
    history.write_csv(os.path.join(args.out, "history.csv"))
    save_checkpoint(net, os.path.join(args.out, "checkpoint.json"))
    print(json.dumps({"epochs": len(history.records), "final_train_loss": history.last().train_loss}))
    return 0


def _cmd_pareto(args) -> int:
    cfg = _load_config(args.config)
    seeds = _require(cfg, "seeds", list, lambda s: s and all(isinstance(x, int) for x in s), "expected ints")
    grid = _require(cfg, "grid", list, lambda g: len(g) > 0, "must be nonempty")
    specs = [_loss_from(g) for g in grid]
    eps_list = cfg.get("eps_list", [0.1, 0.2])
    opt = _optimizer_from(cfg, seeds[0])

    def task(seed):
        return _make_task(cfg, "task", seed), _make_task(cfg, "task", seed + 10_000)

    rows = pareto_sweep(task, specs, opt, seeds, eps_list=tuple(eps_list))
    os.makedirs(args.out, exist_ok=True)
    _write_rows_csv(os.path.join(args.out, "pareto.csv"), rows)
    print(json.dumps({"rows": len(rows)}))
    return 0


def _cmd_consistency(args) -> int:
    cfg = _load_config(args.config)
    seeds = _require(cfg, "seeds", list, lambda s: s and all(isinstance(x, int) for x in s), "expected ints")
    fractions = _require(cfg, "fractions", list, lambda f: f and all(0 < x <= 1 for x in f), "values in (0, 1]")
    tau_list = _require(cfg, "tau_list", list, lambda t: t and all(x > 0 for x in t), "values > 0")
    base = _make_task(cfg, "task", _require(cfg, "seed", int))
    eval_data = _make_task(cfg, "eval_task", _require(cfg, "seed", int) + 10_000)
    epochs = int(cfg.get("epochs", 150))
    rows = consistency_experiment(fractions, tau_list, base, seeds, eval_data, epochs=epochs)
    os.makedirs(args.out, exist_ok=True)
    _write_rows_csv(os.path.join(args.out, "consistency.csv"), rows)
    print(json.dumps({"rows": len(rows)}))
    return 0


def _cmd_diverge(args) -> int:
    report = divergence_experiment(args.steps)
    os.makedirs(args.out, exist_ok=True)
    report.linear.write_csv(os.path.join(args.out, "linear.csv"))
    report.constrained_control.write_csv(os.path.join(args.out, "constrained_control.csv"))
    if report.relu_baseline.records:
        report.relu_baseline.write_csv(os.path.join(args.out, "relu_baseline.csv"))
    final = report.linear.last()
    print(json.dumps({"final_weight_magnitude": final.max_spectral_norm, "final_loss": final.train_loss}))
    return 0


def _cmd_sdf_fit(args) -> int:
    result = sdf_fit_experiment(args.resolution, args.stop_mae, iterations=args.iterations, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    save_checkpoint(result.net, os.path.join(args.out, "checkpoint.json"))
    summary = {"final_mae": result.final_mae, "converged": result.converged, "epochs_run": result.epochs_run}
    _atomic_write(os.path.join(args.out, "sdf_fit.json"), json.dumps(summary))
    print(json.dumps(summary))
    return 0


def _load_data_csv(path: str) -> LabeledDataset:
    if not os.path.exists(path):
        raise ConfigInvalidError(f"data file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "label" not in reader.fieldnames:
            raise ConfigInvalidError("data csv needs a header with a 'label' column")
        feature_cols = [c for c in reader.fieldnames if c.startswith("x") or c == "y"]
        if not feature_cols:
            raise ConfigInvalidError("data csv needs feature columns named x*, y")
        points, labels = [], []
        for row in reader:
            points.append([float(row[c]) for c in feature_cols])
            labels.append(int(float(row["label"])))
    return LabeledDataset(np.asarray(points), np.asarray(labels))


def _dataset_for_eval(args) -> LabeledDataset:
    if args.data is not None:
        return _load_data_csv(args.data)
    cfg = {"task": json.loads(args.task)}
    return _make_task(cfg, "task", args.seed)


def _cmd_certify(args) -> int:
    net = load_checkpoint(args.checkpoint)
    data = _dataset_for_eval(args)
    rows = evaluation_report(net, data, args.eps, steps=0 if args.no_attack else 200, restarts=args.restarts, seed=args.seed)
    write_evaluation_report(rows, args.out)
    certified = sum(1 for r in rows if r["prediction"] == r["label"] and r["certificate"] >= args.eps) / len(rows)
    print(json.dumps({"points": len(rows), "certified_robust_accuracy": certified}))
    return 0


def _cmd_attack(args) -> int:
    net = load_checkpoint(args.checkpoint)
    data = _dataset_for_eval(args)
    rows = evaluation_report(net, data, args.eps, steps=args.steps, restarts=args.restarts, seed=args.seed)
    write_evaluation_report(rows, args.out)
    flipped = sum(1 for r in rows if r["pgd_found"])
    print(json.dumps({"points": len(rows), "flipped": flipped}))
    return 0


def _cmd_wass(args) -> int:
    if not os.path.exists(args.input):
        raise ConfigInvalidError(f"input file not found: {args.input}")
    with open(args.input) as fh:
        P, Q = dist_pair_from_json(fh.read())
    if P.dim != 1 or Q.dim != 1:
        raise ConfigInvalidError("input: the exact CDF oracle needs 1D atoms")
    value = w1_exact_1d(P, Q)
    text = json.dumps({"w1": value})
    if args.out:
        _atomic_write(args.out, text)
    print(text)
    return 0


def _cmd_snowflake(args) -> int:
    if not 0 <= args.iterations <= 8:
        raise ConfigInvalidError("iterations: must be in 0..8")
    text = boundary_to_json(koch_snowflake(args.iterations))
    if args.out:
        _atomic_write(args.out, text)
    else:
        print(text)
    return 0


def _cmd_pack_bounds(args) -> int:
    if args.m <= 0:
        raise ConfigInvalidError("m: must be > 0")
    if args.vol_x <= 0 or args.vol_ball <= 0:
        raise ConfigInvalidError("vol-x/vol-ball: must be > 0")
    lower, upper = packing_bounds(args.m, args.n, args.vol_x, args.vol_ball)
    print(json.dumps({"lower": lower, "upper": upper}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lipnets", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one net from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("pareto", help="loss hyper-parameter sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_pareto)

    p = sub.add_parser("consistency", help="generalization gap vs train size")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_consistency)

    p = sub.add_parser("diverge", help="weight growth without the constraint")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_diverge)

    p = sub.add_parser("sdf-fit", help="regress the snowflake signed distance")
    p.add_argument("--resolution", type=int, required=True)
    p.add_argument("--stop-mae", type=float, required=True)
    p.add_argument("--iterations", type=int, default=4)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_sdf_fit)

    for name, fn in (("certify", _cmd_certify), ("attack", _cmd_attack)):
        p = sub.add_parser(name, help=f"{name} a checkpoint on a dataset")
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", default=None, help="CSV with x*/y feature columns and a label column")
        p.add_argument("--task", default=None, help='inline task JSON, e.g. {"name": "two_moons", "n": 200}')
        p.add_argument("--eps", type=float, required=True)
        p.add_argument("--steps", type=int, default=200)
        p.add_argument("--restarts", type=int, default=3)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)
        if name == "certify":
            p.add_argument("--no-attack", action="store_true", help="skip the PGD columns")
        p.set_defaults(fn=fn)

    p = sub.add_parser("wass", help="exact 1D W1 of a distribution pair")
    p.add_argument("--input", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_wass)

    p = sub.add_parser("snowflake", help="emit a snowflake boundary as JSON")
    p.add_argument("--iterations", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_snowflake)

    p = sub.add_parser("pack-bounds", help="disjoint-ball packing bounds")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--vol-x", type=float, required=True)
    p.add_argument("--vol-ball", type=float, required=True)
    p.set_defaults(fn=_cmd_pack_bounds)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "data", "unset") is None and getattr(args, "task", None) is None:
        print("error: one of --data or --task is required", file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except ConfigInvalidError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (LipnetsError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
