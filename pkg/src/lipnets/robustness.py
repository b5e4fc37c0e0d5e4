"""Certificates, robustness metrics, the L2 projected-gradient attack, and
robust-accuracy evaluation.

For a constrained scalar net the certified radius at x is |f(x)|; for
multiclass it is half the top-two logit gap. The attack exists to audit those
certificates empirically: any successful perturbation must be at least as
large as the certificate.
"""

import csv
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import NoBracketError, NotArgmaxError, UnconstrainedNetError
from .losses import _sigmoid
from .net import LipNet, backward, forward

__all__ = [
    "Certificate",
    "AttackResult",
    "binary_certificate",
    "multiclass_certificate",
    "mcr",
    "mmcr",
    "pgd_l2",
    "robust_accuracy",
    "balance_bias",
    "evaluation_report",
    "write_evaluation_report",
]


@dataclass(frozen=True)
class Certificate:
    point: np.ndarray
    predicted: int
    radius: float


@dataclass(frozen=True)
class AttackResult:
    found: bool
    perturbation: np.ndarray
    norm: float
    steps_used: int


def _predict_sign(values):
    # sign(0) = +1 everywhere, for reproducible accuracy counts
    return np.where(np.asarray(values) >= 0.0, 1, -1)


def _eval_scalar(net_or_fn, X):
    if isinstance(net_or_fn, LipNet):
        return forward(net_or_fn, X)[:, 0]
    return np.asarray(net_or_fn(X), dtype=np.float64)


def binary_certificate(net: LipNet, x) -> Certificate:
    """Certified robustness radius |f(x)| of a constrained scalar net."""
    if not net.constrained:
        raise UnconstrainedNetError("certificates are meaningless without the Lipschitz guarantee")
    if net.out_dim != 1:
        raise ValueError("binary certificate needs a scalar-output net")
    x = np.asarray(x, dtype=np.float64)
    value = float(forward(net, x[None, :])[0, 0])
    return Certificate(point=x, predicted=int(_predict_sign(value)), radius=abs(value))


def multiclass_certificate(logits, k: int) -> float:
    """Half the gap between logit k and the strongest other logit, floored at 0."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits[k] < np.max(logits):
        raise NotArgmaxError(f"class {k} is not the arg-max of the logits")
    others = np.delete(logits, k)
    return max(0.0, float(logits[k] - np.max(others)) / 2.0)


def mcr(net_or_fn, dataset) -> float:
    """Mean certifiable robustness of a binary task: sample mean of y * f(x)."""
    values = _eval_scalar(net_or_fn, dataset.points)
    return float(np.mean(dataset.labels * values))


def mmcr(net, dataset) -> float:
    """Multiclass mean certifiable robustness: mean top-gap signed by correctness."""
    logits = forward(net, dataset.points)
    n = logits.shape[0]
    own = logits[np.arange(n), dataset.labels]
    masked = logits.copy()
    masked[np.arange(n), dataset.labels] = -np.inf
    return float(np.mean(own - masked.max(axis=1)))


def _margin_and_grad(net, X, labels, multiclass):
    """Ascent objective for the attack: negated true-label margin.

    Binary: -y * f; multiclass: -(f_k - max others). Returns per-point
    objective values and their input gradients.
    """
    logits = forward(net, X)
    n = X.shape[0]
    if not multiclass:
        y = labels.astype(np.float64)
        upstream = np.zeros_like(logits)
        upstream[:, 0] = -y
        obj = -y * logits[:, 0]
    else:
        masked = logits.copy()
        masked[np.arange(n), labels] = -np.inf
        competitor = masked.argmax(axis=1)
        upstream = np.zeros_like(logits)
        upstream[np.arange(n), labels] = -1.0
        upstream[np.arange(n), competitor] = 1.0
        obj = -(logits[np.arange(n), labels] - logits[np.arange(n), competitor])
    grad = backward(net, X, upstream).input_grad
    return obj, grad


def _predictions(net, X, multiclass):
    logits = forward(net, X)
    if multiclass:
        return logits.argmax(axis=1)
    return _predict_sign(logits[:, 0])


def _pgd_batch(net, X, labels, eps, steps, step_size, restarts, seed):
    """Vectorized attack over a batch of points.

    eps and step_size may be scalars or per-point vectors. Restart 0 starts
    at the clean points; later restarts start from seeded random points in
    the ball. Returns (found, best_perturbation, best_norm, steps_used).
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    n, d = X.shape
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), (n,)).copy()
    step_size = np.broadcast_to(np.asarray(step_size, dtype=np.float64), (n,)).copy()
    multiclass = net.out_dim > 1

    clean_pred = _predictions(net, X, multiclass)
    found = np.zeros(n, dtype=bool)
    best_delta = np.zeros_like(X)
    best_norm = np.full(n, np.inf)
    steps_used = np.zeros(n, dtype=np.int64)

    for restart in range(restarts):
        if restart == 0:
            delta = np.zeros_like(X)
        else:
            rng = np.random.default_rng((seed, restart))
            raw = rng.standard_normal((n, d))
            raw_norm = np.linalg.norm(raw, axis=1, keepdims=True)
            radii = eps[:, None] * rng.uniform(0.0, 1.0, (n, 1)) ** (1.0 / d)
            delta = raw / np.maximum(raw_norm, 1e-300) * radii
        for step in range(1, steps + 1):
            _, grad = _margin_and_grad(net, X + delta, labels, multiclass)
            gnorm = np.linalg.norm(grad, axis=1, keepdims=True)
            delta = delta + step_size[:, None] * grad / np.maximum(gnorm, 1e-300)
            dnorm = np.linalg.norm(delta, axis=1, keepdims=True)
            scale = np.minimum(1.0, eps[:, None] / np.maximum(dnorm, 1e-300))
            delta = delta * scale
            pred = _predictions(net, X + delta, multiclass)
            flipped = pred != clean_pred
            norms = np.linalg.norm(delta, axis=1)
            better = flipped & (norms < best_norm)
            if np.any(better):
                newly = better & ~found
                steps_used[newly] = step
                found |= better
                best_delta[better] = delta[better]
                best_norm[better] = norms[better]
    steps_used[~found] = steps * restarts
    best_norm[~found] = 0.0
    return found, best_delta, best_norm, steps_used


def pgd_l2(net: LipNet, x, y, eps: float, steps: int = 200, step_size: float = None, *, restarts: int = 3, seed: int = 0) -> AttackResult:
    """L2 projected-gradient attack around a single point.

    Ascends the negated true-label margin; each step is normalized to
    step_size and the iterate projected back onto the eps-ball. found is true
    iff any iterate changes the prediction; on success the smallest successful
    perturbation across restarts is reported.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    if step_size is None:
        step_size = 2.5 * eps / steps
    x = np.asarray(x, dtype=np.float64)
    found, delta, norm, used = _pgd_batch(net, x[None, :], np.asarray([y]), eps, steps, step_size, restarts, seed)
    return AttackResult(found=bool(found[0]), perturbation=delta[0], norm=float(norm[0]), steps_used=int(used[0]))


def robust_accuracy(net_or_fn, dataset, eps: float, mode: str = "certified", *, steps: int = 200, restarts: int = 3, seed: int = 0) -> float:
    """Fraction of points that are correct and robust at radius eps.

    "certified": correct prediction and certificate radius >= eps.
    "empirical": correct prediction that the attack at budget eps fails to flip.
    eps = 0 reduces to clean accuracy in both modes.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    labels = np.asarray(dataset.labels)
    multiclass = labels.min() >= 0
    if mode == "certified":
        if multiclass:
            logits = forward(net_or_fn, dataset.points)
            pred = logits.argmax(axis=1)
            n = logits.shape[0]
            own = logits[np.arange(n), pred]
            masked = logits.copy()
            masked[np.arange(n), pred] = -np.inf
            radius = np.maximum(0.0, (own - masked.max(axis=1)) / 2.0)
        else:
            values = _eval_scalar(net_or_fn, dataset.points)
            pred = _predict_sign(values)
            radius = np.abs(values)
        return float(np.mean((pred == labels) & (radius >= eps)))
    if mode == "empirical":
        if not isinstance(net_or_fn, LipNet):
            raise TypeError("empirical mode needs a network (the attack requires gradients)")
        pred = _predictions(net_or_fn, dataset.points, multiclass)
        correct = pred == labels
        if eps == 0.0:
            return float(np.mean(correct))
        step_size = 2.5 * eps / steps
        found, _, _, _ = _pgd_batch(net_or_fn, dataset.points, labels, eps, steps, step_size, restarts, seed)
        return float(np.mean(correct & ~found))
    raise ValueError(f"unknown mode {mode!r}")


def balance_bias(net: LipNet, dataset_P, dataset_Q, tol: float = 1e-8) -> float:
    """Bias T equalizing the soft false-negative and false-positive rates.

    Finds T with mean_P sigmoid(-(f - T)) = mean_Q sigmoid(f - T) up to tol,
    by bisection on a geometrically expanded bracket.
    """
    P = np.asarray(dataset_P, dtype=np.float64)
    Q = np.asarray(dataset_Q, dtype=np.float64)
    if P.size == 0 or Q.size == 0:
        raise ValueError("both point sets must be nonempty")
    fP = forward(net, P)[:, 0]
    fQ = forward(net, Q)[:, 0]

    def gap(T):
        # increasing in T: both rates move monotonically
        zp = np.mean(_sigmoid(T - fP))
        zq = np.mean(_sigmoid(fQ - T))
        return zp - zq

    lo = float(min(fP.min(), fQ.min())) - 1.0
    hi = float(max(fP.max(), fQ.max())) + 1.0
    for _ in range(200):
        if gap(lo) < 0.0:
            break
        lo -= 2.0 * (hi - lo)
    else:
        raise NoBracketError("no sign change on the lower side")
    for _ in range(200):
        if gap(hi) > 0.0:
            break
        hi += 2.0 * (hi - lo)
    else:
        raise NoBracketError("no sign change on the upper side")
    while True:
        mid = 0.5 * (lo + hi)
        g = gap(mid)
        if abs(g) <= tol:
            return float(mid)
        if g > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-300:
            return float(mid)


def evaluation_report(net: LipNet, dataset, eps: float, *, steps: int = 200, restarts: int = 3, seed: int = 0):
    """Per-point evaluation rows: prediction, certificate, and attack outcome."""
    labels = np.asarray(dataset.labels)
    multiclass = labels.min() >= 0
    logits = forward(net, dataset.points)
    n = logits.shape[0]
    if multiclass:
        pred = logits.argmax(axis=1)
        own = logits[np.arange(n), pred]
        masked = logits.copy()
        masked[np.arange(n), pred] = -np.inf
        radius = np.maximum(0.0, (own - masked.max(axis=1)) / 2.0)
    else:
        pred = _predict_sign(logits[:, 0])
        radius = np.abs(logits[:, 0])
    if steps > 0 and eps > 0:
        step_size = 2.5 * eps / steps
        found, _, norms, _ = _pgd_batch(net, dataset.points, labels, eps, steps, step_size, restarts, seed)
    else:
        found = np.zeros(n, dtype=bool)
        norms = np.zeros(n)
    rows = []
    for i in range(n):
        row = {"point_id": i, "label": int(labels[i]), "prediction": int(pred[i])}
        if multiclass:
            for k in range(logits.shape[1]):
                row[f"logit_{k}"] = float(logits[i, k])
        else:
            row["logit"] = float(logits[i, 0])
        row["certificate"] = float(radius[i])
        row["pgd_found"] = bool(found[i])
        row["pgd_norm"] = float(norms[i])
        rows.append(row)
    return rows


def write_evaluation_report(rows, path: str) -> None:
    """CSV report with a fixed column order, written atomically."""
    fieldnames = list(rows[0].keys())
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
