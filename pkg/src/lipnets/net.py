"""Feed-forward 1-Lipschitz networks.

A network is a list of dense layers (fan_out x fan_in weights, bias) and
activations (pairwise sorting, or ReLU for the unconstrained baselines). In
constrained mode every dense layer carries an orthogonality or spectral-norm
constraint, re-established by project() after each optimizer step, so the
composed map is 1-Lipschitz at any checkpoint. Gradients are exact reverse
mode, written out by hand; sorting ties use the keep-order subgradient.
"""

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import OddWidthError, ShapeMismatchError
from .linalg import _bjorck_core, power_iteration

__all__ = [
    "ORTHOGONAL",
    "SPECTRAL_NORM",
    "UNCONSTRAINED",
    "CONSTRAINED",
    "DenseLayer",
    "GroupSortLayer",
    "ReluLayer",
    "LipNet",
    "GradientBundle",
    "groupsort2",
    "forward",
    "backward",
    "project",
    "input_gradient_norm",
    "lipschitz_upper_bound",
    "build_mlp",
    "save_checkpoint",
    "load_checkpoint",
    "net_to_dict",
    "net_from_dict",
]

ORTHOGONAL = "orthogonal"
SPECTRAL_NORM = "spectral_norm"
UNCONSTRAINED = "unconstrained"
CONSTRAINED = "constrained"

_CONSTRAINTS = (ORTHOGONAL, SPECTRAL_NORM, UNCONSTRAINED)


@dataclass
class DenseLayer:
    W: np.ndarray  # fan_out x fan_in
    b: np.ndarray  # fan_out
    constraint: str = ORTHOGONAL

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ShapeMismatchError("dense layer needs W (fan_out, fan_in) and b (fan_out,)")
        if self.constraint not in _CONSTRAINTS:
            raise ValueError(f"unknown constraint {self.constraint!r}")

    @property
    def fan_in(self) -> int:
        return self.W.shape[1]

    @property
    def fan_out(self) -> int:
        return self.W.shape[0]


@dataclass
class GroupSortLayer:
    group_size: int = 2

    def __post_init__(self):
        if self.group_size != 2:
            raise ValueError("only group size 2 is supported")


@dataclass
class ReluLayer:
    """ReLU activation; only used by unconstrained baselines."""


@dataclass
class LipNet:
    layers: list
    mode: str = CONSTRAINED

    def __post_init__(self):
        if self.mode not in (CONSTRAINED, UNCONSTRAINED):
            raise ValueError(f"unknown mode {self.mode!r}")
        width = None
        for layer in self.layers:
            if isinstance(layer, DenseLayer):
                if width is not None and layer.fan_in != width:
                    raise ShapeMismatchError(f"layer fan_in {layer.fan_in} does not match incoming width {width}")
                width = layer.fan_out
                if self.mode == CONSTRAINED and layer.constraint == UNCONSTRAINED:
                    raise ValueError("constrained mode requires every dense layer to carry a constraint")
            elif isinstance(layer, GroupSortLayer):
                if width is not None and width % 2 != 0:
                    raise OddWidthError(f"pairwise sorting needs an even width, got {width}")
            elif isinstance(layer, ReluLayer):
                pass
            else:
                raise TypeError(f"unknown layer type {type(layer).__name__}")

    @property
    def in_dim(self) -> int:
        return next(l.fan_in for l in self.layers if isinstance(l, DenseLayer))

    @property
    def out_dim(self) -> int:
        return next(l.fan_out for l in reversed(self.layers) if isinstance(l, DenseLayer))

    @property
    def constrained(self) -> bool:
        return self.mode == CONSTRAINED

    def dense_layers(self):
        return [l for l in self.layers if isinstance(l, DenseLayer)]


@dataclass
class GradientBundle:
    """Parameter and input gradients of a batch-summed scalar objective."""

    dW: list  # one array per dense layer, same shapes as the weights
    db: list
    input_grad: np.ndarray  # (n, in_dim), row i is the gradient at sample i


def groupsort2(x):
    """Sort each consecutive coordinate pair into (min, max).

    Accepts a single vector or a batch of rows; the width must be even.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] % 2 != 0:
        raise OddWidthError(f"pairwise sorting needs an even width, got {x.shape[1]}")
    out = _kernels.groupsort2(x)
    return out[0] if single else out


def _as_batch(net: LipNet, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != net.in_dim:
        raise ShapeMismatchError(f"input width {x.shape[1]} does not match first-layer fan_in {net.in_dim}")
    return x, single


def _forward_trace(net: LipNet, x):
    """Activations entering every layer, plus the final output."""
    h = x
    trace = []
    for layer in net.layers:
        trace.append(h)
        if isinstance(layer, DenseLayer):
            h = h @ layer.W.T + layer.b
        elif isinstance(layer, GroupSortLayer):
            h = groupsort2(h)
        else:
            h = np.maximum(h, 0.0)
    return trace, h


def forward(net: LipNet, x):
    """Apply the layers in order; x is (n, in_dim) or a single vector."""
    xb, single = _as_batch(net, x)
    _, out = _forward_trace(net, xb)
    return out[0] if single else out


def backward(net: LipNet, x, upstream) -> GradientBundle:
    """Exact gradients of sum_i <upstream_i, f(x_i)> for all parameters and inputs."""
    xb, single = _as_batch(net, x)
    g = np.asarray(upstream, dtype=np.float64)
    if single and g.ndim == 1:
        g = g[None, :]
    trace, out = _forward_trace(net, xb)
    if g.shape != out.shape:
        raise ShapeMismatchError(f"upstream shape {g.shape} does not match output shape {out.shape}")

    dW = []
    db = []
    for layer, h_in in zip(reversed(net.layers), reversed(trace)):
        if isinstance(layer, DenseLayer):
            dW.append(g.T @ h_in)
            db.append(g.sum(axis=0))
            g = g @ layer.W
        elif isinstance(layer, GroupSortLayer):
            n, w = h_in.shape
            pairs = h_in.reshape(n, w // 2, 2)
            swap = pairs[:, :, 0] > pairs[:, :, 1]
            gp = g.reshape(n, w // 2, 2).copy()
            gp[swap] = gp[swap][:, ::-1]
            g = gp.reshape(n, w)
        else:
            g = g * (h_in > 0)
    dW.reverse()
    db.reverse()
    return GradientBundle(dW=dW, db=db, input_grad=g)


def input_gradient_norm(net: LipNet, x) -> float:
    """Euclidean norm of the input gradient of a scalar-output network."""
    if net.out_dim != 1:
        raise ShapeMismatchError("input_gradient_norm needs a scalar-output network")
    x = np.asarray(x, dtype=np.float64)
    bundle = backward(net, x[None, :], np.ones((1, 1)))
    return float(np.linalg.norm(bundle.input_grad[0]))


def lipschitz_upper_bound(net: LipNet) -> float:
    """Product of per-layer spectral norms; the activations contribute factor 1."""
    bound = 1.0
    for layer in net.dense_layers():
        bound *= power_iteration(layer.W, max_iters=200, tol=1e-12, min_iters=10).sigma
    return bound


def project(net: LipNet) -> None:
    """Restore every layer constraint in place.

    Orthogonal layers are divided by their spectral norm and orthogonalized;
    spectral-norm layers are divided by their spectral norm (re-checked since
    the estimate can land a hair under the true value); unconstrained layers
    are untouched.
    """
    for layer in net.dense_layers():
        if layer.constraint == UNCONSTRAINED:
            continue
        sigma = power_iteration(layer.W, max_iters=100, tol=1e-9, min_iters=10).sigma
        layer.W = layer.W / sigma
        if layer.constraint == ORTHOGONAL:
            layer.W, _ = _bjorck_core(layer.W, iters=30, tol=1e-7)
        else:
            for _ in range(3):
                sigma = power_iteration(layer.W, max_iters=100, tol=1e-12, min_iters=10).sigma
                if sigma <= 1.0 + 1e-7:
                    break
                layer.W = layer.W / sigma


def build_mlp(
    widths,
    seed: int,
    mode: str = CONSTRAINED,
    activation: str = "groupsort",
    final_constraint: str = SPECTRAL_NORM,
) -> LipNet:
    """Dense stack with the given widths, e.g. (2, 64, 64, 64, 1).

    Weights are iid normal scaled by 1/sqrt(fan_in); constrained nets are
    projected once so training starts on the constraint set. The final dense
    layer is normalized but not orthogonalized by default.
    """
    if len(widths) < 2:
        raise ValueError("need at least input and output widths")
    rng = np.random.default_rng(seed)
    hidden_constraint = ORTHOGONAL if mode == CONSTRAINED else UNCONSTRAINED
    last_constraint = final_constraint if mode == CONSTRAINED else UNCONSTRAINED
    layers = []
    for i in range(len(widths) - 1):
        fan_in, fan_out = widths[i], widths[i + 1]
        W = rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in)
        b = np.zeros(fan_out)
        final = i == len(widths) - 2
        layers.append(DenseLayer(W, b, constraint=last_constraint if final else hidden_constraint))
        if not final:
            if activation == "groupsort":
                if fan_out % 2 != 0:
                    raise OddWidthError(f"hidden width {fan_out} must be even for pairwise sorting")
                layers.append(GroupSortLayer())
            elif activation == "relu":
                layers.append(ReluLayer())
            elif activation != "none":
                raise ValueError(f"unknown activation {activation!r}")
    net = LipNet(layers, mode=mode)
    if mode == CONSTRAINED:
        project(net)
    return net


_KIND_NAMES = {DenseLayer: "dense", GroupSortLayer: "groupsort2", ReluLayer: "relu"}


def net_to_dict(net: LipNet) -> dict:
    layers = []
    for layer in net.layers:
        if isinstance(layer, DenseLayer):
            layers.append(
                {
                    "kind": "dense",
                    "rows": layer.fan_out,
                    "cols": layer.fan_in,
                    "constraint": layer.constraint,
                    "weights": layer.W.reshape(-1).tolist(),
                    "bias": layer.b.tolist(),
                }
            )
        else:
            layers.append({"kind": _KIND_NAMES[type(layer)]})
    return {"mode": net.mode, "layers": layers}


def net_from_dict(d: dict) -> LipNet:
    layers = []
    for entry in d["layers"]:
        kind = entry["kind"]
        if kind == "dense":
            W = np.asarray(entry["weights"], dtype=np.float64).reshape(entry["rows"], entry["cols"])
            layers.append(DenseLayer(W, np.asarray(entry["bias"], dtype=np.float64), constraint=entry["constraint"]))
        elif kind == "groupsort2":
            layers.append(GroupSortLayer())
        elif kind == "relu":
            layers.append(ReluLayer())
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
    return LipNet(layers, mode=d["mode"])


def save_checkpoint(net: LipNet, path: str) -> None:
    """Write the network as JSON, atomically (temp file then rename)."""
    payload = json.dumps(net_to_dict(net))
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> LipNet:
    with open(path) as fh:
        return net_from_dict(json.load(fh))
