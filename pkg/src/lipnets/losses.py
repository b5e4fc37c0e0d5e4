"""Loss family for 1-Lipschitz classifier training.

Every loss returns (value, gradient-w.r.t.-logits) and accepts scalars or
numpy arrays (element-wise over a batch). Binary labels are +1/-1; multiclass
labels are 0-based class indices. Temperature losses are computed by scaling
the logits first, so L_tau(f) and L_1(tau * f) are bit-identical.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BadClassIndexError

__all__ = [
    "LossSpec",
    "bce_tau",
    "cce_tau",
    "hinge_m",
    "wass_loss",
    "hkr",
    "multiclass_hkr",
    "small_tau_limit_check",
]

_LOG2 = float(np.log(2.0))


def _softplus(x):
    # log(1 + e^x) without overflow
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    out = np.empty_like(np.asarray(x, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce_tau(logit, y, tau: float):
    """Temperature binary cross-entropy: softplus(-y * (tau * logit))."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    logit = np.asarray(logit, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    s = y * (tau * logit)
    value = _softplus(-s)
    dlogit = -y * tau * _sigmoid(-s)
    return value, dlogit


def hinge_m(logit, y, m: float):
    """Hinge with margin: max(0, m - y*logit). Subgradient 0 at the kink."""
    if m <= 0:
        raise ValueError("m must be > 0")
    logit = np.asarray(logit, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    gap = m - y * logit
    value = np.maximum(0.0, gap)
    dlogit = np.where(gap > 0, -y, 0.0)
    return value, dlogit


def wass_loss(logit, y):
    """Linear loss -y*logit; its batch mean over (P, Q) is -(mean_P f - mean_Q f)."""
    logit = np.asarray(logit, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return -y * logit, -y * np.ones_like(logit)


def hkr(logit, y, alpha: float, m: float):
    """Wasserstein term plus alpha-weighted hinge; alpha = 0 recovers wass_loss."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    wv, wd = wass_loss(logit, y)
    hv, hd = hinge_m(logit, y, m)
    return wv + alpha * hv, wd + alpha * hd


def _check_class_index(k: int, K: int):
    if not 0 <= k < K:
        raise BadClassIndexError(f"class index {k} outside 0..{K - 1}")


def multiclass_hkr(logits, k: int, alpha: float, m: float):
    """HKR on the margin logits[k] - max over other classes.

    The gradient routes through the single strongest competitor (lowest index
    on ties). K = 2 reduces to the binary hkr on the logit difference.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if m <= 0:
        raise ValueError("m must be > 0")
    logits = np.asarray(logits, dtype=np.float64)
    K = logits.shape[-1]
    if K < 2:
        raise ValueError("need at least 2 classes")
    _check_class_index(k, K)
    others = np.delete(logits, k)
    j = int(np.argmax(others))
    competitor = j if j < k else j + 1
    margin = logits[k] - logits[competitor]
    value = -margin + alpha * max(0.0, m - margin)
    g = -1.0 - (alpha if m - margin > 0 else 0.0)
    dlogits = np.zeros_like(logits)
    dlogits[k] = g
    dlogits[competitor] = -g
    return float(value), dlogits


def cce_tau(logits, k: int, tau: float):
    """Temperature categorical cross-entropy: -log softmax(tau * logits)[k]."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    logits = np.asarray(logits, dtype=np.float64)
    K = logits.shape[-1]
    if K < 2:
        raise ValueError("need at least 2 classes")
    _check_class_index(k, K)
    scaled = tau * logits
    shifted = scaled - np.max(scaled)
    log_z = np.log(np.sum(np.exp(shifted)))
    value = float(log_z - shifted[k])
    probs = np.exp(shifted - log_z)
    dlogits = tau * probs
    dlogits[k] -= tau
    return value, dlogits


def small_tau_limit_check(f_values_P, f_values_Q, tau: float) -> float:
    """Residual of the small-temperature link between BCE and the mean gap.

    Returns (4/tau) * (balanced mean BCE - log 2) + (mean_P f - mean_Q f);
    the caller asserts this vanishes as tau -> 0.
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    fP = np.asarray(f_values_P, dtype=np.float64)
    fQ = np.asarray(f_values_Q, dtype=np.float64)
    bce_P = np.mean(bce_tau(fP, 1.0, tau)[0])
    bce_Q = np.mean(bce_tau(fQ, -1.0, tau)[0])
    mean_bce = 0.5 * (bce_P + bce_Q)
    return float((4.0 / tau) * (mean_bce - _LOG2) + (np.mean(fP) - np.mean(fQ)))


@dataclass(frozen=True)
class LossSpec:
    """Tagged loss choice with its hyper-parameters.

    kind is one of "bce", "cce", "hinge", "wass", "hkr", "multiclass_hkr".
    Binary kinds run on a single-logit net with +1/-1 labels; "cce" and
    "multiclass_hkr" run on K-logit nets with 0-based class labels.
    """

    kind: str
    tau: float = 1.0
    alpha: float = 0.0
    m: float = 1.0

    _KINDS = ("bce", "cce", "hinge", "wass", "hkr", "multiclass_hkr")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind in ("bce", "cce") and self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.kind in ("hinge", "hkr", "multiclass_hkr"):
            if self.m <= 0:
                raise ValueError("m must be > 0")
        if self.kind in ("hkr", "multiclass_hkr") and self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    @property
    def multiclass(self) -> bool:
        return self.kind in ("cce", "multiclass_hkr")

    def batch_value_and_grad(self, logits, labels):
        """Per-sample loss values and d(value)/d(logits) for a whole batch.

        logits: (n, 1) for binary kinds, (n, K) for multiclass kinds.
        """
        logits = np.asarray(logits, dtype=np.float64)
        labels = np.asarray(labels)
        if not self.multiclass:
            z = logits[:, 0]
            y = labels.astype(np.float64)
            if self.kind == "bce":
                v, d = bce_tau(z, y, self.tau)
            elif self.kind == "hinge":
                v, d = hinge_m(z, y, self.m)
            elif self.kind == "wass":
                v, d = wass_loss(z, y)
            else:
                v, d = hkr(z, y, self.alpha, self.m)
            return v, d[:, None]
        ks = labels.astype(np.int64)
        n = logits.shape[0]
        rows = np.arange(n)
        if self.kind == "cce":
            scaled = self.tau * logits
            shifted = scaled - scaled.max(axis=1, keepdims=True)
            log_z = np.log(np.sum(np.exp(shifted), axis=1))
            values = log_z - shifted[rows, ks]
            grads = self.tau * np.exp(shifted - log_z[:, None])
            grads[rows, ks] -= self.tau
            return values, grads
        masked = logits.copy()
        masked[rows, ks] = -np.inf
        competitor = masked.argmax(axis=1)
        margin = logits[rows, ks] - logits[rows, competitor]
        values = -margin + self.alpha * np.maximum(0.0, self.m - margin)
        g = -1.0 - self.alpha * (self.m - margin > 0)
        grads = np.zeros_like(logits)
        grads[rows, ks] = g
        grads[rows, competitor] = -g
        return values, grads

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("bce", "cce"):
            out["tau"] = self.tau
        if self.kind in ("hinge", "hkr", "multiclass_hkr"):
            out["m"] = self.m
        if self.kind in ("hkr", "multiclass_hkr"):
            out["alpha"] = self.alpha
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        known = {"kind", "tau", "alpha", "m"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown loss fields: {sorted(extra)}")
        return cls(**d)
