"""Exact Wasserstein-1 oracles and the dual estimate used to audit training.

Two independent ground-truth routes: the 1D piecewise-constant CDF integral,
and a minimum-cost perfect matching (shortest-augmenting-path Hungarian) for
small uniform point clouds in any dimension. Each audits the other on 1D
inputs. The solver side is deliberately capped at 64 atoms: it exists for
verification, not production transport.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import UnconstrainedNetError, UnsupportedWeightsError

__all__ = [
    "DiscreteDist",
    "w1_exact_1d",
    "w1_exact_assignment",
    "kr_dual_estimate",
    "pathological_diracs",
    "best_threshold_accuracy",
    "packing_bounds",
    "dist_pair_to_json",
    "dist_pair_from_json",
]


@dataclass(frozen=True)
class DiscreteDist:
    """Finite atoms with nonnegative weights summing to 1."""

    atoms: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,)

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=np.float64))
        weights = np.asarray(self.weights, dtype=np.float64)
        if atoms.shape[0] != weights.shape[0]:
            raise ValueError("atoms and weights must have the same length")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, atoms) -> "DiscreteDist":
        atoms = np.atleast_2d(np.asarray(atoms, dtype=np.float64))
        n = atoms.shape[0]
        return cls(atoms=atoms, weights=np.full(n, 1.0 / n))

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]


def w1_exact_1d(P: DiscreteDist, Q: DiscreteDist) -> float:
    """Exact W1 on the line: integral of |F_P - F_Q| over the merged support."""
    if P.dim != 1 or Q.dim != 1:
        raise ValueError("atoms must be scalars")
    xs = np.concatenate([P.atoms[:, 0], Q.atoms[:, 0]])
    order = np.argsort(xs, kind="stable")
    xs = xs[order]
    deltas = np.concatenate([P.weights, -Q.weights])[order]
    cdf_gap = np.cumsum(deltas)[:-1]
    return float(np.sum(np.abs(cdf_gap) * np.diff(xs)))


def _hungarian(cost: np.ndarray) -> np.ndarray:
    """Shortest-augmenting-path assignment on a square cost matrix.

    Returns col_of_row. O(N^3); the classic dual-potential formulation with a
    virtual zero row/column at index 0.
    """
    n = cost.shape[0]
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    way = np.zeros(n + 1, dtype=np.int64)
    match = np.zeros(n + 1, dtype=np.int64)  # row matched to column j (1-based)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = INF
            j1 = -1
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    col_of_row = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[match[j] - 1] = j - 1
    return col_of_row


def w1_exact_assignment(P: DiscreteDist, Q: DiscreteDist) -> float:
    """Exact W1 between small uniform clouds via minimum-cost perfect matching.

    Restricted to equal atom counts N <= 64 with uniform weights; this solver
    exists to audit the other oracles and the trained dual potentials.
    """
    n = P.atoms.shape[0]
    if Q.atoms.shape[0] != n:
        raise UnsupportedWeightsError("equal atom counts required")
    if n > 64:
        raise UnsupportedWeightsError("assignment oracle capped at 64 atoms")
    uniform = np.full(n, 1.0 / n)
    if not (np.allclose(P.weights, uniform, atol=1e-12) and np.allclose(Q.weights, uniform, atol=1e-12)):
        raise UnsupportedWeightsError("uniform weights 1/N required")
    if P.dim != Q.dim:
        raise ValueError("dimension mismatch")
    diff = P.atoms[:, None, :] - Q.atoms[None, :, :]
    cost = np.sqrt(np.sum(diff * diff, axis=2))
    col_of_row = _hungarian(cost)
    return float(cost[np.arange(n), col_of_row].sum() / n)


def kr_dual_estimate(net, P: DiscreteDist, Q: DiscreteDist) -> float:
    """Dual transport objective of a constrained potential: E_P f - E_Q f."""
    from .net import forward

    if not net.constrained:
        raise UnconstrainedNetError("the dual estimate needs a Lipschitz-constrained potential")
    if net.out_dim != 1:
        raise ValueError("potential must have scalar output")
    fP = forward(net, P.atoms)[:, 0]
    fQ = forward(net, Q.atoms)[:, 0]
    return float(np.dot(P.weights, fP) - np.dot(Q.weights, fQ))


def pathological_diracs(n: int):
    """Interleaved Dirac combs where a near-optimal potential is a weak classifier.

    P sits at 4(i-1) and Q at 4i-1 for i = 1..n: every P atom is 3 left of its
    matched Q atom, and W1(P, Q) = 3 for every n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    i = np.arange(1, n + 1, dtype=np.float64)
    P = DiscreteDist.uniform((4.0 * (i - 1.0))[:, None])
    Q = DiscreteDist.uniform((4.0 * i - 1.0)[:, None])
    return P, Q


def best_threshold_accuracy(f_values_P, f_values_Q):
    """Best accuracy of sign(f - T) over all thresholds, predicting +1 iff f > T.

    Scans midpoints of the sorted merged values plus one threshold on each
    side; ties break toward the smaller T. Returns (T, accuracy).
    """
    fP = np.asarray(f_values_P, dtype=np.float64)
    fQ = np.asarray(f_values_Q, dtype=np.float64)
    if fP.size == 0 or fQ.size == 0:
        raise ValueError("both value lists must be nonempty")
    merged = np.sort(np.concatenate([fP, fQ]))
    mids = (merged[:-1] + merged[1:]) / 2.0
    candidates = np.concatenate([[merged[0] - 1.0], mids, [merged[-1] + 1.0]])
    total = fP.size + fQ.size
    best_T = candidates[0]
    best_acc = -1.0
    for T in candidates:
        acc = (np.count_nonzero(fP > T) + np.count_nonzero(fQ <= T)) / total
        if acc > best_acc:
            best_acc = acc
            best_T = T
    return float(best_T), float(best_acc)


def packing_bounds(m: float, n: int, vol_X: float, vol_unit_ball: float):
    """Disjoint-ball packing bounds: ((1/m)^n, (3/m)^n) times vol(X)/vol(ball)."""
    if m <= 0:
        raise ValueError("m must be > 0")
    if vol_X <= 0 or vol_unit_ball <= 0:
        raise ValueError("volumes must be > 0")
    ratio = vol_X / vol_unit_ball
    return ((1.0 / m) ** n * ratio, (3.0 / m) ** n * ratio)


def dist_pair_to_json(P: DiscreteDist, Q: DiscreteDist) -> str:
    return json.dumps(
        {
            "P": {"atoms": P.atoms.tolist(), "weights": P.weights.tolist()},
            "Q": {"atoms": Q.atoms.tolist(), "weights": Q.weights.tolist()},
        }
    )


def dist_pair_from_json(text: str):
    d = json.loads(text)
    P = DiscreteDist(np.asarray(d["P"]["atoms"]), np.asarray(d["P"]["weights"]))
    Q = DiscreteDist(np.asarray(d["Q"]["atoms"]), np.asarray(d["Q"]["weights"]))
    return P, Q
