"""Ground-truth signed distance functions over polygonal decision boundaries.

The boundary is a soup of segments grouped into closed loops. The magnitude of
the signed distance is the exact distance to the nearest segment; the sign
comes from an even-odd crossing-parity test, which for closed polygonal
regions matches the nearer-region definition at a fraction of the cost.
Coordinates live in the unit-square scale; the snowflake experiments use
bbox [-1.2, 1.2]^2.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels

__all__ = [
    "PolylineBoundary",
    "RegionLabeler",
    "MulticlassRegions",
    "koch_snowflake",
    "signed_distance",
    "nearest_boundary_point",
    "multiclass_sdf",
    "sdf_grid_dataset",
    "snowflake_bbox",
    "boundary_to_json",
    "boundary_from_json",
]


@dataclass(frozen=True)
class PolylineBoundary:
    """Closed polygonal loops stored as flat segment-endpoint arrays."""

    ax: np.ndarray
    ay: np.ndarray
    bx: np.ndarray
    by: np.ndarray
    loop_index: np.ndarray  # loop id per segment

    @classmethod
    def from_loops(cls, loops) -> "PolylineBoundary":
        """Build from a list of loops, each a list of [x, y] vertices.

        Each loop is closed implicitly (last vertex connects back to the
        first). Zero-length segments are rejected.
        """
        ax, ay, bx, by, idx = [], [], [], [], []
        for li, loop in enumerate(loops):
            pts = np.asarray(loop, dtype=np.float64)
            if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
                raise ValueError("each loop needs at least 3 [x, y] vertices")
            nxt = np.roll(pts, -1, axis=0)
            if np.any(np.all(pts == nxt, axis=1)):
                raise ValueError("zero-length segment in loop")
            ax.append(pts[:, 0])
            ay.append(pts[:, 1])
            bx.append(nxt[:, 0])
            by.append(nxt[:, 1])
            idx.append(np.full(pts.shape[0], li))
        return cls(
            ax=np.concatenate(ax),
            ay=np.concatenate(ay),
            bx=np.concatenate(bx),
            by=np.concatenate(by),
            loop_index=np.concatenate(idx),
        )

    @property
    def num_segments(self) -> int:
        return self.ax.shape[0]

    def loops(self):
        """Recover the vertex lists, one per loop."""
        out = []
        for li in np.unique(self.loop_index):
            mask = self.loop_index == li
            out.append(np.stack([self.ax[mask], self.ay[mask]], axis=1))
        return out

    def total_length(self) -> float:
        return float(np.sum(np.hypot(self.bx - self.ax, self.by - self.ay)))


@dataclass(frozen=True)
class RegionLabeler:
    """Even-odd parity labeler: odd crossing count is one region, even the other.

    positive_parity selects which of the two gets label +1 (1 = odd = the
    interior of a simple closed loop).
    """

    positive_parity: int = 1

    def labels(self, boundary: PolylineBoundary, points) -> np.ndarray:
        points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        parity = _kernels.crossing_parity(
            np.ascontiguousarray(points[:, 0]),
            np.ascontiguousarray(points[:, 1]),
            boundary.ax,
            boundary.ay,
            boundary.bx,
            boundary.by,
        )
        return np.where(parity == self.positive_parity, 1, -1).astype(np.int64)


def koch_snowflake(iterations: int) -> PolylineBoundary:
    """Snowflake fractal boundary after the given number of refinements.

    Starts from an equilateral triangle inscribed in the unit circle; each
    refinement replaces the middle third of every segment with an outward
    bump, so iteration k has 3 * 4^k segments.
    """
    if not 0 <= iterations <= 8:
        raise ValueError("iterations must be in 0..8")
    angles = np.deg2rad([90.0, 210.0, 330.0])
    pts = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    for _ in range(iterations):
        nxt = np.roll(pts, -1, axis=0)
        a = pts + (nxt - pts) / 3.0
        b = pts + 2.0 * (nxt - pts) / 3.0
        seg = b - a
        # rotate by -60 degrees: outward apex for this counter-clockwise hull
        cos60, sin60 = 0.5, np.sqrt(3.0) / 2.0
        apex = a + np.stack(
            [cos60 * seg[:, 0] + sin60 * seg[:, 1], -sin60 * seg[:, 0] + cos60 * seg[:, 1]],
            axis=1,
        )
        pts = np.stack([pts, a, apex, b], axis=1).reshape(-1, 2)
    return PolylineBoundary.from_loops([pts])


def snowflake_bbox() -> tuple:
    """Bounding box used by the grid experiments: [-1.2, 1.2]^2."""
    return (-1.2, 1.2, -1.2, 1.2)


def _query(boundary: PolylineBoundary, points):
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    dist, nearest = _kernels.polyline_nearest(
        np.ascontiguousarray(points[:, 0]),
        np.ascontiguousarray(points[:, 1]),
        boundary.ax,
        boundary.ay,
        boundary.bx,
        boundary.by,
    )
    return points, dist, nearest


def signed_distance(boundary: PolylineBoundary, labeler: RegionLabeler, x):
    """Signed euclidean distance to the boundary; positive region per labeler.

    Accepts a single [x, y] point (returns a float) or an (N, 2) array.
    Points on the boundary return 0.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    points, dist, _ = _query(boundary, x)
    signs = labeler.labels(boundary, points).astype(np.float64)
    sd = np.where(dist == 0.0, 0.0, signs * dist)
    return float(sd[0]) if single else sd


def nearest_boundary_point(boundary: PolylineBoundary, x):
    """Closest point of the boundary to x (single point or batch)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    _, _, nearest = _query(boundary, x)
    return nearest[0] if single else nearest


@dataclass(frozen=True)
class MulticlassRegions:
    """Partition of the plane into K classes sharing one polygonal boundary.

    classify maps an (N, 2) array to 0-based class indices; it must be
    constant on the connected components cut out by the boundary.
    """

    boundary: PolylineBoundary
    classify: callable
    num_classes: int


def multiclass_sdf(regions: MulticlassRegions, x):
    """Per-class signed distance vector of a region partition.

    Component k is the distance to the shared boundary when x lies strictly
    inside region k, otherwise 0; points on the boundary (the tie set) give
    the all-zero vector. At most one component is nonzero.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    points, dist, _ = _query(boundary=regions.boundary, points=x)
    labels = np.asarray(regions.classify(points), dtype=np.int64)
    out = np.zeros((points.shape[0], regions.num_classes))
    interior = dist > 0.0
    out[np.arange(points.shape[0])[interior], labels[interior]] = dist[interior]
    return out[0] if single else out


def sdf_grid_dataset(boundary: PolylineBoundary, labeler: RegionLabeler, resolution: int, bbox):
    """Uniform grid over bbox with exact signed-distance regression targets.

    bbox is (xmin, xmax, ymin, ymax); returns a LabeledDataset of
    resolution^2 points whose labels are the target signs (sign(0) = +1).
    """
    from .train import LabeledDataset

    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    xmin, xmax, ymin, ymax = bbox
    xs = np.linspace(xmin, xmax, resolution)
    ys = np.linspace(ymin, ymax, resolution)
    gx, gy = np.meshgrid(xs, ys)
    points = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)
    targets = signed_distance(boundary, labeler, points)
    labels = np.where(targets >= 0.0, 1, -1).astype(np.int64)
    return LabeledDataset(points=points, labels=labels, regression_targets=targets)


def boundary_to_json(boundary: PolylineBoundary) -> str:
    """Interchange format: a JSON list of loops, each a list of [x, y]."""
    return json.dumps([loop.tolist() for loop in boundary.loops()])


def boundary_from_json(text: str) -> PolylineBoundary:
    return PolylineBoundary.from_loops(json.loads(text))
