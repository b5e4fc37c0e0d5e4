"""Pure-numpy implementations of the hot kernels.

Same signatures and same results as the compiled extension; used whenever the
extension is unavailable or LIPNETS_FORCE_FALLBACK is set.
"""

import numpy as np

# Points per block when broadcasting against all segments, to bound memory.
_BLOCK = 4096


def polyline_nearest(px, py, ax, ay, bx, by):
    """Distance from each query point to the nearest point of a segment soup.

    px, py: (N,) query coordinates. ax..by: (M,) segment endpoints.
    Returns (dist (N,), nearest (N, 2)).
    """
    n = px.shape[0]
    dist = np.empty(n)
    nearest = np.empty((n, 2))
    dx = bx - ax
    dy = by - ay
    seg_len2 = dx * dx + dy * dy  # no zero-length segments by construction
    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        rx = px[lo:hi, None] - ax[None, :]
        ry = py[lo:hi, None] - ay[None, :]
        t = (rx * dx[None, :] + ry * dy[None, :]) / seg_len2[None, :]
        np.clip(t, 0.0, 1.0, out=t)
        cx = ax[None, :] + t * dx[None, :]
        cy = ay[None, :] + t * dy[None, :]
        d2 = (px[lo:hi, None] - cx) ** 2 + (py[lo:hi, None] - cy) ** 2
        j = np.argmin(d2, axis=1)
        rows = np.arange(hi - lo)
        dist[lo:hi] = np.sqrt(d2[rows, j])
        nearest[lo:hi, 0] = cx[rows, j]
        nearest[lo:hi, 1] = cy[rows, j]
    return dist, nearest


def crossing_parity(px, py, ax, ay, bx, by):
    """Parity of crossings of a rightward ray from each point with the segments.

    Half-open rule on the y-interval so shared loop vertices count once.
    Returns (N,) uint8, 1 = odd (inside by the even-odd rule).
    """
    n = px.shape[0]
    out = np.empty(n, dtype=np.uint8)
    dy = by - ay
    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        p_y = py[lo:hi, None]
        straddles = (ay[None, :] > p_y) != (by[None, :] > p_y)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (p_y - ay[None, :]) / dy[None, :]
            x_hit = ax[None, :] + t * (bx - ax)[None, :]
        crosses = straddles & (x_hit > px[lo:hi, None])
        out[lo:hi] = (crosses.sum(axis=1) % 2).astype(np.uint8)
    return out


def groupsort2(x):
    """Sort each consecutive coordinate pair of every row into (min, max)."""
    n, w = x.shape
    pairs = x.reshape(n, w // 2, 2)
    lo = np.minimum(pairs[:, :, 0], pairs[:, :, 1])
    hi = np.maximum(pairs[:, :, 0], pairs[:, :, 1])
    return np.stack([lo, hi], axis=2).reshape(n, w)
