"""Banded (Sakoe-Chiba) dynamic time warping with absolute-difference local cost."""
from __future__ import annotations

import numba as nb
import numpy as np

from .errors import EmptySeries, Infeasible


@nb.njit(cache=True, nogil=True)
def _banded(a, b, w):
    n, m = a.shape[0], b.shape[0]
    width = 2 * w + 1
    inf = np.inf
    prev_c = np.full(width, inf)
    prev_l = np.zeros(width, dtype=np.int64)
    cur_c = np.full(width, inf)
    cur_l = np.zeros(width, dtype=np.int64)
    # cell (i, j) lives at column j - i + w of row i
    for i in range(n):
        for k in range(width):
            cur_c[k] = inf
            cur_l[k] = 0
        j_lo = max(0, i - w)
        j_hi = min(m - 1, i + w)
        for j in range(j_lo, j_hi + 1):
            k = j - i + w
            d = abs(a[i] - b[j])
            if i == 0 and j == 0:
                cur_c[k] = d
                cur_l[k] = 1
                continue
            best = inf
            blen = 0
            if i > 0 and j > 0 and prev_c[k] < best:  # diagonal (i-1, j-1)
                best = prev_c[k]
                blen = prev_l[k]
            if i > 0 and k + 1 < width and prev_c[k + 1] < best:  # (i-1, j)
                best = prev_c[k + 1]
                blen = prev_l[k + 1]
            if j > 0 and k - 1 >= 0 and cur_c[k - 1] < best:  # (i, j-1)
                best = cur_c[k - 1]
                blen = cur_l[k - 1]
            cur_c[k] = best + d
            cur_l[k] = blen + 1
        prev_c, cur_c = cur_c, prev_c
        prev_l, cur_l = cur_l, prev_l
    k_end = (m - 1) - (n - 1) + w
    return prev_c[k_end], prev_l[k_end]


def dtw_cost(a, b, band_samples: int) -> tuple[float, int]:
    """Minimal cumulative cost and the length of the path achieving it.

    Among equal-cost predecessors the diagonal step wins, then the step that
    advances ``a`` only, then the one advancing ``b`` only.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySeries("DTW needs two non-empty sequences")
    band_samples = int(band_samples)
    if band_samples < abs(a.size - b.size):
        raise Infeasible(f"band of {band_samples} samples cannot bridge lengths "
                         f"{a.size} and {b.size}")
    cost, length = _banded(a, b, band_samples)
    return float(cost), int(length)


def dtw_distance(a, b, band_samples: int, normalize_by_length: bool = True) -> float:
    cost, length = dtw_cost(a, b, band_samples)
    return cost / length if normalize_by_length else cost
