"""
DCT-II bases used to initialize the channel and spatial transforms.

    B[r, i] = c_r * cos(pi * (2i + 1) * r / (2n)),  c_0 = sqrt(1/n), c_r = sqrt(2/n)

Row r is frequency r, so row 0 is the DC component and B @ B.T = I.
2-D filters are outer products of two rows, listed in JPEG zigzag order.
"""

from typing import List, Tuple

import numpy as np
from cachetools import LRUCache, cached

from rconvmk.errors import ArgumentError

# keyed by n; cached arrays are read-only
_basis_cache = LRUCache(maxsize=64)


@cached(_basis_cache)
def _dct_basis(n: int) -> np.ndarray:
    i = np.arange(n)
    r = i.reshape(-1, 1)
    basis = np.cos(np.pi * (2 * i + 1) * r / (2 * n))
    basis[0] *= np.sqrt(1.0 / n)
    basis[1:] *= np.sqrt(2.0 / n)
    basis.setflags(write=False)
    return basis


def dct_matrix(n: int, dtype=np.float64) -> np.ndarray:
    """Orthonormal n x n DCT-II matrix (a fresh, writable copy)."""
    if n < 1:
        raise ArgumentError(f"dct_matrix needs n >= 1, got {n}")
    return _dct_basis(int(n)).astype(dtype, copy=True)


def zigzag_order(k: int) -> List[Tuple[int, int]]:
    """(row, col) frequency pairs of a k x k grid in zigzag order."""
    cells = [(u, v) for u in range(k) for v in range(k)]
    return sorted(cells, key=lambda uv: (uv[0] + uv[1], uv[0] if (uv[0] + uv[1]) % 2 else -uv[0]))


def dct2_filters(k: int, count: int, dtype=np.float64) -> np.ndarray:
    """
    First ``count`` 2-D DCT-II filters of size k x k in zigzag order.

    Returns:
        Array [count, k, k]; every filter has unit Frobenius norm and distinct
        filters are orthogonal.
    """
    if k < 1:
        raise ArgumentError(f"filter size must be >= 1, got {k}")
    if count < 0 or count > k * k:
        raise ArgumentError(f"a {k}x{k} grid holds {k * k} DCT filters, {count} requested")
    basis = _dct_basis(int(k))
    filters = [np.outer(basis[u], basis[v]) for u, v in zigzag_order(k)[:count]]
    if not filters:
        return np.zeros((0, k, k), dtype=dtype)
    return np.stack(filters).astype(dtype)


def cyclic_dct2_filters(k: int, count: int, dtype=np.float64) -> np.ndarray:
    """
    ``count`` filters of size k x k, cycling through the k*k zigzag-ordered
    DCT filters when more are requested than exist (a 1x1 branch with a >= 2).
    """
    available = dct2_filters(k, k * k, dtype)
    return available[np.arange(count) % (k * k)]
