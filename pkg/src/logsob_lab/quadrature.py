"""Quadrature rules on the reference n-simplex."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def simplex_rule(n: int, k: int = 3):
    """Collapsed (Stroud conical-product) Gauss-Jacobi rule on the n-simplex.

    Returns barycentric points of shape (k**n, n+1) and weights summing to 1,
    exact for polynomials of degree 2k-1.
    """
    nodes, weights = [], []
    for i in range(n):
        a = n - 1 - i  # weight (1-u)^a from the collapse Jacobian
        x, w = roots_jacobi(k, a, 0)
        nodes.append(0.5 * (1.0 + x))
        weights.append(w / 2.0 ** (a + 1))
    grids = np.meshgrid(*nodes, indexing="ij")
    wgrid = np.meshgrid(*weights, indexing="ij")
    u = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    # map the unit cube onto the simplex: x_i = u_i * prod_{j<i}(1-u_j)
    pts = np.empty_like(u)
    rest = np.ones(len(u))
    for i in range(n):
        pts[:, i] = u[:, i] * rest
        rest = rest * (1.0 - u[:, i])
    bary = np.column_stack([1.0 - pts.sum(axis=1), pts])
    w = w / w.sum()
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w
