"""Discrete immersed submanifolds and the geometric operators on them.

Two backends share one container:

* ``chart``: a structured parameter grid with an analytic (or finite-difference)
  Jacobian.  Frames, mean curvature and the area element come from the chart.
* ``simplicial``: an n-simplex mesh.  Mean curvature is the cotangent
  Laplacian of the coordinates divided by the barycentric lumped mass.

Both backends also expose a simplicial view (charts are split with the Kuhn
triangulation) which the cell-based quadrature in :mod:`functionals` uses.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .errors import CapacityError, DomainError, UsageError
from .quadrature import simplex_rule

VERTEX_BUDGET = 2_000_000


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class DiscreteSubmanifold:
    """An n-dimensional patch immersed in R^N with per-vertex geometry."""

    def __init__(self, vertices, *, n, backend, weights, frames, H, cells=None,
                 grid_shape=None, periodic=None, jacobian=None, boundary=None,
                 minimal=False, shrinker=False, H_sup=None, truncation=None,
                 name="submanifold", exact_distance=None, mesh_size=None, params=None):
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim != 2:
            raise DomainError("vertices must be a (V, N) array")
        if backend not in ("chart", "simplicial"):
            raise DomainError(f"unknown backend {backend!r}")
        self.n = int(n)
        self.backend = backend
        self.name = name
        self.vertices = _frozen(vertices)
        V = len(vertices)
        self.weights = _frozen(np.asarray(weights, dtype=float).reshape(V))
        self.frames = _frozen(np.asarray(frames, dtype=float).reshape(V, self.n, self.N))
        self.H = _frozen(np.asarray(H, dtype=float).reshape(V, self.N))
        self.cells = None if cells is None else _frozen(np.asarray(cells, dtype=np.int64))
        self.grid_shape = None if grid_shape is None else tuple(int(s) for s in grid_shape)
        self.periodic = None if periodic is None else tuple(bool(p) for p in periodic)
        self.jacobian = None if jacobian is None else _frozen(jacobian)
        if boundary is None:
            boundary = np.zeros(V, dtype=bool)
        self.boundary = _frozen(np.asarray(boundary, dtype=bool))
        self.minimal = bool(minimal)
        self.shrinker = bool(shrinker)
        self.H_sup = float(np.max(np.linalg.norm(self.H, axis=1))) if H_sup is None else float(H_sup)
        self.truncation = truncation
        self.exact_distance = exact_distance
        self.mesh_size = mesh_size
        self.params = params or {}
        if backend == "chart" and self.grid_shape is None:
            raise DomainError("chart backend needs a grid shape")
        if backend == "simplicial" and self.cells is None:
            raise DomainError("simplicial backend needs cells")

    # basic shape -----------------------------------------------------------
    @property
    def N(self):
        return self.vertices.shape[1]

    @property
    def m(self):
        return self.N - self.n

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    def __repr__(self):
        return (f"DiscreteSubmanifold({self.name!r}, n={self.n}, N={self.N}, "
                f"V={self.num_vertices}, backend={self.backend})")

    # masks -----------------------------------------------------------------
    def interior_mask(self, collar: int = 2):
        """Vertices at least ``collar`` cells away from the patch boundary."""
        if self.backend == "simplicial" or collar <= 0:
            return ~self.boundary if collar > 0 else np.ones(self.num_vertices, bool)
        idx = np.indices(self.grid_shape).reshape(self.n, -1)
        keep = np.ones(self.num_vertices, dtype=bool)
        for ax, (s, per) in enumerate(zip(self.grid_shape, self.periodic)):
            if not per:
                keep &= (idx[ax] >= collar) & (idx[ax] <= s - 1 - collar)
        return keep

    # projections -----------------------------------------------------------
    def tangent_part(self, vecs):
        coef = np.einsum("vkN,vN->vk", self.frames, vecs)
        return np.einsum("vk,vkN->vN", coef, self.frames)

    def normal_part(self, vecs):
        return vecs - self.tangent_part(vecs)

    # simplicial view -------------------------------------------------------
    @cached_property
    def simplices(self):
        if self.cells is not None:
            return self.cells
        return _frozen(kuhn_cells(self.grid_shape, self.periodic))

    @cached_property
    def _cell_geometry(self):
        S = self.simplices
        X = self.vertices
        E = np.stack([X[S[:, k + 1]] - X[S[:, 0]] for k in range(self.n)], axis=2)  # (F,N,n)
        gram = np.einsum("fNi,fNj->fij", E, E)
        det = np.linalg.det(gram)
        vol = np.sqrt(np.maximum(det, 0.0)) / math.factorial(self.n)
        G = np.einsum("fNi,fij->fNj", E, np.linalg.inv(gram))
        return _frozen(vol), _frozen(G)

    @property
    def cell_volumes(self):
        return self._cell_geometry[0]

    @property
    def cell_gradient_ops(self):
        return self._cell_geometry[1]

    @cached_property
    def stiffness(self):
        """P1 stiffness matrix K (positive semidefinite); the cotan operator is -K."""
        S = self.simplices
        vol, G = self._cell_geometry
        grads = np.concatenate([-G.sum(axis=2, keepdims=True), G], axis=2)  # (F,N,n+1)
        local = vol[:, None, None] * np.einsum("fNa,fNb->fab", grads, grads)
        rows = np.repeat(S, self.n + 1, axis=1).ravel()
        cols = np.tile(S, (1, self.n + 1)).ravel()
        K = sp.coo_matrix((local.ravel(), (rows, cols)),
                          shape=(self.num_vertices,) * 2).tocsr()
        K.sum_duplicates()
        return K

    @cached_property
    def lumped_mass(self):
        S = self.simplices
        share = np.repeat(self.cell_volumes / (self.n + 1), self.n + 1)
        return _frozen(np.bincount(S.ravel(), weights=share, minlength=self.num_vertices))

    @cached_property
    def voronoi_mass(self):
        """Mixed Voronoi vertex areas for triangle meshes; barycentric lumping otherwise."""
        if self.n != 2:
            return self.lumped_mass
        return _frozen(mixed_voronoi_area(self.vertices, self.simplices))

    @cached_property
    def discrete_H(self):
        """Cotangent Laplacian of the coordinates over the mixed Voronoi area."""
        return _frozen(-(self.stiffness @ self.vertices) / self.voronoi_mass[:, None])

    def cell_points(self, order: int = 3):
        bary, _ = simplex_rule(self.n, order)
        return np.einsum("qk,fkN->fqN", bary, self.vertices[self.simplices])

    def cell_weights(self, order: int = 3):
        _, w = simplex_rule(self.n, order)
        return self.cell_volumes[:, None] * w[None, :]

    def cell_sample(self, values, order: int = 3):
        """Linear interpolation of per-vertex values at the cell quadrature points."""
        bary, _ = simplex_rule(self.n, order)
        values = np.asarray(values, dtype=float)
        return np.einsum("qk,fk...->fq...", bary, values[self.simplices])

    def cell_gradient(self, values):
        """Gradient of the piecewise-linear interpolant on each cell, shape (F, N)."""
        values = np.asarray(values, dtype=float)
        S = self.simplices
        diffs = values[S[:, 1:]] - values[S[:, :1]]
        return np.einsum("fNi,fi->fN", self.cell_gradient_ops, diffs)

    # graph -------------------------------------------------------------------
    @cached_property
    def edge_graph(self):
        """Sparse graph of one-ring edges plus two-ring chords, weighted by length."""
        S = self.simplices
        pairs = [S[:, [a, b]] for a, b in itertools.combinations(range(self.n + 1), 2)]
        e = np.concatenate(pairs)
        V = self.num_vertices
        A = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(V, V)).tocsr()
        A = ((A + A.T) > 0).astype(float)
        A2 = ((A + A @ A) > 0).tocoo()
        keep = A2.row != A2.col
        r, c = A2.row[keep], A2.col[keep]
        length = np.linalg.norm(self.vertices[r] - self.vertices[c], axis=1)
        return sp.csr_matrix((length, (r, c)), shape=(V, V))

    @cached_property
    def _triangle_stencil(self):
        """Planar unfoldings (v; w1, w2) of every cell corner, for distance updates."""
        if self.n != 2:
            return None
        S = self.simplices
        X = self.vertices
        tri = np.concatenate([S[:, [0, 1, 2]], S[:, [1, 2, 0]], S[:, [2, 0, 1]]])
        v, w1, w2 = tri[:, 0], tri[:, 1], tri[:, 2]
        e = X[w2] - X[w1]
        c = np.linalg.norm(e, axis=1)
        e = e / c[:, None]
        r = X[v] - X[w1]
        vx = np.sum(r * e, axis=1)
        vy = -np.linalg.norm(r - vx[:, None] * e, axis=1)
        order = np.argsort(v, kind="stable")
        return v[order], w1[order], w2[order], c[order], vx[order], vy[order]

    def __getstate__(self):
        state = self.__dict__.copy()
        state["exact_distance"] = None
        return state


@dataclass
class ScalarField:
    """Per-vertex real values tied to one submanifold."""
    mesh: Optional[DiscreteSubmanifold]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.mesh is not None and len(self.values) != self.mesh.num_vertices:
            raise UsageError("field length does not match the vertex count")
        if not np.all(np.isfinite(self.values)):
            raise UsageError("field values must be finite")

    def with_values(self, values):
        return ScalarField(self.mesh, values)

    @classmethod
    def unchecked(cls, mesh, values):
        """Build without the finiteness check (distance fields may hold +inf)."""
        obj = cls.__new__(cls)
        obj.mesh, obj.values = mesh, np.asarray(values, dtype=float)
        return obj


@dataclass
class AmbientField:
    """Per-vertex vectors in R^N tied to one submanifold."""
    mesh: Optional[DiscreteSubmanifold]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.mesh is not None and self.values.shape != (self.mesh.num_vertices, self.mesh.N):
            raise UsageError("ambient field shape does not match the submanifold")

    def norm(self):
        return np.linalg.norm(self.values, axis=1)


def _attached(field):
    if getattr(field, "mesh", None) is None:
        raise UsageError("field is not attached to a submanifold")
    return field.mesh


def sample(M: DiscreteSubmanifold, fn: Callable[[np.ndarray], np.ndarray]) -> ScalarField:
    """Evaluate an ambient function at the vertices."""
    return ScalarField(M, fn(M.vertices))


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Measure:
    kind: str = "volume"
    alpha: float = 0.0

    def density(self, points, n):
        if self.kind == "volume":
            return np.ones(points.shape[:-1])
        a = self.alpha
        return (a / math.pi) ** (0.5 * n) * np.exp(-a * np.sum(points * points, axis=-1))

    def log_density(self, points, n):
        if self.kind == "volume":
            return np.zeros(points.shape[:-1])
        a = self.alpha
        return 0.5 * n * math.log(a / math.pi) - a * np.sum(points * points, axis=-1)

    def __str__(self):
        return "volume" if self.kind == "volume" else f"gaussian({self.alpha:g})"


VOLUME = Measure()


def gaussian(alpha: float) -> Measure:
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    return Measure("gaussian", float(alpha))


def as_measure(tag) -> Measure:
    if tag is None:
        return VOLUME
    if isinstance(tag, Measure):
        return tag
    raise UsageError(f"unknown measure tag {tag!r}")


def vertex_weights(M, measure=None):
    return M.weights * as_measure(measure).density(M.vertices, M.n)


def integrate(M, field, weight=None) -> float:
    """Vertex-lumped integral of a field, optionally against dgamma_alpha."""
    values = field.values if isinstance(field, ScalarField) else np.asarray(field, dtype=float)
    if isinstance(field, ScalarField) and field.mesh is not M:
        raise UsageError("field is attached to a different submanifold")
    return float(np.dot(values, vertex_weights(M, weight)))


# ---------------------------------------------------------------------------
# triangulation and frames
# ---------------------------------------------------------------------------

def mixed_voronoi_area(X, F):
    """Vertex areas of a triangle mesh, Voronoi inside non-obtuse triangles."""
    P = [X[F[:, k]] for k in range(3)]
    cots = []
    for k in range(3):
        u, v = P[(k + 1) % 3] - P[k], P[(k + 2) % 3] - P[k]
        uv = np.sum(u * v, axis=1)
        cross = np.sqrt(np.maximum(np.sum(u * u, 1) * np.sum(v * v, 1) - uv * uv, 0.0))
        cots.append(uv / cross)
    area = 0.5 * np.sqrt(np.maximum(
        np.sum((P[1] - P[0]) ** 2, 1) * np.sum((P[2] - P[0]) ** 2, 1)
        - np.sum((P[1] - P[0]) * (P[2] - P[0]), 1) ** 2, 0.0))
    obtuse = np.array([c < 0 for c in cots])
    any_obtuse = obtuse.any(axis=0)
    A = np.zeros(len(X))
    for k in range(3):
        j, l = (k + 1) % 3, (k + 2) % 3
        eij = np.sum((P[j] - P[k]) ** 2, 1)
        eil = np.sum((P[l] - P[k]) ** 2, 1)
        vor = (eij * cots[l] + eil * cots[j]) / 8.0
        val = np.where(any_obtuse, np.where(obtuse[k], 0.5 * area, 0.25 * area), vor)
        np.add.at(A, F[:, k], val)
    return A


def kuhn_cells(shape: Sequence[int], periodic: Sequence[bool]) -> np.ndarray:
    """Split a (possibly periodic) index grid into n! simplices per cube."""
    shape = tuple(shape)
    n = len(shape)
    ranges = [np.arange(s if p else s - 1) for s, p in zip(shape, periodic)]
    corners = np.stack(np.meshgrid(*ranges, indexing="ij"), -1).reshape(-1, n)
    dims = np.asarray(shape)
    out = []
    for perm in itertools.permutations(range(n)):
        cur = corners.copy()
        verts = [np.ravel_multi_index(tuple((cur % dims).T), shape)]
        for ax in perm:
            cur = cur.copy()
            cur[:, ax] += 1
            verts.append(np.ravel_multi_index(tuple((cur % dims).T), shape))
        out.append(np.stack(verts, axis=1))
    return np.concatenate(out)


def _orthonormal_columns(J):
    """Per-vertex orthonormal basis of span(J[:, :, i]); returns frames (V, n, N)."""
    q, _ = np.linalg.qr(J)
    return np.transpose(q, (0, 2, 1))


def _frames_from_normals(normals):
    """Tangent frames orthogonal to the given unit normals (V, N)."""
    _, _, vt = np.linalg.svd(normals[:, None, :], full_matrices=True)
    return vt[:, 1:, :]


def _frames_from_cells(M_vertices, cells, n):
    """Average the cell tangent projectors around each vertex and keep the top n directions."""
    X = M_vertices
    V, N = X.shape
    E = np.stack([X[cells[:, k + 1]] - X[cells[:, 0]] for k in range(n)], axis=2)
    gram = np.einsum("fNi,fNj->fij", E, E)
    vol = np.sqrt(np.maximum(np.linalg.det(gram), 0.0))
    P = np.einsum("fNi,fij,fMj->fNM", E, np.linalg.inv(gram), E)
    acc = np.zeros((V, N, N))
    for k in range(n + 1):
        np.add.at(acc, cells[:, k], vol[:, None, None] * P)
    _, vecs = np.linalg.eigh(acc)
    return np.transpose(vecs[:, :, ::-1][:, :, :n], (0, 2, 1))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def _check_budget(n, count, budget=None):
    budget = VERTEX_BUDGET if budget is None else budget
    if n * count > budget:
        raise CapacityError(f"{count} vertices in dimension {n} exceed the budget {budget}")


def _trapezoid(r, h):
    w = np.full(r, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _grid_boundary(shape, periodic):
    idx = np.indices(shape).reshape(len(shape), -1)
    b = np.zeros(idx.shape[1], dtype=bool)
    for ax, (s, per) in enumerate(zip(shape, periodic)):
        if not per:
            b |= (idx[ax] == 0) | (idx[ax] == s - 1)
    return b


def _euclidean_distance(xs, ys):
    d2 = (np.sum(xs * xs, axis=1)[:, None] + np.sum(ys * ys, axis=1)[None, :]
          - 2.0 * xs @ ys.T)
    return np.sqrt(np.maximum(d2, 0.0))


def make_flat_chart(n: int, m: int, half_width: float, resolution: int, budget=None):
    """Uniform grid on the truncated plane {(x, 0)} in R^(n+m)."""
    if resolution < 3 or resolution % 2 == 0:
        raise DomainError("resolution must be odd and at least 3")
    if n < 1 or m < 0 or not half_width > 0:
        raise DomainError("need n >= 1, m >= 0 and a positive half-width")
    _check_budget(n, resolution ** n, budget)
    N = n + m
    axis = np.linspace(-half_width, half_width, resolution)
    h = axis[1] - axis[0]
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    V = resolution ** n
    X = np.zeros((V, N))
    for k in range(n):
        X[:, k] = grids[k].ravel()
    w1 = _trapezoid(resolution, h)
    w = w1
    for _ in range(n - 1):
        w = np.multiply.outer(w, w1)
    w = w.ravel()
    eye = np.eye(N)[:n]
    frames = np.broadcast_to(eye, (V, n, N))
    jac = np.broadcast_to(eye.T, (V, N, n))
    shape = (resolution,) * n
    periodic = (False,) * n
    return DiscreteSubmanifold(
        X, n=n, backend="chart", weights=w, frames=frames, H=np.zeros((V, N)),
        grid_shape=shape, periodic=periodic, jacobian=jac,
        boundary=_grid_boundary(shape, periodic), minimal=True, shrinker=True,
        H_sup=0.0, truncation=float(half_width), name=f"flat{n}d",
        exact_distance=_euclidean_distance, mesh_size=h,
        params={"n": n, "m": m, "half_width": half_width, "resolution": resolution,
                "spacing": (h,) * n})


def _icosahedron():
    t = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
                  [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
                  [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], dtype=float)
    f = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def icosphere(level: int):
    """Unit icosphere after ``level`` midpoint subdivisions."""
    v, f = _icosahedron()
    for _ in range(level):
        e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(e, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        mid = v[uniq[:, 0]] + v[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        base = len(v)
        F = len(f)
        a, b, c = (base + inv[:F], base + inv[F:2 * F], base + inv[2 * F:])
        v = np.vstack([v, mid])
        f = np.concatenate([
            np.stack([f[:, 0], a, c], 1), np.stack([f[:, 1], b, a], 1),
            np.stack([f[:, 2], c, b], 1), np.stack([a, b, c], 1)])
    return v, f


def _sphere_distance(radius):
    def dist(xs, ys):
        cos = np.clip(xs @ ys.T / radius ** 2, -1.0, 1.0)
        return radius * np.arccos(cos)
    return dist


def _simplicial_surface(X, cells, n, normals=None, **kw):
    """Assemble a simplicial submanifold: cotan H, lumped weights, frames."""
    tmp = DiscreteSubmanifold(X, n=n, backend="simplicial", weights=np.ones(len(X)),
                              frames=np.zeros((len(X), n, X.shape[1])),
                              H=np.zeros_like(X), cells=cells)
    mass = tmp.lumped_mass
    H = tmp.discrete_H
    if normals is not None:
        frames = _frames_from_normals(normals)
    else:
        frames = _frames_from_cells(X, cells, n)
    return DiscreteSubmanifold(X, n=n, backend="simplicial", weights=mass, frames=frames,
                               H=H, cells=cells, **kw)


def make_sphere(n: int, radius: float, resolution: int, budget=None):
    """Round sphere S^n(radius): icosphere (n = 2) or regular polygon (n = 1).

    For n = 2 ``resolution`` is the subdivision level (>= 1); for n = 1 it is
    the number of polygon vertices (>= 8).
    """
    if n not in (1, 2):
        raise DomainError("make_sphere supports n in {1, 2}")
    if not radius > 0:
        raise DomainError("radius must be positive")
    if n == 2:
        if resolution < 1:
            raise DomainError("icosphere level must be at least 1")
        _check_budget(n, 10 * 4 ** resolution + 2, budget)
        v, f = icosphere(resolution)
    else:
        if resolution < 8:
            raise DomainError("polygon needs at least 8 vertices")
        _check_budget(n, resolution, budget)
        th = 2.0 * math.pi * np.arange(resolution) / resolution
        v = np.column_stack([np.cos(th), np.sin(th)])
        f = np.column_stack([np.arange(resolution), (np.arange(resolution) + 1) % resolution])
    X = radius * v
    h = float(np.max(np.linalg.norm(X[f[:, 0]] - X[f[:, 1]], axis=1)))
    return _simplicial_surface(
        X, f, n, normals=v, minimal=False,
        shrinker=abs(radius - math.sqrt(2 * n)) < 1e-12, H_sup=n / radius,
        name=f"sphere{n}d", exact_distance=_sphere_distance(radius), mesh_size=h,
        params={"n": n, "radius": radius, "resolution": resolution})


def make_cylinder_shrinker(k: int, n: int, resolution: int, half_length: float = 6.0,
                           budget=None):
    """Shrinking cylinder S^k(sqrt(2k)) x R^(n-k), truncated in the flat directions.

    Only k = 1 has a chart here; the angular axis has ``resolution`` points and
    each flat axis ``resolution`` points (forced odd).
    """
    if k >= n:
        raise DomainError("need k < n")
    if k != 1:
        raise DomainError("only the circle factor (k = 1) is implemented")
    if resolution < 8:
        raise DomainError("resolution must be at least 8")
    flat = n - k
    rs = resolution if resolution % 2 else resolution + 1
    _check_budget(n, resolution * rs ** flat, budget)
    r = math.sqrt(2.0 * k)
    th = 2.0 * math.pi * np.arange(resolution) / resolution
    s_axis = np.linspace(-half_length, half_length, rs)
    hs = s_axis[1] - s_axis[0]
    grids = np.meshgrid(th, *([s_axis] * flat), indexing="ij")
    T = grids[0].ravel()
    V = T.size
    N = n + 1
    X = np.zeros((V, N))
    X[:, 0] = r * np.cos(T)
    X[:, 1] = r * np.sin(T)
    J = np.zeros((V, N, n))
    J[:, 0, 0] = -r * np.sin(T)
    J[:, 1, 0] = r * np.cos(T)
    for i in range(flat):
        X[:, 2 + i] = grids[1 + i].ravel()
        J[:, 2 + i, 1 + i] = 1.0
    w = np.full(resolution, r * 2.0 * math.pi / resolution)
    for _ in range(flat):
        w = np.multiply.outer(w, _trapezoid(rs, hs))
    H = np.zeros((V, N))
    H[:, :2] = -X[:, :2] * (k / r ** 2)
    shape = (resolution,) + (rs,) * flat
    periodic = (True,) + (False,) * flat

    def dist(xs, ys):
        a = np.arctan2(xs[:, 1], xs[:, 0])[:, None] - np.arctan2(ys[:, 1], ys[:, 0])[None, :]
        a = np.abs((a + math.pi) % (2.0 * math.pi) - math.pi)
        d2 = (r * a) ** 2 + _euclidean_distance(xs[:, 2:], ys[:, 2:]) ** 2
        return np.sqrt(d2)

    return DiscreteSubmanifold(
        X, n=n, backend="chart", weights=w.ravel(), frames=_orthonormal_columns(J), H=H,
        grid_shape=shape, periodic=periodic, jacobian=J,
        boundary=_grid_boundary(shape, periodic), minimal=False, shrinker=True,
        H_sup=k / r, truncation=float(half_length), name=f"cylinder{k}x{flat}",
        exact_distance=dist, mesh_size=max(r * 2 * math.pi / resolution, hs),
        params={"k": k, "n": n, "resolution": resolution, "half_length": half_length,
                "spacing": (2 * math.pi / resolution,) + (hs,) * flat})


def catenoid_area(truncation: float, c: float = 1.0) -> float:
    """Area of the catenoid patch |v| <= truncation."""
    T = truncation
    return 2.0 * math.pi * c * (T + 0.5 * c * math.sinh(2.0 * T / c))


def make_catenoid(resolution: int, truncation: float = 3.0, c: float = 1.0,
                  axial_resolution: Optional[int] = None, budget=None):
    """Catenoid (c cosh(v/c) cos th, c cosh(v/c) sin th, v), |v| <= truncation."""
    if resolution < 8:
        raise DomainError("resolution must be at least 8")
    nv = axial_resolution or resolution
    nv = nv if nv % 2 else nv + 1
    _check_budget(2, resolution * nv, budget)
    th = 2.0 * math.pi * np.arange(resolution) / resolution
    v = np.linspace(-truncation, truncation, nv)
    hv = v[1] - v[0]
    T, Vv = (g.ravel() for g in np.meshgrid(th, v, indexing="ij"))
    ch, sh = np.cosh(Vv / c), np.sinh(Vv / c)
    X = np.column_stack([c * ch * np.cos(T), c * ch * np.sin(T), Vv])
    J = np.zeros((len(T), 3, 2))
    J[:, 0, 0] = -c * ch * np.sin(T)
    J[:, 1, 0] = c * ch * np.cos(T)
    J[:, 0, 1] = sh * np.cos(T)
    J[:, 1, 1] = sh * np.sin(T)
    J[:, 2, 1] = 1.0
    w = np.multiply.outer(np.full(resolution, 2.0 * math.pi / resolution),
                          _trapezoid(nv, hv)).ravel() * c * ch ** 2
    shape = (resolution, nv)
    periodic = (True, False)
    return DiscreteSubmanifold(
        X, n=2, backend="chart", weights=w, frames=_orthonormal_columns(J),
        H=np.zeros_like(X), grid_shape=shape, periodic=periodic, jacobian=J,
        boundary=_grid_boundary(shape, periodic), minimal=True, shrinker=False,
        H_sup=0.0, truncation=float(truncation), name="catenoid",
        mesh_size=float(max(c * math.cosh(truncation / c) * 2 * math.pi / resolution,
                            math.cosh(truncation / c) * hv)),
        params={"resolution": resolution, "truncation": truncation, "c": c,
                "spacing": (2 * math.pi / resolution, hv)})


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------

def _axis_derivative(arr, axis, h, periodic):
    """Fourth-order central difference along one grid axis (second order near edges)."""
    r = arr.shape[axis]
    if periodic:
        def sh(k):
            return np.roll(arr, -k, axis=axis)
        if r >= 5:
            return (-sh(2) + 8.0 * sh(1) - 8.0 * sh(-1) + sh(-2)) / (12.0 * h)
        return (sh(1) - sh(-1)) / (2.0 * h)
    out = np.gradient(arr, h, axis=axis, edge_order=2 if r >= 3 else 1)
    if r >= 5:
        def part(lo, hi):
            idx = [slice(None)] * arr.ndim
            idx[axis] = slice(lo, hi)
            return tuple(idx)
        out[part(2, r - 2)] = (-arr[part(4, r)] + 8.0 * arr[part(3, r - 1)]
                               - 8.0 * arr[part(1, r - 3)] + arr[part(0, r - 4)]) / (12.0 * h)
    return out


def _param_derivatives(M, values):
    """d values / d u_i on a chart grid; returns shape (V, n, ...)."""
    spacing = M.params.get("spacing", (1.0,) * M.n)
    tail = values.shape[1:]
    arr = values.reshape(M.grid_shape + tail)
    out = [
        _axis_derivative(arr, ax, spacing[ax], M.periodic[ax]).reshape((M.num_vertices,) + tail)
        for ax in range(M.n)
    ]
    return np.stack(out, axis=1)


def _chart_jacobian(M):
    if M.jacobian is not None:
        return M.jacobian
    return np.transpose(_param_derivatives(M, M.vertices), (0, 2, 1))


def surface_gradient(field: ScalarField) -> AmbientField:
    """Tangential gradient at each vertex."""
    M = _attached(field)
    f = field.values
    if M.backend == "chart":
        J = _chart_jacobian(M)
        df = _param_derivatives(M, f)
        g = np.einsum("vNi,vNj->vij", J, J)
        coef = np.linalg.solve(g, df[..., None])[..., 0]
        return AmbientField(M, np.einsum("vNi,vi->vN", J, coef))
    grads = M.cell_gradient(f)
    vol = M.cell_volumes
    acc = np.zeros((M.num_vertices, M.N))
    for k in range(M.n + 1):
        np.add.at(acc, M.simplices[:, k], vol[:, None] * grads)
    tot = np.bincount(M.simplices.ravel(), weights=np.repeat(vol, M.n + 1),
                      minlength=M.num_vertices)
    return AmbientField(M, M.tangent_part(acc / tot[:, None]))


def laplacian(field: ScalarField) -> ScalarField:
    """Laplace-Beltrami operator: divergence form on charts, cotan over lumped mass on meshes."""
    M = _attached(field)
    f = field.values
    if M.backend == "simplicial":
        return ScalarField(M, -(M.stiffness @ f) / M.lumped_mass)
    J = _chart_jacobian(M)
    g = np.einsum("vNi,vNj->vij", J, J)
    sq = np.sqrt(np.linalg.det(g))
    ginv = np.linalg.inv(g)
    df = _param_derivatives(M, f)
    flux = sq[:, None] * np.einsum("vij,vj->vi", ginv, df)
    div = np.zeros(M.num_vertices)
    spacing = M.params.get("spacing", (1.0,) * M.n)
    for ax in range(M.n):
        arr = flux[:, ax].reshape(M.grid_shape)
        div += _axis_derivative(arr, ax, spacing[ax], M.periodic[ax]).ravel()
    return ScalarField(M, div / sq)


def split_position(M: DiscreteSubmanifold):
    """Tangential and normal parts of the position vector."""
    xT = M.tangent_part(M.vertices)
    return AmbientField(M, xT), AmbientField(M, M.vertices - xT)


def shrinker_residual(M: DiscreteSubmanifold, use_discrete=False):
    """|H + x_perp / 2| per vertex."""
    H = M.discrete_H if use_discrete else M.H
    _, xp = split_position(M)
    return np.linalg.norm(H + 0.5 * xp.values, axis=1)


# ---------------------------------------------------------------------------
# geodesic distance
# ---------------------------------------------------------------------------

def _relax(M, D, max_sweeps, tol):
    """Jacobi sweeps with chord and planar virtual-source updates, in place on D (S, V)."""
    G = M.edge_graph.tocoo()
    order = np.argsort(G.row, kind="stable")
    er, ec, el = G.row[order], G.col[order], G.data[order]
    estarts = np.flatnonzero(np.r_[True, er[1:] != er[:-1]])
    etarget = er[estarts]
    tri = M._triangle_stencil
    if tri is not None:
        tv, tw1, tw2, tc, tvx, tvy = tri
        tstarts = np.flatnonzero(np.r_[True, tv[1:] != tv[:-1]])
        ttarget = tv[tstarts]
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        for sweep in range(max_sweeps):
            old = D.copy()
            cand = D[:, ec] + el
            best = np.minimum.reduceat(cand, estarts, axis=1)
            D[:, etarget] = np.minimum(D[:, etarget], best)
            if tri is not None:
                d1, d2 = D[:, tw1], D[:, tw2]
                sx = (d1 * d1 - d2 * d2 + tc * tc) / (2.0 * tc)
                sy = np.sqrt(d1 * d1 - sx * sx)
                cross = sx + (tvx - sx) * (sy / (sy - tvy))
                ok = np.isfinite(sy) & (cross >= 0.0) & (cross <= tc)
                val = np.where(ok, np.hypot(sx - tvx, sy - tvy), np.inf)
                best = np.minimum.reduceat(val, tstarts, axis=1)
                D[:, ttarget] = np.minimum(D[:, ttarget], best)
            fin = np.isfinite(old)
            change = np.max(np.abs(old[fin] - D[fin])) if fin.any() else 0.0
            if change <= tol:
                return sweep + 1
    return max_sweeps


def geodesic_distance(M: DiscreteSubmanifold, sources, max_sweeps=400, tol=1e-12) -> ScalarField:
    """Distance to the nearest source vertex.

    Dijkstra on the one-ring edges plus two-ring chords, then Bellman-Ford style
    Jacobi sweeps that add planar virtual-source updates across each triangle.
    Unreachable vertices get +inf (so the result is returned as a raw array
    inside the field when that happens).
    """
    src = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    if src.size == 0:
        raise UsageError("source set must be non-empty")
    D = dijkstra(M.edge_graph, directed=False, indices=src, min_only=True)[None, :]
    D = np.array(D, dtype=float)
    D[0, src] = 0.0
    _relax(M, D, max_sweeps, tol)
    return ScalarField.unchecked(M, D[0])


def distance_matrix(M: DiscreteSubmanifold, rows=None, metric="auto", chunk=256,
                    max_sweeps=400, tol=1e-12):
    """Distances from ``rows`` (default all vertices) to every vertex.

    ``metric='exact'`` uses the generator's closed-form geodesic distance,
    ``'graph'`` the corrected graph distance, ``'auto'`` the former when available.
    """
    rows = np.arange(M.num_vertices) if rows is None else np.asarray(rows)
    use_exact = metric == "exact" or (metric == "auto" and M.exact_distance is not None)
    if use_exact:
        if M.exact_distance is None:
            raise UsageError(f"{M.name} has no closed-form distance")
        return M.exact_distance(M.vertices[rows], M.vertices)
    out = np.empty((len(rows), M.num_vertices))
    for s in range(0, len(rows), chunk):
        idx = rows[s:s + chunk]
        D = dijkstra(M.edge_graph, directed=False, indices=idx)
        _relax(M, D, max_sweeps, tol)
        out[s:s + chunk] = D
    return out


def volume_growth(M: DiscreteSubmanifold, radii):
    """vol(B_r cap patch) / r^n for each radius (ambient balls about the origin)."""
    r = np.linalg.norm(M.vertices, axis=1)
    return np.array([M.weights[r <= R].sum() / R ** M.n for R in radii])


# ---------------------------------------------------------------------------
# SUBMESH v1 text format
# ---------------------------------------------------------------------------

def write_submesh(M: DiscreteSubmanifold, path, blocks=("WEIGHTS", "H", "FRAMES")):
    num_cells = 1 if M.backend == "chart" else len(M.cells)
    lines = [f"SUBMESH 1 {M.n} {M.N} {M.num_vertices} {num_cells} {M.backend}"]
    lines += [" ".join(repr(float(c)) for c in row) for row in M.vertices]
    if M.backend == "chart":
        lines.append(" ".join(f"{s}p" if p else str(s)
                              for s, p in zip(M.grid_shape, M.periodic)))
    else:
        lines += [" ".join(str(int(i)) for i in c) for c in M.cells]
    data = {"WEIGHTS": M.weights[:, None], "H": M.H,
            "FRAMES": M.frames.reshape(M.num_vertices, -1)}
    for name in blocks:
        lines.append(name)
        lines += [" ".join(repr(float(c)) for c in row) for row in data[name]]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_submesh(path) -> DiscreteSubmanifold:
    """Load a SUBMESH v1 file; missing geometry blocks are recomputed."""
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    head = raw[0].split()
    if len(head) != 7 or head[0] != "SUBMESH" or head[1] != "1":
        raise DomainError(f"{path}: not a SUBMESH v1 header: {raw[0]!r}")
    n, N, nv, nc = (int(x) for x in head[2:6])
    backend = head[6]
    pos = 1
    X = np.array([[float(c) for c in raw[pos + i].split()] for i in range(nv)])
    pos += nv
    cells = shape = periodic = None
    if backend == "chart":
        toks = raw[pos].split()
        shape = tuple(int(t.rstrip("p")) for t in toks)
        periodic = tuple(t.endswith("p") for t in toks)
        pos += 1
    else:
        cells = np.array([[int(c) for c in raw[pos + i].split()] for i in range(nc)])
        pos += nc
    blocks = {}
    while pos < len(raw):
        name = raw[pos]
        rows = np.array([[float(c) for c in raw[pos + 1 + i].split()] for i in range(nv)])
        blocks[name] = rows
        pos += 1 + nv
    if backend == "simplicial":
        M = _simplicial_surface(X, cells, n, name="loaded")
        if not blocks:
            return M
        return DiscreteSubmanifold(
            X, n=n, backend="simplicial",
            weights=blocks.get("WEIGHTS", M.weights[:, None])[:, 0],
            frames=blocks.get("FRAMES", M.frames.reshape(nv, -1)).reshape(nv, n, N),
            H=blocks.get("H", M.H), cells=cells, name="loaded")
    tmp = DiscreteSubmanifold(X, n=n, backend="chart", weights=np.ones(nv),
                              frames=np.zeros((nv, n, N)), H=np.zeros_like(X),
                              grid_shape=shape, periodic=periodic)
    J = _chart_jacobian(tmp)
    g = np.einsum("vNi,vNj->vij", J, J)
    w = np.sqrt(np.linalg.det(g))
    idx = np.indices(shape).reshape(n, -1)
    for ax, (s, per) in enumerate(zip(shape, periodic)):
        if not per:
            w = w * np.where((idx[ax] == 0) | (idx[ax] == s - 1), 0.5, 1.0)
    frames = blocks["FRAMES"].reshape(nv, n, N) if "FRAMES" in blocks else _orthonormal_columns(J)
    H = blocks["H"] if "H" in blocks else tmp.discrete_H
    return DiscreteSubmanifold(
        X, n=n, backend="chart", weights=blocks["WEIGHTS"][:, 0] if "WEIGHTS" in blocks else w,
        frames=frames, H=H, grid_shape=shape, periodic=periodic, jacobian=J,
        boundary=_grid_boundary(shape, periodic), name="loaded")
