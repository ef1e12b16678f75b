"""Hopf-Lax inf-convolution on discrete submanifolds and hypercontractivity checks.

Q_t u(x) = min over vertices y of u(y) + d(x, y)^2 / (2t).  On flat charts the
squared distance splits over the grid axes, so the minimum is computed one
axis at a time (exact, and O(r^(n+1)) instead of O(r^(2n))).  Elsewhere a dense
distance matrix is built in row chunks.

Norms are taken in log-sum-exp form with the lumped vertex weights.
"""
from __future__ import annotations

import csv
import io
import math
import weakref
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, UsageError
from .fields import FieldSpec
from .geometry import (DiscreteSubmanifold, ScalarField, _euclidean_distance, distance_matrix,
                       as_measure, gaussian, make_flat_chart, surface_gradient)

WELL_POSED_MARGIN = 0.05
RATIO_TOL = 1e-3
MONOTONE_TOL = 1e-8
_CORE_FRACTION = 0.4
_SEPARABLE_BLOCK = 4_000_000
_CACHE_LIMIT = 4096
_DIST_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


# ---------------------------------------------------------------------------
# the semigroup
# ---------------------------------------------------------------------------

@dataclass
class HopfLaxTable:
    mesh: DiscreteSubmanifold
    times: np.ndarray           # times[0] == 0
    values: np.ndarray          # (T, V); values[0] is u itself
    u: ScalarField
    policy: str                 # "separable" or "dense"
    ill_posed: np.ndarray       # (T,) bool

    def at(self, k: int) -> ScalarField:
        return ScalarField.unchecked(self.mesh, self.values[k])

    @property
    def any_ill_posed(self):
        return bool(np.any(self.ill_posed))


def check_well_posed(beta: float, t: float, margin: float = WELL_POSED_MARGIN):
    """Guard for concave quadratics C - beta |x - x0|^2: need beta < (1 - margin) / (2t)."""
    if beta >= (1.0 - margin) / (2.0 * t):
        raise DomainError(f"concave quadratic with beta={beta:g} is ill-posed at t={t:g} "
                          f"(need beta < {(1.0 - margin) / (2.0 * t):g})")


def _is_flat_grid(M):
    return M.backend == "chart" and M.exact_distance is _euclidean_distance


def _time_grid(times):
    t = np.atleast_1d(np.asarray(times, dtype=float))
    t = t[t != 0.0] if t.size and t[0] == 0.0 else t
    if t.size == 0:
        raise DomainError("need at least one positive time")
    if np.any(t <= 0) or not np.all(np.isfinite(t)):
        raise DomainError("times must be positive and finite")
    if np.any(np.diff(t) <= 0):
        raise DomainError("times must be strictly increasing")
    return np.concatenate([[0.0], t])


def _core(M):
    """Vertices well inside the patch, where a boundary minimizer signals ill-posedness."""
    if not np.any(M.boundary):
        return np.zeros(0, dtype=np.int64)
    r = np.linalg.norm(M.vertices, axis=1)
    radius = _CORE_FRACTION * float(np.min(r[M.boundary]))
    return np.flatnonzero((r <= radius) & ~M.boundary)


def _minconv_axis(arr, axis, coords, t):
    """min_j arr[..., j, ...] + (c_i - c_j)^2 / (2t) along one axis."""
    a = np.moveaxis(arr, axis, 0)
    r = a.shape[0]
    flat = a.reshape(r, -1)
    K = (coords[:, None] - coords[None, :]) ** 2 / (2.0 * t)
    out = np.empty_like(flat)
    step = max(1, _SEPARABLE_BLOCK // (r * r))
    for s in range(0, flat.shape[1], step):
        blk = flat[:, s:s + step]
        out[:, s:s + step] = np.min(K[:, :, None] + blk[None, :, :], axis=1)
    return np.moveaxis(out.reshape(a.shape), 0, axis)


def _separable(M, u, times):
    hw = float(M.params["half_width"])
    r = int(M.params["resolution"])
    coords = np.linspace(-hw, hw, r)
    grid = u.reshape(M.grid_shape)
    out = []
    for t in times:
        g = grid
        for ax in range(M.n):
            g = _minconv_axis(g, ax, coords, t)
        out.append(g.ravel())
    return np.array(out)


def _boundary_hits(M, u, Q, times, core):
    """Whether some core vertex has a boundary vertex attaining its minimum."""
    if core.size == 0:
        return np.zeros(len(times), dtype=bool)
    bnd = np.flatnonzero(M.boundary)
    X = M.vertices
    hits = np.zeros(len(times), dtype=bool)
    for s in range(0, core.size, 1024):
        rows = core[s:s + 1024]
        D2 = M.exact_distance(X[rows], X[bnd]) ** 2
        for k, t in enumerate(times):
            bmin = np.min(u[bnd][None, :] + D2 / (2.0 * t), axis=1)
            scale = 1e-12 * (1.0 + np.abs(Q[k, rows]))
            hits[k] |= bool(np.any(bmin <= Q[k, rows] + scale))
    return hits


def _rows_distance(M, rows, metric):
    """Distance rows, reusing a cached full graph matrix on small meshes."""
    exact = metric == "exact" or (metric == "auto" and M.exact_distance is not None)
    if exact or M.num_vertices > _CACHE_LIMIT:
        return distance_matrix(M, rows=rows, metric=metric)
    per_mesh = _DIST_CACHE.setdefault(M, {})
    if "graph" not in per_mesh:
        per_mesh["graph"] = distance_matrix(M, metric="graph")
    return per_mesh["graph"][rows]


def _dense(M, u, times, metric, chunk, core):
    V = M.num_vertices
    Q = np.empty((len(times), V))
    hit = np.zeros(len(times), dtype=bool)
    in_core = np.zeros(V, dtype=bool)
    in_core[core] = True
    for s in range(0, V, chunk):
        rows = np.arange(s, min(V, s + chunk))
        D2 = _rows_distance(M, rows, metric) ** 2
        for k, t in enumerate(times):
            vals = u[None, :] + D2 / (2.0 * t)
            j = np.argmin(vals, axis=1)
            Q[k, rows] = vals[np.arange(len(rows)), j]
            sel = in_core[rows]
            if np.any(sel) and np.any(M.boundary[j[sel]]):
                hit[k] = True
    return Q, hit


def hopf_lax(M: DiscreteSubmanifold, u, times, metric: str = "auto", policy: str = "auto",
             chunk: int = 512) -> HopfLaxTable:
    """Q_t u on every vertex for t in ``times`` (t = 0 is prepended)."""
    u = u if isinstance(u, ScalarField) else ScalarField(M, np.asarray(u, dtype=float))
    if u.mesh is not M:
        raise UsageError("u is attached to a different submanifold")
    uv = np.asarray(u.values, dtype=float)
    if not np.all(np.isfinite(uv)):
        raise DomainError("u must be finite")
    grid = _time_grid(times)
    pos = grid[1:]
    if policy == "auto":
        policy = "separable" if _is_flat_grid(M) and metric in ("auto", "exact") else "dense"
    core = _core(M)
    if policy == "separable":
        if not _is_flat_grid(M):
            raise UsageError("separable policy needs a flat chart")
        Q = _separable(M, uv, pos)
        hit = _boundary_hits(M, uv, Q, pos, core)
    elif policy == "dense":
        Q, hit = _dense(M, uv, pos, metric, chunk, core)
    else:
        raise UsageError(f"unknown policy {policy!r}")
    Q = np.minimum(Q, uv[None, :])  # y = x is always admissible
    values = np.vstack([uv[None, :], Q])
    return HopfLaxTable(M, grid, values, u, policy, np.concatenate([[False], hit]))


def hamilton_jacobi_residual(table: HopfLaxTable, collar: int = 2):
    """Forward difference of Q_t u in t plus |grad Q_t u|^2 / 2 at each grid time.

    Row k uses times k and k+1; row 0 is the t = 0 inequality, which should be
    non-negative up to tolerance, the others non-positive.  Returns
    (residual array (T-1, V), interior mask).
    """
    T = len(table.times)
    if T < 3:
        raise UsageError("need at least two positive times")
    res = np.empty((T - 1, table.mesh.num_vertices))
    for k in range(T - 1):
        dt = table.times[k + 1] - table.times[k]
        g = surface_gradient(table.at(k)).norm()
        res[k] = (table.values[k + 1] - table.values[k]) / dt + 0.5 * g * g
    return res, table.mesh.interior_mask(collar)


def semigroup_gap(M, u, t: float, s: float, **kw):
    """(max violation of Q_t u <= Q_{t-s} Q_s u, max gap on the core) on the vertex set."""
    if not 0 < s < t:
        raise DomainError("need 0 < s < t")
    direct = hopf_lax(M, u, [t], **kw).values[1]
    first = hopf_lax(M, u, [s], **kw).values[1]
    second = hopf_lax(M, ScalarField(M, first), [t - s], **kw).values[1]
    diff = second - direct
    core = _core(M)
    sel = core if core.size else np.arange(M.num_vertices)
    return float(np.max(-diff)), float(np.max(np.abs(diff[sel])))


# ---------------------------------------------------------------------------
# hypercontractivity
# ---------------------------------------------------------------------------

@dataclass
class HypercontractivityReport:
    kind: str
    a: float
    b: Optional[float]
    times: np.ndarray
    q: np.ndarray
    log_F: np.ndarray
    log_bound: np.ndarray
    flags: np.ndarray
    profile_distance: np.ndarray
    ill_posed: bool
    checks: dict = field(default_factory=dict)

    @property
    def F(self):
        return np.exp(self.log_F)

    @property
    def bound(self):
        return np.exp(self.log_bound)

    @property
    def ratio(self):
        return np.exp(self.log_F - self.log_bound)

    @property
    def max_ratio(self):
        return float(np.max(self.ratio))

    def rows(self):
        return [[repr(float(t)), repr(float(q)), repr(float(F)), repr(float(B)), repr(float(r)),
                 int(bool(f))]
                for t, q, F, B, r, f in zip(self.times, self.q, self.F, self.bound,
                                            self.ratio, self.flags)]

    def to_csv(self, fh=None, header=True):
        buf = fh or io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["t", "q_t", "F", "bound", "ratio", "monotone_flag"])
        w.writerows(self.rows())
        return buf.getvalue() if fh is None else None

    def summary(self):
        return {"kind": self.kind, "a": self.a, "b": self.b,
                "max_ratio": self.max_ratio,
                "profile_distance": [float(d) for d in self.profile_distance],
                "ill_posed": self.ill_posed, "checks": self.checks}


def log_exp_norm(M, values, q, measure=None):
    """log of || e^values ||_{L^q(measure)} with lumped weights."""
    lw = np.log(M.weights) + as_measure(measure).log_density(M.vertices, M.n)
    return float(logsumexp(q * np.asarray(values) + lw)) / q


def euclidean_log_bound(n, a, b, t, H_sup=0.0, const=2.0 * math.pi):
    """log of the factor multiplying ||e^u||_{L^a}; ``const`` is 2*pi in the sharp form."""
    return (0.5 * n * (b - a) / (a * b) * math.log((b - a) / (const * t))
            + 0.5 * n * (a + b) / (a * b) * math.log(a / b)
            + t * H_sup ** 2 / 6.0 * (a * a + a * b + b * b) / (a * a * b * b))


def _weighted_fit(design, target, prob):
    sw = np.sqrt(prob)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], target * sw, rcond=None)
    res = target - design @ coef
    return coef, float(math.sqrt(np.sum(prob * res * res)))


def _prob(M, log_dens):
    lw = np.log(M.weights) + log_dens
    return np.exp(lw - logsumexp(lw))


def _nearest_origin(M):
    return int(np.argmin(np.linalg.norm(M.vertices, axis=1)))


def _assumption_checks(M, u, t_max, metric):
    """u < 0 on the boundary, and the minimizer of u + d^2/C0 lies off the boundary."""
    out = {}
    if np.any(M.boundary):
        out["boundary_negative"] = bool(np.all(u[M.boundary] < 0.0))
    else:
        out["boundary_negative"] = True
    x0 = _nearest_origin(M)
    d = _rows_distance(M, np.array([x0]), metric)[0]
    C0 = 2.1 * t_max
    g = u + d * d / C0
    j = int(np.argmin(g))
    out["interior_minimizer"] = bool(not M.boundary[j] or not np.any(M.boundary))
    out["interior_min_C0"] = C0
    out["interior_min_value"] = float(g[j])
    return out


def euclidean_hyper_report(M: DiscreteSubmanifold, u, a: float, b: float, times,
                           metric: str = "auto", H_sup: Optional[float] = None,
                           const: float = 2.0 * math.pi) -> HypercontractivityReport:
    """||e^{Q_t u}||_{L^b} against ||e^u||_{L^a} times the sharp factor, for each t."""
    if not 0 < a < b:
        raise DomainError("need 0 < a < b")
    table = hopf_lax(M, u, times, metric=metric)
    uv = table.values[0]
    ts = table.times[1:]
    H = (0.0 if M.minimal else M.H_sup) if H_sup is None else float(H_sup)
    log_u = log_exp_norm(M, uv, a)
    log_F = np.array([log_exp_norm(M, table.values[k + 1], b) for k in range(len(ts))])
    log_B = np.array([log_u + euclidean_log_bound(M.n, a, b, t, H, const) for t in ts])
    prob = _prob(M, a * uv)
    X = M.vertices
    dist = []
    for t in ts:
        beta = (b - a) / (2.0 * b * t)
        design = np.hstack([np.ones((len(uv), 1)), 2.0 * beta * X])
        dist.append(_weighted_fit(design, uv + beta * np.sum(X * X, axis=1), prob)[1])
    checks = _assumption_checks(M, uv, float(ts[-1]), metric)
    checks["dominated"] = bool(np.all(table.values[1:] <= uv[None, :]))
    ratio = np.exp(log_F - log_B)
    return HypercontractivityReport(
        "euclidean", a, b, ts, np.full(len(ts), b), log_F, log_B,
        ratio <= 1.0 + RATIO_TOL, np.array(dist), table.any_ill_posed, checks)


def growth_exponent(fn: Callable, N: int, radii=None, directions=None, seed=0):
    """Fit |u(r d)| ~ C2 r^theta on the last decade of ``radii`` (default 1..1e3).

    Returns (theta, C2).  Bounded or decaying u gives theta <= 0.
    """
    radii = np.geomspace(1.0, 1e3, 31) if radii is None else np.asarray(radii, float)
    if directions is None:
        rng = np.random.default_rng(seed)
        dirs = np.vstack([np.eye(N), -np.eye(N), rng.standard_normal((8, N))])
        directions = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    g = np.array([np.max(np.abs(fn(r * directions))) for r in radii])
    sel = radii >= radii[-1] / 10.0
    g = np.maximum(g, 1e-300)
    slope, icpt = np.polyfit(np.log(radii[sel]), np.log(g[sel]), 1)
    return float(slope), float(math.exp(icpt))


def check_growth(fn: Callable, N: int, a: float, t_max: float, tol: float = 0.02):
    """Sub-quadratic growth, or the quadratic threshold with (a + t/2) C2 < 1/4."""
    theta, C2 = growth_exponent(fn, N)
    if theta < 2.0 - tol:
        return {"theta": theta, "C2": C2, "regime": "subquadratic"}
    if abs(theta - 2.0) <= tol and (a + 0.5 * t_max) * C2 < 0.25:
        return {"theta": theta, "C2": C2, "regime": "quadratic threshold"}
    raise UsageError(f"growth hypothesis |u| <= C1 + C2 |x|^theta with theta < 2 fails "
                     f"(fitted theta={theta:.3f}, C2={C2:.3g})")


def gaussian_hyper_report(M: DiscreteSubmanifold, u, a: float, times,
                          metric: str = "auto", growth_fn: Optional[Callable] = None,
                          tol: float = MONOTONE_TOL) -> HypercontractivityReport:
    """F(t) = ||e^{Q_t u}||_{L^{a + t/2}(dgamma)} on a self-shrinker; bound is F(0).

    ``u`` may be a FieldSpec or callable on ambient points, in which case its
    growth is probed along rays; a bare ScalarField skips the growth check.
    """
    if not M.shrinker:
        raise UsageError(f"{M.name} is not flagged as a self-shrinker")
    if not a > 0:
        raise DomainError("a must be positive")
    fn = growth_fn
    if isinstance(u, FieldSpec) or (callable(u) and not isinstance(u, ScalarField)):
        fn = fn or u
        u = ScalarField(M, u(M.vertices))
    grid = _time_grid(times)
    checks = {}
    if fn is not None:
        checks["growth"] = check_growth(fn, M.N, a, float(grid[-1]))
    else:
        checks["growth"] = "not probed"
    table = hopf_lax(M, u, grid[1:], metric=metric)
    mu = gaussian(0.25)
    q = a + 0.5 * table.times
    log_F = np.array([log_exp_norm(M, table.values[k], q[k], mu) for k in range(len(q))])
    log_B = np.full(len(q), log_F[0])
    steps = np.concatenate([[0.0], np.expm1(np.diff(log_F))])
    flags = steps <= tol
    checks["max_increase"] = float(max(0.0, np.max(steps)))
    uv = table.values[0]
    prob = _prob(M, mu.log_density(M.vertices, M.n))
    design = np.hstack([np.ones((len(uv), 1)), M.vertices])
    dist = _weighted_fit(design, uv, prob)[1]
    return HypercontractivityReport(
        "gaussian", a, None, table.times, q, log_F, log_B, flags,
        np.full(len(q), dist), table.any_ill_posed, checks)


def quadratic_profile(beta: float, C: float = 0.0, center=None) -> FieldSpec:
    """C - beta |x - center|^2."""
    return FieldSpec("quadratic", {"beta": beta, "offset": C,
                                   **({"center": tuple(center)} if center is not None else {})})


def equality_profile(a: float, b: float, t: float, C: float = 0.0, center=None) -> FieldSpec:
    """The extremal u = C - (b - a)/(2bt) |x - center|^2 of the Euclidean estimate."""
    return quadratic_profile((b - a) / (2.0 * b * t), C, center)


# ---------------------------------------------------------------------------
# sharpness probes
# ---------------------------------------------------------------------------

def sharpness_probe(kind: str, trial: float, resolution: int = 129, seed: int = 0):
    """Search near-extremal fields for a violation of the bound with ``trial`` constant.

    euclidean_2pi: 2*pi replaced by ``trial`` (>= 2*pi); equality profiles at small t,
    with b = 2a so the extremal minimizer y = 2x is a grid vertex inside the patch core.
    gaussian_factor2: L^{a + t/2} replaced by L^{a + t/trial}; affine u on a wide
    flat chart carrying dgamma.
    Returns {"kind", "trial", "witness": dict or None, "scanned": [...]}.
    """
    scanned = []
    witness = None
    if kind == "euclidean_2pi":
        M = make_flat_chart(2, 1, 6.0, resolution)
        for t in (0.05, 0.1, 0.25, 0.5):
            for a, b in ((1.0, 2.0), (2.0, 4.0), (0.5, 1.0)):
                u = equality_profile(a, b, t).on(M)
                check_well_posed((b - a) / (2 * b * t), t)
                rep = euclidean_hyper_report(M, u, a, b, [t], const=trial)
                r = float(rep.ratio[0])
                entry = {"t": t, "a": a, "b": b, "ratio": r}
                scanned.append(entry)
                if witness is None and r > 1.0 + RATIO_TOL:
                    witness = entry
    elif kind == "gaussian_factor2":
        M = make_flat_chart(2, 1, 12.0, 97)
        h = M.mesh_size
        mu = gaussian(0.25)
        for lam in (0.5, 1.0):
            for t in (0.25, 0.5, 1.0):
                if abs(lam * t / h - round(lam * t / h)) > 1e-9:
                    continue  # keep the shifted minimizer on the grid
                u = FieldSpec("affine", {"direction": (1.0,), "scale": lam}).on(M)
                table = hopf_lax(M, u, [t])
                a = 1.0
                lhs = log_exp_norm(M, table.values[1], a + t / trial, mu)
                rhs = log_exp_norm(M, table.values[0], a, mu)
                r = math.exp(lhs - rhs)
                entry = {"lambda": lam, "t": t, "a": a, "ratio": r}
                scanned.append(entry)
                if witness is None and r > 1.0 + RATIO_TOL:
                    witness = entry
    else:
        raise UsageError(f"unknown probe {kind!r}")
    return {"kind": kind, "trial": trial, "witness": witness, "scanned": scanned}
