"""Exact discrete optimal transport from a submanifold to ambient samples.

Plans come from the transportation LP solved with HiGHS (dual simplex), so
supports are vertices of the feasible polytope and cyclical monotonicity
holds exactly up to round-off.  Duals of the row constraints give the
Kantorovich potential psi(x) = |x|^2/2 - alpha(x) for the quadratic cost.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import CapacityError, DomainError, UsageError
from .geometry import DiscreteSubmanifold
from .special import ScanReport

LP_BUDGET = 4_000_000
MASS_TOL = 1e-12
SUPPORT_FLOOR = 1e-16


@dataclass
class TransportInstance:
    mesh: DiscreteSubmanifold
    source_mass: np.ndarray
    target_points: np.ndarray
    target_mass: np.ndarray
    cost: str = "quadratic"
    source_index: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cost not in ("quadratic", "scalar"):
            raise UsageError(f"unknown cost convention {self.cost!r}")
        if self.source_index is None:
            self.source_index = np.arange(self.mesh.num_vertices)
        self.source_index = np.asarray(self.source_index, dtype=np.int64)
        self.source_mass = np.asarray(self.source_mass, dtype=float)
        self.target_mass = np.asarray(self.target_mass, dtype=float)
        self.target_points = np.atleast_2d(np.asarray(self.target_points, dtype=float))
        if self.source_mass.shape != self.source_index.shape:
            raise DomainError("one source mass per source vertex")
        if self.target_points.shape != (len(self.target_mass), self.mesh.N):
            raise DomainError("target points must be (K, N) with one mass each")
        for name, w in (("source", self.source_mass), ("target", self.target_mass)):
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise DomainError(f"{name} masses must be finite and non-negative")
            if abs(w.sum() - 1.0) > MASS_TOL:
                raise DomainError(f"{name} masses sum to {w.sum():.15g}, not 1")

    @property
    def source_points(self):
        return self.mesh.vertices[self.source_index]

    def with_cost(self, cost):
        return TransportInstance(self.mesh, self.source_mass, self.target_points,
                                 self.target_mass, cost, self.source_index, dict(self.meta))

    def cost_matrix(self):
        X, Y = self.source_points, self.target_points
        inner = X @ Y.T
        if self.cost == "scalar":
            return -inner
        return 0.5 * (np.sum(X * X, axis=1)[:, None] + np.sum(Y * Y, axis=1)[None, :]) - inner


@dataclass
class TransportPlan:
    instance: TransportInstance
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    total_cost: float
    row_duals: np.ndarray
    col_duals: np.ndarray
    duality_gap: float

    @property
    def potential(self):
        """psi at the source points: |x|^2/2 - alpha for the quadratic cost, -alpha for the scalar one."""
        X = self.instance.source_points
        if self.instance.cost == "quadratic":
            return 0.5 * np.sum(X * X, axis=1) - self.row_duals
        return -self.row_duals

    def dense(self):
        S, T = len(self.instance.source_mass), len(self.instance.target_mass)
        return sparse.coo_matrix((self.weights, (self.rows, self.cols)), shape=(S, T)).toarray()

    def marginal_error(self):
        P = self.dense()
        return max(float(np.max(np.abs(P.sum(axis=1) - self.instance.source_mass))),
                   float(np.max(np.abs(P.sum(axis=0) - self.instance.target_mass))))

    def barycentric_map(self):
        """Mass-weighted mean target of each source point (rows with zero mass get nan)."""
        Y = self.instance.target_points
        S = len(self.instance.source_mass)
        num = np.zeros((S, Y.shape[1]))
        np.add.at(num, self.rows, self.weights[:, None] * Y[self.cols])
        den = np.bincount(self.rows, weights=self.weights, minlength=S)
        with np.errstate(invalid="ignore", divide="ignore"):
            return num / den[:, None]

    def to_csv(self, fh=None):
        buf = fh or io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "weight"])
        for i, j, v in zip(self.rows, self.cols, self.weights):
            w.writerow([int(i), int(j), repr(float(v))])
        return buf.getvalue() if fh is None else None

    def header(self):
        inst = self.instance
        return json.dumps({"mesh": inst.mesh.name, "cost": inst.cost,
                           "num_source": int(len(inst.source_mass)),
                           "num_target": int(len(inst.target_mass)),
                           "total_cost": self.total_cost, "duality_gap": self.duality_gap,
                           "support_size": int(len(self.weights)), **inst.meta},
                          sort_keys=True)


def solve_exact(instance: TransportInstance) -> TransportPlan:
    """Optimal plan of the transportation LP, with dual potentials."""
    mu, nu = instance.source_mass, instance.target_mass
    S, T = len(mu), len(nu)
    if S * T > LP_BUDGET:
        raise CapacityError(f"{S} x {T} plan exceeds the {LP_BUDGET} entry budget")
    C = instance.cost_matrix()
    idx = np.arange(S * T)
    A = sparse.vstack([
        sparse.csr_matrix((np.ones(S * T), (idx // T, idx)), shape=(S, S * T)),
        sparse.csr_matrix((np.ones(S * T), (idx % T, idx)), shape=(T, S * T)),
    ]).tocsc()
    # HiGHS tolerances are absolute (1e-7), so masses are rescaled to O(1);
    # duals are unaffected by scaling the right-hand side.  Presolve is off:
    # on transportation LPs it costs ~20x the simplex itself.
    scale = float(max(S, T))
    res = linprog(C.ravel(), A_eq=A, b_eq=scale * np.concatenate([mu, nu]), bounds=(0, None),
                  method="highs-ds", options={"presolve": False})
    if res.status != 0:
        raise DomainError(f"transport LP failed: {res.message}")
    x = res.x / scale
    x[x < SUPPORT_FLOOR] = 0.0
    keep = np.flatnonzero(x)
    duals = res.eqlin.marginals
    alpha, beta = duals[:S], duals[S:]
    primal = float(C.ravel()[keep] @ x[keep])
    dual = float(mu @ alpha + nu @ beta)
    return TransportPlan(instance, keep // T, keep % T, x[keep], primal, alpha, beta,
                         abs(primal - dual))


def same_plan(p: TransportPlan, q: TransportPlan, tol: float = 1e-10) -> bool:
    """Support sets equal and weights within ``tol``."""
    a = dict(zip(zip(p.rows.tolist(), p.cols.tolist()), p.weights))
    b = dict(zip(zip(q.rows.tolist(), q.cols.tolist()), q.weights))
    if set(a) != set(b):
        return False
    return all(abs(a[k] - b[k]) <= tol for k in a)


def cost_convention_check(instance: TransportInstance):
    """Solve under both costs; returns (plans equal, quadratic plan, scalar plan)."""
    pq = solve_exact(instance.with_cost("quadratic"))
    ps = solve_exact(instance.with_cost("scalar"))
    return same_plan(pq, ps), pq, ps


# ---------------------------------------------------------------------------
# instance builders
# ---------------------------------------------------------------------------

def gaussian_target_grid(N: int, per_axis, half_width: float, alpha: float = 1.0,
                         center=None, jitter: float = 0.25, seed: int = 0):
    """Tensor grid in R^N with trimmed Gaussian masses renormalized to 1.

    Points are moved by a seeded uniform jitter of at most ``jitter`` grid
    cells so that no two share a coordinate; this keeps optimal plans unique.
    Returns (points, masses, meta).
    """
    per_axis = [per_axis] * N if np.isscalar(per_axis) else list(per_axis)
    axes = [np.linspace(-half_width, half_width, k) if k > 1 else np.zeros(1) for k in per_axis]
    grids = np.meshgrid(*axes, indexing="ij")
    Y = np.stack([g.ravel() for g in grids], axis=1)
    h = np.array([a[1] - a[0] if len(a) > 1 else 1.0 for a in axes])
    rng = np.random.default_rng(seed)
    Y = Y + jitter * h * rng.uniform(-1.0, 1.0, Y.shape)
    c = np.zeros(N) if center is None else np.asarray(center, dtype=float)
    w = np.exp(-alpha * np.sum((Y - c) ** 2, axis=1))
    w /= w.sum()
    meta = {"trim_radius": float(half_width), "target_alpha": float(alpha),
            "per_axis": [int(k) for k in per_axis], "jitter": float(jitter), "seed": int(seed)}
    return Y, w, meta


def gaussian_source(M: DiscreteSubmanifold, alpha: float = 1.0, index=None):
    """Vertex masses proportional to weight * exp(-alpha |x|^2)."""
    idx = np.arange(M.num_vertices) if index is None else np.asarray(index)
    w = M.weights[idx] * np.exp(-alpha * np.sum(M.vertices[idx] ** 2, axis=1))
    return w / w.sum()


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

def _cycle_sums(X, Y, cyc):
    """sum_i <y_i, x_i - x_{i+1}> for each cycle of support-pair indices."""
    nxt = np.roll(cyc, -1, axis=1)
    return np.einsum("ckN,ckN->c", Y[cyc], X[cyc] - X[nxt])


def cyclical_monotonicity_check(plan: TransportPlan, num_cycles: int = 10_000,
                                cycle_length: int = 4, seed: int = 0, tol: float = 1e-9,
                                pairs=None) -> ScanReport:
    """Sampled cycle sums of the support in scalar-product form.

    Length-2 cycles are enumerated exhaustively when the support has at most
    2000 pairs; longer cycles are sampled.  ``pairs`` overrides the support
    (used to test hand-built violations).
    """
    if not 2 <= cycle_length <= 4:
        raise DomainError("cycle length must be 2, 3 or 4")
    if pairs is None:
        X = plan.instance.source_points[plan.rows]
        Y = plan.instance.target_points[plan.cols]
    else:
        X, Y = (np.asarray(a, dtype=float) for a in pairs)
    K = len(X)
    rng = np.random.default_rng(seed)
    worst, where, count = -math.inf, None, 0
    if K < 2:
        return ScanReport("cyclical monotonicity", {"support": K}, 0.0, (), tol)
    for k in range(2, cycle_length + 1):
        if k == 2 and K <= 2000:
            i, j = np.triu_indices(K, 1)
            cyc = np.stack([i, j], axis=1)
        else:
            if K < k:
                continue
            cyc = np.argsort(rng.random((num_cycles, K)), axis=1)[:, :k] if K <= 64 else \
                rng.integers(0, K, size=(num_cycles, k))
            cyc = cyc[np.all(np.diff(np.sort(cyc, axis=1), axis=1) > 0, axis=1)]
        s = _cycle_sums(X, Y, cyc)
        count += len(s)
        j = int(np.argmin(s))
        if -s[j] > worst:
            worst, where = float(-s[j]), (k, tuple(cyc[j].tolist()))
    grid = {"support": K, "cycles": count, "max_length": cycle_length}
    return ScanReport("cyclical monotonicity", grid, worst, where, tol)


def structure_check(plan: TransportPlan, M: Optional[DiscreteSubmanifold] = None):
    """Pythagorean splitting of each support target in the frame at its source,
    plus curl-freeness (n = 2) or monotonicity (n = 1) of the tangential
    barycentric map on flat charts."""
    inst = plan.instance
    M = M or inst.mesh
    if M is not inst.mesh:
        raise UsageError("plan was solved on a different submanifold")
    src = inst.source_index[plan.rows]
    Y = inst.target_points[plan.cols]
    coef = np.einsum("pkN,pN->pk", M.frames[src], Y)
    yT = np.einsum("pk,pkN->pN", coef, M.frames[src])
    yP = Y - yT
    lhs = np.sum(Y * Y, axis=1)
    pyth = np.abs(lhs - np.sum(yT * yT, axis=1) - np.sum(yP * yP, axis=1)) / np.maximum(lhs, 1.0)
    out = {"pythagorean_max": float(np.max(pyth)), "orthogonality_max":
           float(np.max(np.abs(np.sum(yT * yP, axis=1)) / np.maximum(lhs, 1.0)))}
    flat_grid = (M.backend == "chart" and M.minimal and M.H_sup == 0.0
                 and len(inst.source_index) == M.num_vertices)
    if flat_grid:
        B = plan.barycentric_map()
        tang = np.einsum("vkN,vN->vk", M.frames[inst.source_index], B)
        if M.n == 1:
            d = np.diff(tang[:, 0])
            out["monotone_min_step"] = float(np.min(d))
            out["monotone"] = bool(np.all(d >= -1e-12))
        elif M.n == 2:
            h = M.mesh_size
            g = tang.reshape(*M.grid_shape, 2)
            d1_b2 = np.gradient(g[..., 1], h, axis=0)
            d2_b1 = np.gradient(g[..., 0], h, axis=1)
            div = np.gradient(g[..., 0], h, axis=0) + np.gradient(g[..., 1], h, axis=1)
            core = np.zeros(M.grid_shape, dtype=bool)
            core[2:-2, 2:-2] = True
            w = inst.source_mass.reshape(M.grid_shape) * core
            w = w / w.sum()
            curl = d1_b2 - d2_b1
            out["curl_rms"] = float(math.sqrt(np.sum(w * curl ** 2)))
            out["div_rms"] = float(math.sqrt(np.sum(w * div ** 2)))
            out["curl_ratio"] = out["curl_rms"] / max(out["div_rms"], 1e-300)
    return out


def monge_ampere_balance(plan: TransportPlan, M: Optional[DiscreteSubmanifold] = None,
                         blocks: int = 4, perturb: Optional[np.ndarray] = None):
    """Row and column mass balance, plus the normal-direction fiber profile.

    The fiber profile aggregates source vertices into ``blocks`` slabs along
    the first tangential axis and compares the mass-weighted histogram of the
    first normal coordinate of the targets against the target marginal.
    ``perturb`` replaces the plan weights (to exercise the detector).
    """
    inst = plan.instance
    M = M or inst.mesh
    w = plan.weights if perturb is None else np.asarray(perturb, dtype=float)
    S, T = len(inst.source_mass), len(inst.target_mass)
    rs = np.bincount(plan.rows, weights=w, minlength=S)
    cs = np.bincount(plan.cols, weights=w, minlength=T)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel_r = np.where(inst.source_mass > 0, np.abs(rs - inst.source_mass) / inst.source_mass,
                         np.abs(rs))
        rel_c = np.where(inst.target_mass > 0, np.abs(cs - inst.target_mass) / inst.target_mass,
                         np.abs(cs))
    out = {"row_imbalance": float(np.max(rel_r)), "col_imbalance": float(np.max(rel_c))}
    out["imbalance"] = max(out["row_imbalance"], out["col_imbalance"])
    if M.m >= 1 and M.backend == "chart" and M.H_sup == 0.0:
        normal_axis = M.n
        yn = inst.target_points[:, normal_axis]
        k = inst.meta.get("per_axis", [0] * M.N)[normal_axis]
        if k > 1:
            r = inst.meta["trim_radius"]
            levels = np.linspace(-r, r, k)
            edges = np.concatenate([[-np.inf], 0.5 * (levels[1:] + levels[:-1]), [np.inf]])
            ref = np.histogram(yn, edges, weights=inst.target_mass)[0]
            x1 = inst.source_points[plan.rows, 0]
            cuts = np.quantile(inst.source_points[:, 0], np.linspace(0, 1, blocks + 1))
            tv = []
            for b in range(blocks):
                sel = (x1 >= cuts[b]) & (x1 <= cuts[b + 1])
                if w[sel].sum() < 0.05:
                    continue
                prof = np.histogram(yn[plan.cols[sel]], edges, weights=w[sel])[0]
                tv.append(0.5 * float(np.sum(np.abs(prof / prof.sum() - ref))))
            out["fiber_tv_max"] = max(tv) if tv else 0.0
    return out


def det_trace_check(draws: int = 100_000, dims=range(2, 7), seed: int = 0,
                    tol: float = 1e-12) -> ScanReport:
    """det S <= (tr S / n)^n on random symmetric non-negative-definite matrices.

    A third of the draws are rank-deficient.  Violation is measured as
    det S / (tr S / n)^n - 1.
    """
    rng = np.random.default_rng(seed)
    dims = list(dims)
    per = -(-draws // len(dims))
    worst, where, total = -math.inf, None, 0
    for n in dims:
        k = rng.integers(1, 2 * n + 1, size=per)
        A = rng.standard_normal((per, n, 2 * n))
        mask = np.arange(2 * n)[None, None, :] < k[:, None, None]
        A = A * mask * np.exp(rng.uniform(-2, 2, size=(per, 1, 1)))
        S = A @ np.swapaxes(A, 1, 2)
        det = np.linalg.det(S)
        am = (np.trace(S, axis1=1, axis2=2) / n) ** n
        viol = det / am - 1.0
        j = int(np.argmax(viol))
        total += per
        if viol[j] > worst:
            worst, where = float(viol[j]), (n, j)
    return ScanReport("determinant-trace", {"draws": total, "dims": dims}, worst, where, tol)


def quantile_coupling(x, mu, y, nu):
    """Monotone (north-west corner) coupling of two 1-D discrete measures.

    Returns (i, j, w) triples with x, y indices into the unsorted inputs.
    """
    ix, iy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    a, b = mu[ix].astype(float).copy(), nu[iy].astype(float).copy()
    out_i, out_j, out_w = [], [], []
    i = j = 0
    while i < len(a) and j < len(b):
        m = min(a[i], b[j])
        if m > 0:
            out_i.append(ix[i]); out_j.append(iy[j]); out_w.append(m)
        a[i] -= m
        b[j] -= m
        if a[i] <= 1e-15:
            i += 1
        if b[j] <= 1e-15:
            j += 1
    return np.array(out_i), np.array(out_j), np.array(out_w)


def quantile_map(x, mu, y, nu):
    """Barycentric projection of the monotone coupling: mean y sent from each x."""
    i, j, w = quantile_coupling(x, mu, y, nu)
    num = np.bincount(i, weights=w * y[j], minlength=len(x))
    den = np.bincount(i, weights=w, minlength=len(x))
    with np.errstate(invalid="ignore", divide="ignore"):
        return num / den
