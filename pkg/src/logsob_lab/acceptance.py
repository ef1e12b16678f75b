"""The eleven acceptance criteria as plain functions returning CriterionResult.

Shared by ``logsob-lab suite`` and the pytest acceptance file.  Every check
is deterministic; randomized scans take an explicit seed.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import functionals as fn
from . import special as sp
from .errors import UsageError
from .fields import STANDARD_FIELDS, FieldSpec
from .geometry import (make_catenoid, make_cylinder_shrinker, make_flat_chart, make_sphere)
from .hopf_lax import (check_well_posed, equality_profile, euclidean_hyper_report,
                       gaussian_hyper_report, hopf_lax, quadratic_profile, semigroup_gap,
                       sharpness_probe)
from .transport import (TransportInstance, cost_convention_check, cyclical_monotonicity_check,
                        det_trace_check, gaussian_source, gaussian_target_grid, quantile_map)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    elapsed: float = 0.0
    budget: float = math.inf

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d} {self.name} ({self.elapsed:.1f}s)"

    def to_dict(self):
        # no timings: summary files must be byte-identical across runs
        return {"number": self.number, "name": self.name, "pass": self.passed,
                "detail": _jsonable(self.detail)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


# Fault injection hook: names of deliberate bugs to switch on (testing the suite).
FAULTS: set = set()


def _deficit_main(f, **kw):
    rep = fn.deficit_main(f, **kw)
    if "sign-flip" in FAULTS:
        rep.left, rep.right = rep.right, rep.left
        rep.deficit = -rep.deficit
    return rep


# ---------------------------------------------------------------------------

def c1_constants():
    ns = range(1, 11)
    lsi = max(abs(sp.sharp_lsi_constant(2, n) / (2 / (math.pi * math.e * n)) - 1) for n in ns)
    gen = 0.0
    for n in range(2, 11):
        A, B = sp.general_constants(n, 2)
        gen = max(gen, abs(A / (2 / (math.pi * math.e * n)) - 1),
                  abs(B / (1 / (2 * math.pi * math.e * n)) - 1))
    root = sp.digamma_root()
    val = float(sp.psi_plus_x_trigamma(0.5))
    closed = -sp.EULER_GAMMA - 2 * math.log(2) + math.pi ** 2 / 4
    ok = lsi <= 1e-12 and gen <= 1e-12 and abs(root - 0.2161) <= 5e-4 and abs(val - closed) <= 1e-10
    return ok, {"lsi_rel_err": lsi, "general_rel_err": gen, "digamma_root": root,
                "psi_half": val, "psi_half_err": abs(val - closed)}


def c2_chain():
    rep = sp.constant_chain_check()
    spread = max(sp.constant_chain_spread(n, m) for n in range(2, 7) for m in range(1, 21))
    return rep.passed and spread <= 1e-12, {"worst": rep.worst_violation, "p2_spread": spread}


def c3_monotonicity_scans(draws=1_000_000):
    a1, a2 = sp.scan_gamma_ratio(), sp.scan_gamma_dilation()
    par = sp.scan_parallelogram(num_draws=draws)
    q2 = par.grid["q2_max_abs_slack"]
    ok = a1.passed and a2.passed and par.passed and q2 <= 1e-12
    return ok, {"gamma_ratio_worst": a1.worst_violation, "gamma_dilation_worst": a2.worst_violation,
                "parallelogram_worst": par.worst_violation, "q2_max_abs_slack": q2,
                "draws": draws}


def c4_equality_anchor(resolutions=(65, 129, 257)):
    vals = []
    for r in resolutions:
        M = make_flat_chart(2, 1, 6.0, r)
        vals.append(_deficit_main(FieldSpec("gauss", {"alpha": 1.0}).on(M)).deficit)
    ok = all(0.0 <= v <= 1e-2 for v in vals) and all(b < a for a, b in zip(vals, vals[1:]))
    return ok, {"resolutions": list(resolutions), "deficits": vals}


def battery_meshes():
    return [make_flat_chart(2, 1, 6.0, 129), make_sphere(2, 2.0, 4),
            make_catenoid(96, 3.0), make_cylinder_shrinker(1, 2, 96)]


PARAM_ALPHAS = tuple(np.geomspace(0.25, 4.0, 8))


def _battery_one(M):
    rows = []
    for spec in STANDARD_FIELDS:
        f = spec.on(M)
        lab = spec.label
        terms = fn.p2_terms(f)
        reps = [_deficit_main(f, label=lab, terms=terms)]
        reps += [fn.deficit_parametric(f, a, label=lab, terms=terms) for a in PARAM_ALPHAS]
        reps += [fn.deficit_gaussian(f, a, label=lab) for a in (0.125, 0.25, 0.5)]
        if M.minimal:
            reps += [fn.deficit_lp_minimal(f, p, label=lab) for p in (2.0, 3.0)]
        reps += [fn.deficit_lp_general(f, p, label=lab) for p in (2.0, 2.5)]
        rows.extend(reps)
    return rows


def run_battery(workers=1):
    meshes = battery_meshes()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(_battery_one, meshes))
    else:
        parts = [_battery_one(M) for M in meshes]
    return [r for part in parts for r in part]


def c5_battery(workers=1, reports=None):
    reps = run_battery(workers) if reports is None else reports
    bad = [r for r in reps if not (r.deficit >= -1e-6)]
    worst = min(reps, key=lambda r: r.deficit)
    return not bad, {"count": len(reps), "failures": len(bad), "worst": worst.deficit,
                     "worst_case": f"{worst.name} {worst.notes} p={worst.p} alpha={worst.alpha}"}


LINKAGE_FIELDS = STANDARD_FIELDS + (
    FieldSpec("gauss", {"alpha": 0.5}),
    FieldSpec("gauss", {"alpha": 2.0}),
    FieldSpec("gauss_poly", {"alpha": 1.5, "coef": 1.0}),
    FieldSpec("qgauss", {"lam": 1.0, "q": 1.5}),
)


def c6_linkage():
    M = make_flat_chart(2, 1, 6.0, 129)
    worst_rel, worst_excess, rows = 0.0, -math.inf, []
    for spec in LINKAGE_FIELDS:
        gmin, main, bound = fn.alpha_grid_linkage(spec.on(M))
        gap = gmin - main.deficit
        rel = abs(gap) / max(abs(main.right), 1.0)
        worst_rel = max(worst_rel, rel)
        worst_excess = max(worst_excess, gap - bound, -gap - 1e-12)
        rows.append({"field": spec.label, "gap": gap, "bound": bound})
    ok = worst_rel <= 1e-3 and worst_excess <= 0.0
    return ok, {"fields": len(rows), "worst_relative_gap": worst_rel, "rows": rows}


def c7_divergence():
    M = make_flat_chart(2, 1, 6.0, 129)
    res = fn.divergence_residual(FieldSpec("gauss", {"alpha": 1.0}).on(M))
    saw = fn.saw_counterexample(2, 2.0, 30)
    flux_exact = bool(np.all(saw.flux == 1.0))
    ps = saw.partial_sums[1.0]
    growth = float(ps[-1] / ps[0])
    ok = abs(res) <= 1e-3 and flux_exact and growth >= 10.0
    return ok, {"residual": res, "flux_exact": flux_exact, "alpha1_growth": growth}


def c8_hopf_lax(resolutions=(65, 129, 257)):
    s, times = 1.0, (0.25, 0.5, 1.0)
    errs, gaps, viol, dominated = {}, [], [], True
    for r in resolutions:
        M = make_flat_chart(2, 1, 6.0, r)
        x2 = np.sum(M.vertices ** 2, axis=1)
        u = FieldSpec("quadratic", {"beta": -0.5 / s}).on(M)
        tab = hopf_lax(M, u, times)
        dominated &= bool(np.all(tab.values[1:] <= tab.values[0]))
        errs[r] = max(float(np.max(np.abs(tab.values[k] - x2 / (2 * (s + t)))))
                      for k, t in enumerate(tab.times))
        v, g = semigroup_gap(M, u, 1.0, 0.5)
        viol.append(v)
        gaps.append(g)
    ok = (errs.get(129, 0.0) <= 2e-2 and dominated and max(viol) <= 5e-2
          and all(g <= 5e-2 for g in gaps) and all(b < a for a, b in zip(gaps, gaps[1:])))
    return ok, {"sup_error": errs, "semigroup_violation": viol, "semigroup_gap": gaps,
                "dominated": dominated}


def _euclid_suite():
    """(label, mesh, u, a, b, times) for the Euclidean hypercontractivity suite."""
    flat = make_flat_chart(2, 1, 6.0, 129)
    cat = make_catenoid(32, 2.0)
    sph = make_sphere(2, 1.0, 3)
    cyl = make_cylinder_shrinker(1, 2, 40)
    return [
        ("flat equality t=0.25", flat, equality_profile(1, 2, 0.25), 1.0, 2.0, [0.25]),
        ("flat equality a=2 b=4", flat, equality_profile(2, 4, 0.5), 2.0, 4.0, [0.5]),
        ("flat inner quadratic", flat, quadratic_profile(0.2), 1.0, 2.0, [0.25, 0.5]),
        ("flat offset quadratic", flat, quadratic_profile(0.3, 0.5, (1.0, -0.5)), 1.0, 2.0,
         [0.25, 0.5]),
        ("flat cone", flat, FieldSpec("neg_norm"), 1.0, 2.0, [0.25, 0.5]),
        ("catenoid quadratic", cat, quadratic_profile(0.2, 1.0), 1.0, 2.0, [0.25, 0.5]),
        ("sphere gaussian", sph, FieldSpec("gauss", {"alpha": 1.0}), 1.0, 2.0, [0.25, 0.5]),
        ("cylinder quadratic", cyl, quadratic_profile(0.1, 0.5), 2.0, 3.0, [0.5]),
    ]


def c9_euclidean_hyper():
    M = make_flat_chart(2, 1, 6.0, 129)
    check_well_posed(0.5, 0.5)
    eq = euclidean_hyper_report(M, equality_profile(1, 2, 0.5).on(M), 1.0, 2.0, [0.5])
    eq_ratio = float(eq.ratio[0])
    others = {}
    gated_ok = True
    for label, mesh, spec, a, b, ts in _euclid_suite():
        rep = euclidean_hyper_report(mesh, spec.on(mesh), a, b, ts)
        gated_ok &= rep.checks["boundary_negative"] and rep.checks["interior_minimizer"] and not rep.ill_posed
        others[label] = rep.max_ratio
    w8 = sharpness_probe("euclidean_2pi", 8.0)
    w2pi = sharpness_probe("euclidean_2pi", 2 * math.pi)
    ok = (1 - 5e-2 <= eq_ratio <= 1 + 1e-3 and max(others.values()) <= 1 + 1e-3 and gated_ok
          and w8["witness"] is not None and w2pi["witness"] is None)
    return ok, {"equality_ratio": eq_ratio, "suite_ratios": others, "assumptions_ok": gated_ok,
                "witness_C8": w8["witness"], "witness_2pi": w2pi["witness"]}


def c10_gaussian_hyper():
    S = make_sphere(2, 2.0, 4)
    times = np.arange(1, 9) * 0.25
    rep = gaussian_hyper_report(S, FieldSpec("affine", {"direction": (0, 0, 1)}), 1.0, times)
    rejected = False
    try:
        gaussian_hyper_report(S, FieldSpec("power", {"theta": 2.5}), 1.0, times)
    except UsageError:
        rejected = True
    inc = rep.checks["max_increase"]
    ok = len(rep.times) == 9 and inc <= 1e-8 and rejected
    return ok, {"F": rep.F, "max_increase": inc, "growth_rejects_2.5": rejected}


def c11_transport(seed=0):
    M = make_flat_chart(1, 1, 3.0, 201)
    mu = gaussian_source(M, 1.0)
    Y, nu, meta = gaussian_target_grid(2, (20, 10), 3.0, 0.5, seed=seed)
    inst = TransportInstance(M, mu, Y, nu, "quadratic", meta=meta)
    same, pq, ps = cost_convention_check(inst)
    cell = 6.0 / 19
    bary = pq.barycentric_map()[:, 0]
    oracle = quantile_map(M.vertices[:, 0], mu, Y[:, 0], nu)
    live = mu > 0
    map_err = float(np.max(np.abs(bary[live] - oracle[live])))
    cyc = cyclical_monotonicity_check(pq, num_cycles=10_000, seed=seed)
    dt = det_trace_check(100_000, seed=seed)
    ok = map_err <= cell and cyc.passed and same and dt.passed
    return ok, {"map_error": map_err, "cell": cell, "cycles": cyc.to_dict(),
                "cost_conventions_equal": same, "duality_gap": pq.duality_gap,
                "det_trace": dt.to_dict()}


CRITERIA: list[tuple[int, str, Callable, float]] = [
    (1, "constants", c1_constants, 1.0),
    (2, "constant chain", c2_chain, 1.0),
    (3, "monotonicity scans", c3_monotonicity_scans, 30.0),
    (4, "equality-case anchor", c4_equality_anchor, 60.0),
    (5, "non-negativity battery", c5_battery, 300.0),
    (6, "alpha-optimality linkage", c6_linkage, 30.0),
    (7, "divergence identity", c7_divergence, 10.0),
    (8, "hopf-lax semigroup", c8_hopf_lax, 120.0),
    (9, "euclidean hypercontractivity", c9_euclidean_hyper, 180.0),
    (10, "gaussian hypercontractivity", c10_gaussian_hyper, 120.0),
    (11, "transport", c11_transport, 120.0),
]

QUICK = {1: {}, 2: {}, 3: {"draws": 100_000}, 4: {"resolutions": (65, 129)}, 7: {}, 10: {}}


def run_criterion(number: int, **kw) -> CriterionResult:
    num, name, func, budget = CRITERIA[number - 1]
    t0 = time.perf_counter()
    ok, detail = func(**kw)
    elapsed = time.perf_counter() - t0
    return CriterionResult(num, name, bool(ok), detail, elapsed, budget)


def run_suite(name: str = "acceptance", workers: int = 1, echo=None):
    """Run every criterion (or the quick subset); returns the list of results."""
    if name == "acceptance":
        plan = [(n, {"workers": workers} if n == 5 else {}) for n, *_ in CRITERIA]
    elif name == "quick":
        plan = sorted(QUICK.items())
    else:
        raise UsageError(f"unknown suite {name!r} (expected acceptance or quick)")
    out = []
    for n, kw in plan:
        res = run_criterion(n, **kw)
        if echo:
            echo(res.line())
        out.append(res)
    return out
