"""Command-line front end: ``logsob-lab <command>``.

Scenarios are INI files with one section per concern:

    [scenario]   name, suites (constants, deficits, hopflax, transport), seed
    [generator]  name (flat_chart | sphere | cylinder | catenoid) plus its parameters;
                 ``resolution`` may be a list of refinement levels
    [field]      family plus parameters
    [constants]  p, n, m_max
    [deficits]   inequalities, alpha, gaussian_alpha, p
    [hopflax]    kind (euclidean | gaussian), a, b, times, u_family, u_<param>
    [transport]  source_alpha, target_per_axis, target_half_width, target_alpha,
                 jitter, cycles

Exit codes: 0 pass, 1 criterion failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import ast
import configparser
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import acceptance
from . import functionals as fn
from . import reports
from . import special as sp
from .errors import ConfigError, LabError, UsageError
from .fields import FAMILIES, FieldSpec
from .geometry import make_catenoid, make_cylinder_shrinker, make_flat_chart, make_sphere
from .hopf_lax import euclidean_hyper_report, gaussian_hyper_report
from .transport import (TransportInstance, cost_convention_check, cyclical_monotonicity_check,
                        gaussian_source, gaussian_target_grid)

ENV_OUT = "LOGSOB_LAB_OUT"
SUITES = ("constants", "deficits", "hopflax", "transport")
NEG_TOL = -1e-6

GENERATORS = {
    "flat_chart": (make_flat_chart, {"n": 2, "m": 1, "half_width": 6.0, "resolution": 129}),
    "sphere": (make_sphere, {"n": 2, "radius": 2.0, "resolution": 4}),
    "cylinder": (make_cylinder_shrinker, {"k": 1, "n": 2, "resolution": 96,
                                          "half_length": 6.0}),
    "catenoid": (make_catenoid, {"resolution": 96, "truncation": 3.0}),
}
INTEGER_KEYS = {"n", "m", "k", "resolution"}

DEFAULT_CONFIG = """
[scenario]
name = flat-gaussian
suites = constants, deficits, hopflax, transport
seed = 0

[generator]
name = flat_chart
n = 2
m = 1
half_width = 6
resolution = 65, 129, 257

[field]
family = gauss
alpha = 1.0

[constants]
p = 2, 2.5, 3, 4
n = 2, 3, 4, 5, 6
m_max = 20

[deficits]
inequalities = main, parametric, gaussian, lp_minimal, lp_general
alpha = 1.0
gaussian_alpha = 0.25
p = 2, 3

[hopflax]
kind = euclidean
a = 1
b = 2
times = 0.25, 0.5
u_family = quadratic
u_beta = 0.5

[transport]
source_resolution = 201
source_half_width = 3
source_alpha = 1.0
target_per_axis = 20, 10
target_half_width = 3
target_alpha = 0.5
jitter = 0.25
cycles = 10000
"""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _value(text):
    """Scalars, or tuples for comma-separated lists; bare words stay strings."""
    parts = [p.strip() for p in text.split(",")]
    vals = []
    for p in parts:
        try:
            vals.append(ast.literal_eval(p))
        except (ValueError, SyntaxError):
            vals.append(p)
    return vals[0] if len(vals) == 1 else tuple(vals)


def _as_list(v):
    return list(v) if isinstance(v, tuple) else [v]


class Scenario:
    """Parsed, validated scenario."""

    def __init__(self, parser: configparser.ConfigParser, source="<config>", text=""):
        self.source = source
        self.parser = parser
        self.text = text
        sc = self.section("scenario", required=False)
        self.name = str(sc.get("name", Path(source).stem))
        suites = _as_list(sc.get("suites", SUITES))
        for s in suites:
            if s not in SUITES:
                raise ConfigError(f"{self.where('scenario', 'suites')}: [scenario] suites: unknown suite {s!r}")
        self.suites = [s for s in SUITES if s in suites]
        try:
            self.seed = int(sc.get("seed", 0))
        except (TypeError, ValueError):
            raise ConfigError(f"{self.where('scenario', 'seed')}: [scenario] seed must be an integer") from None
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError(f"{self.where('scenario', 'seed')}: [scenario] seed must fit in an unsigned 64-bit integer")
        gen = self.section("generator", required=True)
        if "name" not in gen:
            raise ConfigError(f"{self.where('generator')}: [generator] is missing the "
                              f"'name' field")
        self.generator = str(gen.pop("name"))
        if self.generator not in GENERATORS:
            raise ConfigError(f"{self.where('generator', 'name')}: [generator] name: unknown generator "
                              f"{self.generator!r} (choose from {', '.join(GENERATORS)})")
        defaults = GENERATORS[self.generator][1]
        for key in gen:
            if key not in defaults:
                raise ConfigError(f"{self.where('generator', key)}: [generator] unknown parameter {key!r} "
                                  f"for {self.generator}")
        self.generator_params = {**defaults, **gen}
        self.levels = _as_list(self.generator_params.pop("resolution"))
        fld = self.section("field", required=False)
        family = str(fld.pop("family", "gauss"))
        if family not in FAMILIES:
            raise ConfigError(f"{self.where('field', 'family')}: [field] family: unknown family {family!r}")
        self.field = self._field_spec(family, fld, "field")

    def where(self, section, key=None):
        """``source:line`` of a section header, or of ``key`` inside it."""
        line, inside = None, False
        for i, raw in enumerate(self.text.splitlines(), 1):
            s = raw.strip()
            if s.startswith("["):
                inside = s == f"[{section}]"
                if inside and line is None:
                    line = i
            elif inside and key and s.split("=", 1)[0].strip() == key:
                return f"{self.source}:{i}"
        return f"{self.source}:{line}" if line else self.source

    def section(self, name, required=False):
        if not self.parser.has_section(name):
            if required:
                raise ConfigError(f"{self.source}: missing section [{name}]")
            return {}
        return {k: _value(v) for k, v in self.parser.items(name)}

    def _field_spec(self, family, params, where):
        try:
            spec = FieldSpec(family, params)
            spec(np.zeros((1, 3)))
        except TypeError as exc:
            raise ConfigError(f"{self.where(where)}: [{where}] bad parameters for {family}: {exc}") \
                from None
        return spec

    def meshes(self):
        make, _ = GENERATORS[self.generator]
        out = []
        for level in self.levels:
            kw = dict(self.generator_params, resolution=level)
            kw = {k: int(v) if k in INTEGER_KEYS else float(v) for k, v in kw.items()}
            out.append(make(**kw))
        return out


def load_scenario(path=None, overrides=()):
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        text = DEFAULT_CONFIG if path is None else Path(path).read_text()
        parser.read_string(text, source=str(path or "<default>"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for item in overrides:
        try:
            key, value = item.split("=", 1)
            section, option = key.strip().split(".", 1)
        except ValueError:
            raise UsageError(f"--set expects section.key=value, got {item!r}") from None
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, option, value)
    return Scenario(parser, str(path or "<default>"), text)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def run_constants(sc: Scenario):
    cfg = sc.section("constants")
    ps = [float(p) for p in _as_list(cfg.get("p", (2, 2.5, 3, 4)))]
    ns = [int(n) for n in _as_list(cfg.get("n", (2, 3, 4, 5, 6)))]
    m_max = int(cfg.get("m_max", 20))
    chain = sp.constant_chain_check(ps=ps, ns=ns, ms=range(1, m_max + 1))
    table = []
    for n in ns:
        for p in ps:
            A, B = sp.general_constants(n, p)
            table.append({"n": n, "p": p, "sharp_lsi": sp.sharp_lsi_constant(p, n),
                          "A": A, "B": B})
    data = {"constants": table, "chain": chain.to_dict(),
            "digamma_root": sp.digamma_root(),
            "psi_half_plus_half_trigamma": float(sp.psi_plus_x_trigamma(0.5))}
    return chain.passed, data


def run_deficits(sc: Scenario):
    cfg = sc.section("deficits")
    which = _as_list(cfg.get("inequalities", "main"))
    alphas = [float(a) for a in _as_list(cfg.get("alpha", 1.0))]
    galphas = [float(a) for a in _as_list(cfg.get("gaussian_alpha", 0.25))]
    ps = [float(p) for p in _as_list(cfg.get("p", 2))]
    rows = []
    for M in sc.meshes():
        f = sc.field.on(M)
        lab = sc.field.label
        for name in which:
            if name == "main":
                rows.append(fn.deficit_main(f, label=lab))
            elif name == "parametric":
                rows += [fn.deficit_parametric(f, a, label=lab) for a in alphas]
            elif name == "gaussian":
                rows += [fn.deficit_gaussian(f, a, label=lab) for a in galphas]
            elif name == "lp_minimal":
                if M.minimal:
                    rows += [fn.deficit_lp_minimal(f, p, label=lab) for p in ps if p >= 2]
            elif name == "lp_general":
                rows += [fn.deficit_lp_general(f, p, label=lab) for p in ps if p >= 2]
            else:
                raise ConfigError(f"{sc.where('deficits', 'inequalities')}: [deficits] inequalities: unknown {name!r}")
    ok = all(r.degenerate or r.deficit >= NEG_TOL for r in rows)
    return ok, rows


def run_hopflax(sc: Scenario):
    cfg = sc.section("hopflax")
    kind = str(cfg.get("kind", "euclidean"))
    a = float(cfg.get("a", 1.0))
    b = float(cfg.get("b", 2.0))
    times = [float(t) for t in _as_list(cfg.get("times", (0.25, 0.5)))]
    family = str(cfg.get("u_family", "quadratic"))
    if family not in FAMILIES:
        raise ConfigError(f"{sc.where('hopflax', 'u_family')}: [hopflax] u_family: unknown family {family!r}")
    params = {k[2:]: v for k, v in cfg.items() if k.startswith("u_") and k != "u_family"}
    spec = sc._field_spec(family, params, "hopflax")
    out = []
    ok = True
    for M in sc.meshes():
        if kind == "euclidean":
            rep = euclidean_hyper_report(M, spec.on(M), a, b, times)
            ok &= rep.max_ratio <= 1.0 + 1e-3 and not rep.ill_posed
        elif kind == "gaussian":
            rep = gaussian_hyper_report(M, spec, a, times)
            ok &= bool(np.all(rep.flags)) and not rep.ill_posed
        else:
            raise ConfigError(f"{sc.where('hopflax', 'kind')}: [hopflax] kind must be euclidean or gaussian")
        out.append((f"{sc.name}:{M.name}:{M.params.get('resolution')}", M, rep))
    return ok, out


def run_transport(sc: Scenario):
    cfg = sc.section("transport")
    res = int(cfg.get("source_resolution", 201))
    hw = float(cfg.get("source_half_width", 3.0))
    M = make_flat_chart(1, 1, hw, res)
    mu = gaussian_source(M, float(cfg.get("source_alpha", 1.0)))
    per = [int(k) for k in _as_list(cfg.get("target_per_axis", (20, 10)))]
    if len(per) != M.N:
        raise ConfigError(f"{sc.where('transport', 'target_per_axis')}: [transport] target_per_axis needs {M.N} entries")
    Y, nu, meta = gaussian_target_grid(M.N, per, float(cfg.get("target_half_width", 3.0)),
                                       float(cfg.get("target_alpha", 0.5)),
                                       jitter=float(cfg.get("jitter", 0.25)), seed=sc.seed)
    meta.update({"source_resolution": res, "source_half_width": hw})
    same, pq, _ = cost_convention_check(TransportInstance(M, mu, Y, nu, meta=meta))
    cyc = cyclical_monotonicity_check(pq, int(cfg.get("cycles", 10_000)), seed=sc.seed)
    ok = same and cyc.passed and pq.duality_gap <= 1e-9 * max(abs(pq.total_cost), 1.0)
    header = {"plan": json_header(pq), "cost_conventions_equal": same,
              "cycles": cyc.to_dict()}
    return ok, [(f"{sc.name}:1d", pq, header)]


def json_header(plan):
    import json
    return json.loads(plan.header())


RUNNERS = {"constants": run_constants, "deficits": run_deficits,
           "hopflax": run_hopflax, "transport": run_transport}
CRITERION_NAMES = {"constants": "constant chain", "deficits": "non-negativity battery",
                   "hopflax": "hypercontractivity bound", "transport": "transport certificates"}


def execute(sc: Scenario, out_dir: Path, workers=1, figures=False, echo=print):
    """Run the scenario's suites, write the report files, return the exit code."""
    out_dir.mkdir(parents=True, exist_ok=True)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            futures = {s: ex.submit(RUNNERS[s], sc) for s in sc.suites}
            results = {s: f.result() for s, f in futures.items()}
    else:
        results = {s: RUNNERS[s](sc) for s in sc.suites}
    summary = {"scenario": sc.name, "seed": sc.seed, "suites": {}}
    fig = {}
    if "constants" in results:
        ok, data = results["constants"]
        reports.write_json(out_dir / "constants.json", data)
    if "deficits" in results:
        ok, rows = results["deficits"]
        reports.write_rows(out_dir / "deficits.csv", reports.CSV_HEADER,
                           reports.deficit_rows(rows))
        fig["deficits"] = rows
    if "hopflax" in results:
        ok, reps = results["hopflax"]
        table = [r for lab, M, rep in reps for r in reports.hopflax_rows(lab, M, rep)]
        reports.write_rows(out_dir / "hopflax.csv", reports.HOPFLAX_HEADER, table)
        summary["hopflax"] = {lab: rep.summary() for lab, M, rep in reps}
        fig["hopflax"] = [(lab, rep) for lab, M, rep in reps]
    if "transport" in results:
        ok, plans = results["transport"]
        table = [r for lab, plan, _ in plans for r in reports.transport_rows(lab, plan)]
        reports.write_rows(out_dir / "transport.csv", reports.TRANSPORT_HEADER, table)
        summary["transport"] = {lab: head for lab, _, head in plans}
        fig["plans"] = [(lab.replace(":", "_"), plan) for lab, plan, _ in plans]
    failures = []
    for s in sc.suites:
        ok = bool(results[s][0])
        summary["suites"][s] = {"criterion": CRITERION_NAMES[s], "pass": ok}
        echo(f"[{'PASS' if ok else 'FAIL'}] {s}: {CRITERION_NAMES[s]}")
        if not ok:
            failures.append(CRITERION_NAMES[s])
    summary["pass"] = not failures
    summary["failures"] = failures
    reports.write_json(out_dir / "summary.json", summary)
    if figures:
        from .plotting import render
        for f in render(out_dir, fig.get("deficits", ()), fig.get("hopflax", ()),
                        fig.get("plans", ())):
            echo(f"wrote {f}")
    if failures:
        echo("failed: " + ", ".join(failures))
        return 1
    return 0


def run_suite(name, out_dir: Path, workers=1, faults=(), echo=print):
    acceptance.FAULTS.clear()
    acceptance.FAULTS.update(faults)
    try:
        results = acceptance.run_suite(name, workers=workers, echo=echo)
    finally:
        acceptance.FAULTS.clear()
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = [r.name for r in results if not r.passed]
    reports.write_json(out_dir / "summary.json",
                       {"suite": name, "criteria": [r.to_dict() for r in results],
                        "pass": not failures, "failures": failures})
    if failures:
        echo("failed criteria: " + ", ".join(failures))
        return 1
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _common(p):
    p.add_argument("--out", help=f"output directory (default ${ENV_OUT} or ./logsob_out)")
    p.add_argument("--seed", type=int, help="seed for randomized scans (overrides config)")
    p.add_argument("--workers", type=int, default=1, help="concurrent scenarios")
    p.add_argument("--figures", action="store_true",
                   help="also render PNG figures next to the tables (needs matplotlib)")


def build_parser():
    ap = argparse.ArgumentParser(prog="logsob-lab", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, suite in (("constants", "constants"), ("deficit", "deficits"),
                        ("hopflax", "hopflax"), ("transport", "transport")):
        p = sub.add_parser(name, help=f"run the {suite} suite on a scenario")
        p.add_argument("--config", help="scenario INI file (default: built-in flat Gaussian)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value")
        p.set_defaults(only=suite)
        _common(p)
    p = sub.add_parser("run", help="run every suite listed in a scenario file")
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.set_defaults(only=None)
    _common(p)
    p = sub.add_parser("suite", help="run the acceptance battery or its quick subset")
    p.add_argument("name", choices=("acceptance", "quick"))
    p.add_argument("--inject-fault", action="append", default=[], choices=("sign-flip",),
                   help="deliberately break a component to check that the suite notices")
    _common(p)
    return ap


def _out_dir(args):
    return Path(args.out or os.environ.get(ENV_OUT) or "logsob_out")


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return 2
    try:
        if args.command == "suite":
            return run_suite(args.name, _out_dir(args), args.workers, args.inject_fault)
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"scenario.seed={args.seed}")
        if args.only is not None:
            overrides.append(f"scenario.suites={args.only}")
        sc = load_scenario(getattr(args, "config", None), overrides)
        return execute(sc, _out_dir(args), args.workers, args.figures)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
