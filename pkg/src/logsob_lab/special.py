"""Gamma-family special functions and the closed-form constants built on them.

Gamma uses a Lanczos approximation (g = 7, nine coefficients); digamma and
trigamma shift the argument above 8 with the recurrence and then sum the
asymptotic series.  Every constant is assembled in log-space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DomainError

_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_SHIFT = 8.0

EULER_GAMMA = 0.57721566490153286061


def _as_positive(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} must be finite and positive, got {x!r}")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def _lanczos_sum(z):
    acc = np.full_like(z, _LANCZOS_COEF[0])
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc = acc + c / (z + i)
    return acc


def gamma(x):
    """Gamma function for x > 0 (scalar or array)."""
    x = _as_positive(x)
    small = x < 0.5
    # reflection for the small branch: Gamma(x) = pi / (sin(pi x) Gamma(1-x))
    xr = np.where(small, 1.0 - x, x)
    z = xr - 1.0
    t = z + _LANCZOS_G + 0.5
    half = 0.5 * (z + 0.5)
    # split the power so that t**(z+1/2) never overflows before exp(-t) is applied
    pw = np.power(t, half)
    val = math.sqrt(2.0 * math.pi) * _lanczos_sum(z) * (pw * np.exp(-t)) * pw
    val = np.where(small, math.pi / (np.sin(math.pi * x) * val), val)
    return _out(val)


def log_gamma(x):
    """Natural log of Gamma for x > 0."""
    x = _as_positive(x)
    small = x < 0.5
    xr = np.where(small, 1.0 - x, x)
    z = xr - 1.0
    t = z + _LANCZOS_G + 0.5
    val = _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(_lanczos_sum(z))
    val = np.where(small, math.log(math.pi) - np.log(np.abs(np.sin(math.pi * x))) - val, val)
    return _out(val)


def digamma(x):
    """psi = Gamma'/Gamma for x > 0."""
    x = _as_positive(x).copy()
    acc = np.zeros_like(x)
    while True:
        low = x < _SHIFT
        if not np.any(low):
            break
        acc = acc - np.where(low, 1.0 / x, 0.0)
        x = np.where(low, x + 1.0, x)
    r2 = 1.0 / (x * x)
    # Bernoulli tail: -1/12 r2 + 1/120 r2^2 - 1/252 r2^3 + ...
    series = r2 * (-1.0 / 12 + r2 * (1.0 / 120 + r2 * (-1.0 / 252 + r2 * (
        1.0 / 240 + r2 * (-1.0 / 132 + r2 * (691.0 / 32760 + r2 * (-1.0 / 12)))))))
    return _out(acc + np.log(x) - 0.5 / x + series)


def trigamma(x):
    """psi' for x > 0."""
    x = _as_positive(x).copy()
    acc = np.zeros_like(x)
    while True:
        low = x < _SHIFT
        if not np.any(low):
            break
        acc = acc + np.where(low, 1.0 / (x * x), 0.0)
        x = np.where(low, x + 1.0, x)
    r = 1.0 / x
    r2 = r * r
    series = r + 0.5 * r2 + r * r2 * (1.0 / 6 + r2 * (-1.0 / 30 + r2 * (1.0 / 42 + r2 * (
        -1.0 / 30 + r2 * (5.0 / 66 + r2 * (-691.0 / 2730 + r2 * (7.0 / 6)))))))
    return _out(acc + series)


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

def _check_int(k, name):
    if int(k) != k or k < 1:
        raise DomainError(f"{name} must be a positive integer, got {k!r}")
    return int(k)


def _check_q(q):
    if not (1.0 < q <= 2.0):
        raise DomainError(f"q must lie in (1, 2], got {q!r}")
    return float(q)


def conjugate(p):
    """Hoelder conjugate q = p/(p-1)."""
    if p <= 1:
        raise DomainError(f"p must exceed 1, got {p!r}")
    return p / (p - 1.0)


def log_unit_ball_volume(k):
    k = _check_int(k, "k")
    return 0.5 * k * math.log(math.pi) - log_gamma(0.5 * k + 1.0)


def unit_ball_volume(k):
    """Volume of the unit ball in R^k."""
    return math.exp(log_unit_ball_volume(k))


def log_sharp_lsi_constant(p, n):
    q = conjugate(p)
    n = _check_int(n, "n")
    return (math.log(p / n) + (p - 1.0) * (math.log(p - 1.0) - 1.0)
            - (p / n) * (log_unit_ball_volume(n) + log_gamma(n / q + 1.0)))


def sharp_lsi_constant(p, n):
    """Sharp L^p log-Sobolev constant (p/n)((p-1)/e)^(p-1) (w_n Gamma(n/q+1))^(-p/n)."""
    return math.exp(log_sharp_lsi_constant(p, n))


def gaussian_integral(alpha, k, q):
    """Integral of exp(-alpha |x|^q) over R^k."""
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    k = _check_int(k, "k")
    q = _check_q(q)
    return math.exp(-(k / q) * math.log(alpha) + log_unit_ball_volume(k)
                    + log_gamma(k / q + 1.0))


def log_k_sequence(m, n, q):
    m = _check_int(m, "m")
    n = _check_int(n, "n")
    q = _check_q(q)
    s = m + n
    mix = m * math.log(m) + n * math.log(n) - s * math.log(s)
    return (log_unit_ball_volume(m) + log_gamma(m / q + 1.0)
            - log_unit_ball_volume(s) - log_gamma(s / q + 1.0)
            + (0.5 - 1.0 / q) * mix)


def k_sequence(m, n, q):
    """The codimension-dependent sequence K_{m,n,q}."""
    return math.exp(log_k_sequence(m, n, q))


def log_k_limit(n, q):
    n = _check_int(n, "n")
    q = _check_q(q)
    return ((n / q) * math.log(q) - 0.5 * n * math.log(2.0 * math.pi)
            + n * (1.0 / q - 0.5) * (1.0 - math.log(n)))


def k_limit(n, q):
    """Limit of K_{m,n,q} as m grows."""
    return math.exp(log_k_limit(n, q))


def log_general_constants(n, p):
    n = _check_int(n, "n")
    if n < 2:
        raise DomainError(f"n must be at least 2, got {n}")
    if not p >= 2:
        raise DomainError(f"p must be at least 2, got {p!r}")
    log_a = 0.5 * p * (2.0 * math.log(p) - math.log(2.0 * math.pi * math.e * n))
    log_b = (((1.0 + n) / n) * (0.5 * p - 1.0) * math.log(1.0 + n)
             + math.log((p - 1.0) / n)
             + (p - 1.0) * (math.log((p - 1.0) / p) - 1.0)
             - 0.5 * p * math.log(math.pi))
    return log_a, log_b


def general_constants(n, p):
    """Constants (A, B) of the codimension-dependent L^p inequality."""
    la, lb = log_general_constants(n, p)
    return math.exp(la), math.exp(lb)


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------

@dataclass
class ScanReport:
    name: str
    grid: dict
    worst_violation: float
    worst_location: tuple
    tolerance: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.worst_violation <= self.tolerance)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "grid": self.grid,
            "worst_violation": float(self.worst_violation),
            "worst_location": list(self.worst_location),
            "pass": self.passed,
        }


def constant_chain_terms(p, n, m):
    """Log of (lower, middle, upper) in the constant-comparison chain."""
    q = conjugate(p)
    lower = log_sharp_lsi_constant(p, n)
    middle = (math.log(p / n) + (p - 1.0) * (math.log(p - 1.0) - 1.0)
              + (p / n) * log_k_sequence(m, n, q))
    upper = 0.5 * p * (2.0 * math.log(p) - math.log(2.0 * math.pi * math.e * n))
    return lower, middle, upper


def constant_chain_check(ps=(2.0, 2.5, 3.0, 4.0), ns=range(2, 7), ms=range(1, 21),
                         tol=1e-12):
    """Certify lower <= middle <= upper over a grid.

    The violation at a grid point is the larger relative excess
    max(lower/middle - 1, middle/upper - 1).
    """
    ps, ns, ms = np.atleast_1d(ps), list(ns), list(ms)
    worst, where = -math.inf, ()
    for p in ps:
        for n in ns:
            for m in ms:
                lo, mid, up = constant_chain_terms(float(p), n, m)
                v = max(math.expm1(lo - mid), math.expm1(mid - up))
                if v > worst:
                    worst, where = v, (float(p), n, m)
    grid = {"p": [float(p) for p in ps], "n": ns, "m": ms}
    return ScanReport("constant_chain", grid, worst, where, tol)


def constant_chain_spread(n, m):
    """Largest relative gap between the three chain constants at p = 2."""
    terms = constant_chain_terms(2.0, n, m)
    return math.expm1(max(terms) - min(terms))


def gamma_ratio_log(x, t, q):
    """Log of the Gamma-ratio function whose monotonicity drives K_{m,n,q}."""
    x = np.asarray(x, dtype=float)
    s = x + t
    return (log_gamma(s / 2.0) - log_gamma(s / q) + log_gamma(x / q) - log_gamma(x / 2.0)
            + (0.5 - 1.0 / q) * (x * np.log(x) - s * np.log(s)))


def scan_gamma_ratio(qs=(1.1, 1.25, 1.5, 1.75, 2.0), ts=range(1, 11), xs=None, tol=1e-10):
    """Adjacent-difference scan of exp(gamma_ratio_log) in x: it must be non-decreasing."""
    if xs is None:
        xs = np.arange(1, 161) * 0.25
    xs = np.asarray(xs, dtype=float)
    worst, where = -math.inf, ()
    for q in qs:
        for t in ts:
            vals = np.exp(gamma_ratio_log(xs, float(t), float(q)))
            drop = -np.diff(vals)
            i = int(np.argmax(drop))
            if drop[i] > worst:
                worst, where = float(drop[i]), (float(q), float(t), float(xs[i]))
    grid = {"q": list(map(float, qs)), "t": list(map(float, ts)),
            "x": [float(xs[0]), float(xs[-1]), len(xs)]}
    return ScanReport("gamma_ratio_monotone", grid, worst, where, tol)


def scan_gamma_dilation(rs=(1.0, 1.5, 2.0, 3.0, 5.0), xs=None, tol=1e-10):
    """Adjacent-difference scan of log Gamma(rx) - log Gamma(x).

    Differences are taken in log-space because Gamma(5x) overflows for x > 34;
    the log is monotone, so the certified property is the same.
    """
    if xs is None:
        xs = np.arange(4, 321) / 8.0
    xs = np.asarray(xs, dtype=float)
    worst, where = -math.inf, ()
    for r in rs:
        vals = log_gamma(r * xs) - log_gamma(xs)
        drop = -np.diff(vals)
        i = int(np.argmax(drop))
        if drop[i] > worst:
            worst, where = float(drop[i]), (float(r), float(xs[i]))
    grid = {"r": list(map(float, rs)), "x": [float(xs[0]), float(xs[-1]), len(xs)]}
    return ScanReport("gamma_dilation_monotone", grid, worst, where, tol)


def parallelogram_check(q, v, w):
    """Slack of |v+w|^q <= (3-q)|v|^q + q|w|^(q-2)<v,w> + |w|^q.

    v and w may be single vectors or stacks with the vector index last; q may
    broadcast against the leading axes.  The middle term is taken as 0 at w = 0.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(q <= 1.0) or np.any(q > 2.0):
        raise DomainError("q must lie in (1, 2]")
    nv = np.linalg.norm(v, axis=-1)
    nw = np.linalg.norm(w, axis=-1)
    vw = np.sum(v * w, axis=-1)
    safe = np.where(nw > 0, nw, 1.0)
    mid = np.where(nw > 0, q * safe ** (q - 2.0) * vw, 0.0)
    slack = (3.0 - q) * nv ** q + mid + nw ** q - np.linalg.norm(v + w, axis=-1) ** q
    return _out(slack)


def scan_parallelogram(num_draws=1_000_000, dims=range(1, 9), seed=0, tol=1e-12,
                       chunk=200_000):
    """Random-draw scan of parallelogram_check; also records the q = 2 residual."""
    rng = np.random.default_rng(seed)
    dims = list(dims)
    worst, where = -math.inf, ()
    worst_q2 = 0.0
    done = 0
    while done < num_draws:
        size = min(chunk, num_draws - done)
        ks = rng.integers(0, len(dims), size=size)
        # uniform on (1, 2]
        qs = 2.0 - rng.random(size)
        for idx, k in enumerate(dims):
            sel = ks == idx
            cnt = int(sel.sum())
            if not cnt:
                continue
            v = rng.standard_normal((cnt, k))
            w = rng.standard_normal((cnt, k))
            s = np.asarray(parallelogram_check(qs[sel], v, w))
            i = int(np.argmin(s))
            if -s[i] > worst:
                worst, where = float(-s[i]), (float(qs[sel][i]), k)
            s2 = np.asarray(parallelogram_check(2.0, v, w))
            worst_q2 = max(worst_q2, float(np.max(np.abs(s2))))
        done += size
    grid = {"draws": num_draws, "k": dims, "q": "uniform(1,2]", "seed": seed}
    rep = ScanReport("parallelogram", grid, worst, where, tol)
    rep.grid["q2_max_abs_slack"] = worst_q2
    return rep


def psi_plus_x_trigamma(x):
    """psi(x) + x psi'(x), the derivative of x psi(x)."""
    x = np.asarray(x, dtype=float)
    return _out(np.asarray(digamma(x)) + x * np.asarray(trigamma(x)))


def digamma_root(lo=0.05, hi=0.5, tol=1e-10):
    """Root of psi(x) + x psi'(x) = 0 on (0, 1/2) by bisection."""
    flo, fhi = psi_plus_x_trigamma(lo), psi_plus_x_trigamma(hi)
    if not (flo < 0 < fhi):
        raise RuntimeError("digamma_root: bracket does not change sign")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if psi_plus_x_trigamma(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
