"""Library of ambient test functions, evaluated at submanifold vertices.

Every family is a function of the ambient position x in R^N, so one spec works
on every generator.  Centres shorter than N are zero-padded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError
from .geometry import DiscreteSubmanifold, ScalarField


def _center(c, N):
    out = np.zeros(N)
    if c is not None:
        c = np.atleast_1d(np.asarray(c, dtype=float))
        out[:min(N, c.size)] = c[:N]
    return out


def _sq(x, c):
    d = x - c
    return np.sum(d * d, axis=1)


def _smoothstep(t):
    """C-infinity transition from 1 (t <= 0) to 0 (t >= 1)."""
    t = np.clip(t, 0.0, 1.0)
    a = np.where(t < 1.0, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    b = np.where(t > 0.0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
    return a / (a + b)


def gauss(x, alpha=1.0, center=None):
    return np.exp(-0.5 * alpha * _sq(x, _center(center, x.shape[1])))


def gauss_poly(x, alpha=1.0, coef=0.5, center=None):
    r2 = _sq(x, _center(center, x.shape[1]))
    return (1.0 + coef * r2) * np.exp(-0.5 * alpha * r2)


def gauss_sin(x, alpha=1.0, eps=0.1, freq=1.0, center=None):
    return (1.0 + eps * np.sin(freq * x[:, 0])) * gauss(x, alpha, center)


def plateau(x, inner=1.0, outer=2.5, center=None):
    r = np.sqrt(_sq(x, _center(center, x.shape[1])))
    return _smoothstep((r - inner) / (outer - inner))


def mixture(x, alpha=1.0, shift=0.8, ratio=0.5):
    N = x.shape[1]
    c = _center([shift, shift * 0.5], N)
    return gauss(x, 2.0 * alpha, c) + ratio * gauss(x, 2.0 * alpha, -c)


def qgauss(x, lam=1.0, q=1.5, center=None):
    r = np.sqrt(_sq(x, _center(center, x.shape[1])))
    return np.exp(-lam * r ** q)


def expfam(x, alpha=0.25, center=None):
    """exp(alpha <x, x0> - alpha |x0|^2 / 2)."""
    c = _center(center, x.shape[1])
    return np.exp(alpha * (x @ c) - 0.5 * alpha * float(c @ c))


def affine(x, direction=None, scale=1.0, offset=0.0):
    d = _center(direction if direction is not None else [0, 0, 1], x.shape[1])
    return offset + scale * (x @ d)


def quadratic(x, beta=0.5, offset=0.0, center=None):
    return offset - beta * _sq(x, _center(center, x.shape[1]))


def power(x, theta=1.0, scale=1.0):
    return scale * np.linalg.norm(x, axis=1) ** theta


def constant(x, value=1.0):
    return np.full(x.shape[0], float(value))


def neg_norm(x):
    return -np.linalg.norm(x, axis=1)


FAMILIES: dict[str, Callable] = {
    "gauss": gauss,
    "gauss_poly": gauss_poly,
    "gauss_sin": gauss_sin,
    "plateau": plateau,
    "mixture": mixture,
    "qgauss": qgauss,
    "expfam": expfam,
    "affine": affine,
    "quadratic": quadratic,
    "power": power,
    "constant": constant,
    "neg_norm": neg_norm,
}


@dataclass(frozen=True)
class FieldSpec:
    """A named family plus keyword parameters."""
    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown field family {self.family!r}")

    def __call__(self, x):
        return FAMILIES[self.family](np.asarray(x, dtype=float), **self.params)

    def on(self, M: DiscreteSubmanifold) -> ScalarField:
        return ScalarField(M, self(M.vertices))

    @property
    def label(self):
        if not self.params:
            return self.family
        inner = ";".join(f"{k}={_fmt(v)}" for k, v in sorted(self.params.items()))
        return f"{self.family}[{inner}]"


def _fmt(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return "(" + " ".join(_fmt(x) for x in v) + ")"
    if isinstance(v, float):
        return f"{v:g}"
    return str(v)


# Six non-negative fields used by the deficit battery; all decay at least as
# fast as exp(-|x|^2 / 2), so a half-width of 6 leaves tail mass below 1e-15.
STANDARD_FIELDS = (
    FieldSpec("gauss", {"alpha": 1.0}),
    FieldSpec("gauss", {"alpha": 1.0, "center": (0.6, -0.4, 0.3)}),
    FieldSpec("gauss_poly", {"alpha": 1.0, "coef": 0.5}),
    FieldSpec("gauss_sin", {"alpha": 1.0, "eps": 0.1, "freq": 3.0}),
    FieldSpec("plateau", {"inner": 0.8, "outer": 2.4}),
    FieldSpec("mixture", {"alpha": 1.0, "shift": 0.8, "ratio": 0.5}),
)


def gaussian_tail_mass(alpha: float, half_width: float, n: int) -> float:
    """dgamma_alpha mass outside the cube [-w, w]^n, an analytic truncation bound."""
    inside = math.erf(math.sqrt(alpha) * half_width) ** n
    return 1.0 - inside
