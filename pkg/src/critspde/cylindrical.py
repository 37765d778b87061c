"""Bounded cylindrical test functions depending on at most three coordinates.

A function is stored as a short sum of products of univariate factors,
``f(y) = Re sum_j c_j prod_i g_ji(y_i)``. Tensor-product quadrature of such a sum
factorises exactly, so Gaussian expectations cost ``n * order`` evaluations
instead of ``order ** n``. Coordinates are 0-based mode indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.special import erf

MAX_ACTIVE = 3


class NotDifferentiable(ValueError):
    pass


class Factor:
    """Univariate building block; ``breakpoints`` lists kinks or jumps."""

    breakpoints: tuple[float, ...] = ()
    smooth: bool = True

    def __call__(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def d1(self, s: np.ndarray) -> np.ndarray:
        raise NotDifferentiable(f"{type(self).__name__} has no derivative")

    def d2(self, s: np.ndarray) -> np.ndarray:
        raise NotDifferentiable(f"{type(self).__name__} has no second derivative")


class One(Factor):
    def __call__(self, s):
        return np.ones_like(s)

    def d1(self, s):
        return np.zeros_like(s)

    def d2(self, s):
        return np.zeros_like(s)


@dataclass(frozen=True)
class ExpI(Factor):
    a: float

    def __call__(self, s):
        return np.exp(1j * self.a * s)

    def d1(self, s):
        return 1j * self.a * np.exp(1j * self.a * s)

    def d2(self, s):
        return -self.a * self.a * np.exp(1j * self.a * s)


@dataclass(frozen=True)
class Bump(Factor):
    center: float
    width: float

    def __call__(self, s):
        return np.exp(-0.5 * ((s - self.center) / self.width) ** 2)

    def d1(self, s):
        r = (s - self.center) / self.width**2
        return -r * self(s)

    def d2(self, s):
        r = (s - self.center) / self.width
        return (r * r - 1.0) / self.width**2 * self(s)


@dataclass(frozen=True)
class Tanh(Factor):
    a: float

    def __call__(self, s):
        return np.tanh(self.a * s)

    def d1(self, s):
        return self.a / np.cosh(self.a * s) ** 2

    def d2(self, s):
        th = np.tanh(self.a * s)
        return -2.0 * self.a**2 * th * (1.0 - th * th)


@dataclass(frozen=True)
class ErfClip(Factor):
    """``erf(s / (sqrt(2) eps))``, a smoothed sign with transition width ``eps``."""

    eps: float

    def __call__(self, s):
        return erf(s / (math.sqrt(2.0) * self.eps))

    def d1(self, s):
        return math.sqrt(2.0 / math.pi) / self.eps * np.exp(-0.5 * (s / self.eps) ** 2)

    def d2(self, s):
        return -s / self.eps**2 * self.d1(s)


@dataclass(frozen=True)
class AbsClip(Factor):
    center: float
    cap: float
    smooth = False

    @property
    def breakpoints(self):
        return (self.center - self.cap, self.center, self.center + self.cap)

    @property
    def pieces(self):
        c, a = self.center, self.cap
        return ((-np.inf, c - a, a, 0.0), (c - a, c, c, -1.0), (c, c + a, -c, 1.0), (c + a, np.inf, a, 0.0))

    def __call__(self, s):
        return np.minimum(np.abs(s - self.center), self.cap)


@dataclass(frozen=True)
class Step(Factor):
    center: float
    smooth = False

    @property
    def breakpoints(self):
        return (self.center,)

    @property
    def pieces(self):
        return ((-np.inf, self.center, -1.0, 0.0), (self.center, np.inf, 1.0, 0.0))

    def __call__(self, s):
        return np.sign(s - self.center)


class Square(Factor):
    def __call__(self, s):
        return s * s

    def d1(self, s):
        return 2.0 * s

    def d2(self, s):
        return 2.0 * np.ones_like(s)


Term = tuple[complex, tuple[Factor, ...]]


@dataclass(frozen=True)
class CylFunction:
    active: tuple[int, ...]
    terms: tuple[Term, ...]
    sup_norm: float
    shape: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.active) > MAX_ACTIVE:
            raise ValueError(f"at most {MAX_ACTIVE} active coordinates, got {len(self.active)}")
        if len(set(self.active)) != len(self.active) or any(a < 0 for a in self.active):
            raise ValueError("active coordinates must be distinct non-negative indices")
        for _, factors in self.terms:
            if len(factors) != len(self.active):
                raise ValueError("each term needs one factor per active coordinate")

    @property
    def n(self) -> int:
        return len(self.active)

    @property
    def smooth(self) -> bool:
        return all(fa.smooth for _, fs in self.terms for fa in fs)

    def __call__(self, y: np.ndarray) -> np.ndarray:
        """Evaluate on active-coordinate points of shape (..., n)."""
        y = np.asarray(y, dtype=np.float64)
        total = 0.0
        for c, factors in self.terms:
            prod = c * np.ones(y.shape[:-1], dtype=complex)
            for i, fa in enumerate(factors):
                prod = prod * fa(y[..., i])
            total = total + prod
        return np.real(total) * np.ones(y.shape[:-1])

    def at(self, x: np.ndarray) -> np.ndarray:
        """Evaluate on full coefficient vectors of shape (..., M)."""
        x = np.asarray(x, dtype=np.float64)
        return self(x[..., list(self.active)])

    def grad(self, y: np.ndarray) -> np.ndarray:
        return self._derivs(y, second=False)

    def hess_diag(self, y: np.ndarray) -> np.ndarray:
        return self._derivs(y, second=True)

    def _derivs(self, y: np.ndarray, second: bool) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        out = np.zeros(y.shape, dtype=complex)
        for c, factors in self.terms:
            vals = [fa(y[..., i]) for i, fa in enumerate(factors)]
            for k, fa in enumerate(factors):
                d = fa.d2(y[..., k]) if second else fa.d1(y[..., k])
                prod = c * d
                for i, v in enumerate(vals):
                    if i != k:
                        prod = prod * v
                out[..., k] += prod
        return np.real(out)

    def restrict(self, m: int) -> "CylFunction":
        """Compose with the projection onto the first ``m`` modes."""
        keep = [i for i, a in enumerate(self.active) if a < m]
        if len(keep) == self.n:
            return self
        terms = []
        for c, factors in self.terms:
            coef = complex(c)
            for i, fa in enumerate(factors):
                if i not in keep:
                    coef *= complex(np.asarray(fa(np.zeros(1)))[0])
            terms.append((coef, tuple(factors[i] for i in keep)))
        return CylFunction(
            tuple(self.active[i] for i in keep),
            tuple(terms),
            self.sup_norm,
            f"{self.shape}|restricted",
            dict(self.params, restricted_to=m),
        )

    def describe(self) -> dict[str, Any]:
        return {"shape": self.shape, "active": list(self.active), "params": dict(self.params)}


def _vec(v: float | Sequence[float] | None, n: int, default: float) -> list[float]:
    if v is None:
        return [default] * n
    if np.isscalar(v):
        return [float(v)] * n
    v = [float(a) for a in v]
    if len(v) != n:
        raise ValueError(f"parameter needs {n} entries, got {len(v)}")
    return v


def cosine(active: Sequence[int], freq=None, phase: float = 0.0, amp: float = 1.0) -> CylFunction:
    """``amp * cos(sum_i a_i y_i + phase)``."""
    active = tuple(active)
    a = _vec(freq, len(active), 1.0)
    coef = amp * complex(math.cos(phase), math.sin(phase))
    return CylFunction(active, ((coef, tuple(ExpI(ai) for ai in a)),), abs(amp), "cosine",
                       {"freq": a, "phase": phase, "amp": amp})


def gaussian_bump(active: Sequence[int], center=None, width: float = 1.0, amp: float = 1.0) -> CylFunction:
    active = tuple(active)
    c = _vec(center, len(active), 0.0)
    if width <= 0:
        raise ValueError("bump width must be positive")
    return CylFunction(active, ((complex(amp), tuple(Bump(ci, width) for ci in c)),), abs(amp),
                       "gaussian-bump", {"center": c, "width": width, "amp": amp})


def tanh_product(active: Sequence[int], scale=None, amp: float = 1.0) -> CylFunction:
    active = tuple(active)
    a = _vec(scale, len(active), 1.0)
    return CylFunction(active, ((complex(amp), tuple(Tanh(ai) for ai in a)),), abs(amp),
                       "tanh-product", {"scale": a, "amp": amp})


def erf_clip(active: Sequence[int], eps=0.25, amp: float = 1.0) -> CylFunction:
    """Product of smoothed signs; sharp ``eps`` makes it close to an indicator difference."""
    active = tuple(active)
    e = _vec(eps, len(active), 0.25)
    if min(e) <= 0:
        raise ValueError("eps must be positive")
    return CylFunction(active, ((complex(amp), tuple(ErfClip(ei) for ei in e)),), abs(amp),
                       "indicator-smooth", {"eps": e, "amp": amp})


def abs_clip(coord: int, center: float = 0.0, cap: float = 1.0, amp: float = 1.0) -> CylFunction:
    """``amp * min(|y - center|, cap)``, Lipschitz with a kink at ``center``."""
    if cap <= 0:
        raise ValueError("cap must be positive")
    return CylFunction((coord,), ((complex(amp), (AbsClip(center, cap),)),), abs(amp) * cap,
                       "abs-clip", {"center": center, "cap": cap, "amp": amp})


def step(coord: int, center: float = 0.0, amp: float = 1.0) -> CylFunction:
    """``amp * sign(y - center)``, bounded Borel but discontinuous."""
    return CylFunction((coord,), ((complex(amp), (Step(center),)),), abs(amp), "step",
                       {"center": center, "amp": amp})


def quadratic(active: Sequence[int], weights=None) -> CylFunction:
    """``sum_i q_i y_i^2``; unbounded, intended only for generator checks."""
    active = tuple(active)
    q = _vec(weights, len(active), 1.0)
    terms = []
    for k in range(len(active)):
        terms.append((complex(q[k]), tuple(Square() if i == k else One() for i in range(len(active)))))
    return CylFunction(active, tuple(terms), math.inf, "quadratic", {"weights": q})


def constant(value: float) -> CylFunction:
    return CylFunction((), ((complex(value), ()),), abs(value), "constant", {"value": value})


SHAPES = {
    "cosine": lambda a, p: cosine(a, p.get("freq"), p.get("phase", 0.0), p.get("amp", 1.0)),
    "gaussian-bump": lambda a, p: gaussian_bump(a, p.get("center"), p.get("width", 1.0), p.get("amp", 1.0)),
    "tanh-product": lambda a, p: tanh_product(a, p.get("scale"), p.get("amp", 1.0)),
    "indicator-smooth": lambda a, p: erf_clip(a, p.get("eps", 0.25), p.get("amp", 1.0)),
    "abs-clip": lambda a, p: abs_clip(_single(a), p.get("center", 0.0), p.get("cap", 1.0), p.get("amp", 1.0)),
    "step": lambda a, p: step(_single(a), p.get("center", 0.0), p.get("amp", 1.0)),
    "quadratic": lambda a, p: quadratic(a, p.get("weights")),
    "constant": lambda a, p: constant(p.get("value", 1.0)),
}


def _single(active: Sequence[int]) -> int:
    if len(active) != 1:
        raise ValueError("this shape depends on exactly one coordinate")
    return int(active[0])


def from_config(cfg: Mapping[str, Any]) -> CylFunction:
    shape = cfg.get("shape")
    if shape not in SHAPES:
        raise ValueError(f"unknown test-function shape {shape!r}; expected one of {sorted(SHAPES)}")
    return SHAPES[shape](tuple(int(a) for a in cfg.get("active", [])), dict(cfg.get("params", {})))
