"""Diagonal negative-definite operators and their Ornstein-Uhlenbeck quantities.

Everything here is coordinatewise: the operator acts as ``A e_k = -lambda_k e_k``
so the semigroup, the covariance ``Q_t`` and the gradient weight ``Lambda_t`` are
all diagonal and are stored as 1-D arrays over the retained modes.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

FAMILIES = ("burgers1d", "cahnhilliard3d", "h01burgers")


@dataclass(frozen=True)
class SpectralModel:
    lambdas: np.ndarray
    family: str = "explicit"
    modes: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self) -> None:
        lam = np.ascontiguousarray(self.lambdas, dtype=np.float64)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("eigenvalues must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ValueError("eigenvalues must be finite and strictly positive")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @property
    def M(self) -> int:
        return int(self.lambdas.size)

    @property
    def omega(self) -> float:
        """Spectral gap, the smallest eigenvalue."""
        return float(self.lambdas.min())

    @property
    def partial_trace(self) -> float:
        """Trace of the invariant covariance over the retained modes, times two."""
        return float(np.sum(1.0 / self.lambdas))

    @property
    def invariant_variance(self) -> np.ndarray:
        return 0.5 / self.lambdas

    def truncate(self, m: int) -> "SpectralModel":
        if not 1 <= m <= self.M:
            raise ValueError(f"truncation level {m} outside 1..{self.M}")
        modes = None if self.modes is None else self.modes[:m]
        return SpectralModel(self.lambdas[:m], self.family, modes)

    def describe(self) -> dict[str, Any]:
        return {"family": self.family, "M": self.M, "omega": self.omega}


def burgers_eigenvalues(M: int) -> np.ndarray:
    k = np.arange(1, M + 1, dtype=np.float64)
    return k * k


def cahn_hilliard_modes(K: int) -> list[tuple[int, int, int]]:
    """Multi-indices in {0..K}^3 without the origin, sorted by |k|^4 then lexicographically."""
    modes = [k for k in itertools.product(range(K + 1), repeat=3) if any(k)]
    modes.sort(key=lambda k: (sum(c * c for c in k), k))
    return modes


def model_from_config(cfg: Mapping[str, Any] | Sequence[float]) -> SpectralModel:
    """Build a model from ``{"eigenvalues": [...]}`` or ``{"family": ..., "M"/"K": ...}``."""
    if not isinstance(cfg, Mapping):
        return SpectralModel(np.asarray(cfg, dtype=float))
    if "eigenvalues" in cfg:
        return SpectralModel(np.asarray(cfg["eigenvalues"], dtype=float))
    family = cfg.get("family")
    if family in ("burgers1d", "h01burgers"):
        M = int(cfg.get("M", 64))
        if M < 1:
            raise ValueError("model.M must be positive")
        return SpectralModel(burgers_eigenvalues(M), family)
    if family == "cahnhilliard3d":
        K = int(cfg.get("K", 3))
        if K < 1:
            raise ValueError("model.K must be positive")
        modes = cahn_hilliard_modes(K)
        if "M" in cfg:
            modes = modes[: int(cfg["M"])]
        lam = np.array([float(sum(c * c for c in k)) ** 2 for k in modes])
        return SpectralModel(lam, family, tuple(modes))
    raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}")


def _check_vec(model: SpectralModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.M:
        raise ValueError(f"vector has {x.shape[-1]} coordinates, model has {model.M}")
    return x


def semigroup_apply(model: SpectralModel, t: float, x: np.ndarray) -> np.ndarray:
    if t < 0:
        raise ValueError("semigroup time must be non-negative")
    return _check_vec(model, x) * np.exp(-t * model.lambdas)


def frac_power_apply(model: SpectralModel, s: float, x: np.ndarray) -> np.ndarray:
    """Apply ``(-A)^s`` for any real ``s``."""
    return _check_vec(model, x) * model.lambdas**s


def smoothing_norm(model: SpectralModel, t: float) -> float:
    """Operator norm of ``(-A)^{1/2} e^{tA}`` over the retained modes."""
    if t <= 0:
        raise ValueError("smoothing norm needs t > 0")
    lam = model.lambdas
    return float(np.max(np.sqrt(lam) * np.exp(-t * lam)))


def covariance_qt(model: SpectralModel, t: float | np.ndarray) -> np.ndarray:
    """Diagonal of ``Q_t``; broadcasts a time array against the modes."""
    t = np.asarray(t, dtype=np.float64)[..., None]
    if np.any(t < 0):
        raise ValueError("covariance time must be non-negative")
    lam = model.lambdas
    return -np.expm1(-2.0 * lam * t) / (2.0 * lam)


def lambda_t(model: SpectralModel, t: float | np.ndarray) -> np.ndarray:
    """Diagonal of ``Lambda_t = Q_t^{-1/2} e^{tA} (-A)^{1/2}``."""
    t = np.asarray(t, dtype=np.float64)[..., None]
    if np.any(t <= 0):
        raise ValueError("Lambda_t needs t > 0")
    lam = model.lambdas
    return math.sqrt(2.0) * np.sqrt(lam) * np.exp(-t * lam) / np.sqrt(-np.expm1(-2.0 * t * lam))


def gamma_t(model: SpectralModel, t: float | np.ndarray) -> np.ndarray:
    """Diagonal of the shift operator ``Gamma_t = (1 - e^{tA}) (-A)^{-1/2}``."""
    t = np.asarray(t, dtype=np.float64)[..., None]
    lam = model.lambdas
    return -np.expm1(-t * lam) / np.sqrt(lam)


def qt_invsqrt_gamma_norm(model: SpectralModel, t: float) -> float:
    """Norm of ``Q_t^{-1/2} Gamma_t``, which never exceeds sqrt(2)."""
    if t <= 0:
        raise ValueError("needs t > 0")
    q = covariance_qt(model, t)
    # the ratio is sqrt(2 (1 - e^{-lt}) / (1 + e^{-lt})); clip rounding above its supremum
    return min(float(np.max(gamma_t(model, t) / np.sqrt(q))), math.sqrt(2.0))


@dataclass(frozen=True)
class Constants:
    c1: float
    c2: float
    pi_over_sqrt2: float


def _c1_profile(u: np.ndarray | float) -> np.ndarray:
    # sqrt(2) u e^{-u^2} (1 - e^{-2u^2})^{-1/2}, the scaled gradient weight in u = sqrt(t lambda)
    u = np.asarray(u, dtype=np.float64)
    return math.sqrt(2.0) * u * np.exp(-u * u) / np.sqrt(-np.expm1(-2.0 * u * u))


def _golden_max(fun, a: float, b: float, tol: float) -> tuple[float, float]:
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    candidates = [(float(fun(x)), x), (float(fun(a)), a), (float(fun(b)), b)]
    return max(candidates)


@lru_cache(maxsize=None)
def derive_c1(grid_points: int = 100_000, lo: float = 1e-8, hi: float = 10.0, tol: float = 1e-10) -> float:
    """Grid scan plus golden-section polish of the gradient-weight supremum."""
    u = np.linspace(lo, hi, grid_points)
    vals = _c1_profile(u)
    i = int(np.argmax(vals))
    a, b = u[max(i - 1, 0)], u[min(i + 1, grid_points - 1)]
    best, _ = _golden_max(lambda s: float(_c1_profile(s)), float(a), float(b), tol)
    return max(best, float(vals[i]))


def derive_constants(model: SpectralModel) -> Constants:
    c1 = derive_c1()
    w = model.omega
    c2 = math.sqrt(2.0) * math.pi * math.sqrt((1.0 + w) / w) + 4.0 * c1
    return Constants(c1=c1, c2=c2, pi_over_sqrt2=math.pi / math.sqrt(2.0))


def smoothing_constant() -> float:
    """``sup_u u e^{-u^2} = (2e)^{-1/2}``."""
    return 1.0 / math.sqrt(2.0 * math.e)
