"""Drift fields ``F`` entering the equation through ``(-A)^{1/2} F(X)``.

Every drift maps a batch of coefficient vectors of shape (N, m) to (N, m). That
lets the same object drive an ``m``-mode Galerkin simulation for any ``m``.
"""

from __future__ import annotations

import math
from typing import Any, Mapping

import numpy as np

from .gaussian import SeedSpec, tensor_rule
from .models import Burgers1D, CahnHilliard3D, H01Burgers, scalar_function
from .spectral import SpectralModel, covariance_qt


class Drift:
    kind = "abstract"
    # coordinates the field depends on and is supported on; None means all of them
    active: tuple[int, ...] | None = None
    sup_norm: float = math.inf
    linear_growth: float | None = None

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(np.atleast_2d(np.asarray(x, dtype=np.float64)))

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.sup_norm)

    def deviation_bound(self, z: np.ndarray) -> float:
        """An upper bound on ``sup_x |F(x) - z|``, infinite when unknown."""
        return math.inf

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind}


def _pad(v: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros(m)
    k = min(m, v.size)
    out[:k] = v[:k]
    return out


class ZeroDrift(Drift):
    kind = "zero"
    active = ()
    sup_norm = 0.0
    linear_growth = 0.0

    def evaluate(self, x):
        return np.zeros_like(x)

    def deviation_bound(self, z):
        return float(np.linalg.norm(z))


class ConstantDrift(Drift):
    kind = "constant"
    active = ()

    def __init__(self, z):
        self.z = np.asarray(z, dtype=np.float64)
        self.sup_norm = float(np.linalg.norm(self.z))
        self.linear_growth = self.sup_norm

    def evaluate(self, x):
        return np.broadcast_to(_pad(self.z, x.shape[-1]), x.shape).copy()

    def deviation_bound(self, z):
        return float(np.linalg.norm(_pad(self.z, max(len(z), self.z.size)) - _pad(np.asarray(z), max(len(z), self.z.size))))

    def describe(self):
        return {"kind": self.kind, "z": self.z.tolist()}


class NearConstantDrift(Drift):
    """``F(x) = z + delta * n^{-1/2} sum_a p(scale * x_a) e_a`` over the active coordinates.

    The profile ``p`` is ``tanh`` or ``sin``; both are bounded by one, so
    ``|F - z| <= delta``.
    """

    kind = "near_constant"
    PROFILES = {"tanh": np.tanh, "sin": np.sin}

    def __init__(self, z, delta: float, active=(0,), profile: str = "tanh", scale: float = 1.0):
        if not 0 <= delta < 0.25:
            raise ValueError(f"near_constant drift needs 0 <= delta < 1/4, got {delta}")
        if profile not in self.PROFILES:
            raise ValueError(f"unknown profile {profile!r}")
        self.z = np.asarray(z, dtype=np.float64)
        self.delta, self.profile, self.scale = float(delta), profile, float(scale)
        self.active = tuple(int(a) for a in active)
        self.sup_norm = float(np.linalg.norm(self.z)) + self.delta
        self.linear_growth = self.sup_norm

    def evaluate(self, x):
        m = x.shape[-1]
        out = np.broadcast_to(_pad(self.z, m), x.shape).copy()
        p = self.PROFILES[self.profile]
        c = self.delta / math.sqrt(max(len(self.active), 1))
        for a in self.active:
            if a < m:
                out[:, a] += c * p(self.scale * x[:, a])
        return out

    def deviation_bound(self, z):
        size = max(len(z), self.z.size)
        return float(np.linalg.norm(_pad(self.z, size) - _pad(np.asarray(z), size))) + self.delta

    def describe(self):
        return {"kind": self.kind, "z": self.z.tolist(), "delta": self.delta, "active": list(self.active),
                "profile": self.profile, "scale": self.scale}


class BurgersDrift(Drift):
    kind = "nemytskii_burgers"

    def __init__(self, M: int, h: str = "tanh", grid: int | None = None):
        self.h = scalar_function(h)
        self.model_obj = Burgers1D(M, grid)
        self.sup_norm = self.h.bound * math.sqrt(math.pi)
        self.linear_growth = self.h.growth * max(math.sqrt(math.pi), 1.0) if math.isfinite(self.h.growth) else None

    def evaluate(self, x):
        return self.model_obj.drift(x, self.h)

    def describe(self):
        return {"kind": self.kind, "h": self.h.name, "grid": self.model_obj.grid}


class CahnHilliardDrift(Drift):
    kind = "cahn_hilliard"

    def __init__(self, K: int, h: str = "scaled-cubic-clip", grid: int | None = None):
        self.h = scalar_function(h)
        self.model_obj = CahnHilliard3D(K, grid)
        self.sup_norm = self.h.bound * math.pi**1.5
        self.linear_growth = None if not math.isfinite(self.h.growth) else self.h.growth * max(math.pi**1.5, 1.0)

    def evaluate(self, x):
        return self.model_obj.drift(x, self.h)

    def describe(self):
        return {"kind": self.kind, "h": self.h.name, "grid": self.model_obj.grid}


class H01BurgersDrift(Drift):
    kind = "h01_burgers"

    def __init__(self, M: int, perturbation: str = "sqrt-saturation", grid: int | None = None):
        self.model_obj = H01Burgers(M, grid, perturbation)
        self.perturbation = perturbation

    def evaluate(self, x):
        return self.model_obj.drift(x)

    def describe(self):
        return {"kind": self.kind, "perturbation": self.perturbation}


def cutoff(s: np.ndarray, profile: str = "smooth") -> np.ndarray:
    """1 on ``s <= 1``, 0 on ``s >= 2``; smooth or piecewise-linear in between."""
    s = np.asarray(s, dtype=np.float64)
    if profile == "linear":
        return np.clip(2.0 - s, 0.0, 1.0)
    if profile != "smooth":
        raise ValueError(f"unknown cutoff profile {profile!r}")
    out = np.where(s <= 1.0, 1.0, 0.0)
    mid = (s > 1.0) & (s < 2.0)
    if np.any(mid):
        a = 2.0 - s[mid]
        b = s[mid] - 1.0
        ea, eb = np.exp(-1.0 / a), np.exp(-1.0 / b)
        out = out.astype(np.float64)
        out[mid] = ea / (ea + eb)
    return out


class TruncatedDrift(Drift):
    """``F(y) eta(|y| / n)``; identical to ``F`` wherever ``|y| <= n``."""

    kind = "truncated"

    def __init__(self, inner: Drift, n: float, eta: str = "smooth"):
        if n <= 0:
            raise ValueError("truncation level must be positive")
        self.inner, self.n, self.eta = inner, float(n), eta
        self.active = inner.active
        self.linear_growth = inner.linear_growth
        # supported in |y| <= 2n; the value is only known when the inner growth is
        if inner.linear_growth is not None and math.isfinite(inner.linear_growth):
            self.sup_norm = min(inner.sup_norm, inner.linear_growth * (1.0 + 2.0 * self.n))

    @property
    def bounded(self) -> bool:
        return True

    def evaluate(self, x):
        r = np.linalg.norm(x, axis=-1) / self.n
        return self.inner.evaluate(x) * cutoff(r, self.eta)[:, None]

    def describe(self):
        return {"kind": self.kind, "n": self.n, "eta": self.eta, "inner": self.inner.describe()}


class MollifiedDrift(Drift):
    """``F_n(x) = E F(e^{A/n} x + Y)``, ``Y ~ N(0, Q_{1/n})``.

    Cylindrical inner drifts are integrated by tensor Gauss-Hermite on their active
    coordinates; others by Monte Carlo with a fixed internal seed.
    """

    kind = "mollified"

    def __init__(self, model: SpectralModel, inner: Drift, n: float, order: int = 20,
                 inner_samples: int = 64, seed: int = 0):
        if n <= 0:
            raise ValueError("mollification level must be positive")
        if not inner.bounded:
            raise ValueError(f"mollification needs a bounded drift; wrap {inner.kind!r} in a truncation first")
        self.model, self.inner, self.n = model, inner, float(n)
        self.order, self.inner_samples, self.seed = order, inner_samples, seed
        self.active = inner.active
        self.sup_norm = inner.sup_norm
        self.linear_growth = inner.linear_growth
        self._decay = np.exp(-model.lambdas / self.n)
        self._sd = np.sqrt(covariance_qt(model, 1.0 / self.n))
        if self.active is not None:
            self._nodes, self._weights = tensor_rule(len(self.active), order)
        else:
            self._xi = SeedSpec(seed, 0).generator().standard_normal((inner_samples, model.M))

    def deviation_bound(self, z):
        return self.inner.deviation_bound(z)

    def evaluate(self, x):
        N, m = x.shape
        base = x * self._decay[:m]
        if self.active is not None:
            idx = [a for a in self.active if a < m]
            if not idx:
                return self.inner.evaluate(base)
            nodes = self._nodes if len(idx) == len(self.active) else tensor_rule(len(idx), self.order)[0]
            weights = self._weights if len(idx) == len(self.active) else tensor_rule(len(idx), self.order)[1]
            pts = np.repeat(base[:, None, :], len(weights), axis=1)
            pts[:, :, idx] += nodes * self._sd[idx]
            vals = self.inner.evaluate(pts.reshape(-1, m)).reshape(N, len(weights), m)
            return np.einsum("q,nqm->nm", weights, vals)
        pts = base[:, None, :] + self._xi[None, :, :m] * self._sd[:m]
        vals = self.inner.evaluate(pts.reshape(-1, m)).reshape(N, self.inner_samples, m)
        return vals.mean(axis=1)

    def describe(self):
        return {"kind": self.kind, "n": self.n, "inner": self.inner.describe()}


def drift_from_config(cfg: Mapping[str, Any], model: SpectralModel) -> Drift:
    kind = cfg.get("kind", "zero")
    if kind == "zero":
        return ZeroDrift()
    if kind == "constant":
        return ConstantDrift(_pad(np.asarray(cfg.get("z", []), dtype=float), model.M))
    if kind == "near_constant":
        return NearConstantDrift(_pad(np.asarray(cfg.get("z", []), dtype=float), model.M), cfg.get("delta", 0.2),
                                 cfg.get("active", [0]), cfg.get("profile", "tanh"), cfg.get("scale", 1.0))
    if kind == "nemytskii_burgers":
        return BurgersDrift(model.M, cfg.get("h", "tanh"), cfg.get("grid"))
    if kind == "cahn_hilliard":
        if model.modes is None:
            raise ValueError("cahn_hilliard drift needs a cahnhilliard3d model")
        K = max(max(k) for k in model.modes)
        return CahnHilliardDrift(K, cfg.get("h", "scaled-cubic-clip"), cfg.get("grid"))
    if kind == "h01_burgers":
        return H01BurgersDrift(model.M, cfg.get("perturbation", "sqrt-saturation"), cfg.get("grid"))
    if kind == "truncated":
        return TruncatedDrift(drift_from_config(cfg["inner"], model), cfg.get("n", 10.0), cfg.get("eta", "smooth"))
    if kind == "mollified":
        return MollifiedDrift(model, drift_from_config(cfg["inner"], model), cfg.get("n", 64.0),
                              inner_samples=cfg.get("inner_samples", 64), seed=cfg.get("seed", 0))
    raise ValueError(f"unknown drift kind {kind!r}")
