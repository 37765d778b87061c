"""Reproducible Gaussian sampling and Gauss-Hermite integration.

Streams are derived from ``SeedSequence([master_seed, stream_id])`` feeding a
Philox counter-based generator, so stream ``i`` is the same no matter how work is
split across chunks or processes. Normal variates come from numpy's
``Generator.standard_normal`` (ziggurat method).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .spectral import SpectralModel

MAX_GH_DIM = 3


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if self.master_seed < 0 or self.stream_id < 0:
            raise ValueError("seeds and stream ids must be non-negative integers")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence([self.master_seed, self.stream_id])
        return np.random.Generator(np.random.Philox(ss))

    def child(self, offset: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.stream_id + offset)


def stream(master_seed: int, stream_id: int) -> np.random.Generator:
    return SeedSpec(master_seed, stream_id).generator()


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    order: int


@lru_cache(maxsize=64)
def gauss_hermite_rule(order: int) -> QuadratureRule:
    """Probabilists' Gauss-Hermite rule with weights summing to one."""
    if order < 1:
        raise ValueError("quadrature order must be positive")
    x, w = hermegauss(order)
    w = w / math.sqrt(2.0 * math.pi)
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(x, w, order)


def tensor_rule(dim: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Standard-normal tensor nodes, shape (order**dim, dim), and product weights."""
    if dim > MAX_GH_DIM:
        raise ValueError(f"tensor Gauss-Hermite is limited to dim <= {MAX_GH_DIM}, got {dim}")
    rule = gauss_hermite_rule(order)
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    grids = np.meshgrid(*([rule.nodes] * dim), indexing="ij")
    wgrids = np.meshgrid(*([rule.weights] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


def gh_integrate(
    dim: int,
    cov: np.ndarray,
    g: Callable[[np.ndarray], np.ndarray],
    order: int = 40,
    mean: np.ndarray | None = None,
) -> float:
    """``E g(Y)`` for ``Y ~ N(mean, diag(cov))``; ``g`` maps (P, dim) points to (P,) values."""
    cov = np.asarray(cov, dtype=np.float64).reshape(-1)
    if cov.size != dim:
        raise ValueError("cov must have one entry per dimension")
    if np.any(cov < 0):
        raise ValueError("covariance entries must be non-negative")
    nodes, weights = tensor_rule(dim, order)
    m = np.zeros(dim) if mean is None else np.asarray(mean, dtype=np.float64)
    pts = m + nodes * np.sqrt(cov)
    return float(np.dot(weights, np.asarray(g(pts), dtype=np.float64)))


def sample_gaussian(model: SpectralModel, cov: np.ndarray, seed: SeedSpec, count: int) -> np.ndarray:
    """``count`` draws of ``N(0, diag(cov))`` on the model's modes, shape (count, M)."""
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (model.M,):
        raise ValueError(f"cov must have shape ({model.M},)")
    if np.any(cov < 0):
        raise ValueError("covariance entries must be non-negative")
    z = seed.generator().standard_normal((count, model.M))
    return z * np.sqrt(cov)


def export_ensemble(samples: np.ndarray, path: str | Path, fmt: str = "binary") -> Path:
    """Write a (count, M) ensemble as little-endian row-major float64 or as CSV."""
    path = Path(path)
    arr = np.ascontiguousarray(samples, dtype="<f8")
    if arr.ndim != 2:
        raise ValueError("ensemble must be a 2-D array")
    if fmt == "binary":
        path.write_bytes(arr.tobytes(order="C"))
    elif fmt == "csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{k + 1}" for k in range(arr.shape[1])])
            for row in arr:
                w.writerow([repr(float(v)) for v in row])
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return path


def load_ensemble(path: str | Path, M: int) -> np.ndarray:
    raw = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
    return raw.reshape(-1, M)
