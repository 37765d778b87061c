"""Concrete spectral models: 1-D Burgers, 3-D Cahn-Hilliard and Burgers on H^1_0.

Nonlinear drifts are evaluated pseudo-spectrally: synthesise the field on a
midpoint grid, apply the scalar nonlinearity pointwise, project back. The
midpoint rule integrates trigonometric products of degree below ``2 * grid``
exactly, so a round trip through the grid is the identity on retained modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.fft import dst

from .spectral import SpectralModel, burgers_eigenvalues, cahn_hilliard_modes

SQRT_2_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class ScalarFunction:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    bound: float
    lipschitz: float
    growth: float

    def __call__(self, s: np.ndarray) -> np.ndarray:
        return self.fn(s)


def _scaled_cubic_clip(s):
    return np.clip(s**3 - s, -1.0, 1.0)


SCALAR_FUNCTIONS: dict[str, ScalarFunction] = {
    "identity": ScalarFunction("identity", lambda s: s, math.inf, 1.0, 1.0),
    "linear-clip": ScalarFunction("linear-clip", lambda s: np.clip(s, -1.0, 1.0), 1.0, 1.0, 1.0),
    "tanh": ScalarFunction("tanh", np.tanh, 1.0, 1.0, 1.0),
    "scaled-cubic-clip": ScalarFunction("scaled-cubic-clip", _scaled_cubic_clip, 1.0, math.inf, 1.0),
    "classical-burgers": ScalarFunction("classical-burgers", lambda s: 0.5 * s * s, math.inf, math.inf, math.inf),
    "cahn-hilliard-cubic": ScalarFunction("cahn-hilliard-cubic", lambda s: s**3 - s, math.inf, math.inf, math.inf),
}


def scalar_function(name: str) -> ScalarFunction:
    try:
        return SCALAR_FUNCTIONS[name]
    except KeyError:
        raise ValueError(f"unknown scalar function {name!r}; expected one of {sorted(SCALAR_FUNCTIONS)}") from None


def hs_norm(model: SpectralModel, s: float, u: np.ndarray) -> np.ndarray:
    """``|(-A)^s u|``; for Burgers eigenvalues this is ``(sum k^{4s} u_k^2)^{1/2}``."""
    u = np.asarray(u, dtype=np.float64)
    return np.sqrt(np.sum(model.lambdas[: u.shape[-1]] ** (2 * s) * u * u, axis=-1))


class Burgers1D:
    """Dirichlet sine basis ``e_k = sqrt(2/pi) sin(k xi)`` on (0, pi), ``lambda_k = k^2``."""

    def __init__(self, M: int, grid: int | None = None):
        grid = 16 * M if grid is None else grid
        if grid < 4 * M:
            raise ValueError(f"Burgers grid needs at least 4M = {4 * M} points, got {grid}")
        self.M, self.grid = M, grid
        self.model = SpectralModel(burgers_eigenvalues(M), "burgers1d")
        self.xi = (np.arange(grid) + 0.5) * math.pi / grid
        k = np.arange(1, M + 1)
        self.sin_basis = SQRT_2_PI * np.sin(np.outer(self.xi, k))
        self.cos_basis = SQRT_2_PI * np.cos(np.outer(self.xi, k))
        self.dxi = math.pi / grid
        # sine coefficients of the grid field (exact for l + l' < 2 grid), then the
        # closed form <e_l, sqrt(2/pi) cos(k .)> = (2/pi) l (1 - (-1)^{k+l}) / (l^2 - k^2)
        l = np.arange(1, grid + 1)
        kk, ll = np.meshgrid(k, l, indexing="ij")
        with np.errstate(divide="ignore", invalid="ignore"):
            w = (2.0 / math.pi) * ll * (1.0 - (-1.0) ** (kk + ll)) / (ll * ll - kk * kk)
        self._sin_to_cos = np.where(kk == ll, 0.0, w)

    def synthesize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x @ self.sin_basis[:, : x.shape[-1]].T

    def project(self, u: np.ndarray, m: int | None = None) -> np.ndarray:
        m = self.M if m is None else m
        return self.dxi * (np.asarray(u) @ self.sin_basis[:, :m])

    def sine_coefficients(self, u: np.ndarray) -> np.ndarray:
        """All ``grid`` sine coefficients of a grid field via a type-II DST."""
        return 0.5 * self.dxi * SQRT_2_PI * dst(np.asarray(u, dtype=np.float64), type=2, axis=-1)

    def drift(self, x: np.ndarray, h: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """``F^{(k)}(x) = -sqrt(2/pi) int h(x(xi)) cos(k xi) dxi`` on the first ``x.shape[-1]`` modes.

        The field is a sine series, so the odd part of ``h`` gives a smooth odd
        function of ``xi`` (spectrally accurate through the sine coefficients) and
        the even part a smooth even one (spectrally accurate by the midpoint cosine
        sum). Each route alone loses accuracy on the other parity.
        """
        x = np.asarray(x, dtype=np.float64)
        m = x.shape[-1]
        u = self.synthesize(x)
        hp, hm = h(u), h(-u)
        odd, even = 0.5 * (hp - hm), 0.5 * (hp + hm)
        from_sine = self.sine_coefficients(odd) @ self._sin_to_cos[:m].T
        from_cos = self.dxi * (even @ self.cos_basis[:, :m])
        return -(from_sine + from_cos)


class CahnHilliard3D:
    """Neumann cosine basis on (0, pi)^3 with ``lambda_k = |k|^4`` and the constant mode removed."""

    def __init__(self, K: int, grid: int | None = None, M: int | None = None):
        grid = 4 * K if grid is None else grid
        if grid < 4 * K:
            raise ValueError(f"Cahn-Hilliard grid needs at least 4K = {4 * K} points per axis, got {grid}")
        self.K, self.grid = K, grid
        modes = cahn_hilliard_modes(K)
        if M is not None:
            modes = modes[:M]
        self.modes = np.array(modes, dtype=int)
        lam = np.array([float(sum(c * c for c in k)) ** 2 for k in modes])
        self.model = SpectralModel(lam, "cahnhilliard3d", tuple(modes))
        self.xi = (np.arange(grid) + 0.5) * math.pi / grid
        kk = np.arange(K + 1)
        norm = np.where(kk == 0, 1.0 / math.sqrt(math.pi), SQRT_2_PI)
        self.axis_basis = norm * np.cos(np.outer(self.xi, kk))
        self.dxi = math.pi / grid

    def _cube(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[-1]
        cube = np.zeros(x.shape[:-1] + (self.K + 1,) * 3)
        a, b, c = self.modes[:n].T
        cube[..., a, b, c] = x
        return cube

    def synthesize(self, x: np.ndarray) -> np.ndarray:
        B = self.axis_basis
        return np.einsum("...abc,ia,jb,kc->...ijk", self._cube(np.asarray(x, dtype=np.float64)), B, B, B,
                         optimize=True)

    def project(self, u: np.ndarray, m: int | None = None) -> np.ndarray:
        m = len(self.modes) if m is None else m
        B = self.axis_basis
        cube = np.einsum("...ijk,ia,jb,kc->...abc", u, B, B, B, optimize=True) * self.dxi**3
        a, b, c = self.modes[:m].T
        return cube[..., a, b, c]

    def drift(self, x: np.ndarray, h: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """``h(x) - mean(h(x))`` in coordinates; the constant mode is not retained."""
        x = np.asarray(x, dtype=np.float64)
        return self.project(h(self.synthesize(x)), x.shape[-1])

    def constant_coefficient(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("...ijk,i,j,k->...", u, *(self.axis_basis[:, 0],) * 3) * self.dxi**3


class H01Burgers:
    """Burgers drift written in the orthonormal basis ``e_k / k`` of H^1_0(0, pi).

    Coordinates are with respect to that basis, so the H^1_0 norm is the Euclidean
    norm of the coefficient vector. The drift is ``F0 + (-A)^{-1/2} B`` with the
    transport part ``F0(x) = 1/2 (-A)^{-1/2} d/dxi [x^2]`` and the perturbation
    ``B(x) = h(x) g(|x|)``.
    """

    def __init__(self, M: int, grid: int | None = None, perturbation: str = "sqrt-saturation"):
        self.burgers = Burgers1D(M, grid)
        self.M = M
        self.model = SpectralModel(burgers_eigenvalues(M), "h01burgers")
        self.k = np.arange(1, M + 1, dtype=np.float64)
        if perturbation not in ("sqrt-saturation", "none"):
            raise ValueError(f"unknown H^1_0 perturbation {perturbation!r}")
        self.perturbation = perturbation
        self.c0 = 0.0

    def to_l2(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x / self.k[: x.shape[-1]]

    def norm(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.asarray(x, dtype=np.float64), axis=-1)

    def transport(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        m = x.shape[-1]
        return self.k[:m] * self.burgers.drift(self.to_l2(x), lambda s: 0.5 * s * s)

    def perturbation_field(self, x: np.ndarray) -> np.ndarray:
        """``B(x)`` in H^1_0 coordinates."""
        x = np.asarray(x, dtype=np.float64)
        if self.perturbation == "none":
            return np.zeros_like(x)
        # h is the identity on fields, so B is the coefficient vector scaled by g(|x|)
        return x * np.minimum(np.sqrt(self.norm(x)), 1.0)[..., None]

    def drift(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        m = x.shape[-1]
        return self.transport(x) + self.perturbation_field(x) / self.k[:m]
