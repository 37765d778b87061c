"""Shifted Ornstein-Uhlenbeck semigroup acting on cylindrical functions.

``P_t^z f(x) = E f(e^{tA} x + Gamma_t z + Q_t^{1/2} xi)`` with ``xi`` standard normal.
Gradients use the Gaussian integration-by-parts weight ``Lambda_t h . xi``;
coordinates outside the support of ``f`` integrate to zero and are skipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import erf, ndtr
from scipy.stats import qmc

from .cylindrical import CylFunction, ErfClip, One, Tanh
from .gaussian import SeedSpec, gauss_hermite_rule
from .spectral import SpectralModel, derive_c1, lambda_t

XI_MAX = 10.0
_FIXED_SPLITS = np.linspace(-8.0, 8.0, 17)
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


@dataclass(frozen=True)
class Estimate:
    value: Any
    stderr: Any
    details: dict = field(default_factory=dict)


def _piecewise_moments(fa, mean, sigma, breakpoints=None):
    # composite Gauss-Legendre in xi, split at the images of the factor's breakpoints
    shape = np.broadcast_shapes(np.shape(mean), np.shape(sigma))
    mean = np.broadcast_to(mean, shape)
    sigma = np.broadcast_to(sigma, shape)
    safe = np.where(sigma > 0, sigma, 1.0)
    bp = np.asarray(fa.breakpoints if breakpoints is None else breakpoints, dtype=np.float64)
    images = (bp - mean[..., None]) / safe[..., None]
    cuts = np.concatenate(
        [np.broadcast_to(_FIXED_SPLITS, shape + _FIXED_SPLITS.shape), np.clip(images, -XI_MAX, XI_MAX),
         np.full(shape + (1,), -XI_MAX), np.full(shape + (1,), XI_MAX)], axis=-1)
    cuts = np.sort(cuts, axis=-1)
    lo, hi = cuts[..., :-1, None], cuts[..., 1:, None]
    half = 0.5 * (hi - lo)
    xi = lo + half * (_GL_NODES + 1.0)
    w = half * _GL_WEIGHTS * np.exp(-0.5 * xi * xi) / math.sqrt(2.0 * math.pi)
    vals = fa(mean[..., None, None] + sigma[..., None, None] * xi)
    a = np.sum(w * vals, axis=(-2, -1))
    b = np.sum(w * xi * vals, axis=(-2, -1))
    degenerate = sigma <= 0
    if np.any(degenerate):
        a = np.where(degenerate, fa(mean), a)
        b = np.where(degenerate, 0.0, b)
    return a, b


def _linear_piece_moments(fa, mean, sigma):
    # exact moments of a piecewise-linear factor: sums of c + d s over intervals
    shape = np.broadcast_shapes(np.shape(mean), np.shape(sigma))
    mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), shape)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), shape)
    safe = np.where(sigma > 0, sigma, 1.0)
    a = np.zeros(shape)
    b = np.zeros(shape)
    for lo, hi, c, d in fa.pieces:
        al = (lo - mean) / safe if np.isfinite(lo) else np.full(shape, -np.inf)
        be = (hi - mean) / safe if np.isfinite(hi) else np.full(shape, np.inf)
        mass = ndtr(be) - ndtr(al)
        pa, pb = _phi(al), _phi(be)
        xa = np.where(np.isfinite(al), al, 0.0) * pa
        xb = np.where(np.isfinite(be), be, 0.0) * pb
        base = c + d * mean
        a += base * mass + d * sigma * (pa - pb)
        b += base * (pa - pb) + d * sigma * (mass + xa - xb)
    degenerate = sigma <= 0
    if np.any(degenerate):
        a = np.where(degenerate, fa(mean), a)
        b = np.where(degenerate, 0.0, b)
    return a, b


def _phi(u):
    with np.errstate(over="ignore", invalid="ignore"):
        return np.where(np.isfinite(u), np.exp(-0.5 * np.square(np.where(np.isfinite(u), u, 0.0))), 0.0) / math.sqrt(
            2.0 * math.pi)


ROUTES = ("default", "independent")


def _transition_cuts(width: float) -> np.ndarray:
    return width * np.array([-6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0])


def univariate_moments(fa, mean, sigma, order: int = 40, route: str = "default"):
    """``(E g(m + s xi), E xi g(m + s xi))`` for one factor, broadcasting over batches.

    The default route uses closed forms for piecewise-linear and erf factors and
    composite Gauss-Legendre, split around the transition, for tanh. The
    independent route swaps each of these for a different rule (split
    Gauss-Legendre for the closed forms, uniform panels for tanh) so the two can
    be compared. Other factors are entire and use Gauss-Hermite on both routes.
    """
    if route not in ROUTES:
        raise ValueError(f"unknown route {route!r}")
    if isinstance(fa, One):
        shape = np.broadcast_shapes(np.shape(mean), np.shape(sigma))
        return np.ones(shape), np.zeros(shape)
    if fa.breakpoints:
        if route == "default" and hasattr(fa, "pieces"):
            return _linear_piece_moments(fa, mean, sigma)
        return _piecewise_moments(fa, mean, sigma)
    if isinstance(fa, ErfClip):
        if route == "independent":
            return _piecewise_moments(fa, mean, sigma, _transition_cuts(fa.eps))
        # erf(s / (sqrt2 eps)) = 2 Phi(s / eps) - 1 convolves to the same shape; E xi g = sigma E g' (Stein)
        r = np.sqrt(fa.eps**2 + np.square(sigma))
        mean = np.asarray(mean, dtype=np.float64)
        return erf(mean / (math.sqrt(2.0) * r)), sigma * math.sqrt(2.0 / math.pi) / r * np.exp(-0.5 * (mean / r) ** 2)
    if isinstance(fa, Tanh):
        if route == "default":
            return _piecewise_moments(fa, mean, sigma, _transition_cuts(1.0 / fa.a))
        return _piecewise_moments(fa, mean, sigma, np.linspace(-8.0, 8.0, 33) / fa.a)
    rule = gauss_hermite_rule(order)
    vals = fa(np.asarray(mean)[..., None] + np.asarray(sigma)[..., None] * rule.nodes)
    return vals @ rule.weights, vals @ (rule.weights * rule.nodes)


def gaussian_moments(f: CylFunction, mean: np.ndarray, sigma: np.ndarray, order: int = 40, need_xi: bool = True,
                     route: str = "default"):
    """``E f(mean + sigma xi)`` and ``E xi_k f(...)`` for batched active-coordinate moments.

    ``mean`` and ``sigma`` have trailing axis ``n = f.n``.
    """
    mean = np.asarray(mean, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    shape = np.broadcast_shapes(mean.shape, sigma.shape)[:-1]
    ev = np.zeros(shape, dtype=complex)
    exi = np.zeros(shape + (f.n,), dtype=complex)
    for c, factors in f.terms:
        ab = [univariate_moments(fa, mean[..., i], sigma[..., i], order, route) for i, fa in enumerate(factors)]
        prod = c * np.ones(shape, dtype=complex)
        for a, _ in ab:
            prod = prod * a
        ev += prod
        if need_xi:
            for k in range(f.n):
                pk = c * ab[k][1]
                for i, (a, _) in enumerate(ab):
                    if i != k:
                        pk = pk * a
                exi[..., k] += pk
    return np.real(ev), np.real(exi)


def ou_moments(model: SpectralModel, t, z: np.ndarray, x: np.ndarray, active: Sequence[int]):
    """Mean, standard deviation and gradient weight of the transition on ``active``.

    ``t`` may be an array of shape (T,); ``x`` has shape (..., M). The mean has shape
    ``x.shape[:-1] + t.shape + (n,)``.
    """
    idx = list(active)
    t = np.asarray(t, dtype=np.float64)
    lam = model.lambdas[idx]
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    xa = x[..., idx]
    decay = np.exp(-t[..., None] * lam)
    shift = (-np.expm1(-t[..., None] * lam) / np.sqrt(lam)) * z[idx]
    lead = xa.reshape(xa.shape[:-1] + (1,) * t.ndim + (len(idx),))
    mean = lead * decay + shift
    sigma = np.sqrt(-np.expm1(-2.0 * lam * t[..., None]) / (2.0 * lam))
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = math.sqrt(2.0) * np.sqrt(lam) * decay / np.sqrt(-np.expm1(-2.0 * t[..., None] * lam))
    return mean, sigma, weight


def _zero_z(model: SpectralModel, z) -> np.ndarray:
    if z is None:
        return np.zeros(model.M)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (model.M,):
        raise ValueError(f"shift z must have shape ({model.M},)")
    return z


def _check_active(model: SpectralModel, f: CylFunction) -> None:
    if f.active and max(f.active) >= model.M:
        raise ValueError(f"function depends on coordinate {max(f.active)} but model has {model.M} modes")


def pt_apply(model: SpectralModel, t: float, z, f: CylFunction, x: np.ndarray, method: str = "quadrature",
             order: int = 40, samples: int = 100_000, seed: SeedSpec | None = None) -> Estimate:
    """``P_t^z f(x)`` with an error indicator; ``x`` may be a batch of shape (P, M)."""
    if t < 0:
        raise ValueError("time must be non-negative")
    _check_active(model, f)
    z = _zero_z(model, z)
    x = np.asarray(x, dtype=np.float64)
    if t == 0:
        return Estimate(f.at(x), np.zeros(x.shape[:-1]))
    mean, sigma, _ = ou_moments(model, t, z, x, f.active)
    if method == "quadrature":
        val, _ = gaussian_moments(f, mean, sigma, order, need_xi=False)
        low, _ = gaussian_moments(f, mean, sigma, max(order * 3 // 4, 4), need_xi=False)
        return Estimate(val, np.abs(val - low))
    if method == "montecarlo":
        rng = (seed or SeedSpec(0)).generator()
        xi = rng.standard_normal((samples, f.n))
        pts = mean[..., None, :] + sigma * xi
        vals = f(pts)
        return Estimate(vals.mean(axis=-1), vals.std(axis=-1, ddof=1) / math.sqrt(samples))
    raise ValueError(f"unknown method {method!r}")


def dpt_gradient(model: SpectralModel, t: float, z, f: CylFunction, x: np.ndarray, order: int = 40) -> np.ndarray:
    """Full gradient ``D P_t^z f(x)`` in coordinates, zero off the active set."""
    if t <= 0:
        raise ValueError("gradient of P_t needs t > 0")
    _check_active(model, f)
    z = _zero_z(model, z)
    x = np.asarray(x, dtype=np.float64)
    mean, sigma, weight = ou_moments(model, t, z, x, f.active)
    _, exi = gaussian_moments(f, mean, sigma, order)
    out = np.zeros(x.shape[:-1] + (model.M,))
    out[..., list(f.active)] = weight * exi
    return out


def dpt_apply(model: SpectralModel, t: float, z, f: CylFunction, x: np.ndarray, h: np.ndarray,
              method: str = "quadrature", order: int = 40, samples: int = 100_000,
              seed: SeedSpec | None = None, naive: bool = False) -> Estimate:
    """Directional derivative ``D_h P_t^z f(x)``.

    ``naive=True`` (Monte Carlo only) also samples the inactive coordinates so the
    vanishing of their contribution can be observed; it is reported in ``details``.
    """
    if t <= 0:
        raise ValueError("gradient of P_t needs t > 0")
    _check_active(model, f)
    z = _zero_z(model, z)
    h = np.asarray(h, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if method == "quadrature":
        g = dpt_gradient(model, t, z, f, x, order)
        low = dpt_gradient(model, t, z, f, x, max(order * 3 // 4, 4))
        return Estimate(g @ h, np.abs((g - low) @ h))
    if method != "montecarlo":
        raise ValueError(f"unknown method {method!r}")
    mean, sigma, weight = ou_moments(model, t, z, x, f.active)
    rng = (seed or SeedSpec(0)).generator()
    if naive:
        xi_all = rng.standard_normal((samples, model.M))
        idx = list(f.active)
        xi = xi_all[:, idx]
        inactive = np.setdiff1d(np.arange(model.M), idx)
        lam_all = lambda_t(model, t)
        w_in = xi_all[:, inactive] @ (lam_all[inactive] * h[inactive])
    else:
        xi = rng.standard_normal((samples, f.n))
        w_in = None
    vals = f(mean[..., None, :] + sigma * xi)
    w_act = xi @ (weight * h[list(f.active)]) if f.n else np.zeros(samples)
    active_terms = vals * w_act
    details = {}
    total = active_terms
    if w_in is not None:
        inactive_terms = vals * w_in
        details["inactive"] = Estimate(inactive_terms.mean(axis=-1),
                                       inactive_terms.std(axis=-1, ddof=1) / math.sqrt(samples))
        total = active_terms + inactive_terms
    return Estimate(total.mean(axis=-1), total.std(axis=-1, ddof=1) / math.sqrt(samples), details)


def fd_step(x: np.ndarray) -> float:
    return 1e-4 * (1.0 + float(np.linalg.norm(x)))


def d2pt_bound_check(model: SpectralModel, t: float, z, f: CylFunction, x: np.ndarray, h: np.ndarray,
                     k: np.ndarray, order: int = 40) -> dict:
    """Central difference of ``D_h P_t f`` along ``k`` compared with ``sqrt(2) C1^2 ||f|| |h||k| / t``."""
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    d = fd_step(x)
    up = dpt_apply(model, t, z, f, x + d * k, h, order=order).value
    dn = dpt_apply(model, t, z, f, x - d * k, h, order=order).value
    est = float((up - dn) / (2.0 * d))
    c1 = derive_c1()
    bound = math.sqrt(2.0) * c1**2 / t * f.sup_norm * float(np.linalg.norm(h)) * float(np.linalg.norm(k))
    return {"estimate": est, "bound": bound, "ratio": abs(est) / bound if bound else math.inf,
            "tolerance": 0.0, "pass": abs(est) <= bound}


def battery_box(model: SpectralModel, active: Sequence[int]) -> float:
    """Half-width ``6 max_k S_k^{1/2}`` over the active coordinates."""
    if not active:
        return 0.0
    return 6.0 * float(np.sqrt(model.invariant_variance[list(active)]).max())


def x_battery(model: SpectralModel, active: Sequence[int], n_points: int = 256, seed: int = 0,
              half_width: float | None = None, extra: np.ndarray | None = None) -> np.ndarray:
    """Latin-hypercube points on the active coordinates (others zero), plus the origin."""
    n = len(active)
    pts = np.zeros((1, model.M))
    if n:
        L = battery_box(model, active) if half_width is None else half_width
        sampler = qmc.LatinHypercube(d=n, seed=seed)
        u = sampler.random(n_points)
        block = np.zeros((n_points, model.M))
        block[:, list(active)] = -L + 2.0 * L * u
        pts = np.vstack([pts, block])
    if extra is not None:
        pts = np.vstack([pts, np.atleast_2d(extra)])
    return pts


def battery_sup(objective: Callable[[np.ndarray], np.ndarray], model: SpectralModel, active: Sequence[int],
                points: np.ndarray, polish: int = 8, maxiter: int = 60) -> tuple[float, np.ndarray]:
    """Maximise a batched objective over ``points`` then polish the best few by Nelder-Mead."""
    vals = np.asarray(objective(points), dtype=np.float64)
    order = np.argsort(-vals, kind="stable")
    best_i = int(order[0])
    best, best_x = float(vals[best_i]), points[best_i].copy()
    idx = list(active)
    if not idx or polish <= 0:
        return best, best_x
    for i in order[:polish]:
        base = points[i].copy()

        def neg(y, base=base):
            p = base.copy()
            p[idx] = y
            return -float(np.asarray(objective(p[None, :]))[0])

        res = minimize(neg, base[idx], method="Nelder-Mead",
                       options={"maxiter": maxiter, "xatol": 1e-6, "fatol": 1e-12})
        if -res.fun > best:
            best = float(-res.fun)
            best_x = base.copy()
            best_x[idx] = res.x
    return best, best_x


def loglog_slope(t: np.ndarray, v: np.ndarray) -> float:
    t = np.asarray(t, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    keep = (t > 0) & (v > 0)
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(t[keep]), np.log(v[keep]), 1)[0])


@dataclass(frozen=True)
class ProbeResult:
    t: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    slope: float
    argmax: list

    def rows(self) -> list[tuple[float, float, float]]:
        return [(float(a), float(b), float(c)) for a, b, c in zip(self.t, self.value, self.stderr)]


def sqrtA_grad_norm(model: SpectralModel, t: float, z, f: CylFunction, x: np.ndarray, order: int = 40) -> np.ndarray:
    g = dpt_gradient(model, t, z, f, x, order)
    return np.sqrt(np.sum(model.lambdas * g * g, axis=-1))


def blowup_rate_probe(model: SpectralModel, z, family: CylFunction | Sequence[CylFunction], t_grid: Sequence[float],
                      n_points: int = 256, polish: int = 8, seed: int = 0, order: int = 40,
                      fit_window: tuple[float, float] = (1e-3, 1e-2)) -> ProbeResult:
    """``sup_f sup_x |(-A)^{1/2} D P_t f(x)|`` along ``t_grid`` with the log-log slope on ``fit_window``.

    Passing a family of functions on different modes lets the supremum follow the
    mode whose eigenvalue is comparable to ``1/t``; a single fixed function can only
    show the ``t^{-1/2}`` rate of its own modes.
    """
    fams = [family] if isinstance(family, CylFunction) else list(family)
    z = _zero_z(model, z)
    t_grid = np.asarray(t_grid, dtype=np.float64)
    values, errs, where = [], [], []
    for t in t_grid:
        best, best_err, best_x = -1.0, 0.0, None
        for f in fams:
            pts = x_battery(model, f.active, n_points, seed)
            obj = lambda p, f=f, t=t: sqrtA_grad_norm(model, t, z, f, p, order)
            val, xb = battery_sup(obj, model, f.active, pts, polish)
            if val > best:
                low = float(sqrtA_grad_norm(model, t, z, f, xb[None, :], max(order * 3 // 4, 4))[0])
                best, best_err, best_x = val, abs(val - low), xb
        values.append(best)
        errs.append(best_err)
        where.append(best_x)
    values = np.array(values)
    mask = (t_grid >= fit_window[0] * (1 - 1e-12)) & (t_grid <= fit_window[1] * (1 + 1e-12))
    slope = loglog_slope(t_grid[mask], values[mask]) if mask.sum() >= 2 else float("nan")
    return ProbeResult(t_grid, values, np.array(errs), slope, where)


def step_family(model: SpectralModel, modes: Sequence[int] | None = None) -> list[CylFunction]:
    """Sign functions on individual modes, the family that saturates the gradient blow-up."""
    from .cylindrical import step

    modes = range(model.M) if modes is None else modes
    return [step(k) for k in modes]
