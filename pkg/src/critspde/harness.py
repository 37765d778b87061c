"""Cross-checks between independent constructions.

* ``compare_marginals``: two-sample tests between path ensembles built differently.
* ``laplace_crosscheck``: the fixed-point resolvent against the Laplace transform of simulated paths.
* ``zygmund_seminorm`` and ``dyadic_telescoping_check``: second-difference diagnostics of gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .cylindrical import CylFunction
from .drifts import Drift
from .gaussian import SeedSpec
from .kolmogorov import PreconditionError, fixed_point_solve
from .semigroup import _zero_z, dpt_gradient, loglog_slope, pt_apply, x_battery
from .simulator import PathEnsemble, laplace_paths
from .spectral import Constants, SpectralModel, covariance_qt, derive_c1, derive_constants


class ConfigMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Functional:
    """A scalar statistic of the state at one time (``kind="state"``) or of the recorded path (``kind="path"``)."""

    name: str
    fn: Callable[..., np.ndarray]
    kind: str = "state"


def coordinate(k: int) -> Functional:
    return Functional(f"x[{k}]", lambda X, k=k: X[:, k])


def norm_functional() -> Functional:
    return Functional("|x|", lambda X: np.linalg.norm(X, axis=-1))


def cylindrical_functional(f: CylFunction) -> Functional:
    return Functional(f.shape + str(list(f.active)), lambda X, f=f: f.at(X))


def path_sup(k: int = 0) -> Functional:
    return Functional(f"sup_t |x[{k}]|", lambda P, t, k=k: np.abs(P[:, :, k]).max(axis=1), "path")


def path_integral(k: int = 0) -> Functional:
    def fn(P, t, k=k):
        v = P[:, :, k]
        return np.sum(0.5 * (v[:, 1:] + v[:, :-1]) * np.diff(t), axis=1)
    return Functional(f"int x[{k}] dt", fn, "path")


def default_functionals(m: int) -> list[Functional]:
    out = [coordinate(0)]
    if m > 1:
        out.append(coordinate(1))
    out += [norm_functional(), path_sup(0), path_integral(0)]
    return out


def _drift_semantics(d: dict) -> dict:
    # mollification changes the construction, not the drift being approximated
    while d.get("kind") == "mollified":
        d = d["inner"]
    return d


def _check_compatible(A: PathEnsemble, B: PathEnsemble) -> int:
    m = min(A.m, B.m)
    problems = []
    if abs(A.T - B.T) > 1e-12:
        problems.append(f"T differs ({A.T} vs {B.T})")
    xa = np.pad(A.x0, (0, max(0, B.m - A.m)))
    xb = np.pad(B.x0, (0, max(0, A.m - B.m)))
    if not np.array_equal(xa, xb):
        problems.append(f"x0 differs ({A.x0.tolist()} vs {B.x0.tolist()})")
    if not np.allclose(A.lambdas[:m], B.lambdas[:m], rtol=1e-14, atol=0):
        problems.append("eigenvalues differ")
    if _drift_semantics(A.drift) != _drift_semantics(B.drift):
        problems.append(f"drift differs ({A.drift} vs {B.drift})")
    if problems:
        raise ConfigMismatch("ensembles are not comparable: " + "; ".join(problems))
    return m


def ks_critical(n: int, m: int, alpha: float) -> float:
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n + m) / (n * m))


def energy_permutation(a: np.ndarray, b: np.ndarray, permutations: int, seed: SeedSpec) -> tuple[float, float]:
    """Energy distance and its permutation p-value; symmetric in ``(a, b)``."""
    a, b = (a, b) if len(a) <= len(b) else (b, a)
    obs = float(stats.energy_distance(a, b))
    if obs == 0.0:
        return 0.0, 1.0
    pool = np.sort(np.concatenate([a, b]))
    rng = seed.generator()
    n = len(a)
    hits = 0
    for _ in range(permutations):
        idx = rng.permutation(len(pool))
        if stats.energy_distance(pool[idx[:n]], pool[idx[n:]]) >= obs:
            hits += 1
    return obs, (1 + hits) / (1 + permutations)


@dataclass
class LawComparison:
    statistic: str
    level: float
    cell_level: float
    cells: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.cells)

    @property
    def max_statistic(self) -> float:
        return max((c["statistic"] for c in self.cells), default=0.0)

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "level": self.level, "cell_level": self.cell_level,
                "pass": self.passed, "max_statistic": self.max_statistic, "cells": self.cells}


def compare_marginals(A: PathEnsemble, B: PathEnsemble, times: Sequence[float] | None = None,
                      functionals: Sequence[Functional | CylFunction] | None = None, level: float = 0.01,
                      energy: bool = True, permutations: int = 200, seed: int = 0) -> LawComparison:
    """Two-sample KS per ``(t, functional)`` cell with a Bonferroni correction over the grid.

    Energy distance with a permutation p-value is recorded next to each cell. It does
    not enter the verdict: with 200 permutations its smallest attainable p-value is
    1/201, which is coarser than a corrected level on any sizeable grid.
    """
    m = _check_compatible(A, B)
    if times is None:
        times = [t for t in A.times if np.any(np.abs(B.times - t) < 1e-9)][1:]
    funcs = [cylindrical_functional(f) if isinstance(f, CylFunction) else f
             for f in (functionals or default_functionals(m))]
    state = [f for f in funcs if f.kind == "state"]
    path = [f for f in funcs if f.kind == "path"]
    n_cells = len(times) * len(state) + len(path)
    out = LawComparison("ks", level, level / max(n_cells, 1))

    def cell(label, t, a, b, idx):
        res = stats.ks_2samp(a, b)
        crit = ks_critical(len(a), len(b), out.cell_level)
        c = {"t": t, "functional": label, "statistic": float(res.statistic), "critical": crit,
             "pvalue": float(res.pvalue), "pass": bool(res.statistic < crit)}
        if energy:
            e, p = energy_permutation(a, b, permutations, SeedSpec(seed, idx))
            c.update(energy_distance=e, energy_pvalue=p)
        out.cells.append(c)

    idx = 0
    for t in times:
        XA, XB = A.at(t)[:, :m], B.at(t)[:, :m]
        for f in state:
            cell(f.name, float(t), f.fn(XA), f.fn(XB), idx)
            idx += 1
    if path:
        common = np.array([t for t in A.times if np.any(np.abs(B.times - t) < 1e-9)])
        ia = [int(np.argmin(np.abs(A.times - t))) for t in common]
        ib = [int(np.argmin(np.abs(B.times - t))) for t in common]
        for f in path:
            cell(f.name, None, f.fn(A.paths[:, ia, :m], common), f.fn(B.paths[:, ib, :m], common), idx)
            idx += 1
    return out


def laplace_crosscheck(model: SpectralModel, lam: float, F: Drift, z, f: CylFunction, x: np.ndarray,
                       sim_config: dict | None = None, solver_config: dict | None = None) -> dict:
    """Compare the fixed-point ``u(x)`` with ``int_0^inf e^{-lam s} E f(X_s^x) ds`` from paths.

    The budget adds:
    * three Monte Carlo standard errors;
    * the Richardson gap between steps ``dt`` and ``2 dt`` driven by the same noise, plus three of its standard errors;
    * the tail ``||f||_0 e^{-lam T_cut} / lam``;
    * the solver's off-grid residual.
    """
    sim = {"dt": 0.01, "N": 100_000, "T_cut": None, "seed": 0}
    sim.update(sim_config or {})
    solver = dict(solver_config or {})
    if lam < 1:
        raise PreconditionError(f"Laplace cross-check needs lam >= 1, got {lam}")
    z = _zero_z(model, z)
    dev = F.deviation_bound(z)
    if dev >= 0.25:
        raise PreconditionError(f"sup |F - z| must be below 1/4, declared bound is {dev:.6g}")
    x = np.asarray(x, dtype=np.float64)
    state = fixed_point_solve(model, lam, z, F, f, **solver)
    if state.grid:
        lhs = float(state.u_at(x[list(f.active)][None, :])[0])
        solver_err = state.offgrid_residual
    else:
        lhs = float(state.u_values)
        solver_err = 0.0
    T_cut = sim["T_cut"] or math.ceil(math.log(max(f.sup_norm, 1e-300) / 1e-4) / lam / (2 * sim["dt"])) * 2 * sim["dt"]
    tail = f.sup_norm * math.exp(-lam * T_cut) / lam
    used = sorted(set(f.active) | set(F.active or ()))
    m = (max(used) + 1) if used else 1
    fine, coarse = laplace_paths(model, F, x[:m], f.at, lam, T_cut, sim["dt"], m, sim["N"], sim["seed"])
    N = len(fine)
    rhs = float(fine.mean())
    sigma = float(fine.std(ddof=1) / math.sqrt(N))
    gap = fine - coarse
    rich = abs(float(gap.mean()))
    rich_sigma = float(gap.std(ddof=1) / math.sqrt(N))
    budget = 3 * sigma + rich + 3 * rich_sigma + tail + solver_err
    residual = abs(lhs - rhs)
    return {"check": "laplace_crosscheck", "lam": lam, "x": x.tolist(), "f": f.describe(), "drift": F.describe(),
            "lhs": lhs, "rhs": rhs, "residual": residual, "budget": budget, "pass": bool(residual <= budget),
            "components": {"mc_3sigma": 3 * sigma, "richardson": rich, "richardson_3sigma": 3 * rich_sigma,
                           "tail": tail, "solver": solver_err},
            "T_cut": T_cut, "dt": sim["dt"], "N": N, "solver_iterations": state.iteration}


def zygmund_constant(constants: Constants) -> float:
    return 16.0 * (constants.c1**2 + 1.0) * (constants.c2 + 1.0)


def zygmund_seminorm(field: Callable[[np.ndarray], np.ndarray], x_points: np.ndarray, h_grid: Sequence[float],
                     directions: np.ndarray | None = None, f_sup: float = 1.0, constant: float | None = None,
                     tolerance: float = 1e-6) -> dict:
    """``sup |G(x+h) - 2 G(x) + G(x-h)|`` over the battery, read two ways.

    ``ratio`` divides by ``|h|`` (the Zygmund seminorm); ``raw`` does not. Both are
    compared with ``constant * f_sup``. ``field`` maps points (P, n) to values (P,) or (P, E).
    """
    x_points = np.atleast_2d(np.asarray(x_points, dtype=np.float64))
    n = x_points.shape[1]
    dirs = np.eye(n) if directions is None else np.atleast_2d(np.asarray(directions, dtype=np.float64))
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    best_ratio, best_raw, where = 0.0, 0.0, None
    g0 = np.asarray(field(x_points))
    for r in h_grid:
        if not 0 < r <= 1:
            raise ValueError("increments must satisfy 0 < |h| <= 1")
        for d in dirs:
            h = r * d
            diff = np.asarray(field(x_points + h)) - 2.0 * g0 + np.asarray(field(x_points - h))
            mag = np.abs(diff) if diff.ndim == 1 else np.linalg.norm(diff, axis=-1)
            i = int(np.argmax(mag))
            if mag[i] / r > best_ratio:
                best_ratio, where = float(mag[i] / r), {"x": x_points[i].tolist(), "h": h.tolist()}
            best_raw = max(best_raw, float(mag[i]))
    out = {"ratio": best_ratio, "raw": best_raw, "argmax": where, "f_sup": f_sup}
    if constant is not None:
        bound = constant * f_sup
        out.update(constant=constant, bound=bound, slack=bound - best_ratio,
                   pass_ratio=bool(best_ratio <= bound + tolerance), pass_raw=bool(best_raw <= bound + tolerance))
    return out


def increment_constant(model: SpectralModel, f: CylFunction, t_grid: Sequence[float], x_points: np.ndarray,
                       z=None) -> float:
    """Empirical ``N = sup_t sup_x |P_t f(x) - f(x)| / t^{1/2}`` over a battery."""
    X = np.zeros((len(x_points), model.M))
    X[:, list(f.active)] = x_points
    base = f.at(X)
    best = 0.0
    for t in t_grid:
        v = pt_apply(model, t, z, f, X).value
        best = max(best, float(np.max(np.abs(v - base)) / math.sqrt(t)))
    return best


def _local_points(model: SpectralModel, f: CylFunction, t: float, count: int = 81) -> np.ndarray:
    # points within a few standard deviations of the kinks and of the origin
    sd = np.sqrt(covariance_qt(model, t))[list(f.active)]
    centers = [0.0] + [float(c) for c in np.atleast_1d(f.params.get("center", 0.0))]
    u = np.linspace(-4.0, 4.0, count)
    pts = [np.outer(u, sd) + c for c in centers]
    return np.concatenate(pts)


def dyadic_telescoping_check(model: SpectralModel, f: CylFunction, t_grid: Sequence[float], z=None,
                             n_points: int = 64, seed: int = 0, fit_window: tuple[float, float] = (1e-3, 1e-1),
                             order: int = 40) -> dict:
    """Second derivatives of ``e^{-t} P_t f`` by central differences of the gradient, against ``t``.

    Functions with ``||P_t f - f|| <= N t^{1/2}`` show a ``t^{-1/2}`` rate; bounded
    functions without that control show ``t^{-1}``. The report also carries the
    dyadic bound ``16 C_0 (N + ||f||_0) t^{-1/2}`` with ``C_0 = sqrt(2) C_1^2``.
    """
    z = _zero_z(model, z)
    t_grid = np.asarray(t_grid, dtype=np.float64)
    base_pts = x_battery(model, f.active, n_points, seed)[:, list(f.active)]
    C0 = math.sqrt(2.0) * derive_c1() ** 2
    N_inc = increment_constant(model, f, t_grid[t_grid <= 1.0], base_pts, z) if f.n else 0.0
    values = []
    for t in t_grid:
        if not f.n:
            values.append(0.0)
            continue
        pts = np.concatenate([base_pts, _local_points(model, f, t)])
        X = np.zeros((len(pts), model.M))
        X[:, list(f.active)] = pts
        best = 0.0
        for i, a in enumerate(f.active):
            eps = 1e-3 * math.sqrt(float(covariance_qt(model, t)[a]))
            Xp, Xm = X.copy(), X.copy()
            Xp[:, a] += eps
            Xm[:, a] -= eps
            gp = dpt_gradient(model, t, z, f, Xp, order)[:, list(f.active)]
            gm = dpt_gradient(model, t, z, f, Xm, order)[:, list(f.active)]
            col = (gp - gm) / (2 * eps)
            best = max(best, float(np.max(np.linalg.norm(col, axis=-1))))
        values.append(math.exp(-t) * best)
    values = np.array(values)
    mask = (t_grid >= fit_window[0] * (1 - 1e-12)) & (t_grid <= fit_window[1] * (1 + 1e-12))
    positive = values[mask] > 1e-12
    slope = loglog_slope(t_grid[mask][positive], values[mask][positive]) if positive.sum() >= 2 else 0.0
    bound = 16.0 * C0 * (N_inc + f.sup_norm) / np.sqrt(t_grid)
    return {"check": "dyadic_telescoping", "f": f.describe(), "t": t_grid.tolist(), "d2": values.tolist(),
            "slope": slope, "fit_window": list(fit_window), "increment_constant": N_inc, "C0": C0,
            "bound": bound.tolist(), "within_bound": bool(np.all(values <= bound))}


def zygmund_suite_constant(model: SpectralModel) -> float:
    return zygmund_constant(derive_constants(model))
