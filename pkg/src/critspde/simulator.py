"""Galerkin path simulation of ``dX = (AX + (-A)^{1/2} F(X)) dt + dW``.

Exponential Euler per mode:

    X <- e^{-lam dt} X + lam^{1/2} (1 - e^{-lam dt}) / lam * F(X) + xi

``xi`` is the exact stochastic-convolution increment. It is drawn jointly with the
Brownian increment ``dW`` so that Girsanov weights can be formed afterwards.
Path ``i`` always uses random stream ``i``, so results do not depend on chunking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import gammainc

from .drifts import Drift, ZeroDrift
from .gaussian import SeedSpec
from .spectral import SpectralModel

SCHEMES = ("exponential_euler", "factorization_check")


class SimulationBlowUp(RuntimeError):
    pass


@dataclass
class PathEnsemble:
    scheme: str
    dt: float
    m: int
    times: np.ndarray
    paths: np.ndarray
    seed: int
    drift: dict
    x0: np.ndarray
    T: float
    lambdas: np.ndarray
    exit_times: dict = field(default_factory=dict)
    noise: np.ndarray | None = None

    @property
    def N(self) -> int:
        return self.paths.shape[0]

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"time {t} is not a recorded time")
        return self.paths[:, i, :]

    def config_key(self) -> dict:
        return {"m": self.m, "x0": [float(v) for v in self.x0], "T": self.T, "drift": self.drift,
                "lambdas": [float(v) for v in self.lambdas]}


def _increment_coefficients(lam: np.ndarray, dt: float):
    # xi = a dW + b Z with Var(xi) = Q_dt and Cov(xi, dW) = phi = (1 - e^{-lam dt}) / lam
    x = lam * dt
    decay = np.exp(-x)
    phi = -np.expm1(-x) / lam
    q = -np.expm1(-2.0 * x) / (2.0 * lam)
    # q - phi^2/dt = dt^3 lam^2 / 12 (1 - x + 7 x^2 / 15 ...); use the series where it cancels
    direct = q - phi * phi / dt
    series = dt**3 * lam**2 / 12.0 * (1.0 - x + 7.0 * x * x / 15.0)
    resid = np.where(x < 1e-2, series, direct)
    return decay, phi, phi / dt, np.sqrt(np.maximum(resid, 0.0))


def _inc_gamma(a: float, lam: float, lo, hi):
    # int_lo^hi u^{a-1} e^{-lam u} du
    return lam ** (-a) * gamma_fn(a) * (gammainc(a, lam * hi) - gammainc(a, lam * lo))


def factorization_weights(lam: float, alpha: float, dt: float, steps: int, substeps: int = 2) -> np.ndarray:
    """Matrix ``C`` with ``W_A(n dt) ~ sum_i C[n, i] dW_i`` on a grid refined by ``substeps``.

    ``Y(s) = int (s-r)^{-alpha} e^{-lam(s-r)} dW`` uses cell-averaged kernels.
    ``G_alpha Y`` integrates the kernel exactly against the piecewise-linear interpolant of ``Y``.
    """
    h = dt / substeps
    S = steps * substeps
    j = np.arange(S + 1)[:, None]
    i = np.arange(S)[None, :]
    lo = np.clip((j - i - 1) * h, 0.0, None)
    hi = np.clip((j - i) * h, 0.0, None)
    A = np.where(i < j, _inc_gamma(1.0 - alpha, lam, lo, hi) / h, 0.0)
    rows = np.arange(steps + 1) * substeps
    B = np.zeros((steps + 1, S + 1))
    for c in range(S):
        ulo = np.clip((rows - c - 1) * h, 0.0, None)
        uhi = np.clip((rows - c) * h, 0.0, None)
        m0 = _inc_gamma(alpha, lam, ulo, uhi)
        m1 = _inc_gamma(alpha + 1.0, lam, ulo, uhi)
        B[:, c] += (m1 - ulo * m0) / h
        B[:, c + 1] += (uhi * m0 - m1) / h
    return math.sin(math.pi * alpha) / math.pi * (B @ A)


def g_alpha_apply(lam: float, alpha: float, values: np.ndarray, dt: float, normalized: bool = True) -> np.ndarray:
    """``G_alpha f(t_n) = (sin pi alpha / pi) int_0^t (t-s)^{alpha-1} e^{-lam(t-s)} f(s) ds`` on a grid.

    ``values`` samples ``f`` at ``0, dt, ..., S dt``; ``f`` is interpolated linearly
    and the kernel is integrated exactly. The prefactor vanishes at ``alpha = 1``;
    ``normalized=False`` drops it.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    values = np.asarray(values, dtype=np.float64)
    S = values.shape[0] - 1
    out = np.zeros_like(values)
    for n in range(1, S + 1):
        acc = 0.0
        for c in range(n):
            ulo, uhi = (n - c - 1) * dt, (n - c) * dt
            m0 = _inc_gamma(alpha, lam, ulo, uhi)
            m1 = _inc_gamma(alpha + 1.0, lam, ulo, uhi)
            acc = acc + values[c] * (m1 - ulo * m0) / dt + values[c + 1] * (uhi * m0 - m1) / dt
        out[n] = acc
    return out * (math.sin(math.pi * alpha) / math.pi if normalized else 1.0)


def factorization_convolution(model: SpectralModel, alpha: float, dW: np.ndarray, dt: float,
                              p: float = 4.0, substeps: int = 1) -> np.ndarray:
    """Stochastic convolution ``W_A`` rebuilt as ``G_alpha Y`` from increments ``dW`` (N, S, m).

    ``dW`` lives on the fine grid of step ``dt / substeps``. The result is sampled at
    multiples of ``dt`` and has shape (N, S/substeps + 1, m).
    """
    if not 1.0 / p < alpha < 1.0:
        raise ValueError(f"alpha must lie in (1/p, 1) = ({1.0 / p:.3g}, 1) for the factorization, got {alpha}")
    dW = np.asarray(dW, dtype=np.float64)
    N, S, m = dW.shape
    if S % substeps:
        raise ValueError("fine increments must be a multiple of substeps")
    steps = S // substeps
    out = np.empty((N, steps + 1, m))
    for k in range(m):
        C = factorization_weights(float(model.lambdas[k]), alpha, dt, steps, substeps)
        out[:, :, k] = dW[:, :, k] @ C.T
    return out


def _euler_noise(seed: int, first: int, n: int, steps: int, m: int, dt: float, a: np.ndarray, b: np.ndarray):
    z = np.empty((n, steps, m, 2))
    for j in range(n):
        z[j] = SeedSpec(seed, first + j).generator().standard_normal((steps, m, 2))
    dW = math.sqrt(dt) * z[..., 0]
    return dW, a * dW + b * z[..., 1]


def _check_grid(T: float, dt: float) -> int:
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T = {T} must be a positive multiple of dt = {dt}")
    return steps


def simulate(model: SpectralModel, drift: Drift | None, x0, T: float, dt: float, m: int | None = None, N: int = 1000,
             seed: int = 0, scheme: str = "exponential_euler", record_every: int = 1, exit_levels: Sequence[float] = (),
             store_noise: bool = False, path_offset: int = 0, guard: float = 1e8, alpha: float = 0.5,
             substeps: int = 2, chunk: int | None = None) -> PathEnsemble:
    """Simulate ``N`` Galerkin paths on the first ``m`` modes up to time ``T``."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    drift = ZeroDrift() if drift is None else drift
    m = model.M if m is None else m
    if not 1 <= m <= model.M:
        raise ValueError(f"m must lie in 1..{model.M}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    steps = _check_grid(T, dt)
    if steps % record_every:
        raise ValueError("record_every must divide the number of steps")
    lam = model.lambdas[:m]
    x0 = np.asarray(x0, dtype=np.float64)
    x0 = np.pad(x0, (0, max(0, m - x0.size)))[:m]
    decay, phi, a, b = _increment_coefficients(lam, dt)
    sqrt_lam = np.sqrt(lam)
    R = steps // record_every + 1
    paths = np.empty((N, R, m))
    noise = np.empty((N, steps, m)) if store_noise else None
    levels = [float(v) for v in exit_levels]
    exits = {lv: np.full(N, np.inf) for lv in levels}
    weights = None
    if scheme == "factorization_check":
        weights = [factorization_weights(float(lk), alpha, dt, steps, substeps) for lk in lam]
    per_path = steps * m * (2 if scheme == "exponential_euler" else substeps)
    chunk = chunk or max(1, min(N, 4_000_000 // max(per_path, 1)))
    for start in range(0, N, chunk):
        stop = min(N, start + chunk)
        n = stop - start
        if scheme == "exponential_euler":
            dW, xi = _euler_noise(seed, path_offset + start, n, steps, m, dt, a, b)
        else:
            fine = np.empty((n, steps * substeps, m))
            for j in range(n):
                fine[j] = SeedSpec(seed, path_offset + start + j).generator().standard_normal((steps * substeps, m))
            fine *= math.sqrt(dt / substeps)
            WA = np.empty((n, steps + 1, m))
            for k in range(m):
                WA[:, :, k] = fine[:, :, k] @ weights[k].T
            xi = WA[:, 1:, :] - decay * WA[:, :-1, :]
            dW = fine.reshape(n, steps, substeps, m).sum(axis=2)
        if noise is not None:
            noise[start:stop] = dW
        X = np.broadcast_to(x0, (n, m)).copy()
        paths[start:stop, 0] = X
        for lv in levels:
            hit = np.linalg.norm(X, axis=-1) >= lv
            exits[lv][start:stop][hit] = 0.0
        for s in range(steps):
            X = decay * X + sqrt_lam * phi * drift.evaluate(X) + xi[:, s]
            if not np.all(np.isfinite(X)) or np.abs(X).max() > guard:
                raise SimulationBlowUp(
                    f"state exceeded the overflow guard {guard:g} at t = {(s + 1) * dt:.6g}; wrap the drift in a "
                    "truncation and read the exit times tau_n instead")
            if levels:
                r = np.linalg.norm(X, axis=-1)
                for lv in levels:
                    seg = exits[lv][start:stop]
                    new = (r >= lv) & np.isinf(seg)
                    seg[new] = (s + 1) * dt
            if (s + 1) % record_every == 0:
                paths[start:stop, (s + 1) // record_every] = X
    times = np.arange(R) * dt * record_every
    return PathEnsemble(scheme, dt, m, times, paths, seed, drift.describe(), x0, T, lam.copy(),
                        exits, noise)


def ou_marginal(model: SpectralModel, x0, t: float, m: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean and variance per mode of the zero-drift solution at time ``t``."""
    m = model.M if m is None else m
    lam = model.lambdas[:m]
    x0 = np.pad(np.asarray(x0, dtype=np.float64), (0, max(0, m - len(x0))))[:m]
    return np.exp(-lam * t) * x0, -np.expm1(-2.0 * lam * t) / (2.0 * lam)


def moment_probe(ensembles: Sequence[PathEnsemble], p: float = 2.0) -> list[dict]:
    """``E |X_t|^p`` per recorded time and its supremum, for each ensemble (e.g. an m-sweep)."""
    rows = []
    for ens in ensembles:
        mom = np.mean(np.linalg.norm(ens.paths, axis=-1) ** p, axis=0)
        rows.append({"m": ens.m, "p": p, "times": ens.times.tolist(), "moment": mom.tolist(),
                     "sup_moment": float(mom.max())})
    return rows


@dataclass(frozen=True)
class GirsanovResult:
    weights: np.ndarray
    log_weights: np.ndarray
    nonfinite: int


def girsanov_weight(ensemble: PathEnsemble, B: Callable[[np.ndarray], np.ndarray], T: float | None = None) -> GirsanovResult:
    """``exp(sum_k int b_k dW_k - 1/2 int |b|^2)`` with ``b = B(Y_s)`` evaluated at left endpoints."""
    if ensemble.noise is None:
        raise ValueError("ensemble was simulated without store_noise=True")
    steps = ensemble.noise.shape[1]
    if ensemble.paths.shape[1] != steps + 1:
        raise ValueError("Girsanov weights need every step recorded (record_every=1)")
    T = ensemble.T if T is None else T
    n_use = int(round(T / ensemble.dt))
    logw = np.zeros(ensemble.N)
    for s in range(n_use):
        b = B(ensemble.paths[:, s, :])
        logw += np.sum(b * ensemble.noise[:, s, :], axis=-1) - 0.5 * ensemble.dt * np.sum(b * b, axis=-1)
    with np.errstate(over="ignore"):
        w = np.exp(logw)
    bad = int(np.sum(~np.isfinite(w)))
    return GirsanovResult(w, logw, bad)


def exponential_moment(ensemble: PathEnsemble, T: float | None = None) -> dict:
    """Monte Carlo ``E exp(1/2 int_0^T |Y_s|^2 ds)`` with a left-point time sum."""
    T = ensemble.T if T is None else T
    dt_rec = ensemble.times[1] - ensemble.times[0]
    n_use = int(round(T / dt_rec))
    integral = dt_rec * np.sum(np.sum(ensemble.paths[:, :n_use, :] ** 2, axis=-1), axis=1)
    vals = np.exp(0.5 * integral)
    return {"m": ensemble.m, "T": T, "estimate": float(vals.mean()),
            "stderr": float(vals.std(ddof=1) / math.sqrt(len(vals)))}


def laplace_paths(model: SpectralModel, drift: Drift | None, x0, f: Callable[[np.ndarray], np.ndarray], lam: float,
                  T: float, dt: float, m: int | None = None, N: int = 1000, seed: int = 0,
                  chunk: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-path trapezoid sums of ``int_0^T e^{-lam s} f(X_s) ds`` at steps ``dt`` and ``2 dt``.

    Both runs use the same noise: the coarse convolution increment over ``2 dt`` is
    ``e^{-lam dt} xi_1 + xi_2``. The fine run is the exponential-Euler path of
    :func:`simulate` with the same arguments. Paths are not stored.
    """
    drift = ZeroDrift() if drift is None else drift
    m = model.M if m is None else m
    steps = _check_grid(T, dt)
    if steps % 2:
        raise ValueError("the coupled coarse run needs an even number of steps")
    lam_k = model.lambdas[:m]
    x0 = np.pad(np.asarray(x0, dtype=np.float64), (0, max(0, m - len(x0))))[:m]
    decay, phi, a, b = _increment_coefficients(lam_k, dt)
    decay2, phi2, _, _ = _increment_coefficients(lam_k, 2 * dt)
    sl = np.sqrt(lam_k)
    wf = np.full(steps + 1, dt)
    wf[[0, -1]] *= 0.5
    wf *= np.exp(-lam * dt * np.arange(steps + 1))
    wc = np.full(steps // 2 + 1, 2 * dt)
    wc[[0, -1]] *= 0.5
    wc *= np.exp(-lam * 2 * dt * np.arange(steps // 2 + 1))
    fine_out, coarse_out = np.empty(N), np.empty(N)
    chunk = chunk or max(1, min(N, 2_000_000 // max(steps * m * 2, 1)))
    for start in range(0, N, chunk):
        n = min(N, start + chunk) - start
        _, xi = _euler_noise(seed, start, n, steps, m, dt, a, b)
        X = np.broadcast_to(x0, (n, m)).copy()
        Y = X.copy()
        f0 = f(X)
        acc_f = wf[0] * f0
        acc_c = wc[0] * f0
        for s in range(steps):
            X = decay * X + sl * phi * drift.evaluate(X) + xi[:, s]
            acc_f = acc_f + wf[s + 1] * f(X)
            if s % 2:
                inc = decay * xi[:, s - 1] + xi[:, s]
                Y = decay2 * Y + sl * phi2 * drift.evaluate(Y) + inc
                acc_c = acc_c + wc[(s + 1) // 2] * f(Y)
        fine_out[start:start + n] = acc_f
        coarse_out[start:start + n] = acc_c
    return fine_out, coarse_out


def coupled_terminal(model: SpectralModel, drift: Drift | None, x0, f: Callable[[np.ndarray], np.ndarray], T: float,
                     dt: float, levels: int = 2, m: int | None = None, N: int = 1000, seed: int = 0,
                     chunk: int | None = None) -> list[np.ndarray]:
    """``f(X_T)`` per path at steps ``dt, 2 dt, ..., 2^levels dt``, all driven by the finest noise.

    Coupling the levels makes the differences between them low-variance, so weak
    errors of a few 1e-4 are visible at moderate ``N``.
    """
    drift = ZeroDrift() if drift is None else drift
    m = model.M if m is None else m
    steps = _check_grid(T, dt)
    if steps % (2**levels):
        raise ValueError(f"the number of steps must be divisible by 2^{levels}")
    lam_k = model.lambdas[:m]
    x0 = np.pad(np.asarray(x0, dtype=np.float64), (0, max(0, m - len(x0))))[:m]
    coeffs = [_increment_coefficients(lam_k, dt * 2**j) for j in range(levels + 1)]
    sl = np.sqrt(lam_k)
    out = [np.empty(N) for _ in range(levels + 1)]
    chunk = chunk or max(1, min(N, 2_000_000 // max(steps * m * 2, 1)))
    for start in range(0, N, chunk):
        n = min(N, start + chunk) - start
        _, xi = _euler_noise(seed, start, n, steps, m, dt, coeffs[0][2], coeffs[0][3])
        for j in range(levels + 1):
            decay, phi = coeffs[j][0], coeffs[j][1]
            X = np.broadcast_to(x0, (n, m)).copy()
            for s in range(xi.shape[1]):
                X = decay * X + sl * phi * drift.evaluate(X) + xi[:, s]
            out[j][start:start + n] = f(X)
            if j < levels:
                xi = decay * xi[:, 0::2] + xi[:, 1::2]
    return out


def save_ensemble(ens: PathEnsemble, outdir, stem: str = "ensemble") -> tuple[str, str]:
    """Write ``<stem>.json`` metadata and ``<stem>.npy`` paths.

    The array is float64, C order, shape (N, R, m): path, recorded time, mode.
    Exit times go in the metadata as lists (``null`` for a path that never exits).
    """
    import json
    from pathlib import Path

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "scheme": ens.scheme, "dt": ens.dt, "m": ens.m, "N": ens.N, "T": ens.T, "seed": ens.seed,
        "drift": ens.drift, "x0": [float(v) for v in ens.x0], "lambdas": [float(v) for v in ens.lambdas],
        "times": [float(t) for t in ens.times], "paths_file": f"{stem}.npy",
        "layout": {"dtype": "float64", "order": "C", "shape": list(ens.paths.shape), "axes": ["path", "time", "mode"]},
        "exit_times": {repr(float(k)): [None if math.isinf(v) else float(v) for v in vals]
                       for k, vals in ens.exit_times.items()},
    }
    jpath, npath = out / f"{stem}.json", out / f"{stem}.npy"
    jpath.write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    np.save(npath, np.ascontiguousarray(ens.paths, dtype="<f8"))
    return str(jpath), str(npath)


def load_ensemble(path) -> PathEnsemble:
    """Inverse of :func:`save_ensemble`; ``path`` is the metadata file."""
    import json
    from pathlib import Path

    p = Path(path)
    meta = json.loads(p.read_text())
    paths = np.load(p.parent / meta["paths_file"])
    exits = {float(k): np.array([math.inf if v is None else v for v in vals])
             for k, vals in meta["exit_times"].items()}
    return PathEnsemble(meta["scheme"], meta["dt"], meta["m"], np.array(meta["times"]), paths, meta["seed"],
                        meta["drift"], np.array(meta["x0"]), meta["T"], np.array(meta["lambdas"]), exits)
