"""Experiment suites. Each takes a validated config and returns a :class:`Report`."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

import numpy as np
from scipy import integrate, stats

from . import cylindrical as cy
from .drifts import (BurgersDrift, ConstantDrift, H01BurgersDrift, MollifiedDrift, NearConstantDrift, TruncatedDrift,
                     cutoff, drift_from_config)
from .gaussian import SeedSpec
from .harness import (compare_marginals, dyadic_telescoping_check, laplace_crosscheck, zygmund_constant,
                      zygmund_seminorm)
from .kolmogorov import (fixed_point_solve, generator_apply, generator_residual_check, resolvent,
                         resolvent_identity_check, truncated_solution, verify_increment_bound, verify_optimal_bound,
                         verify_shifted_bound)
from .models import H01Burgers
from .report import Report
from .semigroup import (blowup_rate_probe, d2pt_bound_check, dpt_apply, fd_step, pt_apply, step_family,
                        x_battery)
from .simulator import (coupled_terminal, exponential_moment, girsanov_weight, moment_probe, ou_marginal, simulate)
from .spectral import SpectralModel, covariance_qt, derive_c1, derive_constants, lambda_t, model_from_config


def fan_out(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Ordered map; results do not depend on ``workers``."""
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _z(model: SpectralModel, first: float) -> np.ndarray:
    z = np.zeros(model.M)
    z[0] = first
    return z


def battery_functions(model: SpectralModel) -> list[cy.CylFunction]:
    """Test functions with unit sup-norm, including the saturating step family."""
    fs = [cy.step(0), cy.abs_clip(0, 0.0, 1.0), cy.cosine([0]), cy.erf_clip([0], 0.25),
          cy.gaussian_bump([0], [0.0], 0.5), cy.tanh_product([0], [3.0])]
    if model.M >= 3:
        fs += [cy.step(2), cy.tanh_product([0, 1, 2], [3.0, 3.0, 3.0]), cy.erf_clip([1, 2], 0.1),
               cy.cosine([0, 1], [1.0, 2.0])]
    return fs


# --------------------------------------------------------------------------- semigroup

def c1_oracle(points: int = 200_001) -> float:
    """Maximum of ``max_k Lambda_t sqrt(t)`` on a log grid, via the production ``lambda_t``."""
    u = np.logspace(-12, 2, points)
    one = SpectralModel(np.array([1.0]))
    return float(np.max(lambda_t(one, u)[:, 0] * np.sqrt(u)))


def _gradient_case(item) -> dict:
    mcfg, t, npts, seed = item
    model = model_from_config(mcfg)
    worst = 0.0
    rows = []
    for j, f in enumerate(battery_functions(model)):
        pts = x_battery(model, f.active, npts, seed + j)
        rng = SeedSpec(seed, 1000 + j).generator()
        dirs = [np.eye(model.M)[a] for a in f.active] + [rng.standard_normal(model.M)]
        fworst = 0.0
        for x in pts:
            for h in dirs:
                d = dpt_apply(model, t, None, f, x, h).value
                eps = fd_step(x)
                fd = (pt_apply(model, t, None, f, x + eps * h).value - pt_apply(model, t, None, f, x - eps * h).value)
                fd /= 2 * eps
                scale = max(abs(float(d)), 1e-3 * derive_c1() * f.sup_norm * float(np.linalg.norm(h)) / math.sqrt(t))
                fworst = max(fworst, abs(float(d) - float(fd)) / scale)
        worst = max(worst, fworst)
        rows.append([mcfg.get("family", "explicit"), model.M, t, f.shape, str(list(f.active)), fworst])
    return {"worst": worst, "rows": rows}


def suite_semigroup(cfg: dict) -> Report:
    c = cfg["semigroup"]
    seed = cfg["seed"]
    rep = Report("semigroup")
    c1 = derive_c1()
    oracle = c1_oracle()
    tol = c["c1_tolerance"]
    rep.check("c1_derivation", abs(c1 - 1.0) <= tol and abs(c1 - oracle) <= tol, c1=c1, oracle=oracle,
              tolerance=tol)
    t = np.logspace(-6, 1, c["lambda_t_points"])
    worst = 0.0
    for mcfg in c["lambda_t_models"]:
        model = model_from_config(mcfg)
        worst = max(worst, float(np.max(lambda_t(model, t).max(axis=-1) * np.sqrt(t))))
    rep.check("lambda_t_sqrt_t_below_c1", worst <= c1 + 1e-10, max_value=worst, c1=c1, tolerance=1e-10)

    g = c["gradient"]
    items = [(m, float(tt), g["points"], seed) for m in g["models"] for tt in g["times"]]
    results = fan_out(_gradient_case, items, cfg["workers"])
    worst = max(r["worst"] for r in results)
    rep.table("gradient_consistency", ["model", "M", "t", "shape", "active", "max_rel_error"],
              [row for r in results for row in r["rows"]])
    rep.check("gradient_vs_finite_differences", worst <= g["rel_tol"], max_rel_error=worst, tolerance=g["rel_tol"])

    mc = c["montecarlo"]
    one = SpectralModel(np.array([1.0, 4.0]))
    mc_rows = []
    ok = True
    for i, (f, x) in enumerate([(cy.cosine([0]), [1.0, 0.0]), (cy.abs_clip(0, 0.0, 1.0), [0.3, 0.0]),
                                (cy.step(0), [0.1, 0.0]), (cy.tanh_product([0, 1], [2.0, 2.0]), [0.2, -0.4])]):
        for tt in mc["times"]:
            h = np.array([1.0, 0.5])
            q = dpt_apply(one, tt, None, f, np.array(x), h).value
            est = dpt_apply(one, tt, None, f, np.array(x), h, method="montecarlo", samples=mc["samples"],
                            seed=SeedSpec(seed, 500 + i))
            z = abs(float(est.value) - float(q)) / float(est.stderr)
            ok &= z <= mc["sigmas"]
            mc_rows.append([f.shape, tt, float(q), float(est.value), float(est.stderr), z])
    rep.table("montecarlo_gradient", ["shape", "t", "quadrature", "montecarlo", "stderr", "z"], mc_rows)
    rep.check("montecarlo_within_sigmas", ok, sigmas=mc["sigmas"], samples=mc["samples"],
              max_z=max(r[-1] for r in mc_rows))
    naive = dpt_apply(SpectralModel(np.array([1.0, 4.0, 9.0, 16.0])), 0.5, None, cy.cosine([0]),
                      np.array([0.5, 0, 0, 0]), np.ones(4), method="montecarlo", samples=mc["samples"],
                      seed=SeedSpec(seed, 600), naive=True).details["inactive"]
    rep.check("inactive_coordinates_cancel", abs(float(naive.value)) <= 4 * float(naive.stderr),
              inactive_mean=float(naive.value), stderr=float(naive.stderr))

    d2 = c["d2"]
    model = SpectralModel(np.array([1.0, 4.0, 9.0]))
    worst = 0.0
    for j, f in enumerate([cy.cosine([0]), cy.tanh_product([0, 1], [2.0, 2.0]), cy.erf_clip([0, 2], 0.2),
                           cy.gaussian_bump([1], [0.0], 0.3)]):
        pts = x_battery(model, f.active, d2["points"], seed + j)
        for tt in d2["times"]:
            for x in pts:
                for a in f.active:
                    for b in f.active:
                        r = d2pt_bound_check(model, tt, None, f, x, np.eye(3)[a], np.eye(3)[b])
                        worst = max(worst, r["ratio"])
    rep.check("second_derivative_bound_slack", worst * d2["slack"] <= 1.0, max_ratio=worst, slack=d2["slack"])

    p = c["probe"]
    pm = model_from_config(p["model"])
    res = blowup_rate_probe(pm, None, step_family(pm), p["t_grid"], p["points"], p["polish"], seed)
    lo, hi = p["slope_range"]
    rep.table("blowup_probe", ["t", "value", "stderr"], res.rows())
    rep.plot("blowup_probe", "t", "sup_x |(-A)^(1/2) D P_t f|", res.t, res.value)
    rep.check("blowup_rate_slope", lo <= res.slope <= hi, slope=res.slope, range=[lo, hi])
    return rep


# --------------------------------------------------------------------------- resolvent

def suite_resolvent(cfg: dict) -> Report:
    c = cfg["resolvent"]
    rep = Report("resolvent")
    model = model_from_config(c["model"])
    lam, mu = c["lam"], c["mu"]
    f = cy.cosine([0])
    x = np.zeros(model.M)
    x[0] = 1.0
    r = resolvent(model, lam, None, f, x)
    l1 = float(model.lambdas[0])
    oracle, _ = integrate.quad(lambda s: math.exp(-lam * s) * math.exp(-0.5 * float(covariance_qt(model, s)[0]))
                               * math.cos(math.exp(-l1 * s)), 0, math.inf, epsabs=1e-13, epsrel=1e-13, limit=200)
    rep.check("cosine_oracle", abs(r.value - oracle) <= r.quad_error + 1e-10, value=r.value, oracle=oracle,
              quad_error=r.quad_error)
    rc = resolvent(model, lam, None, cy.constant(0.7), x)
    rep.check("constant_data", abs(rc.value - 0.7 / lam) <= 1e-14 and not np.any(rc.gradient), value=rc.value)
    pts = x_battery(model, (0,), 64, cfg["seed"])
    worst_u = 0.0
    worst_fd = 0.0
    for g in [cy.cosine([0]), cy.step(0), cy.erf_clip([0], 0.2)]:
        rr = resolvent(model, lam, None, g, pts)
        worst_u = max(worst_u, float(np.max(np.abs(rr.value))) * lam / g.sup_norm)
        # u'' jumps where f does, so points next to the step's discontinuity are skipped
        for xi in pts[1:9]:
            eps = fd_step(xi)
            e0 = np.zeros(model.M)
            e0[0] = 1.0
            fdv = (resolvent(model, lam, None, g, xi + eps * e0).value
                   - resolvent(model, lam, None, g, xi - eps * e0).value) / (2 * eps)
            worst_fd = max(worst_fd, abs(float(resolvent(model, lam, None, g, xi).gradient[0]) - fdv))
    rep.check("value_contraction", worst_u <= 1.0 + 1e-12, max_lam_u_over_f=worst_u)
    rep.check("gradient_vs_finite_differences", worst_fd <= c["fd_tol"], max_abs_error=worst_fd, tolerance=c["fd_tol"])
    a = resolvent_identity_check(model, lam, mu, None, f)
    b = resolvent_identity_check(model, mu, lam, None, f)
    rep.check("resolvent_identity", max(a["residual"], b["residual"]) <= c["identity_tol"],
              residual=a["residual"], swapped_residual=b["residual"], tolerance=c["identity_tol"])
    res = [generator_residual_check(model, lam, None, f, points=n) for n in c["generator_points"]]
    rows = [[x["points"], x["step"], x["residual"]] for x in res]
    rep.table("generator_residual", ["points", "step", "residual"], rows)
    rep.plot("generator_residual", "grid step", "max residual", [x["step"] for x in res], [x["residual"] for x in res])
    refine = all(res[i + 1]["residual"] <= 0.55 * res[i]["residual"] for i in range(len(res) - 1))
    rep.check("generator_residual", res[0]["residual"] <= c["generator_tol"] and refine,
              residuals=[x["residual"] for x in res], tolerance=c["generator_tol"])
    ga = [float(generator_apply(SpectralModel(np.array([1.0])), None, cy.quadratic([0]), np.array([1.0]))),
          float(generator_apply(SpectralModel(np.array([1.0])), None, cy.cosine([0]), np.array([0.0])))]
    rep.check("generator_closed_forms", abs(ga[0] + 1) < 1e-14 and abs(ga[1] + 0.5) < 1e-14, values=ga)
    e1 = np.zeros(model.M)
    e1[0] = 1.0
    sh = verify_shifted_bound(model, lam, None, cy.step(0), 0.5, e1, pts)
    rep.check("shifted_gradient_bound", sh["pass"], **{k: sh[k] for k in ("estimate", "bound", "ratio")})
    return rep


# --------------------------------------------------------------------------- bounds

def _bounds_case(item) -> dict:
    name, mcfg, lam, z0, npts, polish, tol, seed = item
    model = model_from_config(mcfg)
    return {"model": name, "lam": lam, "z0": z0,
            "report": verify_optimal_bound(model, lam, _z(model, z0), battery_functions(model), npts, polish, seed,
                                           tol)}


def suite_bounds(cfg: dict) -> Report:
    c = cfg["bounds"]
    seed = cfg["seed"]
    rep = Report("bounds")
    items = [(name, mcfg, float(lam), z0, c["points"], c["polish"], c["tolerance"], seed)
             for name, mcfg in sorted(c["models"].items()) for lam in c["lams"] for z0 in (0.0, c["z_shift"])]
    results = fan_out(_bounds_case, items, cfg["workers"])
    rows = []
    for r in results:
        for it in r["report"]["items"]:
            rows.append([r["model"], r["lam"], r["z0"], it["name"], it["normalized"], it["quad_error"], it["pass"]])
    n_cases = len(rows)
    max_ratio = max(r[4] for r in rows)
    bound = math.pi / math.sqrt(2.0)
    rep.table("optimal_bound", ["model", "lam", "z0", "function", "normalized_sup", "quad_error", "pass"], rows)
    rep.check("optimal_gradient_bound", all(r[-1] for r in rows) and max_ratio <= bound + c["tolerance"],
              cases=n_cases, max_ratio=max_ratio, bound=bound, tolerance=c["tolerance"])

    inc = c["increment"]
    ou = model_from_config(c["models"].get("ou", {"eigenvalues": [1.0]}))
    fs = [cy.step(0), cy.abs_clip(0, 0.0, 1.0), cy.cosine([0]), cy.erf_clip([0], 0.25)]
    r = verify_increment_bound(ou, inc["lam"], None, fs, inc["s_grid"], inc["points"], seed, inc["tolerance"],
                               saturating=[True, False, False, False])
    for curve in r["curves"]:
        rep.plot("increment", "s", "|P_s Du - Du| / (s^(1/2) ||f||)", curve["s"], curve["ratio"],
                 label=curve["f"]["shape"])
    rows = [[it["name"], it["estimate"], it["bound"], it["slope"], it["saturating"]] for it in r["items"]]
    rep.table("increment", ["function", "max_ratio", "c2", "slope", "saturating"], rows)
    sat = [it["slope"] for it in r["items"] if it["saturating"]]
    rep.check("increment_bound", all(it["pass"] for it in r["items"]),
              max_ratio=max(it["estimate"] for it in r["items"]), c2=r["c2"], tolerance=inc["tolerance"])
    rep.check("increment_slope_saturating", all(s >= inc["min_slope"] for s in sat), slopes=sat,
              min_slope=inc["min_slope"])
    return rep


# --------------------------------------------------------------------------- fixed point

def fixedpoint_cases(delta: float) -> list[tuple[str, SpectralModel, Any, cy.CylFunction, np.ndarray]]:
    two = SpectralModel(np.array([1.0, 4.0]))
    one = SpectralModel(np.array([1.0]))
    return [
        ("ou1_cos_tanh", one, NearConstantDrift([0.0], delta, (0,), "tanh"), cy.cosine([0]), np.zeros(1)),
        ("ou1_erf_sin", one, NearConstantDrift([0.1], delta, (0,), "sin", 2.0), cy.erf_clip([0], 0.25),
         np.array([0.1])),
        ("ou2_tanh_tanh", two, NearConstantDrift([0.0, 0.1], delta, (0, 1), "tanh"),
         cy.tanh_product([0, 1], [1.0, 1.0]), np.array([0.0, 0.1])),
    ]


def suite_fixedpoint(cfg: dict) -> Report:
    c = cfg["fixedpoint"]
    rep = Report("fixedpoint")
    rows = []
    ok_c = ok_b = ok_r = True
    for name, model, F, g, z in fixedpoint_cases(c["delta"]):
        for lam in c["lams"]:
            st = fixed_point_solve(model, lam, z, F, g)
            s = st.summary(g.sup_norm)
            rows.append([name, lam, s["iterations"], s["max_contraction"], s["u_sup"], s["u_bound"], s["grad_sup"],
                         s["grad_bound"], s["residual"], s["offgrid_residual"]])
            ok_c &= s["max_contraction"] <= c["max_contraction"]
            ok_b &= s["u_sup"] <= s["u_bound"] and s["grad_sup"] <= s["grad_bound"]
            ok_r &= s["residual"] <= c["residual_tol"] and s["offgrid_residual"] <= c["residual_tol"]
            if lam == c["lams"][0]:
                rep.plot("picard_updates", "iteration", "E-norm update", np.arange(1, len(st.history) + 1),
                         st.history, label=name, logx=False)
    rep.table("fixed_point", ["case", "lam", "iterations", "max_contraction", "u_sup", "u_bound", "grad_sup",
                              "grad_bound", "residual", "offgrid_residual"], rows)
    rep.check("picard_contraction", ok_c, max_contraction=max(r[3] for r in rows), limit=c["max_contraction"])
    rep.check("solution_bounds", ok_b)
    rep.check("integral_equation_residual", ok_r, max_residual=max(max(r[8], r[9]) for r in rows),
              tolerance=c["residual_tol"])

    tr = c["truncation"]
    model = SpectralModel(np.array([1.0, 4.0, 9.0]))
    F = NearConstantDrift([0.0, 0.0, 0.05], c["delta"], (0, 1), "tanh")
    g = cy.cosine([0, 1], [1.0, 2.0])
    z = np.array([0.0, 0.0, 0.05])
    xs = np.array([np.full(3, p) for p in tr["points"]])
    values, gmax = [], 0.0
    for n in list(tr["levels"]) + [None]:
        v, st = truncated_solution(model, 1.0, n, tr["m"], g, F, z, xs)
        values.append(v)
        gmax = max(gmax, st.summary(g.sup_norm)["grad_sup"])
    values = np.array(values)
    cauchy = np.max(np.abs(np.diff(values[:-1], axis=0)), axis=1)
    to_limit = np.max(np.abs(values[:-1] - values[-1]), axis=1)
    levels = np.array(tr["levels"], dtype=float)
    rep.table("truncation", ["n", "u_nm_max_gap_to_limit", "cauchy_to_next"],
              [[lv, d, (cauchy[i] if i < len(cauchy) else "")] for i, (lv, d) in enumerate(zip(levels, to_limit))])
    rep.plot("truncation", "n", "max_x |u_nm - u_m|", levels, to_limit)
    rep.check("truncation_cauchy_monotone", bool(np.all(np.diff(cauchy) < 0)), cauchy=cauchy.tolist(),
              gap_to_limit=to_limit.tolist())
    rep.check("truncation_uniform_gradient_bound", gmax <= 12 * g.sup_norm, max_grad=gmax, bound=12 * g.sup_norm)
    return rep


# --------------------------------------------------------------------------- simulate

def suite_simulate(cfg: dict) -> Report:
    c = cfg["simulate"]
    seed = cfg["seed"]
    rep = Report("simulate")

    ex = c["exact_law"]
    model = model_from_config(ex["model"])
    x0 = 1.0 / np.arange(1, model.M + 1)
    T = max(ex["times"])
    ens = simulate(model, None, x0, T, ex["dt"], N=ex["N"], seed=seed)
    cells = []
    for t in ex["times"]:
        X = ens.at(t)
        mean, var = ou_marginal(model, x0, t)
        for k in range(model.M):
            p = float(stats.kstest(X[:, k], "norm", args=(mean[k], math.sqrt(var[k]))).pvalue)
            cells.append([t, k, p])
    level = ex["level"] / len(cells)
    rep.table("exact_law_ks", ["t", "mode", "pvalue"], cells)
    rep.check("exact_law_ks", all(r[2] > level for r in cells), cells=len(cells), corrected_level=level,
              min_pvalue=min(r[2] for r in cells),
              uncorrected_failures=sum(r[2] <= ex["level"] for r in cells))

    one = SpectralModel(np.array([1.0]))
    cd = c["constant_drift"]
    e = simulate(one, ConstantDrift([cd["z"]]), [0.0], 1.0, cd["dt"], N=cd["N"], seed=seed + 1)
    X = e.at(1.0)[:, 0]
    target = (1 - math.exp(-1.0)) * cd["z"]
    se = X.std(ddof=1) / math.sqrt(len(X))
    rep.check("constant_drift_mean", abs(X.mean() - target) <= 3 * se, mean=float(X.mean()), target=target,
              stderr=float(se))

    mo = c["moments"]
    m8 = model_from_config({"family": "burgers1d", "M": 8})
    x0 = np.zeros(8)
    x0[0] = 1.0
    e = simulate(m8, None, x0, mo["T"], mo["dt"] * 10, N=mo["N"] * 5, seed=seed + 2)
    mom2 = moment_probe([e], 2)[0]["moment"]
    mom4 = moment_probe([e], 4)[0]["moment"]
    worst2 = worst4 = 0.0
    for i, t in enumerate(e.times):
        mean, var = ou_marginal(m8, x0, t)
        exp2 = var.sum() + (mean**2).sum()
        s = var.sum() + (mean**2).sum()
        exp4 = s * s + 2 * (var**2).sum() + 4 * (var * mean**2).sum()
        r2 = np.linalg.norm(e.paths[:, i], axis=-1) ** 2
        se2 = r2.std(ddof=1) / math.sqrt(len(r2)) + 1e-300
        se4 = (r2**2).std(ddof=1) / math.sqrt(len(r2)) + 1e-300
        if t > 0:
            worst2 = max(worst2, abs(mom2[i] - exp2) / se2)
            worst4 = max(worst4, abs(mom4[i] - exp4) / se4)
    rep.check("gaussian_moments", worst2 <= 4 and worst4 <= 4, max_z_p2=worst2, max_z_p4=worst4)

    M = max(mo["m_levels"])
    bm = model_from_config({"family": "burgers1d", "M": M})
    F = BurgersDrift(M, "tanh")
    x0 = np.zeros(M)
    x0[0] = 1.0
    sweep = [simulate(bm, F, x0, mo["T"], mo["dt"], m=m, N=mo["N"], seed=seed + 3, record_every=10)
             for m in mo["m_levels"]]
    probe = moment_probe(sweep, 2)
    for row in probe:
        rep.plot("moments_m_sweep", "t", "E|X_t|^2", row["times"], row["moment"], label=f"m{row['m']}", logx=False,
                 logy=False)
    sups = [row["sup_moment"] for row in probe]
    spread = max(sups) / min(sups) - 1
    rep.table("moments_m_sweep", ["m", "sup_t_moment"], [[r["m"], r["sup_moment"]] for r in probe])
    rep.check("moment_stability_in_m", spread <= mo["rel_spread"], sup_moments=sups, spread=spread,
              limit=mo["rel_spread"])

    wo = c["weak_order"]
    dts = sorted(wo["dts"])
    ratios = [dts[i + 1] / dts[i] for i in range(len(dts) - 1)]
    levels = len(dts) - 1
    Fw = NearConstantDrift([0.0], wo["delta"], (0,), "tanh")
    if not all(abs(r - 2.0) < 1e-9 for r in ratios):
        raise ValueError("simulate.weak_order.dts must be successive halvings")
    out = coupled_terminal(one, Fw, [0.5], lambda X: np.cos(X[:, 0]), wo["T"], dts[0], levels, N=wo["N"],
                           seed=seed + 4)
    gaps = [float(np.mean(out[j] - out[j + 1])) for j in range(levels)]
    gse = [float(np.std(out[j] - out[j + 1], ddof=1) / math.sqrt(wo["N"])) for j in range(levels)]
    rep.table("weak_order", ["dt", "mean_gap_to_2dt", "stderr"], [[dts[j], gaps[j], gse[j]] for j in range(levels)])
    rep.plot("weak_order", "dt", "|E f(X^dt) - E f(X^2dt)|", dts[:levels], [abs(g) for g in gaps])
    decreasing = all(abs(gaps[j]) + 3 * gse[j] < abs(gaps[j + 1]) for j in range(levels - 1))
    rep.check("weak_error_decreases_with_dt", decreasing, gaps=gaps, stderr=gse,
              order=(math.log2(abs(gaps[1]) / abs(gaps[0])) if levels > 1 and gaps[0] else None))

    gi = c["girsanov"]
    base = simulate(one, None, [0.0], gi["T"], gi["dt"], N=gi["N"], seed=seed + 5, store_noise=True)
    w0 = girsanov_weight(base, lambda y: np.zeros_like(y))
    rep.check("girsanov_zero_b", bool(np.all(w0.weights == 1.0)) and w0.nonfinite == 0)
    w = girsanov_weight(base, lambda y: np.full_like(y, gi["shift"]))
    XT = base.at(gi["T"])[:, 0]
    wx = w.weights * XT
    target = gi["shift"] * (1 - math.exp(-gi["T"]))
    se = wx.std(ddof=1) / math.sqrt(gi["N"])
    wse = w.weights.std(ddof=1) / math.sqrt(gi["N"])
    rep.check("girsanov_shifted_mean", abs(wx.mean() - target) <= 3 * se and abs(w.weights.mean() - 1) <= 3 * wse,
              weighted_mean=float(wx.mean()), target=target, stderr=float(se), mean_weight=float(w.weights.mean()),
              nonfinite=w.nonfinite)

    h = c["h01"]
    M = max(h["m_levels"])
    hm = model_from_config({"family": "h01burgers", "M": M})
    hb = H01Burgers(M)
    base_drift = TruncatedDrift(H01BurgersDrift(M, "none"), h["truncation"])
    full_drift = TruncatedDrift(H01BurgersDrift(M, "sqrt-saturation"), h["truncation"])
    em = []
    for m in h["m_levels"]:
        e = simulate(hm, base_drift, np.zeros(M), h["T"], h["dt"], m=m, N=h["N"], seed=seed + 6)
        em.append(exponential_moment(e))
    vals = [r["estimate"] for r in em]
    spread = max(vals) / min(vals) - 1
    rep.table("h01_exponential_moment", ["m", "estimate", "stderr"], [[r["m"], r["estimate"], r["stderr"]] for r in em])
    rep.check("h01_exponential_moment_stable", all(np.isfinite(vals)) and spread <= mo["rel_spread"], estimates=vals,
              spread=spread)
    m = min(h["m_levels"])
    x0h = np.zeros(M)
    x0h[0] = 0.5
    eb = simulate(hm, base_drift, x0h, h["T"], h["dt"], m=m, N=h["N"] * 5, seed=seed + 7, store_noise=True)
    B = lambda y: hb.perturbation_field(y) * cutoff(np.linalg.norm(y, axis=-1) / h["truncation"])[:, None]
    gw = girsanov_weight(eb, B)
    keep = np.isfinite(gw.weights)
    fw = gw.weights[keep] * np.cos(eb.at(h["T"])[keep, 0])
    ed = simulate(hm, full_drift, x0h, h["T"], h["dt"], m=m, N=h["N"] * 5, seed=seed + 8)
    fd = np.cos(ed.at(h["T"])[:, 0])
    se = math.hypot(fw.std(ddof=1) / math.sqrt(len(fw)), fd.std(ddof=1) / math.sqrt(len(fd)))
    rep.check("girsanov_matches_direct", abs(fw.mean() - fd.mean()) <= 3 * se, weighted=float(fw.mean()),
              direct=float(fd.mean()), stderr=se, nonfinite=gw.nonfinite)

    fa = c["factorization"]
    e = simulate(one, None, [0.0], 1.0, fa["dt"], N=fa["N"], seed=seed + 9, scheme="factorization_check",
                 alpha=fa["alpha"], substeps=fa["substeps"])
    v = float(e.at(1.0)[:, 0].var(ddof=1))
    q = float(covariance_qt(one, 1.0)[0])
    sv = q * math.sqrt(2.0 / (fa["N"] - 1))
    rep.check("factorization_variance", abs(v - q) <= 3 * sv, variance=v, target=q, stderr=sv)

    bm16 = model_from_config({"family": "burgers1d", "M": 16})
    Fc = BurgersDrift(16, "classical-burgers")
    x0 = np.zeros(16)
    x0[0] = 0.5
    level = 1.5
    a = simulate(bm16, TruncatedDrift(Fc, level), x0, 1.0, 0.01, N=500, seed=seed + 10,
                 exit_levels=[1.0, level])
    b = simulate(bm16, Fc, x0, 1.0, 0.01, N=500, seed=seed + 10, guard=1e300)
    tau = a.exit_times[level]
    # the drifts coincide on |y| <= n, so paths agree bitwise through the exit step
    stop = np.rint(np.where(np.isfinite(tau), tau / 0.01, a.paths.shape[1] - 1)).astype(int)
    same = all(np.array_equal(a.paths[i, : stop[i] + 1], b.paths[i, : stop[i] + 1]) for i in range(a.N))
    ordered = bool(np.all(a.exit_times[1.0] <= tau))
    rep.check("truncation_agrees_before_exit", same and ordered, level=level,
              exited=int(np.isfinite(tau).sum()), paths=a.N)
    return rep


# --------------------------------------------------------------------------- uniqueness

def laplace_cases(count: int) -> list[dict]:
    base = [
        ({"eigenvalues": [1.0]}, {"shape": "cosine", "active": [0]}, "tanh", 0.0, 1.0),
        ({"eigenvalues": [1.0]}, {"shape": "gaussian-bump", "active": [0], "params": {"width": 0.7}}, "sin", 0.1, 1.0),
        ({"eigenvalues": [1.0]}, {"shape": "indicator-smooth", "active": [0], "params": {"eps": 0.3}}, "tanh", 0.0,
         2.0),
        ({"eigenvalues": [1.0, 4.0]}, {"shape": "tanh-product", "active": [0, 1], "params": {"scale": [1.5, 1.5]}},
         "tanh", 0.0, 1.0),
    ]
    xs = [-0.6, 0.0, 0.4, 1.0]
    out = []
    for i in range(count):
        mcfg, f, prof, z0, lam = base[i % len(base)]
        out.append({"model": mcfg, "f": f, "profile": prof, "z0": z0, "lam": lam, "x": xs[(i // len(base)) % len(xs)],
                    "index": i})
    return out


def _laplace_case(item) -> dict:
    case, sim = item
    model = model_from_config(case["model"])
    M = model.M
    z = np.zeros(M)
    z[0] = case["z0"]
    F = NearConstantDrift(z, 0.2, tuple(range(M)), case["profile"])
    f = cy.from_config(case["f"])
    x = np.full(M, case["x"])
    r = laplace_crosscheck(model, case["lam"], F, z, f, x, dict(sim, seed=sim["seed"] + case["index"]))
    return r


def suite_uniqueness(cfg: dict) -> Report:
    c = cfg["uniqueness"]
    seed = cfg["seed"]
    rep = Report("uniqueness")
    model = model_from_config(c["model"])
    F = drift_from_config(c["drift"], model)
    if F.bounded is False:
        raise ValueError("uniqueness.drift: constructions are compared for bounded drifts only; wrap it in truncated")
    x0 = np.zeros(model.M)
    x0[: len(c["x0"])] = c["x0"]
    times = c["times"]
    ca, cb = c["constructions"][:2]
    ca_x0 = ca.get("x0", c["x0"])
    cb_x0 = cb.get("x0", c["x0"])
    if list(ca_x0) != list(cb_x0):
        raise ValueError("uniqueness.constructions: x0 differs between constructions")
    dts = sorted(set(ca["dts"]) & set(cb["dts"]), reverse=True)
    rows = []
    finest = None
    for i, dt in enumerate(dts):
        stride = int(round(min(times) / dt))
        kw_a = dict(scheme=ca["scheme"], alpha=ca.get("alpha", 0.5), substeps=ca.get("substeps", 2))
        kw_b = dict(scheme=cb["scheme"], alpha=cb.get("alpha", 0.5), substeps=cb.get("substeps", 2))
        A = simulate(model, F, x0, c["T"], dt, N=c["N"], seed=ca.get("seed", seed + 11), record_every=stride, **kw_a)
        B = simulate(model, F, x0, c["T"], dt, N=c["N"], seed=cb.get("seed", seed + 12), record_every=stride, **kw_b)
        cmp = compare_marginals(A, B, times, level=c["level"], seed=seed)
        rows.append([dt, cmp.max_statistic, cmp.cells[0]["critical"], cmp.passed])
        finest = cmp
        if i == 0:
            same = compare_marginals(A, A, times, energy=False)
            rep.check("identical_ensembles_zero_statistic", same.max_statistic == 0.0)
    rep.table("scheme_comparison", ["dt", "max_ks", "critical", "pass"], rows)
    rep.plot("scheme_comparison", "dt", "max KS statistic", [r[0] for r in rows], [r[1] for r in rows])
    trend = all(rows[i + 1][1] <= rows[i][1] for i in range(len(rows) - 1))
    rep.check("schemes_agree_at_finest_dt", finest.passed, dt=dts[-1], max_statistic=finest.max_statistic,
              cell_level=finest.cell_level, statistic_decreasing_in_dt=trend, cells=finest.to_dict()["cells"])

    mo = c["mollified"]
    stride = int(round(min(times) / mo["dt"]))
    A = simulate(model, F, x0, c["T"], mo["dt"], N=c["N"], seed=seed + 13, record_every=stride)
    Fn = MollifiedDrift(model, F, mo["n"])
    B = simulate(model, Fn, x0, c["T"], mo["dt"], N=c["N"], seed=seed + 14, record_every=stride)
    cmp = compare_marginals(A, B, times, level=c["level"], seed=seed + 1)
    rep.check("mollified_agrees", cmp.passed, n=mo["n"], max_statistic=cmp.max_statistic,
              cell_level=cmp.cell_level, cells=cmp.to_dict()["cells"])

    la = c["laplace"]
    sim = {"dt": la["dt"], "N": la["N"], "seed": seed + 100}
    results = fan_out(_laplace_case, [(case, sim) for case in laplace_cases(la["cases"])], cfg["workers"])
    rep.table("laplace", ["case", "lam", "x", "lhs", "rhs", "residual", "budget", "pass"],
              [[i, r["lam"], r["x"][0], r["lhs"], r["rhs"], r["residual"], r["budget"], r["pass"]]
               for i, r in enumerate(results)])
    rep.check("laplace_crosscheck", all(r["pass"] for r in results), cases=len(results),
              max_residual_over_budget=max(r["residual"] / r["budget"] for r in results))
    return rep


# --------------------------------------------------------------------------- zygmund

def suite_zygmund(cfg: dict) -> Report:
    c = cfg["zygmund"]
    seed = cfg["seed"]
    rep = Report("zygmund")
    model = SpectralModel(np.array([1.0]))
    consts = derive_constants(model)
    c1z = zygmund_constant(consts)
    kink = cy.abs_clip(0, 0.0, 1.0)
    pts = x_battery(model, (0,), c["points"], seed)[:, :1]
    r = zygmund_seminorm(kink, pts, c["h_grid"], f_sup=1.0)
    rep.check("kink_calibration", abs(r["ratio"] - 2.0) <= c["kink_tol"], ratio=r["ratio"], tolerance=c["kink_tol"])
    affine = lambda y: 3.0 * y[:, 0] - 1.0
    aff = zygmund_seminorm(affine, pts, c["h_grid"])
    # four roundings of values up to max|G| over the smallest increment
    roundoff = 8.0 * np.finfo(float).eps * float(np.max(np.abs(affine(pts)) + 3.0)) / min(c["h_grid"])
    rep.check("affine_zero", aff["ratio"] <= roundoff, ratio=aff["ratio"], roundoff=roundoff)
    rows = []
    ok = True
    for mcfg, f in [({"eigenvalues": [1.0]}, cy.step(0)), ({"eigenvalues": [1.0]}, cy.abs_clip(0, 0.0, 1.0)),
                    ({"eigenvalues": [1.0]}, cy.erf_clip([0], 0.25)), ({"eigenvalues": [1.0]}, cy.cosine([0])),
                    ({"family": "burgers1d", "M": 32}, cy.tanh_product([0, 1], [3.0, 3.0]))]:
        m = model_from_config(mcfg)
        idx = list(f.active)

        def field(y, m=m, f=f, idx=idx):
            X = np.zeros((len(y), m.M))
            X[:, idx] = y
            return resolvent(m, 1.0, None, f, X).gradient[:, idx]

        p = x_battery(m, f.active, c["points"], seed)[:, idx]
        zr = zygmund_seminorm(field, p, c["h_grid"], f_sup=f.sup_norm, constant=c1z)
        ok &= zr["pass_ratio"]
        rows.append([f.shape, m.M, zr["ratio"], zr["raw"], zr["bound"], zr["pass_ratio"], zr["pass_raw"]])
    rep.table("zygmund", ["function", "M", "ratio_over_h", "raw_second_difference", "bound", "pass_ratio",
                          "pass_raw"], rows)
    rep.check("solver_gradient_zygmund", ok, c1=c1z, max_ratio=max(r[2] for r in rows),
              max_raw=max(r[3] for r in rows))

    dy = c["dyadic"]
    two = SpectralModel(np.array([1.0]))
    improved = dyadic_telescoping_check(two, cy.abs_clip(0, 0.0, 1.0), dy["t_grid"], seed=seed)
    generic = dyadic_telescoping_check(two, cy.step(0), dy["t_grid"], seed=seed)
    smooth = dyadic_telescoping_check(two, cy.cosine([0]), dy["t_grid"], seed=seed)
    const = dyadic_telescoping_check(two, cy.constant(1.0), dy["t_grid"], seed=seed)
    for name, d in [("abs-clip", improved), ("step", generic), ("cosine", smooth)]:
        rep.plot("dyadic", "t", "sup |D^2 e^{-t} P_t f|", d["t"], d["d2"], label=name)
    lo, hi = dy["improved"]
    rep.check("dyadic_improved_rate", lo <= improved["slope"] <= hi and improved["within_bound"],
              slope=improved["slope"], range=dy["improved"], increment_constant=improved["increment_constant"])
    lo, hi = dy["generic"]
    rep.check("dyadic_generic_rate", lo <= generic["slope"] <= hi, slope=generic["slope"], range=dy["generic"])
    rep.check("dyadic_constant_zero", max(const["d2"]) == 0.0)
    rep.check("dyadic_smooth_reported", smooth["within_bound"], slope=smooth["slope"],
              note="C^2 data keeps the second derivative bounded, so the slope is near 0")
    return rep


SUITE_FUNCTIONS: dict[str, Callable[[dict], Report]] = {
    "semigroup": suite_semigroup,
    "resolvent": suite_resolvent,
    "bounds": suite_bounds,
    "fixedpoint": suite_fixedpoint,
    "simulate": suite_simulate,
    "uniqueness": suite_uniqueness,
    "zygmund": suite_zygmund,
}

DESCRIPTIONS = {
    "semigroup": "constants, gradient formula vs finite differences, Monte Carlo gradients, blow-up rate",
    "resolvent": "resolvent oracle, resolvent identity, generator residual, shifted gradient bound",
    "bounds": "optimal gradient bound battery and gradient increment bound",
    "fixedpoint": "Picard solver contraction, bounds and residual; truncation sweep",
    "simulate": "exact-law KS, moments, weak order, Girsanov, factorization, truncation consistency",
    "uniqueness": "scheme and mollification law comparisons; Laplace cross-check",
    "zygmund": "second-difference seminorm of solver gradients; dyadic rate probes",
}


def run_suite(name: str, cfg: dict) -> Report:
    if name not in SUITE_FUNCTIONS:
        raise ValueError(f"unknown suite {name!r}")
    return SUITE_FUNCTIONS[name](cfg)
