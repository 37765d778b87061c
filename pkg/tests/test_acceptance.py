"""One test per acceptance criterion, at the default (full) problem sizes.

Each suite runs once per session and is cached; every test prints a single
PASS/FAIL line with the measured quantity next to its threshold.
"""

import copy
import math
import time
from pathlib import Path

import numpy as np
import pytest

from critspde import config as cfgmod
from critspde.report import write
from critspde.spectral import derive_c1, derive_constants, model_from_config
from critspde.suites import battery_functions, run_suite

PI_OVER_SQRT2 = math.pi / math.sqrt(2.0)
_RUNS: dict = {}


class SuiteRun:
    def __init__(self, report, seconds, outdir):
        self.report, self.seconds, self.outdir = report, seconds, outdir
        self.checks = {c["name"]: c for c in report.checks}

    def table(self, name):
        header, rows = self.report.tables[name]
        return [dict(zip(header, r)) for r in rows]


def _execute(name: str, cfg: dict, outdir: Path) -> SuiteRun:
    t0 = time.perf_counter()
    rep = run_suite(name, cfg)
    seconds = time.perf_counter() - t0
    rep.config = {"seed": cfg["seed"], name: cfg[name]}
    write(rep, outdir, False)
    return SuiteRun(rep, seconds, outdir)


@pytest.fixture(scope="session")
def suite(tmp_path_factory):
    base = tmp_path_factory.mktemp("acceptance")

    def get(name: str) -> SuiteRun:
        if name not in _RUNS:
            _RUNS[name] = _execute(name, cfgmod.load(), base / name)
        return _RUNS[name]

    return get


@pytest.fixture
def verdict(capsys):
    def emit(n: int, ok: bool, text: str):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:2d} {'PASS' if ok else 'FAIL'}: {text}")
        assert ok, text

    return emit


def test_01_optimal_gradient_bound(suite, verdict):
    run = suite("bounds")
    rows = run.table("optimal_bound")
    cfg = cfgmod.DEFAULTS["bounds"]
    models = {name: model_from_config(m) for name, m in cfg["models"].items()}
    unit = all(f.sup_norm == 1.0 for m in models.values() for f in battery_functions(m))
    families = {r["model"] for r in rows}
    worst = max(r["normalized_sup"] for r in rows)
    ok = (len(rows) >= 20 and unit and families == {"ou", "burgers", "cahnhilliard"}
          and worst <= PI_OVER_SQRT2 + 1e-2 and run.seconds <= 300)
    verdict(1, ok, f"{len(rows)} cases over {sorted(families)}, max |(-A)^(1/2)Du| = {worst:.6f} "
                   f"<= {PI_OVER_SQRT2 + 1e-2:.6f}; suite time {run.seconds:.0f}s <= 300s")


def test_02_increment_bound(suite, verdict):
    run = suite("bounds")
    rows = run.table("increment")
    c2 = derive_constants(model_from_config(cfgmod.DEFAULTS["bounds"]["models"]["ou"])).c2
    assert rows[0]["c2"] == pytest.approx(c2, rel=1e-12)
    s = np.array(cfgmod.DEFAULTS["bounds"]["increment"]["s_grid"])
    log_grid = s.min() == pytest.approx(1e-3) and s.max() == 1.0 and np.allclose(np.diff(np.log10(s)), 0.5, atol=1e-6)
    worst = max(r["max_ratio"] for r in rows)
    slopes = [r["slope"] for r in rows if r["saturating"]]
    ok = log_grid and worst <= c2 + 5e-2 and slopes and min(slopes) >= 0.4
    verdict(2, ok, f"max |P_s Du - Du|/(s^(1/2)||f||) = {worst:.4f} <= C2 + 0.05 = {c2 + 0.05:.4f}; "
                   f"saturating slope {min(slopes):.3f} >= 0.4")


def test_03_constant_oracle(suite, verdict):
    c1 = derive_c1()
    # independent oracle: the weight sqrt(2 s) e^{-s} / sqrt(1 - e^{-2s}) in s = t lambda, written out here
    s = np.logspace(-14, 2, 400_001)
    oracle = float(np.max(np.sqrt(2.0 * s) * np.exp(-s) / np.sqrt(-np.expm1(-2.0 * s))))
    lt = suite("semigroup").checks["lambda_t_sqrt_t_below_c1"]
    ok = (abs(c1 - 1.0) <= 1e-5 and abs(c1 - oracle) <= 1e-5 and lt["pass"]
          and cfgmod.DEFAULTS["semigroup"]["lambda_t_points"] == 60 and lt["max_value"] <= c1 + 1e-10)
    verdict(3, ok, f"C1 = {c1:.9f} (oracle {oracle:.9f}), max sqrt(t) Lambda_t over 60 log times and 3 models "
                   f"= {lt['max_value']:.9f} <= C1 + 1e-10")


def test_04_gradient_formula_consistency(suite, verdict):
    run = suite("semigroup")
    fd, mc = run.checks["gradient_vs_finite_differences"], run.checks["montecarlo_within_sigmas"]
    ok = fd["pass"] and fd["max_rel_error"] <= 1e-4 and mc["pass"] and mc["samples"] >= 1_000_000 and mc["max_z"] <= 3
    verdict(4, ok, f"max relative FD error {fd['max_rel_error']:.2e} <= 1e-4; "
                   f"MC max |z| {mc['max_z']:.2f} <= 3 at N = {mc['samples']}")


def test_05_exact_law_simulation(suite, verdict):
    run = suite("simulate")
    ks = run.checks["exact_law_ks"]
    el = cfgmod.DEFAULTS["simulate"]["exact_law"]
    sized = el["N"] == 10_000 and el["model"]["M"] == 16 and el["times"] == [0.1, 1.0, 5.0] and el["level"] == 0.01
    ok = ks["pass"] and sized and ks["cells"] == 16 * 3 and ks["min_pvalue"] >= ks["corrected_level"]
    verdict(5, ok, f"{ks['cells']} (mode, t) cells at N = {el['N']}: min KS p-value {ks['min_pvalue']:.2e} "
                   f">= corrected 1% level {ks['corrected_level']:.2e}")


def test_06_fixed_point(suite, verdict):
    run = suite("fixedpoint")
    ch = run.checks
    ok = (cfgmod.DEFAULTS["fixedpoint"]["delta"] <= 0.2 and ch["picard_contraction"]["max_contraction"] <= 0.8
          and ch["solution_bounds"]["pass"] and ch["integral_equation_residual"]["max_residual"] <= 1e-3)
    verdict(6, ok, f"contraction {ch['picard_contraction']['max_contraction']:.3f} <= 0.8, "
                   f"bounds 4||g|| and 12||g|| hold, residual {ch['integral_equation_residual']['max_residual']:.1e} <= 1e-3")


def test_07_laplace_crosscheck(suite, verdict):
    run = suite("uniqueness")
    lc = run.checks["laplace_crosscheck"]
    N = cfgmod.DEFAULTS["uniqueness"]["laplace"]["N"]
    ok = lc["pass"] and lc["cases"] == 16 and N == 100_000 and run.seconds <= 900
    verdict(7, ok, f"{lc['cases']} cases at N = {N}: max residual/budget {lc['max_residual_over_budget']:.3f} <= 1; "
                   f"suite time {run.seconds:.0f}s <= 900s")


def test_08_uniqueness(suite, verdict):
    run = suite("uniqueness")
    u = cfgmod.DEFAULTS["uniqueness"]
    a, b = run.checks["schemes_agree_at_finest_dt"], run.checks["mollified_agrees"]
    bonf = all(c["cell_level"] == pytest.approx(u["level"] / len(c["cells"])) for c in (a, b))
    sized = u["N"] == 10_000 and u["times"] == [0.25, 0.5, 1.0] and u["mollified"]["n"] == 64
    ok = a["pass"] and b["pass"] and bonf and sized
    verdict(8, ok, f"Euler vs factorization max KS {a['max_statistic']:.4f}, F_64 vs F max KS "
                   f"{b['max_statistic']:.4f}, Bonferroni level {a['cell_level']:.2e}, N = {u['N']}")


def test_09_truncation_sweep(suite, verdict):
    run = suite("fixedpoint")
    cm, gb = run.checks["truncation_cauchy_monotone"], run.checks["truncation_uniform_gradient_bound"]
    cauchy = cm["cauchy"]
    mono = all(b < a for a, b in zip(cauchy, cauchy[1:]))
    ok = cfgmod.DEFAULTS["fixedpoint"]["truncation"]["levels"] == [1, 4, 16, 64] and mono and cm["pass"] \
        and gb["max_grad"] <= 12.0
    verdict(9, ok, f"Cauchy differences over n = 1,4,16,64: {[f'{c:.2e}' for c in cauchy]}; "
                   f"max gradient {gb['max_grad']:.3f} <= 12||f||")


def test_10_zygmund(suite, verdict):
    run = suite("zygmund")
    cons = derive_constants(model_from_config({"eigenvalues": [1.0]}))
    c1 = 16 * (cons.c1**2 + 1) * (cons.c2 + 1)
    sz, kink = run.checks["solver_gradient_zygmund"], run.checks["kink_calibration"]
    ok = sz["c1"] == pytest.approx(c1, rel=1e-12) and sz["max_ratio"] <= c1 and abs(kink["ratio"] - 2.0) <= 1e-3
    verdict(10, ok, f"second-difference ratio {sz['max_ratio']:.3f} <= c1 = {c1:.2f}; kink ratio {kink['ratio']:.6f}")


# reduced sizes for rerunning the two expensive suites; identical between the two runs
_SMALL = {
    "bounds": {"models": {"ou": {"eigenvalues": [1.0]}}, "lams": [1.0], "points": 8, "polish": 1,
               "increment": {"s_grid": [1e-3, 1e-2, 1e-1], "points": 4}},
    "uniqueness": {"N": 1500, "mollified": {"n": 64.0, "dt": 0.025}, "laplace": {"N": 4000, "dt": 0.02, "cases": 2},
                   "constructions": [{"scheme": "exponential_euler", "dts": [1e-2]},
                                     {"scheme": "factorization_check", "dts": [1e-2], "alpha": 0.5, "substeps": 2}]},
}


def _files(d: Path) -> dict:
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_11_determinism(suite, verdict, tmp_path):
    same, compared = [], 0
    for name in cfgmod.SUITES:
        if name in _SMALL:
            cfg = cfgmod.load(overrides={name: copy.deepcopy(_SMALL[name])})
            first = _execute(name, cfg, tmp_path / f"{name}-1").outdir
        else:
            cfg = cfgmod.load()
            first = suite(name).outdir
        second = _execute(name, cfg, tmp_path / f"{name}-2").outdir
        a, b = _files(first), _files(second)
        compared += len(a)
        same.append(bool(a) and a == b)
    ok = all(same)
    verdict(11, ok, f"{compared} report files over {len(same)} suites byte-identical on rerun: {ok}")
