import math

import numpy as np
import pytest
from scipy import stats

from critspde.drifts import BurgersDrift, ConstantDrift, H01BurgersDrift, NearConstantDrift, TruncatedDrift
from critspde.simulator import (
    SimulationBlowUp,
    coupled_terminal,
    exponential_moment,
    factorization_convolution,
    factorization_weights,
    g_alpha_apply,
    girsanov_weight,
    laplace_paths,
    load_ensemble,
    moment_probe,
    ou_marginal,
    save_ensemble,
    simulate,
)
from critspde.spectral import SpectralModel, model_from_config

Q1 = (1 - math.exp(-2)) / 2


def test_zero_drift_exact_law(ou1):
    ens = simulate(ou1, None, [0.0], 1.0, 0.25, N=10_000, seed=1)
    X = ens.at(1.0)[:, 0]
    assert Q1 == pytest.approx(0.432332, abs=1e-6)
    assert stats.kstest(X, "norm", args=(0.0, math.sqrt(Q1))).pvalue > 1e-3
    mean, var = ou_marginal(ou1, [0.0], 1.0)
    assert var[0] == pytest.approx(Q1)


def test_constant_drift_shift_is_exact(ou3):
    z = np.array([1.0, -0.5, 0.2])
    base = simulate(ou3, None, [0.3, 0.0, 1.0], 1.0, 0.1, N=50, seed=2)
    shifted = simulate(ou3, ConstantDrift(z), [0.3, 0.0, 1.0], 1.0, 0.1, N=50, seed=2)
    lam = ou3.lambdas
    gamma = -np.expm1(-lam) / np.sqrt(lam)
    assert gamma[0] == pytest.approx(0.632121, abs=1e-6)
    np.testing.assert_allclose(shifted.at(1.0) - base.at(1.0), np.broadcast_to(gamma * z, (50, 3)), atol=1e-13)


def test_bitwise_reproducible_and_chunk_free():
    model = model_from_config({"family": "burgers1d", "M": 8})
    F = BurgersDrift(8, "tanh")
    a = simulate(model, F, [1.0], 0.2, 0.01, N=40, seed=5)
    b = simulate(model, F, [1.0], 0.2, 0.01, N=40, seed=5, chunk=7)
    c = simulate(model, F, [1.0], 0.2, 0.01, N=20, seed=5, path_offset=20)
    assert a.paths.tobytes() == b.paths.tobytes()
    assert np.array_equal(a.paths[20:], c.paths)
    d = simulate(model, F, [1.0], 0.2, 0.01, N=40, seed=6)
    assert not np.array_equal(a.paths, d.paths)


def test_exit_times_monotone_and_truncation_bitwise():
    model = model_from_config({"family": "burgers1d", "M": 8})
    F = BurgersDrift(8, "classical-burgers")
    levels = [1.0, 1.5, 2.0]
    full = simulate(model, F, [1.0], 0.5, 0.01, N=200, seed=3, exit_levels=levels, guard=1e300)
    for lo, hi in zip(levels, levels[1:]):
        assert np.all(full.exit_times[lo] <= full.exit_times[hi])
    n = 1.5
    trunc = simulate(model, TruncatedDrift(F, n, "smooth"), [1.0], 0.5, 0.01, N=200, seed=3, exit_levels=levels)
    tau = full.exit_times[n]
    stayed = np.isinf(tau)
    assert 0 < stayed.sum() < 200
    assert np.array_equal(full.paths[stayed], trunc.paths[stayed])
    # exited paths agree up to and including the exit step
    for i in np.flatnonzero(~stayed):
        k = int(round(tau[i] / 0.01))
        assert np.array_equal(full.paths[i, : k + 1], trunc.paths[i, : k + 1])


def test_blowup_is_reported():
    model = model_from_config({"family": "h01burgers", "M": 8})
    with pytest.raises(SimulationBlowUp, match="truncation"):
        simulate(model, H01BurgersDrift(8), np.full(8, 50.0), 1.0, 0.1, N=3)


def test_bad_grid_rejected(ou1):
    with pytest.raises(ValueError):
        simulate(ou1, None, [0.0], 1.0, 0.3)
    with pytest.raises(ValueError):
        simulate(ou1, None, [0.0], 1.0, 0.1, scheme="euler")
    with pytest.raises(ValueError):
        simulate(ou1, None, [0.0], 1.0, 0.1, m=2)


def test_second_and_fourth_moments(ou3):
    x0 = np.array([0.5, 0.0, 0.0])
    ens = simulate(ou3, None, x0, 1.0, 0.5, N=20_000, seed=4)
    mean, var = ou_marginal(ou3, x0, 1.0)
    exact2 = float(var.sum() + (mean**2).sum())
    norm2 = np.sum(ens.at(1.0) ** 2, axis=-1)
    probe = moment_probe([ens], 2.0)[0]
    assert probe["moment"][-1] == pytest.approx(norm2.mean())
    assert abs(norm2.mean() - exact2) < 4 * norm2.std() / math.sqrt(norm2.size)
    x2 = ens.at(1.0)[:, 1]
    assert abs(np.mean(x2**4) - 3 * var[1] ** 2) < 4 * np.std(x2**4) / math.sqrt(x2.size)


def test_factorization_deterministic_pieces():
    assert np.all(g_alpha_apply(1.0, 0.5, np.zeros(11), 0.1) == 0)
    lam, v, dt = 2.0, 0.7, 0.05
    out = g_alpha_apply(lam, 1.0, np.full(21, v), dt, normalized=False)
    t = dt * np.arange(21)
    np.testing.assert_allclose(out, -np.expm1(-lam * t) / lam * v, atol=1e-13)
    # the normalising factor sin(pi alpha)/pi vanishes at alpha = 1
    np.testing.assert_allclose(g_alpha_apply(lam, 1.0, np.full(21, v), dt), 0.0, atol=1e-15)
    C = factorization_weights(1.0, 0.5, 0.01, 100, 2)
    assert (C[-1] ** 2).sum() * 0.005 == pytest.approx(Q1, rel=1e-4)
    assert np.all(C[0] == 0)


def test_factorization_convolution_law(ou1):
    dW = np.zeros((3, 20, 1))
    assert np.all(factorization_convolution(ou1, 0.5, dW, 0.05) == 0)
    with pytest.raises(ValueError):
        factorization_convolution(ou1, 0.2, dW, 0.05)
    ens = simulate(ou1, None, [0.0], 1.0, 0.02, N=4000, seed=8, scheme="factorization_check")
    X = ens.at(1.0)[:, 0]
    se = Q1 * math.sqrt(2 / (X.size - 1))
    assert abs(X.var(ddof=1) - Q1) < 3 * se


def test_girsanov(ou1):
    ens = simulate(ou1, None, [0.0], 1.0, 0.01, N=20_000, seed=9, store_noise=True)
    zero = girsanov_weight(ens, lambda Y: np.zeros_like(Y))
    assert np.all(zero.weights == 1.0) and zero.nonfinite == 0
    v = 0.5
    w = girsanov_weight(ens, lambda Y: np.full_like(Y, v)).weights
    est = w * ens.at(1.0)[:, 0]
    target = (1 - math.exp(-1)) * v
    assert abs(est.mean() - target) < 3.5 * est.std() / math.sqrt(est.size)
    assert abs(w.mean() - 1) < 4 * w.std() / math.sqrt(w.size)
    with pytest.raises(ValueError, match="store_noise"):
        girsanov_weight(simulate(ou1, None, [0.0], 0.1, 0.01, N=2), lambda Y: Y)


def test_exponential_moment_is_finite():
    model = model_from_config({"family": "h01burgers", "M": 16})
    ens = simulate(model, None, np.zeros(16), 0.25, 0.005, N=500, seed=1)
    r = exponential_moment(ens)
    assert math.isfinite(r["estimate"]) and r["estimate"] >= 1.0


def test_coupled_levels_reuse_paths(ou3):
    F = NearConstantDrift([0.0, 0.0, 0.0], 0.2, (0,))
    f = lambda X: np.cos(X[:, 0])
    levels = coupled_terminal(ou3, F, [0.3, 0.0, 0.0], f, 0.4, 0.05, levels=2, N=30, seed=2)
    ens = simulate(ou3, F, [0.3, 0.0, 0.0], 0.4, 0.05, N=30, seed=2)
    np.testing.assert_allclose(levels[0], f(ens.at(0.4)), atol=1e-13)
    assert len(levels) == 3


def test_laplace_fine_run_matches_simulate(ou1):
    f = lambda X: np.cos(X[:, 0])
    fine, coarse = laplace_paths(ou1, None, [0.5], f, 1.0, 0.4, 0.02, N=25, seed=3)
    ens = simulate(ou1, None, [0.5], 0.4, 0.02, N=25, seed=3)
    w = np.full(21, 0.02) * np.exp(-0.02 * np.arange(21))
    w[[0, -1]] *= 0.5
    vals = np.cos(ens.paths[:, :, 0])
    np.testing.assert_allclose(fine, vals @ w, atol=1e-13)
    assert np.abs(fine - coarse).max() < 1e-2


def test_ensemble_round_trip(tmp_path):
    model = SpectralModel(np.array([1.0, 4.0]))
    ens = simulate(model, None, [1.0, 0.0], 0.2, 0.1, N=6, seed=0, exit_levels=[0.5, 1.2])
    meta, _ = save_ensemble(ens, tmp_path)
    back = load_ensemble(meta)
    assert back.paths.tobytes() == ens.paths.tobytes()
    for k, v in ens.exit_times.items():
        np.testing.assert_array_equal(back.exit_times[k], v)
    meta2, _ = save_ensemble(back, tmp_path / "again")
    assert open(meta).read() == open(meta2).read()
