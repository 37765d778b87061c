import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from critspde.drifts import BurgersDrift, CahnHilliardDrift, H01BurgersDrift, TruncatedDrift, cutoff
from critspde.models import Burgers1D, CahnHilliard3D, H01Burgers, hs_norm, scalar_function
from critspde.spectral import model_from_config

vectors = st.lists(st.floats(-3, 3), min_size=8, max_size=8).map(np.array)


def burgers_oracle(x: np.ndarray, h, k: int, points: int = 100_000) -> float:
    # midpoint rule on a fine grid, independent of the pseudo-spectral transform
    xi = (np.arange(points) + 0.5) * math.pi / points
    y = math.sqrt(2 / math.pi) * np.sin(np.outer(xi, np.arange(1, x.size + 1))) @ x
    return float(-math.sqrt(2 / math.pi) * np.sum(h(y) * np.cos(k * xi)) * math.pi / points)


@pytest.mark.parametrize("name", ["tanh", "classical-burgers", "scaled-cubic-clip", "linear-clip"])
def test_burgers_drift_any_parity(name):
    # odd, even and mixed nonlinearities all resolve on the default grid
    h = scalar_function(name)
    x = np.random.default_rng(7).normal(size=8) / np.arange(1, 9)
    F = Burgers1D(8).drift(x[None], h)[0]
    oracle = [burgers_oracle(x, h, k, 400_000) for k in range(1, 9)]
    np.testing.assert_allclose(F, oracle, atol=1e-9)
    shifted = Burgers1D(8).drift(x[None], lambda s: h(s) + 1.0)[0]
    np.testing.assert_allclose(shifted - F, [burgers_oracle(x, lambda s: 1.0 + 0 * s, k) for k in range(1, 9)],
                               atol=1e-12)


def test_burgers_first_mode_oracle():
    b = Burgers1D(8)
    F = b.drift(np.eye(8)[:1], lambda s: s)[0]
    assert F[1] == pytest.approx(4 / (3 * math.pi), abs=1e-12)
    assert 4 / (3 * math.pi) == pytest.approx(0.42441, abs=1e-5)
    np.testing.assert_allclose(F[0::2], 0.0, atol=1e-13)
    # against the direct quadrature for every mode
    for k in range(1, 9):
        assert F[k - 1] == pytest.approx(burgers_oracle(np.eye(8)[0], lambda s: s, k), abs=1e-9)


def test_burgers_zero_h():
    b = Burgers1D(8)
    x = np.random.default_rng(0).normal(size=(3, 8))
    assert np.all(b.drift(x, lambda s: 0 * s) == 0)


@settings(max_examples=30, deadline=None)
@given(x=vectors)
def test_burgers_nonlinear_matches_quadrature(x):
    # tanh of the field is not band-limited: aliasing decays exponentially in the grid
    coarse = Burgers1D(8).drift(x[None], np.tanh)[0]
    fine = Burgers1D(8, grid=512).drift(x[None], np.tanh)[0]
    for k in (1, 4, 8):
        oracle = burgers_oracle(x, np.tanh, k, 200_000)
        assert coarse[k - 1] == pytest.approx(oracle, abs=1e-3)
        assert fine[k - 1] == pytest.approx(oracle, abs=1e-8)


@settings(max_examples=50, deadline=None)
@given(x=vectors)
def test_transport_operator_norm_at_most_one(x):
    b = Burgers1D(8)
    assert np.linalg.norm(b.drift(x[None], lambda s: s)) <= np.linalg.norm(x) * (1 + 1e-12) + 1e-14


@settings(max_examples=50, deadline=None)
@given(x=vectors)
def test_bounded_burgers_drift_bound(x):
    F = BurgersDrift(8, "tanh")
    assert np.linalg.norm(F(x)) <= F.sup_norm + 1e-12
    assert F.sup_norm == pytest.approx(math.sqrt(math.pi))


def test_round_trip_is_identity():
    b = Burgers1D(16, grid=64)
    x = np.random.default_rng(1).normal(size=(4, 16))
    np.testing.assert_allclose(b.project(b.synthesize(x)), x, atol=1e-12)
    c = CahnHilliard3D(3)
    y = np.random.default_rng(2).normal(size=(2, c.model.M))
    np.testing.assert_allclose(c.project(c.synthesize(y)), y, atol=1e-12)


def test_partial_traces_converge():
    traces = [model_from_config({"family": "burgers1d", "M": M}).partial_trace for M in (4, 16, 64, 256)]
    assert all(b > a for a, b in zip(traces, traces[1:]))
    assert traces[-1] < math.pi**2 / 6
    assert math.pi**2 / 6 - traces[-1] < 4e-3


def test_coarse_grids_rejected():
    with pytest.raises(ValueError, match="4M"):
        Burgers1D(8, grid=16)
    with pytest.raises(ValueError, match="4K"):
        CahnHilliard3D(3, grid=8)


def test_cahn_hilliard_eigenvalues():
    c = CahnHilliard3D(2)
    assert c.model.M == 26
    assert c.model.lambdas[0] == 1.0
    assert c.model.lambdas[-1] == 144.0
    assert c.modes[0].tolist() == [0, 0, 1]


def test_cahn_hilliard_identity_and_constants():
    c = CahnHilliard3D(2)
    x = np.random.default_rng(3).normal(size=(3, c.model.M))
    np.testing.assert_allclose(c.drift(x, lambda s: s), x, atol=1e-12)
    np.testing.assert_allclose(c.drift(x, lambda s: 0 * s + 2.5), 0.0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_cahn_hilliard_output_is_mean_zero(seed):
    c = CahnHilliard3D(2)
    x = np.random.default_rng(seed).normal(size=(1, c.model.M))
    F = c.drift(x, scalar_function("scaled-cubic-clip"))
    assert np.abs(c.constant_coefficient(c.synthesize(F))).max() < 1e-12


def test_cahn_hilliard_single_mode_oracle():
    c = CahnHilliard3D(3, grid=64)
    eps = 0.3
    x = np.zeros((1, c.model.M))
    x[0, 0] = eps
    h = scalar_function("scaled-cubic-clip")
    F = c.drift(x, h)[0]
    # mode (0,0,1): the two flat axes contribute pi * (1/sqrt(pi))^2 each
    a = eps * math.sqrt(2 / math.pi) / math.pi
    val = quad(lambda s: float(h(a * math.cos(s))) * math.sqrt(2 / math.pi) * math.cos(s), 0, math.pi,
               epsabs=1e-14)[0]
    assert F[0] == pytest.approx(math.pi * val, abs=1e-10)


def test_cahn_hilliard_drift_needs_modes():
    F = CahnHilliardDrift(2)
    x = np.zeros((1, 26))
    assert np.all(F(x) == 0)


def test_h01_transport_matches_rescaled_burgers():
    hb = H01Burgers(8, perturbation="none")
    b = Burgers1D(8, grid=256)
    k = np.arange(1, 9)
    x = np.random.default_rng(4).normal(size=(5, 8))
    direct = k * b.drift(x / k, lambda s: 0.5 * s * s)
    np.testing.assert_allclose(hb.drift(x), direct, atol=1e-12)
    for kk in (1, 3, 8):
        oracle = kk * burgers_oracle(x[0] / k, lambda s: 0.5 * s * s, kk, 20_000)
        assert hb.drift(x[:1])[0, kk - 1] == pytest.approx(oracle, abs=1e-10)


def test_h01_origin():
    hb = H01Burgers(8)
    assert np.all(hb.drift(np.zeros((1, 8))) == 0)


@settings(max_examples=50, deadline=None)
@given(x=vectors)
def test_h01_perturbation_is_dominated(x):
    hb = H01Burgers(8)
    assert hb.norm(hb.perturbation_field(x[None]))[0] <= hb.c0 + hb.norm(x) + 1e-12


def test_h01_drift_is_unbounded_until_truncated():
    F = H01BurgersDrift(8)
    assert not F.bounded
    Fn = TruncatedDrift(F, 2.0)
    assert Fn.bounded
    far = np.zeros((1, 8))
    far[0, 0] = 4.5
    assert np.all(Fn(far) == 0)
    near = np.full((1, 8), 0.1)
    np.testing.assert_array_equal(Fn(near), F(near))


def test_cutoff_profiles():
    s = np.array([0.0, 1.0, 1.5, 2.0, 3.0])
    for profile in ("smooth", "linear"):
        c = cutoff(s, profile)
        assert c[0] == c[1] == 1.0 and c[3] == c[4] == 0.0
        assert 0 < c[2] < 1
    assert cutoff(np.array([1.5]), "smooth")[0] == pytest.approx(0.5)


def test_hs_norm_examples():
    model = model_from_config({"family": "burgers1d", "M": 4})
    e1, e2 = np.eye(4)[0], np.eye(4)[1]
    u = np.array([0.3, -1.0, 2.0, 0.5])
    assert hs_norm(model, 0.0, u) == pytest.approx(np.linalg.norm(u))
    assert hs_norm(model, 0.5, e1) == pytest.approx(1.0)
    assert hs_norm(model, 0.5, e2) == pytest.approx(2.0)
    assert hs_norm(model, 1.0, e2) == pytest.approx(4.0)


def test_scalar_library():
    with pytest.raises(ValueError):
        scalar_function("cubic")
    assert scalar_function("linear-clip")(np.array([3.0]))[0] == 1.0
    assert scalar_function("classical-burgers").bound == math.inf
