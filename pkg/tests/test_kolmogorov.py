import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from critspde import cylindrical as cy
from critspde.drifts import ConstantDrift, H01BurgersDrift, NearConstantDrift, TruncatedDrift, ZeroDrift
from critspde.kolmogorov import (
    PI_OVER_SQRT2,
    PreconditionError,
    fixed_point_solve,
    generator_apply,
    generator_residual_check,
    mollify_drift,
    resolvent,
    resolvent_identity_check,
    truncated_solution,
)
from critspde.spectral import SpectralModel


def cos_oracle(lam: float, x: float, z: float = 0.0) -> float:
    # 1-D OU with eigenvalue 1: P_t^z cos(x) = e^{-Q_t/2} cos(e^{-t} x + (1 - e^{-t}) z)
    def integrand(t):
        q = -math.expm1(-2 * t) / 2
        return math.exp(-lam * t) * math.exp(-q / 2) * math.cos(math.exp(-t) * x - math.expm1(-t) * z)

    return quad(integrand, 0, math.inf, epsabs=1e-13, epsrel=1e-13, limit=400)[0]


def test_constant_data(ou3):
    r = resolvent(ou3, 2.0, [0.1, 0.0, 0.3], cy.constant(0.3), np.array([0.5, -1.0, 2.0]))
    assert r.value == pytest.approx(0.15, abs=1e-9)
    assert np.all(r.gradient == 0)


@pytest.mark.parametrize("x,z", [(1.0, 0.0), (0.0, 0.0), (-0.7, 0.5), (1.3, -0.4)])
def test_cosine_matches_adaptive_quadrature(ou1, x, z):
    r = resolvent(ou1, 1.0, [z], cy.cosine([0]), np.array([x]))
    assert r.value == pytest.approx(cos_oracle(1.0, x, z), abs=1e-8)
    assert r.quad_error < 1e-6


def test_batch_agrees_with_points(ou3):
    f = cy.tanh_product([0, 2], [1.0, 2.0])
    X = np.random.default_rng(3).normal(size=(5, 3))
    batch = resolvent(ou3, 1.0, None, f, X)
    for i, x in enumerate(X):
        single = resolvent(ou3, 1.0, None, f, x)
        assert single.value == pytest.approx(batch.value[i], abs=1e-10)
        np.testing.assert_allclose(single.gradient, batch.gradient[i], atol=1e-10)
    # inactive coordinate carries no gradient
    assert np.all(batch.gradient[:, 1] == 0)


@settings(max_examples=25, deadline=None)
@given(x=st.floats(-3, 3), z=st.floats(-1, 1), lam=st.sampled_from([0.1, 1.0, 5.0]),
       shape=st.sampled_from(["erf", "step", "tanh", "abs"]))
def test_value_and_gradient_bounds(x, z, lam, shape):
    model = SpectralModel(np.array([1.0]))
    f = {"erf": cy.erf_clip([0], 0.1), "step": cy.step(0), "tanh": cy.tanh_product([0], [3.0]),
         "abs": cy.abs_clip(0)}[shape]
    r = resolvent(model, lam, [z], f, np.array([x]))
    assert abs(r.value) <= f.sup_norm / lam + 1e-8
    assert np.linalg.norm(r.sqrtA_gradient) <= PI_OVER_SQRT2 * f.sup_norm + 1e-6


@pytest.mark.parametrize("x", [-1.0, 0.3, 1.5])
def test_gradient_matches_finite_differences(ou3, x):
    f = cy.cosine([0, 1], [1.0, 2.0])
    z = np.array([0.2, -0.1, 0.0])
    h = 1e-4
    base = np.array([x, 0.4, 0.0])
    g = resolvent(ou3, 1.0, z, f, base).gradient
    for k in (0, 1):
        e = np.zeros(3)
        e[k] = h
        fd = (resolvent(ou3, 1.0, z, f, base + e).value - resolvent(ou3, 1.0, z, f, base - e).value) / (2 * h)
        assert g[k] == pytest.approx(fd, abs=1e-6)


def test_identity_for_constants(ou1):
    lam, mu, c = 1.0, 2.0, 0.7
    f = cy.constant(c)
    x = np.zeros(1)
    lhs = resolvent(ou1, mu, None, f, x).value - resolvent(ou1, lam, None, f, x).value
    assert lhs == pytest.approx(c * (lam - mu) / (lam * mu), abs=1e-10)


def test_resolvent_identity_and_swap(ou1):
    f = cy.cosine([0])
    a = resolvent_identity_check(ou1, 1.0, 2.0, None, f)
    b = resolvent_identity_check(ou1, 2.0, 1.0, None, f)
    assert a["residual"] <= 1e-4
    assert b["residual"] <= 1e-4


def test_generator_examples(ou1):
    assert generator_apply(ou1, None, cy.quadratic([0]), np.array([1.0])) == pytest.approx(-1.0, abs=1e-14)
    assert generator_apply(ou1, None, cy.cosine([0]), np.array([0.0])) == pytest.approx(-0.5, abs=1e-14)
    assert generator_apply(ou1, None, cy.constant(2.0), np.array([0.3])) == 0.0
    with pytest.raises(ValueError):
        generator_apply(ou1, None, cy.step(0), np.array([0.0]))


def test_generator_of_shifted_cosine(ou1):
    # L^z cos at x: -cos(x)/2 + x sin(x) - z sin(x)
    x, z = 0.8, 0.3
    expected = -0.5 * math.cos(x) + x * math.sin(x) - z * math.sin(x)
    assert generator_apply(ou1, [z], cy.cosine([0]), np.array([x])) == pytest.approx(expected, abs=1e-14)


def test_generator_residual_refines(ou1):
    f = cy.cosine([0])
    coarse = generator_residual_check(ou1, 1.0, None, f, points=512)
    fine = generator_residual_check(ou1, 1.0, None, f, points=1024)
    assert coarse["residual"] <= 5e-3
    assert fine["residual"] <= 0.55 * coarse["residual"]
    const = generator_residual_check(ou1, 1.0, None, cy.cosine([0], [0.0]), points=64)
    assert const["residual"] < 1e-9


def test_mollify_constant_is_exact(ou3):
    F = ConstantDrift([0.1, -0.2, 0.05])
    Fn = mollify_drift(ou3, F, 1.0)
    X = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_array_equal(Fn(X), F(X))


def test_mollify_odd_symmetry(ou1):
    F = NearConstantDrift([0.0], 0.2, (0,), "tanh")
    assert float(mollify_drift(ou1, F, 1.0)(np.zeros(1))[0, 0]) == pytest.approx(0.0, abs=1e-15)


def test_mollify_converges_monotonically(ou1):
    F = NearConstantDrift([0.0], 0.2, (0,), "tanh", scale=2.0)
    X = np.linspace(-2, 2, 9)[:, None]
    errs = [float(np.abs(mollify_drift(ou1, F, n)(X) - F(X)).max()) for n in (1, 4, 16, 64)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 0.1 * errs[0]
    assert float(np.abs(mollify_drift(ou1, F, 4)(X)).max()) <= F.sup_norm


def test_mollify_rejects_unbounded():
    model = SpectralModel(np.arange(1, 9, dtype=float) ** 2)
    F = H01BurgersDrift(8)
    with pytest.raises(ValueError, match="truncation"):
        mollify_drift(model, F, 4.0)
    mollify_drift(model, TruncatedDrift(F, 5.0), 4.0)


def test_fixed_point_zero_perturbation_is_resolvent(ou1):
    f = cy.cosine([0])
    z = np.array([0.3])
    st_ = fixed_point_solve(ou1, 1.0, z, ConstantDrift(z), f)
    assert st_.iteration <= 2
    y = np.array([[-1.0], [0.0], [0.7]])
    direct = resolvent(ou1, 1.0, z, f, y).value
    np.testing.assert_allclose(st_.u_at(y), direct, atol=2e-4)


def test_fixed_point_constant_data(ou3):
    v = np.array([0.1, 0.05, 0.0])
    st_ = fixed_point_solve(ou3, 2.0, None, ConstantDrift(v), cy.constant(0.6))
    assert float(st_.u_values) == pytest.approx(0.3, abs=1e-15)


def test_fixed_point_contracts(ou1):
    F = NearConstantDrift([0.0], 0.2, (0,), "tanh")
    g = cy.cosine([0])
    st_ = fixed_point_solve(ou1, 1.0, None, F, g)
    s = st_.summary(g.sup_norm)
    assert s["max_contraction"] <= 0.75
    assert st_.residual <= 1e-3
    assert st_.offgrid_residual <= 1e-3
    assert s["u_sup"] <= s["u_bound"]
    assert s["grad_sup"] <= s["grad_bound"]
    for a, b in zip(st_.history[1:], st_.history[2:]):
        if a > 1e-12:
            assert b <= 0.8 * a


def test_fixed_point_preconditions(ou1, ou3):
    g = cy.cosine([0])
    with pytest.raises(PreconditionError):
        fixed_point_solve(ou1, 0.5, None, ZeroDrift(), g)
    with pytest.raises(PreconditionError, match="1/4"):
        fixed_point_solve(ou1, 1.0, None, ConstantDrift([0.3]), g)
    with pytest.raises(PreconditionError, match="not shared"):
        fixed_point_solve(ou3, 1.0, None, NearConstantDrift([0, 0, 0], 0.1, (1,)), g)
    with pytest.raises(ValueError):
        NearConstantDrift([0.0], 0.3)


def test_truncation_exhausting_active_coordinates(ou3):
    g = cy.cosine([0, 1], [1.0, 2.0])
    F = NearConstantDrift([0.0, 0.0, 0.0], 0.15, (0, 1))
    xs = np.array([[0.2, -0.3, 1.0], [1.0, 0.5, -2.0]])
    full = fixed_point_solve(ou3, 1.0, None, F, g)
    vm, _ = truncated_solution(ou3, 1.0, None, 2, g, F, None, xs)
    np.testing.assert_allclose(vm, full.u_at(xs[:, :2]), atol=1e-12)
    # a single point gives a float
    v0, _ = truncated_solution(ou3, 1.0, None, 3, g, F, None, xs[0])
    assert isinstance(v0, float)


def test_gradient_is_stable_under_pointwise_limits(ou1):
    # erf(y/eps) -> sign(y) pointwise and boundedly as eps -> 0
    x = np.array([[0.4], [-1.1]])
    h = np.ones(1)
    limit = resolvent(ou1, 1.0, None, cy.step(0), x).sqrtA_gradient @ h
    gaps = [float(np.abs(resolvent(ou1, 1.0, None, cy.erf_clip([0], e), x).sqrtA_gradient @ h - limit).max())
            for e in (0.4, 0.1, 0.025)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3
