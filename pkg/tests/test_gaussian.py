import math

import numpy as np
import pytest

from critspde.gaussian import (SeedSpec, export_ensemble, gauss_hermite_rule, gh_integrate, load_ensemble,
                               sample_gaussian)
from critspde.spectral import SpectralModel, burgers_eigenvalues


def test_rule_normalized_and_exact():
    r = gauss_hermite_rule(10)
    assert np.all(r.weights > 0)
    assert r.weights.sum() == pytest.approx(1.0, abs=1e-14)
    # E xi^k for k < 20: (k-1)!! for even k
    for k in range(0, 20):
        exact = 0.0 if k % 2 else float(np.prod(np.arange(k - 1, 0, -2))) if k else 1.0
        scale = float(np.prod(np.arange(k + 1, 0, -2)))
        assert float(r.weights @ r.nodes**k) == pytest.approx(exact, rel=1e-10, abs=1e-12 * scale)


def test_gh_integrate_examples():
    assert gh_integrate(1, [0.4323], lambda y: np.ones(len(y))) == pytest.approx(1.0, abs=1e-14)
    assert gh_integrate(1, [0.4323], lambda y: y[:, 0] ** 2, order=2) == pytest.approx(0.4323, abs=1e-14)
    q = (1 - math.exp(-2)) / 2
    assert gh_integrate(1, [q], lambda y: np.cos(y[:, 0])) == pytest.approx(math.exp(-q / 2), abs=1e-10)
    assert gh_integrate(1, [q], lambda y: np.cos(y[:, 0])) == pytest.approx(0.805601, abs=1e-6)
    with pytest.raises(ValueError):
        gh_integrate(4, [1, 1, 1, 1], lambda y: y[:, 0])


def test_gh_vs_sampling():
    m = SpectralModel(np.array([1.0, 4.0]))
    cov = np.array([0.3, 0.2])
    x = sample_gaussian(m, cov, SeedSpec(3, 1), 200_000)
    for g in (lambda y: np.cos(y[:, 0] + y[:, 1]), lambda y: np.tanh(2 * y[:, 0]) ** 2, lambda y: np.exp(-y[:, 1] ** 2)):
        v = g(x)
        assert abs(gh_integrate(2, cov, g) - v.mean()) <= 3 * v.std() / math.sqrt(len(v))


def test_sampling_examples():
    m = SpectralModel(burgers_eigenvalues(16))
    assert not np.any(sample_gaussian(m, np.zeros(16), SeedSpec(0), 5))
    S = m.invariant_variance
    x = sample_gaussian(m, S, SeedSpec(1, 2), 100_000)
    n = len(x)
    var = x.var(axis=0, ddof=1)
    assert np.all(np.abs(var - S) <= 5 * S * math.sqrt(2 / (n - 1)))
    assert np.array_equal(x, sample_gaussian(m, S, SeedSpec(1, 2), 100_000))
    assert not np.array_equal(x[:10], sample_gaussian(m, S, SeedSpec(1, 3), 10))
    with pytest.raises(ValueError):
        sample_gaussian(m, -S, SeedSpec(0), 2)


def test_mean_rate_across_seeds():
    m = SpectralModel(np.array([1.0]))
    cov = np.array([0.5])
    N = 2000
    inside = sum(abs(sample_gaussian(m, cov, SeedSpec(s), N).mean()) <= 4 * math.sqrt(0.5 / N) for s in range(300))
    assert inside >= 297


def test_export_roundtrip(tmp_path):
    x = sample_gaussian(SpectralModel(np.array([1.0, 2.0, 3.0])), np.ones(3), SeedSpec(5), 7)
    p = export_ensemble(x, tmp_path / "e.bin")
    assert p.stat().st_size == 7 * 3 * 8
    assert np.array_equal(load_ensemble(p, 3), x)
    c = export_ensemble(x, tmp_path / "e.csv", "csv").read_text().splitlines()
    assert c[0] == "x1,x2,x3" and len(c) == 8
    assert float(c[1].split(",")[0]) == x[0, 0]
