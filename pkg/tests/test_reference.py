import math

import numpy as np
import pytest

from paramtrace.estimators import DensityEstimate
from paramtrace.operator import DenseSymmetric, SpectralInterval, build_hamiltonian, estimate_spectral_interval
from paramtrace.reference import EigenSpectrum, dense_spectrum, exact_density, l1_error


def estimate(grid, values):
    return DensityEstimate(grid=np.asarray(grid, float), values=np.asarray(values, float))


def test_dense_spectrum_small_cases():
    np.testing.assert_allclose(dense_spectrum(np.diag([3.0, 1.0, 2.0])).eigenvalues, [1, 2, 3])
    np.testing.assert_allclose(dense_spectrum(np.array([[0.0, 1.0], [1.0, 0.0]])).eigenvalues, [-1, 1])


def test_dense_spectrum_dimension_guard():
    with pytest.raises(ValueError):
        dense_spectrum(DenseSymmetric(np.eye(5)), max_dim=4)


def test_hamiltonian_spectrum_inside_estimated_interval():
    H = build_hamiltonian(1)
    spec = dense_spectrum(H)
    assert len(spec) == 1000
    iv = estimate_spectral_interval(H)
    assert iv.a <= spec.eigenvalues[0] and spec.eigenvalues[-1] <= iv.b
    unit = spec.transformed(iv).eigenvalues
    assert unit.min() >= -1 and unit.max() <= 1


def test_eigen_spectrum_validation():
    with pytest.raises(ValueError):
        EigenSpectrum(np.array([2.0, 1.0]))
    with pytest.raises(ValueError):
        EigenSpectrum(np.eye(2))


def test_exact_density_single_eigenvalue_peak():
    sigma = 0.05
    d = exact_density(EigenSpectrum(np.array([0.0])), sigma, [0.0])
    assert d.values[0] == pytest.approx(1 / (sigma * math.sqrt(2 * math.pi)), rel=1e-15)


def test_exact_density_symmetric_pair():
    sigma, lam = 0.1, 0.3
    d = exact_density(EigenSpectrum(np.array([-lam, lam])), sigma, [0.0])
    g = math.exp(-(lam**2) / (2 * sigma**2)) / (sigma * math.sqrt(2 * math.pi))
    assert d.values[0] == pytest.approx(g, rel=1e-14)


def test_exact_density_integrates_to_one():
    sigma = 0.05
    ev = np.sort(np.random.default_rng(0).uniform(-1, 1, 300))
    t = np.linspace(-1 - 6 * sigma, 1 + 6 * sigma, 4001)
    d = exact_density(EigenSpectrum(ev), sigma, t)
    mass = (t[-1] - t[0]) / t.size * d.values.sum()
    assert 0.999 <= mass <= 1.001


def test_exact_density_chunking_consistent():
    ev = np.sort(np.random.default_rng(1).uniform(-1, 1, 50000))
    t = np.linspace(-1, 1, 101)
    d = exact_density(EigenSpectrum(ev), 0.1, t)
    direct = np.array([np.mean(np.exp(-((x - ev) ** 2) / 0.02)) for x in t]) / (0.1 * math.sqrt(2 * math.pi))
    np.testing.assert_allclose(d.values, direct, rtol=1e-12)


def test_l1_identical_is_zero():
    g = np.linspace(-1, 1, 100)
    a = estimate(g, np.sin(g))
    assert l1_error(a, a) == 0.0


def test_l1_constant_offset():
    g = np.linspace(-1, 1, 100)
    c = 0.25
    assert l1_error(estimate(g, np.zeros(100)), estimate(g, np.full(100, c))) == pytest.approx(2 * c, rel=1e-14)


def test_l1_metric_properties():
    rng = np.random.default_rng(2)
    g = np.linspace(-1, 1, 50)
    a, b, c = (estimate(g, rng.standard_normal(50)) for _ in range(3))
    assert l1_error(a, b) == pytest.approx(l1_error(b, a))
    assert l1_error(a, c) <= l1_error(a, b) + l1_error(b, c) + 1e-15
    assert l1_error(a, b) > 0


def test_l1_grid_checks():
    g = np.linspace(-1, 1, 10)
    with pytest.raises(ValueError):
        l1_error(estimate(g, np.zeros(10)), estimate(g + 0.1, np.zeros(10)))
    bad = np.array([0.0, 0.1, 0.5])
    with pytest.raises(ValueError):
        l1_error(estimate(bad, np.zeros(3)), estimate(bad, np.zeros(3)))
    with pytest.raises(ValueError):
        l1_error(estimate([0.0], [1.0]), estimate([0.0], [1.0]))


def test_l1_invariant_under_affine_transform():
    # density transforms with the Jacobian, so L1 distances are preserved
    iv = SpectralInterval(-3.0, 41.0)
    rng = np.random.default_rng(3)
    ev = np.sort(rng.uniform(-3, 41, 40))
    sigma_unit = 0.05
    unit_grid = np.linspace(-1, 1, 100)
    shifted = EigenSpectrum(ev + 0.2)
    raw = l1_error(
        exact_density(EigenSpectrum(ev), sigma_unit * iv.width / 2, iv.from_unit(unit_grid)),
        exact_density(shifted, sigma_unit * iv.width / 2, iv.from_unit(unit_grid)),
    )
    unit = l1_error(
        exact_density(EigenSpectrum(ev).transformed(iv), sigma_unit, unit_grid),
        exact_density(shifted.transformed(iv), sigma_unit, unit_grid),
    )
    assert raw == pytest.approx(unit, rel=1e-10)
