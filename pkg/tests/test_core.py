"""Unit tests for the Hermitian linear-algebra and density-matrix layer."""

import json

import numpy as np
import pytest

from qfcontrol import (
    DensityInvariantError,
    DiagonalObservable,
    HermitianPropagator,
    basis_state,
    commutator,
    evolve,
    expectation,
    fidelity_to_basis,
    hermitian_expm,
    purity,
    spectrum,
    validate_density,
)
from qfcontrol.core import (
    density_violations,
    hermitize,
    load_matrix,
    matrix_from_json,
    matrix_to_json,
    save_matrix,
)


def random_hermitian(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


def random_density(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


class TestDensityValidation:
    def test_valid_density_passes(self):
        rng = np.random.default_rng(0)
        rho = random_density(rng, 5)
        out = validate_density(rho)
        assert np.array_equal(out, rho)

    def test_non_hermitian_rejected(self):
        rho = np.eye(3, dtype=complex) / 3
        rho[0, 1] = 0.2
        with pytest.raises(DensityInvariantError) as e:
            validate_density(rho)
        assert any(name == "hermiticity" for name, _ in e.value.violations)

    def test_wrong_trace_rejected(self):
        with pytest.raises(DensityInvariantError) as e:
            validate_density(np.eye(3, dtype=complex))
        assert any(name == "trace" for name, _ in e.value.violations)

    def test_negative_eigenvalue_rejected(self):
        rho = np.diag([1.2, -0.2, 0.0]).astype(complex)
        with pytest.raises(DensityInvariantError) as e:
            validate_density(rho)
        assert any(name == "positivity" for name, _ in e.value.violations)

    def test_nan_rejected(self):
        rho = np.eye(2, dtype=complex) / 2
        rho[0, 0] = np.nan
        with pytest.raises(ValueError):
            validate_density(rho)

    def test_violation_report_lists_all(self):
        bad = np.diag([2.0, -0.5]).astype(complex)
        bad[0, 1] = 1.0
        names = {name for name, _ in density_violations(bad)}
        assert names == {"hermiticity", "trace", "positivity"}


class TestBasics:
    def test_basis_state(self):
        rho = basis_state(2, 4)
        assert rho[2, 2] == 1.0
        assert np.trace(rho) == 1.0
        assert purity(rho) == pytest.approx(1.0)

    def test_basis_state_out_of_range(self):
        with pytest.raises(IndexError):
            basis_state(4, 4)

    def test_commutator_antihermitian(self):
        rng = np.random.default_rng(1)
        a = random_hermitian(rng, 4)
        b = random_hermitian(rng, 4)
        c = commutator(a, b)
        assert np.allclose(c, -c.conj().T)

    def test_expectation_real(self):
        rng = np.random.default_rng(2)
        a = random_hermitian(rng, 4)
        rho = random_density(rng, 4)
        val = expectation(a, rho)
        assert isinstance(val, float)

    def test_fidelity_is_population(self):
        rho = np.diag([0.1, 0.7, 0.2]).astype(complex)
        assert fidelity_to_basis(rho, 1) == pytest.approx(0.7)

    def test_purity_bounds(self):
        assert purity(np.eye(4) / 4) == pytest.approx(0.25)
        assert purity(basis_state(0, 4)) == pytest.approx(1.0)

    def test_hermitize_fixed_point(self):
        rng = np.random.default_rng(3)
        h = random_hermitian(rng, 5)
        assert np.allclose(hermitize(h), h)


class TestExpm:
    def test_unitarity(self):
        rng = np.random.default_rng(4)
        h = random_hermitian(rng, 6)
        u = hermitian_expm(h, 0.37)
        assert np.allclose(u @ u.conj().T, np.eye(6), atol=1e-12)

    def test_matches_series_small_angle(self):
        rng = np.random.default_rng(5)
        h = random_hermitian(rng, 4)
        s = 1e-4
        u = hermitian_expm(h, s)
        approx = np.eye(4) - 1j * s * h - 0.5 * s**2 * (h @ h)
        assert np.allclose(u, approx, atol=1e-10)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            hermitian_expm(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_evolve_preserves_density(self):
        rng = np.random.default_rng(6)
        h = random_hermitian(rng, 4)
        rho = random_density(rng, 4)
        out = evolve(rho, hermitian_expm(h, 0.2))
        assert not density_violations(out)

    def test_evolve_rejects_non_unitary(self):
        with pytest.raises(ValueError):
            evolve(np.eye(2) / 2, 2.0 * np.eye(2))

    def test_propagator_matches_expm(self):
        rng = np.random.default_rng(7)
        h = random_hermitian(rng, 5)
        prop = HermitianPropagator(h)
        for u in (-0.3, 0.0, 0.11, 2.0):
            assert np.allclose(prop.unitary(u), hermitian_expm(h, u), atol=1e-12)

    def test_propagator_conjugate(self):
        rng = np.random.default_rng(8)
        h = random_hermitian(rng, 5)
        rho = random_density(rng, 5)
        prop = HermitianPropagator(h)
        direct = evolve(rho, hermitian_expm(h, 0.4))
        assert np.allclose(prop.conjugate(rho, 0.4), direct, atol=1e-12)


class TestSpectrum:
    def test_sorted_eigenvalues(self):
        w = spectrum(np.diag([3.0, 1.0, 2.0]).astype(complex))
        assert np.allclose(w, [1.0, 2.0, 3.0])

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            spectrum(np.array([[0.0, 1.0], [2.0, 0.0]]))


class TestDiagonalObservable:
    def test_requires_minimum_at_n_star(self):
        with pytest.raises(ValueError):
            DiagonalObservable(np.array([1.0, 2.0, 3.0]), 1)

    def test_min_gap(self):
        p = DiagonalObservable(np.array([5.0, 1.0, 2.5]), 1)
        assert p.min_gap() == pytest.approx(1.5)

    def test_degeneracy_detection(self):
        p = DiagonalObservable(np.array([2.0, 1.0, 2.0 + 1e-12]), 1)
        with pytest.raises(ValueError):
            p.assert_nondegenerate()

    def test_json_round_trip(self):
        p = DiagonalObservable(np.array([4.0, 0.5, 2.0]), 1)
        q = DiagonalObservable.from_json(p.to_json())
        assert np.array_equal(q.sigma, p.sigma)
        assert q.n_star == p.n_star


class TestMatrixIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        path = tmp_path / "m.json"
        save_matrix(path, a, label="test")
        assert np.allclose(load_matrix(path), a)
        with open(path) as f:
            obj = json.load(f)
        assert obj["label"] == "test"
        assert obj["index_convention"] == "0-based"

    def test_shape_mismatch_detected(self):
        obj = matrix_to_json(np.eye(3, dtype=complex))
        obj["n"] = 4
        with pytest.raises(ValueError):
            matrix_from_json(obj)
