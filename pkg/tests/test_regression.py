import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slgbsde.errors import SolverError
from slgbsde.regression import (BasisSpec, NodeBasis, fit_node_basis, fit_regression,
                                regress_conditional_expectation)


def test_hermite_columns_are_orthonormal_under_gaussian_states():
    x = np.random.default_rng(0).standard_normal((400_000, 1))
    nb = fit_node_basis(x, BasisSpec(degree_or_bins=4))
    A = nb.design(x)
    np.testing.assert_allclose(A.T @ A / len(x), np.eye(5), atol=0.03)


def test_total_degree_index_set():
    x = np.random.default_rng(1).normal(size=(100, 2))
    nb = fit_node_basis(x, BasisSpec(degree_or_bins=3))
    assert nb.size == 10
    assert nb.multi_indices[0] == (0, 0)
    assert all(sum(a) <= 3 for a in nb.multi_indices)


def test_polynomial_target_is_recovered_exactly():
    x = np.random.default_rng(2).uniform(-2, 2, (500, 1))
    y = 1 + x[:, 0] - 0.5 * x[:, 0] ** 3
    res = fit_regression(x, y, BasisSpec(degree_or_bins=3, ridge_lambda=0.0))
    np.testing.assert_allclose(res.node_basis.design(x) @ res.coef, y, atol=1e-10)


def test_ridge_does_not_shrink_the_intercept():
    x = np.random.default_rng(3).normal(size=(300, 1))
    coef = regress_conditional_expectation(x, np.full(300, 7.0), BasisSpec(ridge_lambda=10.0))
    A = fit_node_basis(x, BasisSpec(ridge_lambda=10.0)).design(x)
    np.testing.assert_allclose(A @ coef, 7.0, atol=1e-10)


def test_constant_node_uses_intercept_only():
    x = np.zeros((50, 1))
    nb = fit_node_basis(x, BasisSpec(degree_or_bins=5))
    assert nb.size == 1
    res = fit_regression(x, np.arange(50.0), BasisSpec())
    assert res.coef[0] == pytest.approx(24.5)


def test_evaluation_outside_the_hull_is_clamped():
    x = np.linspace(-1, 1, 101)[:, None]
    res = fit_regression(x, x[:, 0] ** 2, BasisSpec(degree_or_bins=2, ridge_lambda=0))
    far = res.node_basis.design(np.array([[10.0]])) @ res.coef
    assert far[0] == pytest.approx(1.0)


def test_piecewise_linear_basis_reproduces_linear_functions():
    x = np.random.default_rng(4).normal(size=(2000, 1))
    res = fit_regression(x, 3 * x[:, 0] - 1, BasisSpec("pwlinear", 8, 0.0))
    np.testing.assert_allclose(res.node_basis.design(x) @ res.coef, 3 * x[:, 0] - 1, atol=1e-9)


def test_too_few_samples():
    x = np.random.default_rng(5).normal(size=(4, 1))
    with pytest.raises(SolverError):
        fit_regression(x, x[:, 0], BasisSpec(degree_or_bins=5))


def test_basis_spec_validation():
    with pytest.raises(ValueError):
        BasisSpec(kind="fourier")
    with pytest.raises(ValueError):
        BasisSpec(degree_or_bins=0)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["poly", "pwlinear"]), st.integers(1, 6), st.integers(1, 2),
       st.integers(0, 10_000))
def test_node_basis_dict_roundtrip(kind, deg, dim, seed):
    x = np.random.default_rng(seed).normal(size=(200, dim))
    nb = fit_node_basis(x, BasisSpec(kind, deg))
    back = NodeBasis.from_dict(nb.to_dict())
    np.testing.assert_array_equal(back.design(x), nb.design(x))
