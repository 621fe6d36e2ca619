import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from slgbsde.catalogue import get_scenario
from slgbsde.errors import DimensionalityError
from slgbsde.model import GeneratorSpec
from slgbsde.mollifier import (bump_cdf, bump_gauss_rule, bump_kernel, bump_mass,
                               certify_properties, cutoff, mollify, mollify_eval, tensor_rule,
                               truncate, with_bounds)

DEMO = get_scenario("stochastic-linear-growth-demo").problem.generator
# int_{-1}^{1} exp(-1/(1-v^2)) dv
BUMP_MASS = 0.44399381616807943


def _linear_gen(t, x, y, z, i):
    return 2.0 * y[:, i] - z[:, i, 0] + x[:, 0]


LIN = GeneratorSpec(_linear_gen, 1, 1.0, 2.0, 1.0, None, "affine")


def test_bump_mass_and_kernel_normalisation():
    assert bump_mass() == pytest.approx(BUMP_MASS, rel=1e-12)
    val, _ = quad(bump_kernel, -1, 1)
    assert val == pytest.approx(1.0, abs=1e-10)
    assert bump_kernel(np.array([-1.0, 1.0, 1.5])).tolist() == [0.0, 0.0, 0.0]


@pytest.mark.parametrize("Q", [2, 4, 8])
def test_gauss_rule_is_exact_to_degree_2q_minus_1(Q):
    nodes, weights = bump_gauss_rule(Q)
    assert weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(np.abs(nodes) < 1)
    for p in range(2 * Q):
        exact, _ = quad(lambda u: u ** p * bump_kernel(u), -1, 1, epsabs=1e-14)
        assert np.dot(weights, nodes ** p) == pytest.approx(exact, abs=1e-11)


def test_tensor_rule_shapes():
    pts, wts = tensor_rule(3, 2)
    assert pts.shape == (9, 2) and wts.sum() == pytest.approx(1.0)
    pts0, wts0 = tensor_rule(3, 0)
    assert pts0.shape == (1, 0) and wts0.tolist() == [1.0]


def test_cutoff_profile():
    assert cutoff(np.array([0.9]), np.zeros((1, 1)), 1.0) == 1.0
    assert cutoff(np.array([2.0]), np.zeros((1, 1)), 1.0) == 0.0
    r = np.linspace(1.0, 2.0, 50)
    vals = cutoff(r[:, None], np.zeros((50, 1, 1)), 1.0)
    assert np.all(np.diff(vals) <= 1e-15)
    assert bump_cdf(np.array([-1.0, 0.0, 1.0])) == pytest.approx([0.0, 0.5, 1.0])


def test_truncation_clamps_each_coordinate():
    np.testing.assert_array_equal(truncate(np.array([[-5.0, 0.3, 7.0]]), 2), [[-2.0, 0.3, 2.0]])


def test_affine_driver_is_reproduced_inside_the_unit_ball():
    # odd moments of the rule vanish, so an affine driver is unchanged
    g = mollify(LIN, 4, 1)
    rng = np.random.default_rng(0)
    x = rng.uniform(-3, 3, (50, 1))
    y = rng.uniform(-1.5, 1.5, (50, 1))
    z = rng.uniform(-1.5, 1.5, (50, 1, 1))
    np.testing.assert_allclose(g.evaluate(0.0, x, y, z, 0), _linear_gen(0, x, y, z, 0),
                               atol=1e-12)


def test_support_is_compact_in_yz():
    g = mollify(LIN, 2, 1)
    v = g.evaluate(0.0, np.zeros((1, 1)), np.array([[4.0]]), np.array([[[1.0]]]), 0)
    assert v[0] == 0.0


def test_freeze_matches_direct_evaluation():
    g = mollify(DEMO, 4, 1, 4)
    rng = np.random.default_rng(2)
    P = 300
    x, z = rng.normal(size=(P, 1)) * 2, rng.normal(size=(P, 2, 1))
    frozen = g.freeze(0.3, x, z)
    for _ in range(2):
        y = rng.normal(size=(P, 2)) * 3
        np.testing.assert_allclose(frozen(y), g.evaluate_all(0.3, x, y, z), rtol=0, atol=1e-13)


def test_single_point_evaluation():
    g = mollify(DEMO, 4, 1)
    v = mollify_eval(g, 0.2, np.array([0.5]), np.array([0.1, -0.2]), np.array([[0.3], [0.1]]), 1)
    batch = g.evaluate(0.2, np.array([[0.5]]), np.array([[0.1, -0.2]]),
                       np.array([[[0.3], [0.1]]]), 1)
    assert v == batch[0]


def test_quadrature_order_convergence():
    x = np.array([[0.7]])
    y = np.array([[0.4, -0.3]])
    z = np.array([[[0.25], [-0.5]]])
    a = mollify(DEMO, 4, 1, 8).evaluate(0.0, x, y, z, 0)
    b = mollify(DEMO, 4, 1, 16).evaluate(0.0, x, y, z, 0)
    assert abs(a - b)[0] < 1e-6


def test_quadrature_dimension_guard():
    wide = GeneratorSpec(lambda t, x, y, z, i: y[:, i], 4, 0.0, 1.0, 1.0, None, "wide")
    with pytest.raises(DimensionalityError):
        mollify(wide, 2, 1)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3),
       st.floats(-20, 20), st.sampled_from([2, 4, 8]))
def test_mollified_demo_respects_growth_bound(y1, y2, z1, z2, x, n):
    g = mollify(DEMO, n, 1, 4)
    xs, ys, zs = np.array([[x]]), np.array([[y1, y2]]), np.array([[[z1], [z2]]])
    for i in range(2):
        v = abs(g.evaluate(0.5, xs, ys, zs, i)[0])
        assert v <= g.growth_bound(xs, ys, zs, i)[0] + 1e-12


def test_certification_report(tmp_path):
    rep = certify_properties(DEMO, [2, 4], 2.0, 500, 1)
    assert rep.growth_ok
    assert rep.row(4).uniform_gap < rep.row(2).uniform_gap
    rep.write_csv(tmp_path / "props.csv")
    assert (tmp_path / "props.csv").read_text().startswith("n,lipschitz_hat")
    g = with_bounds(mollify(DEMO, 4, 1), rep)
    assert g.sup_bound_cn == rep.row(4).c_n
