import numpy as np
import pytest

from slgbsde.catalogue import get_scenario
from slgbsde.errors import StepFailure, ValidationError
from slgbsde.forward import TimeGrid, simulate
from slgbsde.model import GeneratorSpec
from slgbsde.regression import BasisSpec
from slgbsde.solver import ValueFields, evaluate_fields, solve_backward


def test_linear_closed_form(linear_problem, small_linear_ensemble):
    fields, stats = solve_backward(linear_problem, small_linear_ensemble)
    for k in (0, 5, 10, 15):
        t = fields.grid.nodes[k]
        sd = max(np.sqrt(t), 1e-9)
        xs = np.linspace(-2 * sd, 2 * sd, 9)[:, None]
        np.testing.assert_allclose(fields.y_at(k, xs), np.exp(-(1 - t)) * xs[:, 0], atol=3e-2)
    _, z0 = evaluate_fields(fields, 0, [0.0])
    assert z0[0, 0] == pytest.approx(np.exp(-1), abs=3e-2)
    assert stats.max_residual <= 1e-10
    assert max(stats.picard_iterations) <= 12


def test_zero_problem_is_exactly_zero():
    p = get_scenario("zero").problem
    ens = simulate(p.diffusion, TimeGrid.uniform(1.0, 10), 0.0, p.start_x, 2000, 0)
    fields, stats = solve_backward(p, ens)
    y, z = fields.evaluate(3, ens.states[3])
    assert np.abs(y).max() == 0.0 and np.abs(z).max() == 0.0
    assert stats.y_moment[0] == 0.0 and stats.z_energy[0] == 0.0


def test_coupled_ode_matches_exponential():
    sc = get_scenario("coupled-ode")
    p = sc.problem
    ens = simulate(p.diffusion, TimeGrid.uniform(1.0, sc.steps_N), 0.0, p.start_x, 4000, 2)
    fields, stats = solve_backward(p, ens, BasisSpec(degree_or_bins=3))
    y0 = fields.evaluate(0, np.zeros((1, 1)))[0][0]
    np.testing.assert_allclose(y0, np.e, atol=2e-2)
    assert stats.z_energy.max() < 1e-3


def test_pathwise_and_fitted_start_values_agree(linear_problem, small_linear_ensemble):
    fields, stats = solve_backward(linear_problem, small_linear_ensemble)
    assert np.ptp(stats.pathwise_y0) < 1e-10
    assert stats.pathwise_y0[0, 0] == pytest.approx(fields.y_at(0, np.zeros((1, 1)))[0])


def test_picard_divergence_is_reported():
    p = get_scenario("linear-1d").problem
    wild = GeneratorSpec(lambda t, x, y, z, i: -40.0 * y[:, i], 1, 0.0, 40.0, 1.0, None, "stiff")
    ens = simulate(p.diffusion, TimeGrid.uniform(1.0, 4), 0.0, p.start_x, 500, 0)
    with pytest.raises(StepFailure) as info:
        solve_backward(p.with_generator(wild), ens)
    assert info.value.step == 3
    assert len(info.value.residuals) >= 4


def test_horizon_mismatch(linear_problem):
    ens = simulate(linear_problem.diffusion, TimeGrid.uniform(2.0, 4), 0.0, np.zeros(1), 100, 0)
    with pytest.raises(ValidationError):
        solve_backward(linear_problem, ens)


def test_fields_text_roundtrip(tmp_path, linear_problem, small_linear_ensemble):
    fields, _ = solve_backward(linear_problem, small_linear_ensemble, BasisSpec(degree_or_bins=3))
    path = tmp_path / "f.json"
    fields.write_text(path)
    back = ValueFields.read_text(path)
    x = small_linear_ensemble.states[7]
    for a, b in zip(fields.evaluate(7, x), back.evaluate(7, x)):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(IndexError):
        back.evaluate(21, x)
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "other"}')
    with pytest.raises(ValidationError):
        ValueFields.read_text(bad)
