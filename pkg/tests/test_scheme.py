import numpy as np
import pytest

from slgbsde.catalogue import get_scenario
from slgbsde.forward import TimeGrid, simulate
from slgbsde.mollifier import mollify
from slgbsde.regression import BasisSpec
from slgbsde.scheme import (ApproximationSchedule, SolverConfig, default_probe_grid,
                            driver_identification_residual, growth_bound_fit, run_scheme,
                            uniform_estimates_check)
from slgbsde.solver import solve_backward


def test_schedule_validation():
    with pytest.raises(ValueError):
        ApproximationSchedule((4, 2))
    with pytest.raises(ValueError):
        ApproximationSchedule(())


def test_probe_grid_layout(small_linear_ensemble):
    probes = default_probe_grid(small_linear_ensemble, 4, 7, 2.0)
    assert probes.ks == (0, 5, 10, 15)
    assert all(x.shape == (7, 1) for x in probes.xs)
    sd = small_linear_ensemble.states[10].std()
    assert probes.xs[2][-1, 0] - probes.xs[2][0, 0] == pytest.approx(4 * sd)


def test_growth_fit_recovers_power(linear_problem):
    p = get_scenario("quadratic-terminal").problem
    x0 = np.linspace(-100, 100, 4000)[:, None]
    ens = simulate(p.diffusion, TimeGrid.uniform(1.0, 5), 0.0, x0, 4000, 3)
    fields, _ = solve_backward(p, ens, BasisSpec(degree_or_bins=4))
    fit = growth_bound_fit(fields, np.linspace(10, 90, 9)[:, None], 0.0)
    assert fit.lambda_hat == pytest.approx(2.0, abs=0.1)
    assert not fit.degenerate


def test_growth_fit_flags_vanishing_fields():
    p = get_scenario("zero").problem
    ens = simulate(p.diffusion, TimeGrid.uniform(1.0, 4), 0.0, p.start_x, 200, 0)
    fields, _ = solve_backward(p, ens)
    assert growth_bound_fit(fields, np.array([[1.0], [2.0]]), 0.5).degenerate


def test_uniform_estimates_match_closed_form(linear_problem, small_linear_ensemble):
    fields, stats = solve_backward(linear_problem, small_linear_ensemble)
    ym, ze = uniform_estimates_check(fields, small_linear_ensemble)
    # Z_k = exp(-(T - t_{k+1})) since Z_k is built from Y_{k+1}: right Riemann sum
    nodes = small_linear_ensemble.grid.nodes
    exact = np.sum(np.diff(nodes) * np.exp(-2 * (1 - nodes[1:])))
    assert ze[0] == pytest.approx(exact, rel=0.03)
    assert ym[0] == pytest.approx(stats.y_moment[0], rel=0.05)


def test_identification_parts(linear_problem, small_linear_ensemble):
    gen = linear_problem.generator
    g2 = mollify(gen, 2, 1)
    f2, _ = solve_backward(linear_problem.with_generator(g2), small_linear_ensemble)
    f8, _ = solve_backward(linear_problem.with_generator(mollify(gen, 8, 1)),
                           small_linear_ensemble)
    r = driver_identification_residual(f2, g2, f8, gen, small_linear_ensemble, 10.0, 5000)
    assert r.i1 >= 0 and r.i2 >= 0 and r.i3 >= 0
    same = driver_identification_residual(f8, mollify(gen, 8, 1), f8, gen,
                                          small_linear_ensemble, 10.0, 5000)
    assert same.i3 == 0.0
    assert same.total < r.total


def test_zero_scheme_report(tmp_path):
    p = get_scenario("zero").problem
    cfg = SolverConfig(steps_N=10, paths=1000)
    res = run_scheme(p, ApproximationSchedule((2, 4, 8)), cfg, seed=1)
    assert res.report.gaps() == [0.0, 0.0]
    assert res.report.converged
    res.report.write_csv(tmp_path)
    lines = (tmp_path / "scheme_gap_vs_n.dat").read_text().splitlines()
    assert lines == ["4 0.0", "8 0.0"]
    assert (tmp_path / "scheme_per_n.csv").read_text().count("\n") == 4


def test_fresh_paths_per_n_use_shifted_seeds():
    p = get_scenario("linear-1d").problem
    cfg = SolverConfig(steps_N=5, paths=2000, basis=BasisSpec(degree_or_bins=2))
    a = run_scheme(p, ApproximationSchedule((2, 4), reuse_paths=False), cfg, seed=5,
                   identification=False)
    b = run_scheme(p, ApproximationSchedule((2, 4), reuse_paths=True), cfg, seed=5,
                   identification=False)
    # the first level shares the base ensemble, the second does not
    np.testing.assert_array_equal(a.report.probe_values[2], b.report.probe_values[2])
    assert not np.array_equal(a.report.probe_values[4], b.report.probe_values[4])
