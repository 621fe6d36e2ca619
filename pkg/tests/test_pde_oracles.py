import numpy as np
import pytest

from slgbsde.catalogue import CATALOGUE, get_scenario, list_scenarios
from slgbsde.errors import ValidationError
from slgbsde.model import TerminalSpec
from slgbsde.oracles import build_oracle, load_oracle, oracle_file_exists, table_axes
from slgbsde.pde import solve_pde


def test_heat_equation_with_cosine_data():
    p = get_scenario("zero").problem
    p = p.__class__(p.diffusion, p.generator, TerminalSpec(lambda x, i: np.cos(x[:, 0]), 1, 0),
                    1.0, p.start_x)
    sol = solve_pde(p, nx=1201, nt=600)
    xs = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(sol.at(0.0, xs), np.exp(-0.5) * np.cos(xs), atol=2e-4)


@pytest.mark.parametrize("name", ["linear-1d", "coupled-ode"])
def test_pde_matches_closed_forms(name):
    sc = get_scenario(name)
    sol = solve_pde(sc.problem, nx=1201, nt=1000)
    xs = np.linspace(-2, 2, 9)
    exact = sc.closed_form(0.0, xs, 1.0)[0]
    for i in range(sc.problem.n):
        np.testing.assert_allclose(sol.at(0.0, xs, i), exact[:, i], atol=2e-3)


def test_pde_rejects_untabulated_time():
    sol = solve_pde(get_scenario("zero").problem, nx=101, nt=10)
    with pytest.raises(ValidationError):
        sol.at(0.05, np.zeros(1))


@pytest.mark.parametrize("name", [n for n, s in CATALOGUE.items() if s.oracle_kind == "closed-form"])
def test_stored_tables_match_closed_forms(name):
    sc = CATALOGUE[name]
    table = load_oracle(name)
    times, xs = table_axes(1.0)
    np.testing.assert_array_equal(table.times, times)
    for t in (0.0, 0.5, 1.0):
        exact = sc.closed_form(t, xs, 1.0)[0]
        for i in range(sc.problem.n):
            np.testing.assert_allclose(table.value(t, xs, i), exact[:, i], rtol=0, atol=1e-12)


def test_stored_demo_table_is_symmetric_and_matches_terminal():
    table = load_oracle("stochastic-linear-growth-demo")
    xs = table.xs
    # linear interpolation from the finer finite-difference grid
    np.testing.assert_allclose(table.value(1.0, xs, 0), np.cos(xs), atol=5e-6)
    for t in (0.0, 0.5):
        v = table.value(t, xs, 0)
        np.testing.assert_allclose(v, v[::-1], atol=1e-9)
        np.testing.assert_allclose(v, table.value(t, xs, 1), atol=1e-12)


def test_table_write_load_roundtrip(tmp_path):
    t = build_oracle(get_scenario("quadratic-terminal"))
    t.write_csv(tmp_path / "quadratic-terminal.csv")
    back = load_oracle("quadratic-terminal", tmp_path)
    np.testing.assert_array_equal(back.values, t.values)
    with pytest.raises(ValidationError):
        back.value(0.5, 6.0)
    with pytest.raises(FileNotFoundError):
        load_oracle("bounded-elliptic", tmp_path)


def test_catalogue_listing():
    rows = {name: has for name, _, has in list_scenarios()}
    assert set(rows) == set(CATALOGUE)
    assert rows["bounded-elliptic"] is False
    assert all(rows[n] == oracle_file_exists(n) for n in rows if n != "bounded-elliptic")
    with pytest.raises(KeyError):
        get_scenario("nope")
