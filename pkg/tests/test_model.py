import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slgbsde.catalogue import CATALOGUE, unit_diffusion
from slgbsde.errors import ValidationError
from slgbsde.model import (DiffusionSpec, GeneratorSpec, ProblemSpec, TerminalSpec, flat_args,
                           unflatten_args, validate_problem)

from conftest import make_problem


@pytest.mark.parametrize("name", sorted(CATALOGUE))
def test_catalogue_passes_assumption_checks(name):
    rep = validate_problem(CATALOGUE[name].problem, 2000, seed=3)
    assert rep.passed, rep.failures()
    assert all(np.isfinite(m) for _, m, _ in rep.rows())


def test_growth_violation_is_reported_with_worst_point():
    p = make_problem(lambda t, x, y, z, i: 5.0 * (1 + y[:, 0] ** 2), Ch=1.0)
    rep = validate_problem(p, 500, seed=1)
    assert not rep.passed
    c = rep.checks["generator growth"]
    assert c.margin > 0
    assert set(c.worst_point) == {"t", "x", "y", "z"}


def test_non_finite_generator_raises_with_point():
    p = make_problem(lambda t, x, y, z, i: np.where(y[:, 0] > 0, np.nan, 0.0))
    with pytest.raises(ValidationError) as info:
        validate_problem(p, 200, seed=0)
    assert info.value.function == "H_1"
    assert info.value.point["y"][0] > 0


def test_sigma_bound_failure_detected():
    dif = DiffusionSpec(lambda t, x: np.eye(1), 1, 0.0, 1.0, 1.0)  # |s| + |s^-1| = 2 > 1
    p = ProblemSpec(dif, GeneratorSpec(lambda t, x, y, z, i: 0 * t, 1, 0, 0, 1),
                    TerminalSpec(lambda x, i: 0 * x[:, 0], 0, 0), 1.0, np.zeros(1))
    rep = validate_problem(p, 100, seed=0)
    assert "sigma bound" in rep.failures()
    assert rep.checks["sigma bound"].margin == pytest.approx(1.0)


def test_fewer_samples_see_a_prefix():
    p = CATALOGUE["bounded-elliptic"].problem
    small = validate_problem(p, 300, seed=5)
    big = validate_problem(p, 3000, seed=5)
    for name in small.checks:
        assert small.checks[name].margin <= big.checks[name].margin + 1e-15


def test_spec_construction_guards():
    with pytest.raises(ValidationError):
        GeneratorSpec(lambda *a: 0, 1, 0, 0, 0.0)
    with pytest.raises(ValidationError):
        ProblemSpec(unit_diffusion(1), GeneratorSpec(lambda *a: 0, 1, 0, 0, 1),
                    TerminalSpec(lambda x, i: 0, 0, 0), 1.0, np.zeros(2))
    with pytest.raises(ValidationError):
        ProblemSpec(unit_diffusion(1), GeneratorSpec(lambda *a: 0, 1, 0, 0, 1),
                    TerminalSpec(lambda x, i: 0, 0, 0), 1.0, np.zeros(1), start_t=2.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 7), st.integers(0, 2**31))
def test_flat_args_roundtrip(n, m, P, seed):
    rng = np.random.default_rng(seed)
    y, z = rng.normal(size=(P, n)), rng.normal(size=(P, n, m))
    w = flat_args(y, z)
    assert w.shape == (P, n + n * m)
    y2, z2 = unflatten_args(w, n, m)
    np.testing.assert_array_equal(y, y2)
    np.testing.assert_array_equal(z, z2)
