import json

import numpy as np
import pytest
import yaml

from slgbsde.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, EXIT_VALIDATION, main, run_scenario
from slgbsde.config import load_config, parse_config
from slgbsde.errors import ConfigError


def _write(tmp_path, raw, name="c.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


def test_scenario_defaults_and_overrides(tmp_path):
    path = _write(tmp_path, {"scenario": "linear-1d", "ensemble": {"seed": 3}})
    cfg = load_config(path, seed=9, paths=123, out=str(tmp_path / "o"))
    assert (cfg.seed, cfg.paths, cfg.steps_N) == (9, 123, 50)
    assert cfg.output_dir == str(tmp_path / "o")
    assert cfg.schedule.n_values == (2, 4, 8, 16, 32)
    demo = parse_config({"scenario": "stochastic-linear-growth-demo", "ensemble": {"seed": 1}})
    assert demo.solver.quad_order == 4 and demo.solver.basis.degree_or_bins == 12


@pytest.mark.parametrize("raw, field", [
    ({"scenario": "linear-1d"}, "ensemble.seed"),
    ({"scenario": "linear-1d", "ensemble": {"seed": 1}, "solver": {"tol": 1}}, "solver.tol"),
    ({"scenario": "nope", "ensemble": {"seed": 1}}, "scenario"),
    ({"scenario": "linear-1d", "ensemble": {"seed": 1, "paths": "many"}}, "ensemble.paths"),
    ({"scenario": "linear-1d", "ensemble": {"seed": 1}, "schedule": {"n_values": [4, 2]}},
     "schedule.n_values"),
    ({"problem": {"diffusion": "unit", "generator": "linear", "terminal": "cube"},
      "ensemble": {"seed": 1}}, "problem.terminal"),
    ({"scenario": "linear-1d", "ensemble": {"seed": 1}, "diagnostics": {"p0_grid": [2.5]}},
     "diagnostics.p0_grid"),
])
def test_config_errors_name_the_field(raw, field):
    with pytest.raises(ConfigError) as info:
        parse_config(raw)
    assert info.value.field == field


def test_inline_problem():
    cfg = parse_config({"problem": {"diffusion": "bounded-elliptic", "generator": "damped-sine",
                                    "terminal": "arctan", "constants": {"Ch": 0.5, "C2": 0.5,
                                                                        "Cg": 1.6}},
                        "ensemble": {"seed": 0}})
    assert cfg.problem.generator.growth_C2 == 0.5 and cfg.scenario is None


def test_cli_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, {"scenario": "linear-1d"}, "bad.yaml")
    assert main(["validate", "--config", str(bad), "--quiet"]) == EXIT_CONFIG
    assert "ensemble.seed" in capsys.readouterr().err
    # a growth violation fails validation
    viol = _write(tmp_path, {"problem": {"diffusion": "unit", "generator": "linear",
                                         "terminal": "square", "constants": {"Cg": 1.0}},
                             "ensemble": {"seed": 0}, "output": {"dir": str(tmp_path / "v")}},
                  "viol.yaml")
    assert main(["validate", "--config", str(viol), "--quiet"]) == EXIT_VALIDATION
    # a stiff driver on a coarse grid stalls the Picard loop
    stiff = _write(tmp_path, {"problem": {"diffusion": "unit", "generator": "linear",
                                          "terminal": "identity"},
                              "grid": {"N": 1}, "ensemble": {"seed": 0, "paths": 200},
                              "solver": {"picard_max": 3}, "output": {"dir": str(tmp_path / "s")}},
                   "stiff.yaml")
    assert main(["solve", "--config", str(stiff), "--quiet"]) == EXIT_SOLVER
    man = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert man["status"] == EXIT_SOLVER


def test_report_writes_manifest_and_is_reproducible(tmp_path):
    cfg = _write(tmp_path, {"scenario": "zero", "ensemble": {"seed": 5, "paths": 1000},
                            "grid": {"N": 8}, "schedule": {"n_values": [2, 4]}})
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_scenario(str(cfg), out=str(a)) == EXIT_OK
    assert run_scenario(str(cfg), out=str(b)) == EXIT_OK
    ma = json.loads((a / "manifest.json").read_text())
    assert ma["seed"] == 5 and ma["config_sha256"] and "numpy" in ma["versions"]
    assert "scheme_pairs.csv" in ma["outputs"]
    for f in ma["outputs"]:
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_simulate_and_oracle_commands(tmp_path, capsys):
    cfg = _write(tmp_path, {"scenario": "linear-1d", "ensemble": {"seed": 1, "paths": 300},
                            "grid": {"N": 4}})
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"),
                 "--quiet"]) == EXIT_OK
    assert (tmp_path / "o" / "ensemble.bin").stat().st_size > 300 * 9 * 8
    assert main(["oracle", "--scenario", "zero", "--out", str(tmp_path / "t"), "--quiet"]) == 0
    assert (tmp_path / "t" / "zero.csv").exists()
    assert main(["oracle", "--scenario", "bounded-elliptic", "--out", str(tmp_path)]) == 2
    assert main(["list"]) == 0
    assert "linear-1d" in capsys.readouterr().out
