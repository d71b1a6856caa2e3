import argparse
from pathlib import Path

import pytest

import main
from src.models.experiment import ExperimentConfig
from src.processors.runner import ScenarioRunner
from src.utils.config import load_config_file, thread_count
from src.utils.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
CAUCHY_LEVY = {"alpha": 1.0, "atoms": [{"dir": [1.0], "w": 1.0}, {"dir": [-1.0], "w": 1.0}]}


def _density_args(**overrides) -> argparse.Namespace:
    values = dict(
        command="density", config=None, alpha=1.0, atoms='[{"dir": [1], "w": 1}, {"dir": [-1], "w": 1}]',
        a=None, b=None, extra=None, seed=0, N=4096, L=64.0, t=1.0, delta=0.0, r=1.0, oracle="cauchy",
    )
    values.update(overrides)
    return argparse.Namespace(**values)


#### config validation ####

def test_invalid_alpha_is_a_config_error():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenarios": [{"name": "bad", "kind": "density", "levy": {**CAUCHY_LEVY, "alpha": 2.5}}]})


def test_kernel_required_for_neumann():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenarios": [{"name": "n", "kind": "neumann", "levy": CAUCHY_LEVY}]})


def test_grid_dimension_must_match():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenarios": [{"name": "d", "kind": "density", "levy": CAUCHY_LEVY, "grid": {"dim": 2}}]})


def test_yaml_config_file(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text("scenarios:\n  - name: k\n    kind: komatsu\n    levy: {alpha: 1.0, atoms: [{dir: [1.0], w: 1.0}]}\n    delta: 0.5\n")
    config = ExperimentConfig.from_file(path)
    assert config.name == "exp"
    assert config.scenarios[0].delta == 0.5


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "nope.json")


def test_thread_count_from_environment(monkeypatch):
    monkeypatch.setenv("STABLE_PERTURB_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("STABLE_PERTURB_THREADS", "many")
    with pytest.raises(ConfigError):
        thread_count()

def test_constants_lattice_defaults_to_wide_grid():
    config = ExperimentConfig.from_dict({"scenarios": [{"name": "r", "kind": "resolvent", "levy": CAUCHY_LEVY}]})
    lattice = config.scenarios[0].constants_lattice()
    assert (lattice.points, lattice.half_extent) == (8192, 128.0)


def test_constants_lattice_override():
    config = ExperimentConfig.from_dict({"scenarios": [{
        "name": "r", "kind": "resolvent", "levy": CAUCHY_LEVY, "constants_grid": {"dim": 1, "N": 4096, "L": 64.0},
    }]})
    lattice = config.scenarios[0].constants_lattice()
    assert (lattice.points, lattice.half_extent) == (4096, 64.0)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenarios": [{
            "name": "r", "kind": "resolvent", "levy": CAUCHY_LEVY, "constants_grid": {"dim": 2},
        }]})


#### runner ####

def test_empty_experiment_writes_nothing(tmp_path):
    summary = ScenarioRunner(ExperimentConfig(name="empty"), tmp_path).run()
    assert summary.passed
    assert summary.files == []
    assert not (tmp_path / "empty").exists()


def test_density_scenario(tmp_path):
    config = main.build_config(_density_args())
    summary = ScenarioRunner(config, tmp_path).run()
    assert summary.passed, [o for o in summary.outcomes if not o.passed]
    assert {o.check for o in summary.outcomes} == {"mass", "cauchy-oracle"}
    assert (tmp_path / "density" / "density_density.csv").exists()
    assert (tmp_path / "density" / "ledger.csv").exists()
    assert summary.ledger.has("lr_norm", t=1.0, delta=0.0, r=1.0)


def test_komatsu_scenario(tmp_path):
    config = ExperimentConfig.from_dict({"name": "k", "scenarios": [
        {"name": "k1", "kind": "komatsu", "levy": CAUCHY_LEVY, "delta": 0.4, "z_list": [0.5, 2.0]},
    ]})
    summary = ScenarioRunner(config, tmp_path).run()
    assert summary.passed


def test_on_start_sees_every_scenario(tmp_path):
    config = ExperimentConfig.from_dict({"name": "k", "scenarios": [
        {"name": "a", "kind": "komatsu", "levy": CAUCHY_LEVY, "delta": 0.4, "z_list": [1.0]},
        {"name": "b", "kind": "komatsu", "levy": CAUCHY_LEVY, "delta": 0.6, "z_list": [1.0]},
    ]})
    seen = []
    ScenarioRunner(config, tmp_path, on_start=lambda s: seen.append(s.name)).run()
    assert seen == ["a", "b"]

@pytest.mark.slow
def test_flagship_neumann_config(tmp_path):
    config = ExperimentConfig.from_file(CONFIGS / "05_flagship_neumann.json")
    summary = ScenarioRunner(config, tmp_path).run()
    assert summary.passed, [o for o in summary.outcomes if not o.passed]
    checks = {o.check for o in summary.outcomes if o.scenario == "flagship"}
    assert any(c.startswith("||G g||<=l_lambda") for c in checks)

#### command line ####

def test_build_config_from_flags():
    config = main.build_config(_density_args(a="0.5", t=2.0))
    scenario = config.scenarios[0]
    assert scenario.kind == "density"
    assert scenario.levy["a"] == [[0.5]]
    assert scenario.t == 2.0
    assert scenario.grid.N == 4096


def test_flags_need_alpha_and_atoms():
    with pytest.raises(ConfigError):
        main.build_config(_density_args(alpha=None))


def test_unparsable_flag():
    with pytest.raises(ConfigError):
        main.build_config(_density_args(atoms="[{"))


def test_accept_needs_a_directory(tmp_path):
    with pytest.raises(ConfigError):
        main.run_directory(tmp_path / "missing")


def test_accept_runs_configs_in_name_order(tmp_path):
    for name, delta in (("b_second", 0.6), ("a_first", 0.4)):
        path = tmp_path / f"{name}.yaml"
        path.write_text(
            f"scenarios:\n  - name: k\n    kind: komatsu\n    levy: {{alpha: 1.0, atoms: [{{dir: [1.0], w: 1.0}}]}}\n"
            f"    delta: {delta}\n    z_list: [1.0]\n"
        )
    summaries = main.run_directory(tmp_path, tmp_path / "out")
    assert [s.name for s in summaries] == ["a_first", "b_second"]
    assert all(s.passed for s in summaries)
