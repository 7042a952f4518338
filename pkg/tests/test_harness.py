import json

import numpy as np
import pytest

from leosem.errors import BadConfig, IoFailure
from leosem.harness import cli
from leosem.harness.config import ScenarioConfig, default_config_path, parse_level
from leosem.harness.experiments import (ExperimentKind, ExperimentResult, ExperimentSpec, child_seed,
                                        linear_fit_r2, paired_not_worse, run_mode_level_breakdown)
from leosem.harness.outputs import emit_outputs
from leosem.semlink import SemWeights


def tiny_config() -> ScenarioConfig:
    cfg = ScenarioConfig()
    cfg = cfg.replace("scenario", n_leo=2, n_uav=1, n_user=2, n_tasks=3, horizon=25, arrival_rate=5.0)
    cfg = cfg.replace("trainer", updates=1, group_size=2, hidden=(8, 8), epochs=1)
    return cfg.replace("experiment", replications=2, eval_episodes=1, delay_weights=(0.1, 0.9),
                       powers=(1.0, 2.0), breakdown_episodes=1)


@pytest.fixture
def tiny_ini(tmp_path):
    path = tmp_path / "tiny.ini"
    tiny_config().save(path)
    return path


def test_default_ini_matches_defaults():
    cfg = ScenarioConfig.load(default_config_path())
    assert cfg == ScenarioConfig()
    assert ScenarioConfig.from_ini(cfg.to_ini()).to_ini() == cfg.to_ini()


def test_round_trip_of_modified_config():
    cfg = tiny_config().replace("scenario", allowed_modes=("text_image",), hover_only=True)
    assert ScenarioConfig.from_ini(cfg.to_ini()) == cfg


def test_env_config_converts_units():
    env = ScenarioConfig().env_config()
    assert env.fading.noise_power == pytest.approx(1e-16, rel=1e-12)
    assert env.leo_antenna_gain == pytest.approx(10 ** 4.2, rel=1e-12)


def test_digest_tracks_content():
    a, b = tiny_config(), tiny_config()
    assert a.digest() == b.digest()
    assert a.replace("experiment", master_seed=1).digest() != a.digest()


@pytest.mark.parametrize("text", [
    "[nonsense]\nx = 1\n",
    "[scenario]\nn_leoo = 3\n",
    "[scenario]\nn_leo = three\n",
    "[scenario]\nn_leo = 0\n",
    "[trainer]\nalgorithm = dqn\n",
    "[scenario]\ntheta_d = 0.9\n",
    "[scenario]\nhover_only = maybe\n",
    "[experiment]\nbreakdown_levels = 1:8\n",
    "not an ini",
])
def test_bad_configs(text):
    with pytest.raises(BadConfig):
        cfg = ScenarioConfig.from_ini(text)
        for level in cfg.experiment.breakdown_levels:
            parse_level(level)


def test_parse_level():
    assert parse_level("2:16:0.5") == (2, 16, 0.5)


def test_child_seeds_are_stable_and_distinct():
    assert child_seed(2025, "train", 0) == child_seed(2025, "train", 0)
    seeds = {child_seed(2025, lab, i) for lab in ("train", "sample", "eval/0") for i in range(20)}
    assert len(seeds) == 60


def test_paired_not_worse():
    a = [1.0, 1.1, 0.9, 1.2, 1.0]
    assert paired_not_worse(a, a)[0]
    assert paired_not_worse([x + 0.5 + 0.01 * i for i, x in enumerate(a)], a)[0]
    worse = [x - 0.5 + 0.01 * i for i, x in enumerate(a)]
    holds, p = paired_not_worse(worse, a)
    assert not holds and p < 0.05


def test_linear_fit_r2():
    x = np.linspace(0.1, 0.9, 5)
    assert linear_fit_r2(x, 2 * x + 1) == pytest.approx(1.0)
    assert linear_fit_r2(x, [0, 1, 0, 1, 0]) < 0.5


def test_spec_validation():
    with pytest.raises(BadConfig):
        ExperimentSpec(ExperimentKind.POWER_SWEEP, (), ("full",), 1)
    spec = ExperimentSpec.from_config(ScenarioConfig(), ExperimentKind.DELAY_WEIGHT_SWEEP)
    assert spec.values == (0.1, 0.3, 0.5, 0.7, 0.9)


def test_delay_sweep_weights():
    w = SemWeights.delay_sweep(0.7)
    assert (w.theta_d, w.theta_r, w.theta_c) == pytest.approx((0.7, 0.15, 0.15))


def test_emit_outputs_is_deterministic(tmp_path):
    cfg = tiny_config()
    res = run_mode_level_breakdown(cfg)
    emit_outputs([res], tmp_path / "a", cfg)
    emit_outputs([run_mode_level_breakdown(cfg)], tmp_path / "b", cfg)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) >= 3
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["config_sha256"] == cfg.digest()
    assert man["experiments"]["mode_level_breakdown"]["seeds"]["episodes"]


def test_emit_outputs_empty_and_unwritable(tmp_path):
    cfg = tiny_config()
    emit_outputs([], tmp_path / "e", cfg)
    assert [p.name for p in (tmp_path / "e").iterdir()] == ["manifest.json"]
    (tmp_path / "file").write_text("x")
    with pytest.raises(IoFailure):
        emit_outputs([ExperimentResult("r", ("a",), [(1,)])], tmp_path / "file" / "sub", cfg)


def test_cli_train_and_evaluate(tmp_path, tiny_ini, capsys):
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(tiny_ini), "--algo", "grpo", "--seed", "3", "--out", str(out)]) == 0
    for name in ("checkpoint.npz", "training_log.csv", "manifest.json"):
        assert (out / name).exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["seeds"] == {"train": 3}
    ev = tmp_path / "ev"
    assert cli.main(["evaluate", "--checkpoint", str(out / "checkpoint.npz"), "--episodes", "2",
                     "--out", str(ev)]) == 0
    assert "mean average_sem" in capsys.readouterr().out
    assert len((ev / "evaluation.csv").read_text().splitlines()) == 3
    assert len(list((ev / "traces").iterdir())) == 2


def test_cli_ppo_train(tmp_path, tiny_ini):
    assert cli.main(["train", "--config", str(tiny_ini), "--algo", "ppo", "--out", str(tmp_path / "p")]) == 0


@pytest.mark.parametrize("kind", ["delay-weight", "power"])
def test_cli_sweeps_are_reproducible(tmp_path, tiny_ini, kind):
    for d in ("a", "b"):
        assert cli.main(["sweep", kind, "--config", str(tiny_ini), "--out", str(tmp_path / d)]) == 0
    name = "delay_weight_sweep" if kind == "delay-weight" else "power_sweep"
    a = (tmp_path / "a" / f"{name}.csv").read_bytes()
    assert a == (tmp_path / "b" / f"{name}.csv").read_bytes()
    n_arms = 3 if kind == "delay-weight" else 4
    assert len(a.decode().splitlines()) == 1 + n_arms * 2 * 2
    assert (tmp_path / "a" / "traces" / name).is_dir()


def test_cli_breakdown(tmp_path, tiny_ini, capsys):
    assert cli.main(["breakdown", "--config", str(tiny_ini), "--out", str(tmp_path / "bd")]) == 0
    assert capsys.readouterr().out.count("level") == 3


def test_cli_exit_codes(tmp_path, tiny_ini):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nn_leo = -1\n")
    assert cli.main(["breakdown", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert cli.main(["breakdown", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path / "x")]) == 2
    assert cli.main(["evaluate", "--checkpoint", str(tmp_path / "none.npz")]) == 2
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert cli.main(["train", "--config", str(tiny_ini), "--out", str(blocker)]) == 3
    with pytest.raises(SystemExit) as exc:
        cli.main(["train"])
    assert exc.value.code == 2


def test_log_level_env(monkeypatch, tmp_path, tiny_ini, capsys):
    import logging
    monkeypatch.setenv(cli.LOG_ENV, "DEBUG")
    logging.getLogger().handlers.clear()
    assert cli.main(["train", "--config", str(tiny_ini), "--out", str(tmp_path / "r")]) == 0
    assert logging.getLogger().level == logging.DEBUG
    logging.getLogger().handlers.clear()
    logging.getLogger().setLevel(logging.WARNING)
