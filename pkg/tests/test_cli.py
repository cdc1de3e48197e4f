import math

import numpy as np
import pytest

from lieflow.analysis.plots import read_csv
from lieflow.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main
from lieflow.cli.commands import cmd_eval, cmd_gen, cmd_sample, cmd_train, run_dir_for
from lieflow.cli.config import Experiment, RunConfig, Schedule
from lieflow.errors import ConfigError, DivergenceError

SMALL = dict(train_count=64, test_count=40, epochs=2, batch_size=32, width=16, sample_count=40, trajectory_count=3)


def small(**kw):
    return RunConfig.from_dict({**{k: str(v) for k, v in SMALL.items()}, **{k: str(v) for k, v in kw.items()}})


# --------------------------------------------------------------------------
# config


def test_config_round_trip_and_defaults():
    cfg = RunConfig()
    assert RunConfig.loads(cfg.dumps()) == cfg
    assert cfg.inference_steps == 20 and RunConfig(experiment=Experiment.so3_tet).inference_steps == 100
    text = cfg.dumps()
    assert all(f"{name}=" in text for name in ("experiment", "seed", "schedule", "n", "steps", "epochs"))


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"experiment": "so4_nothing"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"epochs": "many"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"no_such_key": "1"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"n": "0.5", "schedule": "power"})


# --------------------------------------------------------------------------
# commands


def test_gen_is_idempotent(tmp_path):
    cfg = small()
    a = {k: p.read_bytes() for k, p in cmd_gen(cfg, tmp_path / "a").items()}
    b = {k: p.read_bytes() for k, p in cmd_gen(cfg, tmp_path / "a").items()}
    c = {k: p.read_bytes() for k, p in cmd_gen(cfg, tmp_path / "c").items()}
    assert a == b == c
    assert (tmp_path / "a" / "manifest.txt").read_text() == (tmp_path / "c" / "manifest.txt").read_text()


def test_gen_oct_manifest_has_24_elements(tmp_path):
    cmd_gen(small(experiment="so3_oct"), tmp_path)
    kv = dict(l.split("=", 1) for l in (tmp_path / "manifest.txt").read_text().splitlines())
    assert kv["table.order"] == "24"
    assert sum(k.startswith("table.") and k[6:].isdigit() for k in kv) == 24


def test_gen_empty_dataset(tmp_path):
    from lieflow.datasets import load_dataset

    cmd_gen(small(train_count=0, test_count=0), tmp_path)
    assert len(load_dataset(tmp_path / "train.lfds")) == 0


def test_power_schedule_recorded_in_snapshot(tmp_path):
    rc = main(["gen", "--experiment", "so3_oct", "--schedule", "power", "--n", "5", "--run-dir", str(tmp_path),
               "--set", "train_count=8", "--set", "test_count=4"])
    assert rc == EXIT_OK
    snap = RunConfig.loads((tmp_path / "config.txt").read_text())
    assert snap.schedule == Schedule.power and snap.n == 5.0


def test_resume_reproduces_uninterrupted_losses(tmp_path):
    cfg = small(epochs=4, checkpoint_every=2)
    _, full = cmd_train(cfg, tmp_path / "full")
    _, part = cmd_train(small(epochs=2, checkpoint_every=2), tmp_path / "part")
    _, resumed = cmd_train(cfg, tmp_path / "part", resume=True)
    assert part == full[:2]
    assert resumed == full
    assert (tmp_path / "part" / "loss.csv").read_text() == (tmp_path / "full" / "loss.csv").read_text()


def test_sample_count_zero_and_determinism(tmp_path):
    cfg = small()
    cmd_train(cfg, tmp_path)
    H, C = cmd_sample(cfg, tmp_path, count=0)
    assert H.shape == (0, 2, 2)
    header, data = read_csv(tmp_path / "elements.csv")
    assert header[0] == "index" and data.shape == (0, 9)
    first = cmd_sample(cfg, tmp_path, count=10)[0]
    again = cmd_sample(cfg, tmp_path, count=10)[0]
    assert np.array_equal(first, again)
    th, td = read_csv(tmp_path / "trajectories.csv")
    assert td.shape[0] == 3 * 21 and np.isnan(td[20, th.index("A_0")])


def test_sample_without_checkpoint_is_explicit(tmp_path):
    with pytest.raises(FileNotFoundError, match="checkpoint"):
        cmd_sample(small(), tmp_path)


def test_sample_count_above_test_set(tmp_path):
    cfg = small()
    cmd_train(cfg, tmp_path)
    with pytest.raises(ConfigError):
        cmd_sample(cfg, tmp_path, count=41)


def test_eval_truth_against_truth_is_zero(tmp_path):
    # an identity sampler output canonicalizes to the ground truth itself
    from lieflow.analysis.plots import write_csv
    from lieflow.datasets import load_dataset

    cfg = small(experiment="so3_tet")
    cmd_gen(cfg, tmp_path)
    test = load_dataset(tmp_path / "test.lfds")
    w = 3
    header = ["index"] + [f"h_{i}{j}" for i in range(w) for j in range(w)] + [f"c_{i}{j}" for i in range(w) for j in range(w)]
    write_csv(tmp_path / "elements.csv", header, ([k] + list(np.eye(3).ravel()) + list(T.ravel()) for k, T in enumerate(test.transforms)))
    rep = cmd_eval(cfg, tmp_path)
    assert rep.w1 == 0.0 and rep.sample_count == len(test)
    assert "w1=0.0" in (tmp_path / "eval_report.txt").read_text()


def test_full_pipeline_through_main(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("LIEFLOW_RUN_DIR", str(tmp_path))
    args = ["--experiment", "so3_tet"] + sum((["--set", f"{k}={v}"] for k, v in SMALL.items()), [])
    for cmd in ("gen", "train", "sample", "eval", "analyze"):
        assert main([cmd, *args, "--steps", "5", "--svg"]) == EXIT_OK
    run = run_dir_for(small(experiment="so3_tet", steps=5), tmp_path)
    for name in ("config.txt", "loss.csv", "checkpoint.ckpt", "elements.csv", "eval_report.txt", "plots/euler_mollweide.csv"):
        assert (run / name).exists(), name
    _, moll = read_csv(run / "plots" / "euler_mollweide.csv")
    assert moll.shape == (40, 8)
    # re-running analyze regenerates identical bytes
    before = (run / "plots" / "euler_mollweide.csv").read_bytes()
    assert main(["analyze", *args, "--steps", "5"]) == EXIT_OK
    assert (run / "plots" / "euler_mollweide.csv").read_bytes() == before


def test_scalar_demo_entropy_starts_at_ln4(tmp_path):
    sets = ["scalar_epochs=1", "scalar_count=256", "scalar_width=8", "posterior_steps=4", "posterior_samples=20"]
    rc = main(["scalar-demo", "--run-dir", str(tmp_path)] + sum((["--set", s] for s in sets), []))
    assert rc == EXIT_OK
    _, e = read_csv(tmp_path / "plots" / "entropy.csv")
    assert e[0, 1] == pytest.approx(math.log(4), abs=1e-12)
    header, p = read_csv(tmp_path / "plots" / "posterior_by_mode.csv")
    assert header == ["group", "t", "p0", "p1", "p2", "p3"] and set(p[:, 0]) <= {0, 1, 2, 3}
    # analyze on the finished scalar run rebuilds the tables from the checkpoint
    assert main(["analyze", "--run-dir", str(tmp_path)] + sum((["--set", s] for s in sets), [])) == EXIT_OK


# --------------------------------------------------------------------------
# exit codes


def test_exit_code_config(tmp_path, capsys):
    assert main(["gen", "--experiment", "nope", "--run-dir", str(tmp_path)]) == EXIT_CONFIG
    assert "error kind=config" in capsys.readouterr().err
    assert main(["gen", "--set", "oops", "--run-dir", str(tmp_path)]) == EXIT_CONFIG


def test_exit_code_io(tmp_path, capsys):
    assert main(["sample", "--run-dir", str(tmp_path / "empty")]) == EXIT_IO
    assert "error kind=io" in capsys.readouterr().err
    assert main(["gen", "--config", str(tmp_path / "missing.txt")]) == EXIT_IO


def test_exit_code_numerical(tmp_path, monkeypatch, capsys):
    import lieflow.cli.commands as commands

    def boom(*a, **k):
        raise DivergenceError("non-finite loss in batch 3", batch_index=3)

    monkeypatch.setattr(commands, "train", boom)
    args = ["train", "--run-dir", str(tmp_path)] + sum((["--set", f"{k}={v}"] for k, v in SMALL.items()), [])
    assert main(args) == EXIT_NUMERIC
    err = capsys.readouterr().err
    assert "error kind=numerical" in err and "DivergenceError" in err
    assert (tmp_path / "last_good.ckpt").exists()
