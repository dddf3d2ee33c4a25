import json
import os

import numpy as np
import pytest

from emaopt import generate_phase_retrieval, label_code, stream, stream_key
from emaopt.cli import main
from emaopt.errors import ConfigError
from emaopt.harness import (
    CSV_HEADER,
    SUMMARY_HEADER,
    ExperimentConfig,
    OUTPUT_ENV_VAR,
    default_config_path,
    emit_csv,
    load_config,
    run_experiment,
    write_summary,
)
from emaopt.optimizers import StepsizeSchedule, fema_run, zema_run
from emaopt.sweep import BASE_PRESET, phase_retrieval_block, run_seed
from emaopt.accumulators import preset


def tiny_config(**overrides):
    base = dict(
        problem_kind="phase_retrieval", d=3, n=12, algorithms=["FEMA3", "SGD"],
        epochs=2, grid_count=2, grid_min=0.01, grid_max=0.1, grid_spacing="linear",
        repetitions=2, master_seed=5150,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def write_cfg(tmp_path, text):
    p = tmp_path / "exp.cfg"
    p.write_text(text)
    return p


TINY_CFG_TEXT = """
[problem]
kind = phase_retrieval
d = 3
n = 12

[algorithms]
names = FEMA3, SGD

[grid]
count = 2
min = 0.01
max = 0.1
spacing = linear

[run]
epochs = 2
repetitions = 2
master_seed = 5150
"""


# --- configuration ----------------------------------------------------------


def test_bundled_default_matches_benchmark_protocol():
    cfg = load_config(default_config_path())
    assert cfg.problem_kind == "phase_retrieval"
    assert (cfg.d, cfg.n) == (10, 1000)
    assert cfg.epochs == 500
    assert cfg.repetitions == 10
    assert cfg.grid_count == 10
    assert (cfg.grid_min, cfg.grid_max) == (0.0001, 0.1)
    assert cfg.grid_spacing == "linear"
    assert cfg.mu_rule == "paper_experiment"
    assert set(cfg.algorithms) == set(BASE_PRESET)
    assert cfg.resolve_mu() == pytest.approx(10.0 / np.sqrt(500 * 1000))


def test_grid_spacing():
    cfg = tiny_config(grid_count=5, grid_min=0.1, grid_max=0.5)
    assert np.allclose(cfg.grid(), [0.1, 0.2, 0.3, 0.4, 0.5])
    assert cfg.grid()[0] == 0.1 and cfg.grid()[-1] == 0.5
    logcfg = tiny_config(grid_count=3, grid_min=0.01, grid_max=1.0, grid_spacing="log")
    assert np.allclose(logcfg.grid(), [0.01, 0.1, 1.0])


def test_unknown_key_and_section_rejected(tmp_path):
    bad = TINY_CFG_TEXT.replace("kind = phase_retrieval", "kind = phase_retrieval\nwat = 1")
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(write_cfg(tmp_path, bad))
    bad2 = TINY_CFG_TEXT + "\n[extra]\nx = 1\n"
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(write_cfg(tmp_path, bad2))


def test_validation_errors():
    with pytest.raises(ConfigError):
        tiny_config(algorithms=["FEMA9"]).validate()
    with pytest.raises(ConfigError):
        tiny_config(grid_min=0.5, grid_max=0.1).validate()
    with pytest.raises(ConfigError):
        tiny_config(repetitions=0).validate()
    with pytest.raises(ConfigError):
        tiny_config(mu_rule="explicit").validate()
    with pytest.raises(ConfigError):
        tiny_config(algorithms=["SGD", "SGD"]).validate()


def test_seed_streams_unique():
    cfg = tiny_config(algorithms=["FEMA1", "FEMA3", "SGD", "ZSGD"], grid_count=3,
                      repetitions=4)
    keys = set()
    for algo in cfg.algorithms:
        for gi in range(cfg.grid_count):
            for rep in range(cfg.repetitions):
                seed = run_seed(cfg.master_seed, algo, gi, rep)
                for purpose in ("xi", "u", "tstar"):
                    key = stream_key(seed, purpose)
                    assert key not in keys
                    keys.add(key)
    for rep in range(cfg.repetitions):
        for purpose in (("instance",), ("init",)):
            key = stream_key(cfg.master_seed, *purpose, rep)
            assert key not in keys
            keys.add(key)


# --- experiment execution ---------------------------------------------------


def test_row_counting_and_headers(tmp_path):
    cfg = tiny_config(grid_count=1, repetitions=1, epochs=3)
    result = run_experiment(cfg)
    csv_path = emit_csv(result, tmp_path / "results.csv")
    lines = csv_path.read_text().splitlines()
    # 2 algorithms x 1 alpha x 1 repetition x 3 epochs + header
    assert len(lines) == 7
    assert lines[0] == CSV_HEADER
    summary = write_summary(result, tmp_path / "summary.csv").read_text().splitlines()
    assert summary[0] == SUMMARY_HEADER
    assert len(summary) == 3


def test_csv_cell_formats(tmp_path):
    cfg = tiny_config(grid_count=1, repetitions=1, epochs=2)
    result = run_experiment(cfg)
    lines = emit_csv(result, tmp_path / "r.csv").read_text().splitlines()
    cells = lines[1].split(",")
    assert cells[0] == "FEMA3"
    assert float(cells[1]) == 0.01
    assert cells[2] == "0" and cells[3] == "1"
    float(cells[4]), float(cells[5])  # parse cleanly
    int(cells[6]), int(cells[7])


def test_repeat_run_byte_identical(tmp_path):
    cfg = tiny_config()
    a = emit_csv(run_experiment(cfg), tmp_path / "a.csv").read_bytes()
    b = emit_csv(run_experiment(cfg), tmp_path / "b.csv").read_bytes()
    assert a == b


def test_epoch_accounting():
    # one run with E epochs consumes exactly E*n stochastic draws
    inst = generate_phase_retrieval(3, 12, 1)
    calls = {"subgrad": 0, "value": 0}
    prob = inst.to_problem()

    def counting_subgrad(x, i):
        calls["subgrad"] += 1
        return inst.subgradient(x, i)

    def counting_value(x, i):
        calls["value"] += 1
        return inst.value(x, i)

    from dataclasses import replace

    counting = replace(prob, subgradient=counting_subgrad, value=counting_value)
    epochs, n = 4, 12
    p = preset("FEMA3")
    fema_run(counting, p.schedule, StepsizeSchedule.constant_over_sqrt(0.1),
             epochs * n - 1, np.zeros(3), seed=3, epoch_length=n)
    assert calls["subgrad"] == epochs * n
    calls["subgrad"] = calls["value"] = 0
    zema_run(counting, p.schedule, StepsizeSchedule.constant_over_sqrt(0.1),
             epochs * n - 1, np.zeros(3), seed=3, mu=0.1, epoch_length=n)
    assert calls["value"] == 2 * epochs * n
    assert calls["subgrad"] == 0


def test_sweep_block_matches_reference_runs():
    cfg = tiny_config(algorithms=["FEMA2", "ZEMA3"], epochs=2, grid_count=2,
                      repetitions=2)
    insts = [generate_phase_retrieval(cfg.d, cfg.n, label_code((cfg.master_seed, "instance", r)))
             for r in range(cfg.repetitions)]
    x0s = []
    for r in range(cfg.repetitions):
        z = stream(cfg.master_seed, "init", r).standard_normal(cfg.d)
        x0s.append(z / np.sqrt((z * z).sum(axis=-1)))
    T = cfg.total_iterations - 1
    mu = cfg.resolve_mu()
    for algo in cfg.algorithms:
        runs = phase_retrieval_block(algo, insts, x0s, cfg.grid(), cfg.epochs,
                                     cfg.master_seed, mu=mu if algo.startswith("Z") else None)
        p = preset(BASE_PRESET[algo])
        for run in runs:
            prob = insts[run.repetition].to_problem()
            seed = run_seed(cfg.master_seed, algo, run.grid_index, run.repetition)
            steps = StepsizeSchedule.constant_over_sqrt(run.alpha)
            kw = dict(mode=p.mode, epoch_length=cfg.n)
            if algo.startswith("Z"):
                tr = zema_run(prob, p.schedule, steps, T, x0s[run.repetition], seed,
                              mu=mu, **kw)
            else:
                tr = fema_run(prob, p.schedule, steps, T, x0s[run.repetition], seed, **kw)
            assert tr.tstar == run.tstar
            assert np.array_equal(tr.x_final, run.x_final)
            assert np.array_equal(tr.x_tstar, run.x_tstar)
            assert np.array_equal(tr.vhat_tstar, run.vhat_tstar)
            assert np.array_equal(tr.objective_epochs, run.gaps)


def test_best_curve_permutation_invariant():
    cfg = tiny_config(grid_count=3, repetitions=2, epochs=3)
    result = run_experiment(cfg)
    curves = result.best_mean_curves()
    np.random.default_rng(0).shuffle(result.records)
    shuffled = result.best_mean_curves()
    for algo in curves:
        assert np.array_equal(curves[algo], shuffled[algo])


def test_quadratic_harness_path():
    cfg = tiny_config(
        problem_kind="quadratic", spectrum=[1.0, 2.0], linear=[0.5, -0.5],
        d=2, n=16, oracle_table=16, noise_scale=0.2, algorithms=["FEMA2", "ZSGD"],
        epochs=2, grid_count=1, repetitions=1,
    )
    result = run_experiment(cfg)
    assert len(result.records) == 2
    for rec in result.records:
        assert np.isfinite(rec.run.gaps).all()
        assert np.isfinite(rec.moreau_grad_norm_sq)


# --- CLI ---------------------------------------------------------------------


def test_cli_validate_bundled_config():
    assert main(["validate", str(default_config_path())]) == 0


def test_cli_validate_rejects_bad(tmp_path, capsys):
    bad = write_cfg(tmp_path, TINY_CFG_TEXT + "\n[grid]\nwat = 3\n")
    assert main(["validate", str(bad)]) == 2


def test_cli_missing_config_names_path(capsys):
    rc = main(["run", "/nonexistent/exp.cfg"])
    assert rc == 2
    assert "/nonexistent/exp.cfg" in capsys.readouterr().err


def test_cli_unknown_subcommand():
    assert main(["frobnicate"]) == 2


def test_cli_run_end_to_end(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path, TINY_CFG_TEXT)
    out = tmp_path / "out"
    rc = main(["run", str(cfg_path), "--output-dir", str(out), "--save-traces"])
    assert rc == 0
    assert (out / "results.csv").exists()
    assert (out / "summary.csv").exists()
    assert (out / "first_order.png").exists()
    traces = sorted((out / "traces").glob("*.json"))
    assert len(traces) == 8  # 2 algos x 2 alphas x 2 reps

    payload = json.loads(traces[0].read_text())
    assert payload["format"] == "emaopt-trace v1"
    assert payload["stationarity"]["identity_metric"]["grad_norm_sq"] is not None

    rc = main(["stationarity", str(traces[0]), "0.01"])
    assert rc == 0
    assert "grad_norm_sq" in capsys.readouterr().out


def test_cli_env_var_output(tmp_path, monkeypatch):
    cfg_path = write_cfg(tmp_path, TINY_CFG_TEXT)
    out = tmp_path / "envout"
    monkeypatch.setenv(OUTPUT_ENV_VAR, str(out))
    assert main(["run", str(cfg_path), "--no-figures"]) == 0
    assert (out / "results.csv").exists()


def test_cli_run_without_output_dir_fails(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv(OUTPUT_ENV_VAR, raising=False)
    cfg_path = write_cfg(tmp_path, TINY_CFG_TEXT)
    assert main(["run", str(cfg_path)]) == 2


def test_cli_bound():
    rc = main(["bound", "--variant", "projected_fema", "--rho", "1", "--g-inf", "1",
               "--d-inf", "1", "--dim", "2", "--iterations", "999", "--alpha", "0.5",
               "--beta1", "0.9", "--beta2", "0.999", "--beta3", "0.9", "--pi", "0.4"])
    assert rc == 0


def test_cli_bound_rejects_large_pi(capsys):
    rc = main(["bound", "--variant", "projected_fema", "--rho", "1", "--g-inf", "1",
               "--d-inf", "1", "--dim", "2", "--iterations", "999", "--alpha", "0.5",
               "--pi", "0.6"])
    assert rc == 2
    assert "pi" in capsys.readouterr().err
