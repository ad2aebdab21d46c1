import json
import os

import pytest

from ganmia.cli import main
from ganmia.experiment import (
    AttackSpec,
    DataConfig,
    ExperimentConfig,
    SplitPlan,
    TargetConfig,
    default_config,
    load_config,
    run_experiment,
    save_config,
)


def tiny_config(out_dir, n_runs=1, attacks=None, beta=0.5):
    return ExperimentConfig(
        data=DataConfig(dimension=40, subpopulations=2),
        split=SplitPlan(60, 50, 30, 30),
        target=TargetConfig(kind="oracle", beta=beta),
        attacks=attacks
        or [
            AttackSpec("one_way"),
            AttackSpec("two_way"),
            AttackSpec("robust_homer"),
            AttackSpec("detector", {"epochs": 6, "hidden": (16,)}),
        ],
        n_runs=n_runs,
        master_seed=3,
        output_dir=str(out_dir),
    )


def test_config_round_trip(tmp_path):
    config = tiny_config(tmp_path / "out")
    path = tmp_path / "config.json"
    save_config(config, str(path))
    assert load_config(str(path)).to_dict() == config.to_dict()


def test_config_rejects_unknown_attack(tmp_path):
    with pytest.raises(ValueError, match="valid names"):
        tiny_config(tmp_path, attacks=[AttackSpec("not_an_attack")])


def test_run_experiment_writes_expected_artifacts(tmp_path):
    out = tmp_path / "out"
    config = tiny_config(out, n_runs=2)
    report = run_experiment(config)
    for name in ("results.csv", "results.json", "metrics_long.csv", "roc_loglog.svg",
                 "config.json", "pca_scree.csv", "pca_scatter.csv"):
        assert (out / name).exists(), name
    run1 = out / "runs" / "run_01"
    for name in ("dataset.csv", "split.json", "candidates.csv", "labels.csv",
                 "target.target.json", "scores_one_way.csv"):
        assert (run1 / name).exists(), name
    assert report.metadata["n_runs_completed"] == 2
    assert not report.metadata["failures"]
    assert set(report.attacks) == {"one_way", "two_way", "robust_homer", "detector"}


def test_run_experiment_reruns_byte_identical(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    report1 = run_experiment(tiny_config(out1, n_runs=2))
    report2 = run_experiment(tiny_config(out2, n_runs=2))
    assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()
    json1 = json.loads((out1 / "results.json").read_text())
    json2 = json.loads((out2 / "results.json").read_text())
    json1["metadata"].pop("output_dir", None)
    json2["metadata"].pop("output_dir", None)
    assert json1 == json2
    assert report1.to_dict() == report2.to_dict()


def test_staged_cli_equals_run(tmp_path):
    staged_out = tmp_path / "staged"
    run_out = tmp_path / "full"
    config = tiny_config(staged_out, n_runs=1)
    config_path = tmp_path / "config.json"
    save_config(config, str(config_path))

    for cmd in ("gen-data", "train-target", "attack", "evaluate"):
        assert main([cmd, "--config", str(config_path)]) == 0

    full_config = tiny_config(run_out, n_runs=1)
    run_experiment(full_config)

    staged_csv = (staged_out / "results.csv").read_text()
    full_csv = (run_out / "results.csv").read_text()
    assert staged_csv == full_csv
    staged_scores = (staged_out / "runs" / "run_01" / "scores_two_way.csv").read_text()
    full_scores = (run_out / "runs" / "run_01" / "scores_two_way.csv").read_text()
    assert staged_scores == full_scores


def test_cli_missing_config_exits_2(tmp_path, capsys):
    missing = str(tmp_path / "nope.json")
    assert main(["run", "--config", missing]) == 2
    assert missing in capsys.readouterr().err


def test_cli_unknown_attack_exits_2(tmp_path, capsys):
    doc = tiny_config(tmp_path / "out").to_dict()
    doc["attacks"].append({"name": "bogus", "params": {}})
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert main(["run", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "bogus" in err and "two_way" in err


def test_cli_seed_flag_overrides_master_seed(tmp_path):
    config = tiny_config(tmp_path / "out", n_runs=1)
    path = tmp_path / "config.json"
    save_config(config, str(path))
    assert main(["gen-data", "--config", str(path), "--seed", "99"]) == 0
    first = (tmp_path / "out" / "runs" / "run_01" / "dataset.csv").read_text()
    assert main(["gen-data", "--config", str(path)]) == 0
    second = (tmp_path / "out" / "runs" / "run_01" / "dataset.csv").read_text()
    assert first != second


def test_cli_output_dir_env_override(tmp_path, monkeypatch):
    config = tiny_config(tmp_path / "ignored", n_runs=1)
    path = tmp_path / "config.json"
    save_config(config, str(path))
    env_out = tmp_path / "env_out"
    monkeypatch.setenv("GANMIA_OUTPUT_DIR", str(env_out))
    assert main(["gen-data", "--config", str(path)]) == 0
    assert (env_out / "runs" / "run_01" / "dataset.csv").exists()


def test_cli_attack_external_candidates(tmp_path):
    out = tmp_path / "out"
    config = tiny_config(out, n_runs=1, attacks=[AttackSpec("one_way")])
    path = tmp_path / "config.json"
    save_config(config, str(path))
    assert main(["gen-data", "--config", str(path)]) == 0
    assert main(["train-target", "--config", str(path)]) == 0
    cand = out / "runs" / "run_01" / "candidates.csv"
    labels = out / "runs" / "run_01" / "labels.csv"
    assert (
        main(
            ["attack", "--config", str(path), "--candidates", str(cand), "--labels", str(labels)]
        )
        == 0
    )
    scores = (out / "runs" / "run_01" / "scores_one_way.csv").read_text()
    assert len(scores.strip().split("\n")) == 61  # header + 60 candidates


def test_cli_diagnose_memorizing_oracle(tmp_path, capsys):
    out = tmp_path / "out"
    config = tiny_config(out, n_runs=1, beta=1.0)
    path = tmp_path / "config.json"
    save_config(config, str(path))
    assert main(["diagnose", "--config", str(path), "--samples", "500"]) == 0
    doc = json.loads((out / "diagnostics.json").read_text())
    assert doc["zero_distance_fraction"] == 1.0
    assert (out / "memorization.csv").exists()
    assert (out / "pca_scree.csv").exists()


def test_cli_init_config_then_run_roundtrip(tmp_path):
    path = tmp_path / "default.json"
    assert main(["init-config", str(path)]) == 0
    config = load_config(str(path))
    assert config.to_dict() == default_config().to_dict()


def test_default_config_is_valid():
    config = default_config()
    assert config.n_runs == 11
    assert config.split.rows_needed <= 1100
    names = [a.name for a in config.attacks]
    assert "detector" in names and "adis" in names


def test_detector_section_feeds_classifier_attacks():
    config = tiny_config("out")
    config.detector = {"epochs": 9, "patience": 3}
    assert config.attack_params(AttackSpec("detector", {})) == {"epochs": 9, "patience": 3}
    # per-attack params win over the shared section
    assert config.attack_params(AttackSpec("adis", {"epochs": 2}))["epochs"] == 2
    assert config.attack_params(AttackSpec("one_way", {})) == {}


def test_config_rejects_bad_attack_params(tmp_path):
    with pytest.raises(ValueError, match="bad parameters"):
        tiny_config(tmp_path, attacks=[AttackSpec("two_way", {"no_such_option": 1})])


def test_run_experiment_with_gan_target(tmp_path):
    out = tmp_path / "out"
    config = ExperimentConfig(
        data=DataConfig(dimension=24, subpopulations=1),
        split=SplitPlan(60, 50, 30, 30),
        target=TargetConfig(kind="vanilla_gan", latent_dim=8, epochs=5, batch_size=16),
        attacks=[AttackSpec("one_way"), AttackSpec("two_way")],
        n_runs=1,
        master_seed=5,
        output_dir=str(out),
    )
    report = run_experiment(config)
    assert not report.metadata["failures"]
    assert (out / "runs" / "run_01" / "target.gen.mlp").exists()
    assert set(report.attacks) == {"one_way", "two_way"}


def test_run_failures_are_contained_and_reported(tmp_path):
    out = tmp_path / "out"
    config = tiny_config(
        out,
        n_runs=2,
        # holdout larger than the 50-row reference pool fails at fit time
        attacks=[AttackSpec("adis", {"holdout": 500})],
    )
    path = tmp_path / "config.json"
    save_config(config, str(path))
    assert main(["run", "--config", str(path)]) == 1
    doc = json.loads((out / "results.json").read_text())
    failures = doc["metadata"]["failures"]
    assert len(failures) == 2
    assert all(f["stage"] == "attack" for f in failures)
    assert "holdout" in failures[0]["error"]


def test_no_signal_single_run_auc_near_half(tmp_path):
    config = ExperimentConfig(
        data=DataConfig(dimension=60, subpopulations=2),
        split=SplitPlan(400, 300, 300, 300),
        target=TargetConfig(kind="oracle", beta=0.0),
        attacks=[AttackSpec("one_way")],
        n_runs=1,
        master_seed=12,
        output_dir=str(tmp_path / "out"),
    )
    report = run_experiment(config)
    assert 0.45 <= report.attacks["one_way"].auc_mean <= 0.55
