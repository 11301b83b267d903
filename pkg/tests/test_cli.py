import json

import numpy as np
import pytest

from pulseforge.cli import main
from pulseforge.config import ConfigError, load_config, parse_angle, parse_int_list, parse_target
from pulseforge.network import load_checkpoint
from pulseforge.reports import read_table
from pulseforge.training import TrainingLog

TINY_TRAINING = """
[system]
n = 2
num_pulses = 2

[training]
batch_size = 16
max_epochs = 3
train_size = 32
validation_size = 8
hidden_sizes = 16,16

[seeds]
seed = 5
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_parse_helpers():
    assert parse_int_list("2-4,7") == [2, 3, 4, 7]
    assert parse_angle("0.65pi") == pytest.approx(0.65 * np.pi)
    assert parse_angle("pi/4") == pytest.approx(np.pi / 4)
    assert parse_angle("-pi") == pytest.approx(-np.pi)
    assert parse_angle("1.5") == 1.5
    with pytest.raises(ConfigError):
        parse_angle("half a turn")


def test_parse_target_forms():
    a, note = parse_target("theta=0 phi=0", 2)
    b, _ = parse_target("1,0", 2)
    np.testing.assert_array_equal(a, b)
    assert note is None
    c, note = parse_target("2,0", 2)
    np.testing.assert_array_equal(c, [1, 0])
    assert "normalized" in note
    d, _ = parse_target("0.6, 0.8j", 2)
    np.testing.assert_allclose(d, [0.6, 0.8j])
    for bad in ("0,0", "1,x", "theta=5 phi=0", "theta=1"):
        with pytest.raises(ConfigError):
            parse_target(bad, 2)
    with pytest.raises(ConfigError, match="n=3"):
        parse_target("1,0", 3)


def test_config_strictness_and_seed_precedence(tmp_path, monkeypatch):
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(write(tmp_path, "[training]\nlearning_rat = 0.1\n"))
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(write(tmp_path, "[extras]\nx = 1\n"))
    with pytest.raises(ConfigError, match="n_comp"):
        load_config(write(tmp_path, "[system]\nn = 3\nn_comp = 2\n"))
    monkeypatch.setenv("PULSEFORGE_SEED", "77")
    assert load_config(None).values["seeds"]["seed"] == 77
    assert load_config(write(tmp_path, "[seeds]\nseed = 3\n")).values["seeds"]["seed"] == 3
    assert load_config(write(tmp_path, "[seeds]\nseed = 3\n"), seed_override=9).values["seeds"]["seed"] == 9


def test_resolved_config_reloads_identically(tmp_path):
    cfg = load_config(write(tmp_path, TINY_TRAINING))
    again = load_config(write(tmp_path, cfg.to_ini(), "echo.ini"))
    assert again.values == cfg.values


def test_train_writes_artifacts_and_is_reproducible(tmp_path, capsys):
    config = write(tmp_path, TINY_TRAINING)
    for out in ("a", "b"):
        assert main(["train", "--config", config, "--out", str(tmp_path / out)]) == 0
    for name in ("checkpoint.json", "training_log.jsonl", "resolved_config.ini", "run.meta.json", "training_summary.json"):
        assert (tmp_path / "a" / name).exists()
    model = load_checkpoint(tmp_path / "a" / "checkpoint.json", n=2, num_pulses=2)
    assert model.layer_sizes == [3, 16, 16, 9]
    strip = lambda p: [{k: v for k, v in r.items() if k != "elapsed_s"} for r in TrainingLog.read(p)]
    log_a, log_b = strip(tmp_path / "a" / "training_log.jsonl"), strip(tmp_path / "b" / "training_log.jsonl")
    assert len(log_a) == 3 and log_a == log_b
    assert (tmp_path / "a" / "checkpoint.json").read_bytes() == (tmp_path / "b" / "checkpoint.json").read_bytes()
    meta = json.loads((tmp_path / "a" / "run.meta.json").read_text())
    assert meta["seeds"]["init"] == 5 and "code_version" in meta


def test_seed_flag_changes_the_run(tmp_path):
    config = write(tmp_path, TINY_TRAINING)
    main(["train", "--config", config, "--out", str(tmp_path / "a")])
    main(["train", "--config", config, "--seed", "6", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "checkpoint.json").read_bytes() != (tmp_path / "b" / "checkpoint.json").read_bytes()


def test_exit_code_for_bad_config(tmp_path, capsys):
    assert main(["train", "--config", write(tmp_path, "[system]\nn = 3\nn_comp = 2\n")]) == 2
    assert "n_comp" in capsys.readouterr().err


def test_prepare_angle_and_amplitude_forms_match(small_trained, capsys):
    _, _, path = small_trained
    assert main(["prepare", "--checkpoint", str(path), "theta=0 phi=0"]) == 0
    angle_out = capsys.readouterr().out
    assert main(["prepare", "--checkpoint", str(path), "1,0"]) == 0
    assert capsys.readouterr().out == angle_out
    assert "fidelity=" in angle_out and angle_out.count("\n") == 6
    assert main(["prepare", "--checkpoint", str(path), "2,0"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("notice: target normalized") and out.endswith(angle_out)


def test_prepare_errors(small_trained, tmp_path):
    _, _, path = small_trained
    assert main(["prepare", "--checkpoint", str(path), "0,0"]) == 2
    assert main(["prepare", "--checkpoint", str(tmp_path / "none.json"), "1,0"]) == 2
    assert main(["prepare", "1,0"]) == 2


def test_prepare_with_refinement(small_trained, capsys):
    _, _, path = small_trained
    assert main(["prepare", "--checkpoint", str(path), "--refine", "0.6,0.8j"]) == 0
    out = capsys.readouterr().out
    assert "(refined)" in out and "used_neighbor=" in out


def test_unknown_study_and_missing_checkpoint(tmp_path):
    assert main(["study", "nonsense", "--out", str(tmp_path)]) == 2
    assert main(["study", "bloch_map", "--out", str(tmp_path)]) == 2
    assert main(["study", "bloch_map", "--checkpoint", str(tmp_path / "x.json"), "--out", str(tmp_path)]) == 2
    assert main(["study", "bloch_map", "--set", "nosuch.key=1", "--out", str(tmp_path)]) == 2


def test_bloch_map_study_grid(small_trained, tmp_path):
    _, _, path = small_trained
    args = ["study", "bloch_map", "--checkpoint", str(path), "--out", str(tmp_path)]
    args += ["--set", "study.resolution_theta=50", "--set", "study.resolution_phi=50"]
    assert main(args) == 0
    header, rows = read_table(tmp_path / "bloch_map_grid.csv")
    assert header == ["theta_index", "phi_index", "log10_infidelity"] and len(rows) == 2500
    assert rows[51][:2] == ["1", "1"]
    assert (tmp_path / "resolved_config.ini").exists() and (tmp_path / "bloch_map.meta.json").exists()


def test_pulse_count_study_smoke_and_rerun_identical(tmp_path):
    config = write(tmp_path, TINY_TRAINING)
    args = ["study", "pulse_count", "--config", config, "--set", "study.pulse_range=2-3"]
    args += ["--set", "study.seeds_per_point=2", "--set", "study.eval_states=16", "--set", "study.n_resamples=200"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    header, rows = read_table(tmp_path / "a" / "pulse_count.csv")
    assert [r[0] for r in rows] == ["2", "3"]
    for name in ("pulse_count.csv", "pulse_count.meta.json", "resolved_config.ini", "run.meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_model_studies_write_reports(small_trained, tmp_path):
    _, _, path = small_trained
    ck = ["--checkpoint", str(path)]
    assert main(["study", "trajectory", *ck, "--out", str(tmp_path / "t"), "--set", "study.samples_per_pulse=4"]) == 0
    assert len(read_table(tmp_path / "t" / "trajectory.csv")[1]) == 1 + 3 * 4
    assert main(["study", "azimuthal", *ck, "--out", str(tmp_path / "a"), "--set", "study.phi_samples=12"]) == 0
    assert len(read_table(tmp_path / "a" / "azimuthal.csv")[1]) == 12
    assert (tmp_path / "a" / "azimuthal_layer0.csv").exists()
    assert main(["study", "photon_number", *ck, "--out", str(tmp_path / "p"), "--set", "study.samples=200"]) == 0
    _, rows = read_table(tmp_path / "p" / "photon_number_n2.csv")
    assert sum(int(r[3]) for r in rows) == 200


def test_refine_command_on_grid(small_trained, tmp_path, capsys):
    _, _, path = small_trained
    config = write(tmp_path, "[study]\nresolution_theta = 6\nresolution_phi = 6\n[refine]\ntrigger = 0.9999\naccept = 0.99995\n")
    assert main(["refine", "--config", config, "--checkpoint", str(path), "--out", str(tmp_path / "r")]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["states"] == 36
    assert summary["below_accept_after"] <= summary["below_accept_before"]
    assert summary["mean_fidelity_after"] >= summary["mean_fidelity_before"]


def test_inspect_checkpoint(small_trained, capsys):
    _, _, path = small_trained
    assert main(["inspect-checkpoint", str(path)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["num_pulses"] == 3 and info["n"] == 2
