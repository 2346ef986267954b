"""Workspace orchestration and the command-line surface.

The module-scoped fixture builds one tiny-but-real workspace: generated
styles and datasets, a phase-1 checkpoint, one mono registration pass, then
the phase-2 checkpoint.  Tests share it read-only; registration reruns are
deterministic so repeated passes must reproduce the same bytes.
"""

import json

import numpy as np
import pytest

from nerfreg.cli import build_parser, main
from nerfreg.experiment import (ExperimentConfig, _require,
                                generate_workspace, run_experiment,
                                run_registration, train_field_step,
                                train_hypernet_step)
from nerfreg.field import load_checkpoint
from nerfreg.fileio import (load_pose, read_kv_config, read_ppm, save_pose,
                            write_kv_config)
from nerfreg.metrics import read_results
from nerfreg.se3 import Pose, perturb_pose

TINY = ExperimentConfig(
    seed=5, n_vessels=3, n_styles=3, held_out=("style02",),
    n_train_views=3, n_val_views=1, style_views=2,
    mono_targets=2, cross_targets=2,
    phase1_iterations=40, phase2_iterations=20,
    phase1_rays=256, phase2_rays=128, n_samples=24,
    est_iterations=12, est_rays=128, est_samples=24, est_restarts=0,
    mode="both")


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    generate_workspace(root, TINY)
    train_field_step(root, TINY)
    # mono never needs the hypernetwork; run it before phase 2 exists
    run_registration(root, TINY, "mono")
    mono_bytes = (root / "results" / "mono" / "results.csv").read_bytes()
    train_hypernet_step(root, TINY)
    return {"root": root, "mono_bytes": mono_bytes}


# -- config ----------------------------------------------------------------------


def test_config_kv_round_trip():
    assert ExperimentConfig.from_kv(TINY.to_kv()) == TINY


def test_config_rejects_unknown_keys():
    kv = TINY.to_kv()
    kv["warp_speed"] = "9"
    with pytest.raises(ValueError, match="warp_speed"):
        ExperimentConfig.from_kv(kv)


def test_config_validation():
    with pytest.raises(ValueError, match="mode"):
        ExperimentConfig(mode="sideways")
    with pytest.raises(ValueError, match="non-held-out"):
        ExperimentConfig(n_styles=4, held_out=("a", "b", "c", "d"))


def test_require_names_the_producer(tmp_path):
    with pytest.raises(FileNotFoundError, match="train-field"):
        _require(tmp_path / "nope.ckpt", "train-field")


# -- workspace layout --------------------------------------------------------------


def test_generate_lays_out_the_workspace(workspace):
    root = workspace["root"]
    for i in range(3):
        assert (root / "styles" / f"style{i:02d}.ppm").exists()
    kv = read_kv_config(root / "styles" / "styles.kv")
    assert kv["held_out"] == "style02"
    assert ExperimentConfig.from_kv(read_kv_config(root / "generate.kv")) \
        == TINY
    # non-held-out styles feed the hypernet; held-out ones become targets
    assert (root / "data" / "hyper" / "style00" / "manifest.json").exists()
    assert (root / "data" / "hyper" / "style01" / "manifest.json").exists()
    assert not (root / "data" / "hyper" / "style02").exists()
    assert (root / "data" / "targets" / "style02" / "manifest.json").exists()
    man = json.loads(
        (root / "data" / "base_train" / "manifest.json").read_text())
    assert len(man["views"]) == TINY.n_train_views


def test_checkpoints_written(workspace):
    root = workspace["root"]
    field = load_checkpoint(root / "checkpoints" / "field.ckpt")
    assert field.theta_h is None
    full = load_checkpoint(root / "checkpoints" / "full.ckpt")
    assert full.theta_h is not None
    # phase 2 never moves phase-1 parameters
    assert np.array_equal(full.params.theta_fd.values,
                          field.params.theta_fd.values)
    assert np.array_equal(full.params.theta_fc.values,
                          field.params.theta_fc.values)
    assert (root / "logs" / "phase1.csv").exists()
    assert (root / "logs" / "phase2.csv").exists()


def test_steps_demand_their_inputs(tmp_path):
    with pytest.raises(FileNotFoundError, match="generate"):
        train_field_step(tmp_path, TINY)
    with pytest.raises(FileNotFoundError, match="train-field"):
        train_hypernet_step(tmp_path, TINY)
    with pytest.raises(FileNotFoundError):
        run_registration(tmp_path, TINY, "mono")


# -- registration runs --------------------------------------------------------------


def test_mono_outputs_and_bit_exact_rerun(workspace):
    root = workspace["root"]
    out = root / "results" / "mono"
    rows = read_results(out / "results.csv")
    assert len(rows) == TINY.mono_targets
    assert {r.method for r in rows} == {"ours"}
    for name in ("summary.csv", "curves.csv", "report.txt"):
        assert (out / name).exists()
    # rerun now that full.ckpt exists: frozen geometry + seeded draws
    # must reproduce the first pass byte for byte
    run_registration(root, TINY, "mono")
    assert (out / "results.csv").read_bytes() == workspace["mono_bytes"]


def test_cross_pairs_methods_on_identical_targets(workspace):
    root = workspace["root"]
    run_registration(root, TINY, "cross")
    rows = read_results(root / "results" / "cross" / "results.csv")
    assert len(rows) == 2 * TINY.cross_targets * len(TINY.held_out)
    assert {r.method for r in rows} == {"ours", "base-style"}
    assert {r.style_id for r in rows} == set(TINY.held_out)
    by_target = {}
    for r in rows:
        by_target.setdefault((r.style_id, r.target_id), set()).add(r.method)
    assert all(m == {"ours", "base-style"} for m in by_target.values())
    summary = (root / "results" / "cross" / "summary.csv").read_text()
    assert "ours,pooled" in summary and "base-style,pooled" in summary


def test_run_registration_rejects_unknown_mode(workspace):
    with pytest.raises(ValueError, match="mode"):
        run_registration(workspace["root"], TINY, "diagonal")


def test_run_experiment_reuses_artifacts(workspace):
    root = workspace["root"]
    out = run_experiment(root, TINY, build_all=False)
    assert set(out) == {"mono", "cross"}
    assert out["mono"].read_bytes() == workspace["mono_bytes"]


# -- CLI -------------------------------------------------------------------------


def test_every_subcommand_accepts_seed_and_config():
    parser = build_parser()
    required = {
        "generate": ["--workspace", "w"],
        "train-field": ["--workspace", "w"],
        "train-hypernet": ["--workspace", "w"],
        "render": ["--checkpoint", "c", "--pose", "p", "--out", "o"],
        "estimate-pose": ["--checkpoint", "c", "--target", "t",
                          "--init", "i", "--out", "o"],
        "evaluate": ["--results", "r", "--out-dir", "d"],
        "run-experiment": ["--workspace", "w"],
    }
    for cmd, extra in required.items():
        args = parser.parse_args([cmd, *extra, "--seed", "3",
                                  "--config", "c.kv"])
        assert args.seed == 3 and args.config == "c.kv"
    with pytest.raises(SystemExit):
        parser.parse_args(["no-such-command"])


def test_cli_generate_with_config_file(tmp_path, capsys):
    cfg = ExperimentConfig(
        seed=9, n_vessels=2, n_styles=3, held_out=("style02",),
        n_train_views=1, n_val_views=1, style_views=1, mono_targets=1,
        cross_targets=1, mode="mono")
    cfg_path = tmp_path / "exp.kv"
    write_kv_config(cfg_path, cfg.to_kv())
    ws = tmp_path / "ws"
    assert main(["generate", "--workspace", str(ws),
                 "--config", str(cfg_path)]) == 0
    assert "workspace generated" in capsys.readouterr().out
    back = ExperimentConfig.from_kv(read_kv_config(ws / "generate.kv"))
    assert back == cfg
    assert (ws / "data" / "targets" / "mono" / "view000.ppm").exists()


def test_cli_render_writes_a_ppm(workspace, tmp_path, capsys):
    root = workspace["root"]
    man = json.loads(
        (root / "data" / "base_train" / "manifest.json").read_text())
    pose_path = tmp_path / "pose.txt"
    save_pose(pose_path,
              Pose.from_matrix(np.array(man["views"][0]["pose"]).reshape(4, 4)))
    out = tmp_path / "render.ppm"
    rc = main(["render", "--checkpoint",
               str(root / "checkpoints" / "field.ckpt"),
               "--pose", str(pose_path), "--out", str(out),
               "--samples", "16"])
    assert rc == 0
    img = read_ppm(out)
    assert img.shape == (64, 64, 3)
    assert img.min() >= 0.0 and img.max() <= 1.0
    capsys.readouterr()


def test_cli_estimate_pose_round_trip(workspace, tmp_path, capsys):
    root = workspace["root"]
    man = json.loads(
        (root / "data" / "targets" / "mono" / "manifest.json").read_text())
    true_pose = Pose.from_matrix(
        np.array(man["views"][0]["pose"]).reshape(4, 4))
    init = perturb_pose(true_pose, 3.0, 0.03, np.random.default_rng(0))
    init_path = tmp_path / "init.txt"
    save_pose(init_path, init)
    out = tmp_path / "est.txt"
    rc = main(["estimate-pose", "--checkpoint",
               str(root / "checkpoints" / "field.ckpt"),
               "--target", str(root / "data" / "targets" / "mono" /
                               "view000.ppm"),
               "--init", str(init_path), "--out", str(out),
               "--conditioning", "base", "--iterations", "5", "--rays", "96",
               "--samples", "16", "--restarts", "0"])
    assert rc == 0
    est = load_pose(out)
    assert np.all(np.isfinite(est.matrix()))
    assert "final_loss=" in capsys.readouterr().out


def test_cli_evaluate_rebuilds_summaries(workspace, tmp_path, capsys):
    root = workspace["root"]
    out_dir = tmp_path / "eval"
    rc = main(["evaluate", "--results",
               str(root / "results" / "mono" / "results.csv"),
               "--out-dir", str(out_dir)])
    assert rc == 0
    # same rows, same writers: the rebuild matches the in-run summary
    assert (out_dir / "summary.csv").read_bytes() == \
        (root / "results" / "mono" / "summary.csv").read_bytes()
    assert (out_dir / "curves.csv").exists()
    assert (out_dir / "report.txt").read_text().startswith("Pose registration")
    capsys.readouterr()


def test_cli_error_contract_is_single_line(workspace, tmp_path, capsys):
    root = workspace["root"]
    rc = main(["estimate-pose", "--checkpoint",
               str(root / "checkpoints" / "field.ckpt"),
               "--target", str(root / "data" / "targets" / "mono" /
                               "view000.ppm"),
               "--init", str(tmp_path / "missing.txt"),
               "--out", str(tmp_path / "est.txt")])
    assert rc == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ")
    assert err.count("\n") == 1 and "Traceback" not in err

    rc = main(["evaluate", "--results", str(tmp_path / "nope.csv"),
               "--out-dir", str(tmp_path)])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error: ")
