"""Command-line interface tests.

Commands run in-process through cli.main so exit codes and outputs are
checked directly.  Configurations are kept tiny; the CLI plumbing is the
subject here, not model quality.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from motionflow import cli, sampler, se3, synthworld, trajeval, vfnet

RNG = np.random.default_rng


def run_cli(*argv):
    """Invoke the CLI, normalizing argparse SystemExit into a return code."""
    try:
        return cli.main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def gen_small(tmp_path, name="data", seed=7, n=9, kind="figure8", **extra):
    out = tmp_path / name
    args = ["gen", "--kind", kind, "--n", n, "--seed", seed, "--out", out]
    for key, value in extra.items():
        args += [f"--{key}", value]
    assert run_cli(*args) == 0
    return out


def train_small(tmp_path, dataset, name="run", epochs=30, seed=3):
    out = tmp_path / name
    cfg = tmp_path / f"{name}.cfg"
    cfg.write_text(f"epochs = {epochs}\nbatch_size = 8\nlr = 0.002\n"
                   f"lr_decay_epoch = {epochs // 2}\nseed = {seed}\n")
    assert run_cli("train", "--dataset", dataset / "dataset.csv",
                   "--config", cfg, "--out", out) == 0
    return out


class TestGen:
    def test_writes_artifacts_and_manifest(self, tmp_path):
        out = gen_small(tmp_path)
        assert (out / "dataset.csv").is_file()
        assert (out / "gt.tum").is_file()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "gen"
        assert manifest["seed"] == 7
        assert manifest["config"]["kind"] == "figure8"
        for path in manifest["outputs"].values():
            assert Path(path).is_file()

    def test_dataset_chains_to_gt(self, tmp_path):
        out = gen_small(tmp_path)
        gt = trajeval.read_tum(out / "gt.tum")
        rows = synthworld.ingest_features(out / "dataset.csv")
        rels = [se3.state_to_pose(pair.target) for _, pair in rows]
        rebuilt = trajeval.compose_trajectory(gt.poses[0], rels)
        for got, want in zip(rebuilt.poses, gt.poses):
            assert np.linalg.norm(got.translation - want.translation) < 1e-9

    def test_same_seed_is_byte_identical(self, tmp_path):
        a = gen_small(tmp_path, "a", seed=5)
        b = gen_small(tmp_path, "b", seed=5)
        assert (a / "dataset.csv").read_bytes() == (b / "dataset.csv").read_bytes()
        assert (a / "gt.tum").read_bytes() == (b / "gt.tum").read_bytes()

    def test_different_seed_differs(self, tmp_path):
        a = gen_small(tmp_path, "a", seed=5, kind="random-walk")
        b = gen_small(tmp_path, "b", seed=6, kind="random-walk")
        assert (a / "dataset.csv").read_bytes() != (b / "dataset.csv").read_bytes()

    def test_ambiguity_out_of_range_exits_2(self, tmp_path):
        code = run_cli("gen", "--kind", "figure8", "--n", 9,
                       "--ambiguity", "1.2", "--out", tmp_path / "x")
        assert code == 2

    def test_bad_kind_and_n_exit_2(self, tmp_path):
        assert run_cli("gen", "--kind", "spiral", "--out", tmp_path / "x") == 2
        assert run_cli("gen", "--kind", "line", "--n", 1,
                       "--out", tmp_path / "x") == 2


class TestTrain:
    def test_writes_checkpoint_and_loss(self, tmp_path):
        data = gen_small(tmp_path)
        run = train_small(tmp_path, data)
        assert (run / "checkpoint.txt").is_file()
        assert (run / "loss.csv").is_file()
        manifest = json.loads((run / "manifest.json").read_text())
        assert manifest["config"]["train"]["epochs"] == 30
        net = vfnet.load_checkpoint(run / "checkpoint.txt")
        assert net.config.cond_dim == synthworld.DEFAULT_COND_DIM

    def test_missing_dataset_exits_2(self, tmp_path):
        code = run_cli("train", "--dataset", tmp_path / "nope.csv",
                       "--out", tmp_path / "run")
        assert code == 2

    def test_bad_config_exits_2(self, tmp_path):
        data = gen_small(tmp_path)
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("epochz = 5\n")
        code = run_cli("train", "--dataset", data / "dataset.csv",
                       "--config", cfg, "--out", tmp_path / "run")
        assert code == 2

    def test_divergence_exits_1(self, tmp_path, capsys):
        data = gen_small(tmp_path)
        cfg = tmp_path / "wild.cfg"
        cfg.write_text("epochs = 3\nbatch_size = 8\nlr = 1e200\n")
        with np.errstate(all="ignore"):
            code = run_cli("train", "--dataset", data / "dataset.csv",
                           "--config", cfg, "--out", tmp_path / "run")
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_same_seed_is_byte_identical(self, tmp_path):
        data = gen_small(tmp_path)
        a = train_small(tmp_path, data, "a", seed=9)
        b = train_small(tmp_path, data, "b", seed=9)
        assert (a / "checkpoint.txt").read_bytes() == (b / "checkpoint.txt").read_bytes()
        assert (a / "loss.csv").read_bytes() == (b / "loss.csv").read_bytes()

    def test_resume_from_checkpoint(self, tmp_path):
        data = gen_small(tmp_path)
        first = train_small(tmp_path, data, "first")
        out = tmp_path / "second"
        cfg = tmp_path / "resume.cfg"
        cfg.write_text("epochs = 10\nbatch_size = 8\nseed = 4\n")
        assert run_cli("train", "--dataset", data / "dataset.csv",
                       "--config", cfg, "--checkpoint", first / "checkpoint.txt",
                       "--out", out) == 0
        assert (out / "checkpoint.txt").read_bytes() != \
            (first / "checkpoint.txt").read_bytes()


class TestInfer:
    def test_outputs_and_line_counts(self, tmp_path):
        data = gen_small(tmp_path, n=9)
        run = train_small(tmp_path, data)
        out = tmp_path / "inf"
        assert run_cli("infer", "--checkpoint", run / "checkpoint.txt",
                       "--dataset", data / "dataset.csv", "--seed", 11,
                       "--out", out) == 0
        est_lines = (out / "est.tum").read_text().splitlines()
        assert len(est_lines) == 9  # 8 motions + the start pose
        rows = sampler.read_estimates_csv(out / "estimates.csv")
        assert len(rows) == 8

    def test_same_seed_is_byte_identical(self, tmp_path):
        data = gen_small(tmp_path)
        run = train_small(tmp_path, data)
        outs = []
        for name in ("i1", "i2"):
            out = tmp_path / name
            assert run_cli("infer", "--checkpoint", run / "checkpoint.txt",
                           "--dataset", data / "dataset.csv", "--seed", 17,
                           "--out", out) == 0
            outs.append(out)
        assert (outs[0] / "estimates.csv").read_bytes() == \
            (outs[1] / "estimates.csv").read_bytes()
        assert (outs[0] / "est.tum").read_bytes() == \
            (outs[1] / "est.tum").read_bytes()

    def test_missing_checkpoint_exits_2(self, tmp_path):
        data = gen_small(tmp_path)
        code = run_cli("infer", "--checkpoint", tmp_path / "nope.txt",
                       "--dataset", data / "dataset.csv", "--out", tmp_path / "x")
        assert code == 2

    def test_condition_dim_mismatch_exits_2(self, tmp_path):
        data = gen_small(tmp_path)
        run = train_small(tmp_path, data)
        other = gen_small(tmp_path, "other", **{"cond-dim": 8})
        code = run_cli("infer", "--checkpoint", run / "checkpoint.txt",
                       "--dataset", other / "dataset.csv", "--out", tmp_path / "x")
        assert code == 2

    def test_bad_method_exits_2(self, tmp_path):
        data = gen_small(tmp_path)
        run = train_small(tmp_path, data)
        code = run_cli("infer", "--checkpoint", run / "checkpoint.txt",
                       "--dataset", data / "dataset.csv", "--method", "leapfrog",
                       "--out", tmp_path / "x")
        assert code == 2


class TestEval:
    def test_identical_trajectories_zero(self, tmp_path, capsys):
        data = gen_small(tmp_path)
        out = tmp_path / "ev"
        assert run_cli("eval", data / "gt.tum", data / "gt.tum",
                       "--align", "sim3", "--out", out) == 0
        lines = (out / "metrics.csv").read_text().splitlines()
        assert lines[0] == trajeval.METRICS_HEADER
        cells = lines[1].split(",")
        assert float(cells[3]) < 1e-12

    def test_length_mismatch_exits_2(self, tmp_path):
        a = gen_small(tmp_path, "a", n=9)
        b = gen_small(tmp_path, "b", n=8)
        code = run_cli("eval", a / "gt.tum", b / "gt.tum", "--out", tmp_path / "x")
        assert code == 2

    def test_estimates_fill_spread_columns(self, tmp_path):
        data = gen_small(tmp_path)
        run = train_small(tmp_path, data)
        inf = tmp_path / "inf"
        assert run_cli("infer", "--checkpoint", run / "checkpoint.txt",
                       "--dataset", data / "dataset.csv", "--out", inf) == 0
        out = tmp_path / "ev"
        assert run_cli("eval", inf / "est.tum", data / "gt.tum",
                       "--estimates", inf / "estimates.csv", "--out", out) == 0
        cells = (out / "metrics.csv").read_text().splitlines()[1].split(",")
        assert np.isfinite(float(cells[4])) and float(cells[4]) > 0
        assert np.isfinite(float(cells[5])) and float(cells[5]) > 0

    def test_without_estimates_spread_is_nan(self, tmp_path):
        data = gen_small(tmp_path)
        out = tmp_path / "ev"
        assert run_cli("eval", data / "gt.tum", data / "gt.tum", "--out", out) == 0
        cells = (out / "metrics.csv").read_text().splitlines()[1].split(",")
        assert np.isnan(float(cells[4])) and np.isnan(float(cells[5]))

    def test_scale_modes_accepted(self, tmp_path):
        data = gen_small(tmp_path)
        for scale in ("none", "per_pair", "global"):
            out = tmp_path / f"ev_{scale}"
            assert run_cli("eval", data / "gt.tum", data / "gt.tum",
                           "--scale", scale, "--out", out) == 0


class TestAblateSteps:
    def constant_field_checkpoint(self, tmp_path, velocity):
        """A checkpoint whose field is identically `velocity`.

        Final head layers initialize to zero, so setting only the final
        biases makes the network output constant in (state, tau, cond).
        """
        net = vfnet.init_params(RNG(0), vfnet.NetConfig())
        net.head_rot[-1][1][:] = velocity[:3]
        net.head_trans[-1][1][:] = velocity[3:]
        path = tmp_path / "constant.txt"
        vfnet.save_checkpoint(path, net)
        return path

    def test_constant_field_identical_across_steps(self, tmp_path):
        data = gen_small(tmp_path)
        ckpt = self.constant_field_checkpoint(
            tmp_path, np.array([0.0, 0.0, 0.1, 0.2, 0.0, 0.0]))
        out = tmp_path / "abl"
        assert run_cli("ablate-steps", "--checkpoint", ckpt,
                       "--dataset", data / "dataset.csv", "--gt", data / "gt.tum",
                       "--steps", "2,5,10", "--seed", 11, "--out", out) == 0
        lines = (out / "ablation.csv").read_text().splitlines()
        assert lines[0] == "steps,ate_rmse"
        ates = [float(line.split(",")[1]) for line in lines[1:]]
        assert len(ates) == 3
        assert max(ates) - min(ates) < 1e-9

    def test_row_count_matches_step_list(self, tmp_path):
        data = gen_small(tmp_path)
        run = train_small(tmp_path, data)
        out = tmp_path / "abl"
        assert run_cli("ablate-steps", "--checkpoint", run / "checkpoint.txt",
                       "--dataset", data / "dataset.csv", "--gt", data / "gt.tum",
                       "--steps", "1,3,7,9", "--out", out) == 0
        lines = (out / "ablation.csv").read_text().splitlines()
        assert [int(l.split(",")[0]) for l in lines[1:]] == [1, 3, 7, 9]

    def test_bad_step_list_exits_2(self, tmp_path):
        data = gen_small(tmp_path)
        run = train_small(tmp_path, data)
        code = run_cli("ablate-steps", "--checkpoint", run / "checkpoint.txt",
                       "--dataset", data / "dataset.csv", "--gt", data / "gt.tum",
                       "--steps", "2,five", "--out", tmp_path / "x")
        assert code == 2

    def test_gt_length_mismatch_exits_2(self, tmp_path):
        data = gen_small(tmp_path, "a", n=9)
        other = gen_small(tmp_path, "b", n=8)
        run = train_small(tmp_path, data)
        code = run_cli("ablate-steps", "--checkpoint", run / "checkpoint.txt",
                       "--dataset", data / "dataset.csv", "--gt", other / "gt.tum",
                       "--out", tmp_path / "x")
        assert code == 2


class TestTopLevel:
    def test_no_arguments_exits_2(self):
        assert run_cli() == 2

    def test_unknown_command_exits_2(self):
        assert run_cli("transmogrify") == 2

    def test_manifest_references_existing_files(self, tmp_path):
        data = gen_small(tmp_path)
        run = train_small(tmp_path, data)
        for directory in (data, run):
            manifest = json.loads((directory / "manifest.json").read_text())
            for path in list(manifest["inputs"].values()) + \
                    list(manifest["outputs"].values()):
                assert Path(path).is_file()
