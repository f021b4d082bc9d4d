import csv
import io
import json
import os
import tempfile
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from dataset.noise import parse_noise_level
from dataset.utils.netpbm import read_image, write_image
from denoiser.arch import ArchConfig
from denoiser.services.checkpoint import save_checkpoint
from denoiser.services.network import init_model
from obsdn import __version__
from training.config import TrainingMode

from .artifacts import config_snapshot, plain_value
from .config import merge_options, parse_config_text, render_config
from .exceptions import ConfigFileError
from .runner import run
from .serializers import (
    EvalCommandSerializer, SweepSerializer, TrainCommandSerializer, config_key, protocol_from, train_config_from,
)
from .services.selftest import run_selftest

TINY_TRAIN = [
    "--depth", "2", "--width", "2", "--epochs", "1", "--count", "4", "--size", "8", "--batch-size", "2",
]


def obsdn(*argv):
    """Run the CLI and return (exit code, stdout, stderr)."""
    stdout, stderr = io.StringIO(), io.StringIO()
    with redirect_stdout(stdout), redirect_stderr(stderr):
        code = run([str(arg) for arg in argv])
    return code, stdout.getvalue(), stderr.getvalue()


def read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


class TempDirMixin:

    def setUp(self):
        super().setUp()
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.tmp = Path(tmp.name)

    def tiny_checkpoint(self, seed=1):
        return save_checkpoint(init_model(ArchConfig(depth=2, width=2), seed), self.tmp / "tiny.obsd")


class ConfigFileTests(SimpleTestCase):

    def test_parse_comments_and_dashes(self):
        values = parse_config_text("# run\nmode = hat\n\neps-hat = 25/255  # level\nrepeats=1\n")
        self.assertEqual(values, {"mode": "hat", "eps_hat": "25/255", "repeats": "1"})

    def test_missing_equals(self):
        with self.assertRaises(ConfigFileError) as ctx:
            parse_config_text("mode = hat\nalpha\n")
        self.assertEqual(ctx.exception.line, 2)

    def test_malformed_line_after_blank_lines(self):
        with self.assertRaises(ConfigFileError) as ctx:
            parse_config_text("mode = hat\n\n# note\nfoo bar\n")
        self.assertEqual(ctx.exception.line, 4)

    def test_quoted_values(self):
        values = parse_config_text("out = 'runs/a b'\ncolumns = \"gaussian,atk-5\"\n")
        self.assertEqual(values, {"out": "runs/a b", "columns": "gaussian,atk-5"})

    def test_duplicate_key(self):
        with self.assertRaises(ConfigFileError) as ctx:
            parse_config_text("alpha = 1\nalpha = 2\n")
        self.assertEqual(ctx.exception.key, "alpha")
        self.assertEqual(ctx.exception.line, 2)

    def test_duplicate_after_dash_normalisation(self):
        with self.assertRaises(ConfigFileError) as ctx:
            parse_config_text("eps-hat = 1\neps_hat = 2\n")
        self.assertEqual(ctx.exception.key, "eps_hat")

    def test_invalid_key(self):
        with self.assertRaises(ConfigFileError):
            parse_config_text("Alpha! = 1\n")

    def test_flags_override_file(self):
        merged = merge_options({"alpha": "1", "mode": "hat"}, {"alpha": "2", "mode": None})
        self.assertEqual(merged, {"alpha": "2", "mode": "hat"})

    def test_render_round_trip(self):
        values = {"mode": "hat", "eps": "25/255"}
        self.assertEqual(parse_config_text(render_config(values, header="obsdn train")), values)

    def test_render_keeps_hash_in_values(self):
        values = {"out": "runs/#3 x"}
        self.assertEqual(parse_config_text(render_config(values)), values)


class SerializerTests(SimpleTestCase):

    def test_train_defaults(self):
        serializer = TrainCommandSerializer(data={})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        cfg = train_config_from(serializer.validated_data)
        self.assertIs(cfg.mode, TrainingMode.NT)
        self.assertEqual(cfg.eps, 25 / 255)
        self.assertEqual(cfg.rho_per_pixel, 5 / 255)
        self.assertEqual(cfg.arch.depth, 5)
        self.assertEqual(cfg.arch.width, 16)

    def test_train_values(self):
        serializer = TrainCommandSerializer(data={"mode": "hat", "alpha": "0.5", "eps": "0.1", "channels": "3"})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        cfg = train_config_from(serializer.validated_data)
        self.assertIs(cfg.mode, TrainingMode.HAT)
        self.assertEqual(cfg.alpha, 0.5)
        self.assertEqual(cfg.eps, 0.1)
        self.assertEqual(cfg.arch.channels_in, 3)

    def test_unknown_key(self):
        serializer = TrainCommandSerializer(data={"mode": "hat", "sigma_max": "1"})
        self.assertFalse(serializer.is_valid())
        self.assertIn("sigma_max", serializer.errors)

    def test_errors_name_the_key(self):
        cases = [
            ({"mode": "adv"}, "mode"),
            ({"eps": "25/0"}, "eps"),
            ({"kernel": "4"}, "kernel"),
            ({"alpha": "-1"}, "alpha"),
            ({"step_rule": "raw"}, "eta"),
        ]
        for data, key in cases:
            with self.subTest(key=key):
                serializer = TrainCommandSerializer(data=data)
                self.assertFalse(serializer.is_valid())
                self.assertIn(key, serializer.errors)

    def test_domain_errors_map_to_config_keys(self):
        self.assertEqual(config_key("rho_per_pixel must be >= 0, got -1"), "rho")
        self.assertEqual(config_key("attack_iters must be >= 1, got 0"), "train_iters")
        self.assertEqual(config_key("val_sigma must be >= 0, got -1"), "val_sigma")

    def test_eval_protocol(self):
        serializer = EvalCommandSerializer(data={"ckpt": "m.obsd", "eps_hat": "25/255,15/255", "columns": "gaussian,atk-3"})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        protocol = protocol_from(serializer.validated_data)
        self.assertEqual([level.label for level in protocol.eps_hats], ["25/255", "15/255"])
        self.assertEqual([column.label for column in protocol.columns], ["gaussian", "atk-3"])

    def test_eval_requires_checkpoint(self):
        serializer = EvalCommandSerializer(data={})
        self.assertFalse(serializer.is_valid())
        self.assertIn("ckpt", serializer.errors)

    def test_attack_share_above_noise_level(self):
        serializer = EvalCommandSerializer(data={"ckpt": "m.obsd", "eps_hat": "5/255", "columns": "atk-7"})
        self.assertFalse(serializer.is_valid())
        self.assertIn("columns", serializer.errors)

    def test_bad_column(self):
        serializer = EvalCommandSerializer(data={"ckpt": "m.obsd", "columns": "gaussian,atk-x"})
        self.assertFalse(serializer.is_valid())
        self.assertIn("columns", serializer.errors)

    def test_sweep_grid(self):
        serializer = SweepSerializer(data={"axis": "rho", "grid": "0, 3/255,5/255"})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.validated_data["grid"], ["0", "3/255", "5/255"])
        serializer = SweepSerializer(data={"axis": "alpha", "grid": "1,x"})
        self.assertFalse(serializer.is_valid())
        self.assertIn("grid", serializer.errors)


class ArtifactTests(SimpleTestCase):

    def test_plain_values(self):
        self.assertEqual(plain_value(parse_noise_level("25/255")), "25/255")
        self.assertEqual(plain_value((parse_noise_level("25/255"), parse_noise_level("0.1"))), "25/255,0.1")
        self.assertEqual(plain_value(True), "true")
        self.assertEqual(plain_value(3), 3)

    def test_snapshot_skips_unset(self):
        snapshot = config_snapshot({"eta": None, "mode": "hat", "eps": parse_noise_level("25/255")})
        self.assertEqual(snapshot, {"eps": "25/255", "mode": "hat"})


class RunnerTests(TempDirMixin, SimpleTestCase):

    def test_unknown_command(self):
        code, _, stderr = obsdn("fit")
        self.assertEqual(code, 2)
        self.assertIn("unknown command", stderr)

    def test_no_command(self):
        self.assertEqual(obsdn()[0], 2)

    @mock.patch.dict(os.environ, {"COLUMNS": "1000"})
    def test_help_lists_every_key_with_default(self):
        code, stdout, _ = obsdn("eval", "--help")
        self.assertEqual(code, 0)
        text = " ".join(stdout.split())
        for key in EvalCommandSerializer().fields:
            self.assertIn("--" + key.replace("_", "-"), text)
        self.assertIn("(default: 15/255)", text)
        self.assertIn("(default: gaussian,atk-5,atk-7)", text)
        self.assertIn("(required)", text)

    def test_unknown_config_key_exits_2(self):
        config = self.tmp / "run.cfg"
        config.write_text("mode = hat\nsigma_max = 3\n")
        code, _, stderr = obsdn("train", "--config", config, "--out", self.tmp / "out")
        self.assertEqual(code, 2)
        self.assertIn("sigma_max", stderr)

    def test_invalid_flag_value_exits_2(self):
        code, _, stderr = obsdn("train", "--eps", "abc", "--out", self.tmp / "out")
        self.assertEqual(code, 2)
        self.assertIn("eps", stderr)

    def test_unreadable_config_exits_2(self):
        code, _, _ = obsdn("train", "--config", self.tmp / "missing.cfg")
        self.assertEqual(code, 2)

    def test_missing_checkpoint_exits_1(self):
        code, _, stderr = obsdn("eval", "--ckpt", self.tmp / "missing.obsd", "--out", self.tmp / "out")
        self.assertEqual(code, 1)
        self.assertIn("eval failed", stderr)


class SelftestTests(SimpleTestCase):

    def test_all_checks_pass(self):
        results = run_selftest(0)
        self.assertTrue(all(result.passed for result in results), [r for r in results if not r.passed])
        names = {result.name for result in results}
        for name in ("gradcheck conv2d", "gradcheck relu", "gradcheck sq_norm", "gradcheck adv_objective",
                     "gradcheck hat loss", "hat(alpha=0) == nt", "projection suite"):
            self.assertIn(name, names)

    def test_command_exits_0(self):
        code, stdout, _ = obsdn("selftest")
        self.assertEqual(code, 0)
        self.assertIn("checks passed", stdout)
        self.assertNotIn("FAIL", stdout)


class TrainCommandTests(TempDirMixin, SimpleTestCase):

    def test_identical_checkpoints(self):
        args = ["train", "--mode", "hat", "--alpha", "1", "--eps", "25/255", "--seed", "7", *TINY_TRAIN]
        self.assertEqual(obsdn(*args, "--out", self.tmp / "a")[0], 0)
        self.assertEqual(obsdn(*args, "--out", self.tmp / "b")[0], 0)
        first = (self.tmp / "a" / "model.obsd").read_bytes()
        self.assertEqual(first, (self.tmp / "b" / "model.obsd").read_bytes())

    def test_artifacts(self):
        code, _, _ = obsdn("train", "--seed", "3", *TINY_TRAIN, "--out", self.tmp / "run")
        self.assertEqual(code, 0)
        rows = read_rows(self.tmp / "run" / "train_log.csv")
        self.assertEqual(len(rows), 1)
        self.assertEqual(list(rows[0]), ["epoch", "loss", "psnr_val", "seconds"])
        manifest = json.loads((self.tmp / "run" / "manifest.json").read_text())
        self.assertEqual(manifest["command"], "train")
        self.assertEqual(manifest["seed"], 3)
        self.assertEqual(manifest["version"], __version__)
        self.assertEqual(manifest["config"]["eps"], "25/255")
        self.assertIn("model.obsd", manifest["files"])
        self.assertIn("train_log.csv", manifest["files"])

    def test_replay_from_config(self):
        self.assertEqual(obsdn("train", "--seed", "5", *TINY_TRAIN, "--out", self.tmp / "a")[0], 0)
        config = self.tmp / "a" / "config.txt"
        self.assertEqual(obsdn("train", "--config", config, "--out", self.tmp / "b")[0], 0)
        self.assertEqual(
            (self.tmp / "a" / "model.obsd").read_bytes(), (self.tmp / "b" / "model.obsd").read_bytes()
        )


class EvalCommandTests(TempDirMixin, SimpleTestCase):

    def test_three_columns_three_rows(self):
        ckpt = self.tiny_checkpoint()
        code, _, _ = obsdn(
            "eval", "--ckpt", ckpt, "--eps-hat", "15/255", "--columns", "gaussian,atk-5,atk-7",
            "--eval-count", "2", "--size", "8", "--repeats", "1", "--out", self.tmp / "eval",
        )
        self.assertEqual(code, 0)
        rows = read_rows(self.tmp / "eval" / "report.csv")
        self.assertEqual([row["column"] for row in rows], ["gaussian", "atk-5", "atk-7"])
        self.assertTrue(all(row["eps_hat"] == "15/255" for row in rows))
        report = json.loads((self.tmp / "eval" / "report.json").read_text())
        self.assertEqual(len(report["rows"]), 3)

    def test_config_file_with_flag_override(self):
        ckpt = self.tiny_checkpoint()
        config = self.tmp / "eval.cfg"
        config.write_text(f"ckpt = {ckpt}\ncolumns = gaussian\nrepeats = 1\neval_count = 1\nsize = 8\n")
        code, _, _ = obsdn("eval", "--config", config, "--columns", "gaussian,uniform", "--out", self.tmp / "eval")
        self.assertEqual(code, 0)
        rows = read_rows(self.tmp / "eval" / "report.csv")
        self.assertEqual([row["column"] for row in rows], ["gaussian", "uniform"])

    def test_reports_are_reproducible(self):
        ckpt = self.tiny_checkpoint()
        args = ["eval", "--ckpt", ckpt, "--columns", "gaussian,atk-5", "--eval-count", "2", "--size", "8"]
        self.assertEqual(obsdn(*args, "--out", self.tmp / "a")[0], 0)
        self.assertEqual(obsdn(*args, "--out", self.tmp / "b")[0], 0)
        self.assertEqual(
            (self.tmp / "a" / "report.csv").read_bytes(), (self.tmp / "b" / "report.csv").read_bytes()
        )


class AttackCommandTests(TempDirMixin, SimpleTestCase):

    def test_dumps(self):
        ckpt = self.tiny_checkpoint()
        code, _, _ = obsdn(
            "attack", "--ckpt", ckpt, "--eval-count", "1", "--size", "8", "--attack-iters", "2",
            "--out", self.tmp / "atk",
        )
        self.assertEqual(code, 0)
        target = self.tmp / "atk" / "synth_000"
        for name in ("clean", "noisy", "denoised", "adversarial", "denoised_adversarial"):
            self.assertEqual(read_image(target / f"{name}.pgm").shape, (1, 8, 8))
        delta = np.load(target / "delta.npy")
        self.assertEqual(delta.shape, (1, 8, 8))
        self.assertLessEqual(np.linalg.norm(delta), 5 / 255 * 8 * (1 + 1e-10))
        trace = read_rows(target / "objective_trace.csv")
        self.assertEqual([row["step"] for row in trace], ["0", "1", "2"])
        summary = read_rows(self.tmp / "atk" / "summary.csv")
        self.assertEqual([row["image"] for row in summary], ["synth_000"])

    def test_image_directory(self):
        ckpt = self.tiny_checkpoint()
        images = self.tmp / "images"
        images.mkdir()
        write_image(images / "flat.pgm", np.full((1, 8, 8), 0.5))
        code, _, _ = obsdn("attack", "--ckpt", ckpt, "--images", images, "--out", self.tmp / "atk")
        self.assertEqual(code, 0)
        self.assertTrue((self.tmp / "atk" / "flat" / "delta.npy").exists())


class DenoiseCommandTests(TempDirMixin, SimpleTestCase):

    def test_single_file(self):
        ckpt = self.tiny_checkpoint()
        source = write_image(self.tmp / "noisy.pgm", np.linspace(0.0, 1.0, 80).reshape(1, 8, 10))
        code, _, _ = obsdn("denoise", "--ckpt", ckpt, "--input", source, "--out", self.tmp / "out")
        self.assertEqual(code, 0)
        self.assertEqual(read_image(self.tmp / "out" / "noisy_denoised.pgm").shape, (1, 8, 10))

    def test_channel_mismatch_exits_1(self):
        ckpt = self.tiny_checkpoint()
        source = write_image(self.tmp / "color.ppm", np.full((3, 8, 8), 0.5))
        code, _, _ = obsdn("denoise", "--ckpt", ckpt, "--input", source, "--out", self.tmp / "out")
        self.assertEqual(code, 1)


class SweepCommandTests(TempDirMixin, SimpleTestCase):

    def test_alpha_sections(self):
        code, _, _ = obsdn(
            "sweep", "--axis", "alpha", "--grid", "0,1", *TINY_TRAIN, "--columns", "gaussian,atk-5",
            "--eval-count", "2", "--repeats", "1", "--out", self.tmp / "sweep",
        )
        self.assertEqual(code, 0)
        rows = read_rows(self.tmp / "sweep" / "report.csv")
        self.assertEqual([row["section"] for row in rows], ["alpha=0", "alpha=0", "alpha=1", "alpha=1"])
        self.assertTrue((self.tmp / "sweep" / "models" / "alpha_0.obsd").exists())


class CompareCommandTests(TempDirMixin, SimpleTestCase):

    def test_regime_sections(self):
        code, _, _ = obsdn(
            "compare", "--modes", "nt,hat", *TINY_TRAIN, "--columns", "gaussian",
            "--eval-count", "2", "--repeats", "1", "--out", self.tmp / "compare",
        )
        self.assertEqual(code, 0)
        rows = read_rows(self.tmp / "compare" / "report.csv")
        self.assertEqual([row["section"] for row in rows], ["nt", "hat"])
