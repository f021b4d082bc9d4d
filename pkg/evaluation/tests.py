import json
import math
import tempfile
from dataclasses import replace
from pathlib import Path
from unittest import mock

import numpy as np
from django.test import SimpleTestCase, tag

from attack.services import adv_objective, obsatk
from attack.types import AttackConfig, AttackResult
from dataset.rng import Rng, SeedDomain, derive_seed
from dataset.services.corpus import CorpusSource, ImagePatch, synth_corpus
from denoiser.arch import ArchConfig, ModelParams
from denoiser.services.network import denoise, init_model
from training.config import TrainConfig, TrainingMode
from training.services import train

from .exceptions import EnergyBudgetViolation, EvaluationError, InvalidProtocolError
from .metrics import psnr
from .protocol import Column, ColumnKind, EvalProtocol, EvalReport, EvalRow
from .reports import report_json, write_csv, write_json
from .services import ablation_sweep, aggregate, compare_regimes, corrupt, evaluate


def flat_patches(count, size=64, value=0.5):
    return [ImagePatch(np.full((1, size, size), value)) for _ in range(count)]


class PsnrTests(SimpleTestCase):

    def test_unit_values(self):
        self.assertAlmostEqual(psnr(np.zeros((1, 4, 4)), np.full((1, 4, 4), 0.1)), 20.0, delta=1e-12)
        self.assertEqual(psnr(np.zeros((1, 4, 4)), np.ones((1, 4, 4))), 0.0)

    def test_identical(self):
        a = Rng(1).uniform((1, 5, 5))
        self.assertEqual(psnr(a, a), math.inf)

    def test_symmetry_and_shift(self):
        rng = Rng(2)
        a, b = rng.uniform((1, 8, 8), low=0.2, high=0.7), rng.uniform((1, 8, 8), low=0.2, high=0.7)
        self.assertEqual(psnr(a, b), psnr(b, a))
        self.assertAlmostEqual(psnr(a + 0.1, b + 0.1), psnr(a, b), places=9)

    def test_peak(self):
        self.assertAlmostEqual(psnr(np.zeros(4), np.ones(4), peak=10.0), 20.0, places=12)

    def test_errors(self):
        with self.assertRaises(EvaluationError):
            psnr(np.zeros((1, 4, 4)), np.zeros((1, 4, 5)))
        with self.assertRaises(EvaluationError):
            psnr(np.zeros(3), np.zeros(3), peak=0.0)


class ProtocolTests(SimpleTestCase):

    def test_columns(self):
        self.assertIs(Column.parse("gaussian").kind, ColumnKind.GAUSSIAN)
        self.assertIs(Column.parse("uniform").kind, ColumnKind.UNIFORM)
        atk = Column.parse("atk-5")
        self.assertTrue(atk.is_attack)
        self.assertEqual(atk.share, 5 / 255)
        self.assertEqual(Column.parse("atk-2.5").share, 2.5 / 255)
        for bad in ("atk-x", "laplace", "atk5"):
            with self.subTest(column=bad), self.assertRaises(InvalidProtocolError):
                Column.parse(bad)

    def test_defaults(self):
        protocol = EvalProtocol()
        self.assertEqual([c.label for c in protocol.columns], ["gaussian", "atk-5", "atk-7"])
        self.assertEqual(protocol.attack_iters, 5)
        self.assertEqual(protocol.repeats, 3)

    def test_attack_share_cannot_exceed_level(self):
        with self.assertRaises(InvalidProtocolError) as ctx:
            EvalProtocol(eps_hats="10/255,25/255", columns="gaussian,atk-15")
        self.assertIn("10/255", str(ctx.exception))

    def test_invalid(self):
        for kwargs in ({"columns": ""}, {"eps_hats": ""}, {"repeats": 0}, {"columns": "gaussian,gaussian"}):
            with self.subTest(**kwargs), self.assertRaises(InvalidProtocolError):
                EvalProtocol(**kwargs)

    def test_dict_round_trip(self):
        protocol = EvalProtocol(eps_hats="25/255,15/255", columns="gaussian,uniform,atk-3", repeats=2)
        self.assertEqual(EvalProtocol.from_dict(protocol.to_dict()), protocol)


class AggregateTests(SimpleTestCase):

    def test_population_std(self):
        self.assertEqual(aggregate([1.0, 3.0]), (2.0, 1.0))
        self.assertEqual(aggregate([5.0]), (5.0, 0.0))

    def test_infinite(self):
        self.assertEqual(aggregate([math.inf, math.inf]), (math.inf, 0.0))
        self.assertEqual(aggregate([math.inf, 30.0]), (math.inf, math.inf))


class EvaluateTests(SimpleTestCase):

    def setUp(self):
        self.params = init_model(ArchConfig(depth=3, width=4), 1)
        self.corpus = synth_corpus(3, 16, 4)

    def test_identity_denoiser_matches_noise_level(self):
        protocol = EvalProtocol(eps_hats="15/255", columns="gaussian", repeats=1)
        report = evaluate(ModelParams.zeros(ArchConfig(depth=2, width=2)), flat_patches(4), protocol, seed=0)
        self.assertAlmostEqual(report.rows[0].psnr_mean, 20 * math.log10(255 / 15), delta=0.3)

    def test_identity_denoiser_scores_the_capped_draw(self):
        identity = ModelParams.zeros(ArchConfig(depth=2, width=2))
        patches = flat_patches(6, size=32)
        capped = EvalProtocol(eps_hats="15/255", columns="gaussian", repeats=1)
        report = evaluate(identity, patches, capped, seed=3)

        floor = 20 * math.log10(255 / 15)
        scores = []
        for index, patch in enumerate(patches):
            rng = Rng(derive_seed(3, SeedDomain.EVAL_NOISE, 0, 0, index))
            y, _ = corrupt(patch, 15 / 255, capped.columns[0], capped, rng)
            self.assertLessEqual(np.linalg.norm(y - patch.clean), 15 / 255 * 32 * (1 + 1e-12))
            scores.append(psnr(y, patch.clean))
            self.assertGreaterEqual(scores[-1], floor - 1e-9)
        self.assertAlmostEqual(report.rows[0].psnr_mean, float(np.mean(scores)), places=10)

        uncapped = evaluate(identity, patches, replace(capped, cap_energy=False), seed=3)
        self.assertGreaterEqual(report.rows[0].psnr_mean, uncapped.rows[0].psnr_mean)

    def test_zero_budget_column_equals_gaussian(self):
        protocol = EvalProtocol(eps_hats="15/255", columns="gaussian,atk-0", repeats=2)
        report = evaluate(self.params, self.corpus, protocol, seed=5)
        self.assertEqual(report.rows[0].psnr_mean, report.rows[1].psnr_mean)
        self.assertEqual(report.rows[0].psnr_std, report.rows[1].psnr_std)

    def test_report_is_complete_and_ordered(self):
        protocol = EvalProtocol(eps_hats="25/255,15/255", columns="gaussian,uniform,atk-5", repeats=2,
                                attack_iters=2)
        report = evaluate(self.params, self.corpus, protocol, seed=1, corpus_name="synth")
        self.assertEqual(
            [(r.eps_hat, r.column) for r in report.rows],
            [(e, c) for e in ("25/255", "15/255") for c in ("gaussian", "uniform", "atk-5")],
        )
        self.assertTrue(all(r.psnr_std > 0 for r in report.rows))
        self.assertEqual({r.corpus for r in report.rows}, {"synth"})

    def test_single_repeat_has_zero_std(self):
        report = evaluate(self.params, self.corpus, EvalProtocol(repeats=1, attack_iters=1), seed=1)
        self.assertEqual(len(report.rows), 3)
        self.assertTrue(all(r.psnr_std == 0.0 for r in report.rows))

    def test_deterministic_and_thread_independent(self):
        protocol = EvalProtocol(repeats=2, attack_iters=2)
        first = evaluate(self.params, self.corpus, protocol, seed=3)
        second = evaluate(self.params, self.corpus, protocol, seed=3)
        threaded = evaluate(self.params, self.corpus, EvalProtocol(repeats=2, attack_iters=2, threads=3), seed=3)
        self.assertEqual(first.rows, second.rows)
        self.assertEqual(first.rows, threaded.rows)

    def test_capped_base_noise(self):
        patch = flat_patches(1, size=32)[0]
        protocol = EvalProtocol()
        for column in ("gaussian", "uniform", "atk-5"):
            y, level = corrupt(patch, 15 / 255, Column.parse(column), protocol, Rng(7))
            with self.subTest(column=column):
                self.assertLessEqual(np.linalg.norm(y - patch.clean), level * 32 * (1 + 1e-12))
                self.assertGreaterEqual(y.min(), 0.0)
                self.assertLessEqual(y.max(), 1.0)
        self.assertAlmostEqual(corrupt(patch, 15 / 255, Column.parse("atk-5"), protocol, Rng(7))[1], 10 / 255)

    def test_energy_violation_is_reported(self):
        def oversized(params, x, y, cfg):
            delta = np.full_like(y, 0.5)
            return AttackResult(delta=delta, pre_clip_delta=delta, objective_trace=(0.0,))

        protocol = EvalProtocol(columns="atk-5", repeats=1)
        with mock.patch("evaluation.services.obsatk", oversized):
            with self.assertRaises(EnergyBudgetViolation) as ctx:
                evaluate(self.params, self.corpus, protocol, seed=0)
        self.assertGreater(ctx.exception.norm, ctx.exception.bound)

    def test_empty_corpus(self):
        from dataset.exceptions import EmptyCorpusError
        with self.assertRaises(EmptyCorpusError):
            evaluate(self.params, [], EvalProtocol(), seed=0)


class ReportTests(SimpleTestCase):

    def setUp(self):
        self.report = EvalReport([
            EvalRow("synth", "15/255", "gaussian", 30.5, 0.25),
            EvalRow("synth", "15/255", "atk-5", math.inf, 0.0),
            EvalRow("synth", "15/255", "atk-7", 25.125, 0.5),
        ])

    def test_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            lines = write_csv(self.report, Path(tmp) / "report.csv").read_text().splitlines()
        self.assertEqual(lines[0], "corpus,eps_hat,column,psnr_mean,psnr_std")
        self.assertEqual(len(lines), 4)
        self.assertEqual(lines[2], "synth,15/255,atk-5,inf,0.0000")

    def test_sectioned_csv(self):
        report = EvalReport([EvalRow("synth", "15/255", "gaussian", 30.0, 0.0, "alpha=1")])
        with tempfile.TemporaryDirectory() as tmp:
            lines = write_csv(report, Path(tmp) / "report.csv").read_text().splitlines()
        self.assertTrue(lines[0].endswith(",section"))
        self.assertTrue(lines[1].endswith(",alpha=1"))

    def test_json_marks_exact_rows(self):
        rows = report_json(self.report, {"seed": 1})["rows"]
        self.assertIsNone(rows[1]["psnr_mean"])
        self.assertTrue(rows[1]["exact"])
        self.assertFalse(rows[0]["exact"])
        with tempfile.TemporaryDirectory() as tmp:
            payload = json.loads(write_json(self.report, Path(tmp) / "report.json", {"seed": 1}).read_text())
        self.assertEqual(payload["metadata"], {"seed": 1})

    def test_cell_lookup(self):
        self.assertEqual(self.report.cell("15/255", "atk-7").psnr_mean, 25.125)
        with self.assertRaises(KeyError):
            self.report.cell("25/255", "atk-7")


class SweepTests(SimpleTestCase):

    def setUp(self):
        self.train_source = CorpusSource(count=4, size=8, seed=1)
        self.eval_source = CorpusSource(count=2, size=8, seed=2)
        self.base = TrainConfig(epochs=1, batch_size=2, arch=ArchConfig(depth=2, width=2), seed=4)
        self.protocol = EvalProtocol(columns="gaussian,atk-5", repeats=1, attack_iters=2)

    def test_zero_alpha_reproduces_normal_training(self):
        sweep = ablation_sweep(self.train_source, self.eval_source, "alpha", [0], self.base, self.protocol)
        baseline = compare_regimes(self.train_source, self.eval_source, ["nt"], self.base, self.protocol)
        self.assertEqual(sweep.sections, ["alpha=0"])
        self.assertEqual(
            [(r.psnr_mean, r.psnr_std) for r in sweep.rows],
            [(r.psnr_mean, r.psnr_std) for r in baseline.rows],
        )

    def test_rho_sections(self):
        report = ablation_sweep(self.train_source, self.eval_source, "rho", ["0/255", "5/255"], self.base,
                                self.protocol)
        self.assertEqual(report.sections, ["rho=0/255", "rho=5/255"])
        self.assertEqual(len(report.rows), 4)

    def test_invalid_sweep(self):
        with self.assertRaises(InvalidProtocolError):
            ablation_sweep(self.train_source, self.eval_source, "depth", [1], self.base, self.protocol)
        with self.assertRaises(InvalidProtocolError):
            ablation_sweep(self.train_source, self.eval_source, "alpha", [], self.base, self.protocol)

    def test_compare_with_training_repeats(self):
        report = compare_regimes(self.train_source, self.eval_source, ["nt", "hat"], self.base, self.protocol,
                                 train_repeats=2)
        self.assertEqual(report.sections, ["nt", "hat"])
        self.assertEqual(len(report.rows), 4)
        self.assertTrue(all(r.psnr_std >= 0 for r in report.rows))


@tag("acceptance")
class DeskScaleAcceptanceTests(SimpleTestCase):
    """Directional checks on desk-scale models (minutes of CPU each)."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.train_corpus = synth_corpus(128, 32, 11)
        cls.eval_corpus = synth_corpus(16, 32, 12)
        cls.protocol = EvalProtocol(eps_hats="15/255", columns="gaussian,atk-5,atk-7", repeats=1)
        cls.base = TrainConfig(epochs=30, seed=7)
        cls.params, cls.logs, cls.reports = {}, {}, {}
        for mode in (TrainingMode.NT, TrainingMode.VAT, TrainingMode.HAT):
            cls.params[mode], cls.logs[mode] = train(cls.train_corpus, replace(cls.base, mode=mode))
            cls.reports[mode] = evaluate(cls.params[mode], cls.eval_corpus, cls.protocol, seed=7)
        identity = ModelParams.zeros(cls.base.arch)
        cls.noisy_input = evaluate(identity, cls.eval_corpus, cls.protocol, seed=7)

    def psnr_of(self, mode, column):
        return self.reports[mode].cell("15/255", column).psnr_mean

    def test_normal_training_beats_noisy_input(self):
        noisy = self.noisy_input.cell("15/255", "gaussian").psnr_mean
        self.assertGreaterEqual(self.psnr_of(TrainingMode.NT, "gaussian"), noisy + 3.0)

    def test_denoise_improves_every_regime(self):
        for mode, params in self.params.items():
            restored, observed = [], []
            for index, patch in enumerate(self.eval_corpus):
                rng = Rng(derive_seed(7, SeedDomain.ATTACK_NOISE, index))
                y = np.clip(patch.clean + rng.normal(patch.shape, scale=15 / 255), 0.0, 1.0)
                restored.append(psnr(denoise(params, y), patch.clean))
                observed.append(psnr(y, patch.clean))
            with self.subTest(mode=mode.value):
                self.assertGreater(np.mean(restored), np.mean(observed))

    def test_attack_raises_error_on_trained_model(self):
        params = self.params[TrainingMode.NT]
        patches = synth_corpus(40, 32, 12)
        raised = 0
        for index, patch in enumerate(patches):
            x = patch.clean
            rng = Rng(derive_seed(7, SeedDomain.ATTACK_NOISE, index))
            y = np.clip(x + rng.normal(x.shape, scale=10 / 255), 0.0, 1.0)
            result = obsatk(params, x, y, AttackConfig.per_pixel(5 / 255, x.size, iters=5))
            if adv_objective(params, y, result.delta, x) > adv_objective(params, y, np.zeros_like(y), x):
                raised += 1
        self.assertGreaterEqual(raised, 0.95 * len(patches))

    def test_training_loss_is_finite_and_decreasing(self):
        for mode in (TrainingMode.VAT, TrainingMode.HAT):
            losses = [row.loss for row in self.logs[mode].rows]
            with self.subTest(mode=mode.value):
                self.assertEqual(len(losses), self.base.epochs)
                self.assertTrue(all(math.isfinite(loss) for loss in losses))
                self.assertLess(losses[-1], losses[0])
                self.assertLess(np.mean(losses[-5:]), np.mean(losses[:5]))

    def test_attack_degrades_normal_training(self):
        self.assertLessEqual(self.psnr_of(TrainingMode.NT, "atk-5"), self.psnr_of(TrainingMode.NT, "gaussian") - 1.0)
        self.assertGreater(self.psnr_of(TrainingMode.NT, "atk-5"), self.psnr_of(TrainingMode.NT, "atk-7"))

    def test_hybrid_training_defends(self):
        self.assertGreaterEqual(self.psnr_of(TrainingMode.HAT, "atk-5"), self.psnr_of(TrainingMode.NT, "atk-5") + 0.5)
        self.assertGreaterEqual(
            self.psnr_of(TrainingMode.HAT, "gaussian"), self.psnr_of(TrainingMode.NT, "gaussian") - 1.5
        )

    def test_adversarial_training_ordering(self):
        self.assertGreater(self.psnr_of(TrainingMode.VAT, "atk-5"), self.psnr_of(TrainingMode.NT, "atk-5"))
        self.assertGreaterEqual(self.psnr_of(TrainingMode.HAT, "atk-5"), self.psnr_of(TrainingMode.VAT, "atk-5") - 0.2)

    def test_alpha_sweep_trend(self):
        # alpha = 0 trains bit-identically to nt (see SweepTests), so the nt model is that endpoint
        for column in ("atk-5", "atk-7"):
            with self.subTest(column=column):
                self.assertGreaterEqual(self.psnr_of(TrainingMode.HAT, column), self.psnr_of(TrainingMode.NT, column))

    def test_rho_sweep_trend(self):
        # a zero training budget leaves y' = y, reducing both adversarial modes to nt up to loss scale
        for mode in (TrainingMode.VAT, TrainingMode.HAT):
            with self.subTest(mode=mode.value):
                self.assertGreater(self.psnr_of(mode, "atk-5"), self.psnr_of(TrainingMode.NT, "atk-5"))
