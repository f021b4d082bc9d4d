import math
import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from attack.types import AttackConfig
from dataset.rng import Rng
from dataset.services.corpus import CorpusSource, ImagePatch, synth_corpus
from denoiser.arch import ArchConfig, ModelParams
from denoiser.services.checkpoint import load_checkpoint
from denoiser.services.network import init_model
from tensorcore.gradcheck import gradcheck

from .config import TrainConfig, TrainingMode, TrainLog
from .exceptions import EmptyBatchError, InvalidTrainConfigError, TrainingDivergenceError
from .losses import (
    adversarial_inputs, build_loss_graph, combine_terms, hat_loss, hat_pair_terms, hybrid_weights, nt_loss, vat_loss,
)
from .optim import Adam
from .services import split_validation, train
from .tasks import train_and_evaluate

TINY_ARCH = ArchConfig(depth=2, width=2)


def random_batch(seed, size=2, shape=(1, 8, 8), sigma=0.1):
    rng = Rng(seed)
    batch = []
    for _ in range(size):
        x = rng.uniform(shape, low=0.1, high=0.9)
        y = np.clip(x + rng.normal(shape, scale=sigma), 0.0, 1.0)
        batch.append(ImagePatch(x, y))
    return batch


def tiny_config(**overrides):
    settings = dict(epochs=2, batch_size=2, arch=TINY_ARCH, seed=3, attack_iters=1)
    settings.update(overrides)
    return TrainConfig(**settings)


class TrainConfigTests(SimpleTestCase):

    def test_defaults(self):
        cfg = TrainConfig()
        self.assertIs(cfg.mode, TrainingMode.NT)
        self.assertEqual(cfg.eps, 25 / 255)
        self.assertEqual(cfg.alpha, 1.0)
        self.assertEqual(cfg.attack_iters, 1)
        self.assertEqual(cfg.arch, ArchConfig())

    def test_attack_config_scales_with_patch(self):
        attack = TrainConfig().attack_config(32 * 32)
        self.assertAlmostEqual(attack.rho, 5 / 255 * 32)
        self.assertEqual(attack.iters, 1)

    def test_invalid(self):
        for kwargs in ({"alpha": -1.0}, {"eps": 1.5}, {"batch_size": 0}, {"epochs": 0}, {"learning_rate": 0.0}):
            with self.subTest(**kwargs), self.assertRaises(InvalidTrainConfigError):
                TrainConfig(**kwargs)
        with self.assertRaises(ValueError):
            TrainConfig(mode="pgd")

    def test_dict_round_trip(self):
        cfg = TrainConfig(mode="hat", alpha=2.0, arch=ArchConfig(depth=3, width=4), seed=9)
        self.assertEqual(TrainConfig.from_dict(cfg.to_dict()), cfg)


class HybridWeightTests(SimpleTestCase):

    def test_weights_sum_to_one(self):
        for alpha in (0.0, 0.5, 1.0, 2.0, 100.0):
            with self.subTest(alpha=alpha):
                self.assertAlmostEqual(sum(hybrid_weights(alpha)), 1.0, places=15)
        self.assertEqual(hybrid_weights(0.0), (1.0, 0.0))

    def test_hand_evaluated_pair(self):
        clean_sq = (0.5 - 0.4) ** 2
        consistency_sq = (0.5 - 0.6) ** 2
        self.assertAlmostEqual(combine_terms(clean_sq, consistency_sq, 1.0), 0.005, places=15)


class LossTests(SimpleTestCase):

    def setUp(self):
        self.attack = AttackConfig.per_pixel(5 / 255, 64, iters=1)

    def test_identity_denoiser(self):
        batch = random_batch(1)
        params = ModelParams.zeros(TINY_ARCH)
        expected = 0.5 * np.mean([np.sum((p.noisy - p.clean) ** 2) for p in batch])
        self.assertAlmostEqual(nt_loss(params, batch), expected, places=14)

    def test_zero_noise_zero_loss(self):
        x = Rng(2).uniform((1, 6, 6))
        self.assertEqual(nt_loss(ModelParams.zeros(TINY_ARCH), [ImagePatch(x, x)]), 0.0)

    def test_hat_without_alpha_is_nt(self):
        for seed in range(100):
            params = init_model(TINY_ARCH, seed)
            batch = random_batch(1000 + seed)
            with self.subTest(seed=seed):
                self.assertEqual(hat_loss(params, batch, self.attack, 0.0), nt_loss(params, batch))

    def test_vat_without_budget_is_nt(self):
        params = init_model(TINY_ARCH, 5)
        batch = random_batch(6, size=3)
        self.assertEqual(vat_loss(params, batch, AttackConfig(rho=0.0, iters=3)), nt_loss(params, batch))

    def test_vat_loss_dominates_nt_loss(self):
        arch = ArchConfig(depth=3, width=4)
        for seed in range(20):
            params = init_model(arch, 300 + seed)
            batch = random_batch(400 + seed, size=3)
            for iters in (1, 5):
                attack = AttackConfig.per_pixel(5 / 255, 64, iters=iters)
                with self.subTest(seed=seed, iters=iters):
                    self.assertGreaterEqual(vat_loss(params, batch, attack), nt_loss(params, batch))

    def test_hat_is_convex_combination(self):
        params = init_model(ArchConfig(depth=3, width=4), 7)
        for seed in range(5):
            batch = random_batch(20 + seed, size=1)
            y_adv = adversarial_inputs(params, batch, self.attack)[0]
            clean_sq, consistency_sq = hat_pair_terms(params, batch[0].clean, batch[0].noisy, y_adv)
            doubled = 2.0 * hat_loss(params, batch, self.attack, 1.0)
            with self.subTest(seed=seed):
                self.assertLessEqual(min(clean_sq, consistency_sq), doubled * (1 + 1e-12))
                self.assertGreaterEqual(max(clean_sq, consistency_sq), doubled * (1 - 1e-12))

    def test_threads_do_not_change_loss(self):
        params = init_model(TINY_ARCH, 8)
        batch = random_batch(9, size=4)
        self.assertEqual(
            hat_loss(params, batch, self.attack, 1.0, threads=1),
            hat_loss(params, batch, self.attack, 1.0, threads=3),
        )

    def test_gradients_match_finite_differences(self):
        params = init_model(ArchConfig(depth=3, width=3), 10)
        batch = random_batch(11)
        cases = [
            (TrainingMode.NT, None, 0.0),
            (TrainingMode.VAT, self.attack, 0.0),
            (TrainingMode.HAT, self.attack, 1.0),
        ]
        for mode, attack, alpha in cases:
            graph, loss, leaves = build_loss_graph(params, batch, mode, attack, alpha)
            for leaf in leaves:
                coords = range(0, leaf.value.size, max(1, leaf.value.size // 6))
                with self.subTest(mode=mode.value, leaf=leaf.name):
                    self.assertLess(gradcheck(graph, leaf, output=loss, coords=coords), 1e-4)

    def test_empty_batch(self):
        params = ModelParams.zeros(TINY_ARCH)
        with self.assertRaises(EmptyBatchError):
            nt_loss(params, [])
        with self.assertRaises(EmptyBatchError):
            hat_loss(params, [], self.attack, 1.0)


class AdamTests(SimpleTestCase):

    def test_cosine_schedule(self):
        optimizer = Adam(1e-3, 10)
        self.assertEqual(optimizer.learning_rate_at(0), 1e-3)
        self.assertAlmostEqual(optimizer.learning_rate_at(5), 0.5e-3, places=15)
        self.assertAlmostEqual(optimizer.learning_rate_at(10), 0.0, places=15)

    def test_first_step_moves_by_learning_rate(self):
        params = ModelParams.zeros(TINY_ARCH)
        grads = [np.full(t.shape, 2.0) for t in params.tensors()]
        updated = Adam(1e-3, 100).step(params, grads)
        for tensor in updated.tensors():
            np.testing.assert_allclose(tensor, -1e-3, rtol=1e-7)

    def test_returns_new_params(self):
        params = init_model(TINY_ARCH, 1)
        grads = [np.ones(t.shape) for t in params.tensors()]
        updated = Adam(1e-2, 5).step(params, grads)
        self.assertTrue(params.same_bytes(init_model(TINY_ARCH, 1)))
        self.assertFalse(updated.same_bytes(params))

    def test_invalid(self):
        with self.assertRaises(InvalidTrainConfigError):
            Adam(0.0, 10)


class TrainTests(SimpleTestCase):

    def setUp(self):
        self.corpus = synth_corpus(6, 8, 0)

    def test_log_has_one_row_per_epoch(self):
        _, log = train(self.corpus, tiny_config(epochs=3))
        self.assertEqual([row.epoch for row in log.rows], [0, 1, 2])
        self.assertTrue(all(math.isfinite(row.loss) for row in log.rows))

    def test_deterministic(self):
        for mode in (TrainingMode.NT, TrainingMode.HAT):
            cfg = tiny_config(mode=mode)
            first_params, first_log = train(self.corpus, cfg)
            second_params, second_log = train(self.corpus, cfg)
            with self.subTest(mode=mode.value):
                self.assertTrue(first_params.same_bytes(second_params))
                self.assertEqual(first_log.deterministic_rows(), second_log.deterministic_rows())

    def test_hat_without_alpha_trains_like_nt(self):
        nt_params, nt_log = train(self.corpus, tiny_config(mode=TrainingMode.NT))
        hat_params, hat_log = train(self.corpus, tiny_config(mode=TrainingMode.HAT, alpha=0.0))
        self.assertTrue(nt_params.same_bytes(hat_params))
        self.assertEqual(nt_log.deterministic_rows(), hat_log.deterministic_rows())

    def test_vat_trains(self):
        params, log = train(self.corpus, tiny_config(mode=TrainingMode.VAT))
        self.assertEqual(len(log.rows), 2)
        self.assertTrue(all(np.all(np.isfinite(t)) for t in params.tensors()))

    def test_empty_corpus(self):
        from dataset.exceptions import EmptyCorpusError
        with self.assertRaises(EmptyCorpusError):
            train([], tiny_config())

    def test_divergence_names_epoch_and_step(self):
        def diverging(params, batch, *args):
            return math.nan, [np.zeros(t.shape) for t in params.tensors()]

        with mock.patch("training.services.loss_and_grads", diverging):
            with self.assertRaises(TrainingDivergenceError) as ctx:
                train(self.corpus, tiny_config())
        self.assertEqual((ctx.exception.epoch, ctx.exception.step), (0, 0))

    def test_validation_split(self):
        corpus = synth_corpus(8, 8, 1)
        train_part, val_part = split_validation(corpus, 1 / 8)
        self.assertEqual((len(train_part), len(val_part)), (7, 1))
        self.assertIs(val_part[0], corpus[-1])

    def test_single_patch_validates_on_training_data(self):
        corpus = synth_corpus(1, 8, 1)
        with self.assertLogs("training.services", level="WARNING"):
            train_part, val_part = split_validation(corpus, 1 / 8)
        self.assertEqual(train_part, val_part)


class TrainLogTests(SimpleTestCase):

    def test_csv(self):
        _, log = train(synth_corpus(3, 8, 2), tiny_config(epochs=1))
        with tempfile.TemporaryDirectory() as tmp:
            path = log.write_csv(Path(tmp) / "log.csv")
            lines = path.read_text().splitlines()
        self.assertEqual(lines[0], "epoch,loss,psnr_val,seconds")
        self.assertEqual(len(lines), 2)

    def test_dict_round_trip(self):
        _, log = train(synth_corpus(3, 8, 2), tiny_config(epochs=1))
        self.assertEqual(TrainLog.from_dicts(log.to_dicts()).rows, log.rows)


class TrainAndEvaluateTaskTests(SimpleTestCase):

    def test_writes_artifacts_and_returns_rows(self):
        protocol = {"eps_hats": ["15/255"], "columns": ["gaussian", "atk-5"], "repeats": 1, "attack_iters": 2}
        with tempfile.TemporaryDirectory() as tmp:
            result = train_and_evaluate.delay(
                train_source=CorpusSource(count=4, size=8, seed=1).to_dict(),
                eval_source=CorpusSource(count=2, size=8, seed=2, name="eval").to_dict(),
                train_config=tiny_config(epochs=1).to_dict(),
                protocol=protocol,
                section="alpha=1",
                eval_seed=0,
                out_dir=tmp,
            ).get()
            self.assertTrue(Path(result["checkpoint"]).exists())
            self.assertTrue((Path(tmp) / "alpha_1_train_log.csv").exists())
            load_checkpoint(result["checkpoint"])
        self.assertEqual([row["column"] for row in result["rows"]], ["gaussian", "atk-5"])
        self.assertEqual({row["section"] for row in result["rows"]}, {"alpha=1"})
        self.assertEqual({row["corpus"] for row in result["rows"]}, {"eval"})
        self.assertEqual(len(result["log"]), 1)
