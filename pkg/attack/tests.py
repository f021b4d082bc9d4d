import math

import numpy as np
from django.test import SimpleTestCase

from dataset.rng import Rng
from denoiser.arch import ArchConfig, ModelParams
from denoiser.services.network import denoise, init_model
from projection import constants
from projection.operators import project_zero_mean
from tensorcore.gradcheck import gradcheck
from tensorcore.graph import Graph

from .exceptions import AttackInputError, BudgetSplitError
from .services import adv_objective, adv_objective_and_grad, budget_split, check_constraints, obsatk, record_objective
from .types import AttackConfig, StepKind, StepRule


def noisy_pair(seed, shape=(1, 8, 8), sigma=0.05):
    rng = Rng(seed)
    x = rng.uniform(shape, low=0.2, high=0.8)
    return x, np.clip(x + rng.normal(shape, scale=sigma), 0.0, 1.0)


class AttackConfigTests(SimpleTestCase):

    def test_defaults(self):
        cfg = AttackConfig(rho=1.0)
        self.assertEqual(cfg.iters, 5)
        self.assertIs(cfg.step_rule.kind, StepKind.NORMALIZED_L2)
        self.assertEqual(cfg.eta, 2.0 / 5)
        self.assertEqual((cfg.p_min, cfg.p_max), (0.0, 1.0))

    def test_per_pixel(self):
        cfg = AttackConfig.per_pixel(5 / 255, 64 * 64, iters=1)
        self.assertAlmostEqual(cfg.rho, 5 / 255 * 64)
        self.assertEqual(cfg.eta, 2.0 * cfg.rho)

    def test_explicit_eta(self):
        self.assertEqual(AttackConfig(rho=1.0, step_rule=StepRule.raw(0.3)).eta, 0.3)

    def test_invalid(self):
        for kwargs in ({"rho": -1.0}, {"rho": 1.0, "iters": 0}, {"rho": 1.0, "p_min": 1.0, "p_max": 1.0}):
            with self.subTest(**kwargs), self.assertRaises(Exception):
                AttackConfig(**kwargs)
        with self.assertRaises(AttackInputError):
            StepRule.raw(-0.1)

    def test_raw_rule_requires_eta(self):
        with self.assertRaises(AttackInputError):
            StepRule(StepKind.RAW)
        with self.assertRaises(AttackInputError):
            StepRule("raw", None)
        self.assertIsNone(StepRule.normalized_l2().eta)


class ObjectiveTests(SimpleTestCase):

    def test_identity_denoiser(self):
        x, y = noisy_pair(1)
        params = ModelParams.zeros(ArchConfig(depth=3, width=4))
        self.assertAlmostEqual(adv_objective(params, y, np.zeros_like(y), x), float(np.sum((y - x) ** 2)), places=14)

    def test_zero_when_target_is_output(self):
        params = init_model(ArchConfig(depth=3, width=4), 2)
        _, y = noisy_pair(2)
        delta = Rng(3).normal(y.shape, scale=0.01)
        target = denoise(params, y + delta)
        self.assertEqual(adv_objective(params, y, delta, target), 0.0)

    def test_gradient_matches_finite_differences(self):
        params = init_model(ArchConfig(depth=3, width=4), 4)
        x, y = noisy_pair(4)
        graph = Graph()
        delta_leaf, _ = record_objective(graph, params, y, Rng(5).normal(y.shape, scale=0.01), x)
        self.assertLess(gradcheck(graph, delta_leaf), 1e-5)

    def test_shape_mismatch(self):
        params = init_model(ArchConfig(depth=2, width=2), 0)
        with self.assertRaises(AttackInputError):
            adv_objective(params, np.zeros((1, 4, 4)), np.zeros((1, 4, 5)), np.zeros((1, 4, 4)))

    def test_value_matches_gradient_call(self):
        params = init_model(ArchConfig(depth=3, width=4), 6)
        x, y = noisy_pair(6)
        delta = np.zeros_like(y)
        self.assertEqual(adv_objective_and_grad(params, y, delta, x)[0], adv_objective(params, y, delta, x))


class ObsAtkTests(SimpleTestCase):

    def setUp(self):
        self.params = init_model(ArchConfig(depth=3, width=6), 7)
        self.x, self.y = noisy_pair(8, shape=(1, 12, 12))

    def test_zero_budget(self):
        result = obsatk(self.params, self.x, self.y, AttackConfig(rho=0.0, iters=4))
        self.assertTrue(np.all(result.delta == 0.0))
        self.assertTrue(np.all(result.pre_clip_delta == 0.0))
        self.assertEqual(len(set(result.objective_trace)), 1)

    def test_constraints_hold(self):
        for rho_over_sqrt_m in (1 / 255, 5 / 255, 50 / 255):
            cfg = AttackConfig.per_pixel(rho_over_sqrt_m, self.y.size, iters=5)
            result = obsatk(self.params, self.x, self.y, cfg)
            with self.subTest(level=rho_over_sqrt_m):
                self.assertLess(abs(result.pre_clip_mean), 1e-10 * max(1.0, cfg.rho))
                self.assertLessEqual(np.linalg.norm(result.pre_clip_delta), cfg.rho * (1 + 1e-10))
                self.assertLessEqual(result.norm, cfg.rho * (1 + 1e-10))
                self.assertTrue(check_constraints(
                    result, cfg.rho, constants.ATTACK_MEAN_TOL, constants.ATTACK_NORM_REL_TOL
                ))
                observed = self.y + result.delta
                self.assertGreaterEqual(observed.min(), 0.0)
                self.assertLessEqual(observed.max(), 1.0)
                np.testing.assert_array_equal(
                    result.delta, np.clip(self.y + result.pre_clip_delta, 0.0, 1.0) - self.y
                )

    def test_trace_length(self):
        result = obsatk(self.params, self.x, self.y, AttackConfig(rho=0.5, iters=3))
        self.assertEqual(len(result.objective_trace), 4)
        self.assertEqual(result.objective_trace[0], adv_objective(self.params, self.y, np.zeros_like(self.y), self.x))

    def test_deterministic(self):
        cfg = AttackConfig(rho=0.5, iters=5)
        first = obsatk(self.params, self.x, self.y, cfg)
        second = obsatk(self.params, self.x, self.y, cfg)
        self.assertEqual(first.delta.tobytes(), second.delta.tobytes())
        self.assertEqual(first.objective_trace, second.objective_trace)

    def test_one_step_is_optimal_for_identity_denoiser(self):
        params = ModelParams.zeros(ArchConfig(depth=2, width=2))
        rho = 0.3
        result = obsatk(params, self.x, self.y, AttackConfig(rho=rho, iters=1))
        v = self.y - self.x
        centred = project_zero_mean(v)
        expected = rho * centred / np.linalg.norm(centred)
        np.testing.assert_allclose(result.pre_clip_delta, expected, atol=1e-12)
        optimum = np.sum(v ** 2) + 2 * rho * np.linalg.norm(centred) + rho ** 2
        self.assertAlmostEqual(result.objective_trace[-1], optimum, places=10)

    def test_zero_gradient_means_no_step(self):
        params = ModelParams.zeros(ArchConfig(depth=2, width=2))
        result = obsatk(params, self.x, self.x, AttackConfig(rho=1.0, iters=3))
        self.assertTrue(np.all(result.pre_clip_delta == 0.0))

    def test_raw_step_rule(self):
        cfg = AttackConfig(rho=0.2, iters=3, step_rule=StepRule.raw(0.5))
        result = obsatk(self.params, self.x, self.y, cfg)
        self.assertLessEqual(np.linalg.norm(result.pre_clip_delta), 0.2 * (1 + 1e-10))

    def test_attack_increases_objective(self):
        cfg = AttackConfig.per_pixel(5 / 255, self.y.size, iters=5)
        result = obsatk(self.params, self.x, self.y, cfg)
        self.assertGreater(result.objective_trace[-1], result.objective_trace[0])

    def test_out_of_range_observation(self):
        with self.assertRaises(AttackInputError):
            obsatk(self.params, self.x, self.y + 2.0, AttackConfig(rho=0.1))

    def test_shape_mismatch(self):
        with self.assertRaises(AttackInputError):
            obsatk(self.params, self.x[:, :4], self.y, AttackConfig(rho=0.1))


class BudgetSplitTests(SimpleTestCase):

    def test_protocol_example(self):
        self.assertAlmostEqual(budget_split(15 / 255, 5 / 255), 10 / 255, places=15)

    def test_no_attack(self):
        self.assertEqual(budget_split(25 / 255, 0.0), 25 / 255)

    def test_pure_attack(self):
        self.assertEqual(budget_split(15 / 255, 15 / 255), 0.0)

    def test_share_exceeds_level(self):
        with self.assertRaises(BudgetSplitError):
            budget_split(5 / 255, 7 / 255)

    def test_total_norm_bound(self):
        m = 32 * 32
        eps_hat, share = 15 / 255, 5 / 255
        v = Rng(1).normal(m)
        v *= budget_split(eps_hat, share) * math.sqrt(m) / np.linalg.norm(v)
        delta = project_zero_mean(Rng(2).normal(m))
        delta *= share * math.sqrt(m) / np.linalg.norm(delta)
        self.assertLessEqual(np.linalg.norm(v + delta), eps_hat * math.sqrt(m) * (1 + 1e-12))
