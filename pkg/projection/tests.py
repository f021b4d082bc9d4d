import math

import numpy as np
from django.test import SimpleTestCase, override_settings

from dataset.rng import Rng

from . import constants
from .dykstra import dykstra, dykstra_project
from .exceptions import DykstraConvergenceError, EmptyPerturbationError, InvalidBudgetError, ProjectionError
from .operators import (
    PerturbationBudget, project_ball_then_hyperplane, project_feasible, project_l2_ball, project_zero_mean,
)
from .verification import order_witness, run_projection_suite


def hyperplane_oracle(delta, normal):
    """Generic projection onto {d : <n, d> = 0}."""
    normal = np.asarray(normal, dtype=float)
    return delta - np.dot(normal, delta) / np.dot(normal, normal) * normal


class ZeroMeanTests(SimpleTestCase):

    def test_two_elements(self):
        out = project_zero_mean([2.0, 0.0])
        np.testing.assert_array_equal(out, [1.0, -1.0])
        np.testing.assert_allclose(out, hyperplane_oracle(np.array([2.0, 0.0]), np.ones(2)), atol=1e-15)

    def test_constant_vector(self):
        np.testing.assert_array_equal(project_zero_mean(np.full(7, 3.5)), np.zeros(7))

    def test_zero_mean_fixed_point(self):
        delta = np.array([1.0, -2.0, 1.0])
        np.testing.assert_array_equal(project_zero_mean(delta), delta)

    def test_mean_tolerance_on_random_inputs(self):
        rng = Rng(1)
        for _ in range(50):
            delta = rng.uniform((1, 9, 11), low=-5.0, high=5.0)
            out = project_zero_mean(delta)
            self.assertLess(abs(out.mean()), constants.MEAN_TOL * max(1.0, np.abs(delta).max()))

    def test_empty(self):
        with self.assertRaises(EmptyPerturbationError):
            project_zero_mean(np.zeros(0))


class BallTests(SimpleTestCase):

    def test_boundary_fixed_point(self):
        np.testing.assert_array_equal(project_l2_ball([3.0, 4.0], 5.0), [3.0, 4.0])

    def test_rescale(self):
        np.testing.assert_allclose(project_l2_ball([3.0, 4.0], 1.0), [0.6, 0.8], rtol=1e-15)

    def test_zero(self):
        np.testing.assert_array_equal(project_l2_ball(np.zeros(3), 2.0), np.zeros(3))
        np.testing.assert_array_equal(project_l2_ball(np.zeros(3), 0.0), np.zeros(3))

    def test_norm_bound(self):
        rng = Rng(2)
        for _ in range(50):
            rho = rng.uniform(high=3.0)
            out = project_l2_ball(rng.uniform(20, low=-4.0, high=4.0), rho)
            self.assertLessEqual(np.linalg.norm(out), rho * (1 + constants.NORM_REL_TOL))

    def test_negative_rho(self):
        with self.assertRaises(InvalidBudgetError):
            project_l2_ball([1.0], -0.1)


class FeasibleProjectionTests(SimpleTestCase):

    def test_worked_example(self):
        out = project_feasible([3.0, -1.0], 1.0)
        np.testing.assert_allclose(out, [1 / math.sqrt(2), -1 / math.sqrt(2)], atol=1e-15)
        np.testing.assert_allclose(out, dykstra_project([3.0, -1.0], 1.0), atol=constants.ORACLE_TOL)

    def test_feasible_input_unchanged(self):
        np.testing.assert_array_equal(project_feasible([0.1, -0.1], 1.0), [0.1, -0.1])

    def test_constant_vector(self):
        for rho in (0.0, 0.5, 10.0):
            np.testing.assert_array_equal(project_feasible(np.full(4, -2.0), rho), np.zeros(4))

    def test_idempotent(self):
        rng = Rng(3)
        for _ in range(50):
            rho = rng.uniform(high=3.0)
            once = project_feasible(rng.uniform(16, low=-2.0, high=2.0), rho)
            np.testing.assert_allclose(project_feasible(once, rho), once, rtol=0, atol=constants.IDEMPOTENCE_TOL)

    def test_preserves_shape(self):
        self.assertEqual(project_feasible(np.ones((1, 4, 5)), 1.0).shape, (1, 4, 5))

    def test_order_matters(self):
        hyperplane_first, ball_first = order_witness()
        self.assertFalse(np.allclose(hyperplane_first, ball_first))
        self.assertLess(
            np.linalg.norm(np.array([3.0, -1.0]) - hyperplane_first),
            np.linalg.norm(np.array([3.0, -1.0]) - ball_first),
        )
        np.testing.assert_allclose(ball_first, project_ball_then_hyperplane([3.0, -1.0], 1.0))

    def test_budget(self):
        budget = PerturbationBudget.per_pixel(5 / 255, 1024)
        self.assertAlmostEqual(budget.rho, 5 / 255 * 32)
        self.assertAlmostEqual(budget.rho_over_sqrt_m, 5 / 255)
        self.assertTrue(budget.contains(project_feasible(np.arange(1024.0), budget.rho), 1e-12, 1e-12))
        with self.assertRaises(InvalidBudgetError):
            PerturbationBudget(-1.0, 4)
        with self.assertRaises(EmptyPerturbationError):
            PerturbationBudget(1.0, 0)


class DykstraTests(SimpleTestCase):

    def test_feasible_input_is_fixed(self):
        delta = np.array([0.2, -0.1, -0.1])
        np.testing.assert_allclose(dykstra_project(delta, 1.0), delta, atol=constants.DYKSTRA_TOL)

    def test_constant_vector(self):
        np.testing.assert_allclose(dykstra_project(np.full(5, 1.5), 2.0), np.zeros(5), atol=constants.DYKSTRA_TOL)

    def test_two_sweeps_suffice(self):
        result = dykstra(
            [project_zero_mean, lambda d: project_l2_ball(d, 1.0)], np.array([3.0, -1.0, 0.5]), 100, 1e-12
        )
        self.assertLessEqual(result.iterations, 2)

    def test_non_convergence_reports_residual(self):
        # two disjoint balls never settle on a common point
        far = np.array([10.0, 0.0])
        projectors = [lambda d: project_l2_ball(d, 1.0), lambda d: far + project_l2_ball(d - far, 1.0)]
        with self.assertRaises(DykstraConvergenceError) as ctx:
            dykstra(projectors, np.array([5.0, 3.0]), 5, 1e-12)
        self.assertEqual(ctx.exception.iterations, 5)
        self.assertGreater(ctx.exception.residual, 0.0)

    def test_invalid_arguments(self):
        with self.assertRaises(ProjectionError):
            dykstra([project_zero_mean], np.ones(2), 0, 1e-12)
        with self.assertRaises(ProjectionError):
            dykstra([project_zero_mean], np.ones(2), 10, 0.0)

    @override_settings(OBSDN_DYKSTRA_MAX_ITERS=1)
    def test_settings_bound_iterations(self):
        with self.assertRaises(DykstraConvergenceError):
            dykstra_project([3.0, -1.0], 1.0)


class ProjectionSuiteTests(SimpleTestCase):

    def test_full_suite_passes(self):
        report = run_projection_suite(seed=0)
        self.assertEqual(report.instances, 1000)
        self.assertLess(report.max_oracle_deviation, 1e-8)
        self.assertLess(report.max_abs_mean, 1e-12)
        self.assertLessEqual(report.max_norm_excess, 0.0)
        self.assertEqual(report.optimality_violations, 0)
        self.assertTrue(report.passed)
        self.assertLess(report.seconds, 10.0)

    def test_suite_is_reproducible(self):
        first = run_projection_suite(instances=20, feasible_points=10, seed=4)
        second = run_projection_suite(instances=20, feasible_points=10, seed=4)
        self.assertEqual(first.max_oracle_deviation, second.max_oracle_deviation)
        self.assertEqual(first.max_abs_mean, second.max_abs_mean)
