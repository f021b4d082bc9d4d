"""Randomized check that the two-step projection is the exact intersection projection."""
import logging
import time
from dataclasses import dataclass

import numpy as np

from dataset.rng import Rng

from . import constants
from .dykstra import dykstra_project
from .operators import project_ball_then_hyperplane, project_feasible

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProjectionSuiteReport:
    instances: int
    max_oracle_deviation: float
    max_abs_mean: float
    max_norm_excess: float
    max_idempotence_error: float
    optimality_violations: int
    seconds: float

    @property
    def passed(self) -> bool:
        return (self.max_oracle_deviation < constants.ORACLE_TOL
                and self.max_abs_mean < constants.MEAN_TOL
                and self.max_norm_excess <= 0.0
                and self.max_idempotence_error <= constants.IDEMPOTENCE_TOL
                and self.optimality_violations == 0)

    def summary(self) -> str:
        return (
            f"{self.instances} instances: oracle deviation {self.max_oracle_deviation:.2e}, "
            f"|mean| {self.max_abs_mean:.2e}, norm excess {self.max_norm_excess:.2e}, "
            f"idempotence {self.max_idempotence_error:.2e}, "
            f"optimality violations {self.optimality_violations}, {self.seconds:.2f}s"
        )


def _feasible_points(rng: Rng, m: int, rho: float, count: int) -> np.ndarray:
    """``count`` random points of the zero-mean rho-ball, one per row."""
    raw = rng.uniform((count, m), low=-constants.SUITE_ENTRY_BOUND, high=constants.SUITE_ENTRY_BOUND)
    centred = raw - raw.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centred, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    radii = rho * rng.uniform((count, 1))
    return centred / norms * radii


def run_projection_suite(
    instances: int = constants.SUITE_INSTANCES,
    feasible_points: int = constants.SUITE_FEASIBLE_POINTS,
    seed: int = 0,
) -> ProjectionSuiteReport:
    """Compare the closed-form projection with the Dykstra oracle on random instances.

    Per instance: m in [2, 64], entries U(-2, 2), rho in (0, 3). Checks oracle
    agreement, constraint satisfaction, idempotence and that no random
    feasible point is closer to the input than the projection.
    """
    logger.info(f"Running projection suite: {instances} instances, {feasible_points} feasible points each")
    started = time.perf_counter()
    rng = Rng(seed)
    deviation = mean_error = norm_excess = idempotence = 0.0
    violations = 0
    span = constants.SUITE_MAX_M - constants.SUITE_MIN_M + 1
    for _ in range(instances):
        m = constants.SUITE_MIN_M + rng.integers(span)
        delta = rng.uniform(m, low=-constants.SUITE_ENTRY_BOUND, high=constants.SUITE_ENTRY_BOUND)
        rho = rng.uniform(low=np.finfo(float).tiny, high=constants.SUITE_MAX_RHO)

        projected = project_feasible(delta, rho)
        deviation = max(deviation, float(np.abs(projected - dykstra_project(delta, rho)).max()))
        mean_error = max(mean_error, abs(float(projected.mean())))
        norm_excess = max(norm_excess, float(np.linalg.norm(projected)) - rho * (1.0 + constants.NORM_REL_TOL))
        idempotence = max(idempotence, float(np.abs(project_feasible(projected, rho) - projected).max()))

        distance = np.linalg.norm(delta - projected)
        others = np.linalg.norm(delta[None, :] - _feasible_points(rng, m, rho, feasible_points), axis=1)
        slack = constants.NORM_REL_TOL * max(1.0, float(np.linalg.norm(delta)))
        violations += int(np.count_nonzero(others < distance - slack))

    report = ProjectionSuiteReport(
        instances=instances,
        max_oracle_deviation=deviation,
        max_abs_mean=mean_error,
        max_norm_excess=norm_excess,
        max_idempotence_error=idempotence,
        optimality_violations=violations,
        seconds=time.perf_counter() - started,
    )
    log = logger.info if report.passed else logger.warning
    log(f"Projection suite {'passed' if report.passed else 'FAILED'}: {report.summary()}")
    return report


def order_witness(delta=(3.0, -1.0), rho: float = 1.0):
    """Hyperplane-then-ball and ball-then-hyperplane results for one input."""
    return project_feasible(delta, rho), project_ball_then_hyperplane(delta, rho)
