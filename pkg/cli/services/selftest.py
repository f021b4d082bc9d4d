"""Invariant suites run by ``obsdn selftest``."""
import logging
import time
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from attack.services import obsatk, record_objective
from attack.types import AttackConfig
from dataset.rng import Rng, derive_seed
from dataset.services.corpus import ImagePatch
from denoiser.arch import ArchConfig
from denoiser.services.network import init_model
from projection.verification import run_projection_suite
from tensorcore.gradcheck import gradcheck
from tensorcore.graph import Graph
from training.config import TrainingMode
from training.losses import build_loss_graph, hat_loss, nt_loss, vat_loss

logger = logging.getLogger(__name__)

PRIMITIVE_TOL = 1e-5
END_TO_END_TOL = 1e-4
DEGENERACY_BATCHES = 100

# stream tags of the selftest instances
_PRIMITIVES, _MODEL, _BATCHES = 1, 2, 3

SELFTEST_ARCH = ArchConfig(depth=3, width=3)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _away_from_zero(rng: Rng, shape) -> np.ndarray:
    """Entries with magnitude in [0.1, 1] so relu kinks stay outside the finite-difference step."""
    signs = rng.integers(2, shape) * 2.0 - 1.0
    return signs * rng.uniform(shape, low=0.1, high=1.0)


def _primitive_graphs(rng: Rng) -> List[Tuple[str, Graph, list]]:
    cases = []

    graph = Graph()
    x = graph.leaf(rng.normal((1, 6, 6)), name="x")
    kernel = graph.leaf(rng.normal((2, 1, 3, 3)) * 0.5, name="kernel")
    bias = graph.leaf(rng.normal(2) * 0.1, name="bias")
    graph.sq_norm(graph.conv2d(x, kernel, bias))
    cases.append(("conv2d", graph, [x, kernel, bias]))

    graph = Graph()
    z = graph.leaf(_away_from_zero(rng, (2, 5, 5)), name="z")
    graph.sq_norm(graph.relu(z))
    cases.append(("relu", graph, [z]))

    for op in ("add", "sub"):
        graph = Graph()
        a = graph.leaf(rng.normal((1, 4, 4)), name="a")
        b = graph.leaf(rng.normal((1, 4, 4)), name="b")
        graph.sq_norm(getattr(graph, op)(a, b))
        cases.append((op, graph, [a, b]))

    graph = Graph()
    a = graph.leaf(rng.normal((1, 4, 4)), name="a")
    graph.sq_norm(graph.scale(a, 1.7))
    cases.append(("scale", graph, [a]))

    graph = Graph()
    a = graph.leaf(rng.normal((1, 4, 4)), name="a")
    graph.sum(a)
    cases.append(("sum", graph, [a]))

    graph = Graph()
    a = graph.leaf(rng.normal((1, 4, 4)), name="a")
    graph.sq_norm(a)
    cases.append(("sq_norm", graph, [a]))
    return cases


def check_primitives(seed: int) -> List[CheckResult]:
    results = []
    for name, graph, leaves in _primitive_graphs(Rng(derive_seed(seed, _PRIMITIVES))):
        error = max(gradcheck(graph, leaf) for leaf in leaves)
        results.append(CheckResult(f"gradcheck {name}", error < PRIMITIVE_TOL, f"max relative error {error:.2e}"))
    return results


def _batch(rng: Rng, size: int = 2, shape=(1, 8, 8), sigma: float = 0.1) -> List[ImagePatch]:
    batch = []
    for _ in range(size):
        x = rng.uniform(shape, low=0.1, high=0.9)
        batch.append(ImagePatch(x, np.clip(x + rng.normal(shape, scale=sigma), 0.0, 1.0)))
    return batch


def check_end_to_end(seed: int) -> List[CheckResult]:
    params = init_model(SELFTEST_ARCH, derive_seed(seed, _MODEL))
    rng = Rng(derive_seed(seed, _BATCHES))
    batch = _batch(rng)
    attack_cfg = AttackConfig.per_pixel(5 / 255, batch[0].clean.size, iters=2)
    results = []

    graph = Graph()
    delta = 0.01 * rng.normal(batch[0].shape)
    delta_leaf, objective = record_objective(graph, params, batch[0].noisy, delta, batch[0].clean)
    error = gradcheck(graph, delta_leaf, output=objective)
    results.append(CheckResult("gradcheck adv_objective", error < END_TO_END_TOL, f"max relative error {error:.2e}"))

    for mode, alpha in ((TrainingMode.NT, 0.0), (TrainingMode.VAT, 0.0), (TrainingMode.HAT, 1.0)):
        graph, loss, leaves = build_loss_graph(params, batch, mode, attack_cfg, alpha)
        error = max(
            gradcheck(graph, leaf, output=loss, coords=range(0, leaf.value.size, max(1, leaf.value.size // 6)))
            for leaf in leaves
        )
        results.append(
            CheckResult(f"gradcheck {mode.value} loss", error < END_TO_END_TOL, f"max relative error {error:.2e}")
        )
    return results


def check_degeneracies(seed: int) -> List[CheckResult]:
    params = init_model(SELFTEST_ARCH, derive_seed(seed, _MODEL))
    rng = Rng(derive_seed(seed, _BATCHES, 1))
    attack_cfg = AttackConfig.per_pixel(5 / 255, 64)
    hat_mismatches = vat_mismatches = 0
    for _ in range(DEGENERACY_BATCHES):
        batch = _batch(rng)
        reference = nt_loss(params, batch)
        hat_mismatches += int(hat_loss(params, batch, attack_cfg, 0.0) != reference)
        vat_mismatches += int(vat_loss(params, batch, AttackConfig(rho=0.0)) != reference)

    patch = _batch(rng, size=1)[0]
    delta = obsatk(params, patch.clean, patch.noisy, AttackConfig(rho=0.0)).delta
    return [
        CheckResult("hat(alpha=0) == nt", hat_mismatches == 0,
                    f"{hat_mismatches} of {DEGENERACY_BATCHES} batches differ"),
        CheckResult("vat(rho=0) == nt", vat_mismatches == 0,
                    f"{vat_mismatches} of {DEGENERACY_BATCHES} batches differ"),
        CheckResult("obsatk(rho=0) == 0", not np.any(delta), f"max |delta| {float(np.abs(delta).max()):.2e}"),
    ]


def check_projection(seed: int) -> List[CheckResult]:
    report = run_projection_suite(seed=seed)
    return [CheckResult("projection suite", report.passed, report.summary())]


SUITES: List[Tuple[str, Callable[[int], List[CheckResult]]]] = [
    ("primitives", check_primitives),
    ("end-to-end gradients", check_end_to_end),
    ("degeneracies", check_degeneracies),
    ("projection", check_projection),
]


def run_selftest(seed: int = 0) -> List[CheckResult]:
    """Run every invariant suite and return one result per check."""
    results: List[CheckResult] = []
    for name, suite in SUITES:
        started = time.perf_counter()
        logger.info(f"Selftest: running {name} checks")
        results.extend(suite(seed))
        logger.debug(f"Selftest: {name} took {time.perf_counter() - started:.2f}s")
    failed = [result.name for result in results if not result.passed]
    if failed:
        logger.warning(f"Selftest: {len(failed)} check(s) failed: {failed}")
    else:
        logger.info(f"Selftest: all {len(results)} checks passed")
    return results
