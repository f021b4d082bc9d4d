import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from attack.services import budget_split, obsatk
from attack.types import AttackConfig
from dataset.exceptions import EmptyCorpusError
from dataset.noise import NoiseSpec, parse_noise_level, sample_noise
from dataset.rng import Rng, SeedDomain, derive_seed
from dataset.services.corpus import CorpusSource, ImagePatch
from denoiser.arch import ModelParams
from denoiser.services.network import denoise
from training.config import TrainConfig, TrainingMode

from .exceptions import EnergyBudgetViolation, InvalidProtocolError
from .metrics import psnr
from .protocol import Column, ColumnKind, EvalProtocol, EvalReport, EvalRow

logger = logging.getLogger(__name__)

ENERGY_REL_TOL = 1e-10


def aggregate(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and population standard deviation of per-repeat PSNR values."""
    values = [float(v) for v in values]
    if any(math.isinf(v) for v in values):
        if all(v == values[0] for v in values):
            return values[0], 0.0
        return math.inf, math.inf
    return float(np.mean(values)), float(np.std(values))


def _cap(v: np.ndarray, level: float) -> np.ndarray:
    bound = level * math.sqrt(v.size)
    norm = float(np.linalg.norm(v))
    if norm > bound:
        return v * (bound / norm)
    return v


def corrupt(
    patch: ImagePatch,
    eps_hat: float,
    column: Column,
    protocol: EvalProtocol,
    rng: Rng,
) -> Tuple[np.ndarray, float]:
    """Base observation for one column: (y, noise level of the base draw).

    With ``protocol.cap_energy`` every draw, Gaussian and uniform columns
    included, is rescaled to norm at most level * sqrt(m) before clipping.
    """
    x = patch.clean
    if column.kind is ColumnKind.UNIFORM:
        level = eps_hat
        v = sample_noise(NoiseSpec.uniform(eps_hat), x.shape, rng)
    else:
        level = eps_hat if column.kind is ColumnKind.GAUSSIAN else budget_split(eps_hat, column.share)
        v = sample_noise(NoiseSpec.gaussian_fixed(level), x.shape, rng)
    if protocol.cap_energy:
        v = _cap(v, level)
    return np.clip(x + v, protocol.p_min, protocol.p_max), level


def restore(
    params: ModelParams,
    patch: ImagePatch,
    eps_hat: float,
    column: Column,
    protocol: EvalProtocol,
    rng: Rng,
) -> np.ndarray:
    """Corrupt ``patch`` per ``column`` (attacking when needed) and denoise it."""
    x = patch.clean
    y, _ = corrupt(patch, eps_hat, column, protocol, rng)
    if column.is_attack:
        cfg = AttackConfig.per_pixel(
            column.share, x.size,
            iters=protocol.attack_iters, step_rule=protocol.step_rule, p_min=protocol.p_min, p_max=protocol.p_max,
        )
        delta = obsatk(params, x, y, cfg).delta
        if protocol.cap_energy:
            norm = float(np.linalg.norm(y - x + delta))
            bound = eps_hat * math.sqrt(x.size)
            if norm > bound * (1.0 + ENERGY_REL_TOL):
                raise EnergyBudgetViolation(
                    f"Total noise norm {norm:.12g} exceeds eps_hat * sqrt(m) = {bound:.12g} in column {column.label}",
                    norm, bound,
                )
        y = y + delta
    return denoise(params, y)


def _cell_psnr(
    params: ModelParams,
    corpus: Sequence[ImagePatch],
    protocol: EvalProtocol,
    seed: int,
    cell: Tuple[int, int, int],
) -> float:
    eps_index, column_index, repeat = cell
    eps_hat = protocol.eps_hats[eps_index].value
    column = protocol.columns[column_index]
    scores = []
    for image_index, patch in enumerate(corpus):
        # noise streams ignore the column, so every column corrupts the same draws
        rng = Rng(derive_seed(seed, SeedDomain.EVAL_NOISE, eps_index, repeat, image_index))
        scores.append(psnr(restore(params, patch, eps_hat, column, protocol, rng), patch.clean))
    return float(np.mean(scores))


def evaluate(
    params: ModelParams,
    corpus: Sequence[ImagePatch],
    protocol: EvalProtocol,
    seed: int,
    corpus_name: str = "corpus",
    section: Optional[str] = None,
) -> EvalReport:
    """Run the evaluation protocol on ``corpus``.

    For every (noise level, column, repeat) cell each image is corrupted with
    fresh noise, denoised and scored; PSNR is averaged over the images of the
    cell, then mean and population std are taken across repeats.

    Args:
        params: Denoiser to evaluate
        corpus: Clean patches
        protocol: Noise levels, columns and attack settings
        seed: Root seed of the evaluation noise
        corpus_name: Corpus label written to every row
        section: Optional section label written to every row

    Returns:
        EvalReport with one row per (noise level, column), in protocol order

    Raises:
        EmptyCorpusError: corpus has no patches
        EnergyBudgetViolation: an attacked sample exceeds the energy budget
    """
    if not corpus:
        raise EmptyCorpusError("Evaluation corpus is empty")
    cells = [
        (e, c, r)
        for e in range(len(protocol.eps_hats))
        for c in range(len(protocol.columns))
        for r in range(protocol.repeats)
    ]
    logger.info(
        f"Evaluating {len(corpus)} images on {len(protocol.eps_hats)} noise level(s) x "
        f"{len(protocol.columns)} column(s) x {protocol.repeats} repeat(s)"
    )

    def run(cell):
        return _cell_psnr(params, corpus, protocol, seed, cell)

    if protocol.threads > 1:
        with ThreadPoolExecutor(max_workers=protocol.threads) as pool:
            scores = list(pool.map(run, cells))
    else:
        scores = [run(cell) for cell in cells]
    by_cell = dict(zip(cells, scores))

    report = EvalReport()
    for e, level in enumerate(protocol.eps_hats):
        for c, column in enumerate(protocol.columns):
            mean, std = aggregate([by_cell[(e, c, r)] for r in range(protocol.repeats)])
            report.rows.append(EvalRow(corpus_name, level.label, column.label, mean, std, section))
            logger.debug(f"{corpus_name} eps_hat={level.label} {column.label}: {mean:.3f} / {std:.3f} dB")
    return report


def _dispatch(jobs: List[Dict]) -> List[Dict]:
    """Queue one training task per job and collect the results in job order."""
    from training.tasks import train_and_evaluate

    handles = [train_and_evaluate.delay(**job) for job in jobs]
    return [handle.get() for handle in handles]


def _grid_label(axis: str, value: Union[str, float]) -> Tuple[str, float]:
    if axis == "alpha":
        number = float(value)
        if not math.isfinite(number) or number < 0:
            raise InvalidProtocolError(f"alpha grid values must be finite and >= 0, got {value!r}")
        return f"{number:g}", number
    level = parse_noise_level(value)
    return level.label, level.value


def ablation_sweep(
    train_source: CorpusSource,
    eval_source: CorpusSource,
    axis: str,
    grid: Iterable[Union[str, float]],
    base: TrainConfig,
    protocol: EvalProtocol,
    eval_seed: Optional[int] = None,
    out_dir: Optional[str] = None,
) -> EvalReport:
    """Train one hybrid model per grid point and evaluate each under ``protocol``.

    ``axis`` is ``alpha`` (hybrid coefficient) or ``rho`` (per-pixel training
    attack budget). All grid points share ``base.seed``; each contributes one
    report section named ``axis=value``.
    """
    if axis not in ("alpha", "rho"):
        raise InvalidProtocolError(f"Sweep axis must be alpha or rho, got {axis!r}")
    points = [_grid_label(axis, value) for value in grid]
    if not points:
        raise InvalidProtocolError("Sweep grid is empty")
    field_name = "alpha" if axis == "alpha" else "rho_per_pixel"
    seed = base.seed if eval_seed is None else eval_seed

    jobs = []
    for label, value in points:
        cfg = replace(base, mode=TrainingMode.HAT, **{field_name: value})
        jobs.append({
            "train_source": train_source.to_dict(),
            "eval_source": eval_source.to_dict(),
            "train_config": cfg.to_dict(),
            "protocol": protocol.to_dict(),
            "section": f"{axis}={label}",
            "eval_seed": seed,
            "out_dir": out_dir,
        })
    logger.info(f"Sweeping {axis} over {[label for label, _ in points]}")
    report = EvalReport()
    for result in _dispatch(jobs):
        report.extend(EvalRow.from_dict(row) for row in result["rows"])
    return report


def compare_regimes(
    train_source: CorpusSource,
    eval_source: CorpusSource,
    modes: Iterable[Union[str, TrainingMode]],
    base: TrainConfig,
    protocol: EvalProtocol,
    train_repeats: int = 1,
    eval_seed: Optional[int] = None,
    out_dir: Optional[str] = None,
) -> EvalReport:
    """Train every regime on the same corpus and seed budget and evaluate each.

    With ``train_repeats`` > 1 each regime is trained that many times with
    derived seeds; the reported mean and std are then taken over the training
    repeats.
    """
    modes = [TrainingMode(mode) for mode in modes]
    if not modes:
        raise InvalidProtocolError("No training regimes to compare")
    if train_repeats < 1:
        raise InvalidProtocolError(f"train_repeats must be >= 1, got {train_repeats}")
    seed = base.seed if eval_seed is None else eval_seed
    seeds = [base.seed] if train_repeats == 1 else [
        derive_seed(base.seed, SeedDomain.TRAIN_REPEAT, r) for r in range(train_repeats)
    ]

    jobs = []
    for mode in modes:
        for r, train_seed in enumerate(seeds):
            jobs.append({
                "train_source": train_source.to_dict(),
                "eval_source": eval_source.to_dict(),
                "train_config": replace(base, mode=mode, seed=train_seed).to_dict(),
                "protocol": protocol.to_dict(),
                "section": mode.value if train_repeats == 1 else f"{mode.value}#{r}",
                "eval_seed": seed,
                "out_dir": out_dir,
            })
    logger.info(f"Comparing {[m.value for m in modes]} with {train_repeats} training repeat(s) each")
    results = _dispatch(jobs)

    report = EvalReport()
    for m, mode in enumerate(modes):
        runs = [EvalReport.from_dicts(r["rows"]) for r in results[m * len(seeds):(m + 1) * len(seeds)]]
        if train_repeats == 1:
            report.extend(runs[0].rows)
            continue
        for index, row in enumerate(runs[0].rows):
            mean, std = aggregate([run.rows[index].psnr_mean for run in runs])
            report.rows.append(replace(row, psnr_mean=mean, psnr_std=std, section=mode.value))
    return report
