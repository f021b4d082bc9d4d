import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from attack.services import obsatk
from attack.types import AttackConfig
from dataset.noise import NoiseSpec, sample_noise
from dataset.rng import Rng, SeedDomain
from dataset.utils.netpbm import write_image
from denoiser.arch import ModelParams
from denoiser.services.network import denoise
from evaluation.metrics import psnr

logger = logging.getLogger(__name__)

SUMMARY_FIELDS = ("image", "psnr_denoised", "psnr_attacked", "delta_norm", "rho", "pre_clip_mean")


@dataclass(frozen=True)
class AttackSummary:
    image: str
    psnr_denoised: float
    psnr_attacked: float
    delta_norm: float
    rho: float
    pre_clip_mean: float


def observe(x: np.ndarray, sigma: float, seed: int, index: int, p_min: float, p_max: float) -> np.ndarray:
    """Gaussian observation of image ``index`` clipped to the pixel range."""
    rng = Rng.derived(seed, SeedDomain.ATTACK_NOISE, index)
    return np.clip(x + sample_noise(NoiseSpec.gaussian_fixed(sigma), x.shape, rng), p_min, p_max)


def attack_and_dump(
    params: ModelParams,
    images: Sequence[Tuple[str, np.ndarray]],
    sigma: float,
    make_config,
    seed: int,
    out_dir: Path,
) -> Tuple[List[AttackSummary], List[Path]]:
    """Attack every image and write its artifacts under ``out_dir/<name>/``.

    Per image: clean, noisy, denoised, adversarial and denoised-adversarial
    PGM/PPM files, the raw perturbation ``delta.npy`` and ``objective_trace.csv``.

    Args:
        params: Denoiser under attack
        images: (name, clean C x H x W tensor) pairs
        sigma: Gaussian noise level of the observations
        make_config: Callable m -> AttackConfig for images of m elements
        seed: Root seed of the observation noise
        out_dir: Run directory

    Returns:
        (one summary per image, every written file)
    """
    summaries: List[AttackSummary] = []
    written: List[Path] = []
    for index, (name, x) in enumerate(images):
        cfg: AttackConfig = make_config(x.size)
        y = observe(x, sigma, seed, index, cfg.p_min, cfg.p_max)
        result = obsatk(params, x, y, cfg)
        adversarial = y + result.delta
        restored = denoise(params, y)
        restored_adv = denoise(params, adversarial)

        target = out_dir / name
        target.mkdir(parents=True, exist_ok=True)
        for label, image in (
            ("clean", x), ("noisy", y), ("denoised", restored),
            ("adversarial", adversarial), ("denoised_adversarial", restored_adv),
        ):
            written.append(write_image(target / f"{label}.{'ppm' if x.shape[0] == 3 else 'pgm'}", image))
        np.save(target / "delta.npy", result.delta)
        written.append(target / "delta.npy")
        trace_path = target / "objective_trace.csv"
        with trace_path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(("step", "objective"))
            for step, value in enumerate(result.objective_trace):
                writer.writerow((step, repr(value)))
        written.append(trace_path)

        summary = AttackSummary(
            image=name,
            psnr_denoised=psnr(restored, x),
            psnr_attacked=psnr(restored_adv, x),
            delta_norm=result.norm,
            rho=cfg.rho,
            pre_clip_mean=result.pre_clip_mean,
        )
        logger.info(
            f"Attacked {name}: PSNR {summary.psnr_denoised:.3f} -> {summary.psnr_attacked:.3f} dB, "
            f"||delta|| {summary.delta_norm:.4g} of {summary.rho:.4g}"
        )
        summaries.append(summary)
    return summaries, written


def write_summary(summaries: Sequence[AttackSummary], path: Path) -> Path:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SUMMARY_FIELDS)
        for s in summaries:
            writer.writerow((s.image, f"{s.psnr_denoised:.4f}", f"{s.psnr_attacked:.4f}",
                             repr(s.delta_norm), repr(s.rho), repr(s.pre_clip_mean)))
    return path
