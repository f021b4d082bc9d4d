import logging
import math
import time
from typing import List, Sequence, Tuple

import numpy as np

from dataset.exceptions import EmptyCorpusError
from dataset.noise import NoiseSpec, sample_noise_with_sigma
from dataset.rng import Rng, SeedDomain, derive_seed
from dataset.services.corpus import ImagePatch
from denoiser.arch import ModelParams
from denoiser.services.network import denoise, init_model
from evaluation.metrics import psnr
from tensorcore.exceptions import NonFiniteTensorError

from .config import EpochRecord, TrainConfig, TrainLog
from .exceptions import TrainingDivergenceError
from .losses import finite_grads, loss_and_grads
from .optim import Adam

logger = logging.getLogger(__name__)


def split_validation(corpus: Sequence[ImagePatch], val_fraction: float) -> Tuple[List[ImagePatch], List[ImagePatch]]:
    """Hold out the last ``val_fraction`` of the corpus (at least one patch).

    A single-patch corpus, or ``val_fraction`` = 0, validates on the training
    patches.
    """
    corpus = list(corpus)
    if val_fraction <= 0:
        return corpus, corpus
    held_out = max(1, int(math.floor(len(corpus) * val_fraction)))
    if held_out >= len(corpus):
        logger.warning(f"Corpus of {len(corpus)} patch(es) is too small for a held-out fold; validating on training data")
        return corpus, corpus
    return corpus[:-held_out], corpus[-held_out:]


def validation_pairs(patches: Sequence[ImagePatch], sigma: float, seed: int) -> List[ImagePatch]:
    rng = Rng.derived(seed, SeedDomain.VAL_NOISE)
    spec = NoiseSpec.gaussian_fixed(sigma)
    pairs = []
    for patch in patches:
        noise, used = sample_noise_with_sigma(spec, patch.shape, rng)
        pairs.append(ImagePatch(patch.clean, np.clip(patch.clean + noise, 0.0, 1.0), used))
    return pairs


def validation_psnr(params: ModelParams, pairs: Sequence[ImagePatch]) -> float:
    return float(np.mean([psnr(denoise(params, p.noisy), p.clean) for p in pairs]))


def noisy_batch(patches: Sequence[ImagePatch], spec: NoiseSpec, rng: Rng) -> List[ImagePatch]:
    """Fresh noise from ``spec`` for every patch, observations clipped to [0, 1]."""
    batch = []
    for patch in patches:
        noise, sigma = sample_noise_with_sigma(spec, patch.shape, rng)
        batch.append(ImagePatch(patch.clean, np.clip(patch.clean + noise, 0.0, 1.0), sigma))
    return batch


def train(corpus: Sequence[ImagePatch], cfg: TrainConfig) -> Tuple[ModelParams, TrainLog]:
    """Train a denoiser with Adam on the loss of ``cfg.mode``.

    Each epoch reshuffles the training patches and draws new noise from the
    Gaussian family of level ``cfg.eps``. All randomness derives from
    ``cfg.seed``, so two runs with equal inputs give identical parameters and
    identical log rows (wall time aside).

    Args:
        corpus: Clean patches
        cfg: Training settings

    Returns:
        (final parameters, per-epoch log)

    Raises:
        EmptyCorpusError: corpus has no patches
        TrainingDivergenceError: loss or parameters stop being finite
    """
    if not corpus:
        raise EmptyCorpusError("Training corpus is empty")
    train_patches, val_patches = split_validation(corpus, cfg.val_fraction)
    val_pairs = validation_pairs(val_patches, cfg.val_sigma, cfg.seed)

    params = init_model(cfg.arch, derive_seed(cfg.seed, SeedDomain.INIT))
    steps_per_epoch = math.ceil(len(train_patches) / cfg.batch_size)
    optimizer = Adam(cfg.learning_rate, cfg.epochs * steps_per_epoch)
    spec = NoiseSpec.gaussian_family(cfg.eps)
    attack_cfg = cfg.attack_config(train_patches[0].clean.size)
    log = TrainLog()

    logger.info(
        f"Training {cfg.mode.value} denoiser on {len(train_patches)} patches "
        f"({len(val_patches)} held out) for {cfg.epochs} epochs, seed {cfg.seed}"
    )
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        order = Rng.derived(cfg.seed, SeedDomain.SHUFFLE, epoch).permutation(len(train_patches))
        noise_rng = Rng.derived(cfg.seed, SeedDomain.TRAIN_NOISE, epoch)
        weighted_loss = 0.0
        for step in range(steps_per_epoch):
            indices = order[step * cfg.batch_size:(step + 1) * cfg.batch_size]
            batch = noisy_batch([train_patches[i] for i in indices], spec, noise_rng)
            loss, grads = loss_and_grads(params, batch, cfg.mode, attack_cfg, cfg.alpha, cfg.threads)
            if not (math.isfinite(loss) and finite_grads(grads)):
                raise TrainingDivergenceError(
                    f"Loss diverged at epoch {epoch}, step {step} (loss {loss})", epoch, step
                )
            try:
                params = optimizer.step(params, grads)
            except NonFiniteTensorError as e:
                logger.exception(f"Parameter update produced non-finite values at epoch {epoch}, step {step}")
                raise TrainingDivergenceError(
                    f"Parameters diverged at epoch {epoch}, step {step}", epoch, step
                ) from e
            weighted_loss += loss * len(batch)

        record = EpochRecord(
            epoch=epoch,
            loss=weighted_loss / len(train_patches),
            psnr_val=validation_psnr(params, val_pairs),
            seconds=time.perf_counter() - started,
        )
        log.append(record)
        logger.info(
            f"Epoch {epoch + 1}/{cfg.epochs}: loss {record.loss:.6g}, "
            f"validation PSNR {record.psnr_val:.2f} dB ({record.seconds:.1f}s)"
        )
    return params, log
