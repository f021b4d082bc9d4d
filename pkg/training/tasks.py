import logging
import re
from pathlib import Path
from typing import Any, Dict, Optional

from celery import shared_task

from dataset.services.corpus import CorpusSource
from denoiser.services.checkpoint import save_checkpoint

from .config import TrainConfig
from .services import train

logger = logging.getLogger(__name__)


def section_slug(section: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", section)


@shared_task(name="training.tasks.train_and_evaluate")
def train_and_evaluate(
    train_source: Dict[str, Any],
    eval_source: Dict[str, Any],
    train_config: Dict[str, Any],
    protocol: Dict[str, Any],
    section: str,
    eval_seed: int,
    out_dir: Optional[str] = None,
) -> Dict[str, Any]:
    """Celery task: train one model, evaluate it and return JSON-safe report rows.

    Args:
        train_source: CorpusSource payload for training patches
        eval_source: CorpusSource payload for evaluation patches
        train_config: TrainConfig payload
        protocol: EvalProtocol payload
        section: Report section label of this run
        eval_seed: Root seed of the evaluation noise
        out_dir: When set, checkpoint and training log are written there

    Returns:
        Dict with the section, report rows, training log rows and checkpoint path
    """
    from evaluation.protocol import EvalProtocol
    from evaluation.services import evaluate

    logger.info(f"Starting training task for section {section}")
    try:
        cfg = TrainConfig.from_dict(train_config)
        eval_corpus = CorpusSource.from_dict(eval_source)
        params, log = train(CorpusSource.from_dict(train_source).load(), cfg)
        report = evaluate(
            params, eval_corpus.load(), EvalProtocol.from_dict(protocol), eval_seed,
            corpus_name=eval_corpus.name, section=section,
        )
    except Exception as e:
        logger.exception(f"Training task for section {section} failed: {str(e)}")
        raise

    checkpoint = None
    if out_dir:
        target = Path(out_dir)
        target.mkdir(parents=True, exist_ok=True)
        slug = section_slug(section)
        checkpoint = str(save_checkpoint(params, target / f"{slug}.obsd"))
        log.write_csv(target / f"{slug}_train_log.csv")
    logger.info(f"Finished training task for section {section}")
    return {
        "section": section,
        "rows": report.to_dicts(),
        "log": log.to_dicts(),
        "checkpoint": checkpoint,
    }
