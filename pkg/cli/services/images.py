import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from dataset.exceptions import EmptyCorpusError
from dataset.services.corpus import IMAGE_SUFFIXES
from dataset.utils.netpbm import read_image

logger = logging.getLogger(__name__)


def image_files(path: Union[str, Path]) -> List[Path]:
    """A single PGM/PPM file, or every PGM/PPM file of a flat directory in name order."""
    path = Path(path)
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise EmptyCorpusError(f"No such image file or directory: {path}")
    files = sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise EmptyCorpusError(f"No .pgm/.ppm files in {path}")
    return files


def load_images(path: Union[str, Path]) -> List[Tuple[str, np.ndarray]]:
    """(stem, C x H x W tensor) for every image under ``path``."""
    files = image_files(path)
    logger.info(f"Loading {len(files)} image(s) from {path}")
    return [(f.stem, read_image(f)) for f in files]
