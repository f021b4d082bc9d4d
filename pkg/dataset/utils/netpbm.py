import io
import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from tensorcore.primitives import as_tensor

from ..exceptions import ImageFormatError, MalformedHeaderError, TruncatedImageError, UnsupportedMaxvalError

logger = logging.getLogger(__name__)

MAXVAL = 255
_MAGIC = (b"P5", b"P6")
_MODES = {"L": 1, "RGB": 3}


class NetpbmCodec:
    """Binary PGM (P5) and PPM (P6) images with maxval 255, through Pillow.

    Decoded images are float64 tensors of shape C x H x W with values b/255.
    """

    @staticmethod
    def _open(data: bytes) -> Image.Image:
        magic = data[:2]
        if magic not in _MAGIC:
            raise MalformedHeaderError(f"Unsupported netpbm magic {magic!r}; expected P5 or P6")
        try:
            image = Image.open(io.BytesIO(data), formats=["PPM"])
        except (OSError, ValueError, SyntaxError) as e:
            raise MalformedHeaderError(f"Malformed netpbm header: {e}") from e
        if image.width < 1 or image.height < 1:
            raise MalformedHeaderError(f"Invalid netpbm dimensions {image.width}x{image.height}")
        # Pillow decodes maxval 255 with the raw decoder and anything else with its own
        if image.mode not in _MODES or not image.tile or image.tile[0][0] != "raw":
            raise UnsupportedMaxvalError(f"Netpbm maxval other than {MAXVAL} is not supported")
        return image

    @staticmethod
    def decode(data: bytes) -> np.ndarray:
        """Decode netpbm bytes into a C x H x W tensor in [0, 1]."""
        image = NetpbmCodec._open(data)
        try:
            image.load()
        except (OSError, ValueError) as e:
            raise TruncatedImageError(
                f"Netpbm pixel data is incomplete for a {image.width}x{image.height} {image.mode} image: {e}"
            ) from e
        pixels = np.asarray(image, dtype=np.uint8).reshape(image.height, image.width, _MODES[image.mode])
        return as_tensor(pixels.transpose(2, 0, 1)) / MAXVAL

    @staticmethod
    def encode(image) -> bytes:
        """Encode a tensor (H x W, 1 x H x W or 3 x H x W) as P5/P6 bytes."""
        image = as_tensor(image, check_finite=True)
        if image.ndim == 2:
            image = image[None]
        if image.ndim != 3 or image.shape[0] not in _MODES.values():
            raise ImageFormatError(f"Cannot encode tensor of shape {image.shape} as PGM/PPM")
        pixels = np.rint(np.clip(image, 0.0, 1.0) * MAXVAL).astype(np.uint8).transpose(1, 2, 0)
        if pixels.shape[2] == 1:
            pixels = pixels[:, :, 0]
        buffer = io.BytesIO()
        Image.fromarray(np.ascontiguousarray(pixels)).save(buffer, format="PPM")
        return buffer.getvalue()

    @staticmethod
    def read(path: Union[str, Path]) -> np.ndarray:
        logger.debug(f"Reading netpbm image: {path}")
        return NetpbmCodec.decode(Path(path).read_bytes())

    @staticmethod
    def write(path: Union[str, Path], image) -> Path:
        path = Path(path)
        path.write_bytes(NetpbmCodec.encode(image))
        logger.debug(f"Wrote netpbm image: {path}")
        return path


read_image = NetpbmCodec.read
write_image = NetpbmCodec.write
