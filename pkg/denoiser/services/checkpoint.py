import logging
import struct
import zlib
from pathlib import Path
from typing import Union

import numpy as np

from tensorcore.exceptions import NonFiniteTensorError

from ..arch import ArchConfig, ModelParams
from ..exceptions import (
    CheckpointChecksumError, CheckpointFormatError, CheckpointIOError, CheckpointVersionError,
    InvalidArchitectureError,
)

logger = logging.getLogger(__name__)

MAGIC = b"OBSD"
VERSION = 1
_U32 = struct.Struct("<I")
_ARCH = struct.Struct("<IIIIIB")
_FLOAT = np.dtype("<f8")


class CheckpointService:
    """Binary checkpoint format for ModelParams.

    Layout: magic ``OBSD``, u32 version, arch fields (depth, width, kernel,
    channels_in, channels_out as u32, residual as u8), then for every kernel
    and bias tensor its u32 rank, u32 dims and little-endian float64 data,
    then the CRC32 of all preceding bytes.
    """

    @staticmethod
    def serialize(params: ModelParams) -> bytes:
        arch = params.arch
        parts = [
            MAGIC,
            _U32.pack(VERSION),
            _ARCH.pack(arch.depth, arch.width, arch.kernel, arch.channels_in, arch.channels_out, int(arch.residual)),
        ]
        for tensor in params.tensors():
            parts.append(_U32.pack(tensor.ndim))
            parts.extend(_U32.pack(d) for d in tensor.shape)
            parts.append(tensor.astype(_FLOAT).tobytes())
        body = b"".join(parts)
        return body + _U32.pack(zlib.crc32(body))

    @staticmethod
    def deserialize(data: bytes) -> ModelParams:
        if data[:4] != MAGIC:
            raise CheckpointFormatError(f"Bad checkpoint magic {data[:4]!r}; expected {MAGIC!r}")
        if len(data) < len(MAGIC) + 2 * _U32.size:
            raise CheckpointChecksumError(f"Checkpoint of {len(data)} bytes is too short to carry a checksum")
        body, (stored,) = data[:-_U32.size], _U32.unpack(data[-_U32.size:])
        actual = zlib.crc32(body)
        if actual != stored:
            raise CheckpointChecksumError(f"Checkpoint CRC32 mismatch: stored {stored:#010x}, computed {actual:#010x}")
        (version,) = _U32.unpack_from(body, len(MAGIC))
        if version != VERSION:
            raise CheckpointVersionError(f"Checkpoint version {version} is not supported (expected {VERSION})")

        try:
            offset = len(MAGIC) + _U32.size
            depth, width, kernel, c_in, c_out, residual = _ARCH.unpack_from(body, offset)
            offset += _ARCH.size
            arch = ArchConfig(depth, width, kernel, c_in, c_out, bool(residual))
            tensors = []
            for _ in range(2 * depth):
                (rank,) = _U32.unpack_from(body, offset)
                offset += _U32.size
                shape = struct.unpack_from(f"<{rank}I", body, offset)
                offset += rank * _U32.size
                count = int(np.prod(shape, dtype=np.int64))
                values = np.frombuffer(body, dtype=_FLOAT, count=count, offset=offset)
                offset += count * _FLOAT.itemsize
                tensors.append(values.astype(np.float64).reshape(shape))
            if offset != len(body):
                raise CheckpointFormatError(f"Checkpoint has {len(body) - offset} trailing bytes")
            return ModelParams.from_tensors(arch, tensors)
        except (struct.error, ValueError, InvalidArchitectureError, NonFiniteTensorError) as e:
            raise CheckpointFormatError(f"Unparsable checkpoint body: {e}") from e

    @staticmethod
    def save(params: ModelParams, path: Union[str, Path]) -> Path:
        path = Path(path)
        try:
            path.write_bytes(CheckpointService.serialize(params))
        except OSError as e:
            logger.exception(f"Error writing checkpoint {path}")
            raise CheckpointIOError(f"Cannot write checkpoint {path}: {e}") from e
        logger.info(f"Saved checkpoint {path} ({params.num_parameters} parameters)")
        return path

    @staticmethod
    def load(path: Union[str, Path]) -> ModelParams:
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            logger.exception(f"Error reading checkpoint {path}")
            raise CheckpointIOError(f"Cannot read checkpoint {path}: {e}") from e
        params = CheckpointService.deserialize(data)
        logger.info(f"Loaded checkpoint {path}: {params.arch}")
        return params

    @staticmethod
    def roundtrip(params: ModelParams, path: Union[str, Path]) -> ModelParams:
        CheckpointService.save(params, path)
        return CheckpointService.load(path)


save_checkpoint = CheckpointService.save
load_checkpoint = CheckpointService.load
checkpoint_roundtrip = CheckpointService.roundtrip
