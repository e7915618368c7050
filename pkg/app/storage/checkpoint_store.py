"""Mask network checkpoints in the MNET binary container.

Layout (little-endian): b"MNET", version u32, n_dims u32, dims u32[n_dims],
then W1, b1, W2, b2, W3, b3 as row-major f64, then the input mean and input
scale vectors (f64[bins] each), then model seed and train seed as u64.
"""

import logging
from pathlib import Path
from typing import Union
import numpy as np
from app.errors import ContainerError
from app.services.mask_net import MaskNetModel
from app.storage.binary import BinaryReader, f64, u32

logger = logging.getLogger(__name__)

MAGIC = b"MNET"
VERSION = 1


class CheckpointStore:
    """Reads and writes MNET checkpoint files."""

    def encode(self, model: MaskNetModel) -> bytes:
        """Serialize `model` to bytes."""
        chunks = [MAGIC, u32(VERSION, len(model.layer_dims), *model.layer_dims)]
        chunks.extend(f64(p) for p in model.parameters())
        chunks.append(f64(model.input_mean))
        chunks.append(f64(model.input_scale))
        chunks.append(np.asarray([model.seed, model.train_seed], dtype="<u8").tobytes())
        return b"".join(chunks)

    def decode(self, data: bytes, source: str = "<bytes>") -> MaskNetModel:
        """Rebuild a model from `encode` output."""
        reader = BinaryReader(data, source)
        reader.expect_magic(MAGIC)
        version = int(reader.read("<u4", 1)[0])
        if version != VERSION:
            raise ContainerError(f"{source}: unsupported checkpoint version {version}")
        n_dims = int(reader.read("<u4", 1)[0])
        dims = [int(d) for d in reader.read("<u4", n_dims)]
        if n_dims != 4 or dims[-1] != 2 * dims[0] or min(dims) < 1:
            raise ContainerError(f"{source}: invalid layer dims {dims}")

        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(reader.read_matrix((fan_out, fan_in)))
            biases.append(reader.read("<f8", fan_out))
        input_mean = reader.read("<f8", dims[0])
        input_scale = reader.read("<f8", dims[0])
        seed, train_seed = (int(s) for s in reader.read("<u8", 2))
        reader.expect_end()
        return MaskNetModel(
            layer_dims=dims,
            weights=weights,
            biases=biases,
            seed=seed,
            train_seed=train_seed,
            input_mean=input_mean,
            input_scale=input_scale,
        )

    def save(self, model: MaskNetModel, path: Union[str, Path]) -> Path:
        """Write a checkpoint file."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.encode(model))
        logger.info(f"Checkpoint written: {path}")
        return path

    def load(self, path: Union[str, Path]) -> MaskNetModel:
        """Read a checkpoint file."""
        path = Path(path)
        return self.decode(path.read_bytes(), str(path))


checkpoint_store = CheckpointStore()
