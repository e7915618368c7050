"""Spectrograms in the SPEC binary container.

Layout (little-endian): b"SPEC", version u32, bins u32, frames u32,
fft_len u32, hop u32, then magnitude and phase as row-major f64 matrices.
The window length is implied by 50% overlap (window_len = 2 * hop).
"""

import logging
from pathlib import Path
from typing import Union
from pydantic import ValidationError
from app.errors import ContainerError, SignalError
from app.models import StftConfig
from app.services.signal_core import Spectrogram
from app.storage.binary import BinaryReader, f64, u32

logger = logging.getLogger(__name__)

MAGIC = b"SPEC"
VERSION = 1


class SpectrogramStore:
    """Reads and writes SPEC spectrogram files."""

    def encode(self, spectrogram: Spectrogram) -> bytes:
        cfg = spectrogram.config
        header = u32(VERSION, spectrogram.bins, spectrogram.num_frames, cfg.fft_len, cfg.hop)
        return b"".join(
            [MAGIC, header, f64(spectrogram.magnitude), f64(spectrogram.phase)]
        )

    def decode(self, data: bytes, source: str = "<bytes>") -> Spectrogram:
        reader = BinaryReader(data, source)
        reader.expect_magic(MAGIC)
        version, bins, frames, fft_len, hop = (int(v) for v in reader.read("<u4", 5))
        if version != VERSION:
            raise ContainerError(f"{source}: unsupported spectrogram version {version}")
        try:
            config = StftConfig(window_len=2 * hop, hop=hop, fft_len=fft_len)
        except ValidationError as e:
            raise ContainerError(f"{source}: invalid framing header: {e}") from e
        if bins != config.bins:
            raise ContainerError(f"{source}: {bins} bins inconsistent with fft_len {fft_len}")
        magnitude = reader.read_matrix((bins, frames))
        phase = reader.read_matrix((bins, frames))
        reader.expect_end()
        try:
            return Spectrogram.from_polar(magnitude, phase, config)
        except SignalError as e:
            raise ContainerError(f"{source}: {e}") from e

    def save(self, spectrogram: Spectrogram, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.encode(spectrogram))
        logger.info(f"Spectrogram written: {path}")
        return path

    def load(self, path: Union[str, Path]) -> Spectrogram:
        path = Path(path)
        return self.decode(path.read_bytes(), str(path))


spectrogram_store = SpectrogramStore()
