"""Little-endian helpers shared by the binary containers."""

from typing import Tuple
import numpy as np
from app.errors import ContainerError


class BinaryReader:
    """Sequential reader over a byte buffer that fails loudly on truncation."""

    def __init__(self, data: bytes, source: str) -> None:
        self.data = data
        self.source = source
        self.offset = 0

    def read(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        if self.offset + size > len(self.data):
            raise ContainerError(
                f"{self.source}: truncated, needed {size} bytes at offset {self.offset}"
            )
        values = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.offset)
        self.offset += size
        return values.copy()

    def read_matrix(self, shape: Tuple[int, ...]) -> np.ndarray:
        return self.read("<f8", int(np.prod(shape))).reshape(shape)

    def expect_magic(self, magic: bytes) -> None:
        found = self.read("S4", 1)[0]
        if found != magic:
            raise ContainerError(f"{self.source}: bad magic {found!r}, expected {magic!r}")

    def expect_end(self) -> None:
        if self.offset != len(self.data):
            raise ContainerError(
                f"{self.source}: {len(self.data) - self.offset} trailing bytes"
            )


def u32(*values: int) -> bytes:
    return np.asarray(values, dtype="<u4").tobytes()


def f64(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype="<f8").tobytes()
