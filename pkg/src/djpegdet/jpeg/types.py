"""Core JPEG-domain types: quantization matrices, coefficient planes,
frame metadata, Huffman table descriptions, and the scalar<->2-D
frequency index conversions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import CorruptBitstream, DimensionError, DomainError

# Baseline 8-bit entropy coding limits: AC magnitudes fit in size
# categories 1..10, DC differences in 0..11.
AC_MAX = 1023
DC_DIFF_MAX = 2047


def freq_2d_to_1d(k1: int, k2: int) -> int:
    """Map a 2-D frequency index (k1, k2), both in 1..8, to the scalar
    raster index k in 1..64."""
    if not (1 <= k1 <= 8 and 1 <= k2 <= 8):
        raise DomainError(f"frequency indices must be in 1..8, got ({k1}, {k2})")
    return (k1 - 1) * 8 + k2


def freq_1d_to_2d(k: int) -> tuple[int, int]:
    """Inverse of :func:`freq_2d_to_1d`; k in 1..64."""
    if not 1 <= k <= 64:
        raise DomainError(f"scalar frequency must be in 1..64, got {k}")
    if k % 8 == 0:
        return (k // 8, 8)
    return (k // 8 + 1, k % 8)


@dataclass(frozen=True)
class QuantMatrix:
    """8x8 table of quantization step sizes (q-factors), raster order."""

    steps: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.steps, dtype=np.int64)
        if arr.shape != (8, 8):
            raise DomainError(f"quantization matrix must be 8x8, got {arr.shape}")
        if arr.min() < 1 or arr.max() > 255:
            raise DomainError("quantization steps must lie in [1, 255]")
        object.__setattr__(self, "steps", arr)

    def step(self, k: int) -> int:
        """Step size at scalar frequency k (1..64)."""
        k1, k2 = freq_1d_to_2d(k)
        return int(self.steps[k1 - 1, k2 - 1])

    @property
    def flat(self) -> np.ndarray:
        """Raster-order flat view (64,)."""
        return self.steps.reshape(64)

    @classmethod
    def from_flat(cls, values) -> "QuantMatrix":
        return cls(np.asarray(values, dtype=np.int64).reshape(8, 8))

    def __eq__(self, other) -> bool:
        return isinstance(other, QuantMatrix) and bool(np.array_equal(self.steps, other.steps))

    def __hash__(self):
        return hash(self.steps.tobytes())


@dataclass
class CoeffPlane:
    """Grid of quantized 8x8 DCT coefficient blocks for one component.

    ``blocks`` has shape (height_blocks, width_blocks, 8, 8); values are the
    quantized integers exactly as stored in a bitstream (never dequantized).
    """

    blocks: np.ndarray
    component_id: int = 0

    def __post_init__(self):
        arr = np.asarray(self.blocks, dtype=np.int32)
        if arr.ndim != 4 or arr.shape[2:] != (8, 8):
            raise DimensionError(f"coefficient blocks must have shape (hb, wb, 8, 8), got {arr.shape}")
        if arr.size and (arr.min() < -32768 or arr.max() > 32767):
            raise DomainError("coefficients must fit in signed 16 bits")
        self.blocks = arr

    @property
    def height_blocks(self) -> int:
        return self.blocks.shape[0]

    @property
    def width_blocks(self) -> int:
        return self.blocks.shape[1]

    @property
    def n_blocks(self) -> int:
        return self.height_blocks * self.width_blocks

    def flat_blocks(self) -> np.ndarray:
        """All blocks as (n_blocks, 64), raster within each block so that
        column k-1 holds frequency k of Eq.-style scalar indexing."""
        return self.blocks.reshape(self.n_blocks, 64)


@dataclass(frozen=True)
class ComponentInfo:
    component_id: int
    h_sampling: int = 1
    v_sampling: int = 1
    quant_table_id: int = 0


@dataclass
class FrameInfo:
    """Frame-level metadata for the supported baseline subset
    (8-bit, grayscale or 4:4:4 YCbCr)."""

    width: int
    height: int
    components: list[ComponentInfo] = field(default_factory=list)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DomainError("frame dimensions must be positive")
        if len(self.components) not in (1, 3):
            raise DomainError("only 1- or 3-component frames are supported")
        for c in self.components:
            if (c.h_sampling, c.v_sampling) != (1, 1):
                raise DomainError("only 4:4:4 / single-component sampling supported")

    @property
    def component_count(self) -> int:
        return len(self.components)

    @property
    def width_blocks(self) -> int:
        return (self.width + 7) // 8

    @property
    def height_blocks(self) -> int:
        return (self.height + 7) // 8

    @classmethod
    def grayscale(cls, width: int, height: int) -> "FrameInfo":
        return cls(width, height, [ComponentInfo(1, 1, 1, 0)])

    @classmethod
    def ycbcr444(cls, width: int, height: int) -> "FrameInfo":
        return cls(width, height, [ComponentInfo(i + 1, 1, 1, i) for i in range(3)])


@dataclass
class HuffmanTable:
    """Canonical Huffman table as carried by a DHT segment.

    ``counts[i]`` is the number of codes of length i+1 (16 entries);
    ``symbols`` lists the coded values in canonical order.
    """

    table_class: int  # 0 = DC, 1 = AC
    table_id: int
    counts: list[int]
    symbols: list[int]

    def __post_init__(self):
        if self.table_class not in (0, 1):
            raise CorruptBitstream(f"bad Huffman table class {self.table_class}")
        if len(self.counts) != 16:
            raise CorruptBitstream("Huffman table needs 16 length counts")
        if sum(self.counts) != len(self.symbols):
            raise CorruptBitstream("Huffman symbol count does not match length counts")
        if len(self.symbols) > 256:
            raise CorruptBitstream("Huffman table has more than 256 symbols")
        # Prefix-free feasibility: the running canonical code may never
        # exceed the code space of its length.
        code = 0
        for length in range(1, 17):
            code += self.counts[length - 1]
            if code > (1 << length):
                raise CorruptBitstream("Huffman length counts overflow the code space")
            code <<= 1
