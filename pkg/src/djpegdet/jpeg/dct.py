"""Pixel <-> quantized-coefficient block transforms.

Uses the orthonormal 2-D type-II DCT with the standard JPEG normalization,
computed in double precision. Quantization rounds half away from zero.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from .types import CoeffPlane, QuantMatrix

# DCT_MATRIX[u, x] = c(u) * cos((2x + 1) u pi / 16), c(0) = sqrt(1/8),
# c(u>0) = sqrt(2/8); rows are orthonormal.
_u = np.arange(8).reshape(8, 1)
_x = np.arange(8).reshape(1, 8)
DCT_MATRIX = np.cos((2 * _x + 1) * _u * np.pi / 16) * np.sqrt(2.0 / 8.0)
DCT_MATRIX[0, :] = np.sqrt(1.0 / 8.0)
del _u, _x


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero."""
    return np.trunc(x + np.copysign(0.5, x))


def forward_block(pixels: np.ndarray, q: QuantMatrix) -> np.ndarray:
    """Level-shift, transform and quantize one 8x8 pixel block.

    Returns the 8x8 quantized coefficients as int32.
    """
    px = np.asarray(pixels)
    if px.shape != (8, 8):
        raise DomainError(f"pixel block must be 8x8, got {px.shape}")
    if px.min() < 0 or px.max() > 255:
        raise DomainError("pixel values must lie in [0, 255]")
    shifted = px.astype(np.float64) - 128.0
    coeffs = DCT_MATRIX @ shifted @ DCT_MATRIX.T
    return round_half_away(coeffs / q.steps).astype(np.int32)


def inverse_block(coeffs: np.ndarray, q: QuantMatrix) -> np.ndarray:
    """Dequantize, inverse-transform, shift and clamp one 8x8 block.

    Returns pixel values in [0, 255] as int32.
    """
    cf = np.asarray(coeffs)
    if cf.shape != (8, 8):
        raise DomainError(f"coefficient block must be 8x8, got {cf.shape}")
    dequant = cf.astype(np.float64) * q.steps
    pixels = DCT_MATRIX.T @ dequant @ DCT_MATRIX + 128.0
    return np.clip(round_half_away(pixels), 0, 255).astype(np.int32)


def forward_plane(pixels: np.ndarray, q: QuantMatrix, component_id: int = 0) -> CoeffPlane:
    """Vectorized :func:`forward_block` over a full grayscale plane whose
    dimensions are multiples of 8."""
    px = np.asarray(pixels)
    if px.ndim != 2 or px.shape[0] % 8 or px.shape[1] % 8 or px.size == 0:
        raise DomainError(f"plane dimensions must be non-zero multiples of 8, got {px.shape}")
    if px.min() < 0 or px.max() > 255:
        raise DomainError("pixel values must lie in [0, 255]")
    hb, wb = px.shape[0] // 8, px.shape[1] // 8
    blocks = px.astype(np.float64).reshape(hb, 8, wb, 8).transpose(0, 2, 1, 3) - 128.0
    coeffs = np.matmul(DCT_MATRIX, np.matmul(blocks, DCT_MATRIX.T))
    quantized = round_half_away(coeffs / q.steps).astype(np.int32)
    return CoeffPlane(quantized, component_id)


def inverse_plane(plane: CoeffPlane, q: QuantMatrix) -> np.ndarray:
    """Vectorized :func:`inverse_block`; returns a (H, W) int32 pixel array."""
    dequant = plane.blocks.astype(np.float64) * q.steps
    blocks = np.matmul(DCT_MATRIX.T, np.matmul(dequant, DCT_MATRIX)) + 128.0
    blocks = np.clip(round_half_away(blocks), 0, 255).astype(np.int32)
    hb, wb = plane.height_blocks, plane.width_blocks
    return blocks.transpose(0, 2, 1, 3).reshape(hb * 8, wb * 8)
