"""Baseline JPEG codec working at the quantized-coefficient level."""

from .dct import (DCT_MATRIX, forward_block, forward_plane, inverse_block,
                  inverse_plane, round_half_away)
from .encoder import encode_jpeg
from .parser import ParsedJpeg, parse_jpeg
from .tables import (BASE_LUMA_QTABLE, ZIGZAG, ZIGZAG_INV, from_zigzag,
                     standard_qmatrix, to_zigzag)
from .types import (AC_MAX, DC_DIFF_MAX, CoeffPlane, ComponentInfo, FrameInfo,
                    HuffmanTable, QuantMatrix, freq_1d_to_2d, freq_2d_to_1d)

__all__ = [
    "AC_MAX", "BASE_LUMA_QTABLE", "CoeffPlane", "ComponentInfo", "DCT_MATRIX",
    "DC_DIFF_MAX", "FrameInfo", "HuffmanTable", "ParsedJpeg", "QuantMatrix",
    "ZIGZAG", "ZIGZAG_INV", "encode_jpeg", "forward_block", "forward_plane",
    "freq_1d_to_2d", "freq_2d_to_1d", "from_zigzag", "inverse_block",
    "inverse_plane", "parse_jpeg", "round_half_away", "standard_qmatrix",
    "to_zigzag",
]
