"""Baseline JPEG encoder for coefficient planes.

Writes grayscale or 4:4:4 YCbCr streams using the standard example Huffman
tables. Inverts bit-exactly through the parser at the coefficient level.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import DimensionError
from .entropy import BitWriter, HuffmanEncoder, encode_block
from .tables import (STD_AC_CHROMA, STD_AC_LUMA, STD_DC_CHROMA, STD_DC_LUMA,
                     to_zigzag)
from .types import CoeffPlane, FrameInfo, HuffmanTable, QuantMatrix

_JFIF_APP0 = b"JFIF\x00" + struct.pack(">BBBHHBB", 1, 1, 0, 1, 1, 0, 0)


def _segment(marker: int, payload: bytes) -> bytes:
    return struct.pack(">HH", marker, len(payload) + 2) + payload


def _dht_payload(table: HuffmanTable) -> bytes:
    return (bytes([table.table_class << 4 | table.table_id])
            + bytes(table.counts) + bytes(table.symbols))


def encode_jpeg(planes: list[CoeffPlane], qmatrices: list[QuantMatrix],
                frame: FrameInfo, _restart_interval: int = 0) -> bytes:
    """Serialize quantized coefficient planes to a baseline JPEG stream.

    ``_restart_interval`` exists for exercising the restart-marker parse
    path in tests; production callers leave it at 0.
    """
    ncomp = frame.component_count
    if len(planes) != ncomp or len(qmatrices) != ncomp:
        raise DimensionError("planes/qmatrices must match the frame component count")
    for plane in planes:
        if (plane.height_blocks, plane.width_blocks) != (frame.height_blocks, frame.width_blocks):
            raise DimensionError(
                f"plane grid {plane.height_blocks}x{plane.width_blocks} does not match "
                f"frame {frame.height_blocks}x{frame.width_blocks}")

    out = bytearray()
    out += struct.pack(">H", 0xFFD8)
    out += _segment(0xFFE0, _JFIF_APP0)

    for i, q in enumerate(qmatrices):
        payload = bytes([i]) + bytes(to_zigzag(q.flat).astype(np.uint8))
        out += _segment(0xFFDB, payload)

    sof = struct.pack(">BHHB", 8, frame.height, frame.width, ncomp)
    for i, comp in enumerate(frame.components):
        sof += struct.pack("BBB", comp.component_id, 0x11, i)
    out += _segment(0xFFC0, sof)

    huff_tables = [STD_DC_LUMA, STD_AC_LUMA]
    if ncomp == 3:
        huff_tables += [STD_DC_CHROMA, STD_AC_CHROMA]
    out += _segment(0xFFC4, b"".join(_dht_payload(t) for t in huff_tables))

    if _restart_interval:
        out += _segment(0xFFDD, struct.pack(">H", _restart_interval))

    sos = bytes([ncomp])
    for i, comp in enumerate(frame.components):
        tbl = 0x00 if i == 0 else 0x11
        sos += bytes([comp.component_id, tbl])
    sos += bytes([0, 63, 0])
    out += _segment(0xFFDA, sos)

    out += _encode_scan(planes, frame, _restart_interval)
    out += struct.pack(">H", 0xFFD9)
    return bytes(out)


def _encode_scan(planes: list[CoeffPlane], frame: FrameInfo, restart_interval: int) -> bytes:
    ncomp = frame.component_count
    encs = [(HuffmanEncoder(STD_DC_LUMA), HuffmanEncoder(STD_AC_LUMA))]
    if ncomp == 3:
        chroma = (HuffmanEncoder(STD_DC_CHROMA), HuffmanEncoder(STD_AC_CHROMA))
        encs += [chroma, chroma]

    writer = BitWriter()
    preds = [0] * ncomp
    mcus_x, mcus_y = frame.width_blocks, frame.height_blocks
    rst_index = 0
    for mcu in range(mcus_x * mcus_y):
        if restart_interval and mcu and mcu % restart_interval == 0:
            writer.pad_to_byte()
            writer.write_raw(struct.pack(">H", 0xFFD0 + (rst_index % 8)))
            rst_index += 1
            preds = [0] * ncomp
        my, mx = divmod(mcu, mcus_x)
        for ci in range(ncomp):
            zz = to_zigzag(planes[ci].blocks[my, mx].reshape(64)).tolist()
            dc_enc, ac_enc = encs[ci]
            preds[ci] = encode_block(writer, zz, dc_enc, ac_enc, preds[ci])
    return writer.getvalue()
