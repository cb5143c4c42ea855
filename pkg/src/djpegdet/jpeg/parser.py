"""Baseline JPEG bitstream parser.

Extracts quantization matrices and quantized DCT coefficients directly from
the entropy-coded data, without any pixel-domain decompression. Supported
subset: SOF0 (baseline sequential, Huffman, 8-bit), grayscale or 4:4:4,
restart markers allowed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import CorruptBitstream, MissingTable, UnsupportedMarker
from .entropy import BitReader, HuffmanDecoder, decode_block
from .tables import from_zigzag
from .types import ComponentInfo, CoeffPlane, FrameInfo, HuffmanTable, QuantMatrix

_SOI, _EOI, _SOS, _DQT, _DHT, _DRI, _COM = 0xFFD8, 0xFFD9, 0xFFDA, 0xFFDB, 0xFFC4, 0xFFDD, 0xFFFE
_SOF0 = 0xFFC0
_DAC = 0xFFCC
_RST0, _RST7 = 0xFFD0, 0xFFD7
_APP0, _APP15 = 0xFFE0, 0xFFEF

_UNSUPPORTED_SOF = {
    0xFFC1: "extended sequential DCT",
    0xFFC2: "progressive DCT",
    0xFFC3: "lossless",
    0xFFC5: "differential sequential DCT",
    0xFFC6: "differential progressive DCT",
    0xFFC7: "differential lossless",
    0xFFC9: "extended sequential DCT (arithmetic)",
    0xFFCA: "progressive DCT (arithmetic)",
    0xFFCB: "lossless (arithmetic)",
    0xFFCD: "differential sequential (arithmetic)",
    0xFFCE: "differential progressive (arithmetic)",
    0xFFCF: "differential lossless (arithmetic)",
}


@dataclass
class ParsedJpeg:
    """Parse result: frame metadata plus, per component, the quantization
    matrix as stored and the (still quantized) coefficient plane."""

    frame: FrameInfo
    qmatrices: list[QuantMatrix]
    planes: list[CoeffPlane]
    restart_interval: int = 0


def _read_marker(data: bytes, pos: int) -> tuple[int, int]:
    if pos >= len(data):
        raise CorruptBitstream("unexpected end of file while reading a marker")
    if data[pos] != 0xFF:
        raise CorruptBitstream(f"expected marker at offset {pos}, found 0x{data[pos]:02X}")
    while pos < len(data) and data[pos] == 0xFF:
        pos += 1
    if pos >= len(data):
        raise CorruptBitstream("truncated marker at end of file")
    b = data[pos]
    if b == 0x00:
        raise CorruptBitstream(f"stray stuffed byte outside scan data at offset {pos}")
    return 0xFF00 | b, pos + 1


def _read_segment(data: bytes, pos: int) -> tuple[bytes, int]:
    if pos + 2 > len(data):
        raise CorruptBitstream("truncated segment header")
    (length,) = struct.unpack_from(">H", data, pos)
    if length < 2 or pos + length > len(data):
        raise CorruptBitstream("segment length overruns the file")
    return data[pos + 2:pos + length], pos + length


def _parse_dqt(payload: bytes, tables: dict[int, QuantMatrix]):
    i = 0
    while i < len(payload):
        pq, tq = payload[i] >> 4, payload[i] & 0x0F
        i += 1
        if pq == 1:
            raise UnsupportedMarker("16-bit quantization tables are not baseline")
        if pq != 0 or tq > 3:
            raise CorruptBitstream(f"invalid DQT precision/id byte 0x{payload[i-1]:02X}")
        if i + 64 > len(payload):
            raise CorruptBitstream("truncated quantization table")
        zz = np.frombuffer(payload[i:i + 64], dtype=np.uint8).astype(np.int64)
        if zz.min() < 1:
            raise CorruptBitstream("quantization step of 0 is invalid")
        tables[tq] = QuantMatrix(from_zigzag(zz).reshape(8, 8))
        i += 64
    if i != len(payload):
        raise CorruptBitstream("trailing bytes in DQT segment")


def _parse_dht(payload: bytes, tables: dict[tuple[int, int], HuffmanDecoder]):
    i = 0
    while i < len(payload):
        if i + 17 > len(payload):
            raise CorruptBitstream("truncated Huffman table header")
        tc, th = payload[i] >> 4, payload[i] & 0x0F
        counts = list(payload[i + 1:i + 17])
        i += 17
        total = sum(counts)
        if i + total > len(payload):
            raise CorruptBitstream("truncated Huffman symbol list")
        symbols = list(payload[i:i + total])
        i += total
        if tc > 1 or th > 3:
            raise CorruptBitstream(f"invalid DHT class/id ({tc}, {th})")
        tables[(tc, th)] = HuffmanDecoder(HuffmanTable(tc, th, counts, symbols))


def _parse_sof0(payload: bytes) -> FrameInfo:
    if len(payload) < 6:
        raise CorruptBitstream("SOF segment too short")
    precision, height, width, ncomp = struct.unpack_from(">BHHB", payload, 0)
    if precision != 8:
        raise UnsupportedMarker(f"{precision}-bit precision is not baseline")
    if ncomp not in (1, 3):
        raise UnsupportedMarker(f"{ncomp}-component frames are not supported")
    if len(payload) != 6 + 3 * ncomp:
        raise CorruptBitstream("SOF component list has the wrong size")
    comps = []
    for ci in range(ncomp):
        cid, sampling, tq = payload[6 + 3 * ci:9 + 3 * ci]
        h, v = sampling >> 4, sampling & 0x0F
        if (h, v) != (1, 1):
            raise UnsupportedMarker("chroma subsampling is not supported (4:4:4 only)")
        comps.append(ComponentInfo(cid, h, v, tq))
    return FrameInfo(width, height, comps)


def _decode_scan(data: bytes, pos: int, frame: FrameInfo,
                 scan_tables: list[tuple[HuffmanDecoder, HuffmanDecoder]],
                 restart_interval: int) -> tuple[list[np.ndarray], int]:
    ncomp = frame.component_count
    mcus_x, mcus_y = frame.width_blocks, frame.height_blocks
    blocks = [np.zeros((mcus_y, mcus_x, 8, 8), dtype=np.int32) for _ in range(ncomp)]
    preds = [0] * ncomp
    reader = BitReader(data, pos)
    rst_index = 0
    for mcu in range(mcus_x * mcus_y):
        if restart_interval and mcu and mcu % restart_interval == 0:
            reader.align()
            marker = reader.read_marker()
            if marker != _RST0 + (rst_index % 8):
                raise CorruptBitstream(
                    f"expected RST{rst_index % 8}, found marker 0x{marker:04X}")
            rst_index += 1
            preds = [0] * ncomp
        my, mx = divmod(mcu, mcus_x)
        for ci in range(ncomp):
            dc_dec, ac_dec = scan_tables[ci]
            zz, preds[ci] = decode_block(reader, dc_dec, ac_dec, preds[ci])
            blocks[ci][my, mx] = from_zigzag(np.asarray(zz, dtype=np.int32)).reshape(8, 8)
    reader.align()
    return blocks, reader.pos


def parse_jpeg(data: bytes) -> ParsedJpeg:
    """Parse a baseline JPEG byte stream into quantized coefficients.

    Returns the frame info, the per-component quantization matrices exactly
    as stored in the DQT segments (de-zigzagged to raster order), and the
    per-component coefficient planes with DC differencing already resolved.
    """
    if len(data) < 4 or data[0] != 0xFF or data[1] != 0xD8:
        raise CorruptBitstream("stream does not start with an SOI marker")
    pos = 2
    qtables: dict[int, QuantMatrix] = {}
    htables: dict[tuple[int, int], HuffmanDecoder] = {}
    frame: FrameInfo | None = None
    planes_blocks: list[np.ndarray] | None = None
    restart_interval = 0

    while True:
        marker, pos = _read_marker(data, pos)
        if marker == _EOI:
            break
        if marker == _SOI or _RST0 <= marker <= _RST7:
            raise CorruptBitstream(f"unexpected marker 0x{marker:04X} between segments")
        if marker in _UNSUPPORTED_SOF:
            raise UnsupportedMarker(f"unsupported frame type: {_UNSUPPORTED_SOF[marker]}")
        if marker == _DAC:
            raise UnsupportedMarker("arithmetic coding is not supported")

        payload, pos = _read_segment(data, pos)
        if marker == _DQT:
            _parse_dqt(payload, qtables)
        elif marker == _DHT:
            _parse_dht(payload, htables)
        elif marker == _DRI:
            if len(payload) != 2:
                raise CorruptBitstream("DRI payload must be 2 bytes")
            (restart_interval,) = struct.unpack(">H", payload)
        elif marker == _SOF0:
            if frame is not None:
                raise CorruptBitstream("multiple frame headers")
            frame = _parse_sof0(payload)
        elif marker == _SOS:
            if frame is None:
                raise CorruptBitstream("scan encountered before frame header")
            scan_tables = _parse_sos_header(payload, frame, htables, qtables)
            planes_blocks, pos = _decode_scan(data, pos, frame, scan_tables, restart_interval)
        elif _APP0 <= marker <= _APP15 or marker == _COM:
            pass  # metadata, ignored
        else:
            raise UnsupportedMarker(f"unsupported marker 0x{marker:04X}")

    if frame is None or planes_blocks is None:
        raise CorruptBitstream("stream ended without a decoded scan")
    qmatrices = [qtables[c.quant_table_id] for c in frame.components]
    planes = [CoeffPlane(b, frame.components[i].component_id)
              for i, b in enumerate(planes_blocks)]
    return ParsedJpeg(frame, qmatrices, planes, restart_interval)


def _parse_sos_header(payload: bytes, frame: FrameInfo,
                      htables: dict[tuple[int, int], HuffmanDecoder],
                      qtables: dict[int, QuantMatrix]):
    if not payload:
        raise CorruptBitstream("empty SOS header")
    ncomp = payload[0]
    if ncomp != frame.component_count:
        raise UnsupportedMarker("non-interleaved scans are not supported")
    if len(payload) != 1 + 2 * ncomp + 3:
        raise CorruptBitstream("SOS header has the wrong size")
    ss, se, a = payload[1 + 2 * ncomp:1 + 2 * ncomp + 3]
    if (ss, se, a) != (0, 63, 0):
        raise CorruptBitstream("spectral selection / approximation invalid for baseline")

    by_id = {c.component_id: c for c in frame.components}
    scan_tables = [None] * frame.component_count
    for i in range(ncomp):
        cid, ts = payload[1 + 2 * i], payload[2 + 2 * i]
        td, ta = ts >> 4, ts & 0x0F
        if cid not in by_id:
            raise CorruptBitstream(f"scan references unknown component {cid}")
        comp_index = frame.components.index(by_id[cid])
        if (0, td) not in htables:
            raise MissingTable(f"scan references undefined DC Huffman table {td}")
        if (1, ta) not in htables:
            raise MissingTable(f"scan references undefined AC Huffman table {ta}")
        scan_tables[comp_index] = (htables[(0, td)], htables[(1, ta)])
    for c in frame.components:
        if c.quant_table_id not in qtables:
            raise MissingTable(f"frame references undefined quantization table {c.quant_table_id}")
    if any(t is None for t in scan_tables):
        raise CorruptBitstream("scan does not cover every frame component")
    return scan_tables
