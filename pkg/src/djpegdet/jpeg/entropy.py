"""Bit-level IO and canonical Huffman coding for baseline JPEG scans.

The reader operates directly on the file buffer, transparently removing
0xFF 0x00 byte stuffing; restart markers are consumed explicitly by the
scan decoder between restart intervals.
"""

from __future__ import annotations

import numpy as np

from ..errors import CoefficientOutOfRange, CorruptBitstream
from .types import AC_MAX, DC_DIFF_MAX, HuffmanTable


class BitReader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos
        self._bits = 0
        self._nbits = 0

    def _load_byte(self) -> int:
        data, pos = self.data, self.pos
        while True:
            if pos >= len(data):
                raise CorruptBitstream("scan data ended before all blocks were decoded")
            b = data[pos]
            if b != 0xFF:
                self.pos = pos + 1
                return b
            if pos + 1 >= len(data):
                raise CorruptBitstream("truncated stream after 0xFF in scan data")
            nxt = data[pos + 1]
            if nxt == 0x00:  # stuffed data byte
                self.pos = pos + 2
                return 0xFF
            if nxt == 0xFF:  # fill byte, keep scanning
                pos += 1
                continue
            raise CorruptBitstream(
                f"marker 0xFF{nxt:02X} encountered while coefficient bits were expected"
            )

    def read_bit(self) -> int:
        if self._nbits == 0:
            self._bits = self._load_byte()
            self._nbits = 8
        self._nbits -= 1
        return (self._bits >> self._nbits) & 1

    def read_bits(self, n: int) -> int:
        v = 0
        for _ in range(n):
            v = (v << 1) | self.read_bit()
        return v

    def align(self):
        """Drop any remaining bits of the current byte."""
        self._nbits = 0

    def read_marker(self) -> int:
        """Read a marker at a byte-aligned position, skipping 0xFF fill."""
        if self._nbits:
            raise CorruptBitstream("marker read attempted while bits are pending")
        data, pos = self.data, self.pos
        if pos >= len(data) or data[pos] != 0xFF:
            raise CorruptBitstream("expected a marker in scan data")
        while pos < len(data) and data[pos] == 0xFF:
            pos += 1
        if pos >= len(data) or data[pos] == 0x00:
            raise CorruptBitstream("truncated or malformed marker in scan data")
        self.pos = pos + 1
        return 0xFF00 | data[pos]


class BitWriter:
    def __init__(self):
        self._chunks = bytearray()
        self._bits = 0
        self._nbits = 0

    def _emit(self, byte: int):
        self._chunks.append(byte)
        if byte == 0xFF:
            self._chunks.append(0x00)

    def write_bits(self, value: int, n: int):
        for i in range(n - 1, -1, -1):
            self._bits = (self._bits << 1) | ((value >> i) & 1)
            self._nbits += 1
            if self._nbits == 8:
                self._emit(self._bits)
                self._bits = 0
                self._nbits = 0

    def pad_to_byte(self):
        """Fill the current byte with 1 bits (the standard padding)."""
        if self._nbits:
            self.write_bits((1 << (8 - self._nbits)) - 1, 8 - self._nbits)

    def write_raw(self, data: bytes):
        """Append bytes verbatim (markers); only legal at byte boundaries."""
        assert self._nbits == 0
        self._chunks.extend(data)

    def getvalue(self) -> bytes:
        self.pad_to_byte()
        return bytes(self._chunks)


class HuffmanDecoder:
    """Canonical Huffman decoding via the min/max-code method."""

    def __init__(self, table: HuffmanTable):
        self.table = table
        self.mincode = [0] * 17
        self.maxcode = [-1] * 17
        self.valptr = [0] * 17
        code = 0
        ptr = 0
        for length in range(1, 17):
            count = table.counts[length - 1]
            if count:
                self.valptr[length] = ptr
                self.mincode[length] = code
                self.maxcode[length] = code + count - 1
                ptr += count
                code += count
            code <<= 1

    def decode(self, reader: BitReader) -> int:
        code = 0
        for length in range(1, 17):
            code = (code << 1) | reader.read_bit()
            if code <= self.maxcode[length]:
                return self.table.symbols[self.valptr[length] + code - self.mincode[length]]
        raise CorruptBitstream("invalid Huffman code in scan data")


class HuffmanEncoder:
    def __init__(self, table: HuffmanTable):
        self.table = table
        self.codes: dict[int, tuple[int, int]] = {}
        code = 0
        idx = 0
        for length in range(1, 17):
            for _ in range(table.counts[length - 1]):
                self.codes[table.symbols[idx]] = (code, length)
                code += 1
                idx += 1
            code <<= 1

    def encode(self, writer: BitWriter, symbol: int):
        code, length = self.codes[symbol]
        writer.write_bits(code, length)


def extend(value: int, size: int) -> int:
    """Map a raw magnitude field of `size` bits to its signed value."""
    if size == 0:
        return 0
    if value < (1 << (size - 1)):
        return value - (1 << size) + 1
    return value


def magnitude(value: int) -> tuple[int, int]:
    """Size category and raw bits for a signed value."""
    size = int(abs(value)).bit_length()
    bits = value if value >= 0 else value + (1 << size) - 1
    return size, bits


def decode_block(reader: BitReader, dc: HuffmanDecoder, ac: HuffmanDecoder,
                 pred: int) -> tuple[list[int], int]:
    """Decode one block in zig-zag order; returns (coefficients, new DC predictor)."""
    zz = [0] * 64
    size = dc.decode(reader)
    if size > 11:
        raise CorruptBitstream(f"DC size category {size} exceeds baseline limit")
    diff = extend(reader.read_bits(size), size) if size else 0
    zz[0] = pred + diff
    k = 1
    while k < 64:
        rs = ac.decode(reader)
        run, size = rs >> 4, rs & 0x0F
        if size == 0:
            if rs == 0x00:  # EOB
                break
            if rs == 0xF0:  # ZRL
                k += 16
                continue
            raise CorruptBitstream(f"invalid AC symbol 0x{rs:02X}")
        if size > 10:
            raise CorruptBitstream(f"AC size category {size} exceeds baseline limit")
        k += run
        if k > 63:
            raise CorruptBitstream("AC run-length overflows the block")
        zz[k] = extend(reader.read_bits(size), size)
        k += 1
    return zz, zz[0]


def encode_block(writer: BitWriter, zz: list[int], dc: HuffmanEncoder,
                 ac: HuffmanEncoder, pred: int) -> int:
    """Encode one zig-zag-ordered block; returns the new DC predictor."""
    diff = zz[0] - pred
    if abs(diff) > DC_DIFF_MAX:
        raise CoefficientOutOfRange(f"DC difference {diff} exceeds baseline limit {DC_DIFF_MAX}")
    size, bits = magnitude(diff)
    dc.encode(writer, size)
    if size:
        writer.write_bits(bits, size)

    run = 0
    for k in range(1, 64):
        v = zz[k]
        if v == 0:
            run += 1
            continue
        if abs(v) > AC_MAX:
            raise CoefficientOutOfRange(f"AC coefficient {v} exceeds baseline limit {AC_MAX}")
        while run > 15:
            ac.encode(writer, 0xF0)
            run -= 16
        size, bits = magnitude(v)
        ac.encode(writer, (run << 4) | size)
        writer.write_bits(bits, size)
        run = 0
    if run:
        ac.encode(writer, 0x00)
    return zz[0]


def block_to_zigzag_list(block: np.ndarray, zigzag: np.ndarray) -> list[int]:
    return block.reshape(64)[zigzag].tolist()
