"""Histogram + q-factor feature extraction.

A coefficient plane becomes 63 per-AC-frequency histograms over integer bins
[-b, b] (coefficients outside the range are discarded, DC is excluded), and
the final-compression q-factors are replicated across the bin axis to form
the two-channel network input.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .jpeg import ZIGZAG, CoeffPlane, QuantMatrix

ORDERS = ("raster", "zigzag")

# Raster scalar frequencies k = 2..64 visited in each ordering, as 0-based
# positions into a 64-long raster-flat vector.
_AC_RASTER = np.arange(1, 64)
_AC_ZIGZAG = ZIGZAG[1:]


def ac_frequency_order(order: str) -> np.ndarray:
    """0-based raster positions of the 63 AC frequencies in sequence order."""
    if order == "raster":
        return _AC_RASTER.copy()
    if order == "zigzag":
        return _AC_ZIGZAG.copy()
    raise DomainError(f"order must be one of {ORDERS}, got {order!r}")


@dataclass
class HistogramSet:
    """63 x (2b+1) integer histogram counts, frequency-major in canonical
    raster order k = 2..64; bin i of row r counts coefficients equal to
    i - b at frequency r + 2."""

    b: int
    counts: np.ndarray

    def __post_init__(self):
        if self.b < 1:
            raise DomainError("bin range b must be >= 1")
        arr = np.asarray(self.counts, dtype=np.int64)
        if arr.shape != (63, 2 * self.b + 1):
            raise ShapeError(f"expected counts of shape (63, {2*self.b+1}), got {arr.shape}")
        if arr.min() < 0:
            raise DomainError("histogram counts must be non-negative")
        self.counts = arr

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class HQInput:
    """Network input: 63 x (2b+1) x 2 with channel 0 the histogram counts and
    channel 1 the q-factor of that row's frequency repeated across bins."""

    values: np.ndarray
    order: str = "raster"

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 63 or arr.shape[2] != 2:
            raise ShapeError(f"expected values of shape (63, 2b+1, 2), got {arr.shape}")
        self.values = arr

    @property
    def b(self) -> int:
        return (self.values.shape[1] - 1) // 2


def extract_histograms(plane: CoeffPlane, b: int) -> HistogramSet:
    """Count coefficients equal to each integer in [-b, b] per AC frequency."""
    if b < 1:
        raise DomainError("bin range b must be >= 1")
    coeffs = plane.flat_blocks()  # (n_blocks, 64), column k-1 = frequency k
    nbins = 2 * b + 1
    counts = np.empty((63, nbins), dtype=np.int64)
    for row, col in enumerate(range(1, 64)):
        vals = coeffs[:, col]
        in_range = vals[(vals >= -b) & (vals <= b)]
        counts[row] = np.bincount(in_range + b, minlength=nbins)
    return HistogramSet(b, counts)


def assemble_hq(h: HistogramSet, q: QuantMatrix, order: str = "raster") -> HQInput:
    """Pair each frequency's histogram with its replicated q-factor,
    sequencing the 63 rows in raster or zig-zag frequency order."""
    positions = ac_frequency_order(order)
    nbins = 2 * h.b + 1
    values = np.empty((63, nbins, 2), dtype=np.float64)
    values[:, :, 0] = h.counts[positions - 1]
    values[:, :, 1] = np.repeat(q.flat[positions].astype(np.float64)[:, None], nbins, axis=1)
    return HQInput(values, order)


def hq_batch(hists: np.ndarray, qflats: np.ndarray, order: str = "raster") -> np.ndarray:
    """Vectorized assembly for many records.

    hists: (n, 63, 2b+1) canonical-raster counts; qflats: (n, 64) raster
    q-factors. Returns (n, 63, 2b+1, 2) float64 in the requested order.
    """
    positions = ac_frequency_order(order)
    hists = np.asarray(hists)
    qflats = np.asarray(qflats)
    n, _, nbins = hists.shape
    out = np.empty((n, 63, nbins, 2), dtype=np.float64)
    out[..., 0] = hists[:, positions - 1, :]
    out[..., 1] = np.repeat(qflats[:, positions, None].astype(np.float64), nbins, axis=2)
    return out


# ---------------------------------------------------------------------------
# Packed feature file (magic DJPF): label byte + uint32 counts + uint8
# q-factors per record, little-endian.
# ---------------------------------------------------------------------------

_DJPF_MAGIC = b"DJPF"
_DJPF_VERSION = 1


def save_feature_file(path, labels, hists, qflats, b: int, order: str = "raster"):
    """Write labeled histogram records to a DJPF file.

    labels: (n,) 0/1 ints; hists: (n, 63, 2b+1) counts; qflats: (n, 64).
    """
    labels = np.asarray(labels, dtype=np.uint8)
    hists = np.asarray(hists, dtype=np.uint32)
    qflats = np.asarray(qflats, dtype=np.uint8)
    n = labels.shape[0]
    if hists.shape != (n, 63, 2 * b + 1) or qflats.shape != (n, 64):
        raise ShapeError("labels/hists/qflats record counts or shapes disagree")
    order_flag = ORDERS.index(order) if order in ORDERS else None
    if order_flag is None:
        raise DomainError(f"order must be one of {ORDERS}, got {order!r}")
    with open(path, "wb") as fh:
        fh.write(_DJPF_MAGIC)
        fh.write(struct.pack("<BHBI", _DJPF_VERSION, b, order_flag, n))
        for i in range(n):
            fh.write(struct.pack("<B", labels[i]))
            fh.write(hists[i].astype("<u4").tobytes())
            fh.write(qflats[i].tobytes())


def load_feature_file(path):
    """Read a DJPF file; returns (labels, hists, qflats, b, order)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _DJPF_MAGIC:
            raise DomainError(f"not a DJPF file: bad magic {magic!r}")
        version, b, order_flag, n = struct.unpack("<BHBI", fh.read(8))
        if version != _DJPF_VERSION:
            raise DomainError(f"unsupported DJPF version {version}")
        if order_flag >= len(ORDERS):
            raise DomainError(f"unknown DJPF order flag {order_flag}")
        nbins = 2 * b + 1
        labels = np.empty(n, dtype=np.uint8)
        hists = np.empty((n, 63, nbins), dtype=np.uint32)
        qflats = np.empty((n, 64), dtype=np.uint8)
        rec = 1 + 63 * nbins * 4 + 64
        for i in range(n):
            buf = fh.read(rec)
            if len(buf) != rec:
                raise DomainError("truncated DJPF file")
            labels[i] = buf[0]
            hists[i] = np.frombuffer(buf, dtype="<u4", count=63 * nbins, offset=1).reshape(63, nbins)
            qflats[i] = np.frombuffer(buf, dtype=np.uint8, count=64, offset=1 + 63 * nbins * 4)
    return labels, hists, qflats, b, ORDERS[order_flag]
