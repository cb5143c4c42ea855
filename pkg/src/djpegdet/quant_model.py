"""Analytic model of single- and double-quantized DCT coefficients.

For an unquantized coefficient U with density f_U, single quantization by a
step q1 yields the integer S with P(S = s) equal to the integral of f_U over
[q1(s - 1/2), q1(s + 1/2)). Re-quantizing by q2 yields D whose bin mass is
the integral over [q1(ceil((q2/q1)(d - 1/2)) - 1/2), q1(ceil((q2/q1)(d + 1/2)) - 1/2)).
The ceiling terms collapse neighbouring bins, producing the missing-bin and
peak-valley artifacts that distinguish double compression.

Integration uses adaptive Gauss-Kronrod quadrature (scipy's QUADPACK) with a
per-bin absolute tolerance well below 1e-10; a vectorized Monte-Carlo sampler
serves as the independent oracle.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate

from .errors import DomainError

_Q_RANGE = range(1, 256)
DEFAULT_SUPPORT = (-200, 200)


class ScenarioKind(enum.Enum):
    """The five exhaustive cases for a (q1, q2) step pair."""

    S1 = "q1>q2, q2 divides q1"
    S2 = "q1>q2, q2 does not divide q1"
    S3 = "q1<q2, q1 divides q2"
    S4 = "q1<q2, q1 does not divide q2"
    S5 = "q1=q2"


def classify_scenario(q1: int, q2: int) -> ScenarioKind:
    _check_q(q1, "q1")
    _check_q(q2, "q2")
    if q1 > q2:
        return ScenarioKind.S1 if q1 % q2 == 0 else ScenarioKind.S2
    if q1 < q2:
        return ScenarioKind.S3 if q2 % q1 == 0 else ScenarioKind.S4
    return ScenarioKind.S5


def _check_q(q, name):
    if not isinstance(q, (int, np.integer)) or q not in _Q_RANGE:
        raise DomainError(f"{name} must be an integer in [1, 255], got {q!r}")


@dataclass(frozen=True)
class DensitySpec:
    """Density of the unquantized coefficient: uniform(lo, hi),
    gaussian(loc, scale) or laplacian(loc, scale)."""

    family: str
    loc: float = 0.0
    scale: float = 1.0
    lo: float = -0.5
    hi: float = 0.5

    def __post_init__(self):
        if self.family not in ("uniform", "gaussian", "laplacian"):
            raise DomainError(f"unknown density family {self.family!r}")
        if self.family == "uniform":
            if not self.hi > self.lo:
                raise DomainError("uniform density needs hi > lo")
        elif not self.scale > 0:
            raise DomainError("scale must be strictly positive")
        total = self._total_mass()
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"density does not integrate to 1 (got {total})")

    def _total_mass(self) -> float:
        if self.family == "uniform":
            return 1.0  # by construction
        mass, _ = integrate.quad(self.pdf, -np.inf, np.inf, limit=200)
        return mass

    def pdf(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.family == "uniform":
            width = self.hi - self.lo
            return np.where((u >= self.lo) & (u < self.hi), 1.0 / width, 0.0)
        if self.family == "gaussian":
            z = (u - self.loc) / self.scale
            return np.exp(-0.5 * z * z) / (self.scale * math.sqrt(2 * math.pi))
        z = np.abs(u - self.loc) / self.scale
        return np.exp(-z) / (2 * self.scale)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.family == "uniform":
            return rng.uniform(self.lo, self.hi, size=n)
        if self.family == "gaussian":
            return rng.normal(self.loc, self.scale, size=n)
        return rng.laplace(self.loc, self.scale, size=n)

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "DensitySpec":
        return cls("uniform", lo=lo, hi=hi)

    @classmethod
    def gaussian(cls, loc: float, scale: float) -> "DensitySpec":
        return cls("gaussian", loc=loc, scale=scale)

    @classmethod
    def laplacian(cls, loc: float, scale: float) -> "DensitySpec":
        return cls("laplacian", loc=loc, scale=scale)


@dataclass
class Pmf:
    """Probability mass on the integer support [d_min, d_max]; mass outside
    the support is left as the deficit from 1."""

    d_min: int
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 1 or self.probs.size == 0:
            raise DomainError("pmf needs a non-empty 1-D probability vector")
        if self.probs.min() < 0:
            raise DomainError("pmf probabilities must be non-negative")
        if self.probs.sum() > 1 + 1e-9:
            raise DomainError("pmf mass exceeds 1")

    @property
    def d_max(self) -> int:
        return self.d_min + self.probs.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.d_min, self.d_max + 1)

    @property
    def mass(self) -> float:
        return float(self.probs.sum())

    def prob(self, d: int) -> float:
        if self.d_min <= d <= self.d_max:
            return float(self.probs[d - self.d_min])
        return 0.0

    def tv_distance(self, other: "Pmf") -> float:
        """Total-variation distance, treating off-support mass as its own bin."""
        lo = min(self.d_min, other.d_min)
        hi = max(self.d_max, other.d_max)
        a = np.array([self.prob(d) for d in range(lo, hi + 1)])
        b = np.array([other.prob(d) for d in range(lo, hi + 1)])
        return 0.5 * (np.abs(a - b).sum() + abs((1 - a.sum()) - (1 - b.sum())))


def _check_support(support) -> tuple[int, int]:
    lo, hi = int(support[0]), int(support[1])
    if hi < lo:
        raise DomainError(f"support upper bound below lower bound: {support}")
    return lo, hi


def _bin_integral(density: DensitySpec, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0
    if density.family == "uniform":
        # avoid needless quadrature on flat pieces with hard edges
        a, b = max(lo, density.lo), min(hi, density.hi)
        return max(0.0, b - a) / (density.hi - density.lo)
    val, _ = integrate.quad(density.pdf, lo, hi, epsabs=1e-12, limit=200)
    return max(0.0, val)


def pmf_single(q1: int, density: DensitySpec,
               support: tuple[int, int] = DEFAULT_SUPPORT) -> Pmf:
    """Distribution of round(U / q1) on the integer support."""
    _check_q(q1, "q1")
    lo, hi = _check_support(support)
    probs = [_bin_integral(density, q1 * (s - 0.5), q1 * (s + 0.5))
             for s in range(lo, hi + 1)]
    return Pmf(lo, np.asarray(probs))


def _double_bounds(q1: int, q2: int, d: int) -> tuple[float, float]:
    # Exact rational ceilings; float edge cases would misplace bin boundaries.
    c_lo = math.ceil(Fraction(q2 * (2 * d - 1), 2 * q1))
    c_hi = math.ceil(Fraction(q2 * (2 * d + 1), 2 * q1))
    return q1 * (c_lo - 0.5), q1 * (c_hi - 0.5)


def pmf_double(q1: int, q2: int, density: DensitySpec,
               support: tuple[int, int] = DEFAULT_SUPPORT) -> Pmf:
    """Distribution of round(round(U / q1) * q1 / q2) on the integer support."""
    _check_q(q1, "q1")
    _check_q(q2, "q2")
    lo, hi = _check_support(support)
    probs = np.zeros(hi - lo + 1)
    for i, d in enumerate(range(lo, hi + 1)):
        blo, bhi = _double_bounds(q1, q2, d)
        if bhi > blo:  # equal bounds mean a structurally missing bin: exactly 0
            probs[i] = _bin_integral(density, blo, bhi)
    return Pmf(lo, probs)


def empirical_pmf(q1: int, q2: int | None, samples: int, density: DensitySpec,
                  seed: int = 0,
                  support: tuple[int, int] = DEFAULT_SUPPORT) -> Pmf:
    """Monte-Carlo oracle: draw from the density and push the draws through
    the actual quantization arithmetic.

    Rounding matches the analytic model's convention round(x) = floor(x + 1/2);
    the second stage is computed in exact integer arithmetic so structural
    zeros (e.g. odd bins for q1 = 2 q2) are exact.
    """
    _check_q(q1, "q1")
    if q2 is not None:
        _check_q(q2, "q2")
    if samples < 1:
        raise DomainError("samples must be >= 1")
    lo, hi = _check_support(support)
    rng = np.random.default_rng(seed)
    u = density.draw(rng, samples)
    s = np.floor(u / q1 + 0.5).astype(np.int64)
    if q2 is None:
        out = s
    else:
        out = (2 * s * q1 + q2) // (2 * q2)  # floor((s q1 / q2) + 1/2) exactly
    counts = np.bincount(np.clip(out - lo, 0, hi - lo),
                         weights=(out >= lo) & (out <= hi),
                         minlength=hi - lo + 1)
    return Pmf(lo, counts / samples)


def missing_bins(p: Pmf, eps: float = 0.0) -> set[int]:
    """Bins with at most eps mass that sit next to a bin above eps."""
    if eps < 0:
        raise DomainError("eps must be >= 0")
    out = set()
    for d in range(p.d_min, p.d_max + 1):
        if p.prob(d) > eps:
            continue
        neighbours = [p.prob(d - 1) if d - 1 >= p.d_min else None,
                      p.prob(d + 1) if d + 1 <= p.d_max else None]
        if any(v is not None and v > eps for v in neighbours):
            out.add(d)
    return out
