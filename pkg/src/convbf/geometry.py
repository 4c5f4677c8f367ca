"""Integer position sets, sum co-arrays and the sparse SCOBA/SCOBAR designs.

Array elements live on a grid of pitch ``d``; a :class:`PositionSet` stores the
integer grid indices. The full reference array has ``2N-1`` elements at
indices ``-(N-1) .. N-1``. Odd element counts are the only convention
supported; an even-count probe is handled by choosing ``N`` so that ``2N-1``
does not exceed the physical channel count.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import InvalidArgument, NoNontrivialDivisor


@dataclass(frozen=True)
class PositionSet:
    """Sorted, duplicate-free integer element indices.

    ``pitch`` (meters) is optional and only used when a physical aperture is
    needed.
    """

    positions: tuple[int, ...]
    pitch: float | None = None

    def __post_init__(self):
        pos = tuple(int(p) for p in self.positions)
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise InvalidArgument("positions must be strictly increasing")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def of(cls, values: Iterable[int], pitch: float | None = None) -> PositionSet:
        """Build from any iterable, sorting and removing duplicates."""
        return cls(tuple(sorted({int(v) for v in values})), pitch)

    def __len__(self):
        return len(self.positions)

    def __iter__(self):
        return iter(self.positions)

    def __contains__(self, n):
        return n in self._lookup

    @cached_property
    def _lookup(self):
        return frozenset(self.positions)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=np.int64)

    @property
    def min(self) -> int:
        return self.positions[0]

    @property
    def max(self) -> int:
        return self.positions[-1]

    @property
    def span(self) -> int:
        """Index distance between the outermost elements."""
        return self.positions[-1] - self.positions[0] if self.positions else 0

    def issubset(self, other: PositionSet) -> bool:
        return set(self.positions) <= set(other.positions)

    def index_of(self, n: int) -> int:
        """Row index of grid position ``n`` within this set."""
        try:
            return self.positions.index(n)
        except ValueError:
            raise InvalidArgument(f"position {n} not in set") from None


@dataclass(frozen=True, eq=False)
class ApodizationVector:
    """Weights on consecutive grid positions ``offset, offset+1, ...``."""

    offset: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "offset", int(self.offset))

    def __len__(self):
        return len(self.values)

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + len(self.values))

    def at(self, n: int):
        """Weight at grid position ``n`` (zero outside the stored range)."""
        k = n - self.offset
        if 0 <= k < len(self.values):
            return self.values[k]
        return 0

    def on(self, positions: Iterable[int]) -> np.ndarray:
        """Weights gathered at the given grid positions."""
        return np.array([self.at(int(n)) for n in positions])

    def support(self) -> PositionSet:
        """Positions carrying a nonzero weight."""
        return PositionSet(tuple(int(p) for p in self.positions[self.values != 0]))

    @classmethod
    def from_mapping(cls, weights: dict[int, float]) -> ApodizationVector:
        lo, hi = min(weights), max(weights)
        vals = np.zeros(hi - lo + 1)
        for n, w in weights.items():
            vals[n - lo] = w
        return cls(lo, vals)


@dataclass(frozen=True, eq=False)
class SumCoArray:
    sumset: PositionSet
    multiplicity: ApodizationVector


class Variant(str, Enum):
    SCOBA = "scoba"
    SCOBAR = "scobar"


@dataclass(frozen=True, eq=False)
class SparseDesign:
    variant: Variant
    N: int
    A: int
    B: int
    elements: PositionSet

    @cached_property
    def coarray(self) -> SumCoArray:
        return sumset(self.elements)

    @property
    def element_count(self) -> int:
        return len(self.elements)

    @property
    def full_count(self) -> int:
        return 2 * self.N - 1

    @property
    def reduction(self) -> float:
        """Fraction of the full array's elements that are kept."""
        return self.element_count / self.full_count

    def to_dict(self) -> dict:
        a = intrinsic_apodization(self.elements)
        return {
            "variant": self.variant.value,
            "N": self.N,
            "A": self.A,
            "B": self.B,
            "positions": list(self.elements.positions),
            "element_count": self.element_count,
            "sumset": list(self.coarray.sumset.positions),
            "intrinsic": [int(v) for v in a.values],
            "offset": a.offset,
        }


def make_ula(N: int, pitch: float | None = None) -> PositionSet:
    """Full uniform linear array of ``2N-1`` elements centred on index 0."""
    if N < 1:
        raise InvalidArgument(f"N must be >= 1, got {N}")
    return PositionSet(tuple(range(-(N - 1), N)), pitch)


def sumset(J: PositionSet) -> SumCoArray:
    """Distinct pairwise sums of ``J`` with ordered-pair multiplicities.

    Enumerates all ``|J|**2`` ordered pairs (self-pairs included).
    """
    if len(J) == 0:
        raise InvalidArgument("sumset of an empty set")
    counts = Counter(i + j for i in J for j in J)
    lo, hi = 2 * J.min, 2 * J.max
    mult = np.zeros(hi - lo + 1, dtype=np.int64)
    for s, c in counts.items():
        mult[s - lo] = c
    return SumCoArray(PositionSet(tuple(sorted(counts)), J.pitch), ApodizationVector(lo, mult))


def indicator(J: PositionSet) -> ApodizationVector:
    """Binary vector over ``[min J, max J]`` marking occupied positions."""
    vals = np.zeros(J.span + 1, dtype=np.int64)
    vals[J.as_array() - J.min] = 1
    return ApodizationVector(J.min, vals)


def intrinsic_apodization(J: PositionSet) -> ApodizationVector:
    """Self-convolution of the indicator vector of ``J``."""
    if len(J) == 0:
        raise InvalidArgument("intrinsic apodization of an empty set")
    ind = indicator(J)
    return ApodizationVector(2 * J.min, np.convolve(ind.values, ind.values))


def is_sparse_array(J: PositionSet, I: PositionSet) -> bool:
    """True when ``J`` is a strict subset of ``I`` and ``I`` lies in the sumset of ``J``."""
    if len(J) == 0 or len(I) == 0:
        raise InvalidArgument("empty position set")
    sj, si = set(J.positions), set(I.positions)
    if not (sj < si):
        return False
    return si <= set(sumset(J).sumset.positions)


def _check_factorization(N, A, B):
    if A < 1 or B < 1:
        raise InvalidArgument(f"A and B must be positive, got A={A}, B={B}")
    if A * B != N:
        raise InvalidArgument(f"A*B must equal N: {A}*{B} != {N}")


def _scoba_positions(A: int, B: int) -> set[int]:
    ua = range(-(A - 1), A)
    ub = (n * A for n in range(-(B - 1), B))
    return set(ua) | set(ub)


def build_scoba(N: int, A: int, B: int, pitch: float | None = None) -> SparseDesign:
    """Sparse array ``U = U_A | U_B`` whose sumset covers the full ULA."""
    _check_factorization(N, A, B)
    elements = PositionSet.of(_scoba_positions(A, B), pitch)
    return SparseDesign(Variant.SCOBA, N, A, B, elements)


def build_scobar(N: int, A: int, B: int, pitch: float | None = None) -> SparseDesign:
    """SCOBA array plus ``A``-element end caps; its sumset equals that of the full ULA."""
    _check_factorization(N, A, B)
    if B <= 1:
        raise InvalidArgument("SCOBAR requires B > 1 (B = 1 is the full array)")
    caps = {s * m for m in range(N - A, N) for s in (-1, 1)}
    elements = PositionSet.of(_scoba_positions(A, B) | caps, pitch)
    return SparseDesign(Variant.SCOBAR, N, A, B, elements)


def build_design(variant: Variant | str, N: int, A: int, B: int, pitch=None) -> SparseDesign:
    if Variant(variant) is Variant.SCOBA:
        return build_scoba(N, A, B, pitch)
    return build_scobar(N, A, B, pitch)


# --- optimizers -------------------------------------------------------------


def divisors(n: int) -> list[int]:
    """Positive divisors of ``n`` in increasing order."""
    small, large = [], []
    for m in range(1, math.isqrt(n) + 1):
        if n % m == 0:
            small.append(m)
            if m != n // m:
                large.append(n // m)
    return small + large[::-1]


def is_prime(n: int) -> bool:
    return n >= 2 and len(divisors(n)) == 2


@dataclass(frozen=True)
class DesignOptimum:
    """All optimal ``(A, B)`` pairs, canonical choice first.

    ``degenerate`` is set when the only feasible designs are the full array
    (``N`` prime).
    """

    variant: Variant
    N: int
    solutions: tuple[tuple[int, int], ...]
    degenerate: bool = False

    @property
    def canonical(self) -> tuple[int, int]:
        return self.solutions[0]

    @property
    def element_count(self) -> int:
        A, B = self.canonical
        return scoba_count(A, B) if self.variant is Variant.SCOBA else scobar_count(A, B)

    def design(self, pitch=None) -> SparseDesign:
        return build_design(self.variant, self.N, *self.canonical, pitch)


def scoba_count(A: int, B: int) -> int:
    return 2 * A + 2 * B - 3


def scobar_count(A: int, B: int) -> int:
    return 4 * A + 2 * B - 5


def _split_divisors(n: int) -> tuple[int, int]:
    """Largest divisor <= sqrt(n) and smallest divisor >= sqrt(n)."""
    low = max(m for m in divisors(n) if m * m <= n)
    return low, n // low


def optimize_scoba(N: int) -> DesignOptimum:
    """Factor pairs ``A*B = N`` minimising the SCOBA element count ``2(A+B)-3``.

    The pair with ``A <= B`` is listed first.
    """
    if N < 2:
        raise InvalidArgument(f"N must be >= 2, got {N}")
    a, b = _split_divisors(N)
    sols = [(a, b)] if a == b else [(a, b), (b, a)]
    return DesignOptimum(Variant.SCOBA, N, tuple(sols), degenerate=is_prime(N))


def optimize_scobar(N: int) -> DesignOptimum:
    """Factor pairs ``A*B = N`` with ``B > 1`` minimising ``2(2A+B)-5``.

    Writing ``M = 2A`` turns the problem into the SCOBA one for ``2N`` with the
    extra requirement that ``M`` be even; the closest divisor pair of ``2N``
    always contains at least one even member. Among several optima the most
    balanced (smallest ``|2A-B|``, then ``|A-B|``) comes first.
    """
    if N < 2:
        raise InvalidArgument(f"N must be >= 2, got {N}")
    lo, hi = _split_divisors(2 * N)
    sols = set()
    if lo % 2 == 0:
        sols.add((lo // 2, hi))
    if hi % 2 == 0:
        sols.add((hi // 2, lo))
    ordered = sorted(sols, key=lambda ab: (abs(2 * ab[0] - ab[1]), abs(ab[0] - ab[1]), ab))
    return DesignOptimum(Variant.SCOBAR, N, tuple(ordered), degenerate=is_prime(N))


def minimize_aperture(N: int) -> tuple[int, int]:
    """SCOBA factors minimising the physical aperture ``2A(B-1)d``.

    Since ``A(B-1) = N - A`` the best choice takes the largest non-trivial
    divisor as ``A``.
    """
    if N < 2:
        raise InvalidArgument(f"N must be >= 2, got {N}")
    nontrivial = [m for m in divisors(N) if 1 < m < N]
    if not nontrivial:
        raise NoNontrivialDivisor(f"{N} has no non-trivial divisor")
    return max(nontrivial), min(nontrivial)


def brute_force_design_optimum(N: int, variant: Variant | str, objective: str = "element_count"):
    """Exhaustive search over every factor pair ``A*B = N``.

    Objective values are measured on the constructed arrays (element count or
    index span), not taken from the closed-form counts. Returns
    ``(A, B, value)`` for the first minimiser in increasing ``A``.
    """
    if N < 2:
        raise InvalidArgument(f"N must be >= 2, got {N}")
    variant = Variant(variant)
    if objective not in ("element_count", "aperture"):
        raise InvalidArgument(f"unknown objective {objective!r}")
    best = None
    for A in range(1, N + 1):
        if N % A:
            continue
        B = N // A
        if B == 1 and (variant is Variant.SCOBAR or objective == "aperture"):
            continue
        elements = build_design(variant, N, A, B).elements
        value = len(elements) if objective == "element_count" else elements.span
        if best is None or value < best[2]:
            best = (A, B, value)
    return best
