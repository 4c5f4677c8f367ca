"""Desired co-array weights and their correction by the intrinsic apodization."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument, UnreachablePosition
from .geometry import ApodizationVector, SumCoArray

APODIZATIONS = ("unity", "das_match", "triangle")


def desired_weights(kind: str, coarray: SumCoArray, N: int) -> ApodizationVector:
    """Target effective weights on the sum co-array.

    ``unity``
        1 on every sumset position.
    ``das_match``
        1 on the full-array positions ``|n| <= N-1`` and 0 elsewhere, which
        reproduces the unity-weight DAS beam pattern.
    ``triangle``
        ``(2N-1) - |n|`` for ``|n| <= 2(N-1)``, the intrinsic apodization of
        the full array, which reproduces the COBA beam pattern.
    """
    pos = coarray.multiplicity.positions
    if kind == "unity":
        vals = np.isin(pos, coarray.sumset.as_array()).astype(float)
    elif kind == "das_match":
        vals = (np.abs(pos) <= N - 1).astype(float)
    elif kind == "triangle":
        vals = np.clip((2 * N - 1) - np.abs(pos), 0, None).astype(float)
    else:
        raise InvalidArgument(f"unknown apodization {kind!r}; expected one of {APODIZATIONS}")
    return ApodizationVector(coarray.multiplicity.offset, vals)


def modified_weights(desired: ApodizationVector, intrinsic: ApodizationVector) -> ApodizationVector:
    """Elementwise ``desired / intrinsic`` on the intrinsic vector's positions.

    Positions where both are zero get weight 0. A nonzero desired weight on a
    position the array cannot synthesise raises :class:`UnreachablePosition`.
    """
    want = desired.on(intrinsic.positions).astype(float)
    outside = [
        int(n) for n, w in zip(desired.positions, desired.values)
        if w != 0 and not (intrinsic.offset <= n < intrinsic.offset + len(intrinsic))
    ]
    a = np.asarray(intrinsic.values, dtype=float)
    holes = intrinsic.positions[(a == 0) & (want != 0)]
    if outside or len(holes):
        bad = sorted(outside + [int(n) for n in holes])
        raise UnreachablePosition(f"desired weights are nonzero at unreachable positions {bad[:8]}")
    out = np.zeros_like(a)
    np.divide(want, a, out=out, where=a != 0)
    return ApodizationVector(intrinsic.offset, out)
