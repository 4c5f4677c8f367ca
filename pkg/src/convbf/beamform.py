"""Receive beamforming of RF channel data: DAS, COBA, SCOBA and SCOBAR.

The convolutional beamformers share one pipeline::

    dynamic receive delays -> u-transform -> lateral self-convolution
    -> modified co-array weights -> weighted sum -> band-pass at 2 f0
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import fft as sp_fft
from scipy import signal

from .apodization import desired_weights, modified_weights
from .errors import InvalidArgument
from .geometry import ApodizationVector, PositionSet, SparseDesign, SumCoArray, make_ula, sumset

_MAGIC = b"CBK1"
_HEADER = struct.Struct("<4sII5d")


class Method(str, Enum):
    DAS = "das"
    COBA = "coba"
    SCOBA = "scoba"
    SCOBAR = "scobar"


@dataclass(frozen=True)
class ImagingConfig:
    speed_of_sound: float
    center_frequency: float
    sampling_frequency: float
    pitch: float
    element_half_count: int
    scan_angles: tuple[float, ...] = (0.0,)
    depth_range: tuple[float, float] = (0.0, 0.1)
    dynamic_range_db: float = 60.0

    def __post_init__(self):
        if self.sampling_frequency <= 4 * self.center_frequency:
            raise InvalidArgument("sampling frequency must exceed 4 f0 to carry the 2 f0 harmonic")
        if self.pitch <= 0:
            raise InvalidArgument("pitch must be positive")
        if self.element_half_count < 2:
            raise InvalidArgument("element_half_count (N) must be >= 2")
        if not 0 <= self.depth_range[0] < self.depth_range[1]:
            raise InvalidArgument(f"bad depth range {self.depth_range}")
        object.__setattr__(self, "scan_angles", tuple(float(a) for a in self.scan_angles))
        object.__setattr__(self, "depth_range", tuple(float(r) for r in self.depth_range))

    @property
    def N(self) -> int:
        return self.element_half_count

    @property
    def wavelength(self) -> float:
        return self.speed_of_sound / self.center_frequency

    def full_array(self) -> PositionSet:
        return make_ula(self.N, self.pitch)


@dataclass(frozen=True, eq=False)
class ChannelData:
    """RF traces, one row per element in ``positions``, sampled from ``t0``."""

    samples: np.ndarray
    positions: PositionSet
    t0: float
    fs: float
    f0: float
    c: float
    pitch: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 2 or x.shape[0] != len(self.positions):
            raise InvalidArgument(f"samples shape {x.shape} does not match {len(self.positions)} elements")
        if not np.all(np.isfinite(x)):
            raise InvalidArgument("channel data contains non-finite values")
        object.__setattr__(self, "samples", x)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_samples) / self.fs

    def rows(self, positions: PositionSet) -> ChannelData:
        """Subset of the channels, in the order of ``positions``."""
        missing = [n for n in positions if n not in self.positions]
        if missing:
            raise InvalidArgument(f"channel data lacks elements {missing[:8]}")
        idx = [self.positions.index_of(n) for n in positions]
        return replace(self, samples=self.samples[idx], positions=positions)

    def save(self, path) -> None:
        """Write the little-endian ``CBK1`` binary format."""
        e, t = self.samples.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, e, t, self.fs, self.f0, self.c, self.pitch, self.t0))
            fh.write(self.positions.as_array().astype("<i4").tobytes())
            fh.write(self.samples.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> ChannelData:
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) < _HEADER.size:
            raise InvalidArgument(f"{path}: truncated header")
        magic, e, t, fs, f0, c, pitch, t0 = _HEADER.unpack_from(raw)
        if magic != _MAGIC:
            raise InvalidArgument(f"{path}: bad magic {magic!r}")
        off = _HEADER.size
        need = off + 4 * e + 4 * e * t
        if len(raw) != need:
            raise InvalidArgument(f"{path}: expected {need} bytes, found {len(raw)}")
        pos = np.frombuffer(raw, "<i4", e, off)
        samples = np.frombuffer(raw, "<f4", e * t, off + 4 * e).reshape(e, t).astype(float)
        return cls(samples, PositionSet(tuple(int(p) for p in pos), pitch), t0, fs, f0, c, pitch)


@dataclass(frozen=True, eq=False)
class CoArraySignals:
    s: np.ndarray
    coarray: SumCoArray


@dataclass(frozen=True)
class FilterSpec:
    kind: str = "bandpass"
    low_hz: float | None = None
    high_hz: float | None = None
    taps: int = 101
    window: str = "hanning"

    @classmethod
    def default(cls, f0: float, taps: int = 101) -> FilterSpec:
        """Band-pass ``[f0, 3 f0]`` around the second harmonic.

        Narrower bands stretch the axial point spread well beyond that of DAS
        with the 2-cycle pulses used here; this one keeps them comparable.
        """
        return cls("bandpass", 1.0 * f0, 3.0 * f0, taps)

    @classmethod
    def highpass(cls, cutoff_hz: float, taps: int = 101) -> FilterSpec:
        return cls("highpass", cutoff_hz, None, taps)


# --- delays -----------------------------------------------------------------


def compute_delays(c: float, pitch: float, n, r, theta) -> np.ndarray:
    """Round-trip time to focus ``(r, theta)`` received at element index ``n``.

    Transmit leg ``r / c`` from the array centre, receive leg the exact distance
    from the focus to element ``n``. Broadcasts over ``n`` and ``r``.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise InvalidArgument("focal range must be positive")
    x = np.asarray(n, dtype=float) * pitch
    return (r + np.sqrt(r * r - 2 * x * r * np.sin(theta) + x * x)) / c


def apply_dynamic_delays(data: ChannelData, scan_angle: float, window: slice | None = None) -> ChannelData:
    """Dynamically focus every channel along the scan line at ``scan_angle``.

    Output sample ``i`` (time ``t``) is focused at depth ``r = c t / 2``; each
    trace is read at its round-trip delay with linear interpolation, zero
    outside the recorded span. ``window`` selects a slice of the input sample
    grid to produce.
    """
    idx = np.arange(data.n_samples)[window if window is not None else slice(None)]
    t = data.t0 + idx / data.fs
    r = data.c * t / 2
    out = np.zeros((len(data.positions), len(idx)))
    ok = r > 0
    if ok.any():
        tau = compute_delays(data.c, data.pitch, data.positions.as_array()[:, None], r[ok][None, :], scan_angle)
        out[:, ok] = _interp_rows(data.samples, (tau - data.t0) * data.fs)
    t0 = float(t[0]) if len(t) else data.t0
    return replace(data, samples=out, t0=t0)


def _interp_rows(x: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Linear interpolation of each row of ``x`` at fractional sample ``pos``."""
    n = x.shape[1]
    # snap rounding noise so reads at the last sample are not lost
    near = np.round(pos)
    pos = np.where(np.abs(pos - near) < 1e-9, near, pos)
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    valid = (i0 >= 0) & (i0 < n - 1)
    exact_last = (i0 == n - 1) & (frac == 0)
    i0c = np.clip(i0, 0, max(n - 2, 0))
    rows = np.arange(x.shape[0])[:, None]
    if n >= 2:
        y = x[rows, i0c] * (1 - frac) + x[rows, i0c + 1] * frac
    else:
        y = np.zeros(pos.shape)
    y = np.where(valid, y, 0.0)
    if exact_last.any():
        y = np.where(exact_last, x[rows, np.full_like(i0, n - 1)], y)
    return y


# --- convolutional core -------------------------------------------------------


def u_transform(y: np.ndarray) -> np.ndarray:
    """``exp(j arg y) * sqrt(|y|)``; for real ``y`` this is ``sign(y) * sqrt(|y|)``."""
    y = np.asarray(y)
    if not np.iscomplexobj(y):
        y = y.astype(float)
        return np.sign(y) * np.sqrt(np.abs(y))
    mag = np.abs(y)
    out = np.zeros_like(y)
    np.divide(y, np.sqrt(mag), out=out, where=mag > 0)
    return out


def _as_signal(u):
    u = np.atleast_2d(np.asarray(u))
    return u if np.iscomplexobj(u) else u.astype(float)


def _check_rows(u, positions):
    if u.shape[0] != len(positions):
        raise InvalidArgument(f"{u.shape[0]} signal rows for {len(positions)} positions")


def coarray_convolve_direct(u: np.ndarray, positions: PositionSet) -> CoArraySignals:
    """Accumulate all ordered products ``u_i u_j`` into co-array row ``p_i + p_j``."""
    u = _as_signal(u)
    _check_rows(u, positions)
    co = sumset(positions)
    p = positions.as_array()
    dense = np.zeros((2 * positions.span + 1,) + u.shape[1:], dtype=u.dtype)
    base = 2 * positions.min
    for i in range(len(p)):
        dense[p[i] + p - base] += u[i] * u
    return CoArraySignals(dense[co.sumset.as_array() - base], co)


def coarray_convolve_fft(u: np.ndarray, positions: PositionSet) -> CoArraySignals:
    """Lateral self-convolution through a zero-padded real FFT.

    The traces are placed on the dense grid ``[min, max]`` (gaps zero) and
    padded to the next power of two of at least ``2 * (span + 1) - 1`` so the
    circular product equals the linear convolution.
    """
    u = _as_signal(u)
    _check_rows(u, positions)
    co = sumset(positions)
    width = positions.span + 1
    nfft = 1 << max(0, (2 * width - 2).bit_length())
    # lateral axis last so the transform runs over contiguous memory
    dense = np.zeros(u.shape[1:] + (nfft,), dtype=u.dtype)
    dense[..., positions.as_array() - positions.min] = np.moveaxis(u, 0, -1)
    if np.iscomplexobj(dense):
        spec = sp_fft.fft(dense, axis=-1)
        full = sp_fft.ifft(spec * spec, axis=-1)
    else:
        spec = sp_fft.rfft(dense, axis=-1)
        full = sp_fft.irfft(spec * spec, n=nfft, axis=-1)
    rows = co.sumset.as_array() - 2 * positions.min
    if rows[-1] - rows[0] + 1 == len(rows):
        # contiguous sumset: a slice avoids a costly gather on the last axis
        picked = full[..., rows[0]:rows[-1] + 1]
    else:
        picked = full[..., rows]
    return CoArraySignals(np.moveaxis(picked, -1, 0), co)


def weighted_coarray_sum(s: CoArraySignals, weights: ApodizationVector) -> np.ndarray:
    """``sum_n w_n s_n(t)`` over the co-array rows."""
    w = weights.on(s.coarray.sumset)
    if len(w) != s.s.shape[0]:
        raise InvalidArgument("weight and co-array row counts differ")
    return np.tensordot(w, s.s, axes=(0, 0))


# --- filtering -----------------------------------------------------------------


def design_filter(spec: FilterSpec, fs: float) -> np.ndarray:
    """Hanning-windowed linear-phase FIR taps (odd length)."""
    if spec.taps < 3 or spec.taps % 2 == 0:
        raise InvalidArgument("filter needs an odd number of taps >= 3")
    if spec.window not in ("hanning", "hann"):
        raise InvalidArgument(f"unsupported window {spec.window!r}")
    nyq = fs / 2
    if spec.kind == "bandpass":
        lo, hi = spec.low_hz, spec.high_hz
        if lo is None or hi is None or not 0 < lo < hi < nyq:
            raise InvalidArgument(f"band [{lo}, {hi}] not inside (0, {nyq})")
        return signal.firwin(spec.taps, [lo, hi], window="hann", pass_zero=False, fs=fs)
    if spec.kind == "highpass":
        cut = spec.low_hz
        if cut is None or not 0 < cut < nyq:
            raise InvalidArgument(f"cutoff {cut} not inside (0, {nyq})")
        return signal.firwin(spec.taps, cut, window="hann", pass_zero=False, fs=fs)
    raise InvalidArgument(f"unknown filter kind {spec.kind!r}")


def apply_filter(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Filter along the last axis with the ``(taps-1)/2`` group delay removed."""
    x = np.asarray(x)
    return signal.convolve(x if np.iscomplexobj(x) else x.astype(float), np.asarray(taps), mode="same")


# --- line beamforming -----------------------------------------------------------------


def _design_for(method: Method, data: ChannelData, design: SparseDesign | None, N: int | None):
    if method in (Method.SCOBA, Method.SCOBAR):
        if design is None:
            raise InvalidArgument(f"{method.value} needs a sparse design")
        if design.variant.value != method.value:
            raise InvalidArgument(f"design is {design.variant.value}, method is {method.value}")
        return design.elements, design.N
    N = N if N is not None else (len(data.positions) + 1) // 2
    ula = make_ula(N)
    return ula, N


def resolve_weights(method: Method, elements: PositionSet, N: int, apodization=None) -> ApodizationVector:
    """Modified co-array weights for a convolutional method.

    ``apodization`` is a desired-weight kind or an explicit vector of desired
    weights; the default is ``triangle`` for COBA/SCOBAR and ``unity`` for
    SCOBA.
    """
    co = sumset(elements)
    if apodization is None:
        apodization = "unity" if method is Method.SCOBA else "triangle"
    desired = apodization if isinstance(apodization, ApodizationVector) else desired_weights(apodization, co, N)
    return modified_weights(desired, co.multiplicity)


def beamform_line(data: ChannelData, method: Method | str, design: SparseDesign | None = None,
                  apodization=None, filter: FilterSpec | None = None, scan_angle: float = 0.0,
                  window: slice | None = None, N: int | None = None, path: str = "auto",
                  weights: ApodizationVector | None = None, analytic: bool = True) -> np.ndarray:
    """Beamform one scan line.

    DAS delays, weights (``apodization`` as per-element vector, default 1) and
    sums the full array. The convolutional methods use only the channels of
    their array (the full ULA for COBA, ``design.elements`` otherwise).
    ``weights`` may carry precomputed modified weights to skip their
    recomputation when many lines share them.
    """
    method = Method(method)
    elements, N = _design_for(method, data, design, N)
    sub = data.rows(elements)
    delayed = apply_dynamic_delays(sub, scan_angle, window).samples
    if method is Method.DAS:
        if apodization is None:
            w = np.ones(len(elements))
        elif isinstance(apodization, ApodizationVector):
            w = apodization.on(elements)
        else:
            raise InvalidArgument("DAS apodization must be a per-element weight vector")
        return w @ delayed

    if weights is None:
        weights = resolve_weights(method, elements, N, apodization)
    if analytic:
        delayed = signal.hilbert(delayed, axis=-1)
    u = u_transform(delayed)
    if path == "auto":
        path = "fft" if len(elements) > 16 else "direct"
    conv = coarray_convolve_fft if path == "fft" else coarray_convolve_direct
    ybar = weighted_coarray_sum(conv(u, elements), weights)
    spec = filter or FilterSpec.default(data.f0)
    return np.real(apply_filter(ybar, design_filter(spec, data.fs)))
