"""Point-scatterer channel-data simulator.

Narrowband point-source model: every scatterer re-emits the transmit pulse,
the transmit is ideally focused (one emission time ``r/c`` per scatterer) and
each element receives after the exact one-way distance ``|x_n - p_k| / c``.
There is no element directivity, attenuation or transducer response.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .beamform import ChannelData, ImagingConfig
from .errors import InvalidArgument

log = logging.getLogger(__name__)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, count: int, stream: int = 0) -> np.ndarray:
    """``count`` outputs of SplitMix64 started from ``seed``.

    The generator is counter based (output ``i`` depends only on ``seed + (i+1)
    * golden``), so it is trivial to port and to vectorise. ``stream`` offsets
    the counter to draw independent blocks from one seed.
    """
    with np.errstate(over="ignore"):
        i = np.arange(stream + 1, stream + count + 1, dtype=np.uint64)
        z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + i * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def uniforms(seed: int, count: int, stream: int = 0) -> np.ndarray:
    """Doubles in ``[0, 1)`` from the top 53 bits of :func:`splitmix64`."""
    return (splitmix64(seed, count, stream) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def normals(seed: int, count: int, stream: int = 0) -> np.ndarray:
    """Standard normals by Box-Muller on consecutive uniform pairs."""
    m = (count + 1) // 2
    u = uniforms(seed, 2 * m, stream)
    u1, u2 = 1.0 - u[0::2], u[1::2]
    rad = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * m)
    z[0::2] = rad * np.cos(2 * np.pi * u2)
    z[1::2] = rad * np.sin(2 * np.pi * u2)
    return z[:count]


@dataclass(frozen=True)
class PulseSpec:
    cycles: int = 2
    center_frequency: float = 3.5e6
    fs: float = 100e6
    window: str = "hanning"

    def __post_init__(self):
        if self.cycles < 1:
            raise InvalidArgument("pulse needs at least one cycle")
        if self.window not in ("hanning", "hann"):
            raise InvalidArgument(f"unsupported window {self.window!r}")

    @property
    def duration(self) -> float:
        return self.cycles / self.center_frequency


def pulse_at(spec: PulseSpec, t) -> np.ndarray:
    """Hanning-windowed sine evaluated at arbitrary times (zero outside ``[0, T)``)."""
    t = np.asarray(t, dtype=float)
    T = spec.duration
    inside = (t >= 0) & (t < T)
    w = 0.5 - 0.5 * np.cos(2 * np.pi * t / T)
    return np.where(inside, w * np.sin(2 * np.pi * spec.center_frequency * t), 0.0)


def synth_pulse(spec: PulseSpec) -> np.ndarray:
    """Sampled pulse with ``floor(cycles / f0 * fs) + 1`` samples starting at ``t = 0``."""
    n = int(np.floor(spec.duration * spec.fs)) + 1
    return pulse_at(spec, np.arange(n) / spec.fs)


@dataclass(frozen=True, eq=False)
class Phantom:
    """Scatterers as rows ``(r [m], theta [rad], amplitude)``."""

    scatterers: np.ndarray
    seed: int = 0

    def __post_init__(self):
        s = np.asarray(self.scatterers, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(s)):
            raise InvalidArgument("scatterer table contains non-finite values")
        object.__setattr__(self, "scatterers", s)

    def __len__(self):
        return len(self.scatterers)

    @classmethod
    def points(cls, points) -> Phantom:
        return cls(np.array(list(points), dtype=float).reshape(-1, 3))

    def __add__(self, other: Phantom) -> Phantom:
        return Phantom(np.vstack([self.scatterers, other.scatterers]), self.seed)

    def mirrored(self) -> Phantom:
        s = self.scatterers.copy()
        s[:, 1] *= -1
        return Phantom(s, self.seed)


def make_cyst_phantom(config: ImagingConfig, cyst_center, cyst_radius: float,
                      density_per_mm2: float, seed: int, angle_margin: float = 0.0) -> Phantom:
    """Speckle with an anechoic disc.

    Scatterers are uniform over the sector spanned by ``config.scan_angles``
    (widened by ``angle_margin`` radians each side) and ``config.depth_range``,
    with normal amplitudes; those inside the disc of ``cyst_radius`` around
    ``cyst_center = (x, z)`` [m] are dropped.
    """
    if cyst_radius <= 0:
        raise InvalidArgument("cyst radius must be positive")
    r1, r2 = config.depth_range
    a1 = min(config.scan_angles) - angle_margin
    a2 = max(config.scan_angles) + angle_margin
    area_mm2 = 0.5 * (a2 - a1) * (r2 * r2 - r1 * r1) * 1e6
    count = int(round(density_per_mm2 * area_mm2))
    if count == 0:
        return Phantom(np.zeros((0, 3)), seed)
    u = uniforms(seed, 2 * count).reshape(count, 2)
    r = np.sqrt(r1 * r1 + u[:, 0] * (r2 * r2 - r1 * r1))
    th = a1 + u[:, 1] * (a2 - a1)
    amp = normals(seed, count, stream=2 * count)
    x, z = r * np.sin(th), r * np.cos(th)
    keep = np.hypot(x - cyst_center[0], z - cyst_center[1]) > cyst_radius
    return Phantom(np.column_stack([r[keep], th[keep], amp[keep]]), seed)


def generate_channel_data(config: ImagingConfig, phantom: Phantom, pulse: PulseSpec | None = None,
                          tx_focus=None, spreading: bool = True, chunk: int = 4096) -> ChannelData:
    """Sum of delayed pulse echoes on every element of the full array.

    Scatterer ``k`` contributes ``a_k / r_k * p(t - r_k/c - |x_n - p_k|/c)`` on
    element ``n`` (without ``1/r`` when ``spreading`` is off). The pulse is
    evaluated at the exact fractional delay. Scatterers outside
    ``config.depth_range`` are skipped and counted in ``meta["skipped"]``.
    ``tx_focus`` is recorded in the metadata only: under ideal transmit
    focusing the emission time does not depend on it.
    """
    pulse = pulse or PulseSpec(2, config.center_frequency, config.sampling_frequency)
    if pulse.fs != config.sampling_frequency:
        raise InvalidArgument("pulse and acquisition sampling rates differ")
    c, fs, d = config.speed_of_sound, config.sampling_frequency, config.pitch
    positions = config.full_array()
    x = positions.as_array() * d
    r1, r2 = config.depth_range
    half_ap = float(np.abs(x).max())

    t0 = np.floor(max(0.0, (2 * r1 - half_ap) / c) * fs) / fs
    t_end = (r2 + np.hypot(r2, half_ap)) / c + pulse.duration
    n_samples = int(np.ceil((t_end - t0) * fs)) + 1

    s = phantom.scatterers
    inside = (s[:, 0] >= r1) & (s[:, 0] <= r2)
    skipped = int((~inside).sum())
    if skipped:
        log.warning("%d scatterers outside depth range skipped", skipped)
    s = s[inside]

    E = len(positions)
    out = np.zeros(E * n_samples)
    lp = int(np.ceil(pulse.duration * fs)) + 1
    j = np.arange(lp)
    for k0 in range(0, len(s), chunk):
        r, th, amp = s[k0:k0 + chunk].T
        if spreading:
            amp = amp / r
        px, pz = r * np.sin(th), r * np.cos(th)
        tau = (r[:, None] + np.hypot(px[:, None] - x[None, :], pz[:, None])) / c  # (K, E)
        start = np.ceil((tau - t0) * fs).astype(np.int64)
        idx = start[..., None] + j  # (K, E, lp)
        tt = t0 + idx / fs - tau[..., None]
        vals = amp[:, None, None] * pulse_at(pulse, tt)
        flat = (np.arange(E)[None, :, None] * n_samples + idx)
        ok = idx < n_samples
        out += np.bincount(flat[ok], weights=vals[ok], minlength=E * n_samples)
    meta = {"skipped": skipped, "tx_focus": None if tx_focus is None else [float(v) for v in tx_focus]}
    return ChannelData(out.reshape(E, n_samples), positions, float(t0), fs,
                       config.center_frequency, c, d, meta)
