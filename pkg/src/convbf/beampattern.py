"""Far-field beam patterns of weighted linear arrays and their lobe metrics.

Patterns are sampled uniformly in ``sin(theta)`` with the steering angle fixed
at broadside, so a pattern is the DTFT of the weight sequence evaluated at
normalized frequency ``(d / wavelength) * sin(theta)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .apodization import desired_weights, modified_weights
from .errors import InvalidArgument, NotFound
from .geometry import ApodizationVector, PositionSet, intrinsic_apodization, make_ula, sumset

DEFAULT_GRID_POINTS = 4096
ZERO_THRESHOLD = 1e-6
HALF_MAX_DB = -6.0


@dataclass(frozen=True, eq=False)
class AngularGrid:
    sin_theta: np.ndarray

    @classmethod
    def uniform(cls, count: int = DEFAULT_GRID_POINTS) -> AngularGrid:
        if count < 3:
            raise InvalidArgument("grid needs at least 3 points")
        s = np.linspace(-1.0, 1.0, count)
        if count % 2:
            s[count // 2] = 0.0
        return cls(s)

    @property
    def count(self) -> int:
        return len(self.sin_theta)

    @property
    def step(self) -> float:
        return float(self.sin_theta[1] - self.sin_theta[0])


@dataclass(frozen=True, eq=False)
class BeamPattern:
    """Complex response ``H`` on ``grid``.

    ``positions`` and ``weights`` are kept so that features can be located off
    the grid by re-evaluating the pattern.
    """

    grid: AngularGrid
    values: np.ndarray
    wavelength: float
    pitch: float
    positions: np.ndarray
    weights: np.ndarray

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def evaluate(self, sin_theta) -> np.ndarray:
        return _dtft(self.positions, self.weights, np.asarray(sin_theta, float), self.pitch / self.wavelength)

    def magnitude_db(self) -> np.ndarray:
        mag = self.magnitude
        with np.errstate(divide="ignore"):
            return 20 * np.log10(mag / mag.max())

    def to_csv(self, path) -> None:
        """Write ``sin_theta,magnitude_db,real,imag`` rows (0 dB at the peak)."""
        db = self.magnitude_db()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sin_theta", "magnitude_db", "real", "imag"])
            for s, m, v in zip(self.grid.sin_theta, db, self.values):
                w.writerow([f"{s:.9g}", f"{m:.6f}", f"{v.real:.12g}", f"{v.imag:.12g}"])


def _dtft(positions, weights, sin_theta, d_over_lambda):
    phase = -2j * np.pi * d_over_lambda * np.multiply.outer(sin_theta, positions)
    return np.exp(phase) @ weights


def bp_weighted(positions, weights, grid: AngularGrid | None = None, wavelength: float = 1.0,
                pitch: float = 0.5) -> BeamPattern:
    """Beam pattern ``H = sum_n w_n exp(-2j pi (d/lambda) n sin(theta))``.

    ``weights`` is either an :class:`ApodizationVector` (looked up at each
    position) or a sequence aligned with ``positions``.
    """
    if wavelength <= 0 or pitch <= 0:
        raise InvalidArgument("wavelength and pitch must be positive")
    grid = grid or AngularGrid.uniform()
    pos = positions.as_array() if isinstance(positions, PositionSet) else np.asarray(positions, dtype=np.int64)
    if isinstance(weights, ApodizationVector):
        w = weights.on(pos)
    else:
        w = np.asarray(weights)
        if w.shape != pos.shape:
            raise InvalidArgument(f"{len(w)} weights for {len(pos)} positions")
    w = w.astype(complex) if np.iscomplexobj(w) else w.astype(float)
    values = _dtft(pos, w, grid.sin_theta, pitch / wavelength)
    return BeamPattern(grid, values, wavelength, pitch, pos, w)


def coarray_pattern(elements: PositionSet, weights: ApodizationVector | None = None,
                    grid: AngularGrid | None = None, wavelength: float = 1.0,
                    pitch: float = 0.5) -> BeamPattern:
    """Pattern of a convolutional beamformer on ``elements``.

    ``weights`` are the modified weights applied to the co-array signals; the
    effective aperture is ``weights * intrinsic``. Without weights the intrinsic
    apodization is used as is.
    """
    a = intrinsic_apodization(elements)
    co = sumset(elements).sumset
    eff = a.on(co) if weights is None else weights.on(co) * a.on(co)
    return bp_weighted(co, eff, grid, wavelength, pitch)


def das_pattern(N: int, grid=None, wavelength=1.0, pitch=0.5) -> BeamPattern:
    """Unity-weight full-array DAS pattern."""
    ula = make_ula(N)
    return bp_weighted(ula, np.ones(len(ula)), grid, wavelength, pitch)


def coba_pattern(N: int, grid=None, wavelength=1.0, pitch=0.5) -> BeamPattern:
    """Full-array COBA pattern (triangle intrinsic apodization)."""
    return coarray_pattern(make_ula(N), None, grid, wavelength, pitch)


def sparse_pattern(design, apodization: str = "unity", grid=None, wavelength=1.0, pitch=0.5) -> BeamPattern:
    """Pattern of a SCOBA/SCOBAR design after modified-weight correction."""
    co = design.coarray
    w = modified_weights(desired_weights(apodization, co, design.N), co.multiplicity)
    return coarray_pattern(design.elements, w, grid, wavelength, pitch)


# --- lobe metrics -------------------------------------------------------------


def _main_peak_index(mag: np.ndarray, s: np.ndarray) -> int:
    i = int(np.argmin(np.abs(s)))
    while True:
        left = mag[i - 1] if i > 0 else -np.inf
        right = mag[i + 1] if i + 1 < len(mag) else -np.inf
        if right > mag[i] and right >= left:
            i += 1
        elif left > mag[i]:
            i -= 1
        else:
            return i


def _parabola_vertex(y0, y1, y2):
    """Offset in (-1, 1) of the vertex of the parabola through three samples."""
    den = y0 - 2 * y1 + y2
    return 0.0 if den == 0 else 0.5 * (y0 - y2) / den


def _power_slope(bp: BeamPattern, x: float) -> float:
    """``d|H|^2 / d(sin theta)`` at ``x``."""
    k = -2j * np.pi * bp.pitch / bp.wavelength
    e = np.exp(k * bp.positions * x)
    h = e @ bp.weights
    dh = (k * bp.positions * e) @ bp.weights
    return float(2 * np.real(np.conj(h) * dh))


def first_zero(bp: BeamPattern) -> float:
    """Smallest positive ``sin(theta)`` where the pattern vanishes.

    Candidate minima of ``|H|`` on the grid are refined to the root of
    ``d|H|^2/d(sin theta)`` between the neighbouring samples (falling back to a
    parabola through ``|H|**2`` when the slope does not change sign). A minimum
    counts as a zero when ``|H|`` there is below ``1e-6`` of the peak.
    """
    s = bp.grid.sin_theta
    mag = bp.magnitude
    peak = mag[_main_peak_index(mag, s)]
    if peak == 0:
        raise NotFound("pattern is identically zero")
    power = mag ** 2
    h = bp.grid.step
    for i in range(1, len(s) - 1):
        if s[i] <= 0 or not (mag[i] <= mag[i - 1] and mag[i] <= mag[i + 1]) or mag[i] == mag[i - 1] == mag[i + 1]:
            continue
        x0 = s[i] + h * _parabola_vertex(power[i - 1], power[i], power[i + 1])
        lo, hi = s[i - 1], s[i + 1]
        if _power_slope(bp, lo) < 0 < _power_slope(bp, hi):
            x = brentq(lambda v: _power_slope(bp, v), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        else:
            x = x0
        if np.abs(bp.evaluate([x])[0]) <= ZERO_THRESHOLD * peak:
            return float(x)
    raise NotFound("no pattern zero in (0, 1]")


def _level_crossing(mag, i, step, level):
    """Fractional index where ``mag`` first drops below ``level`` walking from ``i``."""
    j = i
    while 0 <= j + step < len(mag):
        if mag[j + step] < level:
            frac = (mag[j] - level) / (mag[j] - mag[j + step])
            return j + step * frac
        j += step
    raise NotFound("main lobe extends past the grid")


def _lobe_edge(mag, i, step):
    """Index of the first local minimum walking away from the peak."""
    j = i
    while 0 <= j + step < len(mag) and mag[j + step] <= mag[j]:
        j += step
    return j


def lobe_metrics(bp: BeamPattern) -> dict:
    """Main-lobe width at -6 dB and peak side-lobe level.

    Returns ``{"fwhm_sin_theta": ..., "psl_db": ...}``; the PSL is the largest
    local maximum outside the main lobe (bounded by its first minima) relative
    to the main peak, or ``-inf`` when there is none.
    """
    s = bp.grid.sin_theta
    mag = bp.magnitude
    i = _main_peak_index(mag, s)
    peak = mag[i]
    level = peak * 10 ** (HALF_MAX_DB / 20)
    lo = _level_crossing(mag, i, -1, level)
    hi = _level_crossing(mag, i, +1, level)
    fwhm = (hi - lo) * bp.grid.step

    left, right = _lobe_edge(mag, i, -1), _lobe_edge(mag, i, +1)
    side = []
    for k in list(range(0, left)) + list(range(right + 1, len(mag))):
        lv = mag[k - 1] if k > 0 else -np.inf
        rv = mag[k + 1] if k + 1 < len(mag) else -np.inf
        if mag[k] >= lv and mag[k] >= rv:
            side.append(mag[k])
    psl = 20 * np.log10(max(side) / peak) if side and max(side) > 0 else -np.inf
    return {"fwhm_sin_theta": float(fwhm), "psl_db": float(psl)}
