"""Envelope detection, log compression and image-quality metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.signal import hilbert

from .errors import InvalidArgument, NotFound

HALF_MAX_DB = -6.0


def envelope(line) -> np.ndarray:
    """Magnitude of the analytic signal along the last axis."""
    x = np.asarray(line, dtype=float)
    if x.shape[-1] == 0:
        return x.copy()
    return np.abs(hilbert(x, axis=-1))


def log_compress(intensity, dynamic_range_db: float) -> np.ndarray:
    """``20 log10(I / max I)`` clipped to ``[-dynamic_range_db, 0]``."""
    intensity = np.asarray(intensity, dtype=float)
    peak = intensity.max() if intensity.size else 0.0
    if peak <= 0:
        raise InvalidArgument("image has no positive intensity")
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(intensity / peak)
    return np.clip(db, -dynamic_range_db, 0.0)


@dataclass(frozen=True, eq=False)
class Circle:
    """Region in (lateral x, depth z) meters."""

    x: float
    z: float
    radius: float


@dataclass(frozen=True, eq=False)
class BModeImage:
    """Sector image sampled on an (angle, depth) polar grid.

    ``intensity`` has shape ``(depths, lines)`` and holds the envelope before
    compression.
    """

    intensity: np.ndarray
    line_angles: np.ndarray
    depth_axis: np.ndarray
    dynamic_range_db: float = 60.0

    @property
    def log_image(self) -> np.ndarray:
        return log_compress(self.intensity, self.dynamic_range_db)

    def cartesian(self):
        """Lateral and axial coordinates of every pixel."""
        th, r = np.meshgrid(self.line_angles, self.depth_axis)
        return r * np.sin(th), r * np.cos(th)

    def mask(self, region: Circle) -> np.ndarray:
        x, z = self.cartesian()
        return np.hypot(x - region.x, z - region.z) <= region.radius

    def to_pgm(self, path) -> None:
        """8-bit binary PGM with ``[-DR, 0] dB`` mapped to ``[0, 255]``."""
        db = self.log_image
        img = np.round((db + self.dynamic_range_db) / self.dynamic_range_db * 255).astype(np.uint8)
        rows, cols = img.shape
        with open(path, "wb") as fh:
            fh.write(f"P5\n{cols} {rows}\n255\n".encode())
            fh.write(img.tobytes())

    def save_raw(self, path) -> None:
        """Little-endian f32 intensity matrix plus a JSON sidecar (``path + '.json'``)."""
        self.intensity.astype("<f4").tofile(path)
        rows, cols = self.intensity.shape
        side = {
            "rows": rows,
            "cols": cols,
            "depth_axis": [float(v) for v in self.depth_axis],
            "angles": [float(v) for v in self.line_angles],
            "dr_db": self.dynamic_range_db,
        }
        with open(str(path) + ".json", "w") as fh:
            json.dump(side, fh)

    @classmethod
    def load_raw(cls, path) -> BModeImage:
        with open(str(path) + ".json") as fh:
            side = json.load(fh)
        data = np.fromfile(path, dtype="<f4").astype(float)
        if data.size != side["rows"] * side["cols"]:
            raise InvalidArgument(f"{path}: size does not match sidecar")
        return cls(data.reshape(side["rows"], side["cols"]), np.array(side["angles"]),
                   np.array(side["depth_axis"]), side["dr_db"])


def contrast_ratio(img: BModeImage, cyst_region: Circle, bck_region: Circle) -> float:
    """``20 log10(mean_cyst / mean_background)`` of the uncompressed envelope."""
    inner, outer = img.mask(cyst_region), img.mask(bck_region)
    if not inner.any() or not outer.any():
        raise InvalidArgument("contrast region contains no pixels")
    mu_c = img.intensity[inner].mean()
    mu_b = img.intensity[outer].mean()
    return float(20 * np.log10(mu_c / mu_b))


def default_regions(cyst_center, cyst_radius: float, offset: float | None = None):
    """Inner circle of half the cyst radius and an equal background circle beside it.

    The background circle sits at the same depth, shifted laterally by
    ``offset`` (default two cyst radii) from the cyst centre.
    """
    x, z = cyst_center
    rad = cyst_radius / 2
    offset = 2 * cyst_radius if offset is None else offset
    return Circle(x, z, rad), Circle(x + offset, z, rad)


def lateral_cross_section(img: BModeImage, depth: float) -> np.ndarray:
    """Row of the intensity image nearest to ``depth``."""
    ax = img.depth_axis
    if not ax[0] <= depth <= ax[-1]:
        raise InvalidArgument(f"depth {depth} outside image [{ax[0]}, {ax[-1]}]")
    return img.intensity[int(np.argmin(np.abs(ax - depth)))]


def fwhm_from_section(section, axis=None) -> float:
    """Width of the peak at -6 dB (half amplitude), linearly interpolated.

    Returned in units of ``axis`` (sample spacing 1 when omitted). Raises
    :class:`NotFound` when the peak or one of its half-max crossings lies at
    the edge of the section.
    """
    y = np.asarray(section, dtype=float)
    axis = np.arange(len(y), dtype=float) if axis is None else np.asarray(axis, dtype=float)
    i = int(np.argmax(y))
    level = y[i] * 10 ** (HALF_MAX_DB / 20)
    if y[i] <= 0 or i in (0, len(y) - 1):
        raise NotFound("peak at the section edge")
    edges = []
    for step in (-1, 1):
        j = i
        while 0 <= j + step < len(y) and y[j + step] >= level:
            j += step
        if not 0 <= j + step < len(y):
            raise NotFound("half-maximum crossing outside the section")
        frac = (y[j] - level) / (y[j] - y[j + step])
        edges.append(axis[j] + frac * (axis[j + step] - axis[j]))
    return float(abs(edges[1] - edges[0]))


def depth_window(data, depth_range) -> slice:
    """Input-sample slice whose two-way depths ``c t / 2`` fall in ``depth_range``."""
    r1, r2 = depth_range
    i1 = int(np.ceil((2 * r1 / data.c - data.t0) * data.fs))
    i2 = int(np.floor((2 * r2 / data.c - data.t0) * data.fs)) + 1
    i1, i2 = max(i1, 0), min(i2, data.n_samples)
    if i2 <= i1:
        raise InvalidArgument(f"depth range {depth_range} not covered by the recording")
    return slice(i1, i2)


def beamform_lines(data, method, angles, depth_range, design=None, apodization=None, filter=None,
                   workers: int = 1, analytic: bool = True):
    """RF lines for every angle as a ``(depths, lines)`` matrix, plus the depth axis.

    Lines are independent; with ``workers > 1`` they run on a thread pool and
    are reassembled in angle order, so the result does not depend on
    scheduling.
    """
    from .beamform import Method, beamform_line, resolve_weights, _design_for

    method = Method(method)
    win = depth_window(data, depth_range)
    weights = None
    if method is not Method.DAS:
        elements, N = _design_for(method, data, design, None)
        weights = resolve_weights(method, elements, N, apodization)

    def line(theta):
        return beamform_line(data, method, design, apodization, filter, theta, win, weights=weights, analytic=analytic)

    angles = np.asarray(angles, dtype=float)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as pool:
            cols = list(pool.map(line, angles))
    else:
        cols = [line(a) for a in angles]
    t = data.t0 + np.arange(win.start, win.stop) / data.fs
    return np.column_stack(cols), data.c * t / 2


def form_image(data, method, angles, depth_range, design=None, apodization=None, filter=None,
               dynamic_range_db: float = 60.0, workers: int = 1, analytic: bool = True) -> BModeImage:
    """Beamform one line per angle and envelope-detect each line."""
    rf, depth = beamform_lines(data, method, angles, depth_range, design, apodization, filter, workers, analytic)
    return BModeImage(envelope(rf.T).T, np.asarray(angles, dtype=float), depth, dynamic_range_db)
