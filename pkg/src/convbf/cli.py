"""Command-line front end: ``convbf design|beampattern|simulate|beamform|metrics``.

Runs are driven by a JSON config whose physical quantities carry their unit
in the key name (``center_frequency_hz``, ``pitch_m``, ...). Every command
that writes into an output directory also writes ``manifest_<command>.json`` with the
config hash, library versions, seeds and a SHA-256 of every output file.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 IO error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .apodization import desired_weights, modified_weights
from .beamform import ChannelData, FilterSpec, ImagingConfig, Method
from .beampattern import AngularGrid, bp_weighted, coarray_pattern, first_zero, lobe_metrics, sparse_pattern
from .errors import InvalidArgument, NoNontrivialDivisor, NotFound
from .geometry import (
    Variant,
    build_design,
    make_ula,
    minimize_aperture,
    optimize_scoba,
    optimize_scobar,
    sumset,
)
from .imaging import (
    BModeImage,
    Circle,
    beamform_lines,
    contrast_ratio,
    default_regions,
    envelope,
    fwhm_from_section,
)
from .simulate import Phantom, generate_channel_data, make_cyst_phantom

log = logging.getLogger("convbf")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
ALL_METHODS = tuple(m.value for m in Method)
CHANNEL_FILE = "channels.cbk"


class ConfigError(InvalidArgument):
    pass


# --- atomic output ------------------------------------------------------------


def _atomic(path: Path, write) -> None:
    """Call ``write(tmp_path)`` and move the result onto ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def write_text(path: Path, text: str) -> None:
    def w(tmp):
        with open(tmp, "w", newline="") as fh:
            fh.write(text)
    _atomic(path, w)


def write_json(path: Path, obj) -> None:
    write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def save_image(img: BModeImage, stem: Path) -> list[Path]:
    raw, side, pgm = stem.with_suffix(".f32"), stem.with_suffix(".f32.json"), stem.with_suffix(".pgm")

    def w(tmp):
        img.save_raw(tmp)
        os.replace(tmp + ".json", str(side))
    _atomic(raw, w)
    _atomic(pgm, img.to_pgm)
    return [raw, side, pgm]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# --- config -------------------------------------------------------------------


def _get(d: dict, key: str, ctx: str, default=...):
    if key in d:
        return d[key]
    if default is ...:
        raise ConfigError(f"{ctx}: missing key {key!r}")
    return default


def _angles(spec, ctx) -> tuple[float, ...]:
    if isinstance(spec, dict):
        return tuple(np.linspace(float(_get(spec, "start", ctx)), float(_get(spec, "stop", ctx)),
                                 int(_get(spec, "count", ctx))))
    if isinstance(spec, (list, tuple)) and spec:
        return tuple(float(a) for a in spec)
    raise ConfigError(f"{ctx}: expected a list or {{start, stop, count}}")


def parse_imaging(d: dict) -> ImagingConfig:
    ctx = "imaging"
    c = float(_get(d, "speed_of_sound_m_per_s", ctx, 1540.0))
    f0 = float(_get(d, "center_frequency_hz", ctx))
    if "pitch_m" in d:
        pitch = float(d["pitch_m"])
    elif "pitch_wavelengths" in d:
        pitch = float(d["pitch_wavelengths"]) * c / f0
    else:
        raise ConfigError(f"{ctx}: give pitch_m or pitch_wavelengths")
    return ImagingConfig(
        speed_of_sound=c,
        center_frequency=f0,
        sampling_frequency=float(_get(d, "sampling_frequency_hz", ctx)),
        pitch=pitch,
        element_half_count=int(_get(d, "element_half_count", ctx)),
        scan_angles=_angles(_get(d, "scan_angles_rad", ctx, [0.0]), f"{ctx}.scan_angles_rad"),
        depth_range=tuple(float(v) for v in _get(d, "depth_range_m", ctx)),
        dynamic_range_db=float(_get(d, "dynamic_range_db", ctx, 60.0)),
    )


def parse_filter(d: dict | None, f0: float) -> FilterSpec:
    if d is None:
        return FilterSpec.default(f0)
    return FilterSpec(d.get("kind", "bandpass"), d.get("low_hz"), d.get("high_hz"), int(d.get("taps", 101)))


@dataclass
class RunConfig:
    imaging: ImagingConfig
    method: str = "das"
    design: dict | None = None
    apodization: str | dict | None = None
    filter: FilterSpec | None = None
    phantom: dict = field(default_factory=dict)
    output_dir: Path = Path("out")
    workers: int = 1
    analytic: bool = True
    metrics: dict = field(default_factory=dict)
    beampattern: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> RunConfig:
        if not isinstance(d, dict):
            raise ConfigError("config root must be a JSON object")
        imaging = parse_imaging(_get(d, "imaging", "config"))
        method = str(d.get("method", "das"))
        if method not in ALL_METHODS:
            raise ConfigError(f"unknown method {method!r}; expected one of {ALL_METHODS}")
        design = d.get("design")
        if method in ("scoba", "scobar") and design is None:
            raise ConfigError(f"method {method} requires a design ({{A, B}} or {{optimize}})")
        out = Path(d.get("output_dir", "out"))
        if base is not None and not out.is_absolute():
            out = base / out
        return cls(imaging, method, design, d.get("apodization"), parse_filter(d.get("filter"), imaging.center_frequency),
                   d.get("phantom", {}), out, int(d.get("workers", 1)), bool(d.get("analytic", True)),
                   d.get("metrics", {}), d.get("beampattern", {}), d)

    @property
    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()

    def design_for(self, method: str):
        """Sparse design for ``method`` from the ``design`` block."""
        if method not in ("scoba", "scobar"):
            return None
        d = self.design
        if d is None:
            raise ConfigError(f"method {method} requires a design")
        N = self.imaging.N
        if "optimize" in d:
            return _optimized(Variant(method), N, d["optimize"])[0]
        return build_design(method, N, int(_get(d, "A", "design")), int(_get(d, "B", "design")), self.imaging.pitch)

    def apodization_for(self, method: str):
        a = self.apodization
        if isinstance(a, dict):
            return a.get(method)
        return None if method == "das" else a


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return RunConfig.from_dict(d, path.parent)


def parse_phantom(spec: dict, imaging: ImagingConfig) -> Phantom:
    """Phantom from ``{scatterers: [{r_mm, theta_deg, amp}], cyst: {...}}``."""
    parts = []
    pts = spec.get("scatterers", [])
    if pts:
        rows = [(float(p["r_mm"]) * 1e-3, np.deg2rad(float(p["theta_deg"])), float(p.get("amp", 1.0))) for p in pts]
        parts.append(Phantom.points(rows))
    cyst = spec.get("cyst")
    if cyst:
        cx, cz = (float(v) * 1e-3 for v in _get(cyst, "center_mm", "phantom.cyst"))
        parts.append(make_cyst_phantom(imaging, (cx, cz), float(_get(cyst, "radius_mm", "phantom.cyst")) * 1e-3,
                                       float(_get(cyst, "density", "phantom.cyst")), int(cyst.get("seed", 0)),
                                       np.deg2rad(float(cyst.get("angle_margin_deg", 0.0)))))
    if not parts:
        raise ConfigError("phantom has neither scatterers nor a cyst")
    ph = parts[0]
    for p in parts[1:]:
        ph = ph + p
    return ph


def _seeds(cfg: RunConfig) -> dict:
    cyst = cfg.phantom.get("cyst") if cfg.phantom else None
    return {"cyst": int(cyst.get("seed", 0))} if cyst else {}


def write_manifest(cfg: RunConfig | None, command: str, outputs: list[Path], out_dir: Path, extra=None) -> None:
    man = {
        "command": command,
        "config_sha256": cfg.digest if cfg else None,
        "config": cfg.raw if cfg else None,
        "seeds": _seeds(cfg) if cfg else {},
        "versions": {"convbf": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "outputs": {p.name: _sha256(p) for p in sorted(set(outputs))},
    }
    if extra:
        man.update(extra)
    write_json(out_dir / f"manifest_{command}.json", man)


# --- design -------------------------------------------------------------------


def _optimized(variant: Variant, N: int, objective: str):
    """``(design, note)`` for the requested objective; ``note`` explains degenerate cases."""
    if objective == "elements":
        opt = optimize_scoba(N) if variant is Variant.SCOBA else optimize_scobar(N)
        note = None
        if opt.degenerate:
            note = (f"N={N} is prime: its only factorisation is 1 x {N}, so the optimal "
                    f"{variant.value} design is the full {2 * N - 1}-element array (no reduction)")
        return opt.design(), note
    if objective == "aperture":
        if variant is not Variant.SCOBA:
            raise ConfigError("aperture optimisation is defined for scoba only")
        A, B = minimize_aperture(N)
        return build_design(variant, N, A, B), None
    raise ConfigError(f"unknown objective {objective!r}; expected elements or aperture")


def cmd_design(args) -> int:
    variant = Variant(args.variant)
    if args.optimize:
        if args.A is not None or args.B is not None:
            raise ConfigError("--optimize excludes --A/--B")
        try:
            design, note = _optimized(variant, args.N, args.optimize)
        except NoNontrivialDivisor:
            raise ConfigError(f"N={args.N} is prime: no factorisation A*B=N with 1 < A, B < N exists, "
                              "so the aperture cannot be reduced below the full array") from None
        if note:
            print(f"note: {note}", file=sys.stderr)
    else:
        if args.A is None or args.B is None:
            raise ConfigError("give --A and --B, or --optimize elements|aperture")
        design = build_design(variant, args.N, args.A, args.B)
    span = design.coarray.sumset
    print(f"variant:   {design.variant.value}")
    print(f"N, A, B:   {design.N}, {design.A}, {design.B}")
    print(f"elements:  {design.element_count} of {design.full_count} ({design.reduction:.0%})")
    print(f"aperture:  [{design.elements.min}, {design.elements.max}]")
    print(f"sumset:    [{span.min}, {span.max}] ({len(span)} positions, span {span.span})")
    print(f"positions: {' '.join(str(p) for p in design.elements)}")
    if args.out:
        write_json(Path(args.out), design.to_dict())
    return EXIT_OK


# --- beampattern --------------------------------------------------------------


def _pattern(method: str, N: int, design, apodization, grid, d_over_lambda: float):
    if method == "das":
        ula = make_ula(N)
        return bp_weighted(ula, np.ones(len(ula)), grid, 1.0, d_over_lambda)
    if method == "coba":
        ula = make_ula(N)
        if apodization in (None, "triangle"):
            return coarray_pattern(ula, None, grid, 1.0, d_over_lambda)
        co = sumset(ula)
        w = modified_weights(desired_weights(apodization, co, N), co.multiplicity)
        return coarray_pattern(ula, w, grid, 1.0, d_over_lambda)
    default = "unity" if method == "scoba" else "triangle"
    return sparse_pattern(design, apodization or default, grid, 1.0, d_over_lambda)


def cmd_beampattern(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        N = cfg.imaging.N
        dl = cfg.imaging.pitch / cfg.imaging.wavelength
        methods = args.methods or cfg.beampattern.get("methods") or [cfg.method]
        points = int(cfg.beampattern.get("grid_points", args.grid_points))
        out_dir = Path(args.out_dir) if args.out_dir else cfg.output_dir
    else:
        if args.N is None:
            raise ConfigError("give a config file or --N")
        cfg = None
        N, dl, points = args.N, args.d_over_lambda, args.grid_points
        methods = args.methods or ["das"]
        out_dir = Path(args.out_dir or ".")
    grid = AngularGrid.uniform(points)
    metrics, outputs = {}, []
    for m in methods:
        if m not in ALL_METHODS:
            raise ConfigError(f"unknown method {m!r}")
        if cfg is not None:
            design, apo = cfg.design_for(m), cfg.apodization_for(m)
        else:
            design = _optimized(Variant(m), N, "elements")[0] if m in ("scoba", "scobar") else None
            apo = args.apodization if m != "das" else None
        bp = _pattern(m, N, design, apo, grid, dl)
        lm = lobe_metrics(bp)
        try:
            fz = first_zero(bp)
        except NotFound:
            fz = None
        metrics[m] = {"fwhm_sin_theta": lm["fwhm_sin_theta"], "psl_db": lm["psl_db"], "first_zero": fz}
        path = out_dir / f"beampattern_{m}.csv"
        _atomic(path, bp.to_csv)
        outputs.append(path)
        print(f"{m:7s} fwhm={lm['fwhm_sin_theta']:.5f} psl={lm['psl_db']:.2f} dB first_zero={fz}")
    mpath = out_dir / "beampattern_metrics.json"
    write_json(mpath, metrics)
    write_manifest(cfg, "beampattern", outputs + [mpath], out_dir)
    return EXIT_OK


# --- simulate / beamform / metrics --------------------------------------------


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    phantom = parse_phantom(cfg.phantom, cfg.imaging)
    tx = cfg.phantom.get("tx_focus_m_rad")
    data = generate_channel_data(cfg.imaging, phantom, tx_focus=tx)
    out = Path(args.out) if args.out else cfg.output_dir / CHANNEL_FILE
    _atomic(out, data.save)
    print(f"{len(phantom)} scatterers ({data.meta['skipped']} skipped) -> {out} "
          f"[{data.samples.shape[0]} x {data.samples.shape[1]}]")
    write_manifest(cfg, "simulate", [out], out.parent, {"scatterers": len(phantom)})
    return EXIT_OK


def _methods(cfg: RunConfig, all_methods: bool) -> list[str]:
    return list(ALL_METHODS) if all_methods else [cfg.method]


def cmd_beamform(args) -> int:
    cfg = load_config(args.config)
    data_path = Path(args.data) if args.data else cfg.output_dir / CHANNEL_FILE
    try:
        data = ChannelData.load(data_path)
    except InvalidArgument as exc:
        raise OSError(f"unreadable channel data: {exc}") from exc
    if data.fs != cfg.imaging.sampling_frequency or data.f0 != cfg.imaging.center_frequency:
        raise ConfigError(f"{data_path}: acquisition parameters differ from the config")
    out_dir = cfg.output_dir
    outputs = []
    im = cfg.imaging
    for m in _methods(cfg, args.all_methods):
        if m in ("scoba", "scobar") and cfg.design is None:
            raise ConfigError(f"method {m} requires a design")
        rf, depth = beamform_lines(data, m, im.scan_angles, im.depth_range, cfg.design_for(m),
                                   cfg.apodization_for(m), cfg.filter, cfg.workers, cfg.analytic)
        lines = out_dir / f"lines_{m}.f32"
        _atomic(lines, lambda tmp, rf=rf: rf.astype("<f4").tofile(tmp))
        img = BModeImage(envelope(rf.T).T, np.asarray(im.scan_angles), depth, im.dynamic_range_db)
        outputs += [lines] + save_image(img, out_dir / f"image_{m}")
        print(f"{m:7s} {rf.shape[1]} lines x {rf.shape[0]} samples -> {out_dir / ('image_' + m)}.pgm")
    write_manifest(cfg, "beamform", outputs, out_dir, {"channel_data_sha256": _sha256(data_path)})
    return EXIT_OK


def _regions(cfg: RunConfig):
    m = cfg.metrics
    if "cyst_region_mm" in m:
        def circ(c):
            return Circle(float(c["x"]) * 1e-3, float(c["z"]) * 1e-3, float(c["radius"]) * 1e-3)
        return circ(m["cyst_region_mm"]), circ(_get(m, "background_region_mm", "metrics"))
    cyst = cfg.phantom.get("cyst")
    if not cyst:
        return None
    center = tuple(float(v) * 1e-3 for v in cyst["center_mm"])
    return default_regions(center, float(cyst["radius_mm"]) * 1e-3)


def _point_target(cfg: RunConfig):
    m = cfg.metrics
    if "point_mm_deg" in m:
        r, th = m["point_mm_deg"]
        return float(r) * 1e-3, np.deg2rad(float(th))
    pts = cfg.phantom.get("scatterers", [])
    if not pts:
        return None
    return float(pts[0]["r_mm"]) * 1e-3, np.deg2rad(float(pts[0]["theta_deg"]))


def image_metrics(img: BModeImage, regions, point) -> dict:
    """Contrast ratio and point-spread widths available for ``img``."""
    out = {}
    if regions is not None:
        out["contrast_ratio_db"] = contrast_ratio(img, *regions)
    if point is not None:
        r, th = point
        row = int(np.argmin(np.abs(img.depth_axis - r)))
        col = int(np.argmin(np.abs(img.line_angles - th)))
        # search the neighbourhood so a slight depth offset of the peak is tolerated
        lo, hi = max(row - 20, 0), min(row + 21, img.intensity.shape[0])
        row = lo + int(np.argmax(img.intensity[lo:hi, col]))
        try:
            out["lateral_fwhm_m"] = r * fwhm_from_section(img.intensity[row], img.line_angles)
            out["axial_fwhm_m"] = fwhm_from_section(img.intensity[:, col], img.depth_axis)
        except NotFound as exc:
            out["psf_error"] = str(exc)
    return out


def cmd_metrics(args) -> int:
    cfg = load_config(args.config)
    out_dir = cfg.output_dir
    regions, point = _regions(cfg), _point_target(cfg)
    results = {}
    for m in _methods(cfg, args.all_methods):
        raw = out_dir / f"image_{m}.f32"
        if not raw.exists():
            continue
        results[m] = image_metrics(BModeImage.load_raw(raw), regions, point)
        print(m, json.dumps(results[m], sort_keys=True))
    if not results:
        raise OSError(f"{out_dir}: no image_<method>.f32 files to measure")
    path = out_dir / "metrics.json"
    write_json(path, results)
    write_manifest(cfg, "metrics", [path], out_dir)
    return EXIT_OK


# --- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="convbf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="build or optimise a sparse array design")
    d.add_argument("N", type=int, help="full array has 2N-1 elements")
    d.add_argument("variant", choices=[v.value for v in Variant])
    d.add_argument("--A", type=int)
    d.add_argument("--B", type=int)
    d.add_argument("--optimize", choices=["elements", "aperture"])
    d.add_argument("--out", help="write the design as JSON")
    d.set_defaults(func=cmd_design)

    b = sub.add_parser("beampattern", help="far-field patterns and lobe metrics")
    b.add_argument("config", nargs="?")
    b.add_argument("--N", type=int)
    b.add_argument("--d-over-lambda", type=float, default=0.5)
    b.add_argument("--methods", nargs="+", choices=ALL_METHODS)
    b.add_argument("--apodization", choices=["unity", "das_match", "triangle"])
    b.add_argument("--grid-points", type=int, default=4096)
    b.add_argument("--out-dir")
    b.set_defaults(func=cmd_beampattern)

    s = sub.add_parser("simulate", help="synthesise channel data for the configured phantom")
    s.add_argument("config")
    s.add_argument("--out", help=f"default <output_dir>/{CHANNEL_FILE}")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("beamform", help="form B-mode images from channel data")
    f.add_argument("config")
    f.add_argument("--data", help=f"default <output_dir>/{CHANNEL_FILE}")
    f.add_argument("--all-methods", action="store_true", help="run das, coba, scoba and scobar")
    f.set_defaults(func=cmd_beamform)

    m = sub.add_parser("metrics", help="contrast ratio and point-spread widths of formed images")
    m.add_argument("config")
    m.add_argument("--all-methods", action="store_true")
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (NotFound, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError) as exc:
        # ValueError covers InvalidArgument, UnreachablePosition and bad literals
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
