import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convbf.errors import InvalidArgument, NotFound
from convbf.imaging import (
    BModeImage,
    Circle,
    contrast_ratio,
    default_regions,
    envelope,
    fwhm_from_section,
    lateral_cross_section,
    log_compress,
)


def flat_image(values=None):
    angles = np.linspace(-0.1, 0.1, 41)
    depth = np.linspace(0.04, 0.06, 201)
    inten = np.ones((201, 41)) if values is None else values
    return BModeImage(inten, angles, depth, 40.0)


def test_envelope_of_am_tone():
    t = np.arange(5000) / 100e6
    a = 1 + 0.5 * np.sin(2 * np.pi * 20e3 * t + 0.3)
    env = envelope(a * np.sin(2 * np.pi * 5e6 * t))
    inner = slice(250, -250)
    np.testing.assert_allclose(env[inner], a[inner], rtol=0.03)


def test_envelope_nonnegative_and_empty():
    x = np.random.default_rng(0).normal(size=300)
    assert np.all(envelope(x) >= 0)
    assert envelope(np.zeros(0)).shape == (0,)


def test_log_compress_examples():
    db = log_compress(np.array([1.0, 0.1, 1e-5, 0.0]), 60)
    np.testing.assert_allclose(db, [0, -20, -60, -60])
    with pytest.raises(InvalidArgument):
        log_compress(np.zeros(3), 60)


@settings(max_examples=100)
@given(st.lists(st.floats(1e-6, 1e6), min_size=2, max_size=40))
def test_log_compress_monotone(vals):
    v = np.array(vals)
    db = log_compress(v, 300)
    order = np.argsort(v, kind="stable")
    assert np.all(np.diff(db[order]) >= -1e-12)
    assert db.max() == 0


def test_contrast_ratio_examples():
    img = flat_image()
    cyst, bck = Circle(0.0, 0.05, 0.002), Circle(0.0, 0.055, 0.002)
    assert contrast_ratio(img, cyst, bck) == pytest.approx(0.0)
    inten = np.ones((201, 41))
    inten[img.mask(cyst)] = 0.1
    assert contrast_ratio(flat_image(inten), cyst, bck) == pytest.approx(-20.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 1000))
def test_contrast_ratio_scale_invariant(k, seed):
    inten = np.random.default_rng(seed).uniform(0.1, 2, (201, 41))
    cyst, bck = default_regions((0.0, 0.05), 0.002)
    a = contrast_ratio(flat_image(inten), cyst, bck)
    assert contrast_ratio(flat_image(k * inten), cyst, bck) == pytest.approx(a, abs=1e-9)


def test_empty_region_rejected():
    with pytest.raises(InvalidArgument):
        contrast_ratio(flat_image(), Circle(1.0, 1.0, 1e-3), Circle(0.0, 0.05, 0.002))


def test_default_regions_geometry():
    cyst, bck = default_regions((0.001, 0.05), 0.004)
    assert (cyst.x, cyst.z, cyst.radius) == (0.001, 0.05, 0.002)
    assert (bck.x, bck.z, bck.radius) == pytest.approx((0.009, 0.05, 0.002))


def test_cross_section_picks_nearest_row():
    img = flat_image(np.arange(201.0)[:, None] * np.ones(41))
    # rows are 0.1 mm apart starting at 40 mm
    assert lateral_cross_section(img, 0.05004)[0] == 100
    assert lateral_cross_section(img, 0.05006)[0] == 101
    with pytest.raises(InvalidArgument):
        lateral_cross_section(img, 0.07)


def test_fwhm_delta_section():
    sec = np.zeros(21)
    sec[10] = 1
    # -6 dB is just above half amplitude, so the interpolated width is 2 * (1 - 10**(-6/20))
    assert fwhm_from_section(sec) == pytest.approx(1.0, abs=0.01)


@pytest.mark.parametrize("sigma", [2.0, 5.5, 13.0])
def test_fwhm_gaussian_closed_form(sigma):
    x = np.linspace(-100, 100, 4001)
    sec = np.exp(-x ** 2 / (2 * sigma ** 2))
    # width where the amplitude is down 6 dB
    expected = 2 * sigma * np.sqrt(2 * np.log(10 ** (6 / 20)))
    assert fwhm_from_section(sec, x) == pytest.approx(expected, rel=1e-4)


def test_fwhm_symmetric_centred():
    x = np.linspace(-1, 1, 201)
    sec = 1 / (1 + (x / 0.1) ** 2)
    w = fwhm_from_section(sec, x)
    level = 10 ** (-6 / 20)
    assert 1 / (1 + (w / 2 / 0.1) ** 2) == pytest.approx(level, rel=1e-3)


def test_fwhm_edge_peak():
    with pytest.raises(NotFound):
        fwhm_from_section(np.linspace(0, 1, 10))
    with pytest.raises(NotFound):
        fwhm_from_section(np.array([0.9, 1.0, 0.95, 0.9]))


def test_image_io(tmp_path):
    rng = np.random.default_rng(4)
    img = flat_image(rng.uniform(0, 1, (201, 41)))
    img.save_raw(tmp_path / "img.f32")
    back = BModeImage.load_raw(tmp_path / "img.f32")
    np.testing.assert_array_equal(back.intensity, img.intensity.astype(np.float32))
    np.testing.assert_allclose(back.line_angles, img.line_angles)
    img.to_pgm(tmp_path / "img.pgm")
    raw = (tmp_path / "img.pgm").read_bytes()
    assert raw.startswith(b"P5\n41 201\n255\n")
    assert len(raw) == len(b"P5\n41 201\n255\n") + 41 * 201
    assert max(raw[15:]) == 255
    assert img.log_image.max() == 0 and img.log_image.min() >= -40
