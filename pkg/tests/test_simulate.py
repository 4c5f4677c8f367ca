import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convbf.beamform import ImagingConfig
from convbf.errors import InvalidArgument
from convbf.simulate import (
    Phantom,
    PulseSpec,
    generate_channel_data,
    make_cyst_phantom,
    normals,
    pulse_at,
    splitmix64,
    synth_pulse,
    uniforms,
)

C, F0, FS = 1540.0, 3.5e6, 100e6
CFG = ImagingConfig(C, F0, FS, C / F0 / 2, 8, scan_angles=np.linspace(-0.2, 0.2, 5), depth_range=(0.02, 0.04))
MASK = (1 << 64) - 1


def splitmix_reference(seed, count):
    """Plain-integer SplitMix64."""
    out, state = [], seed
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


def test_splitmix_known_value():
    assert int(splitmix64(0, 1)[0]) == 0xE220A8397B1DCDAF


@settings(max_examples=50)
@given(st.integers(0, MASK), st.integers(1, 40))
def test_splitmix_matches_integer_reference(seed, count):
    assert [int(v) for v in splitmix64(seed, count)] == splitmix_reference(seed, count)


def test_streams_are_counter_offsets():
    np.testing.assert_array_equal(splitmix64(7, 10)[5:], splitmix64(7, 5, stream=5))


def test_uniform_and_normal_moments():
    u = uniforms(3, 200_000)
    assert u.min() >= 0 and u.max() < 1
    assert u.mean() == pytest.approx(0.5, abs=0.005)
    z = normals(3, 200_001)
    assert len(z) == 200_001
    assert z.mean() == pytest.approx(0, abs=0.01) and z.std() == pytest.approx(1, abs=0.01)


def test_pulse_length_and_shape():
    p = synth_pulse(PulseSpec())
    assert len(p) == 58
    assert abs(p[0]) < 1e-12 and abs(p[-1]) < 0.05
    assert np.abs(p).max() <= 1
    assert np.sum(p ** 2) > 0


def test_pulse_zero_outside_support():
    spec = PulseSpec()
    assert not pulse_at(spec, np.array([-1e-9, spec.duration, 1e-5])).any()


def test_pulse_validation():
    with pytest.raises(InvalidArgument):
        PulseSpec(cycles=0)
    with pytest.raises(InvalidArgument):
        PulseSpec(window="rect")


def test_empty_phantom_gives_zero_data():
    data = generate_channel_data(CFG, Phantom(np.zeros((0, 3))))
    assert data.samples.shape[0] == 15 and not data.samples.any()


def test_peak_time_on_axis():
    r = 0.03
    data = generate_channel_data(CFG, Phantom.points([(r, 0.0, 1.0)]), spreading=False)
    row = data.samples[data.positions.index_of(0)]
    t_peak = data.times[np.argmax(np.abs(row))]
    spec = PulseSpec()
    # the pulse centre sits half a duration after the round trip; its largest lobe is within a quarter period
    assert abs(t_peak - (2 * r / C + spec.duration / 2)) <= 0.25 / F0 + 1 / FS
    # envelope peak is within a sample of the pulse centre
    from convbf.imaging import envelope
    t_env = data.times[np.argmax(envelope(row))]
    assert abs(t_env - (2 * r / C + spec.duration / 2)) <= 1 / FS


def test_mirrored_phantom_mirrors_elements():
    ph = Phantom.points([(0.03, 0.15, 1.0), (0.025, -0.05, -0.7)])
    a = generate_channel_data(CFG, ph).samples
    b = generate_channel_data(CFG, ph.mirrored()).samples
    np.testing.assert_array_equal(b, a[::-1])


def test_symmetric_pair_gives_symmetric_channels():
    ph = Phantom.points([(0.03, 0.1, 1.0), (0.03, -0.1, 1.0)])
    a = generate_channel_data(CFG, ph).samples
    np.testing.assert_allclose(a, a[::-1], atol=1e-15 * np.abs(a).max())


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_linearity(seed):
    rng = np.random.default_rng(seed)

    def rand(k):
        return Phantom(np.column_stack([rng.uniform(0.021, 0.039, k), rng.uniform(-0.3, 0.3, k), rng.normal(size=k)]))

    p, q = rand(5), rand(7)
    union = generate_channel_data(CFG, p + q).samples
    parts = generate_channel_data(CFG, p).samples + generate_channel_data(CFG, q).samples
    np.testing.assert_allclose(union, parts, rtol=0, atol=1e-12 * np.abs(parts).max())


def test_spreading_toggle():
    ph = Phantom.points([(0.025, 0.0, 1.0)])
    a = generate_channel_data(CFG, ph).samples
    b = generate_channel_data(CFG, ph, spreading=False).samples
    np.testing.assert_allclose(a, b / 0.025)


def test_out_of_range_scatterers_skipped(caplog):
    ph = Phantom.points([(0.01, 0.0, 1.0), (0.03, 0.0, 1.0), (0.05, 0.0, 1.0)])
    with caplog.at_level(logging.WARNING):
        data = generate_channel_data(CFG, ph)
    assert data.meta["skipped"] == 2
    assert "skipped" in caplog.text


def test_chunking_does_not_change_result():
    ph = make_cyst_phantom(CFG, (0.0, 0.03), 0.003, 0.5, seed=2)
    a = generate_channel_data(CFG, ph, chunk=4096).samples
    b = generate_channel_data(CFG, ph, chunk=7).samples
    np.testing.assert_allclose(a, b, atol=1e-12 * np.abs(a).max())


def test_tx_focus_recorded():
    data = generate_channel_data(CFG, Phantom.points([(0.03, 0.0, 1.0)]), tx_focus=(0.03, 0.0))
    assert data.meta["tx_focus"] == [0.03, 0.0]


def test_cyst_phantom_properties():
    center, radius = (0.002, 0.03), 0.004
    ph = make_cyst_phantom(CFG, center, radius, 2.0, seed=11)
    r, th = ph.scatterers[:, 0], ph.scatterers[:, 1]
    x, z = r * np.sin(th), r * np.cos(th)
    assert np.all(np.hypot(x - center[0], z - center[1]) > radius)
    assert np.all((r >= 0.02) & (r <= 0.04)) and np.all(np.abs(th) <= 0.2)
    area = 0.5 * 0.4 * (0.04 ** 2 - 0.02 ** 2) * 1e6 - np.pi * 4 ** 2
    assert len(ph) == pytest.approx(2.0 * area, rel=0.1)
    again = make_cyst_phantom(CFG, center, radius, 2.0, seed=11)
    np.testing.assert_array_equal(ph.scatterers, again.scatterers)
    other = make_cyst_phantom(CFG, center, radius, 2.0, seed=12)
    assert not np.array_equal(ph.scatterers[:10], other.scatterers[:10])


def test_cyst_phantom_density_zero_and_bad_radius():
    assert len(make_cyst_phantom(CFG, (0, 0.03), 0.004, 0.0, seed=1)) == 0
    with pytest.raises(InvalidArgument):
        make_cyst_phantom(CFG, (0, 0.03), 0.0, 1.0, seed=1)


def test_phantom_rejects_non_finite():
    with pytest.raises(InvalidArgument):
        Phantom.points([(0.03, np.nan, 1.0)])


def test_pulse_rate_must_match():
    with pytest.raises(InvalidArgument):
        generate_channel_data(CFG, Phantom.points([(0.03, 0.0, 1.0)]), pulse=PulseSpec(fs=50e6))
