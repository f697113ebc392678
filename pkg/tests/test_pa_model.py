import numpy as np
import pytest

from qdpd.errors import ParameterError
from qdpd.pa_model import (PAParams, am_curves, apply_pa, default_kernel, measure_linear_gain,
                           thermal_state, write_am_curves)
from qdpd.signals import ComplexSignal

from conftest import FS, bandlimited


def _quiet(kernel, kappa=0.0):
    return PAParams(20.0, kernel, kappa, 5e-6, None, 0)


def test_linear_kernel_is_pure_gain(rng):
    p = PAParams.linear()
    x = bandlimited(rng, 1000)
    np.testing.assert_array_equal(apply_pa(p, x).samples, p.gain * x.samples)


def test_cubic_kernel_at_unit_amplitude():
    p = _quiet([[1.0], [0.0], [-0.1]])
    y = apply_pa(p, ComplexSignal(np.ones(8), FS)).samples
    np.testing.assert_allclose(np.abs(y), 0.9 * p.gain, rtol=1e-14)


def test_thermal_rise_follows_time_constant():
    tau = 5e-6
    p = _quiet([[1.0]], kappa=0.05)
    n = int(20e-6 * FS)
    y = np.abs(apply_pa(p, ComplexSignal(np.full(n, 0.5), FS)).samples) / (0.5 * p.gain)
    t = np.arange(1, n + 1) / FS
    expected = 1 + 0.05 * 0.25 * (1 - np.exp(-t / tau))
    np.testing.assert_allclose(y, expected, rtol=1e-6)
    assert np.all(np.diff(y) > 0)


def test_thermal_state_is_causal_and_bounded(rng):
    x = rng.standard_normal(500) + 1j * rng.standard_normal(500)
    w = thermal_state(x, FS, 1e-7)
    x2 = x.copy()
    x2[300:] = 0
    np.testing.assert_array_equal(thermal_state(x2, FS, 1e-7)[:300], w[:300])
    assert np.all(w <= np.max(np.abs(x) ** 2) + 1e-12) and np.all(w >= 0)


def test_rejects_bad_params():
    with pytest.raises(ParameterError):
        PAParams(ltm_time_constant=0.0)
    with pytest.raises(ParameterError):
        apply_pa(PAParams(), ComplexSignal([], FS))


def test_default_kernel_compression_and_ampm():
    table = am_curves(PAParams(noise_floor_dbc=None))
    g = PAParams().gain
    a_in, a_out, ph = table.T
    comp_db = 20 * np.log10(a_out[-1] / (g * a_in[-1]))
    assert -3.5 < comp_db < -2.5
    assert 7 < abs(ph[-1] - ph[1]) < 13
    assert np.all(np.diff(a_out) > 0)


def test_am_curves_linear():
    p = PAParams.linear()
    a_in, a_out, ph = am_curves(p, 11).T
    np.testing.assert_allclose(a_out, p.gain * a_in, rtol=1e-14)
    assert not np.any(ph)


def test_ampm_grows_with_square_of_amplitude():
    _, _, ph = am_curves(_quiet([[1.0], [0.0], [0.01j]]), 21).T
    a = np.linspace(0, 1, 21)
    np.testing.assert_allclose(np.tan(np.radians(ph)), 0.01 * a ** 2, atol=1e-15)


def test_am_curves_csv(tmp_path):
    p = tmp_path / "am.csv"
    write_am_curves(am_curves(PAParams(), 5), p)
    lines = p.read_text().splitlines()
    assert lines[0] == "a_in,a_out,phase_deg" and len(lines) == 6
    with pytest.raises(ParameterError):
        am_curves(PAParams(), 1)


def test_measure_linear_gain(rng):
    x = bandlimited(rng, 4000)
    lin = PAParams.linear()
    assert abs(measure_linear_gain(lin, x) - lin.gain) < 1e-12 * lin.gain

    p = PAParams()
    # the memory taps have unit DC gain, so a -40 dB DC probe sees G alone
    small = measure_linear_gain(p, ComplexSignal(np.full(4000, 0.01), FS))
    assert abs(abs(small) / p.gain - 1) < 1e-3
    full = x.with_samples(x.samples / np.abs(x.samples).max())
    assert abs(measure_linear_gain(p, full)) < p.gain

    with pytest.raises(ParameterError):
        measure_linear_gain(p, ComplexSignal(np.zeros(4), FS))


def test_linear_path_homogeneity(rng):
    p = _quiet(np.array([[1.0, 0.1j]]))
    x = bandlimited(rng, 300)
    y1 = apply_pa(p, x).samples
    y2 = apply_pa(p, x.with_samples(2.5 * x.samples)).samples
    np.testing.assert_allclose(y2, 2.5 * y1, rtol=1e-13)


def test_memoryless_limit(rng):
    c = default_kernel()[:, :1]
    p = _quiet(c)
    x = bandlimited(rng, 200).samples * 0.3
    perm = rng.permutation(x.size)
    ya = apply_pa(p, ComplexSignal(x, FS)).samples
    yb = apply_pa(p, ComplexSignal(x[perm], FS)).samples
    np.testing.assert_allclose(yb, ya[perm], rtol=1e-13)


def test_noise_determinism(rng):
    x = bandlimited(rng, 500)
    p = PAParams(rng_seed=3)
    np.testing.assert_array_equal(apply_pa(p, x).samples, apply_pa(p, x).samples)
    assert np.any(apply_pa(p.with_seed(4), x).samples != apply_pa(p, x).samples)


def test_noise_level():
    p = PAParams(nl_coeffs=[[1.0]], ltm_kappa=0.0, noise_floor_dbc=-70.0)
    y = apply_pa(p, ComplexSignal(np.zeros(200000), FS)).samples
    level = 10 * np.log10(np.mean(np.abs(y) ** 2) / p.gain ** 2)
    assert abs(level + 70) < 0.1
