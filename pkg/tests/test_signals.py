import numpy as np
import pytest

from qdpd.errors import ParameterError
from qdpd.signals import ComplexSignal, read_binary, read_csv, write_binary, write_csv


def test_samples_are_read_only():
    s = ComplexSignal([1, 2j], 10.0)
    assert s.samples.dtype == np.complex128
    with pytest.raises(ValueError):
        s.samples[0] = 3


@pytest.mark.parametrize("fs", [0.0, -1.0])
def test_rejects_nonpositive_rate(fs):
    with pytest.raises(ParameterError):
        ComplexSignal([1.0], fs)


def test_preamble_len_bounds():
    with pytest.raises(ParameterError):
        ComplexSignal([1.0, 2.0], 1.0, preamble_len=3)
    s = ComplexSignal([1.0, 2.0, 3.0], 1.0, preamble_len=1)
    np.testing.assert_array_equal(s.payload, [2.0, 3.0])


def test_time_axis_and_power():
    s = ComplexSignal(np.full(4, 2.0), 4.0)
    np.testing.assert_allclose(s.time, [0, 0.25, 0.5, 0.75])
    assert s.dt == 0.25
    assert s.power() == 4.0


def test_binary_round_trip(tmp_path, rng):
    s = ComplexSignal(rng.standard_normal(257) + 1j * rng.standard_normal(257), 250e6)
    p = tmp_path / "x.bin"
    write_binary(s, p)
    assert p.stat().st_size == 24 + 16 * 257
    back = read_binary(p)
    np.testing.assert_array_equal(back.samples, s.samples)
    assert back.sample_rate == s.sample_rate


def test_binary_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"\0" * 32)
    with pytest.raises(ParameterError):
        read_binary(p)


def test_csv_round_trip(tmp_path, rng):
    s = ComplexSignal(rng.standard_normal(10) + 1j * rng.standard_normal(10), 1e6)
    p = tmp_path / "x.csv"
    write_csv(s, p)
    assert p.read_text().splitlines()[0] == "index,re,im"
    np.testing.assert_array_equal(read_csv(p, 1e6).samples, s.samples)
