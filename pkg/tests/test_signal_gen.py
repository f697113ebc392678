import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdpd.errors import ParameterError, ResolutionError
from qdpd.qubit_sim import gate_unitary, IDENTITY
from qdpd.signal_gen import (PI_GATES, GateKind, GatePulse, QubitChannel, assemble_multitone_if,
                             baseband_of_channel, build_gate_sequence, circular_autocorrelation,
                             generate_mls, prepend_preamble, tone_power_db)
from qdpd.signals import ComplexSignal

FS = 250e6
T = 1.6e-6
RABI = math.pi / T   # amplitude 1.0 over T is a pi-pulse


def _equal_up_to_phase(a, b, tol=1e-12):
    return abs(abs(np.trace(a.conj().T @ b)) / 2 - 1) < tol


def test_gate_phases_are_quadrature():
    phases = sorted(k.phase for k in PI_GATES)
    np.testing.assert_allclose(np.diff(phases), math.pi / 2)
    for k in PI_GATES:
        assert k.inverse.inverse is k
        assert math.isclose((k.inverse.phase - k.phase) % (2 * math.pi), math.pi)


@pytest.mark.parametrize("kw", [dict(amplitude=-1.0), dict(phase=2 * math.pi), dict(duration=0.0),
                                dict(shape="gauss")])
def test_gate_pulse_invariants(kw):
    base = dict(kind=GateKind.X_PI, amplitude=1.0, phase=0.0, duration=T, start_time=0.0)
    with pytest.raises(ParameterError):
        GatePulse(**{**base, **kw})


def test_idle_iff_zero_amplitude():
    with pytest.raises(ParameterError):
        GatePulse(GateKind.IDLE, 0.5, 0.0, T, 0.0)
    with pytest.raises(ParameterError):
        GatePulse(GateKind.Y_PI, 0.0, math.pi / 2, T, 0.0)


def test_channel_requires_contiguous_gates():
    g0 = GatePulse.of(GateKind.X_PI, 1.0, T, 0.0)
    g1 = GatePulse.of(GateKind.IDLE, 1.0, T, 2 * T)
    with pytest.raises(ParameterError):
        QubitChannel(0, 20e6, (g0, g1))


def test_sequence_shape_for_seed_7():
    chans = build_gate_sequence(7, 4, 20, T)
    assert len(chans) == 4
    assert [c.freq_offset for c in chans] == [20e6, 30e6, 40e6, 50e6]
    for ch in chans:
        assert ch.n_blocks == 20
        for blk in ch.blocks():
            kinds = [g.kind for g in blk]
            assert kinds.count(GateKind.IDLE) == 2
            assert all(g.duration == T for g in blk)


@given(seed=st.integers(0, 2 ** 32 - 1))
@settings(max_examples=25, deadline=None)
def test_inverse_pairing_blocks_compose_to_identity(seed):
    for ch in build_gate_sequence(seed, 2, 5, T, pairing="inverse"):
        for blk in ch.blocks():
            u = IDENTITY
            for g in blk:
                u = gate_unitary(g, RABI) @ u
            assert _equal_up_to_phase(u, IDENTITY)


def test_independent_pairing_returns_ground_to_itself():
    # two pi-pulses about equatorial axes map |0> back to |0> up to phase
    for ch in build_gate_sequence(3, 4, 30, T, pairing="independent"):
        for blk in ch.blocks():
            psi = np.array([1, 0], dtype=complex)
            for g in blk:
                psi = gate_unitary(g, RABI) @ psi
            assert abs(abs(psi[0]) - 1) < 1e-12


def test_sequence_is_deterministic():
    a = build_gate_sequence(7, 4, 20, T)
    b = build_gate_sequence(7, 4, 20, T)
    assert a == b
    assert build_gate_sequence(8, 4, 20, T) != a


@pytest.mark.parametrize("args", [(7, 0, 1, T), (7, 1, 0, T), (7, 1, 1, 0.0)])
def test_sequence_parameter_errors(args):
    with pytest.raises(ParameterError):
        build_gate_sequence(*args)


def _single(kind, amplitude=1.0, duration=T):
    return QubitChannel(0, 0.0, (GatePulse.of(GateKind.IDLE, 0, duration, 0.0),
                                 GatePulse.of(kind, amplitude, duration, duration)))


def test_all_idle_channel_is_zero():
    ch = QubitChannel(0, 0.0, tuple(GatePulse.of(GateKind.IDLE, 0, T, i * T) for i in range(4)))
    assert not np.any(baseband_of_channel(ch, FS, RABI).samples)


def test_single_pi_pulse_is_rectangular():
    s = baseband_of_channel(_single(GateKind.Y_PI), FS, RABI).samples
    n = int(T * FS)
    assert s.size == 2 * n
    assert not np.any(s[:n])
    np.testing.assert_allclose(s[n:], 1j, atol=1e-15)


def test_half_amplitude_double_duration_is_still_pi():
    s = baseband_of_channel(_single(GateKind.X_PI, 0.5, 2 * T), FS, RABI)
    theta = RABI * np.sum(np.abs(s.samples)) / FS
    assert math.isclose(theta, math.pi, rel_tol=1e-12)


def test_non_pi_amplitude_is_rejected():
    with pytest.raises(ParameterError):
        baseband_of_channel(_single(GateKind.X_PI, 0.9), FS, RABI)


def test_pulse_shorter_than_two_samples():
    with pytest.raises(ResolutionError):
        baseband_of_channel(_single(GateKind.X_PI, 1.0, 1.5 / FS), FS, RABI, check_pi=False)


def test_single_channel_at_zero_offset_equals_baseband():
    ch = _single(GateKind.X_PI_MINUS)
    np.testing.assert_array_equal(assemble_multitone_if([ch], FS, RABI).samples,
                                  baseband_of_channel(ch, FS, RABI).samples)


def test_two_tones_beat_envelope():
    f = 5e6
    mk = lambda off: QubitChannel(0, off, (GatePulse.of(GateKind.X_PI, 1.0, T, 0.0),))
    x = assemble_multitone_if([mk(f), mk(-f)], FS, RABI).samples
    t = np.arange(x.size) / FS
    np.testing.assert_allclose(np.abs(x), 2 * np.abs(np.cos(2 * np.pi * f * t)), atol=1e-12)


def test_aliasing_offset_rejected():
    ch = QubitChannel(0, 130e6, (GatePulse.of(GateKind.X_PI, 1.0, T, 0.0),))
    with pytest.raises(ParameterError):
        assemble_multitone_if([ch], FS, RABI)


def test_unequal_durations_rejected():
    a = QubitChannel(0, 0.0, (GatePulse.of(GateKind.X_PI, 1.0, T, 0.0),))
    b = _single(GateKind.X_PI)
    with pytest.raises(ParameterError):
        assemble_multitone_if([a, b], FS, RABI)


def test_energy_additivity_and_ssb():
    chans = build_gate_sequence(5, 4, 3, T)
    x = assemble_multitone_if(chans, FS, RABI)
    parts = [baseband_of_channel(c, FS, RABI).power() for c in chans]
    # 1.6 us holds an integer number of 10 MHz beat periods
    assert math.isclose(x.power(), sum(parts), rel_tol=1e-6)

    # steady single pulse per tone over the full window: only programmed bins
    one = [QubitChannel(q, c.freq_offset, (GatePulse.of(GateKind.X_PI, 1.0, T, 0.0),))
           for q, c in enumerate(chans)]
    spec = np.abs(np.fft.fft(assemble_multitone_if(one, FS, RABI).samples)) ** 2
    bins = np.round(np.array([c.freq_offset for c in one]) * T).astype(int)
    mask = np.ones(spec.size, bool)
    mask[bins] = False
    assert 10 * np.log10(spec[mask].max() / spec[bins].max()) < -100


def test_tone_power_db():
    chans = build_gate_sequence(1, 2, 2, T, amplitude=0.5)
    np.testing.assert_allclose(tone_power_db(chans), 20 * np.log10(0.5))


@pytest.mark.parametrize("m", range(2, 14))
def test_mls_two_valued_autocorrelation(m):
    p = generate_mls(m, samples_per_chip=1)
    assert p.chips.size == 2 ** m - 1
    ac = circular_autocorrelation(p.chips)
    assert round(ac[0]) == 2 ** m - 1
    np.testing.assert_allclose(ac[1:], -1, atol=1e-6)


def test_mls_order_3_length():
    assert generate_mls(3).chips.size == 7


def test_mls_order_10_brute_force():
    c = generate_mls(10, seed_state=0x155).chips
    ac = np.array([np.dot(c, np.roll(c, k)) for k in range(c.size)])
    assert ac[0] == 1023 and np.all(ac[1:] == -1)


def test_mls_cyclic_shift_is_valid():
    c = np.roll(generate_mls(10).chips, 137)
    ac = np.rint(circular_autocorrelation(c))
    assert ac[0] == 1023 and np.all(ac[1:] == -1)


def test_mls_errors():
    with pytest.raises(ParameterError):
        generate_mls(10, seed_state=0)
    with pytest.raises(ParameterError):
        generate_mls(4, taps=(2,))   # x^4 + x^2 + 1 = (x^2 + x + 1)^2
    with pytest.raises(ParameterError):
        generate_mls(40)


def test_preamble_lengths():
    mls = generate_mls(10)
    payload = ComplexSignal(np.ones(100), FS)
    out = prepend_preamble(payload, mls)
    assert len(out) == 2046 + 100
    assert out.preamble_len == 2046
    np.testing.assert_allclose(np.abs(out.samples[:2046]), 0.5)

    zeros = prepend_preamble(payload, mls, amplitude=0.0)
    assert not np.any(zeros.samples[:2046])
    np.testing.assert_array_equal(zeros.payload, payload.samples)

    only = prepend_preamble(ComplexSignal([], FS), mls)
    assert len(only) == 2046 and only.payload.size == 0
