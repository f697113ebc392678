"""Gate pulse trains, frequency-multiplexed IF assembly and MLS preambles."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import max_len_seq

from .errors import ParameterError, ResolutionError
from .signals import ComplexSignal

PULSES_PER_BLOCK = 4
DEFAULT_SAMPLE_RATE = 250e6
DEFAULT_PULSE_DURATION = 1.6e-6
# 2.16/2.17/2.18/2.19 GHz qubits around a 2.14 GHz carrier
DEFAULT_FREQ_OFFSETS = (20e6, 30e6, 40e6, 50e6)


class GateKind(enum.Enum):
    X_PI = "X"
    X_PI_MINUS = "-X"
    Y_PI = "Y"
    Y_PI_MINUS = "-Y"
    IDLE = "I"

    @property
    def phase(self) -> float:
        return _GATE_PHASE[self]

    @property
    def inverse(self) -> "GateKind":
        return _GATE_INVERSE[self]

    @property
    def is_idle(self) -> bool:
        return self is GateKind.IDLE


_GATE_PHASE = {
    GateKind.X_PI: 0.0,
    GateKind.Y_PI: 0.5 * math.pi,
    GateKind.X_PI_MINUS: math.pi,
    GateKind.Y_PI_MINUS: 1.5 * math.pi,
    GateKind.IDLE: 0.0,
}
_GATE_INVERSE = {
    GateKind.X_PI: GateKind.X_PI_MINUS,
    GateKind.X_PI_MINUS: GateKind.X_PI,
    GateKind.Y_PI: GateKind.Y_PI_MINUS,
    GateKind.Y_PI_MINUS: GateKind.Y_PI,
    GateKind.IDLE: GateKind.IDLE,
}
PI_GATES = (GateKind.X_PI, GateKind.X_PI_MINUS, GateKind.Y_PI, GateKind.Y_PI_MINUS)


@dataclass(frozen=True)
class GatePulse:
    """One gate slot of a qubit channel.

    ``shape`` is reserved for shaped envelopes; only ``"rect"`` is implemented.
    """

    kind: GateKind
    amplitude: float
    phase: float
    duration: float
    start_time: float
    shape: str = "rect"

    def __post_init__(self):
        if self.amplitude < 0:
            raise ParameterError("pulse amplitude must be non-negative")
        if self.kind.is_idle != (self.amplitude == 0):
            raise ParameterError("idle pulses, and only idle pulses, have zero amplitude")
        if not 0 <= self.phase < 2 * math.pi:
            raise ParameterError("phase must lie in [0, 2*pi)")
        if self.duration <= 0:
            raise ParameterError("pulse duration must be positive")
        if self.shape != "rect":
            raise ParameterError(f"unsupported pulse shape {self.shape!r}")

    @classmethod
    def of(cls, kind: GateKind, amplitude: float, duration: float, start_time: float):
        return cls(kind, 0.0 if kind.is_idle else float(amplitude), kind.phase,
                   float(duration), float(start_time))

    @property
    def stop_time(self) -> float:
        return self.start_time + self.duration

    def rotation_angle(self, rabi_max: float) -> float:
        return rabi_max * self.amplitude * self.duration


@dataclass(frozen=True)
class QubitChannel:
    qubit_id: int
    freq_offset: float
    gates: tuple = field(default_factory=tuple)

    def __post_init__(self):
        gates = tuple(self.gates)
        object.__setattr__(self, "gates", gates)
        for prev, nxt in zip(gates, gates[1:]):
            if not math.isclose(prev.stop_time, nxt.start_time, rel_tol=1e-9, abs_tol=1e-15):
                raise ParameterError(f"qubit {self.qubit_id}: gates are not contiguous")

    @property
    def duration(self) -> float:
        return self.gates[-1].stop_time - self.gates[0].start_time if self.gates else 0.0

    @property
    def n_blocks(self) -> int:
        return len(self.gates) // PULSES_PER_BLOCK

    def blocks(self):
        """Yield the gates grouped by 4-pulse block."""
        for b in range(self.n_blocks):
            yield self.gates[b * PULSES_PER_BLOCK:(b + 1) * PULSES_PER_BLOCK]

    def kinds(self):
        return [g.kind for g in self.gates]

    def first_drive(self):
        """First non-idle pulse, or None."""
        return next((g for g in self.gates if not g.kind.is_idle), None)


@dataclass(frozen=True)
class MlsPreamble:
    register_order: int
    feedback_taps: int
    chips: np.ndarray
    samples_per_chip: int = 2

    def __post_init__(self):
        chips = np.asarray(self.chips, dtype=np.float64)
        chips.setflags(write=False)
        object.__setattr__(self, "chips", chips)
        if self.samples_per_chip < 1:
            raise ParameterError("samples_per_chip must be at least 1")
        if chips.size != 2 ** self.register_order - 1:
            raise ParameterError("chip count must equal 2**m - 1")

    @property
    def n_samples(self) -> int:
        return self.chips.size * self.samples_per_chip

    def waveform(self, amplitude: float = 1.0) -> np.ndarray:
        return amplitude * np.repeat(self.chips, self.samples_per_chip).astype(np.complex128)


def build_gate_sequence(rng_seed, n_qubits, n_sequences, pulse_duration, *,
                        amplitude=1.0, freq_offsets=None, pairing="inverse"):
    """Random identity blocks of two pi-pulses and two idles per qubit.

    Each block holds four equal-duration slots; two random slots carry
    pi-pulses drawn from {+-X, +-Y}, the others idle. With
    ``pairing="inverse"`` the second pi-pulse undoes the first, so each block
    composes to the identity. With ``pairing="independent"`` both pi-pulses
    are drawn freely; the block then only returns |0> to itself up to phase.

    Args:
        rng_seed: seed for ``numpy.random.default_rng``.
        n_qubits: number of frequency-multiplexed qubits.
        n_sequences: blocks per qubit.
        pulse_duration: slot length in seconds.
        amplitude: normalized drive amplitude of every pi-pulse.
        freq_offsets: per-qubit IF offsets in Hz; defaults to 20, 30, 40, ... MHz.
        pairing: ``"inverse"`` or ``"independent"``.

    Returns:
        list of QubitChannel.
    """
    if int(n_qubits) < 1 or int(n_sequences) < 1:
        raise ParameterError("n_qubits and n_sequences must be at least 1")
    if not pulse_duration > 0:
        raise ParameterError("pulse_duration must be positive")
    if pairing not in ("inverse", "independent"):
        raise ParameterError(f"unknown pairing {pairing!r}")
    if freq_offsets is None:
        freq_offsets = [20e6 + 10e6 * n for n in range(n_qubits)]
    if len(freq_offsets) != n_qubits:
        raise ParameterError("need one frequency offset per qubit")

    rng = np.random.default_rng(rng_seed)
    channels = []
    for q in range(n_qubits):
        gates = []
        t = 0.0
        for _ in range(n_sequences):
            slots = sorted(rng.choice(PULSES_PER_BLOCK, size=2, replace=False))
            first = PI_GATES[rng.integers(len(PI_GATES))]
            if pairing == "inverse":
                second = first.inverse
            else:
                second = PI_GATES[rng.integers(len(PI_GATES))]
            kinds = [GateKind.IDLE] * PULSES_PER_BLOCK
            kinds[slots[0]], kinds[slots[1]] = first, second
            for kind in kinds:
                gates.append(GatePulse.of(kind, amplitude, pulse_duration, t))
                t = (len(gates)) * pulse_duration
        channels.append(QubitChannel(q, float(freq_offsets[q]), tuple(gates)))
    return channels


def pulse_span(pulse: GatePulse, sample_rate: float):
    """Sample index range [start, stop) covered by a pulse."""
    start = int(round(pulse.start_time * sample_rate))
    stop = int(round(pulse.stop_time * sample_rate))
    return start, stop


def baseband_of_channel(channel: QubitChannel, sample_rate: float, rabi_max: float,
                        check_pi=True) -> ComplexSignal:
    """Rectangular-pulse baseband envelope of one qubit channel.

    Amplitude 1.0 drives the qubit at ``rabi_max``. With ``check_pi`` every
    non-idle pulse must realize a pi rotation on the sample grid.
    """
    if not channel.gates:
        raise ParameterError("channel has no gates")
    n_total = int(round(channel.gates[-1].stop_time * sample_rate))
    out = np.zeros(n_total, dtype=np.complex128)
    for g in channel.gates:
        if g.duration * sample_rate < 2:
            raise ResolutionError(
                f"pulse of {g.duration:.3e} s spans fewer than 2 samples at {sample_rate:.3e} Hz")
        start, stop = pulse_span(g, sample_rate)
        if g.kind.is_idle:
            continue
        if check_pi:
            theta = rabi_max * g.amplitude * (stop - start) / sample_rate
            if abs(theta - math.pi) > 1e-6 * math.pi:
                raise ParameterError(
                    f"qubit {channel.qubit_id}: {g.kind.value} pulse realizes "
                    f"theta={theta:.6f} rad, not pi")
        out[start:stop] = g.amplitude * np.exp(1j * g.phase)
    return ComplexSignal(out, sample_rate)


def assemble_multitone_if(channels, sample_rate, rabi_max, check_pi=True) -> ComplexSignal:
    """Sum of per-qubit basebands, each shifted to its IF offset.

    Complex mixing keeps every tone on one side of the carrier only.
    """
    if not channels:
        raise ParameterError("no channels")
    durations = {round(ch.duration * sample_rate) for ch in channels}
    if len(durations) != 1:
        raise ParameterError("channels must share a common duration")
    for ch in channels:
        if abs(ch.freq_offset) >= sample_rate / 2:
            raise ParameterError(
                f"qubit {ch.qubit_id}: offset {ch.freq_offset:.3e} Hz aliases at {sample_rate:.3e} Hz")
    n = durations.pop()
    t = np.arange(n) / sample_rate
    out = np.zeros(n, dtype=np.complex128)
    for ch in channels:
        bb = baseband_of_channel(ch, sample_rate, rabi_max, check_pi=check_pi).samples
        out += bb * np.exp(2j * np.pi * ch.freq_offset * t)
    return ComplexSignal(out, sample_rate)


def tone_power_db(channels):
    """Mean per-tone power over active pulses, dB relative to an amplitude-1.0 tone."""
    out = []
    for ch in channels:
        active = [g for g in ch.gates if not g.kind.is_idle]
        if not active:
            out.append(-np.inf)
            continue
        w = np.array([g.duration for g in active])
        p = np.array([g.amplitude ** 2 for g in active])
        out.append(10 * np.log10(np.sum(w * p) / np.sum(w)))
    return np.array(out)


# scipy.signal.max_len_seq tap convention (register order excluded)
_MLS_TAPS = {
    2: (1,), 3: (2,), 4: (3,), 5: (3,), 6: (5,), 7: (6,), 8: (7, 6, 1), 9: (5,),
    10: (7,), 11: (9,), 12: (11, 10, 4), 13: (12, 11, 8), 14: (13, 12, 2),
    15: (14,), 16: (15, 13, 4), 17: (14,), 18: (11,), 19: (18, 17, 14), 20: (17,),
}


def circular_autocorrelation(chips) -> np.ndarray:
    spec = np.fft.fft(chips)
    return np.fft.ifft(spec * np.conj(spec)).real


def _is_two_valued(chips) -> bool:
    ac = np.rint(circular_autocorrelation(chips))
    return ac[0] == chips.size and np.all(ac[1:] == -1)


def generate_mls(register_order, seed_state=1, samples_per_chip=2, taps=None) -> MlsPreamble:
    """Maximum length sequence of +-1 chips from a Fibonacci LFSR.

    ``seed_state`` is the initial register content as a bitmask.
    """
    m = int(register_order)
    if taps is None:
        if m not in _MLS_TAPS:
            raise ParameterError(f"no primitive taps tabulated for register order {m}")
        taps = _MLS_TAPS[m]
    taps = tuple(int(t) for t in taps)
    if seed_state <= 0 or seed_state >= 2 ** m:
        raise ParameterError("seed_state must be a nonzero m-bit mask")
    state = [(seed_state >> i) & 1 for i in range(m)]
    bits, _ = max_len_seq(m, state=state, taps=list(taps))
    chips = 1.0 - 2.0 * bits
    if not _is_two_valued(chips):
        raise ParameterError(f"taps {taps} are not primitive for register order {m}")
    mask = sum(1 << t for t in taps)
    return MlsPreamble(m, mask, chips, samples_per_chip)


def prepend_preamble(signal: ComplexSignal, preamble: MlsPreamble, amplitude=0.5) -> ComplexSignal:
    """Chip-held preamble followed by the payload; records the preamble length."""
    head = preamble.waveform(amplitude)
    return ComplexSignal(np.concatenate([head, signal.samples]), signal.sample_rate,
                         preamble_len=head.size)
