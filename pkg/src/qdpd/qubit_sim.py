"""Single-qubit evolution under sampled control envelopes.

The rotating-frame Hamiltonian for a baseband sample s is

    H = -(rabi_max / 2) * (Re{s} sigma_x + Im{s} sigma_y)

and the gate is the time-ordered product of exact per-sample exponentials,
latest factor leftmost. With this sign a drive of phase phi rotates the
Bloch vector by exp(+j theta/2 (cos phi sigma_x + sin phi sigma_y)).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

from . import dsp
from .errors import CalibrationError, ParameterError
from .signal_gen import pulse_span
from .signals import ComplexSignal

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
IDENTITY = np.eye(2, dtype=np.complex128)

RENORM_INTERVAL = 1024


@dataclass(frozen=True)
class QubitState:
    alpha: complex
    beta: complex

    def __post_init__(self):
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1) > 1e-10:
            raise ParameterError(f"state is not normalized (|a|^2+|b|^2 = {norm!r})")

    @classmethod
    def ground(cls):
        return cls(1.0 + 0j, 0j)

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=np.complex128)
        v = v / np.linalg.norm(v)
        return cls(complex(v[0]), complex(v[1]))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=np.complex128)

    def bloch(self) -> "BlochPoint":
        return BlochPoint(*bloch_vectors(self.vector[None, :])[0])


class BlochPoint(NamedTuple):
    x: float
    y: float
    z: float

    @property
    def theta(self) -> float:
        return math.acos(max(-1.0, min(1.0, self.z)))

    @property
    def phi(self) -> float:
        return math.atan2(self.y, self.x) % (2 * math.pi)


def bloch_vectors(states: np.ndarray) -> np.ndarray:
    """Rows (x, y, z) for an (N, 2) array of state vectors."""
    a, b = states[:, 0], states[:, 1]
    ab = np.conj(a) * b
    return np.column_stack([2 * ab.real, 2 * ab.imag, np.abs(a) ** 2 - np.abs(b) ** 2])


def hamiltonian_step(s_bb_sample: complex, rabi_max: float) -> np.ndarray:
    s = complex(s_bb_sample)
    return -(rabi_max / 2) * (s.real * SIGMA_X + s.imag * SIGMA_Y)


def step_unitary(H: np.ndarray, dt: float) -> np.ndarray:
    """exp(-j H dt) for a 2x2 Hermitian H via the Pauli closed form."""
    if not dt > 0:
        raise ParameterError("dt must be positive")
    H = np.asarray(H, dtype=np.complex128)
    h0 = 0.5 * np.trace(H).real
    hx = H[0, 1].real
    hy = H[1, 0].imag
    hz = 0.5 * (H[0, 0] - H[1, 1]).real
    norm = math.sqrt(hx * hx + hy * hy + hz * hz)
    angle = norm * dt
    if norm == 0:
        rot = IDENTITY.copy()
    else:
        n_sigma = (hx * SIGMA_X + hy * SIGMA_Y + hz * SIGMA_Z) / norm
        rot = math.cos(angle) * IDENTITY - 1j * math.sin(angle) * n_sigma
    return np.exp(-1j * h0 * dt) * rot


def rotation(axis_phase: float, angle: float) -> np.ndarray:
    """Closed-form gate realized by a constant drive of phase ``axis_phase``."""
    n_sigma = math.cos(axis_phase) * SIGMA_X + math.sin(axis_phase) * SIGMA_Y
    return math.cos(angle / 2) * IDENTITY + 1j * math.sin(angle / 2) * n_sigma


@numba.njit(cache=True)
def _propagate(step_a, step_b, substeps, psi0, renorm):
    n = step_a.size
    states = np.empty((n + 1, 2), dtype=np.complex128)
    A = 1.0 + 0.0j
    B = 0.0 + 0.0j
    p0, p1 = psi0[0], psi0[1]
    states[0, 0] = p0
    states[0, 1] = p1
    count = 0
    for i in range(n):
        a = step_a[i]
        b = step_b[i]
        for _ in range(substeps):
            A, B = a * A - np.conj(b) * B, b * A + np.conj(a) * B
            count += 1
            if count == renorm:
                count = 0
                nrm = np.sqrt(A.real ** 2 + A.imag ** 2 + B.real ** 2 + B.imag ** 2)
                A /= nrm
                B /= nrm
        states[i + 1, 0] = A * p0 - np.conj(B) * p1
        states[i + 1, 1] = B * p0 + np.conj(A) * p1
    return A, B, states


def _step_factors(s: np.ndarray, rabi_max: float, dt: float):
    # exp(-jH dt) = [[a, -b*], [b, a*]] with a = cos(th), b = j sin(th) s/|s|
    k = 0.5 * rabi_max * dt
    th = k * np.abs(s)
    return np.cos(th).astype(np.complex128), 1j * k * np.sinc(th / np.pi) * s


def evolve_states(s_bb, rabi_max, substeps=1, initial_state=None):
    """Total unitary and the (N+1, 2) array of states at every sample boundary."""
    if int(substeps) < 1:
        raise ParameterError("substeps must be at least 1")
    samples = s_bb.samples if isinstance(s_bb, ComplexSignal) else np.asarray(s_bb, np.complex128)
    fs = s_bb.sample_rate
    psi0 = (initial_state or QubitState.ground()).vector
    dt = 1.0 / (fs * substeps)
    a, b = _step_factors(np.ascontiguousarray(samples), rabi_max, dt)
    A, B, states = _propagate(a, b, int(substeps), psi0, RENORM_INTERVAL)
    U = np.array([[A, -np.conj(B)], [B, np.conj(A)]])
    return U, states


def evolve(s_bb: ComplexSignal, rabi_max: float, substeps=1, initial_state=None):
    """Evolve under a sample-held envelope.

    Each sample is held for ``substeps`` steps of dt = 1/(fs*substeps).

    Returns:
        (U, trajectory): the 2x2 gate and an (N+1, 3) array of Bloch vectors,
        row 0 being the initial state.
    """
    U, states = evolve_states(s_bb, rabi_max, substeps, initial_state)
    return U, bloch_vectors(states)


def fidelity(psi, psi_ref) -> float:
    a = psi.vector if isinstance(psi, QubitState) else np.asarray(psi)
    b = psi_ref.vector if isinstance(psi_ref, QubitState) else np.asarray(psi_ref)
    return float(min(abs(np.vdot(b, a)) ** 2, 1.0))


def unitarity_error(U: np.ndarray) -> float:
    return float(np.max(np.abs(U.conj().T @ U - IDENTITY)))


def _detect_drive(bb: np.ndarray, sample_rate: float):
    env = np.abs(dsp.lowpass(bb, 4e6, sample_rate)) if bb.size > 1 else np.abs(bb)
    peak = env.max() if env.size else 0.0
    if not peak > 1e-12:
        raise CalibrationError("no driving pulse found")
    above = np.flatnonzero(env > 0.5 * peak)
    start = above[0]
    breaks = np.flatnonzero(np.diff(above) > 1)
    stop = above[breaks[0]] + 1 if breaks.size else above[-1] + 1
    margin = dsp.filter_margin(4e6, sample_rate)
    if stop - start > 2 * margin + 1:
        start, stop = start + margin, stop - margin
    return start, stop


def downconvert_channel(if_signal: ComplexSignal, freq_offset: float, bandwidth=None, *,
                        calibration_span=None, target=1.0, normalize_amplitude=True) -> ComplexSignal:
    """Mix one qubit's tone to baseband and calibrate it on its first drive pulse.

    Args:
        if_signal: multitone IF samples (t = 0 at the first sample).
        freq_offset: the qubit's IF offset in Hz.
        bandwidth: channel low-pass bandwidth in Hz, or None to keep the full
            band so neighboring tones reach the qubit as off-resonant drives.
        calibration_span: sample range of the calibration pulse; detected
            from the envelope when omitted.
        target: complex value the calibration pulse is mapped to.
        normalize_amplitude: scale to ``|target|``; otherwise only the static
            phase is corrected.

    Raises:
        CalibrationError: no driving pulse to calibrate on.
    """
    fs = if_signal.sample_rate
    if bandwidth is not None and abs(freq_offset) + bandwidth / 2 >= fs / 2:
        raise ParameterError("channel band exceeds the Nyquist range")
    bb = dsp.channelize(if_signal.samples, freq_offset, bandwidth, fs)
    if calibration_span is None:
        start, stop = _detect_drive(bb, fs)
    else:
        start, stop = calibration_span
        margin = dsp.filter_margin(bandwidth, fs)
        if stop - start > 2 * margin + 1:
            start, stop = start + margin, stop - margin
    ref = np.mean(bb[start:stop]) if stop > start else 0.0
    if abs(ref) <= 1e-12:
        raise CalibrationError("calibration pulse has no energy")
    if normalize_amplitude:
        factor = target / ref
    else:
        factor = np.exp(1j * (np.angle(target) - np.angle(ref)))
    return ComplexSignal(bb * factor, fs)


def qubit_drive(if_signal: ComplexSignal, channel, bandwidth=None, normalize_amplitude=False):
    """Downconvert ``channel``'s tone, calibrated against its first nominal drive pulse."""
    pulse = channel.first_drive()
    if pulse is None:
        raise CalibrationError(f"qubit {channel.qubit_id} has no driving pulse")
    span = pulse_span(pulse, if_signal.sample_rate)
    return downconvert_channel(if_signal, channel.freq_offset, bandwidth, calibration_span=span,
                               target=pulse.amplitude * np.exp(1j * pulse.phase),
                               normalize_amplitude=normalize_amplitude)


def block_boundaries(channel, sample_rate):
    """Sample index at the end of every 4-pulse block."""
    return np.array([pulse_span(blk[-1], sample_rate)[1] for blk in channel.blocks()], dtype=int)


def block_states(if_signal, channel, rabi_max, bandwidth=None, substeps=1, normalize_amplitude=False):
    """States at the end of each block when the qubit is driven by ``if_signal``."""
    drive = qubit_drive(if_signal, channel, bandwidth, normalize_amplitude)
    _, states = evolve_states(drive, rabi_max, substeps)
    return states[block_boundaries(channel, if_signal.sample_rate)]


def theoretical_reference_state(x_if: ComplexSignal, channel, rabi_max, bandwidth=None,
                                normalize_amplitude=False) -> QubitState:
    """Final state under the undistorted transmit signal, neighbors included."""
    drive = qubit_drive(x_if, channel, bandwidth, normalize_amplitude)
    _, states = evolve_states(drive, rabi_max)
    return QubitState.from_vector(states[-1])


def gate_unitary(pulse, rabi_max) -> np.ndarray:
    if pulse.kind.is_idle:
        return IDENTITY.copy()
    return rotation(pulse.phase, pulse.rotation_angle(rabi_max))


def ideal_block_states(channel, rabi_max, initial_state=None):
    """Closed-form states at block ends for the nominal gates alone."""
    psi = (initial_state or QubitState.ground()).vector
    out = []
    for blk in channel.blocks():
        for g in blk:
            psi = gate_unitary(g, rabi_max) @ psi
        out.append(psi)
    return np.array(out).reshape(-1, 2)


def write_trajectory_csv(path, t, bloch) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "z"])
        for ti, (x, y, z) in zip(t, bloch):
            writer.writerow([f"{ti:.12g}", f"{x:.12g}", f"{y:.12g}", f"{z:.12g}"])

