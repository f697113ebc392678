"""Synthetic power amplifier: gain, memory-polynomial kernel, thermal memory, noise.

The amplifier is

    y(n) = G * (1 + kappa * w(n)) * sum_k sum_l b[k, l] x(n-l) |x(n-l)|^(k-1) + noise

with ``w`` a one-pole low-pass of |x|^2 (cold start at zero). Full scale is
|x| = 1; the noise floor is quoted relative to full-scale output power.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .dpd import memory_polynomial
from .errors import ParameterError
from .signals import ComplexSignal

DEFAULT_LINEAR_GAIN_DB = 25.48

# Static odd-order polynomial: ~3 dB compression and ~10 deg AM/PM at |x| = 1.
_STATIC_POLY = {1: 1.0, 3: -0.364 + 0.176j, 5: 0.001 - 0.071j, 7: 0.060 + 0.019j}
# Short-term memory taps relative to the main tap: -20, -26, -30 dB.
_STM_RELATIVE = (1.0,
                 10 ** (-20 / 20) * np.exp(-0.3j),
                 10 ** (-26 / 20) * np.exp(0.5j),
                 10 ** (-30 / 20) * np.exp(-0.8j))


def default_kernel() -> np.ndarray:
    """Separable kernel b[k-1, l] = c_k * h_l with unit DC gain of the taps."""
    h = np.asarray(_STM_RELATIVE, dtype=np.complex128)
    h = h / h.sum()
    c = np.zeros(7, dtype=np.complex128)
    for k, v in _STATIC_POLY.items():
        c[k - 1] = v
    return np.outer(c, h)


def linear_kernel() -> np.ndarray:
    return np.ones((1, 1), dtype=np.complex128)


@dataclass(frozen=True)
class PAParams:
    """Ground-truth amplifier parameters.

    ``nl_coeffs[k-1, l]`` weights x(n-l)|x(n-l)|^(k-1). ``noise_floor_dbc``
    of ``None`` disables the additive noise.
    """

    linear_gain_db: float = DEFAULT_LINEAR_GAIN_DB
    nl_coeffs: np.ndarray = field(default_factory=default_kernel)
    ltm_kappa: float = 0.05
    ltm_time_constant: float = 5e-6
    noise_floor_dbc: float | None = -70.0
    rng_seed: int = 0

    def __post_init__(self):
        b = np.array(self.nl_coeffs, dtype=np.complex128, ndmin=2)
        b.setflags(write=False)
        object.__setattr__(self, "nl_coeffs", b)
        if b.size == 0:
            raise ParameterError("empty PA kernel")
        if not self.ltm_time_constant > 0:
            raise ParameterError("ltm_time_constant must be positive")

    @classmethod
    def linear(cls, linear_gain_db=DEFAULT_LINEAR_GAIN_DB):
        """Distortion-free amplifier: pure gain, no thermal term, no noise."""
        return cls(linear_gain_db, linear_kernel(), 0.0, 5e-6, None, 0)

    @property
    def gain(self) -> float:
        return 10 ** (self.linear_gain_db / 20)

    @property
    def orders(self) -> int:
        return self.nl_coeffs.shape[0]

    @property
    def memory(self) -> int:
        return self.nl_coeffs.shape[1]

    def with_seed(self, seed) -> "PAParams":
        return replace(self, rng_seed=int(seed))


def thermal_state(x: np.ndarray, sample_rate: float, time_constant: float) -> np.ndarray:
    """One-pole low-pass of |x|^2, starting from zero."""
    alpha = -np.expm1(-1.0 / (sample_rate * time_constant))
    return lfilter([alpha], [1.0, alpha - 1.0], np.abs(x) ** 2)


def apply_pa(params: PAParams, signal: ComplexSignal) -> ComplexSignal:
    x = signal.samples
    if x.size == 0:
        raise ParameterError("empty input signal")
    y = memory_polynomial(x, params.nl_coeffs)
    if params.ltm_kappa:
        w = thermal_state(x, signal.sample_rate, params.ltm_time_constant)
        y *= 1.0 + params.ltm_kappa * w
    y *= params.gain
    if params.noise_floor_dbc is not None:
        rng = np.random.default_rng(params.rng_seed)
        sigma = params.gain * np.sqrt(10 ** (params.noise_floor_dbc / 10) / 2)
        y += sigma * (rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size))
    return signal.with_samples(y)


def am_curves(params: PAParams, n_points=101) -> np.ndarray:
    """Static AM/AM and AM/PM sweep over input amplitudes 0..1.

    All memory lags see the same constant sample and the thermal term is
    held at zero. Returns rows of (a_in, a_out, phase_deg); the phase is the
    absolute output phase for a real positive input.
    """
    if n_points < 2:
        raise ParameterError("n_points must be at least 2")
    a = np.linspace(0.0, 1.0, n_points)
    c = params.nl_coeffs.sum(axis=1)
    y = params.gain * a * sum(ck * a ** k for k, ck in enumerate(c))
    phase = np.degrees(np.angle(y))
    # direction at zero drive is the small-signal phase
    phase[0] = np.degrees(np.angle(c[0])) if c[0] != 0 else 0.0
    return np.column_stack([a, np.abs(y), phase])


def write_am_curves(table, path) -> None:
    np.savetxt(path, table, delimiter=",", header="a_in,a_out,phase_deg", comments="",
               fmt="%.12g")


def measure_linear_gain(params: PAParams, probe: ComplexSignal) -> complex:
    """Complex least-squares gain <y, x> / <x, x> of the PA at the probe's drive."""
    x = probe.samples
    energy = np.vdot(x, x).real
    if not energy > 0:
        raise ParameterError("probe has zero energy")
    y = apply_pa(params, probe).samples
    return complex(np.vdot(x, y) / energy)
