"""Memory-polynomial predistortion identified with the indirect learning architecture.

Regressor columns are ordered l-major, k-minor: column ``l*K + (k-1)`` holds
x(n-l)|x(n-l)|^(k-1), with zeros for n-l < 0.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import dsp
from .errors import IllConditionedError, ParameterError
from .signal_gen import pulse_span
from .signals import ComplexSignal

log = logging.getLogger(__name__)

NMSE_FLOOR_DB = -200.0
CONDITION_LIMIT = 1e12
_BLOCK_ROWS = 1 << 16


@dataclass(frozen=True)
class MPConfig:
    K: int = 5
    L: int = 6
    regularization: float = 0.0

    def __post_init__(self):
        if self.K < 1 or self.L < 1:
            raise ParameterError("K and L must be at least 1")
        if self.regularization < 0:
            raise ParameterError("regularization must be non-negative")

    @property
    def n_coeffs(self) -> int:
        return self.K * self.L


@dataclass(frozen=True)
class MPCoefficients:
    """Coefficient grid ``a[k-1, l]``; ``residual_mse`` is set by identification."""

    a: np.ndarray
    residual_mse: float | None = field(default=None, compare=False)

    def __post_init__(self):
        a = np.array(self.a, dtype=np.complex128, ndmin=2)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def K(self) -> int:
        return self.a.shape[0]

    @property
    def L(self) -> int:
        return self.a.shape[1]

    @property
    def vector(self) -> np.ndarray:
        """Coefficients in regressor column order."""
        return self.a.T.ravel()

    @classmethod
    def from_vector(cls, vec, config: MPConfig, residual_mse=None):
        vec = np.asarray(vec, dtype=np.complex128)
        if vec.size != config.n_coeffs:
            raise ParameterError("coefficient vector does not match config")
        return cls(vec.reshape(config.L, config.K).T, residual_mse)

    @classmethod
    def identity(cls, config: MPConfig):
        a = np.zeros((config.K, config.L), dtype=np.complex128)
        a[0, 0] = 1.0
        return cls(a)


def write_coefficients_csv(coeffs: MPCoefficients, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "l", "re", "im"])
        for l in range(coeffs.L):
            for k in range(coeffs.K):
                z = coeffs.a[k, l]
                writer.writerow([k + 1, l, repr(float(z.real)), repr(float(z.imag))])


def read_coefficients_csv(path) -> MPCoefficients:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    K, L = int(rows[:, 0].max()), int(rows[:, 1].max()) + 1
    a = np.zeros((K, L), dtype=np.complex128)
    for k, l, re, im in rows:
        a[int(k) - 1, int(l)] = re + 1j * im
    return MPCoefficients(a)


def memory_polynomial(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    """sum_k sum_l a[k-1, l] x(n-l)|x(n-l)|^(k-1) with zero history."""
    x = np.asarray(x, dtype=np.complex128)
    mag = np.abs(x)
    out = np.zeros_like(x)
    basis = x.copy()
    for k in range(a.shape[0]):
        if k:
            basis = basis * mag
        for lag, coeff in enumerate(a[k]):
            if coeff == 0:
                continue
            if lag == 0:
                out += coeff * basis
            elif lag < x.size:
                out[lag:] += coeff * basis[:-lag]
    return out


def _regressor_rows(x: np.ndarray, K: int, L: int, start: int, stop: int) -> np.ndarray:
    lo = max(start - (L - 1), 0)
    seg = x[lo:stop]
    pad = (L - 1) - (start - lo)
    if pad:
        seg = np.concatenate([np.zeros(pad, dtype=np.complex128), seg])
    mag = np.abs(seg)
    n = stop - start
    phi = np.empty((n, K * L), dtype=np.complex128)
    basis = seg.copy()
    for k in range(K):
        if k:
            basis = basis * mag
        for l in range(L):
            phi[:, l * K + k] = basis[L - 1 - l:L - 1 - l + n]
    return phi


def build_regressor(x, config: MPConfig) -> np.ndarray:
    samples = x.samples if isinstance(x, ComplexSignal) else np.asarray(x, dtype=np.complex128)
    if samples.size <= config.L:
        raise ParameterError(f"signal length {samples.size} must exceed memory depth {config.L}")
    return _regressor_rows(samples, config.K, config.L, 0, samples.size)


def _blocks(n, size=_BLOCK_ROWS):
    for start in range(0, n, size):
        yield start, min(start + size, n)


def _solve(x, target, config, ridge):
    K, L = config.K, config.L
    p = K * L
    n = x.size

    norms2 = np.zeros(p)
    for start, stop in _blocks(n):
        norms2 += np.sum(np.abs(_regressor_rows(x, K, L, start, stop)) ** 2, axis=0)
    if np.any(norms2 == 0):
        raise IllConditionedError("design matrix has an all-zero column", np.inf)
    scale = 1.0 / np.sqrt(norms2)

    # streaming QR of the equilibrated, target-augmented design matrix
    r_aug = np.zeros((0, p + 1), dtype=np.complex128)
    if ridge > 0:
        reg = np.zeros((p, p + 1), dtype=np.complex128)
        reg[:, :p] = np.diag(np.sqrt(ridge) * scale)
        r_aug = np.linalg.qr(reg, mode="r")
    for start, stop in _blocks(n):
        blk = np.empty((stop - start, p + 1), dtype=np.complex128)
        blk[:, :p] = _regressor_rows(x, K, L, start, stop) * scale
        blk[:, p] = target[start:stop]
        r_aug = np.linalg.qr(np.vstack([r_aug, blk]), mode="r")
    r = r_aug[:p, :p]
    cond = np.linalg.cond(r)
    return r, r_aug[:p, p], cond, scale, norms2


def identify_postinverse(pa_in, pa_out_aligned, config: MPConfig, fallback=False) -> MPCoefficients:
    """Fit the post-inverse: regress the PA input on the normalized PA output.

    Solves min_a ||pa_in - Phi(pa_out_aligned) a||^2 (+ ridge) by an
    orthogonal decomposition of the column-equilibrated design matrix.

    Raises:
        IllConditionedError: condition estimate above ``CONDITION_LIMIT``
            with no regularization and ``fallback`` disabled. With
            ``fallback`` a ridge of 1e-10 * trace(Phi^H Phi) is applied instead.
    """
    x_in = pa_in.samples if isinstance(pa_in, ComplexSignal) else np.asarray(pa_in, np.complex128)
    y = (pa_out_aligned.samples if isinstance(pa_out_aligned, ComplexSignal)
         else np.asarray(pa_out_aligned, np.complex128))
    if x_in.size != y.size:
        raise ParameterError("input and output lengths differ")
    if y.size <= config.L:
        raise ParameterError(f"signal length {y.size} must exceed memory depth {config.L}")
    if y.size < config.n_coeffs:
        raise ParameterError("fewer samples than coefficients")

    ridge = config.regularization
    r, qy, cond, scale, norms2 = _solve(y, x_in, config, ridge)
    if cond > CONDITION_LIMIT and ridge == 0:
        if not fallback:
            raise IllConditionedError("regressor is rank deficient", cond)
        ridge = 1e-10 * norms2.sum()
        log.warning("ill-conditioned regressor (cond %.3e); ridge %.3e", cond, ridge)
        r, qy, cond, scale, norms2 = _solve(y, x_in, config, ridge)
    vec = solve_triangular(r, qy) * scale

    sse = 0.0
    for start, stop in _blocks(y.size):
        phi = _regressor_rows(y, config.K, config.L, start, stop)
        sse += np.sum(np.abs(x_in[start:stop] - phi @ vec) ** 2)
    return MPCoefficients.from_vector(vec, config, residual_mse=float(sse / y.size))


def apply_mp(x: ComplexSignal, coeffs: MPCoefficients) -> ComplexSignal:
    return x.with_samples(memory_polynomial(x.samples, coeffs.a))


@dataclass(frozen=True)
class LinearizationMetrics:
    """NMSE in dB; per-channel relative amplitude error and idle-tone leakage (dB)."""

    nmse_db: float
    delta_a: tuple
    leakage_db: tuple


def nmse_db(reference: np.ndarray, output: np.ndarray) -> float:
    err = np.vdot(output - reference, output - reference).real
    ref = np.vdot(reference, reference).real
    if err == 0:
        return NMSE_FLOOR_DB
    return max(10 * np.log10(err / ref), NMSE_FLOOR_DB)


def _spans(channel, sample_rate, idle, margin, n):
    idx = []
    for g in channel.gates:
        if g.kind.is_idle != idle:
            continue
        start, stop = pulse_span(g, sample_rate)
        start, stop = start + margin, min(stop - margin, n)
        if stop > start:
            idx.append(np.arange(start, stop))
    return np.concatenate(idx) if idx else np.zeros(0, dtype=int)


def linearization_metrics(reference: ComplexSignal, output_aligned: ComplexSignal, channels,
                          bandwidth=4e6) -> LinearizationMetrics:
    """Signal-level linearity of an aligned, gain-normalized output.

    ``delta_a`` compares mean channel magnitudes over active pulses.
    ``leakage_db`` is the power of the distortion (output minus reference)
    at each channel's offset during its idle slots, relative to that
    channel's active-tone power.
    """
    x, y = reference.samples, output_aligned.samples
    if x.size != y.size:
        raise ParameterError("reference and output lengths differ")
    fs = reference.sample_rate
    margin = dsp.filter_margin(bandwidth, fs)
    err = y - x
    delta_a, leak = [], []
    for ch in channels:
        xb = dsp.channelize(x, ch.freq_offset, bandwidth, fs)
        active = _spans(ch, fs, False, margin, x.size)
        idle = _spans(ch, fs, True, margin, x.size)
        if active.size == 0:
            delta_a.append(float("nan"))
            leak.append(float("nan"))
            continue
        yb = dsp.channelize(y, ch.freq_offset, bandwidth, fs)
        delta_a.append(float(np.mean(np.abs(yb[active])) / np.mean(np.abs(xb[active])) - 1))
        if idle.size == 0:
            leak.append(float("nan"))
            continue
        eb = dsp.channelize(err, ch.freq_offset, bandwidth, fs)
        p_leak = np.mean(np.abs(eb[idle]) ** 2)
        p_act = np.mean(np.abs(xb[active]) ** 2)
        leak.append(NMSE_FLOOR_DB if p_leak == 0 else max(10 * np.log10(p_leak / p_act), NMSE_FLOOR_DB))
    return LinearizationMetrics(nmse_db(x, y), tuple(delta_a), tuple(leak))
