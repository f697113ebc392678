"""Feedback-receiver alignment: MLS correlation with fractional-delay resolution."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, SyncError
from .signals import ComplexSignal

DEFAULT_UPSAMPLE = 10
DEFAULT_MIN_PEAK_DB = 6.0


@dataclass(frozen=True)
class SyncResult:
    delay_samples: float
    complex_gain: complex
    peak_metric: float

    CSV_HEADER = ("delay", "gain_re", "gain_im", "peak_db")

    def csv_row(self):
        g = complex(self.complex_gain)
        return (repr(float(self.delay_samples)), repr(g.real), repr(g.imag),
                repr(float(self.peak_metric)))


IDENTITY_SYNC = SyncResult(0.0, 1.0 + 0.0j, np.inf)


def write_sync_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SyncResult.CSV_HEADER)
        for r in results:
            writer.writerow(r.csv_row())


def fractional_delay(x: np.ndarray, delay: float) -> np.ndarray:
    """Circularly delay ``x`` by ``delay`` samples with a spectral phase ramp."""
    n = x.size
    if n == 0 or delay == 0:
        return np.array(x, dtype=np.complex128, copy=True)
    k = np.fft.fftfreq(n) * n
    return np.fft.ifft(np.fft.fft(x) * np.exp(-2j * np.pi * k * delay / n))


def _upsampled_xcorr(ref: np.ndarray, rec: np.ndarray, factor: int) -> np.ndarray:
    # zero-padding the cross-spectrum equals correlating band-limited
    # interpolations of both inputs
    n = ref.size
    cross = np.fft.fft(rec) * np.conj(np.fft.fft(ref))
    padded = np.zeros(n * factor, dtype=np.complex128)
    half = n // 2
    if n % 2:
        padded[:half + 1] = cross[:half + 1]
        padded[-half:] = cross[half + 1:]
    else:
        padded[:half] = cross[:half]
        padded[-half:] = cross[half:]
        # split the Nyquist bin between both ends
        padded[-half] *= 0.5
        padded[half] = padded[-half]
    return np.fft.ifft(padded) * factor


def estimate_alignment(reference: ComplexSignal, received: ComplexSignal,
                       upsample_factor=DEFAULT_UPSAMPLE, window=None,
                       min_peak_db=DEFAULT_MIN_PEAK_DB, exclude=8) -> SyncResult:
    """Delay and complex gain of ``received`` relative to ``reference``.

    Correlation runs over the first ``window`` samples (the reference's
    preamble by default). The delay grid is 1/upsample_factor samples.

    Raises:
        SyncError: when the peak-to-sidelobe ratio is below ``min_peak_db``.
    """
    if reference.sample_rate != received.sample_rate:
        raise ParameterError("sample rates differ")
    factor = int(upsample_factor)
    if factor < 1:
        raise ParameterError("upsample_factor must be at least 1")
    if window is None:
        window = reference.preamble_len or len(reference)
    window = int(window)
    if window < 2 or window > len(reference) or window > len(received):
        raise ParameterError(f"correlation window {window} does not fit both signals")

    ref = reference.samples[:window]
    corr = np.abs(_upsampled_xcorr(ref, received.samples[:window], factor)) ** 2
    peak = int(np.argmax(corr))
    m = corr.size
    lag = peak if peak < m // 2 else peak - m

    dist = np.abs((np.arange(m) - peak + m // 2) % m - m // 2)
    side = corr[dist > exclude * factor]
    floor = side.max() if side.size else 0.0
    peak_db = np.inf if floor == 0 else 10 * np.log10(corr[peak] / floor)
    if not peak_db >= min_peak_db:
        raise SyncError(f"correlation peak {peak_db:.1f} dB below floor {min_peak_db} dB", peak_db)

    delay = lag / factor
    advanced = fractional_delay(received.samples, -delay)[:window]
    gain = np.vdot(ref, advanced) / np.vdot(ref, ref).real
    return SyncResult(float(delay), complex(gain), float(peak_db))


def align_and_strip(received: ComplexSignal, sync: SyncResult, preamble_len: int,
                    payload_len=None) -> ComplexSignal:
    """Undo delay and gain, then drop the preamble (and anything past the payload)."""
    n = len(received)
    if not 0 <= preamble_len < n:
        raise ParameterError(f"preamble_len {preamble_len} outside signal of length {n}")
    if payload_len is None:
        payload_len = n - preamble_len
    if preamble_len + payload_len > n:
        raise ParameterError("payload extends past the received signal")
    if sync.complex_gain == 0:
        raise ParameterError("zero complex gain")
    y = fractional_delay(received.samples, -sync.delay_samples) / sync.complex_gain
    return ComplexSignal(y[preamble_len:preamble_len + payload_len], received.sample_rate)
