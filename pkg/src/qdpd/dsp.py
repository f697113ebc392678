"""Mixing and channel filters shared by metrics and qubit downconversion."""

from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve, firwin, kaiserord

STOPBAND_DB = 70.0


def mix(x: np.ndarray, freq: float, sample_rate: float) -> np.ndarray:
    """Multiply by exp(-j 2 pi freq t), t = n / sample_rate."""
    t = np.arange(x.size) / sample_rate
    return x * np.exp(-2j * np.pi * freq * t)


@lru_cache(maxsize=32)
def lowpass_taps(bandwidth: float, sample_rate: float) -> np.ndarray:
    """Odd-length Kaiser FIR, passband |f| <= bandwidth/2, stopband |f| >= 1.5*bandwidth."""
    nyq = sample_rate / 2
    numtaps, beta = kaiserord(STOPBAND_DB, bandwidth / nyq)
    numtaps |= 1
    taps = firwin(numtaps, bandwidth, window=("kaiser", beta), fs=sample_rate)
    taps.setflags(write=False)
    return taps


def lowpass(x: np.ndarray, bandwidth: float, sample_rate: float) -> np.ndarray:
    """Zero-phase (delay-compensated) linear-phase low-pass."""
    return fftconvolve(x, lowpass_taps(bandwidth, sample_rate), mode="same")


def channelize(x: np.ndarray, freq: float, bandwidth, sample_rate: float) -> np.ndarray:
    bb = mix(x, freq, sample_rate)
    return bb if bandwidth is None else lowpass(bb, bandwidth, sample_rate)


def filter_margin(bandwidth, sample_rate: float) -> int:
    """Samples either side of a step where the filter transient is still visible."""
    if bandwidth is None:
        return 0
    return lowpass_taps(bandwidth, sample_rate).size // 2
