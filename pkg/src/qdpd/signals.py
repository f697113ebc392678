"""Uniformly sampled complex waveforms and their on-disk formats.

Binary layout (little-endian)::

    u32 magic   0x47495343 ("CSIG")
    u32 version 1
    f64 sample_rate
    u64 length
    f64[2 * length] interleaved re/im
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError

MAGIC = 0x47495343
VERSION = 1
_HEADER = struct.Struct("<IIdQ")


@dataclass(frozen=True)
class ComplexSignal:
    """Complex samples on a uniform grid.

    Attributes:
        samples: complex128 vector, read-only after construction.
        sample_rate: sampling rate in Hz.
        preamble_len: number of leading samples that belong to a
            synchronization preamble (0 when there is none).
    """

    samples: np.ndarray
    sample_rate: float
    preamble_len: int = field(default=0)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.complex128).ravel()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if not self.sample_rate > 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        if not 0 <= self.preamble_len <= samples.size:
            raise ParameterError("preamble_len outside the signal")

    def __len__(self):
        return self.samples.size

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate

    @property
    def payload(self) -> np.ndarray:
        return self.samples[self.preamble_len:]

    def with_samples(self, samples, preamble_len=None) -> "ComplexSignal":
        """Return a signal on the same grid carrying ``samples``."""
        if preamble_len is None:
            preamble_len = self.preamble_len
        return ComplexSignal(samples, self.sample_rate, preamble_len)

    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2)) if len(self) else 0.0


def write_binary(signal: ComplexSignal, path) -> None:
    path = Path(path)
    body = np.empty(2 * len(signal), dtype="<f8")
    body[0::2] = signal.samples.real
    body[1::2] = signal.samples.imag
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, float(signal.sample_rate), len(signal)))
        fh.write(body.tobytes())


def read_binary(path) -> ComplexSignal:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ParameterError(f"{path}: truncated header")
    magic, version, fs, n = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ParameterError(f"{path}: bad magic 0x{magic:08x}")
    if version != VERSION:
        raise ParameterError(f"{path}: unsupported version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != 2 * n:
        raise ParameterError(f"{path}: expected {n} samples, found {body.size // 2}")
    return ComplexSignal(body[0::2] + 1j * body[1::2], fs)


def write_csv(signal: ComplexSignal, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "re", "im"])
        for i, z in enumerate(signal.samples):
            writer.writerow([i, repr(float(z.real)), repr(float(z.imag))])


def read_csv(path, sample_rate: float) -> ComplexSignal:
    """Read a signal written by :func:`write_csv`; the rate is not stored in CSV."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return ComplexSignal(data[:, 1] + 1j * data[:, 2], sample_rate)
