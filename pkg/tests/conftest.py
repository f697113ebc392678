import numpy as np
import pytest

from qdpd.signals import ComplexSignal

FS = 250e6


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def bandlimited(rng, n, frac=0.4, fs=FS):
    """White complex noise low-passed in the FFT domain to |f| < frac * fs / 2."""
    spec = np.fft.fft(rng.standard_normal(n) + 1j * rng.standard_normal(n))
    f = np.fft.fftfreq(n)
    spec[np.abs(f) > frac / 2] = 0
    x = np.fft.ifft(spec)
    return ComplexSignal(x / np.sqrt(np.mean(np.abs(x) ** 2)), fs)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, collected from test_acceptance.py."""
    results = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py::test_criterion_" not in rep.nodeid:
                continue
            if rep.when != "call" and outcome != "error":
                continue
            name = rep.nodeid.split("::")[-1]
            detail = dict(rep.user_properties).get("detail", "")
            results[name] = ("PASS" if outcome == "passed" else "FAIL", detail)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(results):
        status, detail = results[name]
        num = int(name.split("_")[2])
        label = " ".join(name.split("_")[3:])
        terminalreporter.write_line(f"criterion {num:2d} {status}  {label}  {detail}")
