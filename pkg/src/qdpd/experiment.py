"""End-to-end transmit chain, DPD identification and qubit fidelity studies.

One power level runs as follows. The per-tone amplitude is scaled by the
level and the pulse duration by its inverse, so pi-pulses stay pi-pulses.
The PA's complex linear gain is remeasured at that drive. A training
capture (preamble + payload through PA and feedback delay) is aligned and
normalized by that gain, and the MP post-inverse is fitted. Evaluation
sequences are then sent with and without predistortion, each repetition
with fresh PA noise, and every qubit's state at each block end is compared
against the state produced by the undistorted transmit signal.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
import math
import platform
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .dpd import (MPConfig, MPCoefficients, apply_mp, identify_postinverse,
                  linearization_metrics, write_coefficients_csv)
from .errors import ParameterError
from .feedback_sync import (SyncResult, align_and_strip, estimate_alignment,
                            fractional_delay, write_sync_csv)
from .pa_model import PAParams, apply_pa, default_kernel, measure_linear_gain
from .qubit_sim import (QubitState, block_boundaries, block_states, bloch_vectors,
                        evolve_states, fidelity, ideal_block_states, qubit_drive,
                        write_trajectory_csv)
from .signal_gen import (DEFAULT_FREQ_OFFSETS, GateKind, assemble_multitone_if,
                         build_gate_sequence, generate_mls, prepend_preamble)
from .signals import ComplexSignal

log = logging.getLogger(__name__)

ARMS = ("raw", "dpd")
EXEMPLARY_PATTERN = (GateKind.IDLE, GateKind.Y_PI, GateKind.X_PI_MINUS, GateKind.IDLE)


def _default_levels():
    return tuple(float(v) for v in range(-20, 1, 2))


@dataclass(frozen=True)
class ExperimentConfig:
    rng_seed: int = 7
    n_qubits: int = 4
    freq_offsets: tuple = DEFAULT_FREQ_OFFSETS
    pulse_duration: float = 1.6e-6
    tone_amplitude: float = 0.125
    pairing: str = "independent"
    n_training_sequences: int = 50
    n_eval_sequences: int = 20
    power_levels_db: tuple = field(default_factory=_default_levels)
    n_repetitions: int = 10
    mp: MPConfig = field(default_factory=MPConfig)
    pa: PAParams = field(default_factory=PAParams)
    sample_rate: float = 250e6
    substeps: int = 1
    bandwidth: float | None = None
    metrics_bandwidth: float = 4e6
    mls_order: int = 10
    samples_per_chip: int = 2
    preamble_amplitude: float = 0.5
    upsample_factor: int = 10
    loop_delay: float = 3.7
    guard_samples: int = 64
    trajectory_stride: int = 10

    def __post_init__(self):
        object.__setattr__(self, "freq_offsets", tuple(float(f) for f in self.freq_offsets))
        object.__setattr__(self, "power_levels_db", tuple(float(p) for p in self.power_levels_db))
        if len(self.freq_offsets) != self.n_qubits:
            raise ParameterError("need one frequency offset per qubit")
        if list(self.power_levels_db) != sorted(self.power_levels_db) or not self.power_levels_db:
            raise ParameterError("power levels must be a non-empty ascending list")
        for name in ("n_qubits", "n_training_sequences", "n_eval_sequences", "n_repetitions",
                     "substeps", "upsample_factor", "trajectory_stride"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be at least 1")
        if not 0 < self.tone_amplitude:
            raise ParameterError("tone_amplitude must be positive")

    @property
    def reference_level(self) -> float:
        return self.power_levels_db[-1]

    @property
    def base_samples(self) -> int:
        return int(round(self.pulse_duration * self.sample_rate))

    @property
    def rabi_max(self) -> float:
        """Rabi rate of an amplitude-1.0 drive; the 0 dB tone makes a pi-pulse in one slot."""
        return math.pi * self.sample_rate / (self.tone_amplitude * self.base_samples)


def derive_seed(*keys) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _level_key(power_db) -> int:
    # non-negative integer tag of a level for seed derivation
    return int(round(power_db * 100)) + 1_000_000


@dataclass(frozen=True)
class LevelPlan:
    power_db: float
    amplitude: float
    duration: float
    n_samples: int


def level_plan(config: ExperimentConfig, power_db: float) -> LevelPlan:
    """Amplitude down, duration up by the same factor; amplitude trimmed to the sample grid."""
    scale = 10 ** (power_db / 20)
    n = int(round(config.base_samples / scale))
    duration = n / config.sample_rate
    amplitude = math.pi / (config.rabi_max * duration)
    return LevelPlan(power_db, amplitude, duration, n)


def make_channels(config: ExperimentConfig, plan: LevelPlan, n_sequences: int, seed: int):
    return build_gate_sequence(seed, config.n_qubits, n_sequences, plan.duration,
                               amplitude=plan.amplitude, freq_offsets=config.freq_offsets,
                               pairing=config.pairing)


class TransmitChain:
    """PA plus feedback receiver for one configuration and drive level."""

    def __init__(self, config: ExperimentConfig, plan: LevelPlan):
        self.config = config
        self.plan = plan
        self.mls = generate_mls(config.mls_order, samples_per_chip=config.samples_per_chip)
        self.preamble_amp = config.preamble_amplitude * 10 ** (plan.power_db / 20)

    def frame(self, payload: ComplexSignal) -> ComplexSignal:
        body = np.concatenate([payload.samples, np.zeros(self.config.guard_samples)])
        return prepend_preamble(ComplexSignal(body, payload.sample_rate), self.mls,
                                self.preamble_amp)

    def capture(self, payload: ComplexSignal, noise_seed: int):
        """Send ``payload`` and return the aligned PA output payload and the sync result.

        The preamble is always sent undistorted.
        """
        tx = self.frame(payload)
        rx = apply_pa(self.config.pa.with_seed(noise_seed), tx)
        rx = rx.with_samples(fractional_delay(rx.samples, self.config.loop_delay))
        sync = estimate_alignment(tx, rx, self.config.upsample_factor)
        aligned = align_and_strip(rx, sync, tx.preamble_len, len(payload))
        return aligned, sync


@dataclass
class LevelResult:
    plan: LevelPlan
    gain: complex
    coeffs: MPCoefficients
    train_sync: SyncResult
    infidelity: dict          # (qubit, arm) -> array [rep, block]
    metrics: dict             # arm -> list of LinearizationMetrics, one per rep
    syncs: list = field(default_factory=list)
    ideal_infidelity: np.ndarray | None = None


def _normalize(aligned: ComplexSignal, sync: SyncResult, gain: complex) -> ComplexSignal:
    # undo the preamble-based gain, apply the remeasured linear gain instead
    return aligned.with_samples(aligned.samples * (sync.complex_gain / gain))


def identify_level(config: ExperimentConfig, plan: LevelPlan, chain: TransmitChain):
    train_ch = make_channels(config, plan, config.n_training_sequences,
                             derive_seed(config.rng_seed, 1))
    x_train = assemble_multitone_if(train_ch, config.sample_rate, config.rabi_max)
    gain_seed = derive_seed(config.rng_seed, 2, _level_key(plan.power_db))
    gain = measure_linear_gain(config.pa.with_seed(gain_seed), x_train)
    aligned, sync = chain.capture(x_train, derive_seed(config.rng_seed, 3, _level_key(plan.power_db)))
    z = _normalize(aligned, sync, gain)
    coeffs = identify_postinverse(x_train, z, config.mp, fallback=True)
    log.info("level %+.1f dB: gain %.4f%+.4fj, ILA residual %.3e", plan.power_db,
             gain.real, gain.imag, coeffs.residual_mse)
    return gain, coeffs, sync


def run_level(config: ExperimentConfig, power_db: float, arms=ARMS, keep_signals=False):
    """All repetitions of one power level."""
    plan = level_plan(config, power_db)
    chain = TransmitChain(config, plan)
    gain, coeffs, train_sync = identify_level(config, plan, chain)

    channels = make_channels(config, plan, config.n_eval_sequences, config.rng_seed)
    x_eval = assemble_multitone_if(channels, config.sample_rate, config.rabi_max)
    refs = {ch.qubit_id: block_states(x_eval, ch, config.rabi_max, config.bandwidth, config.substeps)
            for ch in channels}
    u_eval = apply_mp(x_eval, coeffs) if "dpd" in arms else None

    level_key = _level_key(power_db)
    infid = {(ch.qubit_id, arm): np.zeros((config.n_repetitions, ch.n_blocks))
             for ch in channels for arm in arms}
    metrics = {arm: [] for arm in arms}
    syncs = []
    signals = {}
    for rep in range(config.n_repetitions):
        for a_idx, arm in enumerate(ARMS):
            if arm not in arms:
                continue
            payload = x_eval if arm == "raw" else u_eval
            aligned, sync = chain.capture(payload, derive_seed(config.rng_seed, 4, level_key, rep, a_idx))
            syncs.append(sync)
            z = _normalize(aligned, sync, gain)
            metrics[arm].append(linearization_metrics(x_eval, z, channels, config.metrics_bandwidth))
            for ch in channels:
                states = block_states(z, ch, config.rabi_max, config.bandwidth, config.substeps)
                ref = refs[ch.qubit_id]
                f = np.abs(np.sum(np.conj(ref) * states, axis=1)) ** 2
                infid[(ch.qubit_id, arm)][rep] = np.clip(1.0 - f, 0.0, 1.0)
            if keep_signals and rep == 0:
                signals[arm] = z

    ideal = np.array([[1.0 - fidelity(s, i) for s, i in
                       zip(refs[ch.qubit_id], ideal_block_states(ch, config.rabi_max))]
                      for ch in channels])
    result = LevelResult(plan, gain, coeffs, train_sync, infid, metrics, syncs, ideal)
    if keep_signals:
        return result, channels, x_eval, signals
    return result


@dataclass(frozen=True)
class SweepRow:
    qubit: int
    power_db: float
    arm: str
    mean_infidelity: float
    std: float
    nmse_db: float
    delta_a: float
    leakage_db: float

    HEADER = ("qubit", "power_db", "arm", "mean_infidelity", "std", "nmse_db", "delta_a",
              "leakage_db")

    def csv_row(self):
        return (self.qubit, f"{self.power_db:g}", self.arm, repr(self.mean_infidelity),
                repr(self.std), repr(self.nmse_db), repr(self.delta_a), repr(self.leakage_db))


@dataclass
class SweepReport:
    """Per (qubit, level, arm) aggregates; ``std`` is the standard error over repetitions."""

    config: ExperimentConfig
    rows: list
    levels: list

    def row(self, qubit, power_db, arm) -> SweepRow:
        for r in self.rows:
            if r.qubit == qubit and r.arm == arm and math.isclose(r.power_db, power_db):
                return r
        raise KeyError((qubit, power_db, arm))

    def table(self, arm) -> np.ndarray:
        """Mean infidelity as a (qubit, level) array."""
        qs = sorted({r.qubit for r in self.rows})
        ps = sorted({r.power_db for r in self.rows})
        return np.array([[self.row(q, p, arm).mean_infidelity for p in ps] for q in qs])


def summarize_level(result: LevelResult, arms=ARMS):
    rows = []
    qubits = sorted({q for q, _ in result.infidelity})
    for arm in arms:
        ms = result.metrics[arm]
        nmse = float(np.mean([m.nmse_db for m in ms]))
        for q in qubits:
            per_rep = result.infidelity[(q, arm)].mean(axis=1)
            n = per_rep.size
            sem = float(per_rep.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            rows.append(SweepRow(q, result.plan.power_db, arm, float(per_rep.mean()), sem, nmse,
                                 float(np.mean([m.delta_a[q] for m in ms])),
                                 float(np.mean([m.leakage_db[q] for m in ms]))))
    return rows


def run_power_sweep(config: ExperimentConfig, arms=ARMS) -> SweepReport:
    rows, levels = [], []
    for power_db in config.power_levels_db:
        res = run_level(config, power_db, arms)
        levels.append(res)
        rows.extend(summarize_level(res, arms))
    return SweepReport(config, rows, levels)


def find_pattern(channels, pattern=EXEMPLARY_PATTERN):
    """First (qubit_id, block_index) whose block kinds equal ``pattern``."""
    pattern = tuple(pattern)
    for ch in channels:
        for b, blk in enumerate(ch.blocks()):
            if tuple(g.kind for g in blk) == pattern:
                return ch.qubit_id, b
    return None


def seed_for_pattern(config: ExperimentConfig, pattern=EXEMPLARY_PATTERN, max_tries=1000):
    """Smallest seed >= config.rng_seed whose evaluation set contains ``pattern`` on qubit 0."""
    plan = level_plan(config, config.reference_level)
    for seed in range(config.rng_seed, config.rng_seed + max_tries):
        hit = find_pattern(make_channels(config, plan, config.n_eval_sequences, seed)[:1], pattern)
        if hit is not None:
            return seed, hit[1]
    raise ParameterError(f"pattern not found within {max_tries} seeds")


@dataclass
class SequenceResult:
    level: LevelResult
    channels: list
    fidelity_rows: list          # (qubit, sequence_index, arm, F)
    trajectories: dict           # (qubit, arm) -> (t, bloch)
    exemplary: tuple | None
    signals: dict = field(default_factory=dict)   # name -> normalized drive signal


def run_sequence_experiment(config: ExperimentConfig, power_db=None, arms=ARMS) -> SequenceResult:
    """One power level, both arms, per-sequence fidelity and Bloch trajectories."""
    if power_db is None:
        power_db = config.reference_level
    level, channels, x_eval, signals = run_level(config, power_db, arms, keep_signals=True)
    rows = []
    for ch in channels:
        for arm in arms:
            f = 1.0 - level.infidelity[(ch.qubit_id, arm)].mean(axis=0)
            rows.extend((ch.qubit_id, b, arm, float(v)) for b, v in enumerate(f))

    stride = config.trajectory_stride
    traj = {}
    sources = {"reference": x_eval, **signals}
    for ch in channels:
        for name, sig in sources.items():
            drive = qubit_drive(sig, ch, config.bandwidth)
            _, states = evolve_states(drive, config.rabi_max, config.substeps)
            idx = np.arange(0, states.shape[0], stride)
            traj[(ch.qubit_id, name)] = (idx / config.sample_rate, bloch_vectors(states[idx]))
    return SequenceResult(level, channels, rows, traj, find_pattern(channels), sources)


# ---------------------------------------------------------------- reporting

def _write_csv(path: Path, header, rows):
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def _level_tag(power_db):
    return f"{power_db:+05.1f}dB".replace("+", "p").replace("-", "m")


def manifest(config: ExperimentConfig) -> dict:
    import numba
    import scipy
    return {
        "package": "qdpd",
        "version": __version__,
        "rng_seed": config.rng_seed,
        "config": config_to_dict(config),
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__, "numba": numba.__version__},
    }


def emit_reports(report: SweepReport, out_dir) -> list:
    """Write sweep.csv, per-level coefficients, sync log, and manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / "sweep.csv"
    _write_csv(path, SweepRow.HEADER, [r.csv_row() for r in report.rows])
    written.append(path)
    sync_rows = []
    for lvl in report.levels:
        tag = _level_tag(lvl.plan.power_db)
        p = out / f"coefficients_{tag}.csv"
        write_coefficients_csv(lvl.coeffs, p)
        written.append(p)
        sync_rows.append((f"{lvl.plan.power_db:g}", *lvl.train_sync.csv_row(),
                          repr(lvl.gain.real), repr(lvl.gain.imag)))
    p = out / "levels.csv"
    _write_csv(p, ("power_db", *SyncResult.CSV_HEADER, "lin_gain_re", "lin_gain_im"), sync_rows)
    written.append(p)
    p = out / "manifest.json"
    p.write_text(json.dumps(manifest(report.config), indent=2, sort_keys=True) + "\n")
    written.append(p)
    return written


def emit_sequence_reports(result: SequenceResult, config: ExperimentConfig, out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    p = out / "fidelity.csv"
    _write_csv(p, ("qubit_id", "sequence_index", "arm", "F"),
               [(q, b, arm, repr(f)) for q, b, arm, f in result.fidelity_rows])
    written.append(p)
    for (q, name), (t, bloch) in sorted(result.trajectories.items()):
        p = out / f"trajectory_q{q}_{name}.csv"
        write_trajectory_csv(p, t, bloch)
        written.append(p)
    if result.exemplary is not None:
        q, b = result.exemplary
        ch = result.channels[q]
        lo, hi = (np.concatenate([[0], block_boundaries(ch, config.sample_rate)])[[b, b + 1]])
        for name in ("reference", *ARMS):
            if (q, name) not in result.trajectories:
                continue
            drive = qubit_drive(result.signals[name], ch, config.bandwidth)
            _, states = evolve_states(drive, config.rabi_max, config.substeps)
            sel = np.arange(lo, hi + 1, config.trajectory_stride)
            p = out / f"exemplary_q{q}_seq{b}_{name}.csv"
            write_trajectory_csv(p, sel / config.sample_rate, bloch_vectors(states[sel]))
            written.append(p)
    p = out / f"coefficients_{_level_tag(result.level.plan.power_db)}.csv"
    write_coefficients_csv(result.level.coeffs, p)
    written.append(p)
    p = out / "sync.csv"
    write_sync_csv([result.level.train_sync, *result.level.syncs], p)
    written.append(p)
    p = out / "manifest.json"
    p.write_text(json.dumps(manifest(config), indent=2, sort_keys=True) + "\n")
    written.append(p)
    return written


# ---------------------------------------------------------------- config file

def _fmt(v):
    return repr(float(v))


def config_to_dict(config: ExperimentConfig) -> dict:
    d = asdict(config)
    d["pa"]["nl_coeffs"] = [[k + 1, l, float(z.real), float(z.imag)]
                            for (k, l), z in np.ndenumerate(config.pa.nl_coeffs) if z != 0]
    d["freq_offsets"] = list(config.freq_offsets)
    d["power_levels_db"] = list(config.power_levels_db)
    return d


def save_config(config: ExperimentConfig, path) -> None:
    """Write the INI-style experiment file (sections per module)."""
    cp = configparser.ConfigParser()
    cp["experiment"] = {
        "rng_seed": str(config.rng_seed),
        "n_training_sequences": str(config.n_training_sequences),
        "n_eval_sequences": str(config.n_eval_sequences),
        "power_levels_db": ", ".join(_fmt(p) for p in config.power_levels_db),
        "n_repetitions": str(config.n_repetitions),
        "trajectory_stride": str(config.trajectory_stride),
    }
    cp["signal"] = {
        "n_qubits": str(config.n_qubits),
        "freq_offsets": ", ".join(_fmt(f) for f in config.freq_offsets),
        "pulse_duration": _fmt(config.pulse_duration),
        "tone_amplitude": _fmt(config.tone_amplitude),
        "pairing": config.pairing,
        "sample_rate": _fmt(config.sample_rate),
        "mls_order": str(config.mls_order),
        "samples_per_chip": str(config.samples_per_chip),
        "preamble_amplitude": _fmt(config.preamble_amplitude),
        "guard_samples": str(config.guard_samples),
    }
    pa = config.pa
    rows = [f"{k + 1} {l} {float(z.real)!r} {float(z.imag)!r}"
            for (k, l), z in np.ndenumerate(pa.nl_coeffs) if z != 0]
    cp["pa"] = {
        "linear_gain_db": _fmt(pa.linear_gain_db),
        "nl_coeffs": "\n" + "\n".join(rows),
        "ltm_kappa": _fmt(pa.ltm_kappa),
        "ltm_time_constant": _fmt(pa.ltm_time_constant),
        "noise_floor_dbc": "none" if pa.noise_floor_dbc is None else _fmt(pa.noise_floor_dbc),
        "rng_seed": str(pa.rng_seed),
    }
    cp["sync"] = {
        "upsample_factor": str(config.upsample_factor),
        "loop_delay": _fmt(config.loop_delay),
    }
    cp["dpd"] = {
        "K": str(config.mp.K),
        "L": str(config.mp.L),
        "regularization": _fmt(config.mp.regularization),
    }
    cp["qubit"] = {
        "substeps": str(config.substeps),
        "bandwidth": "none" if config.bandwidth is None else _fmt(config.bandwidth),
        "metrics_bandwidth": _fmt(config.metrics_bandwidth),
    }
    with open(path, "w") as fh:
        cp.write(fh)


def _floats(text):
    return tuple(float(v) for v in text.replace("\n", ",").split(",") if v.strip())


def _opt_float(text):
    return None if text.strip().lower() == "none" else float(text)


def _kernel(text):
    text = text.strip()
    if text.lower() == "default":
        return default_kernel()
    entries = [line.split() for line in text.splitlines() if line.strip()]
    K = max(int(e[0]) for e in entries)
    L = max(int(e[1]) for e in entries) + 1
    b = np.zeros((K, L), dtype=np.complex128)
    for k, l, re, im in entries:
        b[int(k) - 1, int(l)] = float(re) + 1j * float(im)
    return b


def load_config(path) -> ExperimentConfig:
    """Read a file written by :func:`save_config`; missing keys take defaults."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ParameterError(f"cannot read config file {path}")
    base = ExperimentConfig()
    kw = {}

    def get(section, key, conv):
        if cp.has_option(section, key):
            try:
                return conv(cp.get(section, key))
            except ValueError as exc:
                raise ParameterError(f"{path}: [{section}] {key}: {exc}") from exc
        return None

    options = {
        ("experiment", "rng_seed"): ("rng_seed", int),
        ("experiment", "n_training_sequences"): ("n_training_sequences", int),
        ("experiment", "n_eval_sequences"): ("n_eval_sequences", int),
        ("experiment", "power_levels_db"): ("power_levels_db", _floats),
        ("experiment", "n_repetitions"): ("n_repetitions", int),
        ("experiment", "trajectory_stride"): ("trajectory_stride", int),
        ("signal", "n_qubits"): ("n_qubits", int),
        ("signal", "freq_offsets"): ("freq_offsets", _floats),
        ("signal", "pulse_duration"): ("pulse_duration", float),
        ("signal", "tone_amplitude"): ("tone_amplitude", float),
        ("signal", "pairing"): ("pairing", str.strip),
        ("signal", "sample_rate"): ("sample_rate", float),
        ("signal", "mls_order"): ("mls_order", int),
        ("signal", "samples_per_chip"): ("samples_per_chip", int),
        ("signal", "preamble_amplitude"): ("preamble_amplitude", float),
        ("signal", "guard_samples"): ("guard_samples", int),
        ("sync", "upsample_factor"): ("upsample_factor", int),
        ("sync", "loop_delay"): ("loop_delay", float),
        ("qubit", "substeps"): ("substeps", int),
        ("qubit", "bandwidth"): ("bandwidth", _opt_float),
        ("qubit", "metrics_bandwidth"): ("metrics_bandwidth", float),
    }
    for (section, key), (name, conv) in options.items():
        if cp.has_option(section, key):
            kw[name] = get(section, key, conv)

    pa = base.pa
    pa_kw = {}
    for key, conv in (("linear_gain_db", float), ("nl_coeffs", _kernel), ("ltm_kappa", float),
                      ("ltm_time_constant", float), ("noise_floor_dbc", _opt_float),
                      ("rng_seed", int)):
        if cp.has_option("pa", key):
            pa_kw[key] = get("pa", key, conv)
    kw["pa"] = replace(pa, **pa_kw)

    mp_kw = {}
    for key, conv in (("K", int), ("L", int), ("regularization", float)):
        if cp.has_option("dpd", key):
            mp_kw[key] = get("dpd", key, conv)
    kw["mp"] = replace(base.mp, **mp_kw)
    if "n_qubits" in kw and "freq_offsets" not in kw:
        kw["freq_offsets"] = tuple(20e6 + 10e6 * n for n in range(kw["n_qubits"]))
    return replace(base, **kw)
