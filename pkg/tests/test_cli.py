import csv
import subprocess
import sys

from qdpd.cli import main


def _ini(tmp_path, extra=""):
    p = tmp_path / "exp.ini"
    assert main(["config", str(p)]) == 0
    text = p.read_text()
    text = text.replace("n_training_sequences = 50", "n_training_sequences = 10")
    text = text.replace("n_eval_sequences = 20", "n_eval_sequences = 2")
    p.write_text(text + extra)
    return p


def test_sweep_subcommand(tmp_path, capsys):
    cfg = _ini(tmp_path)
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--levels", "0", "-2",
                 "--repetitions", "1", "--raw-only"]) == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4 * 2
    assert {r["arm"] for r in rows} == {"raw"}
    assert "power_db" in capsys.readouterr().out


def test_sequence_subcommand(tmp_path):
    cfg = _ini(tmp_path)
    out = tmp_path / "seq"
    assert main(["sequence", "--config", str(cfg), "--out", str(out), "--repetitions", "1",
                 "--dpd-only", "--seed", "3"]) == 0
    assert (out / "trajectory_q0_dpd.csv").exists()
    assert not (out / "trajectory_q0_raw.csv").exists()


def test_error_exit_code(tmp_path, capsys):
    assert main(["sweep", "--config", str(tmp_path / "missing.ini")]) == 1
    assert "error" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qdpd", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "sequence" in proc.stdout and "sweep" in proc.stdout
