"""Run the named studies on the reference models and collect every report under one directory.

Usage:
    python3 scripts/run_studies.py [--out runs/studies] [--only bloch_map,trajectory] [--jobs 1]

The qubit and qutrit reference checkpoints are taken from the model cache
(see scripts/train_reference_models.py) and trained on demand if missing.
Sweeps that need many new trainings (pulse counts 2-9 for qubits and qutrits,
training_size over five sizes, truncation over five n_comp values) are listed
under HEAVY and only run when named with --only; each takes hours on one core.
"""
import argparse
import shutil
import sys
from pathlib import Path

from pulseforge import reference_runs as ref
from pulseforge.cli import main as cli
from pulseforge.studies import run_job

ROOT = Path(__file__).resolve().parents[1]
QUBIT_CFG = ROOT / "configs" / "qubit.ini"
QUTRIT_CFG = ROOT / "configs" / "qutrit.ini"
HEAVY = ("pulse_count", "training_size", "truncation", "pulse_count_qutrit")


def export_checkpoints(out: Path) -> dict:
    paths = {}
    for name, job in (("qubit", ref.qubit_headline()), ("qutrit", ref.qutrit_headline())):
        run_job(job, ref.cache_dir())
        dest = out / "models" / f"{name}.json"
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(ref.cache_dir() / f"{job.key()}.json", dest)
        paths[name] = str(dest)
    return paths


def plan(ck: dict, out: Path, jobs: int) -> dict:
    cache = f"io.cache_dir={ref.cache_dir()}"
    qubit = ["--config", str(QUBIT_CFG), "--jobs", str(jobs), "--set", cache]
    qutrit = ["--config", str(QUTRIT_CFG), "--jobs", str(jobs), "--set", cache]
    return {
        "pulse_count": ["study", "pulse_count", *qubit, "--out", str(out / "pulse_count_n2")],
        "pulse_count_qutrit": ["study", "pulse_count", *qutrit, "--out", str(out / "pulse_count_n3")],
        "training_size": ["study", "training_size", *qubit, "--out", str(out / "training_size")],
        "truncation": ["study", "truncation", *qubit, "--out", str(out / "truncation")],
        "bloch_map": ["study", "bloch_map", *qubit, "--checkpoint", ck["qubit"], "--out", str(out / "bloch_map")],
        "trajectory": ["study", "trajectory", *qubit, "--checkpoint", ck["qubit"], "--out", str(out / "trajectory")],
        "azimuthal": ["study", "azimuthal", *qubit, "--checkpoint", ck["qubit"], "--out", str(out / "azimuthal")],
        "photon_number": [
            "study", "photon_number", *qubit,
            "--set", f"study.checkpoints={ck['qubit']},{ck['qutrit']}",
            "--out", str(out / "photon_number"),
        ],
        "refine": ["refine", "--config", str(QUBIT_CFG), "--checkpoint", ck["qubit"], "--out", str(out / "refine")],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(ROOT / "runs" / "studies"))
    ap.add_argument("--only", default="", help="comma-separated study names")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    ck = export_checkpoints(out)
    commands = plan(ck, out, args.jobs)
    chosen = [s for s in args.only.split(",") if s] or [s for s in commands if s not in HEAVY]
    status = 0
    for name in chosen:
        if name not in commands:
            print(f"unknown study {name!r}; choose from {', '.join(commands)}", file=sys.stderr)
            return 2
        print(f"== {name}", flush=True)
        code = cli(commands[name])
        print(f"== {name} exit {code}", flush=True)
        status = status or code
    return status


if __name__ == "__main__":
    sys.exit(main())
