"""Train (or confirm cached) every full-size reference model, one after another.

Usage: python3 scripts/train_reference_models.py [--list]

Models land in $PULSEFORGE_CACHE (default .cache/models) and are picked up by
tests/test_acceptance.py and the study commands that share the same keys.
"""
import argparse
import time

from pulseforge import reference_runs
from pulseforge.studies import run_job


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--list", action="store_true", help="print job keys and exit")
    args = ap.parse_args()
    cache = reference_runs.cache_dir()
    for job in reference_runs.all_jobs():
        s = job.system
        label = f"{job.key()} n={s.n} N={s.num_pulses} train={job.cost.train_size} seeds.init={job.seeds.init}"
        cached = (cache / f"{job.key()}.summary.json").exists()
        if args.list:
            print(label, "cached" if cached else "missing")
            continue
        start = time.perf_counter()
        _, info = run_job(job, cache)
        took = "cached" if cached else f"{time.perf_counter() - start:.0f}s"
        print(f"{label} best_val_infidelity={info['best_val_infidelity']:.3e} epochs={len(info['val_infidelities'])} ({took})", flush=True)


if __name__ == "__main__":
    main()
