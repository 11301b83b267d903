"""The standard full-size training runs behind the headline benchmarks.

Every run is a ``TrainJob`` keyed by its complete configuration, so the
benchmark suite and ``scripts/train_reference_models.py`` share one on-disk
cache and each model is trained once.
"""
from __future__ import annotations

import os
from dataclasses import replace
from pathlib import Path

from .quantum import SystemConfig
from .studies import TrainJob, _seed_list
from .training import CostConfig

CACHE_ENV = "PULSEFORGE_CACHE"
DEFAULT_CACHE = Path(__file__).resolve().parents[2] / ".cache" / "models"

BASE_SEED = 0
SEEDS_PER_POINT = 3
QUBIT = SystemConfig(n=2, n_comp=6, num_pulses=7)
QUTRIT = SystemConfig(n=3, n_comp=6, num_pulses=9)
FULL = CostConfig()


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, DEFAULT_CACHE))


def qubit_headline() -> TrainJob:
    return TrainJob(QUBIT, FULL, _seed_list(BASE_SEED, 1)[0])


def qutrit_headline() -> TrainJob:
    return TrainJob(QUTRIT, FULL, _seed_list(BASE_SEED, 1)[0])


def pulse_count_jobs(pulse_counts=(2, 7)) -> list[TrainJob]:
    return [
        TrainJob(replace(QUBIT, num_pulses=N), FULL, s)
        for N in pulse_counts
        for s in _seed_list(BASE_SEED, SEEDS_PER_POINT)
    ]


def training_size_jobs(sizes=(256, 4096)) -> list[TrainJob]:
    return [
        TrainJob(QUBIT, replace(FULL, train_size=size), s)
        for size in sizes
        for s in _seed_list(BASE_SEED, SEEDS_PER_POINT)
    ]


def all_jobs() -> list[TrainJob]:
    """Distinct jobs, headline models first."""
    ordered = [qubit_headline(), qutrit_headline(), *pulse_count_jobs(), *training_size_jobs()]
    seen, out = set(), []
    for job in ordered:
        if job.key() not in seen:
            seen.add(job.key())
            out.append(job)
    return out
