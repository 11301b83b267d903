"""Batch experiments over trained controllers, plus neighbour-based refinement."""
from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .network import MlpModel, decode_raw, forward, load_checkpoint, save_checkpoint
from .quantum import NumericalError, PulseSequence, SystemConfig, clamp_fidelity, eigh_checked, hamiltonians, propagate
from .states import SEED_STRIDE, bloch_grid_arrays, bloch_states, featurize, haar_dataset
from .training import CostConfig, Evaluation, Seeds, TrainingLog, check_compatible, evaluate, evaluate_sequences, train

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-12
# Offset for evaluation-set seeds so they never coincide with training streams.
EVAL_SEED_OFFSET = 7 * SEED_STRIDE


def log10_infidelity(fidelity):
    return np.log10(np.maximum(1.0 - np.asarray(fidelity, dtype=float), LOG_FLOOR))


def bootstrap_interval(values, coverage=0.75, n_resamples=10_000, seed=0):
    """Percentile bootstrap interval for the mean of ``values``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot bootstrap an empty sample")
    if not 0 < coverage < 1:
        raise ValueError(f"coverage must lie in (0, 1), got {coverage}")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.size, size=(n_resamples, values.size))
    means = values[idx].mean(axis=1)
    tail = 0.5 * (1 - coverage)
    lo, hi = np.quantile(means, [tail, 1 - tail])
    mean = values.mean()
    # quantile interpolation can land a hair inside the sample mean on constant data
    return float(min(lo, mean)), float(max(hi, mean))


# -- cached training ---------------------------------------------------------------


@dataclass(frozen=True)
class TrainJob:
    system: SystemConfig
    cost: CostConfig
    seeds: Seeds
    hidden_sizes: tuple = (100, 300)
    activation: str = "relu"

    def key(self) -> str:
        doc = json.dumps(
            {
                "system": asdict(self.system),
                "cost": asdict(self.cost),
                "seeds": asdict(self.seeds),
                "hidden": list(self.hidden_sizes),
                "activation": self.activation,
            },
            sort_keys=True,
        )
        return hashlib.sha256(doc.encode()).hexdigest()[:16]


def run_job(job: TrainJob, cache_dir=None):
    """Train, or reload an identical previous run from ``cache_dir``. Returns (model, log summary)."""
    if cache_dir is not None:
        base = Path(cache_dir) / job.key()
        ckpt, summary = base.with_suffix(".json"), base.with_suffix(".summary.json")
        if ckpt.exists() and summary.exists():
            return load_checkpoint(ckpt), json.loads(summary.read_text())
    model, tlog = train(job.cost, job.system, job.seeds, job.hidden_sizes, job.activation)
    info = tlog.summary()
    info["train_costs"] = [r.train_cost for r in tlog.records]
    info["val_infidelities"] = [r.val_infidelity for r in tlog.records]
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, ckpt)
        summary.write_text(json.dumps(info))
    return model, info


def _safe_job(args):
    job, cache_dir = args
    try:
        return run_job(job, cache_dir), None
    except (NumericalError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_jobs(jobs: list[TrainJob], cache_dir=None, workers: int = 1):
    """Run training jobs; failures come back as (None, message) so sweeps can continue."""
    args = [(job, cache_dir) for job in jobs]
    if workers <= 1 or len(jobs) <= 1:
        return [_safe_job(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_safe_job, args))


# -- sweeps ------------------------------------------------------------------------


@dataclass
class SweepReport:
    axis_name: str
    axis: list
    mean: list
    lower: list
    upper: list
    raw: list  # per axis point: per-seed values (NaN for failed runs)
    interval: str
    failures: list = field(default_factory=list)

    def header(self) -> list[str]:
        width = max((len(r) for r in self.raw), default=0)
        return [self.axis_name, "mean_infidelity", "lower", "upper", *[f"seed{i}" for i in range(width)]]

    def rows(self) -> list[list]:
        return [[a, m, lo, hi, *r] for a, m, lo, hi, r in zip(self.axis, self.mean, self.lower, self.upper, self.raw)]


def _seed_list(base_seed: int, count: int) -> list[Seeds]:
    return [Seeds.from_base(base_seed + 101 * i) for i in range(count)]


def pulse_count_sweep(
    n: int,
    pulse_range=range(2, 10),
    seeds_per_point: int = 3,
    eval_states: int = 1000,
    cost_cfg: CostConfig = CostConfig(),
    system: SystemConfig | None = None,
    base_seed: int = 0,
    coverage: float = 0.75,
    n_resamples: int = 10_000,
    cache_dir=None,
    workers: int = 1,
    hidden_sizes=(100, 300),
    activation: str = "relu",
) -> SweepReport:
    """Mean infidelity vs. pulse count, with a bootstrap interval over the per-seed means."""
    system = system or SystemConfig(n=n)
    targets = haar_dataset(eval_states, n, base_seed + EVAL_SEED_OFFSET)
    pulse_range = list(pulse_range)
    jobs = [
        TrainJob(replace(system, n=n, num_pulses=N), cost_cfg, s, tuple(hidden_sizes), activation)
        for N in pulse_range
        for s in _seed_list(base_seed, seeds_per_point)
    ]
    results = run_jobs(jobs, cache_dir, workers)
    report = SweepReport("num_pulses", pulse_range, [], [], [], [], f"bootstrap percentile {coverage:.0%}")
    for i, N in enumerate(pulse_range):
        per_seed = []
        for job, (res, err) in zip(jobs[i * seeds_per_point :], results[i * seeds_per_point : (i + 1) * seeds_per_point]):
            if res is None:
                report.failures.append(f"N={N} seeds={job.seeds}: {err}")
                per_seed.append(float("nan"))
                continue
            per_seed.append(float(np.mean(evaluate(res[0], targets, job.system).infidelity)))
        _append_point(report, per_seed, lambda ok: bootstrap_interval(ok, coverage, n_resamples, seed=base_seed + N))
    return report


def _append_point(report, per_seed, interval):
    ok = [v for v in per_seed if np.isfinite(v)]
    report.raw.append(per_seed)
    if ok:
        lo, hi = interval(ok)
        report.mean.append(float(np.mean(ok)))
        report.lower.append(lo)
        report.upper.append(hi)
    else:
        report.mean.append(float("nan"))
        report.lower.append(float("nan"))
        report.upper.append(float("nan"))


def training_size_study(
    n: int,
    sizes,
    seeds_per_size: int = 3,
    cost_cfg: CostConfig = CostConfig(),
    system: SystemConfig | None = None,
    base_seed: int = 0,
    validation_states: int = 100,
    cache_dir=None,
    workers: int = 1,
    hidden_sizes=(100, 300),
    activation: str = "relu",
) -> SweepReport:
    """Held-out mean infidelity vs. training-set size; the band is the min-max over seeds."""
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    system = system or SystemConfig(n=n)
    held_out = haar_dataset(validation_states, n, base_seed + EVAL_SEED_OFFSET)
    jobs = [
        TrainJob(system, replace(cost_cfg, train_size=size), s, tuple(hidden_sizes), activation)
        for size in sizes
        for s in _seed_list(base_seed, seeds_per_size)
    ]
    results = run_jobs(jobs, cache_dir, workers)
    report = SweepReport("train_size", sizes, [], [], [], [], "min-max over seeds")
    for i, size in enumerate(sizes):
        per_seed = []
        for res, err in results[i * seeds_per_size : (i + 1) * seeds_per_size]:
            if res is None:
                report.failures.append(f"size={size}: {err}")
                per_seed.append(float("nan"))
            else:
                per_seed.append(float(np.mean(evaluate(res[0], held_out, system).infidelity)))
        _append_point(report, per_seed, lambda ok: (float(min(ok)), float(max(ok))))
    return report


def uhlmann_fidelity(rho, sigma):
    """(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, batched over leading axes."""
    w, v = np.linalg.eigh(rho)
    root = (v * np.sqrt(_drop_roundoff(w))[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)
    inner = np.linalg.eigvalsh(root @ sigma @ root)
    return np.sum(np.sqrt(_drop_roundoff(inner)), axis=-1) ** 2


def _drop_roundoff(w):
    # square roots magnify roundoff-level eigenvalues (1e-17 -> 3e-9), so zero them first
    tol = 64 * np.finfo(float).eps * np.max(np.abs(w), axis=-1, keepdims=True)
    return np.where(w > tol, w, 0.0)


def oscillator_states(params, total_time, system: SystemConfig) -> np.ndarray:
    from .training import prepared_amplitudes

    psi = prepared_amplitudes(params, total_time, system).reshape(-1, system.n_comp, 2)
    return psi @ np.swapaxes(psi.conj(), -1, -2)


@dataclass
class TruncationReport:
    n: int
    curves: dict  # n_comp -> list of (n_prepared, mean infidelity)
    selected_n_comp: int | None
    tolerance: float
    failures: list = field(default_factory=list)

    def header(self):
        return ["n_comp", "n_prepared", "mean_infidelity"]

    def rows(self):
        return [[c, p, v] for c, curve in self.curves.items() for p, v in curve]


def truncation_study(
    n: int,
    n_comp_candidates,
    n_prepared_range,
    num_pulses: int = 7,
    cost_cfg: CostConfig = CostConfig(),
    base_seed: int = 0,
    eval_states: int = 100,
    tolerance: float = 1e-3,
    cache_dir=None,
    workers: int = 1,
    hidden_sizes=(100, 300),
    activation: str = "relu",
) -> TruncationReport:
    """Re-simulate each model's pulses with a larger oscillator truncation and track the drift.

    For each candidate ``n_comp`` a model is trained at that truncation; its pulses
    are replayed at every ``n_prepared >= n_comp`` and compared (Uhlmann
    infidelity of the oscillator states) with the ``n_comp`` simulation. The
    smallest candidate whose curve stays within ``tolerance`` is selected.
    """
    candidates = list(n_comp_candidates)
    targets = haar_dataset(eval_states, n, base_seed + EVAL_SEED_OFFSET)
    seeds = Seeds.from_base(base_seed)
    jobs = [TrainJob(SystemConfig(n=n, n_comp=c, num_pulses=num_pulses), cost_cfg, seeds, tuple(hidden_sizes), activation) for c in candidates]
    results = run_jobs(jobs, cache_dir, workers)
    report = TruncationReport(n, {}, None, tolerance)
    for c, job, (res, err) in zip(candidates, jobs, results):
        if res is None:
            report.failures.append(f"n_comp={c}: {err}")
            continue
        raw, _ = forward(res[0], featurize(targets))
        params, total_time = decode_raw(raw, num_pulses)
        ref = oscillator_states(params, total_time, job.system)
        curve = []
        for p in n_prepared_range:
            if p < c:
                continue
            big = oscillator_states(params, total_time, replace(job.system, n_comp=p))
            padded = np.zeros_like(big)
            padded[:, :c, :c] = ref
            infid = 1.0 - uhlmann_fidelity(padded, big)
            curve.append((p, float(np.mean(np.clip(infid, 0, 1)))))
        report.curves[c] = curve
        values = [v for _, v in curve]
        if report.selected_n_comp is None and values and max(values) - min(values) <= tolerance:
            report.selected_n_comp = c
    return report


# -- Bloch-sphere maps -------------------------------------------------------------


def _require_qubit(model: MlpModel):
    if model.input_dim != 3:
        raise ValueError(f"Bloch-sphere studies need a qubit (n=2) model; this one takes {model.input_dim} inputs")


@dataclass
class BlochMap:
    theta: np.ndarray  # (R_theta, R_phi)
    phi: np.ndarray
    fidelity: np.ndarray
    purity: np.ndarray

    @property
    def infidelity(self):
        return np.clip(1.0 - self.fidelity, 0.0, 1.0)

    @property
    def log10_infidelity(self):
        return np.log10(np.maximum(self.infidelity, LOG_FLOOR))

    @property
    def resolution(self):
        return self.theta.shape

    def header(self):
        return ["theta", "phi", "log10_infidelity", "purity"]

    def rows(self):
        cols = (self.theta, self.phi, self.log10_infidelity, self.purity)
        return [list(r) for r in zip(*(c.ravel() for c in cols))]

    def grid_rows(self):
        """(theta-index, phi-index, log10 infidelity), row-major."""
        li = self.log10_infidelity
        return [[i, j, li[i, j]] for i in range(li.shape[0]) for j in range(li.shape[1])]


def bloch_map(model: MlpModel, system: SystemConfig, resolution=(250, 250)) -> BlochMap:
    _require_qubit(model)
    theta, phi = bloch_grid_arrays(*resolution)
    ev = evaluate(model, bloch_states(theta, phi).reshape(-1, 2), system)
    return BlochMap(theta, phi, ev.fidelity.reshape(theta.shape), ev.purity.reshape(theta.shape))


# -- trajectories --------------------------------------------------------------------


@dataclass
class Trajectory:
    times: np.ndarray
    rho: np.ndarray  # oscillator state per sample, (S, n_comp, n_comp)
    purity: np.ndarray
    fidelity: np.ndarray  # against the target, leakage-projected
    zeta: np.ndarray  # drive amplitudes in force at each sample (the pulse starting there)
    xi: np.ndarray
    sequence: PulseSequence

    def header(self):
        return ["time", "fidelity", "purity", "zeta", "xi"] + [f"pop{i}" for i in range(self.rho.shape[-1])]

    def rows(self):
        pops = np.einsum("sii->si", self.rho).real
        return [[t, f, p, z, x, *pp] for t, f, p, z, x, pp in zip(self.times, self.fidelity, self.purity, self.zeta, self.xi, pops)]


def record_trajectory(model: MlpModel, target, system: SystemConfig, samples_per_pulse: int = 20) -> Trajectory:
    """Oscillator state sampled at uniform sub-slice times while the predicted sequence plays."""
    check_compatible(model, system)
    if samples_per_pulse < 1:
        raise ValueError("samples_per_pulse must be >= 1")
    target = np.asarray(target, dtype=complex)
    raw, _ = forward(model, featurize(target))
    params, total_time = decode_raw(raw, model.num_pulses)
    seq = PulseSequence(params, float(total_time))
    evals, vecs = eigh_checked(hamiltonians(seq.params, system))
    tau = seq.slice_time
    psi = np.zeros(system.joint_dim, dtype=complex)
    psi[0] = 1.0
    times, states = [0.0], [psi]
    zeta, xi = [seq.params[0, 0]], [seq.params[0, 1]]
    fractions = np.arange(1, samples_per_pulse + 1) / samples_per_pulse
    for k in range(seq.num_pulses):
        v = vecs[k]
        c = v.conj().T @ psi
        for j, frac in enumerate(fractions):
            s = tau if j == samples_per_pulse - 1 else tau * frac
            states.append(v @ (np.exp(1j * evals[k] * s) * c))
            times.append(k * tau + s)
            nxt = min(k + 1, seq.num_pulses - 1) if j == samples_per_pulse - 1 else k
            zeta.append(seq.params[nxt, 0])
            xi.append(seq.params[nxt, 1])
        psi = states[-1]
    amps = np.array(states).reshape(len(states), system.n_comp, 2)
    rho = amps @ np.swapaxes(amps.conj(), -1, -2)
    lead = rho[:, : system.n, : system.n]
    fid = np.einsum("i,sij,j->s", target.conj(), lead, target).real
    times = np.array(times)
    times[-1] = seq.total_time
    return Trajectory(
        times=times,
        rho=rho,
        purity=np.einsum("sij,sji->s", rho, rho).real,
        fidelity=clamp_fidelity(fid),
        zeta=np.array(zeta),
        xi=np.array(xi),
        sequence=seq,
    )


# -- azimuthal diagnostics -----------------------------------------------------------


def guarded_arctan_ratio(x, y):
    """arctan(x / y); at y = 0 the one-sided limit sign(x) * pi/2 (0 when x = 0 too)."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    out = np.sign(x) * (np.pi / 2)
    nz = y != 0
    out = np.where(nz, np.arctan(np.divide(x, y, out=np.zeros_like(x), where=nz)), out)
    return out[()] if out.ndim == 0 else out


@dataclass
class AzimuthalTable:
    theta: float
    phi: np.ndarray
    features: np.ndarray
    raw: np.ndarray
    params: np.ndarray
    total_time: np.ndarray
    trace_pre: list
    trace_post: list
    arctan_xy: np.ndarray
    fidelity: np.ndarray

    def header(self):
        num_pulses = self.params.shape[1]
        cols = ["phi", "X", "Y", "Z", "arctan_x_over_y", "fidelity", "T"]
        cols += [f"{name}{k}" for k in range(num_pulses) for name in ("zeta", "xi", "phi", "varphi")]
        cols += [f"raw{i}" for i in range(self.raw.shape[1])]
        return cols

    def rows(self):
        flat = self.params.reshape(len(self.phi), -1)
        return [
            [p, *f, a, fi, t, *q, *r]
            for p, f, a, fi, t, q, r in zip(self.phi, self.features, self.arctan_xy, self.fidelity, self.total_time, flat, self.raw)
        ]


def azimuthal_diagnostics(model: MlpModel, system: SystemConfig, theta=0.65 * np.pi, phi_samples: int = 400) -> AzimuthalTable:
    """Network inputs, per-layer activations, and decoded outputs along a circle of fixed theta."""
    _require_qubit(model)
    phi = 2 * np.pi * np.arange(phi_samples) / phi_samples
    targets = bloch_states(np.full(phi_samples, theta), phi)
    feats = featurize(targets)
    raw, trace = forward(model, feats)
    params, total_time = decode_raw(raw, model.num_pulses)
    ev = evaluate_sequences(params, total_time, targets, system)
    return AzimuthalTable(
        theta=float(theta),
        phi=phi,
        features=feats,
        raw=raw,
        params=params,
        total_time=total_time,
        trace_pre=trace.pre,
        trace_post=trace.post,
        arctan_xy=guarded_arctan_ratio(feats[:, 0], feats[:, 1]),
        fidelity=ev.fidelity,
    )


# -- photon-number study -------------------------------------------------------------


@dataclass
class PhotonNumberReport:
    n: int
    edges: np.ndarray
    counts: np.ndarray
    mean: np.ndarray  # per-bin mean of log10 infidelity (NaN for empty bins)
    std: np.ndarray

    def header(self):
        return ["n", "bin_lo", "bin_hi", "count", "mean_log10_infidelity", "std_log10_infidelity"]

    def rows(self):
        return [
            [self.n, lo, hi, int(c), m, s]
            for lo, hi, c, m, s in zip(self.edges[:-1], self.edges[1:], self.counts, self.mean, self.std)
        ]


def photon_number_study(model: MlpModel, system: SystemConfig, samples: int = 10_000, bins: int = 20, seed: int = 0):
    """Binned log10 infidelity against the target's mean excitation number."""
    from .quantum import mean_excitation

    check_compatible(model, system)
    targets = haar_dataset(samples, system.n, seed + EVAL_SEED_OFFSET)
    excitation = mean_excitation(targets)
    values = log10_infidelity(evaluate(model, targets, system).fidelity)
    edges = np.linspace(excitation.min(), excitation.max(), bins + 1)
    which = np.clip(np.searchsorted(edges, excitation, side="right") - 1, 0, bins - 1)
    counts = np.bincount(which, minlength=bins)
    mean = np.full(bins, np.nan)
    std = np.full(bins, np.nan)
    for b in range(bins):
        sel = values[which == b]
        if sel.size:
            mean[b], std[b] = sel.mean(), sel.std()
    return PhotonNumberReport(system.n, edges, counts, mean, std)


# -- refinement ----------------------------------------------------------------------


@dataclass(frozen=True)
class RefineConfig:
    trigger: float = 0.997
    accept: float = 0.998
    neighbors: int = 10
    epsilon: float = 0.004
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.trigger <= self.accept < 1:
            raise ValueError("thresholds must satisfy 0 < trigger <= accept < 1")
        if self.epsilon < 0 or self.neighbors < 1:
            raise ValueError("epsilon must be >= 0 and neighbors >= 1")


@dataclass
class RefineResult:
    sequence: PulseSequence
    fidelity: float
    unrefined_fidelity: float
    used_neighbor: bool
    accepted: bool  # final fidelity clears the accept threshold
    candidates: int  # neighbour sequences evaluated


def random_direction(n: int, rng: np.random.Generator) -> np.ndarray:
    """Traceless Hermitian matrix with Gaussian entries, unit Frobenius norm."""
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = 0.5 * (a + a.conj().T)
    h -= np.trace(h) / n * np.eye(n)
    return h / np.linalg.norm(h)


def neighbor_states(target, count: int, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """exp(i alpha G) |target> for random directions G and alpha ~ U[0, epsilon]."""
    target = np.asarray(target, dtype=complex)
    out = []
    for _ in range(count):
        g = random_direction(target.size, rng)
        alpha = rng.uniform(0.0, epsilon)
        out.append(propagate(g, alpha) @ target)
    return np.array(out)


def refine_batch(model: MlpModel, targets, cfg: RefineConfig, system: SystemConfig) -> list[RefineResult]:
    """Refine many targets with one rotation stream (consumed in target order)."""
    targets = np.atleast_2d(np.asarray(targets, dtype=complex))
    base = evaluate(model, targets, system)
    rng = np.random.default_rng(cfg.seed)
    results = []
    for i, target in enumerate(targets):
        params, total_time, fid = base.params[i], base.total_time[i], float(base.fidelity[i])
        result = RefineResult(PulseSequence(params, float(total_time)), fid, fid, False, fid >= cfg.accept, 0)
        if fid < cfg.trigger:
            nbrs = neighbor_states(target, cfg.neighbors, cfg.epsilon, rng)
            raw, _ = forward(model, featurize(nbrs))
            cand_params, cand_time = decode_raw(raw, model.num_pulses)
            # candidates are always scored on the original target
            scores = evaluate_sequences(cand_params, cand_time, np.repeat(target[None], cfg.neighbors, 0), system).fidelity
            best = int(np.argmax(scores))
            if scores[best] > fid:
                result = RefineResult(
                    PulseSequence(cand_params[best], float(cand_time[best])),
                    float(scores[best]),
                    fid,
                    True,
                    bool(scores[best] >= cfg.accept),
                    cfg.neighbors,
                )
            else:
                result.candidates = cfg.neighbors
        results.append(result)
    return results


def refine(model: MlpModel, target, cfg: RefineConfig, system: SystemConfig) -> RefineResult:
    return refine_batch(model, target, cfg, system)[0]
