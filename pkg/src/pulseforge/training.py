"""Regularized infidelity cost, its exact gradient, and the training loop.

Gradients flow through each pulse propagator ``exp(i H tau)`` via the
eigenbasis divided-difference (Daleckii-Krein) form of its Frechet
derivative, then through output decoding and the network layers.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .network import MlpModel, backward, decode_raw, forward, init_model
from .quantum import NumericalError, SystemConfig, build_operators, clamp_fidelity, eigh_checked, hamiltonians
from .states import SEED_STRIDE, featurize, haar_dataset

log = logging.getLogger(__name__)

EVAL_CHUNK = 2048


@dataclass(frozen=True)
class CostConfig:
    batch_size: int = 64
    learning_rate: float = 1e-3
    max_epochs: int = 2000
    patience: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    train_size: int = 4096
    validation_size: int = 100

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_epochs < 0 or self.patience < 1:
            raise ValueError("max_epochs must be >= 0 and patience >= 1")
        if self.train_size < 1 or self.validation_size < 1:
            raise ValueError("train_size and validation_size must be >= 1")


@dataclass(frozen=True)
class Seeds:
    """Independent seeds for every random stream of a training run."""

    init: int
    dataset: int
    validation: int
    shuffle: int

    @classmethod
    def from_base(cls, seed: int) -> "Seeds":
        return cls(
            init=seed,
            dataset=seed + SEED_STRIDE,
            validation=seed + 2 * SEED_STRIDE,
            shuffle=seed + 3 * SEED_STRIDE,
        )


# -- matrix exponential derivative ------------------------------------------------


def _divided_differences(evals: np.ndarray, t) -> np.ndarray:
    """Phi_ab = (e^{i l_a t} - e^{i l_b t}) / (l_a - l_b), with i t e^{i l_a t} on the diagonal.

    Written as i t e^{i (l_a + l_b) t / 2} sinc((l_a - l_b) t / 2), which equals
    the quotient off the diagonal and reaches the diagonal limit continuously, so
    (near-)degenerate pairs need no special casing.
    """
    t = np.asarray(t, dtype=float)[..., None, None]
    la = evals[..., :, None]
    lb = evals[..., None, :]
    return 1j * t * np.exp(0.5j * (la + lb) * t) * np.sinc((la - lb) * t / (2 * np.pi))


def expm_directional_derivative(h: np.ndarray, t: float, direction: np.ndarray) -> np.ndarray:
    """Frechet derivative of exp(i H t) at H along ``direction``."""
    if not np.all(np.isfinite(direction)):
        raise NumericalError("direction contains non-finite entries")
    evals, vecs = eigh_checked(h)
    vh = vecs.conj().T
    return vecs @ ((vh @ direction @ vecs) * _divided_differences(evals, t)) @ vh


# -- batched simulation with adjoint gradients -----------------------------------


def _matvec(m, v):
    return (m @ v[..., None])[..., 0]


def prepared_amplitudes(params: np.ndarray, total_time: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Final joint states for a batch of sequences: params (B, N, 4), T (B,) -> (B, D)."""
    return _simulate(params, total_time, cfg)[0]


def _simulate(params, total_time, cfg):
    batch, num_pulses = params.shape[:2]
    evals, vecs = eigh_checked(hamiltonians(params, cfg))
    tau = np.asarray(total_time, dtype=float) / num_pulses
    phases = np.exp(1j * evals * tau[:, None, None])
    psi = np.zeros((batch, cfg.joint_dim), dtype=complex)
    psi[:, 0] = 1.0
    coords = []
    for k in range(num_pulses):
        v = vecs[:, k]
        c = _matvec(np.swapaxes(v.conj(), -1, -2), psi)
        coords.append(c)
        psi = _matvec(v, phases[:, k] * c)
    return psi, evals, vecs, phases, tau, coords


def _target_overlaps(psi, targets, cfg):
    amps = psi.reshape(psi.shape[0], cfg.n_comp, 2)[:, : cfg.n, :]
    return np.einsum("ba,bak->bk", targets.conj(), amps)


def sequence_fidelity(params, total_time, targets, cfg: SystemConfig) -> np.ndarray:
    """Fidelity of each target with the leakage-projected prepared state."""
    psi = prepared_amplitudes(params, total_time, cfg)
    return np.sum(np.abs(_target_overlaps(psi, targets, cfg)) ** 2, axis=-1)


def sequence_fidelity_grad(params, total_time, targets, cfg: SystemConfig):
    """Fidelities and their exact gradients w.r.t. pulse parameters and total time.

    Returns (F (B,), dF/dparams (B, N, 4), dF/dT (B,)).
    """
    params = np.asarray(params, dtype=float)
    targets = np.asarray(targets)
    batch, num_pulses = params.shape[:2]
    psi, evals, vecs, phases, tau, coords = _simulate(params, total_time, cfg)
    overlaps = _target_overlaps(psi, targets, cfg)
    fid = np.sum(np.abs(overlaps) ** 2, axis=-1)

    # adjoint: dF = 2 Re <chi|d psi>
    chi = np.zeros((batch, cfg.n_comp, 2), dtype=complex)
    chi[:, : cfg.n, :] = targets[:, :, None] * overlaps[:, None, :]
    chi = chi.reshape(batch, -1)

    ops = build_operators(cfg)
    phi_dd = _divided_differences(evals, tau[:, None])
    d_params = np.zeros_like(params)
    d_tau = np.zeros(batch)
    for k in reversed(range(num_pulses)):
        v = vecs[:, k]
        vh = np.swapaxes(v.conj(), -1, -2)
        chi_e = _matvec(vh, chi)
        psi_e = coords[k]
        d_tau += 2 * np.real(1j * np.sum(chi_e.conj() * evals[:, k] * phases[:, k] * psi_e, axis=-1))
        m = chi_e.conj()[:, :, None] * phi_dd[:, k] * psi_e[:, None, :]
        gamma = v @ np.swapaxes(m, -1, -2) @ vh  # dF = 2 Re Tr(dH gamma)
        s_sm = np.einsum("ij,bji->b", ops.sm, gamma)
        s_sp = np.einsum("ij,bji->b", ops.sp, gamma)
        s_a = np.einsum("ij,bji->b", ops.a, gamma)
        s_ad = np.einsum("ij,bji->b", ops.adag, gamma)
        zeta, xi, phi, varphi = params[:, k].T
        eq, ec = np.exp(1j * phi), np.exp(1j * varphi)
        d_params[:, k, 0] = 2 * np.real(eq * s_sm + s_sp / eq)
        d_params[:, k, 1] = 2 * np.real(ec * s_a + s_ad / ec)
        d_params[:, k, 2] = 2 * np.real(1j * zeta * (eq * s_sm - s_sp / eq))
        d_params[:, k, 3] = 2 * np.real(1j * xi * (ec * s_a - s_ad / ec))
        chi = _matvec(v, phases[:, k].conj() * chi_e)
    return fid, d_params, d_tau / num_pulses


# -- cost ---------------------------------------------------------------------------


def _batch_features(batch, cfg):
    batch = np.atleast_2d(np.asarray(batch, dtype=complex))
    if batch.shape[-1] != cfg.n:
        raise ValueError(f"targets have dimension {batch.shape[-1]}, system expects n={cfg.n}")
    return batch, featurize(batch)


def regularizer(params: np.ndarray, lambda_reg: float) -> np.ndarray:
    """lambda * sum_k (zeta_k + xi_k)^2 per sequence."""
    return lambda_reg * np.sum((params[..., 0] + params[..., 1]) ** 2, axis=-1)


def cost(batch, model: MlpModel, cfg: SystemConfig) -> float:
    """1 - mean(F - lambda * sum_k (zeta_k + xi_k)^2), F taken on the leakage-projected state."""
    targets, feats = _batch_features(batch, cfg)
    raw, _ = forward(model, feats)
    params, total_time = decode_raw(raw, model.num_pulses)
    fid = sequence_fidelity(params, total_time, targets, cfg)
    return float(1.0 - np.mean(fid - regularizer(params, cfg.lambda_reg)))


class GradientBundle(NamedTuple):
    weights: list
    biases: list
    d_params: np.ndarray
    d_total_time: np.ndarray


def cost_gradient(batch, model: MlpModel, cfg: SystemConfig):
    """Cost and its exact gradient w.r.t. every network parameter."""
    targets, feats = _batch_features(batch, cfg)
    raw, trace = forward(model, feats)
    num_pulses = model.num_pulses
    params, total_time = decode_raw(raw, num_pulses)
    fid, d_fid_params, d_fid_time = sequence_fidelity_grad(params, total_time, targets, cfg)
    size = targets.shape[0]
    value = float(1.0 - np.mean(fid - regularizer(params, cfg.lambda_reg)))
    if not np.isfinite(value):
        raise NumericalError(f"non-finite cost {value}")

    d_params = -d_fid_params / size
    reg = 2 * cfg.lambda_reg * (params[..., 0] + params[..., 1]) / size
    d_params[..., 0] += reg
    d_params[..., 1] += reg
    d_time = -d_fid_time / size

    grad_raw = np.empty_like(raw)
    grad_raw[:, : 4 * num_pulses] = d_params.reshape(size, -1)
    grad_raw[:, 4 * num_pulses] = d_time * 0.5 * (1 + np.tanh(0.5 * raw[:, 4 * num_pulses]))
    gw, gb = backward(model, feats, trace, grad_raw)
    return value, GradientBundle(gw, gb, d_params, d_time)


# -- evaluation ---------------------------------------------------------------------


@dataclass
class Evaluation:
    fidelity: np.ndarray
    purity: np.ndarray
    leakage: np.ndarray
    params: np.ndarray
    total_time: np.ndarray

    @property
    def infidelity(self) -> np.ndarray:
        return 1.0 - self.fidelity


def check_compatible(model: MlpModel, system: SystemConfig) -> None:
    if model.input_dim != system.feature_dim:
        raise ValueError(f"model expects {model.input_dim} features but n={system.n} gives {system.feature_dim}")
    if model.num_pulses != system.num_pulses:
        raise ValueError(f"model predicts {model.num_pulses} pulses but the system uses {system.num_pulses}")


def evaluate_sequences(params, total_time, targets, system: SystemConfig) -> Evaluation:
    params = np.asarray(params, dtype=float)
    targets = np.asarray(targets, dtype=complex)
    total_time = np.asarray(total_time, dtype=float)
    psi = prepared_amplitudes(params, total_time, system)
    amps = psi.reshape(psi.shape[0], system.n_comp, 2)
    rho = amps @ np.swapaxes(amps.conj(), -1, -2)
    lead = rho[:, : system.n, : system.n]
    fid = np.einsum("bi,bij,bj->b", targets.conj(), lead, targets).real
    kept = np.einsum("bii->b", lead).real
    return Evaluation(
        fidelity=clamp_fidelity(fid),
        purity=np.einsum("bij,bji->b", rho, rho).real,
        leakage=1.0 - kept,
        params=params,
        total_time=total_time,
    )


def evaluate(model: MlpModel, states, system: SystemConfig, chunk: int = EVAL_CHUNK) -> Evaluation:
    """Per-target fidelity (projected state), oscillator purity, and leakage 1 - Tr(rho_n)."""
    check_compatible(model, system)
    states = np.atleast_2d(np.asarray(states, dtype=complex))
    parts = []
    for start in range(0, states.shape[0], chunk):
        targets, feats = _batch_features(states[start : start + chunk], system)
        raw, _ = forward(model, feats)
        params, total_time = decode_raw(raw, model.num_pulses)
        parts.append(evaluate_sequences(params, total_time, targets, system))
    return Evaluation(*(np.concatenate([getattr(p, f) for p in parts]) for f in Evaluation.__dataclass_fields__))


# -- optimization -------------------------------------------------------------------


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        """Update ``params`` in place."""
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class EpochRecord:
    epoch: int
    train_cost: float
    val_infidelity: float
    elapsed_s: float


@dataclass
class TrainingLog:
    seeds: Seeds
    records: list[EpochRecord] = field(default_factory=list)
    initial_val_infidelity: float | None = None
    best_epoch: int = 0
    best_val_infidelity: float | None = None
    stop_reason: str = ""

    DETERMINISTIC_FIELDS = ("epoch", "train_cost", "val_infidelity")

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r)) + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl())

    @staticmethod
    def read(path) -> list[dict]:
        return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]

    def summary(self) -> dict:
        return {
            "seeds": asdict(self.seeds),
            "epochs_run": len(self.records),
            "initial_val_infidelity": self.initial_val_infidelity,
            "best_epoch": self.best_epoch,
            "best_val_infidelity": self.best_val_infidelity,
            "stop_reason": self.stop_reason,
        }


class TrainingDiverged(NumericalError):
    def __init__(self, message, state: dict):
        super().__init__(message)
        self.state = state


def _mean_infidelity(model, states, system):
    return float(np.mean(evaluate(model, states, system).infidelity))


def train(
    cfg: CostConfig,
    system: SystemConfig,
    seeds: Seeds | int,
    hidden_sizes=(100, 300),
    activation: str = "relu",
    dump_path=None,
    progress=None,
):
    """Minibatch Adam on a fixed Haar training set; returns the best-validation model and its log.

    ``progress``, if given, is called with each EpochRecord.
    """
    if isinstance(seeds, int):
        seeds = Seeds.from_base(seeds)
    model = init_model(
        system.feature_dim, system.num_pulses, seeds.init, hidden_sizes, activation, n=system.n, n_comp=system.n_comp
    )
    log_ = TrainingLog(seeds)
    if cfg.max_epochs == 0:
        log_.stop_reason = "max_epochs=0"
        return model, log_

    train_states = haar_dataset(cfg.train_size, system.n, seeds.dataset)
    val_states = haar_dataset(cfg.validation_size, system.n, seeds.validation)
    shuffle = np.random.default_rng(seeds.shuffle)
    params = model.parameters()
    opt = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)

    best = model.copy()
    best_val = _mean_infidelity(model, val_states, system)
    log_.initial_val_infidelity = best_val
    log_.best_val_infidelity = best_val
    stale = 0
    start = time.perf_counter()
    log_.stop_reason = "max_epochs"
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle.permutation(cfg.train_size)
        costs, weights = [], []
        for lo in range(0, cfg.train_size, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            try:
                value, grads = cost_gradient(train_states[idx], model, system)
            except NumericalError as exc:
                state = {"epoch": epoch, "batch_start": lo, "parameters": [p.copy() for p in params]}
                if dump_path is not None:
                    np.savez(dump_path, *state["parameters"], epoch=epoch, batch_start=lo)
                raise TrainingDiverged(f"training diverged at epoch {epoch}: {exc}", state) from exc
            costs.append(value)
            weights.append(len(idx))
            opt.step(params, [p for wb in zip(grads.weights, grads.biases) for p in wb])
        val = _mean_infidelity(model, val_states, system)
        record = EpochRecord(epoch, float(np.average(costs, weights=weights)), val, time.perf_counter() - start)
        log_.records.append(record)
        if progress is not None:
            progress(record)
        if val < best_val:
            best_val, best, stale = val, model.copy(), 0
            log_.best_epoch, log_.best_val_infidelity = epoch, val
        else:
            stale += 1
            if stale >= cfg.patience:
                log_.stop_reason = f"patience ({cfg.patience}) exhausted"
                break
    log.info("training stopped after %d epochs (%s); best val infidelity %.3e", epoch, log_.stop_reason, best_val)
    return best, log_
