"""Truncated oscillator-qubit dynamics under rectangular pulse sequences.

Joint basis index is ``alpha * 2 + beta`` (oscillator-major), with
``beta = 1`` the excited qubit level. Evolution over a duration ``t`` is
``exp(+i H t)``; the sign is kept fixed everywhere, including gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np


class NumericalError(ArithmeticError):
    """Non-finite numbers reached a numerical kernel."""


@dataclass(frozen=True)
class SystemConfig:
    n: int = 2
    n_comp: int = 6
    g: float = 1.0
    delta_c: float = 0.0
    delta_eg: float = 0.0
    lambda_reg: float = 0.8
    num_pulses: int = 7

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.n_comp < self.n:
            raise ValueError(f"n_comp must be >= n (n_comp={self.n_comp}, n={self.n})")
        if self.num_pulses < 1:
            raise ValueError(f"num_pulses must be >= 1, got {self.num_pulses}")
        if self.lambda_reg < 0:
            raise ValueError(f"lambda_reg must be >= 0, got {self.lambda_reg}")

    @property
    def joint_dim(self) -> int:
        return 2 * self.n_comp

    @property
    def feature_dim(self) -> int:
        return self.n * self.n - 1


@dataclass(frozen=True)
class PulseParams:
    zeta: float
    xi: float
    phi: float
    varphi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.zeta, self.xi, self.phi, self.varphi], dtype=float)


@dataclass(frozen=True)
class PulseSequence:
    """N rectangular pulses sharing a total duration; row k is (zeta, xi, phi, varphi)."""

    params: np.ndarray = field(repr=False)
    total_time: float

    def __post_init__(self):
        params = np.asarray(self.params, dtype=float).reshape(-1, 4)
        if not np.all(np.isfinite(params)):
            raise ValueError("pulse parameters must be finite")
        if not self.total_time > 0:
            raise ValueError(f"total_time must be positive, got {self.total_time}")
        object.__setattr__(self, "params", params)

    @classmethod
    def from_pulses(cls, pulses: Sequence[PulseParams], total_time: float) -> "PulseSequence":
        return cls(np.array([p.as_array() for p in pulses]), total_time)

    @property
    def num_pulses(self) -> int:
        return self.params.shape[0]

    @property
    def slice_time(self) -> float:
        return self.total_time / self.num_pulses

    @property
    def pulses(self) -> list[PulseParams]:
        return [PulseParams(*map(float, row)) for row in self.params]


class OperatorSet(NamedTuple):
    a: np.ndarray
    adag: np.ndarray
    num: np.ndarray
    sp: np.ndarray
    sm: np.ndarray
    sz: np.ndarray


@lru_cache(maxsize=None)
def _operators(n_comp: int) -> OperatorSet:
    a_osc = np.diag(np.sqrt(np.arange(1, n_comp, dtype=float)), k=1)
    id_osc = np.eye(n_comp)
    id_q = np.eye(2)
    sp_q = np.array([[0.0, 0.0], [1.0, 0.0]])  # |1><0|
    sz_q = np.diag([-1.0, 1.0])
    ops = OperatorSet(
        a=np.kron(a_osc, id_q),
        adag=np.kron(a_osc.T, id_q),
        num=np.kron(np.diag(np.arange(n_comp, dtype=float)), id_q),
        sp=np.kron(id_osc, sp_q),
        sm=np.kron(id_osc, sp_q.T),
        sz=np.kron(id_osc, sz_q),
    )
    for op in ops:
        op.setflags(write=False)
    return ops


def build_operators(cfg: SystemConfig) -> OperatorSet:
    """Ladder, number and qubit operators lifted to the joint space (real, read-only)."""
    return _operators(cfg.n_comp)


@lru_cache(maxsize=None)
def _static_parts(n_comp, g, delta_c, delta_eg):
    ops = _operators(n_comp)
    h0 = g * (ops.a @ ops.sp + ops.adag @ ops.sm) + delta_c * ops.num + 0.5 * delta_eg * ops.sz
    h0.setflags(write=False)
    return h0


def hamiltonians(params: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Hamiltonians for an array of pulse parameters of shape (..., 4) -> (..., D, D)."""
    params = np.asarray(params, dtype=float)
    ops = build_operators(cfg)
    h0 = _static_parts(cfg.n_comp, cfg.g, cfg.delta_c, cfg.delta_eg)
    zeta, xi, phi, varphi = (params[..., i, None, None] for i in range(4))
    qubit = zeta * (np.exp(1j * phi) * ops.sm + np.exp(-1j * phi) * ops.sp)
    osc = xi * (np.exp(1j * varphi) * ops.a + np.exp(-1j * varphi) * ops.adag)
    return h0 + qubit + osc


def build_hamiltonian(p: PulseParams, cfg: SystemConfig) -> np.ndarray:
    return hamiltonians(p.as_array(), cfg)


def eigh_checked(h: np.ndarray):
    if not np.all(np.isfinite(h)):
        raise NumericalError("Hamiltonian contains non-finite entries")
    return np.linalg.eigh(h)


def propagate(h: np.ndarray, t: float) -> np.ndarray:
    """exp(+i H t) through the Hermitian eigendecomposition of H."""
    if t < 0:
        raise ValueError(f"duration must be non-negative, got {t}")
    evals, vecs = eigh_checked(h)
    phases = np.exp(1j * evals * t)
    return (vecs * phases[..., None, :]) @ np.swapaxes(vecs.conj(), -1, -2)


def ground_state(cfg: SystemConfig) -> np.ndarray:
    psi = np.zeros(cfg.joint_dim, dtype=complex)
    psi[0] = 1.0
    return psi


def apply_sequence(seq: PulseSequence, cfg: SystemConfig, initial: np.ndarray | None = None) -> np.ndarray:
    """U(theta_N)...U(theta_1)|initial>, each pulse lasting T/N. Defaults to |0,0>."""
    psi = ground_state(cfg) if initial is None else np.asarray(initial, dtype=complex)
    if psi.shape != (cfg.joint_dim,):
        raise ValueError(f"initial state has shape {psi.shape}, expected ({cfg.joint_dim},)")
    evals, vecs = eigh_checked(hamiltonians(seq.params, cfg))
    phases = np.exp(1j * evals * seq.slice_time)
    for k in range(seq.num_pulses):
        v = vecs[k]
        psi = v @ (phases[k] * (v.conj().T @ psi))
    return psi


def partial_trace_qubit(joint: np.ndarray) -> np.ndarray:
    """Oscillator reduced density matrix; accepts a leading batch axis."""
    amps = np.asarray(joint).reshape(*np.shape(joint)[:-1], -1, 2)
    return amps @ np.swapaxes(amps.conj(), -1, -2)


def project_leading_levels(rho: np.ndarray, n: int) -> np.ndarray:
    """Top-left n x n block of an oscillator state. Not renormalized: lost weight is leakage."""
    if n > rho.shape[-1]:
        raise ValueError(f"cannot project a dimension-{rho.shape[-1]} state onto {n} levels")
    return rho[..., :n, :n]


_FID_TOL = 1e-9


def fidelity(target: np.ndarray, rho: np.ndarray) -> float:
    """<target|rho|target> for a pure target and a (possibly sub-normalized) state."""
    target = np.asarray(target)
    if rho.shape != (target.size, target.size):
        raise ValueError(f"target dimension {target.size} does not match state shape {rho.shape}")
    value = np.vdot(target, rho @ target)
    if abs(value.imag) > 1e-10:
        raise ValueError(f"fidelity has imaginary part {value.imag:.3e}; state is not Hermitian")
    return clamp_fidelity(value.real)


def clamp_fidelity(value):
    """Clamp roundoff excursions outside [0, 1]; larger excursions signal a bug."""
    value = np.asarray(value, dtype=float)
    if np.any(value < -_FID_TOL) or np.any(value > 1 + _FID_TOL):
        raise ValueError(f"fidelity outside [0, 1] beyond roundoff: {value}")
    clipped = np.clip(value, 0.0, 1.0)
    return float(clipped) if clipped.ndim == 0 else clipped


def purity(rho: np.ndarray):
    """Tr(rho^2); batched over leading axes."""
    return np.einsum("...ij,...ji->...", rho, rho).real


def mean_excitation(target: np.ndarray):
    probs = np.abs(np.asarray(target)) ** 2
    return probs @ np.arange(probs.shape[-1])
