"""Target-state sampling, Bloch parametrization and SU(n) features."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Seed offset separating derived streams (validation, shuffling, ...) from a base seed.
SEED_STRIDE = 1_000_003


def make_sampler(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def haar_sample(n: int, sampler: np.random.Generator) -> np.ndarray:
    """One Haar-random pure state of dimension n (normalized complex Gaussian)."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    z = sampler.standard_normal((n, 2))
    psi = z[:, 0] + 1j * z[:, 1]
    return psi / np.linalg.norm(psi)


def haar_dataset(count: int, n: int, seed: int) -> np.ndarray:
    """``count`` independent Haar states as rows of a (count, n) array."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    sampler = make_sampler(seed)
    return np.stack([haar_sample(n, sampler) for _ in range(count)])


@dataclass(frozen=True)
class BlochAngles:
    theta: float
    phi: float


def bloch_to_state(angles: BlochAngles) -> np.ndarray:
    theta, phi = angles.theta, angles.phi
    if not 0.0 <= theta <= np.pi:
        raise ValueError(f"theta must lie in [0, pi], got {theta}")
    return np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])


def bloch_states(theta, phi) -> np.ndarray:
    """Vectorized ``bloch_to_state``: arrays of angles -> (..., 2) states."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    return np.stack([np.cos(theta / 2) + 0j, np.exp(1j * phi) * np.sin(theta / 2)], axis=-1)


def features_to_bloch(features) -> BlochAngles:
    x, y, z = features
    return BlochAngles(float(np.arccos(np.clip(z, -1, 1))), float(np.arctan2(y, x) % (2 * np.pi)))


def bloch_grid(resolution_theta: int = 250, resolution_phi: int = 250) -> list[BlochAngles]:
    """Area-uniform grid: cell-centred in cos(theta), evenly spaced in phi."""
    thetas, phis = bloch_grid_arrays(resolution_theta, resolution_phi)
    return [BlochAngles(float(t), float(p)) for t, p in zip(thetas.ravel(), phis.ravel())]


def bloch_grid_arrays(resolution_theta: int = 250, resolution_phi: int = 250):
    """Row-major (theta-index, phi-index) meshes of the grid returned by ``bloch_grid``."""
    if resolution_theta < 2 or resolution_phi < 2:
        raise ValueError("grid resolutions must be >= 2")
    cos_theta = 1.0 - (2.0 * np.arange(resolution_theta) + 1.0) / resolution_theta
    thetas = np.arccos(cos_theta)
    phis = 2 * np.pi * np.arange(resolution_phi) / resolution_phi
    return np.meshgrid(thetas, phis, indexing="ij")


@lru_cache(maxsize=None)
def _su_basis(n: int) -> np.ndarray:
    pairs = [(j, k) for j in range(n) for k in range(j + 1, n)]
    mats = []
    for j, k in pairs:
        m = np.zeros((n, n), dtype=complex)
        m[j, k] = m[k, j] = 1.0
        mats.append(m)
    for j, k in pairs:
        m = np.zeros((n, n), dtype=complex)
        m[j, k] = -1j
        m[k, j] = 1j
        mats.append(m)
    for rank in range(1, n):
        diag = np.zeros(n)
        diag[:rank] = 1.0
        diag[rank] = -rank
        mats.append(np.sqrt(2.0 / (rank * (rank + 1))) * np.diag(diag).astype(complex))
    basis = np.stack(mats)
    basis.setflags(write=False)
    return basis


def su_basis(n: int) -> np.ndarray:
    """The n^2 - 1 generalized Gell-Mann matrices as a (d, n, n) array.

    Order: symmetric pairs (j < k, lexicographic), antisymmetric pairs in the
    same order, then the diagonal generators by increasing rank. For n = 2 this
    is (X, Y, Z).
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    return _su_basis(n)


def featurize(target: np.ndarray, basis: np.ndarray | None = None) -> np.ndarray:
    """Expectation values of every basis matrix; batched over leading axes of ``target``."""
    target = np.asarray(target)
    n = target.shape[-1]
    if basis is None:
        basis = su_basis(n)
    if basis.shape[-1] != n:
        raise ValueError(f"state dimension {n} does not match basis dimension {basis.shape[-1]}")
    values = np.einsum("...i,aij,...j->...a", target.conj(), basis, target)
    if np.max(np.abs(values.imag), initial=0.0) > 1e-10:
        raise ValueError("non-real expectation values; basis is not Hermitian")
    return values.real
