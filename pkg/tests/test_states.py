import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from pulseforge.states import (
    BlochAngles,
    bloch_grid,
    bloch_to_state,
    featurize,
    features_to_bloch,
    haar_dataset,
    haar_sample,
    make_sampler,
    su_basis,
)

PAULI = [np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.array([[1, 0], [0, -1]])]


def test_haar_sample_normalized_and_deterministic():
    a = haar_sample(3, make_sampler(42))
    b = haar_sample(3, make_sampler(42))
    assert abs(np.linalg.norm(a) - 1) < 1e-12
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        haar_sample(1, make_sampler(0))


def test_haar_dataset_paper_size_distinct():
    data = haar_dataset(4096, 2, 0)
    assert data.shape == (4096, 2)
    np.testing.assert_allclose(np.linalg.norm(data, axis=1), 1, atol=1e-12)
    assert len({tuple(np.round(row, 12)) for row in data}) == 4096


def test_haar_dataset_determinism_and_seed_separation():
    np.testing.assert_array_equal(haar_dataset(10, 3, 5), haar_dataset(10, 3, 5))
    assert not np.allclose(haar_dataset(10, 3, 5), haar_dataset(10, 3, 6))
    assert haar_dataset(1, 2, 0).shape == (1, 2)


def test_haar_z_expectation_is_uniform():
    z = featurize(haar_dataset(10_000, 2, 123))[:, 2]
    res = stats.kstest(z, stats.uniform(loc=-1, scale=2).cdf)
    assert res.pvalue > 0.01


def test_haar_rotation_invariance():
    rng = np.random.default_rng(9)
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    u, _ = np.linalg.qr(a)
    base = haar_dataset(10_000, 3, 1)
    rotated = haar_dataset(10_000, 3, 2) @ u.T
    fa, fb = featurize(base), featurize(rotated)
    for k in range(8):
        assert stats.ks_2samp(fa[:, k], fb[:, k]).pvalue > 0.01


def test_bloch_poles_and_equator():
    np.testing.assert_allclose(bloch_to_state(BlochAngles(0, 1.3)), [1, 0])
    south = bloch_to_state(BlochAngles(np.pi, 0.7))
    assert abs(abs(south[1]) - 1) < 1e-15 and abs(south[0]) < 1e-15
    np.testing.assert_allclose(bloch_to_state(BlochAngles(np.pi / 2, 0)), np.array([1, 1]) / np.sqrt(2))
    with pytest.raises(ValueError):
        bloch_to_state(BlochAngles(4.0, 0.0))


def test_bloch_grid_counts_and_ranges():
    assert len(bloch_grid(250, 250)) == 62_500
    small = bloch_grid(2, 2)
    assert len(small) == 4
    thetas = sorted({a.theta for a in small})
    assert thetas[0] < np.pi / 2 < thetas[1]
    for a in bloch_grid(7, 9):
        assert 0 <= a.theta <= np.pi and 0 <= a.phi < 2 * np.pi
    with pytest.raises(ValueError):
        bloch_grid(1, 5)


def test_bloch_grid_uniform_in_cos_theta():
    cos_t = np.unique(np.round([np.cos(a.theta) for a in bloch_grid(10, 3)], 12))
    np.testing.assert_allclose(np.diff(cos_t), 0.2, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, np.pi - 0.01), st.floats(0, 2 * np.pi, exclude_max=True))
def test_bloch_round_trip(theta, phi):
    back = features_to_bloch(featurize(bloch_to_state(BlochAngles(theta, phi))))
    assert abs(back.theta - theta) < 1e-9
    dphi = (back.phi - phi + np.pi) % (2 * np.pi) - np.pi
    assert abs(dphi) < 1e-9


def test_su2_basis_is_pauli():
    basis = su_basis(2)
    for m, p in zip(basis, PAULI):
        np.testing.assert_array_equal(m, p)


def test_su3_second_diagonal_generator():
    basis = su_basis(3)
    assert basis.shape == (8, 3, 3)
    np.testing.assert_allclose(basis[-1], np.sqrt(1 / 3) * np.diag([1, 1, -2]), atol=1e-15)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_su_basis_algebra(n):
    basis = su_basis(n)
    assert len(basis) == n * n - 1
    for m in basis:
        assert np.max(np.abs(m - m.conj().T)) == 0
        assert abs(np.trace(m)) < 1e-12
    gram = np.einsum("aij,bji->ab", basis, basis)
    np.testing.assert_allclose(gram, 2 * np.eye(n * n - 1), atol=1e-12)


def test_featurize_examples():
    np.testing.assert_allclose(featurize(np.array([1, 0])), [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(featurize(np.array([1, 1]) / np.sqrt(2)), [1, 0, 0], atol=1e-15)
    x, y, _ = featurize(bloch_to_state(BlochAngles(0.65 * np.pi, np.pi / 4)))
    assert x == pytest.approx(y, abs=1e-15)
    with pytest.raises(ValueError):
        featurize(np.array([1, 0, 0]), su_basis(2))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, np.pi - 0.01), st.sampled_from([np.pi / 4, 5 * np.pi / 4]))
def test_x_equals_y_on_the_crossing_meridians(theta, phi):
    x, y, _ = featurize(bloch_to_state(BlochAngles(theta, phi)))
    assert abs(x - y) < 1e-15


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1), st.floats(-10, 10))
def test_feature_identities(n, seed, alpha):
    psi = haar_sample(n, make_sampler(seed))
    f = featurize(psi)
    assert np.sum(f**2) == pytest.approx(2 * (1 - 1 / n), abs=1e-10)
    np.testing.assert_allclose(featurize(np.exp(1j * alpha) * psi), f, atol=1e-14)
