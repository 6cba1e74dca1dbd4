import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ulacal.errors import DegenerateSpectrumError, DomainError
from ulacal.numerics import poly_eval, poly_roots
from ulacal.scenario import ToeplitzHermitian, draw_xi, sample_covariance
from ulacal.toeplitz_recon import (
    flip_zeros,
    gs_inverse,
    me_spectrum,
    me_vector,
    reconstruct,
    redundancy_average,
    toeplitz_from_inverse,
)

from conftest import random_pd


def random_toeplitz(seed, n):
    # sum of positive line spectra plus a white floor is PD Toeplitz
    rng = np.random.default_rng(seed)
    k = np.arange(n)
    amps = rng.uniform(0.1, 1.0, 4)
    freqs = rng.uniform(-np.pi, np.pi, 4)
    col = (amps[:, None] * np.exp(1j * freqs[:, None] * k[None, :])).sum(axis=0)
    col[0] = col[0].real + rng.uniform(0.05, 0.5)
    return ToeplitzHermitian(col)


def test_flip_zeros_hand_examples():
    # (1 - 2z)(1 - z/2): zero at 1/2 reflected to 2
    assert np.allclose(flip_zeros([1, -2.5, 1]), [2, -2, 0.5])
    assert np.allclose(flip_zeros([1, -2]), [2, -1])


def test_flip_zeros_leaves_zero_free_polynomial():
    W = np.array([1.0, -0.3 + 0.2j, 0.1])
    assert np.array_equal(flip_zeros(W), W)


def test_flip_zeros_rejects_unit_circle_zero():
    with pytest.raises(DegenerateSpectrumError):
        flip_zeros([1.0, -1.0])


def test_flip_zeros_requires_real_leading_coefficient():
    with pytest.raises(DomainError):
        flip_zeros([1j, 0.5])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12))
def test_flip_zeros_preserves_magnitude_and_clears_disk(seed, n):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    W[0] = abs(W[0]) + 0.1
    P = flip_zeros(W)
    z = np.exp(2j * np.pi * np.arange(256) / 256)
    assert np.allclose(np.abs(poly_eval(P, z)), np.abs(poly_eval(W, z)), rtol=1e-7)
    assert np.all(np.abs(poly_roots(P)) > 1.0)
    assert P[0].imag == 0.0 and P[0].real > 0


def test_gs_inverse_hand_example():
    assert np.allclose(gs_inverse([2, -1]), [[2, -1], [-1, 2]])


def test_gs_inverse_rejects_disk_zeros():
    with pytest.raises(DomainError):
        gs_inverse([1.0, -2.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 24))
def test_gs_round_trip(seed, n):
    T = random_toeplitz(seed, n).matrix()
    Tinv = np.linalg.inv(T)
    G = gs_inverse(Tinv[:, 0])
    assert np.abs(G - Tinv).max() <= 1e-8 * np.abs(Tinv).max()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 20))
def test_reconstruct_returns_toeplitz_input(seed, n):
    T = random_toeplitz(seed, n)
    T_hat, _ = reconstruct(T.matrix())
    assert np.abs(T_hat.first_col - T.first_col).max() <= 1e-8 * abs(T.first_col[0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 17))
def test_reconstruct_sample_matrix_keeps_me_magnitude(seed, n):
    rng = np.random.default_rng(seed)
    R = sample_covariance(draw_xi(3 * n, n, rng) @ random_pd(rng, n))
    T_hat, Tinv = reconstruct(R)
    M = T_hat.matrix()
    assert np.linalg.eigvalsh(M)[0] > 0
    ratio = me_spectrum(me_vector(M), 512) / me_spectrum(me_vector(R), 512)
    assert np.allclose(ratio, ratio[0], rtol=1e-7)
    assert np.allclose(np.linalg.inv(M), Tinv, atol=1e-8 * np.abs(Tinv).max())


def test_reconstruct_rejects_non_pd():
    with pytest.raises(DomainError):
        reconstruct(np.diag([1.0, -1.0]))


def test_me_vector_first_entry_is_one(rng):
    w = me_vector(random_pd(rng, 5))
    assert w[0] == 1.0


def test_toeplitz_from_inverse_averages():
    T = random_toeplitz(3, 6)
    out = toeplitz_from_inverse(np.linalg.inv(T.matrix()))
    assert np.allclose(out.first_col, T.first_col)


def test_redundancy_average_can_be_indefinite():
    # negative control: plain diagonal averaging does not guarantee PD
    rng = np.random.default_rng(0)
    found = False
    for _ in range(500):
        v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        R = np.outer(v, v.conj()) + 1e-3 * np.eye(4)
        if np.linalg.eigvalsh(redundancy_average(R).matrix())[0] < 0:
            found = True
            break
    assert found
