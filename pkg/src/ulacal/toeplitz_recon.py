"""Positive definite Toeplitz matrix with the maximum entropy spectrum of a sample matrix.

The normalized first column of ``R^{-1}`` defines a polynomial ``W(z)``.
Zeros of ``W`` inside the unit disk are reflected to ``1/conj(z)``, which
keeps ``|W|`` on the unit circle, and the resulting zero-free polynomial
``P`` fixes a unique PD Hermitian Toeplitz inverse via Gohberg-Semencul.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ulacal.errors import DegenerateSpectrumError, DomainError, InternalError
from ulacal.numerics import check_hermitian, hermitize, poly_eval, poly_from_roots, poly_roots
from ulacal.scenario import ToeplitzHermitian

BOUNDARY_EPS = 1e-10
TOEPLITZ_AVG_TOL = 1e-8


def me_vector(R):
    """``R^{-1} e_1 / (e_1^T R^{-1} e_1)``; first entry is exactly 1."""
    w = _first_inverse_column(check_hermitian(R))
    w = w / w[0].real
    w[0] = 1.0
    return w


def _first_inverse_column(R):
    e1 = np.zeros(R.shape[0], dtype=complex)
    e1[0] = 1.0
    try:
        factor = cho_factor(hermitize(R), lower=True)
    except np.linalg.LinAlgError as exc:
        raise DomainError("matrix is not positive definite") from exc
    return cho_solve(factor, e1)


def flip_zeros(W):
    """Reflect the zeros of ``W(z)`` inside the unit disk to the outside.

    Returns ``P`` of the same degree with no zeros in ``|z| < 1``,
    ``|P| = |W|`` on the unit circle and ``P[0]`` real positive. A
    zero-free input is returned unchanged.
    """
    W = np.asarray(W, dtype=complex)
    if not (W[0].real > 0 and abs(W[0].imag) <= 1e-12 * W[0].real):
        raise DomainError("leading ME coefficient must be real positive")
    nz = np.flatnonzero(W)
    if W.size == 1 or nz[-1] == 0:
        return W.copy()
    coeffs = W[: nz[-1] + 1]
    roots = poly_roots(coeffs)
    mags = np.abs(roots)
    if np.any(np.abs(mags - 1.0) <= BOUNDARY_EPS):
        raise DegenerateSpectrumError("ME polynomial has a zero on the unit circle")
    inside = mags < 1.0 - BOUNDARY_EPS
    if not inside.any():
        return W.copy()
    flipped = np.where(inside, 1.0 / roots.conj(), roots)
    P = poly_from_roots(flipped)
    # scale so |P(1)| = |W(1)|, then rotate P(0) onto the positive real axis
    z1 = np.array([1.0 + 0j])
    scale = np.abs(poly_eval(coeffs, z1))[0] / np.abs(poly_eval(P, z1))[0]
    P = P * scale
    P = P * np.exp(-1j * np.angle(P[0]))
    P[0] = P[0].real
    out = np.zeros_like(W)
    out[: P.size] = P
    return out


def gs_inverse(P):
    """Inverse Toeplitz matrix from ``p = T^{-1} e_1`` via Gohberg-Semencul.

    ``p_1 T^{-1} = L L^H - M M^H`` with ``L`` lower-triangular Toeplitz with
    first column ``p`` and ``M`` lower-triangular Toeplitz with first column
    ``(0, conj p_N, ..., conj p_2)``.
    """
    p = np.asarray(P, dtype=complex)
    if not (p[0].real > 0 and abs(p[0].imag) <= 1e-12 * p[0].real):
        raise DomainError("p_1 must be real positive")
    N = p.size
    m = np.concatenate([[0.0], p[:0:-1].conj()])
    L = _lower_toeplitz(p)
    M = _lower_toeplitz(m)
    Tinv = hermitize((L @ L.conj().T - M @ M.conj().T) / p[0].real)
    w = np.linalg.eigvalsh(Tinv)
    if w[0] <= 0.0 or N == 0:
        raise DomainError("Gohberg-Semencul output is not positive definite; P has zeros inside the unit disk")
    return Tinv


def _lower_toeplitz(col):
    N = col.size
    lag = np.arange(N)[:, None] - np.arange(N)[None, :]
    return np.where(lag >= 0, col[np.clip(lag, 0, None)], 0.0)


def toeplitz_from_inverse(Tinv):
    """Invert a GS output and average its diagonals into a ``ToeplitzHermitian``."""
    T = hermitize(np.linalg.inv(Tinv))
    N = T.shape[0]
    col = np.array([np.diagonal(T, -k).mean() for k in range(N)])
    dev = max(np.abs(np.diagonal(T, -k) - col[k]).max() for k in range(N))
    if dev > TOEPLITZ_AVG_TOL * np.abs(T).max():
        raise InternalError(f"inverse of GS matrix deviates from Toeplitz by {dev:.2e}")
    return ToeplitzHermitian(col)


def reconstruct(R):
    """PD Hermitian Toeplitz matrix sharing the ME spectrum of ``R``.

    The overall scale is fixed so that ``T^{-1} e_1 = (e_1^T R^{-1} e_1) P``;
    a Toeplitz PD input is therefore returned unchanged.

    Returns
    -------
    (ToeplitzHermitian, ndarray)
        The reconstruction and its inverse.
    """
    R = check_hermitian(R)
    col = _first_inverse_column(R)
    r11 = col[0].real
    W = col / r11
    W[0] = 1.0
    P = flip_zeros(W) * r11
    Tinv = gs_inverse(P)
    return toeplitz_from_inverse(Tinv), Tinv


def me_spectrum(coeffs, n_points=1024):
    """``|W(e^{i omega})|`` on an ``n_points`` uniform grid."""
    z = np.exp(2j * np.pi * np.arange(n_points) / n_points)
    return np.abs(poly_eval(coeffs, z))


def redundancy_average(R):
    """Diagonal-averaged Toeplitz matrix; not guaranteed PD (negative control only)."""
    R = np.asarray(R)
    N = R.shape[0]
    return ToeplitzHermitian(np.array([np.diagonal(R, -k).mean() for k in range(N)]))
