"""Dense numerical kernels: Hermitian eigenproblems, polynomial roots, J0."""

from typing import NamedTuple

import numpy as np
from scipy import special

from ulacal.errors import DomainError, StructuralError

HERMITIAN_RTOL = 1e-12
PSD_RTOL = 1e-10


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def check_hermitian(M, rtol=HERMITIAN_RTOL):
    """Return ``M`` as a complex square array, raising if it is not Hermitian."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise StructuralError(f"expected a square matrix, got shape {M.shape}")
    scale = max(np.abs(M).max(), np.finfo(float).tiny)
    if np.abs(M - M.conj().T).max() > rtol * scale:
        raise StructuralError("matrix is not Hermitian within tolerance")
    return M


def hermitize(M):
    """Symmetrize away rounding noise: ``(M + M^H) / 2``."""
    M = np.asarray(M)
    return 0.5 * (M + M.conj().T)


def hermitian_eig(M):
    """Eigendecomposition of a Hermitian matrix.

    Eigenvalues are returned in ascending order with unit-norm eigenvector
    columns. LAPACK ``heevd`` does the work; only the input is validated here.
    """
    M = check_hermitian(M)
    w, V = np.linalg.eigh(hermitize(M))
    return EigenDecomposition(w, V)


def hermitian_sqrt(M):
    """Hermitian PSD square root ``S`` with ``S @ S == M``.

    Slightly negative eigenvalues (above ``-1e-10 * lambda_max``) are clamped
    to zero; sinc-built covariances are near-singular by construction.
    """
    w, V = hermitian_eig(M)
    lam_max = max(w[-1], 0.0)
    if w[0] < -PSD_RTOL * lam_max or (lam_max == 0.0 and w[0] < 0.0):
        raise DomainError(f"matrix is indefinite (min eigenvalue {w[0]:.3e})")
    root = np.sqrt(np.clip(w, 0.0, None))
    return hermitize((V * root) @ V.conj().T)


def trim_polynomial(coeffs):
    """Drop trailing (highest-degree) zero coefficients."""
    c = np.atleast_1d(np.asarray(coeffs, dtype=complex))
    nz = np.flatnonzero(c)
    if nz.size == 0:
        raise DomainError("zero polynomial has no well-defined roots")
    return c[: nz[-1] + 1]


def poly_eval(coeffs, z):
    """Evaluate a polynomial with ascending coefficients at ``z`` (Horner)."""
    c = np.asarray(coeffs, dtype=complex)
    z = np.asarray(z, dtype=complex)
    out = np.zeros_like(z) + c[-1]
    for a in c[-2::-1]:
        out = out * z + a
    return out


def poly_roots(coeffs):
    """Roots of ``sum_k coeffs[k] z**k`` with multiplicity.

    Companion-matrix eigenvalues (LAPACK ``geev`` balances the matrix first)
    followed by one Newton step per root.
    """
    c = trim_polynomial(coeffs)
    degree = c.size - 1
    if degree < 1:
        raise DomainError("constant polynomial has no roots")
    # factor out exact zeros at the origin; they do not need polishing
    n_zero = np.flatnonzero(c)[0]
    c_red = c[n_zero:]
    deg_red = c_red.size - 1
    roots = np.zeros(n_zero, dtype=complex)
    if deg_red == 0:
        return roots
    monic = c_red / c_red[-1]
    comp = np.zeros((deg_red, deg_red), dtype=complex)
    comp[1:, :-1] = np.eye(deg_red - 1)
    comp[:, -1] = -monic[:-1]
    r = np.linalg.eigvals(comp)
    dc = c_red[1:] * np.arange(1, deg_red + 1)
    p = poly_eval(c_red, r)
    dp = poly_eval(dc, r)
    ok = np.abs(dp) > 0
    step = np.zeros_like(r)
    step[ok] = p[ok] / dp[ok]
    polished = r - step
    # keep the Newton step only where it lowers the residual
    better = np.abs(poly_eval(c_red, polished)) <= np.abs(p)
    r = np.where(better, polished, r)
    return np.concatenate([roots, r])


def poly_from_roots(roots, leading=1.0):
    """Ascending coefficients of ``leading * prod (z - r)``."""
    c = np.array([leading], dtype=complex)
    for r in roots:
        c = np.concatenate([[0.0], c]) - r * np.concatenate([c, [0.0]])
    return c


def bessel_j0(x):
    """Bessel function of the first kind, order zero."""
    return special.j0(x)
