"""Mestre's consistent re-estimation of covariance eigenvalues.

Every sample eigenvalue is treated as its own cluster unless explicit
cluster sizes are supplied.
"""

from dataclasses import dataclass

import numpy as np

from ulacal.errors import DomainError
from ulacal.numerics import hermitian_eig, hermitize

TIE_RTOL = 1e-12
ENDPOINT_INSET = 1e-14
MAX_BISECTIONS = 200


@dataclass(frozen=True)
class EigenCorrection:
    lambda_hat: np.ndarray
    mu_hat: np.ndarray
    gamma_hat: np.ndarray
    C: float
    ties_perturbed: bool = False

    @property
    def dynamic_range_shrinks(self):
        lam, g = self.lambda_hat, self.gamma_hat
        return g.max() / g.min() < lam.max() / lam.min()


def _separate_ties(lam):
    lam = np.array(lam, dtype=float)
    gap = TIE_RTOL * lam[-1]
    perturbed = False
    for k in range(1, lam.size):
        if lam[k] - lam[k - 1] < gap:
            lam[k] = lam[k - 1] + gap
            perturbed = True
    return lam, perturbed


def mestre_residual(mu, lam, C):
    """``(1/N) sum_k lam_k / (lam_k - mu) - 1/C`` evaluated at each ``mu``."""
    mu = np.atleast_1d(mu)
    return (lam[None, :] / (lam[None, :] - mu[:, None])).mean(axis=1) - 1.0 / C


def mestre_roots(lambda_hat, C):
    """Solutions ``mu_1 < ... < mu_N`` of the Mestre equation.

    One root lies in each interval ``(lam_{k-1}, lam_k)`` with ``lam_0 = 0``;
    the left-hand side is strictly increasing there, so plain bisection is
    used on all intervals at once.
    """
    lam = np.sort(np.asarray(lambda_hat, dtype=float))
    if lam.size == 0 or lam[0] <= 0.0:
        raise DomainError("sample eigenvalues must be positive")
    if not 0.0 < C < 1.0:
        raise DomainError(f"C = N/T = {C} must lie in (0, 1)")
    lam, _ = _separate_ties(lam)
    inset = ENDPOINT_INSET * lam[-1]
    lo = np.concatenate([[0.0], lam[:-1] + inset])
    hi = lam - inset
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        pos = mestre_residual(mid, lam, C) > 0.0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    # brackets are now adjacent floats; keep the end with the smaller residual
    f_lo = np.abs(mestre_residual(lo, lam, C))
    f_hi = np.abs(mestre_residual(hi, lam, C))
    return np.where(f_lo <= f_hi, lo, hi)


def mestre_correct(lambda_hat, T, clusters=None):
    """Corrected eigenvalues ``gamma_n = (T/K_n) sum_{k in cluster n} (lam_k - mu_k)``.

    Parameters
    ----------
    lambda_hat : array_like
        Sample eigenvalues (any order; sorted internally). Near-ties are
        separated before solving and the separated values are what the
        result reports.
    T : int
        Number of snapshots; must exceed the dimension.
    clusters : sequence of int, optional
        Sizes of consecutive eigenvalue clusters in ascending order. Default
        is one cluster per eigenvalue.
    """
    lam = np.sort(np.asarray(lambda_hat, dtype=float))
    N = lam.size
    if T <= N:
        raise DomainError(f"need T > N for the correction (T={T}, N={N})")
    C = N / T
    lam, perturbed = _separate_ties(lam)
    mu = mestre_roots(lam, C)
    diff = T * (lam - mu)
    if clusters is None:
        gamma = diff
    else:
        sizes = np.asarray(clusters, dtype=int)
        if sizes.sum() != N or np.any(sizes < 1):
            raise DomainError("cluster sizes must be positive and sum to N")
        gamma = np.empty(N)
        start = 0
        for k in sizes:
            gamma[start:start + k] = diff[start:start + k].mean()
            start += k
    return EigenCorrection(lam, mu, gamma, C, perturbed)


def modify_matrix(R, T, clusters=None):
    """Sample matrix with its eigenvalues replaced by the corrected ones."""
    w, V = hermitian_eig(R)
    if w[0] <= 0.0:
        raise DomainError("sample matrix must be positive definite")
    corr = mestre_correct(w, T, clusters)
    return hermitize((V * corr.gamma_hat) @ V.conj().T)
