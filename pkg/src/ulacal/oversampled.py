"""Phase-only weighting that minimizes the power an oversampled array
collects from its invisible sector.

For ``d/lambda < 1/2`` spatial frequencies beyond ``2 pi d/lambda`` cannot
be reached by plane waves. With ``E = exp(i psi)`` applied to the data, the
invisible power is ``E^H B E`` with ``B = R_inv * conj(R_hat)``, and the
optimizer maximizes ``q = N / (E^H B E)`` on the unit-modulus manifold.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ulacal.errors import DomainError
from ulacal.numerics import bessel_j0, check_hermitian
from ulacal.scenario import as_matrix, build_sinc_matrix, phase_matrix, sample_covariance, wrap_phase

SINGULAR_EPS = 1e-12


class ElementPattern(str, Enum):
    COSINE = "cosine"
    IDEAL = "ideal"


@dataclass(frozen=True)
class SectorMatrices:
    R_inv: np.ndarray
    R_vis: np.ndarray
    d_over_lambda: float


@dataclass(frozen=True)
class OptimizerResult:
    psi: np.ndarray
    trace: np.ndarray
    converged: bool
    invisible_power: float
    iterations: int


@dataclass(frozen=True)
class OptimizerOptions:
    rtol: float = 1e-10
    max_iter: int = 10_000
    n_coarse: int = 24
    n_fine: int = 33


def sector_matrices(d_over_lambda, N, element_pattern="cosine"):
    """Invisible- and visible-sector matrices.

    ``R_inv = I - S`` with ``S[n, k] = sin(2 pi d/lambda (n-k)) / (pi (n-k))``
    for both patterns. The cosine pattern pairs it with ``R_vis = S``; the
    ideal pattern uses ``R_vis[n, k] = J0(2 pi d/lambda (n-k))``, for which
    the two no longer sum to ``I``.
    """
    if not 0.0 < d_over_lambda <= 0.5:
        raise DomainError(f"d/lambda={d_over_lambda} outside (0, 0.5]")
    pattern = ElementPattern(element_pattern)
    S = build_sinc_matrix(d_over_lambda, N)
    R_inv = np.eye(N) - S
    if pattern is ElementPattern.COSINE:
        R_vis = S
    else:
        m = np.arange(N)[:, None] - np.arange(N)[None, :]
        R_vis = bessel_j0(2.0 * np.pi * d_over_lambda * m)
    return SectorMatrices(R_inv, R_vis, d_over_lambda)


def b_matrix(Y, R_inv):
    """``(1/T) sum_t diag(y_t)^H R_inv diag(y_t)``, i.e. ``R_inv * conj(R_hat)``."""
    Y = np.atleast_2d(Y)
    R_inv = np.asarray(R_inv)
    if R_inv.shape != (Y.shape[1], Y.shape[1]):
        raise DomainError("R_inv does not match the snapshot dimension")
    return R_inv * sample_covariance(Y).conj()


def asymptotic_b(T_N, phases, R_inv):
    """Large-sample limit of ``b_matrix``: ``R_inv * conj(D T_N D^H)``."""
    M = as_matrix(T_N)
    if np.linalg.eigvalsh(M)[0] <= 0.0:
        raise DomainError("covariance must be positive definite")
    d = phase_matrix(phases)
    return np.asarray(R_inv) * (d[:, None] * M * d.conj()[None, :]).conj()


def _form(A, E):
    return float(np.real(np.vdot(E, A @ E)))


def objective_q(psi, B, F=None):
    """``(E^H F E) / (E^H B E)`` with ``E = exp(i psi)``; ``F`` defaults to ``I``."""
    E = np.exp(1j * np.asarray(psi, dtype=float))
    den = _form(B, E)
    if den <= 0.0:
        raise DomainError("E^H B E is not positive; regularize B")
    num = E.size if F is None else _form(F, E)
    return num / den


def gradient_q(psi, B, F=None):
    """Gradient of ``objective_q``; component 0 is fixed to zero.

    Uses ``d(E^H A E)/d psi_k = 2 Im(conj(E_k) (A E)_k)``.
    """
    E = np.exp(1j * np.asarray(psi, dtype=float))
    BE = B @ E
    den = float(np.real(np.vdot(E, BE)))
    if den <= 0.0:
        raise DomainError("E^H B E is not positive; regularize B")
    d_den = 2.0 * np.imag(E.conj() * BE)
    if F is None:
        g = -E.size * d_den / den**2
    else:
        FE = F @ E
        num = float(np.real(np.vdot(E, FE)))
        g = (2.0 * np.imag(E.conj() * FE) * den - num * d_den) / den**2
    g[0] = 0.0
    return g


def regularize(B):
    """Add ``eps I`` with ``eps = 1e-12 tr(B)/N`` when ``B`` is singular."""
    B = check_hermitian(np.asarray(B))
    N = B.shape[0]
    if np.linalg.eigvalsh(B)[0] > 0.0:
        return B
    scale = np.real(np.trace(B)) / N
    return B + SINGULAR_EPS * (scale if scale > 0 else 1.0) * np.eye(N)


def _q_batch(P, B, N):
    # q for each row of a (K, N) phase array
    E = np.exp(1j * P)
    den = np.real(np.sum(E.conj() * (E @ B.T), axis=1))
    return np.where(den > 0, N / np.where(den > 0, den, 1.0), -np.inf)


def optimize_phases(B, psi0, opts=None):
    """Steepest ascent of ``q`` from ``psi0`` with element 0 held fixed.

    The step length is chosen each iteration by a vectorized search: a
    geometric grid below the current bracket top, then a uniform grid
    between the neighbours of the best coarse point. The bracket top is
    doubled when the best step sits on it and reset around the accepted
    step otherwise.
    """
    opts = opts or OptimizerOptions()
    B = regularize(B)
    N = B.shape[0]
    psi = np.array(psi0, dtype=float)
    if psi.shape != (N,):
        raise DomainError("psi0 does not match B")
    q = objective_q(psi, B)
    trace = [q]
    g = gradient_q(psi, B)
    amax = 1.0
    coarse = np.geomspace(1e-9, 1.0, opts.n_coarse)
    converged = False
    it = 1
    while it <= opts.max_iter:
        gn = np.max(np.abs(g))
        if gn == 0.0:
            converged = True
            break
        # scale so the largest phase step of the top candidate is amax radians
        d = g / gn
        alphas = amax * coarse
        qs = _q_batch(psi[None, :] + alphas[:, None] * d[None, :], B, N)
        k = int(np.argmax(qs))
        if k == alphas.size - 1 and amax < np.pi:
            amax = min(2.0 * amax, np.pi)
            continue
        lo = alphas[k - 1] if k > 0 else 0.0
        hi = alphas[k + 1] if k + 1 < alphas.size else alphas[k]
        fine = np.linspace(lo, hi, opts.n_fine)
        qf = _q_batch(psi[None, :] + fine[:, None] * d[None, :], B, N)
        j = int(np.argmax(qf))
        a, qn = (fine[j], qf[j]) if qf[j] >= qs[k] else (alphas[k], qs[k])
        if not qn > q:
            converged = True
            break
        psi = psi + a * d
        psi[0] = psi0[0]
        g = gradient_q(psi, B)
        trace.append(qn)
        it += 1
        done = abs(qn - q) / q < opts.rtol
        q = qn
        amax = min(max(4.0 * a, 1e-12), np.pi)
        if done:
            converged = True
            break
    return OptimizerResult(psi, np.array(trace), converged, N / q, it)


def invisible_power(psi, B):
    """``E^H B E`` for ``E = exp(i psi)``."""
    return _form(B, np.exp(1j * np.asarray(psi, dtype=float)))


def gain_db(before, after):
    return 10.0 * np.log10(before / after)


def decomposition_residual(psi_with_errors, psi_no_errors, injected_errors):
    """RMSE in degrees of ``wrap(psi_err - psi_0 + phi)``.

    A weighting ``psi`` multiplies data carrying errors ``phi``, so the
    optimum for errored data is expected at ``psi_0 - phi``.
    """
    a, b, c = (np.asarray(v, dtype=float) for v in (psi_with_errors, psi_no_errors, injected_errors))
    if not a.shape == b.shape == c.shape:
        raise DomainError("phase vectors must have equal lengths")
    r = wrap_phase(a - b + c)
    return float(np.rad2deg(np.sqrt(np.mean(r**2))))
