"""Phase-error estimators for a ULA with a known (or partly known) Toeplitz
covariance, their Cramer-Rao bound and the error metric used to score them.

Phase conventions: the data model is ``y = D(phi) x`` with
``D(phi) = diag(exp(i phi))``, so ``R = D T D^H`` and
``R[p, q] = exp(i (phi_p - phi_q)) T[p, q]``. All estimates are referenced
to element 0.
"""

from dataclasses import dataclass, field

import numpy as np

from ulacal.errors import DegenerateInputError, DomainError
from ulacal.numerics import check_hermitian, hermitian_eig
from ulacal.oversampled import optimize_phases
from ulacal.scenario import as_matrix, normalize_phases, phase_matrix, sample_covariance, wrap_phase

CRB_TOL = 1e-12
RATIO_EPS = 1e-8
ALIGN_GRID = 721
ALIGN_MODES = ("none", "constant", "affine")


@dataclass(frozen=True)
class PhaseEstimate:
    phases: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CRBProfile:
    """Per-element bound in rad^2; element 0 is ``nan`` and ``inf`` marks no information."""

    bound: np.ndarray
    T: int

    @property
    def bound_deg(self):
        return np.rad2deg(np.sqrt(self.bound))


def _dense_pd(T_N):
    M = check_hermitian(as_matrix(T_N))
    if np.linalg.eigvalsh(M)[0] <= 0.0:
        raise DomainError("covariance must be positive definite")
    return M


def crb(T_N, T):
    """Per-element bound ``1 / (2 T [(T^{-1})_nn T_nn - 1])``."""
    M = _dense_pd(T_N)
    if T < 1:
        raise DomainError("T must be >= 1")
    prod = np.real(np.diag(np.linalg.inv(M))) * np.real(np.diag(M)) - 1.0
    with np.errstate(divide="ignore"):
        bound = np.where(prod > CRB_TOL, 1.0 / (2.0 * T * np.maximum(prod, CRB_TOL)), np.inf)
    bound[0] = np.nan
    return CRBProfile(bound, T)


def _phase_derivative(R, n):
    # d/dphi_n of D T D^H
    dR = np.zeros_like(R)
    dR[n, :] += 1j * R[n, :]
    dR[:, n] -= 1j * R[:, n]
    return dR


def fim_entry(T_N, phases, n, m, T):
    """Fisher information ``T tr[R_n R^{-1} R_m R^{-1}]`` for phases ``n`` and ``m``.

    ``R_n`` is the derivative of ``R = D T_N D^H`` with respect to ``phi_n``.
    """
    N = as_matrix(T_N).shape[0]
    if not (1 <= n < N and 1 <= m < N):
        raise DomainError("FIM indices must lie in 1..N-1 (element 0 is the reference)")
    return fisher_matrix(T_N, phases, T)[n - 1, m - 1]


def fisher_matrix(T_N, phases, T):
    """Full ``(N-1) x (N-1)`` Fisher matrix over phases ``1..N-1``."""
    M = _dense_pd(T_N)
    d = phase_matrix(phases)
    R = d[:, None] * M * d.conj()[None, :]
    Ri = np.linalg.inv(R)
    N = R.shape[0]
    G = [Ri @ _phase_derivative(R, n) for n in range(1, N)]
    J = np.empty((N - 1, N - 1))
    for i in range(N - 1):
        for j in range(i, N - 1):
            J[i, j] = J[j, i] = T * np.real(np.sum(G[i] * G[j].T))
    return J


def crb_full(T_N, T, phases=None):
    """Diagonal of the inverse of the full Fisher matrix (element 0 is ``nan``)."""
    N = as_matrix(T_N).shape[0]
    phases = np.zeros(N) if phases is None else phases
    J = fisher_matrix(T_N, phases, T)
    out = np.full(N, np.nan)
    out[1:] = np.real(np.diag(np.linalg.inv(J)))
    return CRBProfile(out, T)


def ml_form(Y, T_inv):
    """``H[j, k] = (1/T) sum_t conj(y_tj) T_inv[j, k] y_tk``."""
    Y = np.atleast_2d(Y)
    Ti = np.asarray(T_inv)
    if Ti.shape != (Y.shape[1], Y.shape[1]):
        raise DomainError("T_inv does not match the snapshot dimension")
    return Ti * sample_covariance(Y).conj()


def _corrected_form(H, phases):
    e = np.exp(-1j * phases)
    return float(np.real(np.vdot(e, H @ e)))


def mle_bound(H):
    """Smallest eigenvalue of ``H``; ``N * mle_bound(H)`` lower-bounds the unit-modulus form."""
    return float(hermitian_eig(H).eigenvalues[0])


def ml_estimate(Y, T_N, refine=False):
    """Maximum-likelihood phase estimate for a known covariance.

    The unit-modulus constraint is relaxed to a unit-norm one, so the
    estimate is read off the eigenvector of ``H`` for its smallest
    eigenvalue. Of the two sign readings, the one whose correction gives the
    smaller form value is kept.

    Parameters
    ----------
    Y : ndarray, shape (T, N)
    T_N : ToeplitzHermitian or ndarray
    refine : bool
        Polish with the constant-modulus ascent from the oversampled module.
    """
    M = _dense_pd(T_N)
    H = ml_form(Y, np.linalg.inv(M))
    w, V = hermitian_eig(H)
    u = V[:, 0]
    candidates = [normalize_phases(-np.angle(u)), normalize_phases(np.angle(u))]
    forms = [_corrected_form(H, c) for c in candidates]
    est = candidates[int(np.argmin(forms))]
    diag = {"lambda_min": float(w[0]), "form": min(forms), "bound": float(H.shape[0] * w[0])}
    if refine:
        res = optimize_phases(H, -est)
        est = normalize_phases(-res.psi)
        diag.update(form=_corrected_form(H, est), iterations=res.iterations, converged=res.converged)
    return PhaseEstimate(est, "ml", diag)


def _estimated_arg(R, k):
    return float(np.angle(np.mean(np.diag(R, k))))


def superdiag_estimate(R_hat, arg_t="estimate", n_diags=1):
    """Covariance-free estimate from the super-diagonals of ``R_hat``.

    Parameters
    ----------
    R_hat : ndarray
        Sample covariance.
    arg_t : float, sequence of float or ``"estimate"``
        Arguments of the true super-diagonal entries ``T[0, k]`` for
        ``k = 1..n_diags``. ``"estimate"`` uses the argument of the mean of
        each diagonal of ``R_hat`` instead, which shifts the estimate by a
        linear ramp only.
    n_diags : int
        Number of super-diagonals. With more than one, the stacked
        difference equations are solved in least squares around the
        single-diagonal solution.
    """
    R = check_hermitian(np.asarray(R_hat))
    N = R.shape[0]
    if not 1 <= n_diags < N:
        raise DomainError(f"n_diags must lie in 1..{N - 1}")
    if isinstance(arg_t, str):
        if arg_t != "estimate":
            raise DomainError(f"unknown arg_t flag {arg_t!r}")
        args = [_estimated_arg(R, k) for k in range(1, n_diags + 1)]
        method = "superdiag_est"
    else:
        args = np.atleast_1d(np.asarray(arg_t, dtype=float))
        if args.size < n_diags:
            raise DomainError("need one true argument per super-diagonal")
        method = "superdiag_true"
    diags = [np.diag(R, k) for k in range(1, n_diags + 1)]
    if any(np.any(d == 0) for d in diags):
        raise DegenerateInputError("zero super-diagonal entry in the sample matrix")
    # step_p = phi_p - phi_{p+1}
    step = wrap_phase(np.angle(diags[0]) - args[0])
    est = np.concatenate([[0.0], -np.cumsum(step)])
    if n_diags > 1:
        rows, rhs = [], []
        for k, (d, a) in enumerate(zip(diags, args), start=1):
            for p in range(N - k):
                row = np.zeros(N)
                row[p], row[p + k] = 1.0, -1.0
                rows.append(row[1:])
                # residual relative to the single-diagonal solution keeps wraps local
                rhs.append(wrap_phase(np.angle(d[p]) - a - (est[p] - est[p + k])))
        delta = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0]
        est = est + np.concatenate([[0.0], delta])
    return PhaseEstimate(normalize_phases(est), method, {"n_diags": n_diags})


def adhoc_estimate(R_hat, T_N):
    """Phases of the principal eigenvector of the element-wise ratio ``R_hat / T_N``.

    Entries where ``|T_N|`` is below ``1e-8`` of its peak are zeroed.
    """
    R = check_hermitian(np.asarray(R_hat))
    M = as_matrix(T_N)
    if M.shape != R.shape:
        raise DomainError("R_hat and T_N shapes differ")
    mask = np.abs(M) > RATIO_EPS * np.abs(M).max()
    if not np.any(mask & ~np.eye(M.shape[0], dtype=bool)):
        raise DegenerateInputError("all off-diagonal covariance entries are masked")
    delta = np.where(mask, R / np.where(mask, M, 1.0), 0.0)
    w, V = hermitian_eig(delta)
    u = V[:, -1]
    return PhaseEstimate(normalize_phases(np.angle(u)), "adhoc", {"lambda_max": float(w[-1]), "masked": int((~mask).sum())})


def _fit_affine(r, beta_max):
    N = r.size
    idx = np.arange(N)
    betas = np.linspace(-beta_max, beta_max, ALIGN_GRID)
    z = np.exp(1j * (r[None, :] - betas[:, None] * idx[None, :]))
    cs = np.angle(z.mean(axis=1))
    res = wrap_phase(r[None, :] - betas[:, None] * idx[None, :] - cs[:, None])
    best = int(np.argmin(np.mean(res**2, axis=1)))
    c, b = cs[best], betas[best]
    A = np.column_stack([np.ones(N), idx])
    for _ in range(50):
        rr = wrap_phase(r - c - b * idx)
        dc, db = np.linalg.lstsq(A, rr, rcond=None)[0]
        c, b = c + dc, b + db
        if abs(dc) + abs(db) < 1e-15:
            break
    return wrap_phase(r - c - b * idx)


def align_and_rmse(estimate, truth, d_over_lambda=None, mode="affine"):
    """Align an estimate to the truth and return ``(residual, sqrt 2nd moment in degrees)``.

    Parameters
    ----------
    estimate, truth : array_like
        Phase vectors in radians.
    d_over_lambda : float, optional
        Restricts the ramp search to slopes a plane-wave shift can produce,
        ``|beta| <= 4 pi d/lambda``. Default searches all of ``[-pi, pi]``.
    mode : {"none", "constant", "affine"}
        ``"none"`` scores the wrapped residual directly (both vectors are
        referenced to element 0), ``"constant"`` removes the best common
        phase and ``"affine"`` additionally removes the best linear ramp.
    """
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise DomainError("estimate and truth lengths differ")
    if mode not in ALIGN_MODES:
        raise DomainError(f"mode must be one of {ALIGN_MODES}")
    if mode == "none":
        r = wrap_phase(normalize_phases(est) - normalize_phases(tru))
    else:
        r = wrap_phase(est - tru)
        if mode == "constant":
            r = wrap_phase(r - np.angle(np.mean(np.exp(1j * r))))
        else:
            beta_max = np.pi if d_over_lambda is None else min(np.pi, 4.0 * np.pi * d_over_lambda)
            r = _fit_affine(r, beta_max)
    return r, float(np.rad2deg(np.sqrt(np.mean(r**2))))
