"""Sphericity likelihood ratio, its Monte Carlo reference distributions and
the Toeplitz-origin test.

Everything is reported as the natural log of the ratio, so values are
``<= 0`` with ``0`` meaning ``R_hat`` is exactly proportional to ``M``.
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.stats import ks_2samp

from ulacal import rmt, toeplitz_recon
from ulacal.errors import DomainError
from ulacal.numerics import check_hermitian, hermitize
from ulacal.scenario import as_matrix, draw_xi, generate_snapshots, sample_covariance, trial_rng


@dataclass(frozen=True)
class LRStatistic:
    log_lr: float

    @property
    def lr(self):
        return float(np.exp(self.log_lr))


@dataclass(frozen=True)
class NullDistribution:
    """Sorted log-LR draws for a given ``(N, T)``."""

    N: int
    T: int
    samples: np.ndarray
    seed: int = 0

    def __post_init__(self):
        s = np.sort(np.asarray(self.samples, dtype=float))
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def trials(self):
        return self.samples.size

    def quantile(self, alpha):
        return float(np.quantile(self.samples, alpha))


class Verdict(str, Enum):
    TOEPLITZ_ORIGIN = "toeplitz_origin"
    NON_TOEPLITZ_ORIGIN = "non_toeplitz_origin"


@dataclass(frozen=True)
class TestResult:
    verdict: Verdict
    log_lr: float
    threshold: float

    __test__ = False  # keep pytest from collecting this class


def lr_stat(R_hat, M):
    """Log of ``det(R M^{-1}) / (tr(R M^{-1}) / N)^N``.

    Both determinants come from Cholesky diagonals and the trace from
    ``||L_M^{-1} L_R||_F^2``, which keeps relative accuracy when ``M`` is
    ill-conditioned.

    Raises
    ------
    DomainError
        If ``M`` is not PD or ``R_hat`` is rank deficient.
    """
    R = check_hermitian(as_matrix(R_hat))
    Mm = check_hermitian(as_matrix(M))
    if R.shape != Mm.shape:
        raise DomainError("R_hat and M must have the same shape")
    try:
        L_M = cholesky(hermitize(Mm), lower=True)
    except np.linalg.LinAlgError as exc:
        raise DomainError("reference matrix is not positive definite") from exc
    try:
        L_R = cholesky(hermitize(R), lower=True)
    except np.linalg.LinAlgError as exc:
        raise DomainError("sample matrix is rank deficient (T < N?)") from exc
    N = R.shape[0]
    if N == 1:
        return LRStatistic(0.0)  # identically one for a scalar
    X = solve_triangular(L_M, L_R, lower=True)
    tr = float(np.sum(np.abs(X) ** 2))
    log_det = 2.0 * float(np.sum(np.log(np.real(np.diag(L_R)))) - np.sum(np.log(np.real(np.diag(L_M)))))
    return LRStatistic(min(log_det - N * np.log(tr / N), 0.0))


def null_samples(N, T, trials, seed=0):
    """``trials`` draws of ``lr_stat(W / T, I)`` for ``W`` complex Wishart(I, T).

    Trial ``k`` uses its own stream ``trial_rng(seed, k)``.
    """
    if T < N:
        raise DomainError(f"need T >= N for a full-rank sample matrix (T={T}, N={N})")
    eye = np.eye(N)
    out = np.empty(trials)
    for k in range(trials):
        xi = draw_xi(T, N, trial_rng(seed, k))
        out[k] = lr_stat(sample_covariance(xi), eye).log_lr
    return NullDistribution(N, T, out, seed)


def pipeline_statistic(R_hat, T, use_rmt=True):
    """Log-LR of the (optionally RMT-modified) sample matrix against its ME Toeplitz reconstruction."""
    R = rmt.modify_matrix(R_hat, T) if use_rmt else check_hermitian(as_matrix(R_hat))
    T_hat, _ = toeplitz_recon.reconstruct(R)
    return lr_stat(R, T_hat)


def pipeline_null_samples(T_N, T, trials, seed=0, use_rmt=True):
    """Pipeline statistic on calibrated data drawn from ``T_N``.

    This is the reference distribution for the pipeline statistic itself,
    which is not distributed like ``null_samples`` (see the README).
    """
    N = as_matrix(T_N).shape[0]
    if T < N:
        raise DomainError(f"need T >= N (T={T}, N={N})")
    out = np.empty(trials)
    zero = np.zeros(N)
    for k in range(trials):
        Y = generate_snapshots(T_N, zero, T, rng=trial_rng(seed, k))
        out[k] = pipeline_statistic(sample_covariance(Y), T, use_rmt).log_lr
    return NullDistribution(N, T, out, seed)


def toeplitz_origin_test(R_hat, T, use_rmt, null, alpha=0.01):
    """Decide whether ``R_hat`` comes from a Toeplitz (calibrated) covariance.

    Rejects when the pipeline log-LR falls below the ``alpha`` quantile of
    ``null``.
    """
    N = as_matrix(R_hat).shape[0]
    if (null.N, null.T) != (N, T):
        raise DomainError(f"null distribution is for (N, T)=({null.N}, {null.T}), not ({N}, {T})")
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    stat = pipeline_statistic(R_hat, T, use_rmt).log_lr
    thr = null.quantile(alpha)
    verdict = Verdict.NON_TOEPLITZ_ORIGIN if stat < thr else Verdict.TOEPLITZ_ORIGIN
    return TestResult(verdict, stat, thr)


def save_null(path, null):
    lines = [f"N={null.N}", f"T={null.T}", f"trials={null.trials}", f"seed={null.seed}"]
    lines += [f"{v:.17g}" for v in null.samples]
    Path(path).write_text("\n".join(lines) + "\n")


def load_null(path):
    text = Path(path).read_text().splitlines()
    header = dict(line.split("=", 1) for line in text[:4])
    samples = np.array([float(v) for v in text[4:] if v.strip()])
    if samples.size != int(header["trials"]):
        raise DomainError(f"{path}: expected {header['trials']} samples, found {samples.size}")
    return NullDistribution(int(header["N"]), int(header["T"]), samples, int(header["seed"]))


def cached_null(cache_dir, N, T, trials, seed=0):
    """Load the null for ``(N, T, trials, seed)`` from ``cache_dir`` or compute and store it."""
    path = Path(cache_dir) / f"null_N{N}_T{T}_n{trials}_s{seed}.txt"
    if path.exists():
        return load_null(path)
    null = null_samples(N, T, trials, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_null(path, null)
    return null


def ks_distance(a, b):
    """Two-sample Kolmogorov-Smirnov statistic."""
    return float(ks_2samp(a, b).statistic)
