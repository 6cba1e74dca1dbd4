"""True covariance models, calibration phase errors and Gaussian snapshots.

Angles are radians internally; configuration values are in degrees.
Snapshot sets are ``(T, N)`` complex arrays, one row per snapshot.
"""

from dataclasses import asdict, dataclass, fields
from enum import Enum

import numpy as np

from ulacal.errors import DomainError, InternalError, StructuralError
from ulacal.numerics import check_hermitian, hermitian_sqrt


class CovarianceKind(str, Enum):
    TWO_SINC = "two_sinc"
    ONE_SINC = "one_sinc"
    SHIFTED_SYMMETRIC = "shifted_symmetric"


@dataclass(frozen=True)
class ToeplitzHermitian:
    """Hermitian Toeplitz matrix stored as its first column ``t_0 .. t_{N-1}``."""

    first_col: np.ndarray

    def __post_init__(self):
        col = np.atleast_1d(np.asarray(self.first_col, dtype=complex)).copy()
        if col.ndim != 1 or col.size == 0:
            raise StructuralError("first column must be a non-empty vector")
        if abs(col[0].imag) > 1e-12 * max(abs(col[0]), 1e-300):
            raise StructuralError("t_0 must be real")
        col[0] = col[0].real
        col.setflags(write=False)
        object.__setattr__(self, "first_col", col)

    @property
    def dim(self):
        return self.first_col.size

    def matrix(self):
        n = self.dim
        lag = np.arange(n)[:, None] - np.arange(n)[None, :]
        col = self.first_col
        return np.where(lag >= 0, col[np.abs(lag)], col[np.abs(lag)].conj())

    @classmethod
    def from_matrix(cls, M, rtol=1e-9):
        """Compress ``M`` after checking it is Hermitian Toeplitz within ``rtol``."""
        M = check_hermitian(M)
        col = M[:, 0].copy()
        scale = max(np.abs(M).max(), 1e-300)
        out = cls(col)
        if np.abs(out.matrix() - M).max() > rtol * scale:
            raise StructuralError("matrix is not Toeplitz within tolerance")
        return out


def as_matrix(M):
    """Dense view of either a ``ToeplitzHermitian`` or an array."""
    if isinstance(M, ToeplitzHermitian):
        return M.matrix()
    return np.asarray(M)


@dataclass(frozen=True)
class ScenarioConfig:
    N: int = 17
    T: int = 300
    W1: float = 0.2
    W2: float = 0.1
    theta0: float = 20.0
    d_over_lambda: float = 0.25
    q_inv_sq_db: float = -40.0
    phi_max_deg: float = 5.0
    covariance_kind: CovarianceKind = CovarianceKind.TWO_SINC
    trials: int = 1000
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "covariance_kind", CovarianceKind(self.covariance_kind))
        if self.N < 1 or self.T < 1 or self.trials < 1:
            raise DomainError("N, T and trials must all be >= 1")
        for name in ("W1", "W2", "d_over_lambda"):
            v = getattr(self, name)
            if not 0.0 < v <= 0.5:
                raise DomainError(f"{name}={v} outside (0, 0.5]")
        if not 0.0 <= self.phi_max_deg <= 180.0:
            raise DomainError(f"phi_max_deg={self.phi_max_deg} outside [0, 180]")
        if abs(self.theta0) > 90.0:
            raise DomainError(f"theta0={self.theta0} outside [-90, 90]")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    @property
    def noise_power(self):
        return 10.0 ** (self.q_inv_sq_db / 10.0)

    def replace(self, **changes):
        return ScenarioConfig(**{**asdict(self), **changes})

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, values):
        """Build from ``{field: text}``; unknown keys raise ``KeyError``."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise KeyError(key)
            kwargs[key] = _parse_field(key, raw)
        return cls(**kwargs)

    def to_lines(self, prefix="scenario."):
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Enum):
                v = v.value
            elif isinstance(v, float):
                v = repr(v)
            out.append(f"{prefix}{f.name}={v}")
        return out


_INT_FIELDS = {"N", "T", "trials", "seed"}


def _parse_field(key, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if key in _INT_FIELDS:
        return int(raw, 0)
    if key == "covariance_kind":
        return CovarianceKind(raw)
    return float(raw)


def build_sinc_matrix(W, N):
    """``[sin(2 pi W (k-l)) / (pi (k-l))]`` with ``2W`` on the diagonal."""
    if not 0.0 < W <= 0.5:
        raise DomainError(f"bandwidth W={W} outside (0, 0.5]")
    m = np.arange(N)[:, None] - np.arange(N)[None, :]
    safe = np.where(m == 0, 1, m)
    S = np.sin(2.0 * np.pi * W * m) / (np.pi * safe)
    # exact zeros where 2 W m is an integer; np.sin(k*pi) leaves ~1e-16 residue
    S[np.isclose(2.0 * W * m, np.round(2.0 * W * m), rtol=0.0, atol=1e-12)] = 0.0
    S[m == 0] = 2.0 * W
    return S


def build_steering(theta0_deg, d_over_lambda, N):
    """Diagonal of ``diag(theta0)``: element ``l`` is ``exp(i l 2 pi d/lambda sin theta0)``."""
    if abs(theta0_deg) > 90.0:
        raise DomainError(f"theta0={theta0_deg} outside [-90, 90] degrees")
    mu = 2.0 * np.pi * d_over_lambda * np.sin(np.deg2rad(theta0_deg))
    return np.exp(1j * mu * np.arange(N))


def build_covariance(cfg):
    """True Toeplitz covariance of the calibrated array for ``cfg``."""
    N = cfg.N
    q = cfg.noise_power
    kind = CovarianceKind(cfg.covariance_kind)
    if kind is CovarianceKind.ONE_SINC:
        T = q * np.eye(N) + build_sinc_matrix(cfg.W1, N)
    else:
        a = build_steering(cfg.theta0, cfg.d_over_lambda, N)
        shifted = a[:, None] * build_sinc_matrix(cfg.W2, N) * a.conj()[None, :]
        if kind is CovarianceKind.TWO_SINC:
            T = q * np.eye(N) + build_sinc_matrix(cfg.W1, N) + 0.5 * shifted
        else:
            T = shifted + q * np.eye(N)
    out = ToeplitzHermitian(T[:, 0])
    if np.linalg.eigvalsh(out.matrix())[0] <= 0.0:
        raise InternalError("constructed covariance is not positive definite")
    return out


def wrap_phase(x):
    """Map angles to ``(-pi, pi]``."""
    x = np.asarray(x, dtype=float)
    out = np.mod(x + np.pi, 2.0 * np.pi) - np.pi
    return np.where(out == -np.pi, np.pi, out)


def normalize_phases(phases):
    """Reference phases to element 0 and wrap."""
    p = np.asarray(phases, dtype=float)
    out = wrap_phase(p - p[0])
    out[0] = 0.0
    return out


def draw_phase_errors(phi_max_deg, N, rng):
    """i.i.d. uniform errors on ``[-phi_max, phi_max]`` radians, element 0 pinned."""
    if not 0.0 <= phi_max_deg <= 180.0:
        raise DomainError(f"phi_max_deg={phi_max_deg} outside [0, 180]")
    phi_max = np.deg2rad(phi_max_deg)
    phases = rng.uniform(-phi_max, phi_max, size=N)
    phases[0] = 0.0
    return wrap_phase(phases)


def phase_matrix(phases):
    """Diagonal of ``D(Phi)``."""
    return np.exp(1j * np.asarray(phases, dtype=float))


def draw_xi(T, N, rng):
    """``(T, N)`` array of CN(0, 1) draws (real and imaginary variance 1/2)."""
    return (rng.standard_normal((T, N)) + 1j * rng.standard_normal((T, N))) / np.sqrt(2.0)


def generate_snapshots(T_N, phases, T, rng=None, xi=None):
    """Snapshots ``Y_t = D(Phi) T_N^{1/2} xi_t`` as a ``(T, N)`` array.

    Pass ``xi`` to reuse a noise stream across paired runs.
    """
    M = as_matrix(T_N)
    w = np.linalg.eigvalsh(M)
    if w[0] <= 0.0:
        raise DomainError("covariance must be positive definite")
    N = M.shape[0]
    if xi is None:
        xi = draw_xi(T, N, rng)
    root = hermitian_sqrt(M)
    # row form of root @ xi_t; root is Hermitian so root.T == root.conj()
    X = xi @ root.T
    return X * phase_matrix(phases)[None, :]


def sample_covariance(Y):
    """``(1/T) sum_t Y_t Y_t^H`` for a ``(T, N)`` snapshot array."""
    Y = np.atleast_2d(np.asarray(Y))
    if Y.shape[0] < 1:
        raise DomainError("need at least one snapshot")
    R = Y.T @ Y.conj() / Y.shape[0]
    return 0.5 * (R + R.conj().T)


def trial_rng(seed, trial):
    """Independent generator for trial ``trial`` of an experiment seeded by ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))
