"""Domain types and likelihood primitives for the matrix-normal model.

Observations are p x q matrices with ``vec(X) ~ N(vec(M), kron(psi, gamma))``,
where ``vec`` stacks columns.  ``gamma`` is the p x p row covariance and
``psi`` the q x q column covariance.  All determinants and inverses go
through Cholesky factors; a failed factorization means "not positive
definite" with no tolerance slack.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import DimensionMismatch, InsufficientData, NotPositiveDefinite

LOG_2PI = float(np.log(2.0 * np.pi))

#: default relative Frobenius tolerance for comparing Kronecker products
KRON_TOL = 1e-8


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def cholesky(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of ``a``; raises NotPositiveDefinite on failure."""
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{what} is not positive definite") from exc


def logdet_from_chol(chol: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    EXISTENCE_RULED_OUT = "ExistenceRuledOut"
    DEGENERATE_UPDATE = "DegenerateUpdate"


@dataclass(frozen=True)
class MatrixDataset:
    """``n`` observed p x q matrices, stored as an (n, p, q) array."""

    observations: np.ndarray
    known_mean: Optional[np.ndarray] = None

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=float)
        if obs.ndim == 2:
            obs = obs[None]
        if obs.ndim != 3:
            raise DimensionMismatch(
                f"observations must be an (n, p, q) stack, got shape {obs.shape}"
            )
        if obs.shape[0] < 1 or obs.shape[1] < 1 or obs.shape[2] < 1:
            raise DimensionMismatch(f"empty dimension in shape {obs.shape}")
        object.__setattr__(self, "observations", _frozen(obs))
        if self.known_mean is not None:
            mean = np.asarray(self.known_mean, dtype=float)
            if mean.shape != obs.shape[1:]:
                raise DimensionMismatch(
                    f"known_mean has shape {mean.shape}, expected {obs.shape[1:]}"
                )
            object.__setattr__(self, "known_mean", _frozen(mean))

    @classmethod
    def from_list(cls, matrices, known_mean=None) -> "MatrixDataset":
        mats = [np.asarray(m, dtype=float) for m in matrices]
        if not mats:
            raise DimensionMismatch("at least one observation is required")
        shape = mats[0].shape
        for m in mats:
            if m.ndim != 2 or m.shape != shape:
                raise DimensionMismatch("all observations must share one (p, q) shape")
        return cls(np.stack(mats), known_mean)

    @property
    def n(self) -> int:
        return self.observations.shape[0]

    @property
    def p(self) -> int:
        return self.observations.shape[1]

    @property
    def q(self) -> int:
        return self.observations.shape[2]

    def scaled(self, s: float) -> "MatrixDataset":
        mean = None if self.known_mean is None else s * self.known_mean
        return MatrixDataset(s * self.observations, mean)

    def __eq__(self, other):
        if not isinstance(other, MatrixDataset):
            return NotImplemented
        if (self.known_mean is None) != (other.known_mean is None):
            return False
        same_mean = self.known_mean is None or np.array_equal(self.known_mean, other.known_mean)
        return same_mean and np.array_equal(self.observations, other.observations)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class KroneckerCovariance:
    """A pair (gamma, psi) representing ``kron(psi, gamma)``.

    The pair is only identified up to ``(c * gamma, psi / c)``; see
    :func:`canonicalize` for the representative with ``psi[0, 0] == 1``.
    """

    gamma: np.ndarray
    psi: np.ndarray
    canonical: bool = False
    _chol_gamma: np.ndarray = field(init=False, repr=False)
    _chol_psi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        for name, m in (("gamma", gamma), ("psi", psi)):
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise DimensionMismatch(f"{name} must be square, got shape {m.shape}")
            scale = np.max(np.abs(m)) if m.size else 0.0
            if not np.allclose(m, m.T, rtol=0.0, atol=1e-12 * max(scale, 1e-300)):
                raise NotPositiveDefinite(f"{name} is not symmetric")
        gamma = 0.5 * (gamma + gamma.T)
        psi = 0.5 * (psi + psi.T)
        object.__setattr__(self, "gamma", _frozen(gamma))
        object.__setattr__(self, "psi", _frozen(psi))
        object.__setattr__(self, "_chol_gamma", cholesky(gamma, "gamma"))
        object.__setattr__(self, "_chol_psi", cholesky(psi, "psi"))

    @property
    def p(self) -> int:
        return self.gamma.shape[0]

    @property
    def q(self) -> int:
        return self.psi.shape[0]

    @property
    def chol_gamma(self) -> np.ndarray:
        return self._chol_gamma

    @property
    def chol_psi(self) -> np.ndarray:
        return self._chol_psi

    def kron(self) -> np.ndarray:
        return np.kron(self.psi, self.gamma)

    def logdet_gamma(self) -> float:
        return logdet_from_chol(self._chol_gamma)

    def logdet_psi(self) -> float:
        return logdet_from_chol(self._chol_psi)

    def __eq__(self, other):
        if not isinstance(other, KroneckerCovariance):
            return NotImplemented
        return (
            self.canonical == other.canonical
            and np.array_equal(self.gamma, other.gamma)
            and np.array_equal(self.psi, other.psi)
        )

    __hash__ = None


@dataclass(frozen=True)
class SufficientStats:
    m_hat: np.ndarray
    y_squared: np.ndarray
    row_scatter: np.ndarray  # (p, q, q); row_scatter[i] is S_i
    residuals: np.ndarray  # (n, p, q), X_k - m_hat
    mean_known: bool = False


@dataclass
class EstimateReport:
    covariance: KroneckerCovariance
    log_likelihood: float
    iterations: int
    status: Status
    residual: float
    trace: list = field(default_factory=list)
    zone: Optional[str] = None
    model: str = "general"


def compute_stats(data: MatrixDataset) -> SufficientStats:
    """Mean, squared residual sums ``Y^2`` and per-row scatter matrices ``S_i``."""
    if data.known_mean is not None:
        m_hat = np.array(data.known_mean)
    else:
        if data.n < 2:
            raise InsufficientData("n = 1 with unknown mean leaves all residuals zero")
        m_hat = data.observations.mean(axis=0)
    resid = data.observations - m_hat
    y2 = np.einsum("kij,kij->ij", resid, resid)
    scatter = np.einsum("kia,kib->iab", resid, resid)
    return SufficientStats(
        m_hat=_frozen(m_hat),
        y_squared=_frozen(y2),
        row_scatter=_frozen(scatter),
        residuals=_frozen(resid),
        mean_known=data.known_mean is not None,
    )


def log_likelihood(data: MatrixDataset, mean: np.ndarray, cov: KroneckerCovariance) -> float:
    """Gaussian log-likelihood of all observations under ``kron(psi, gamma)``."""
    n, p, q = data.observations.shape
    if cov.p != p or cov.q != q:
        raise DimensionMismatch(f"covariance is {cov.p}x{cov.q}, data is {p}x{q}")
    resid = data.observations - np.asarray(mean, dtype=float)
    return _loglik_resid(resid, cov.chol_gamma, cov.chol_psi)


def _tri_solve(chol: np.ndarray, b: np.ndarray) -> np.ndarray:
    return solve_triangular(chol, b, lower=True, check_finite=False)


def _loglik_resid(resid: np.ndarray, lg: np.ndarray, lp: np.ndarray) -> float:
    n, p, q = resid.shape
    # whitened_k = Lg^{-1} E_k Lp^{-T}, solved one factor at a time
    left = _tri_solve(lg, resid.transpose(1, 0, 2).reshape(p, n * q))
    left = left.reshape(p, n, q).transpose(2, 1, 0).reshape(q, n * p)
    white = _tri_solve(lp, left)
    quad = float(np.sum(white * white))
    return (
        -0.5 * n * p * q * LOG_2PI
        - 0.5 * q * n * logdet_from_chol(lg)
        - 0.5 * p * n * logdet_from_chol(lp)
        - 0.5 * quad
    )


def neg_objective(cov: KroneckerCovariance, sample_cov: np.ndarray) -> float:
    """``g(R) = -log|R| - tr(R^{-1} S)`` with ``R = kron(psi, gamma)``.

    Maximizing this over Kronecker-structured R is the same as maximizing
    the likelihood: ``loglik = -(npq/2) log(2 pi) + (n/2) g(R)`` when S is
    the (1/n) sample covariance of ``vec(X_k)``.
    """
    s = np.asarray(sample_cov, dtype=float)
    dim = cov.p * cov.q
    if s.shape != (dim, dim):
        raise DimensionMismatch(f"sample_cov must be {dim}x{dim}, got {s.shape}")
    chol_r = np.kron(cov.chol_psi, cov.chol_gamma)
    logdet = cov.p * cov.logdet_psi() + cov.q * cov.logdet_gamma()
    return -logdet - float(np.trace(cho_solve((chol_r, True), s)))


def gamma_update(resid: np.ndarray, psi: np.ndarray, chol_psi: Optional[np.ndarray] = None) -> np.ndarray:
    """``(1/nq) sum_k E_k psi^{-1} E_k^T``."""
    n, p, q = resid.shape
    lp = cholesky(psi, "psi") if chol_psi is None else chol_psi
    # w[:, k, :] is Lp^{-1} E_k^T
    w = _tri_solve(lp, resid.transpose(2, 0, 1).reshape(q, n * p))
    w = w.reshape(q, n, p)
    out = np.einsum("ska,skb->ab", w, w) / (n * q)
    return 0.5 * (out + out.T)


def psi_update(resid: np.ndarray, gamma: np.ndarray, chol_gamma: Optional[np.ndarray] = None) -> np.ndarray:
    """``(1/np) sum_k E_k^T gamma^{-1} E_k``."""
    n, p, q = resid.shape
    lg = cholesky(gamma, "gamma") if chol_gamma is None else chol_gamma
    w = _tri_solve(lg, resid.transpose(1, 0, 2).reshape(p, n * q))
    w = w.reshape(p, n, q)
    out = np.einsum("ska,skb->ab", w, w) / (n * p)
    return 0.5 * (out + out.T)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(a))


def likelihood_equation_residual(
    stats: SufficientStats,
    cov: KroneckerCovariance,
    data: Optional[MatrixDataset] = None,
    diagonal_gamma: bool = False,
) -> float:
    """Max relative Frobenius residual of the two likelihood equations.

    With ``diagonal_gamma`` the gamma equation is projected onto its
    diagonal (one-diagonal-component model).
    """
    resid = stats.residuals if data is None else data.observations - stats.m_hat
    g_new = gamma_update(resid, cov.psi)
    if diagonal_gamma:
        g_new = np.diag(np.diag(g_new))
    p_new = psi_update(resid, cov.gamma)
    return max(_rel(cov.gamma, g_new), _rel(cov.psi, p_new))


def profile_log_likelihood(
    stats: SufficientStats, *, psi: Optional[np.ndarray] = None, gamma: Optional[np.ndarray] = None
) -> float:
    """Log-likelihood after maximizing out one factor in closed form.

    Given ``psi``, gamma is replaced by its conditional maximizer; given
    ``gamma``, likewise for psi.  Exactly one of the two must be passed.
    """
    if (psi is None) == (gamma is None):
        raise ValueError("pass exactly one of psi or gamma")
    resid = stats.residuals
    n, p, q = resid.shape
    if psi is not None:
        g_hat = gamma_update(resid, psi)
        ld_g = logdet_from_chol(cholesky(g_hat, "gamma update"))
        ld_p = logdet_from_chol(cholesky(psi, "psi"))
    else:
        p_hat = psi_update(resid, gamma)
        ld_p = logdet_from_chol(cholesky(p_hat, "psi update"))
        ld_g = logdet_from_chol(cholesky(gamma, "gamma"))
    return -0.5 * n * p * q * (LOG_2PI + 1.0) - 0.5 * q * n * ld_g - 0.5 * p * n * ld_p


def canonicalize(cov: KroneckerCovariance) -> KroneckerCovariance:
    """Rescale to ``psi[0, 0] == 1`` keeping ``kron(psi, gamma)`` fixed."""
    c = cov.psi[0, 0]
    if cov.canonical or c == 1.0:
        return KroneckerCovariance(cov.gamma, cov.psi, canonical=True)
    psi = cov.psi / c
    psi[0, 0] = 1.0
    return KroneckerCovariance(cov.gamma * c, psi, canonical=True)


def kron_distance(a: KroneckerCovariance, b: KroneckerCovariance) -> float:
    """Relative Frobenius distance ``|A - B| / |A|`` between the products."""
    ka, kb = a.kron(), b.kron()
    return float(np.linalg.norm(ka - kb) / np.linalg.norm(ka))


def kron_close(a: KroneckerCovariance, b: KroneckerCovariance, tol: float = KRON_TOL) -> bool:
    return kron_distance(a, b) <= tol


def sample_covariance(data: MatrixDataset, stats: Optional[SufficientStats] = None) -> np.ndarray:
    """(1/n) sum of ``vec(E_k) vec(E_k)^T`` (column-stacked vec)."""
    stats = compute_stats(data) if stats is None else stats
    vecs = stats.residuals.transpose(0, 2, 1).reshape(data.n, -1)
    return vecs.T @ vecs / data.n


def sample_matrix_normal(
    mean: np.ndarray, cov: KroneckerCovariance, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw n matrices with ``vec(X) = vec(M) + kron(Lpsi, Lgamma) z``.

    Evaluated as ``M + Lgamma Z Lpsi^T`` which is the same map without
    forming the pq x pq factor.
    """
    z = rng.standard_normal((n, cov.p, cov.q))
    return np.asarray(mean, dtype=float) + cov.chol_gamma @ z @ cov.chol_psi.T
