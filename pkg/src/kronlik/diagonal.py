"""Diagonal and one-diagonal-component Kronecker models.

For the fully diagonal model only the squared residual sums ``Y^2`` matter.
Profiling out psi leaves the strictly convex (in ``log gamma``) problem

    minimize  prod_j sum_i Y2[i, j] / gamma_i   subject to  prod_i gamma_i = 1,

which is solved here by alternating the two likelihood equations.  The
one-diagonal model replaces ``Y2[i, :]`` by the full row scatters ``S_i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import core
from .core import (
    EstimateReport,
    KroneckerCovariance,
    MatrixDataset,
    Status,
    SufficientStats,
    canonicalize,
    compute_stats,
    psi_update,
)
from .errors import ExistenceNotGuaranteed, WrongShape, ZeroResidualCell
from .flipflop import FlipFlopConfig, alternate


@dataclass
class DiagonalEstimate:
    gamma_diag: np.ndarray
    psi_diag: np.ndarray
    log_likelihood: float
    status: Status
    iterations: int = 0
    residual: float = 0.0
    normalization: str = "prod(gamma)=1 during iteration; psi[0]=1 on output"

    @property
    def covariance(self) -> KroneckerCovariance:
        return KroneckerCovariance(np.diag(self.gamma_diag), np.diag(self.psi_diag), canonical=True)

    def kron_diag(self) -> np.ndarray:
        """Diagonal of ``kron(psi, gamma)`` in column-stacked order."""
        return np.outer(self.psi_diag, self.gamma_diag).ravel()


def _check_cells(y2: np.ndarray) -> None:
    if np.any(y2 <= 0):
        i, j = np.argwhere(y2 <= 0)[0]
        raise ZeroResidualCell(f"Y^2[{i}, {j}] = 0: the likelihood is unbounded")


def diagonal_equation_residual(y2: np.ndarray, n: int, gamma: np.ndarray, psi: np.ndarray) -> float:
    """Max relative violation of the two diagonal likelihood equations."""
    p, q = y2.shape
    g_new = (y2 / psi).sum(axis=1) / (n * q)
    p_new = (y2 / gamma[:, None]).sum(axis=0) / (n * p)
    return float(max(np.max(np.abs(g_new / gamma - 1)), np.max(np.abs(p_new / psi - 1))))


def solve_diagonal(
    y2: np.ndarray,
    n: int,
    max_iterations: int = 100_000,
    tol: float = 1e-13,
    init_psi: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray, int, Status]:
    """Alternate the diagonal likelihood equations on a Y^2 table.

    Returns ``(gamma, psi, iterations, status)`` with ``prod(gamma) == 1``.
    """
    y2 = np.asarray(y2, dtype=float)
    _check_cells(y2)
    p, q = y2.shape
    psi = np.ones(q) if init_psi is None else np.asarray(init_psi, dtype=float).copy()
    if psi.shape != (q,) or np.any(psi <= 0):
        raise ValueError("init_psi must be a positive vector of length q")
    gamma = np.ones(p)
    status = Status.MAX_ITERATIONS
    it = 0
    for it in range(1, max_iterations + 1):
        g_new = (y2 / psi).sum(axis=1) / (n * q)
        scale = np.exp(np.mean(np.log(g_new)))
        g_new /= scale
        p_new = (y2 / g_new[:, None]).sum(axis=0) / (n * p)
        change = max(np.max(np.abs(g_new / gamma - 1)), np.max(np.abs(p_new / psi - 1)))
        gamma, psi = g_new, p_new
        if change <= tol:
            status = Status.CONVERGED
            break
    return gamma, psi, it, status


def diagonal_log_likelihood(y2: np.ndarray, n: int, gamma: np.ndarray, psi: np.ndarray) -> float:
    prod = np.outer(gamma, psi)
    p, q = y2.shape
    return float(
        -0.5 * p * q * n * core.LOG_2PI - 0.5 * n * np.sum(np.log(prod)) - 0.5 * np.sum(y2 / prod)
    )


def diagonal_mle(
    data: MatrixDataset,
    max_iterations: int = 100_000,
    tol: float = 1e-13,
    init_psi: Optional[np.ndarray] = None,
) -> DiagonalEstimate:
    """Unique MLE of ``kron(psi, gamma)`` with both factors diagonal.

    Needs n >= 2, or n >= 1 when ``data.known_mean`` is set.  Any start
    reaches the same product since the equations have one solution.
    """
    stats = compute_stats(data)
    y2 = np.asarray(stats.y_squared)
    gamma, psi, it, status = solve_diagonal(y2, data.n, max_iterations, tol, init_psi)
    c = psi[0]
    gamma, psi = gamma * c, psi / c
    return DiagonalEstimate(
        gamma_diag=gamma,
        psi_diag=psi,
        log_likelihood=diagonal_log_likelihood(y2, data.n, gamma, psi),
        status=status,
        iterations=it,
        residual=diagonal_equation_residual(y2, data.n, gamma, psi),
    )


def diagonal_search_box(stats: SufficientStats, full: bool = False) -> tuple[float, float]:
    """Box ``[L, 1/L^(p-1)]`` that holds every normalized minimizer ``gamma``.

    ``L = min_i (|S_i| / |S_1 + ... + S_p|)^(1/q)``.  The ``S_i`` are the
    diagonal matrices built from ``Y^2`` unless ``full`` is set, in which
    case the full row scatter matrices are used.
    """
    y2 = np.asarray(stats.y_squared)
    _check_cells(y2)
    p, q = y2.shape
    if full:
        mats = np.asarray(stats.row_scatter)
        logdets = np.array([core.logdet_from_chol(core.cholesky(s, f"S_{i}")) for i, s in enumerate(mats)])
        total = core.logdet_from_chol(core.cholesky(mats.sum(axis=0), "sum of S_i"))
    else:
        logdets = np.log(y2).sum(axis=1)
        total = np.log(y2.sum(axis=0)).sum()
    lower = float(np.exp(np.min(logdets - total) / q))
    return lower, float(lower ** -(p - 1))


def one_diag_mle(data: MatrixDataset, config: Optional[FlipFlopConfig] = None) -> EstimateReport:
    """MLE with diagonal gamma and unrestricted psi, by projected flip-flop."""
    config = FlipFlopConfig() if config is None else config
    if data.n <= data.q:
        raise ExistenceNotGuaranteed(f"one-diagonal model needs n > q (n={data.n}, q={data.q})")
    stats = compute_stats(data)
    return alternate(
        stats,
        config,
        gamma_projection=lambda g: np.diag(np.diag(g)),
        model="one-diag",
        diagonal_gamma=True,
    )


def simultaneous_diagonalize(s1: np.ndarray, s2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Congruence ``A`` with ``A^T S1 A = I`` and ``A^T S2 A = diag(lam)``.

    Whitens by the Cholesky factor of ``s1`` and diagonalizes the result
    with a symmetric eigendecomposition.  Returns ``(A, lam)``.
    """
    l1 = core.cholesky(s1, "S_1")
    c = np.linalg.solve(l1, np.linalg.solve(l1, s2).T)
    lam, u = np.linalg.eigh(0.5 * (c + c.T))
    a = np.linalg.solve(l1.T, u)
    return a, lam


def one_diag_mle_p2(data: MatrixDataset, tol: float = 1e-14) -> EstimateReport:
    """Exact p = 2 one-diagonal MLE through simultaneous diagonalization.

    After the congruence both row scatters are diagonal and the gamma
    problem is the diagonal model on the table ``[[1, ...], lam]``; psi then
    follows from its likelihood equation.
    """
    if data.p != 2:
        raise WrongShape(f"one_diag_mle_p2 needs p = 2, got p={data.p}")
    if data.n <= data.q:
        raise ExistenceNotGuaranteed(f"one-diagonal model needs n > q (n={data.n}, q={data.q})")
    stats = compute_stats(data)
    s1, s2 = np.asarray(stats.row_scatter)
    _, lam = simultaneous_diagonalize(s1, s2)
    table = np.vstack([np.ones_like(lam), lam])
    gamma, _, it, status = solve_diagonal(table, data.n, tol=tol)
    gamma_m = np.diag(gamma)
    psi = psi_update(stats.residuals, gamma_m)
    cov = canonicalize(KroneckerCovariance(gamma_m, psi))
    return EstimateReport(
        covariance=cov,
        log_likelihood=core.log_likelihood(data, stats.m_hat, cov),
        iterations=it,
        status=status,
        residual=core.likelihood_equation_residual(stats, cov, diagonal_gamma=True),
        model="one-diag-p2",
    )


@dataclass(frozen=True)
class SignPatternCase:
    gamma: np.ndarray
    psi: np.ndarray
    lam: np.ndarray
    phi: np.ndarray

    @property
    def b_matrix(self) -> np.ndarray:
        return np.outer(self.gamma, self.psi) - np.outer(self.lam, self.phi)


def mixed_or_zero(b: np.ndarray) -> np.ndarray:
    """Row/column sign condition on ``b[..., p, q]``, batched over leading axes.

    True when every row and every column is all zero or holds both a
    strictly positive and a strictly negative entry.
    """
    b = np.asarray(b)
    pos, neg, zero = b > 0, b < 0, b == 0
    rows = np.all(zero.all(axis=-1) | (pos.any(axis=-1) & neg.any(axis=-1)), axis=-1)
    cols = np.all(zero.all(axis=-2) | (pos.any(axis=-2) & neg.any(axis=-2)), axis=-1)
    return rows & cols


def sign_pattern_check(case: SignPatternCase) -> bool:
    return bool(mixed_or_zero(case.b_matrix))
