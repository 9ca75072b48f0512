"""Flip-flop maximum likelihood for the unrestricted Kronecker model.

Each half-step is the exact conditional maximizer of one factor given the
other, so the log-likelihood never decreases.  The loop stops only when
both the log-likelihood and the Kronecker product have stopped moving:
in non-unique problems the likelihood flattens out while the product can
still slide along the set of maximizers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

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
    gamma_update,
    psi_update,
)
from .errors import (
    DegenerateUpdate,
    ExistenceRuledOut,
    NotPositiveDefinite,
    SingularDifference,
    WrongShape,
)

#: allowed log-likelihood drop across one half-step (floating point slack)
MONOTONE_SLACK = 1e-9


class Zone(str, enum.Enum):
    RULED_OUT = "RuledOut"
    UNKNOWN = "Unknown"
    GUARANTEED = "Guaranteed"


@dataclass(frozen=True)
class ExistenceVerdict:
    necessary_ok: bool
    sufficient_ok: bool
    zone: Zone


def existence_gate(n: int, p: int, q: int) -> ExistenceVerdict:
    """Classify (n, p, q) by the known existence conditions.

    ``n > max(p/q, q/p)`` is necessary and ``n > p*q`` sufficient; between
    the two nothing is known and the verdict is ``Unknown``.
    """
    if min(n, p, q) < 1:
        raise ValueError("n, p, q must be positive")
    # n > max(p/q, q/p)  <=>  n*q > p and n*p > q, kept in integers
    necessary = n * q > p and n * p > q
    sufficient = n > p * q
    if not necessary:
        zone = Zone.RULED_OUT
    elif sufficient:
        zone = Zone.GUARANTEED
    else:
        zone = Zone.UNKNOWN
    return ExistenceVerdict(necessary, sufficient, zone)


@dataclass
class FlipFlopConfig:
    max_iterations: int = 500
    ll_tol: float = 1e-12
    product_tol: float = 1e-10
    init_psi: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not (self.ll_tol > 0 and self.product_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.init_psi is not None:
            self.init_psi = np.atleast_2d(np.asarray(self.init_psi, dtype=float))
            core.cholesky(self.init_psi, "init_psi")

    def start(self, q: int) -> np.ndarray:
        if self.init_psi is None:
            return np.eye(q)
        if self.init_psi.shape != (q, q):
            raise WrongShape(f"init_psi must be {q}x{q}, got {self.init_psi.shape}")
        return np.array(self.init_psi)


def _kron_change(g0, p0, g1, p1) -> float:
    k0 = np.kron(p0, g0)
    return float(np.linalg.norm(np.kron(p1, g1) - k0) / np.linalg.norm(k0))


def _checked_chol(m: np.ndarray, what: str) -> np.ndarray:
    try:
        return core.cholesky(m, what)
    except NotPositiveDefinite as exc:
        raise DegenerateUpdate(f"{what} update is not positive definite") from exc


def alternate(
    stats: SufficientStats,
    config: FlipFlopConfig,
    gamma_projection: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    model: str = "general",
    diagonal_gamma: bool = False,
) -> EstimateReport:
    """Shared alternating loop for the general and one-diagonal models."""
    resid = stats.residuals
    q = resid.shape[2]
    psi = config.start(q)
    lp = _checked_chol(psi, "psi")
    gamma = None
    trace: list[float] = []
    status = Status.MAX_ITERATIONS
    it = 0
    for it in range(1, config.max_iterations + 1):
        g_old, p_old = gamma, psi

        gamma = gamma_update(resid, psi, lp)
        if gamma_projection is not None:
            gamma = gamma_projection(gamma)
        lg = _checked_chol(gamma, "gamma")
        _record(trace, core._loglik_resid(resid, lg, lp), it, "gamma")

        psi = psi_update(resid, gamma, lg)
        lp = _checked_chol(psi, "psi")
        _record(trace, core._loglik_resid(resid, lg, lp), it, "psi")

        if g_old is not None:
            ll = trace[-1]
            ll_change = abs(ll - trace[-3]) / max(abs(ll), 1.0)
            if ll_change <= config.ll_tol and _kron_change(g_old, p_old, gamma, psi) <= config.product_tol:
                status = Status.CONVERGED
                break

    cov = canonicalize(KroneckerCovariance(gamma, psi))
    residual = core.likelihood_equation_residual(stats, cov, diagonal_gamma=diagonal_gamma)
    return EstimateReport(
        covariance=cov,
        log_likelihood=trace[-1],
        iterations=it,
        status=status,
        residual=residual,
        trace=trace,
        model=model,
    )


def _record(trace: list, ll: float, it: int, which: str) -> None:
    if trace and ll < trace[-1] - MONOTONE_SLACK:
        raise DegenerateUpdate(
            f"log-likelihood decreased by {trace[-1] - ll:.3e} at iteration {it} ({which} step)"
        )
    trace.append(ll)


def flip_flop(data: MatrixDataset, config: Optional[FlipFlopConfig] = None) -> EstimateReport:
    """Maximum likelihood estimate of ``kron(psi, gamma)`` by flip-flop.

    Raises ExistenceRuledOut when the necessary sample-size condition
    fails, and DegenerateUpdate when a half-step leaves the positive
    definite cone.  Hitting ``max_iterations`` is reported through
    ``status`` rather than raised.  The existence zone is stamped on the
    report; ``Unknown`` means the run went ahead without any guarantee.
    """
    config = FlipFlopConfig() if config is None else config
    verdict = existence_gate(data.n, data.p, data.q)
    if verdict.zone is Zone.RULED_OUT:
        raise ExistenceRuledOut(
            f"n={data.n} <= max(p/q, q/p) for p={data.p}, q={data.q}: no MLE exists"
        )
    stats = compute_stats(data)
    report = alternate(stats, config)
    report.zone = verdict.zone.value
    return report


def multi_start(
    data: MatrixDataset,
    starts: int,
    rng: np.random.Generator,
    config: Optional[FlipFlopConfig] = None,
    runner: Callable[[MatrixDataset, FlipFlopConfig], EstimateReport] = flip_flop,
) -> list[EstimateReport]:
    """Run ``runner`` from ``starts`` random Wishart-distributed ``init_psi``."""
    base = FlipFlopConfig() if config is None else config
    q = data.q
    out = []
    for _ in range(starts):
        a = rng.standard_normal((q, q + 2))
        init = a @ a.T / (q + 2)
        cfg = FlipFlopConfig(base.max_iterations, base.ll_tol, base.product_tol, init)
        out.append(runner(data, cfg))
    return out


def kron_spread(reports: list[EstimateReport]) -> float:
    """Largest relative Frobenius distance between any two estimates."""
    covs = [r.covariance for r in reports]
    worst = 0.0
    for i in range(len(covs)):
        for j in range(i + 1, len(covs)):
            worst = max(worst, core.kron_distance(covs[i], covs[j]))
    return worst


def analytic_family_n2(data: MatrixDataset, psi: np.ndarray) -> KroneckerCovariance:
    """Closed-form maximizer for n = 2, p = q given any positive definite ``psi``.

    With ``D = (X1 - X2) / 2`` the gamma equation reads
    ``gamma = D psi^{-1} D^T / p`` and, for invertible D, it implies the psi
    equation.  Every choice of ``psi`` therefore gives a maximizer, all with
    the same likelihood.
    """
    if data.n != 2 or data.p != data.q:
        raise WrongShape(f"need n = 2 and p = q, got n={data.n}, p={data.p}, q={data.q}")
    if data.known_mean is not None:
        raise WrongShape("the n = 2 family assumes an estimated mean")
    d = 0.5 * (data.observations[0] - data.observations[1])
    cond = np.linalg.cond(d)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularDifference(f"X1 - X2 is numerically singular (cond={cond:.3e})")
    psi = np.atleast_2d(np.asarray(psi, dtype=float))
    if psi.shape != (data.q, data.q):
        raise WrongShape(f"psi must be {data.q}x{data.q}")
    lp = core.cholesky(psi, "psi")
    w = np.linalg.solve(lp, d.T)  # Lpsi^{-1} D^T
    gamma = w.T @ w / data.p
    return KroneckerCovariance(gamma, psi)


def analytic_family_n2_loglik(data: MatrixDataset) -> float:
    """Common log-likelihood of every member of the n = 2, p = q family.

    Substituting ``gamma = D psi^{-1} D^T / p`` gives
    ``|gamma|^{-p} |psi|^{-p} = p^(p^2) |D|^(-2p)``, hence
    ``-p^2 log(2 pi) + p^2 log p - 2p log|det D| - p^2``.
    """
    p = data.p
    d = 0.5 * (data.observations[0] - data.observations[1])
    _, logabsdet = np.linalg.slogdet(d)
    return -p * p * core.LOG_2PI + p * p * np.log(p) - 2 * p * logabsdet - p * p
