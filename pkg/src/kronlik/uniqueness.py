"""Uniqueness diagnosis for n = 3 observations of 2 x 2 matrices.

Fix ``gamma = [[a, b], [b, 1]]`` with ``a > b**2`` and profile out psi.
Stationarity in ``a`` gives ``a = g(b) = b**2 + |W(b)|`` with the quadratic
``W(b) = b**2 + V1*b + V2``; stationarity in ``b`` gives ``a = h1(b) =
-V1*b - V2`` or ``a = h2(b) = -V2*b / (b + V3)``.  ``V1``, ``V2`` and ``V3``
are ratios of quadratic forms in the centered residuals, and ``V3``
coincides with ``V1`` (checked against a derivative-root oracle in the
test suite).

If ``disc(W) > 0`` the likelihood is flat along ``a = g(b)`` for b between
the roots of W and the maximizer is a whole segment.  If ``disc(W) < 0``
the only admissible solution is the crossing of g and h2.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from . import core
from .core import KroneckerCovariance, MatrixDataset, canonicalize, compute_stats, psi_update
from .errors import (
    DegenerateDenominator,
    NotInInterval,
    NotNonUnique,
    PoleOnGrid,
    RootNotBracketed,
    WrongShape,
)
from .rng import replication_rng

BORDERLINE_EPS = 1e-8


class Classification(str, enum.Enum):
    UNIQUE = "Unique"
    NON_UNIQUE = "NonUnique"
    BORDERLINE = "Borderline"


@dataclass(frozen=True)
class ResidualTable:
    """Centered residuals ``r[i, k]``; rows are positions (1,1), (1,2), (2,1), (2,2)."""

    r: np.ndarray


@dataclass(frozen=True)
class WPolynomial:
    v1: float
    v2: float
    v3: float

    @property
    def discriminant(self) -> float:
        return self.v1 * self.v1 - 4.0 * self.v2

    def __call__(self, b):
        b = np.asarray(b, dtype=float)
        return b * b + self.v1 * b + self.v2


@dataclass
class UniquenessReport:
    classification: Classification
    w: WPolynomial
    interval: Optional[tuple[float, float]] = None
    unique_point: Optional[tuple[float, float]] = None
    family_loglik: Optional[float] = None


def appendix_a_stats(data: MatrixDataset) -> ResidualTable:
    if (data.n, data.p, data.q) != (3, 2, 2):
        raise WrongShape(f"need n=3, p=q=2, got n={data.n}, p={data.p}, q={data.q}")
    obs = data.observations
    resid = obs - obs.mean(axis=0)
    return ResidualTable(resid.reshape(3, 4).T.copy())


def compute_w(stats: ResidualTable) -> WPolynomial:
    r = stats.r
    r11, r12, r13 = r[0]
    r21, r22, r23 = r[1]
    r31, r32, r33 = r[2]
    r41, r42, r43 = r[3]
    den = -r32 * r41 + r31 * r42
    scale = float(np.max(np.abs(r))) ** 2
    if abs(den) <= 1e-12 * scale or scale == 0.0:
        raise DegenerateDenominator(
            f"denominator r31*r42 - r32*r41 = {den:.3e} vanishes at residual scale {scale:.3e}"
        )
    v1 = (-r22 * r31 + r21 * r32 + r12 * r41 - r11 * r42) / den
    v2 = (-r12 * r21 + r11 * r22) / den
    return WPolynomial(float(v1), float(v2), float(v1))


def g_curve(w: WPolynomial, b):
    b = np.asarray(b, dtype=float)
    return b * b + np.abs(w(b))


def curves(w: WPolynomial, b_grid: Sequence[float]) -> dict[str, np.ndarray]:
    """g, h1, h2 on ``b_grid`` plus a mask of points where ``W(b) < 0``."""
    b = np.asarray(b_grid, dtype=float)
    if np.any(np.abs(b + w.v3) <= 1e-12 * max(1.0, abs(w.v3))):
        raise PoleOnGrid(f"b = {-w.v3!r} is a pole of h2")
    wb = w(b)
    return {
        "b": b,
        "g": b * b + np.abs(wb),
        "h1": -w.v1 * b - w.v2,
        "h2": -w.v2 * b / (b + w.v3),
        "w_negative": wb < 0,
    }


def w_roots(w: WPolynomial) -> tuple[float, float]:
    """Real roots of W in increasing order; assumes a positive discriminant."""
    sq = math.sqrt(w.discriminant)
    # pick the sign that adds magnitudes so the larger root has no cancellation
    big = -0.5 * (w.v1 + math.copysign(sq, w.v1 if w.v1 != 0 else 1.0))
    small = w.v2 / big
    return (min(big, small), max(big, small))


def _crossing_poly(w: WPolynomial, b: float) -> float:
    # (g - h2) * (b + V3) with g = b^2 + W(b), free of the h2 pole
    return (2 * b * b + w.v1 * b + w.v2) * (b + w.v3) + w.v2 * b


def solve_unique_point(w: WPolynomial, tol: float = 1e-12) -> tuple[float, float]:
    """Real crossing of g and h2 when W has no real roots.

    Scans a coarse grid out to a Cauchy bound for a sign change of
    ``(g - h2) * (b + V3)`` and bisects it.
    """
    c = 0.5 * (abs(3 * w.v1) + abs(w.v1 * w.v3 + 2 * w.v2 + w.v2) + abs(w.v2 * w.v3))
    bound = 1.0 + c
    grid = np.linspace(-bound, bound, 257)
    vals = np.array([_crossing_poly(w, x) for x in grid])
    idx = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)
    if idx.size == 0:
        raise RootNotBracketed("g - h2 shows no sign change on the search grid")
    lo, hi = grid[idx[0]], grid[idx[0] + 1]
    f_lo = _crossing_poly(w, lo)
    if f_lo == 0.0:
        hi = lo
    while hi - lo > tol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        f_mid = _crossing_poly(w, mid)
        if f_mid == 0.0:
            lo = hi = mid
            break
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    b = 0.5 * (lo + hi)
    return float(g_curve(w, b)), float(b)


def classify(w: WPolynomial, borderline_eps: float = BORDERLINE_EPS) -> UniquenessReport:
    """Decide uniqueness from the sign of ``disc(W)``.

    ``borderline_eps`` is relative to ``max(1, V1**2, 4|V2|)``; inside that
    band no claim is made.
    """
    disc = w.discriminant
    band = borderline_eps * max(1.0, w.v1 * w.v1, 4.0 * abs(w.v2))
    if disc > band:
        return UniquenessReport(Classification.NON_UNIQUE, w, interval=w_roots(w))
    if disc < -band:
        a, b = solve_unique_point(w)
        return UniquenessReport(Classification.UNIQUE, w, unique_point=(a, b))
    return UniquenessReport(Classification.BORDERLINE, w)


def member(data: MatrixDataset, a: float, b: float) -> KroneckerCovariance:
    """Profile maximizer for ``gamma = [[a, b], [b, 1]]``, canonicalized."""
    gamma = np.array([[a, b], [b, 1.0]])
    psi = psi_update(compute_stats(data).residuals, gamma)
    return canonicalize(KroneckerCovariance(gamma, psi))


def family(data: MatrixDataset, report: UniquenessReport, b_values: Sequence[float]) -> list[KroneckerCovariance]:
    """Members of the maximizer segment at the given ``b`` inside the interval."""
    if report.classification is not Classification.NON_UNIQUE:
        raise NotNonUnique(f"classification is {report.classification.value}")
    lo, hi = report.interval
    out = []
    for b in b_values:
        if not lo < b < hi:
            raise NotInInterval(f"b={b!r} is not strictly inside ({lo!r}, {hi!r})")
        out.append(member(data, float(g_curve(report.w, b)), float(b)))
    return out


def interior_points(report: UniquenessReport, count: int) -> np.ndarray:
    lo, hi = report.interval
    return np.linspace(lo, hi, count + 2)[1:-1]


def diagnose(data: MatrixDataset, borderline_eps: float = BORDERLINE_EPS) -> UniquenessReport:
    """Full pipeline: residual table, W, classification and the maximal log-likelihood."""
    report = classify(compute_w(appendix_a_stats(data)), borderline_eps)
    m_hat = data.observations.mean(axis=0)
    if report.classification is Classification.NON_UNIQUE:
        mid = float(np.mean(report.interval))
        cov = member(data, float(g_curve(report.w, mid)), mid)
        report.family_loglik = core.log_likelihood(data, m_hat, cov)
    elif report.classification is Classification.UNIQUE:
        cov = member(data, *report.unique_point)
        report.family_loglik = core.log_likelihood(data, m_hat, cov)
    return report


@dataclass
class ProbabilityResult:
    fraction: float
    ci_low: float
    ci_high: float
    non_unique: int
    replications: int
    borderline: int = 0
    degenerate: int = 0


def _count_chunk(args) -> tuple[int, int, int]:
    gamma, psi, seed, start, stop = args
    cov = KroneckerCovariance(gamma, psi)
    mean = np.zeros((2, 2))
    hits = border = degen = 0
    for k in range(start, stop):
        x = core.sample_matrix_normal(mean, cov, 3, replication_rng(seed, k))
        try:
            w = compute_w(appendix_a_stats(MatrixDataset(x)))
        except DegenerateDenominator:
            degen += 1
            continue
        disc = w.discriminant
        band = BORDERLINE_EPS * max(1.0, w.v1 * w.v1, 4.0 * abs(w.v2))
        if disc > band:
            hits += 1
        elif disc >= -band:
            border += 1
    return hits, border, degen


def nonuniqueness_probability(
    gamma: np.ndarray,
    psi: np.ndarray,
    replications: int,
    seed: int,
    workers: int = 1,
) -> ProbabilityResult:
    """Monte Carlo fraction of n = 3 datasets whose maximizer is not unique.

    Replication ``k`` draws from its own stream (see :mod:`kronlik.rng`),
    so the counts do not depend on ``workers``.  The interval is the 95%
    Wilson score interval.
    """
    if replications < 100:
        raise ValueError("need at least 100 replications")
    gamma = np.asarray(gamma, dtype=float)
    psi = np.asarray(psi, dtype=float)
    KroneckerCovariance(gamma, psi)  # validate before fanning out
    workers = max(1, int(workers))
    bounds = np.linspace(0, replications, workers + 1).astype(int)
    jobs = [(gamma, psi, seed, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if workers == 1:
        parts = [_count_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_count_chunk, jobs))
    hits, border, degen = (sum(x) for x in zip(*parts))
    ci = binomtest(hits, replications).proportion_ci(confidence_level=0.95, method="wilson")
    return ProbabilityResult(hits / replications, float(ci.low), float(ci.high), hits, replications, border, degen)
