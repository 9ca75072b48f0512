import numpy as np
import pytest

from kronlik import core
from kronlik.core import KroneckerCovariance, MatrixDataset, compute_stats
from kronlik.errors import (
    DegenerateDenominator,
    NotInInterval,
    NotNonUnique,
    PoleOnGrid,
    WrongShape,
)
from kronlik.flipflop import FlipFlopConfig, flip_flop, multi_start
from kronlik.uniqueness import (
    Classification,
    WPolynomial,
    appendix_a_stats,
    classify,
    compute_w,
    curves,
    diagnose,
    family,
    g_curve,
    interior_points,
    member,
    nonuniqueness_probability,
    w_roots,
)

from oracles import profile_value, stationary_a_roots

GAMMA_24 = np.array([[0.15, 0.24], [0.24, 1.0]])
PSI_24 = np.array([[1.69, 0.26], [0.26, 0.15]])


def _generate(seed):
    rng = np.random.default_rng(seed)
    cov = KroneckerCovariance(GAMMA_24, PSI_24)
    return MatrixDataset(core.sample_matrix_normal(np.zeros((2, 2)), cov, 3, rng))


def _find(kind, count, start=0):
    found, seed = [], start
    while len(found) < count:
        data = _generate(seed)
        if diagnose(data).classification is kind:
            found.append(data)
        seed += 1
    return found


def test_residual_table_identical_observations():
    x = np.arange(4.0).reshape(2, 2)
    table = appendix_a_stats(MatrixDataset(np.stack([x, x, x])))
    np.testing.assert_array_equal(table.r, np.zeros((4, 3)))


def test_residual_table_ordering():
    obs = np.zeros((3, 2, 2))
    obs[:, 0, 0] = [1.0, 2.0, 3.0]
    table = appendix_a_stats(MatrixDataset(obs))
    np.testing.assert_array_equal(table.r[0], [-1.0, 0.0, 1.0])
    np.testing.assert_array_equal(table.r[1:], np.zeros((3, 3)))


def test_residual_rows_centered():
    table = appendix_a_stats(_generate(1))
    assert np.max(np.abs(table.r.sum(axis=1))) <= 1e-15


def test_residual_table_shape_gate():
    with pytest.raises(WrongShape):
        appendix_a_stats(MatrixDataset(np.zeros((3, 3, 3))))
    with pytest.raises(WrongShape):
        appendix_a_stats(MatrixDataset(np.zeros((4, 2, 2))))


def test_w_scale_invariant():
    data = _generate(2)
    a = compute_w(appendix_a_stats(data))
    b = compute_w(appendix_a_stats(data.scaled(5.0)))
    assert (b.v1, b.v2, b.v3) == pytest.approx((a.v1, a.v2, a.v3), rel=1e-13)


def test_degenerate_denominator():
    rng = np.random.default_rng(61)
    obs = rng.standard_normal((3, 2, 2))
    obs[:, 1, 1] = obs[:, 1, 0]  # r3 == r4
    with pytest.raises(DegenerateDenominator):
        compute_w(appendix_a_stats(MatrixDataset(obs)))


@pytest.mark.parametrize("seed", range(6))
def test_w_against_derivative_roots(seed):
    """The stationary sets of the profile match b^2 +- W(b) and {h1, h2}."""
    data = _generate(100 + seed)
    w = compute_w(appendix_a_stats(data))
    x = np.asarray(data.observations)
    for b in (-1.3, -0.2, 0.45, 2.1):
        if abs(b + w.v3) < 1e-3:
            continue
        roots_a, roots_b = stationary_a_roots(x, b)
        wb = float(w(b))
        np.testing.assert_allclose(roots_a, sorted([b * b + wb, b * b - wb]), rtol=1e-9, atol=1e-9)
        c = curves(w, [b])
        np.testing.assert_allclose(roots_b, sorted([c["h1"][0], c["h2"][0]]), rtol=1e-9, atol=1e-9)


def test_h2_uses_v1_as_v3():
    w = compute_w(appendix_a_stats(_generate(3)))
    assert w.v3 == w.v1


def test_curves_at_zero():
    w = WPolynomial(0.7, -0.3, 0.7)
    c = curves(w, [0.0])
    assert c["g"][0] == pytest.approx(0.3)
    assert c["h1"][0] == pytest.approx(0.3)
    assert c["h2"][0] == 0.0


def test_curve_shape_invariants():
    w = compute_w(appendix_a_stats(_find(Classification.NON_UNIQUE, 1)[0]))
    lo, hi = w_roots(w)
    grid = np.linspace(lo - 1.0, hi + 1.0, 401)
    grid = grid[np.abs(grid + w.v3) > 1e-6]
    c = curves(w, grid)
    neg = c["w_negative"]
    assert neg.any() and (~neg).any()
    np.testing.assert_allclose(c["g"][neg], c["h1"][neg], rtol=1e-12, atol=1e-12)
    assert np.all(c["g"][neg] > grid[neg] ** 2)
    assert np.all(c["g"][~neg] >= grid[~neg] ** 2)


def test_pole_on_grid():
    w = WPolynomial(0.5, 1.0, 0.5)
    with pytest.raises(PoleOnGrid):
        curves(w, [-1.0, -0.5, 0.0])


def test_classify_examples():
    rep = classify(WPolynomial(0.0, -1.0, 0.0))
    assert rep.w.discriminant == 4.0
    assert rep.classification is Classification.NON_UNIQUE
    assert rep.interval == pytest.approx((-1.0, 1.0))
    rep = classify(WPolynomial(0.0, 1.0, 0.0))
    assert rep.classification is Classification.UNIQUE
    a, b = rep.unique_point
    assert a > b * b
    rep = classify(WPolynomial(2.0, 1.0, 2.0))
    assert rep.classification is Classification.BORDERLINE


def test_w_roots_stable():
    w = WPolynomial(1e8, -1.0, 1e8)
    lo, hi = w_roots(w)
    assert hi == pytest.approx(1e-8, rel=1e-12)
    assert lo == pytest.approx(-1e8, rel=1e-12)


@pytest.mark.parametrize("v1,v2", [(0.0, 1.0), (1.0, 0.5), (-2.0, 3.0), (0.3, 0.1)])
def test_unique_point_is_crossing(v1, v2):
    w = WPolynomial(v1, v2, v1)
    a, b = classify(w).unique_point
    # a = h2(b) multiplied through by (b + V3), which stays defined when V1 = 0
    assert a * (b + v1) + v2 * b == pytest.approx(0.0, abs=1e-9)
    assert a == pytest.approx(float(g_curve(w, b)), rel=1e-12)
    # with V3 = V1 the crossing has the closed form b = -V1/2, a = V2
    assert (a, b) == pytest.approx((v2, -v1 / 2), rel=1e-9, abs=1e-10)


def test_unique_point_is_profile_maximizer():
    data = _find(Classification.UNIQUE, 1)[0]
    rep = diagnose(data)
    a, b = rep.unique_point
    x = np.asarray(data.observations)
    best = profile_value(x, a, b)
    rng = np.random.default_rng(62)
    for _ in range(200):
        da, db = rng.normal(scale=0.05, size=2)
        if a + da > (b + db) ** 2:
            assert profile_value(x, a + da, b + db) <= best * (1 + 1e-12)


def test_unique_case_flip_flop_agrees():
    data = _find(Classification.UNIQUE, 1)[0]
    rep = diagnose(data)
    target = member(data, *rep.unique_point)
    runs = multi_start(data, 10, np.random.default_rng(63), FlipFlopConfig(max_iterations=20_000))
    for r in runs:
        assert core.kron_distance(r.covariance, target) <= 1e-6


def test_family_members():
    data = _find(Classification.NON_UNIQUE, 1)[0]
    rep = diagnose(data)
    stats = compute_stats(data)
    members = family(data, rep, interior_points(rep, 2))
    lls = [core.log_likelihood(data, stats.m_hat, m) for m in members]
    assert lls[0] == pytest.approx(lls[1], abs=1e-8)
    assert lls[0] == pytest.approx(rep.family_loglik, abs=1e-8)
    assert core.kron_distance(members[0], members[1]) > 1e-3
    for m in members:
        assert core.likelihood_equation_residual(stats, m) <= 1e-8


def test_family_errors():
    data = _find(Classification.NON_UNIQUE, 1)[0]
    rep = diagnose(data)
    with pytest.raises(NotInInterval):
        family(data, rep, [rep.interval[0]])
    unique = _find(Classification.UNIQUE, 1)[0]
    with pytest.raises(NotNonUnique):
        family(unique, diagnose(unique), [0.0])


def test_midpoint_member_is_fixed_point():
    data = _find(Classification.NON_UNIQUE, 1, start=10)[0]
    rep = diagnose(data)
    mid = float(np.mean(rep.interval))
    m = member(data, float(g_curve(rep.w, mid)), mid)
    run = flip_flop(data, FlipFlopConfig(init_psi=np.asarray(m.psi)))
    assert core.kron_distance(run.covariance, m) <= 1e-6


def test_classify_scale_invariant():
    for data in _find(Classification.NON_UNIQUE, 2) + _find(Classification.UNIQUE, 2):
        a = diagnose(data).classification
        assert diagnose(data.scaled(5.0)).classification is a


def test_probability_deterministic():
    a = nonuniqueness_probability(GAMMA_24, PSI_24, 300, seed=9)
    b = nonuniqueness_probability(GAMMA_24, PSI_24, 300, seed=9)
    assert a == b
    assert a.ci_low <= a.fraction <= a.ci_high


def test_probability_identity_positive():
    res = nonuniqueness_probability(np.eye(2), np.eye(2), 1000, seed=1)
    assert res.fraction > 0


def test_probability_needs_100():
    with pytest.raises(ValueError):
        nonuniqueness_probability(np.eye(2), np.eye(2), 99, seed=1)
