import itertools
import math

import numpy as np
import pytest

from mobound.complexity import (
    CONTRACTION_CONSTANT,
    EvalGrid,
    dudley_chain_bound,
    empirical_rademacher,
    empirical_rademacher_exact,
    empirical_rademacher_mc,
    exact_stump_rademacher,
    local_contraction_bound,
    minoration_cover_bound,
    project_class,
    tree_class_rad_bound,
)
from mobound.errors import NumericDomainError


def grid_from(columns):
    vals = np.stack([np.asarray(c, dtype=float) for c in columns], axis=1)
    return EvalGrid(values=vals, n=vals.shape[0], q=1)


def brute_force_rademacher(values):
    """Average over all 2**m sign vectors of the per-draw column supremum."""
    m = values.shape[0]
    total = 0.0
    for signs in itertools.product((-1.0, 1.0), repeat=m):
        total += max(np.asarray(signs) @ values[:, k] for k in range(values.shape[1]))
    return total / (2**m * m)


# ---------------------------------------------------------------------------
# projected grids

def test_project_class_constant_function():
    X = np.zeros((3, 2))
    c = np.array([1.0, -2.0])
    grid = project_class([lambda X: np.tile(c, (len(X), 1))], X, q=2)
    assert grid.values.shape == (6, 1)
    assert np.array_equal(grid.values[:, 0], [1.0, -2.0, 1.0, -2.0, 1.0, -2.0])


def test_project_class_row_order_is_dataset_major():
    X = np.arange(6.0).reshape(3, 2)
    f = lambda X: np.stack([X[:, 0], 10 * X[:, 0]], axis=1)
    grid = project_class([f], X, q=2)
    # row (i-1)*q + j holds output j of example i
    expect = [0.0, 0.0, 2.0, 20.0, 4.0, 40.0]
    assert np.array_equal(grid.values[:, 0], expect)


def test_project_class_negation_negates_columns():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(4, 3))
    f = lambda X: X[:, :2] ** 2
    g = lambda X: -(X[:, :2] ** 2)
    grid = project_class([f, g], X, q=2)
    assert np.array_equal(grid.values[:, 0], -grid.values[:, 1])


def test_project_class_scalar_case():
    grid = project_class([lambda X: np.full((1, 1), 3.0)], np.zeros((1, 1)), q=1)
    assert grid.values.shape == (1, 1) and grid.m == 1


# ---------------------------------------------------------------------------
# Monte Carlo and exact estimation

def test_single_constant_column_has_zero_complexity():
    grid = grid_from([[1.0]])
    est = empirical_rademacher_mc(grid, draws=2000, rng_seed=0)
    assert abs(est.mean) <= max(3 * est.std_error, 1e-12)
    assert empirical_rademacher_exact(grid).mean == 0.0


def test_sign_pair_column_achieves_one():
    grid = grid_from([[1.0], [-1.0]])
    est = empirical_rademacher_mc(grid, draws=500, rng_seed=1)
    assert est.mean == 1.0 and est.std_error == 0.0


def test_mc_matches_exact_enumeration_on_mirrored_columns():
    rng = np.random.default_rng(2)
    g = rng.normal(size=16)
    grid = grid_from([g, -g])
    exact = empirical_rademacher_exact(grid)
    # independent oracle: (1/m) E|sum sigma_i g_i| by direct enumeration
    oracle = brute_force_rademacher(grid.values)
    assert exact.mean == pytest.approx(oracle, abs=1e-12)
    mc = empirical_rademacher_mc(grid, draws=2000, rng_seed=3)
    assert abs(mc.mean - exact.mean) <= 3 * mc.std_error


def test_exact_small_m_against_hand_enumeration():
    rng = np.random.default_rng(4)
    vals = rng.normal(size=(3, 4))
    grid = EvalGrid(values=vals, n=3, q=1)
    assert empirical_rademacher_exact(grid).mean == pytest.approx(
        brute_force_rademacher(vals), abs=1e-12
    )


def test_auto_selection_switches_on_size():
    small = grid_from([np.ones(8)])
    assert empirical_rademacher(small).std_error == 0.0  # exact path
    big = grid_from([np.ones(25)])
    est = empirical_rademacher(big, draws=64, rng_seed=5)
    assert est.draws == 64  # Monte-Carlo path


def test_scale_equivariance_is_exact_per_draw():
    rng = np.random.default_rng(6)
    vals = rng.normal(size=(30, 3))
    a = empirical_rademacher_mc(EvalGrid(values=vals, n=30, q=1), draws=200, rng_seed=7)
    b = empirical_rademacher_mc(EvalGrid(values=2.0 * vals, n=30, q=1), draws=200, rng_seed=7)
    assert b.mean == pytest.approx(2.0 * a.mean, rel=1e-15)


def test_convex_combinations_do_not_increase_complexity():
    rng = np.random.default_rng(8)
    vals = rng.normal(size=(14, 5))
    base = empirical_rademacher_exact(EvalGrid(values=vals, n=14, q=1))
    w = rng.dirichlet(np.ones(5), size=6).T  # 6 random convex combinations
    aug = np.hstack([vals, vals @ w])
    more = empirical_rademacher_exact(EvalGrid(values=aug, n=14, q=1))
    assert more.mean <= base.mean + 1e-12  # sup unchanged by convex closure


def test_grid_validation():
    with pytest.raises(ValueError):
        EvalGrid(values=np.empty((0, 1)), n=0, q=1)
    with pytest.raises(ValueError):
        EvalGrid(values=np.array([[np.inf]]), n=1, q=1)
    with pytest.raises(ValueError):
        empirical_rademacher_exact(grid_from([np.ones(21)]))


# ---------------------------------------------------------------------------
# exact stump supremum

def test_stump_single_point_attains_one():
    est = exact_stump_rademacher(np.zeros((1, 1)), q=1, tau=1.0, draws=50, rng_seed=0)
    assert est.mean == 1.0 and est.std_error == 0.0


def test_stump_tau_scaling_exact():
    X = np.random.default_rng(1).normal(size=(6, 2))
    a = exact_stump_rademacher(X, q=2, tau=1.0, draws=100, rng_seed=2)
    b = exact_stump_rademacher(X, q=2, tau=2.0, draws=100, rng_seed=2)
    assert b.mean == pytest.approx(2.0 * a.mean, rel=1e-15)


def test_stump_supremum_dominates_any_explicit_stump():
    # the enumerated supremum must beat the signed mean of any fixed stump
    rng = np.random.default_rng(3)
    X = rng.normal(size=(5, 2))
    q, tau = 2, 1.0
    m = 5 * q
    draws, seed = 64, 9
    est = exact_stump_rademacher(X, q=q, tau=tau, draws=draws, rng_seed=seed)
    sig = np.random.Generator(np.random.PCG64(seed)).integers(0, 2, size=(draws, 5, q)) * 2.0 - 1.0

    def stump_value(sigma, f, t, j_left, s_left, j_right, s_right):
        left = X[:, f] <= t
        val = s_left * sigma[left, j_left].sum() + s_right * sigma[~left, j_right].sum()
        return tau * val / m

    total = 0.0
    for k in range(draws):
        best = 0.0
        for f in range(2):
            for t in np.concatenate([X[:, f], [np.inf]]):
                for j_l, s_l, j_r, s_r in itertools.product(range(q), (-1, 1), range(q), (-1, 1)):
                    best = max(best, stump_value(sig[k], f, t, j_l, s_l, j_r, s_r))
        total += best
    assert est.mean == pytest.approx(total / draws, abs=1e-12)


def test_stump_guard_rejects_large_instances():
    with pytest.raises(ValueError):
        exact_stump_rademacher(np.zeros((4000, 3)), q=30, tau=1.0, draws=1)


def test_stump_below_analytic_bound_on_random_instances():
    rng = np.random.default_rng(10)
    for _ in range(10):
        n = int(rng.integers(2, 16))
        d = int(rng.integers(1, 4))
        q = int(rng.integers(1, 5))
        tau = float(rng.choice([0.5, 1.0, 2.0]))
        X = rng.normal(size=(n, d))
        est = exact_stump_rademacher(X, q=q, tau=tau, draws=400, rng_seed=int(rng.integers(1e6)))
        assert est.mean <= tree_class_rad_bound(2, tau, d, n, q) + 3 * est.std_error


# ---------------------------------------------------------------------------
# analytic formula evaluators

def test_tree_class_rad_bound_frozen_value():
    assert tree_class_rad_bound(2, 1.0, 3, 100, 4) == pytest.approx(0.39454338, abs=1e-7)
    assert tree_class_rad_bound(2, 2.0, 3, 100, 4) == pytest.approx(
        2 * tree_class_rad_bound(2, 1.0, 3, 100, 4)
    )
    ns = [50, 100, 200, 400]
    vals = [tree_class_rad_bound(2, 1.0, 3, n, 4) for n in ns]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_minoration_cover_bound():
    assert minoration_cover_bound(0.5, 0.0, 100) == 0.0
    assert minoration_cover_bound(0.5, 0.1, 100, beta=1.0) == pytest.approx(111.8634, abs=1e-3)
    # doubling epsilon shrinks the bound by more than 4x
    assert minoration_cover_bound(1.0, 0.1, 100) < minoration_cover_bound(0.5, 0.1, 100) / 4
    with pytest.raises(NumericDomainError):
        minoration_cover_bound(0.2, 0.1, 100)


def test_dudley_chain_bound():
    assert dudley_chain_bound([1.0, 0.5, 0.25], lambda e: 0.0, 100) == 0.25
    # single-term sum written out by hand
    lc = lambda e: 2.0
    got = dudley_chain_bound([1.0, 0.5], lc, 50)
    assert got == pytest.approx(2 * (0.5 + 1.0) * math.sqrt(2.0 / 50) + 0.5)
    with pytest.raises(ValueError):
        dudley_chain_bound([0.5, 0.5], lc, 50)


def test_local_contraction_bound_values():
    assert local_contraction_bound(2.0, 0.5, 0.01, 4, 1000, 1.0, 0.01) == pytest.approx(
        58.034302, abs=1e-5
    )
    # r -> 0 kills the bound when theta > 0
    assert local_contraction_bound(1.0, 0.5, 1e-12, 2, 100, 1.0, 0.01) < 1e-4
    # theta = 0 makes it r-independent
    a = local_contraction_bound(1.0, 0.0, 0.01, 2, 100, 1.0, 0.01)
    b = local_contraction_bound(1.0, 0.0, 123.0, 2, 100, 1.0, 0.01)
    assert a == b
    with pytest.raises(NumericDomainError):
        local_contraction_bound(1.0, 0.6, 0.1, 2, 100, 1.0, 0.01)


def test_chain_with_minoration_stays_within_contraction_constant():
    # rebuild the dyadic chain behind the local bound and compare magnitudes:
    # the closed form must dominate the chain, and by less than its 2**9 slack
    lam, theta, r, q, n, beta, rad = 2.0, 0.5, 0.05, 4, 2000, 2.0, 1e-3
    m = n * q
    scale = 2.0 ** (1 + theta) * lam * r**theta

    def log_cover(eps):
        xi = eps / scale
        return minoration_cover_bound(xi, rad, m, beta)

    K = math.ceil(math.log2(beta * min(1 / (2 * rad), 8 * math.sqrt(n)))) - 1
    eps = [scale * beta * 2.0**-k for k in range(K + 1)]
    chain = dudley_chain_bound(eps, log_cover, n)
    closed = local_contraction_bound(lam, theta, r, q, n, beta, rad)
    assert chain <= closed
    assert chain >= closed / CONTRACTION_CONSTANT
