"""Rademacher-complexity machinery.

Empirical Rademacher complexity of a finite function set is estimated by
Monte Carlo over random sign vectors (or computed exactly by enumerating all
of them when feasible).  Vector-valued classes are scalarized first: a
multi-output function ``f`` becomes the map ``(x_i, j) -> f(x_i)[j]`` on the
``n*q``-point evaluation grid, and complexity is measured per grid point.

The module also evaluates the analytic bounds used by certificates: the
combinatorial bound for the constrained tree class, the sup-norm minoration
bound on covering numbers, the chaining bound, and the local contraction
bound whose hard-coded constant ``2**9`` is surfaced as
:data:`CONTRACTION_CONSTANT`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericDomainError

__all__ = [
    "EvalGrid",
    "RadEstimate",
    "project_class",
    "empirical_rademacher_mc",
    "empirical_rademacher_exact",
    "empirical_rademacher",
    "exact_stump_rademacher",
    "tree_class_rad_bound",
    "minoration_cover_bound",
    "dudley_chain_bound",
    "local_contraction_bound",
    "CONTRACTION_CONSTANT",
]

CONTRACTION_CONSTANT = 2**9
EXACT_ENUMERATION_LIMIT = 20  # enumerate all 2**m sign vectors up to m = 20
STUMP_GUARD = 10**7


@dataclass(frozen=True)
class EvalGrid:
    """Values of ``K`` member functions on ``m`` evaluation points.

    For projected multi-output classes the points are (example, output index)
    pairs in dataset-major order: row ``(i - 1) * q + j`` holds output ``j`` of
    example ``i`` (both 1-based).
    """

    values: np.ndarray  # (m, K)
    n: int
    q: int

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ValueError("grid must be a non-empty (m, K) matrix")
        if not np.isfinite(self.values).all():
            raise ValueError("grid entries must be finite")

    @property
    def m(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class RadEstimate:
    mean: float
    std_error: float
    draws: int

    def __post_init__(self):
        if self.std_error < 0 or self.draws < 1:
            raise ValueError("std_error must be >= 0 and draws >= 1")


def project_class(functions, X, q: int) -> EvalGrid:
    """Scalarize multi-output functions over the (example, output) grid.

    ``functions`` is a sequence of callables mapping an (n, d) matrix to an
    (n, q) output matrix; column ``k`` of the grid flattens function ``k``'s
    outputs in dataset-major order.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be (n, d)")
    n = X.shape[0]
    cols = []
    for f in functions:
        out = np.asarray(f(X), dtype=float)
        if out.shape != (n, q):
            raise ValueError(f"member function returned shape {out.shape}, expected {(n, q)}")
        cols.append(out.reshape(n * q))
    if not cols:
        raise ValueError("need at least one member function")
    return EvalGrid(values=np.stack(cols, axis=1), n=n, q=q)


def _sup_means(signs: np.ndarray, grid: EvalGrid) -> np.ndarray:
    # per sign vector: sup over member functions of the signed mean
    return (signs @ grid.values).max(axis=1) / grid.m


def empirical_rademacher_mc(grid: EvalGrid, draws: int = 2000, rng_seed: int = 0) -> RadEstimate:
    """Monte-Carlo estimate of the empirical Rademacher complexity of the grid:
    the expected supremum over columns of the sign-weighted mean.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    sups = np.empty(draws)
    step = max(1, 10**7 // max(grid.m, 1))
    for start in range(0, draws, step):
        stop = min(start + step, draws)
        signs = rng.integers(0, 2, size=(stop - start, grid.m)) * 2.0 - 1.0
        sups[start:stop] = _sup_means(signs, grid)
    se = float(sups.std(ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
    return RadEstimate(mean=float(sups.mean()), std_error=se, draws=draws)


def empirical_rademacher_exact(grid: EvalGrid) -> RadEstimate:
    """Exact value by full enumeration of all ``2**m`` sign vectors."""
    m = grid.m
    if m > EXACT_ENUMERATION_LIMIT:
        raise ValueError(f"exact enumeration limited to m <= {EXACT_ENUMERATION_LIMIT}")
    total = 0.0
    count = 1 << m
    bits = np.arange(m, dtype=np.uint64)
    for start in range(0, count, 1 << 14):
        codes = np.arange(start, min(start + (1 << 14), count), dtype=np.uint64)
        signs = (((codes[:, None] >> bits) & 1) * 2.0 - 1.0).astype(float)
        total += _sup_means(signs, grid).sum()
    return RadEstimate(mean=total / count, std_error=0.0, draws=count)


def empirical_rademacher(grid: EvalGrid, draws: int = 2000, rng_seed: int = 0) -> RadEstimate:
    """Exact enumeration when ``2**m`` is small enough, Monte Carlo otherwise."""
    if grid.m <= EXACT_ENUMERATION_LIMIT:
        return empirical_rademacher_exact(grid)
    return empirical_rademacher_mc(grid, draws=draws, rng_seed=rng_seed)


def exact_stump_rademacher(
    X, q: int, tau: float, draws: int = 2000, rng_seed: int = 0
) -> RadEstimate:
    """Per-draw exact supremum over all projected two-leaf trees with l1 budget.

    For each sign draw the supremum over the projected stump class is attained
    by an axis-aligned binary partition of the rows combined with a signed
    basis vector per leaf (the extreme points of the l1 ball), so it equals

        (tau / m) * max over splits [ max_j |S_j(left)| + max_j |S_j(right)| ]

    where ``S_j(side)`` sums the signs of output coordinate ``j`` over the
    side's rows and ``m = n * q``.  All splits of every feature are enumerated,
    including the trivial one (everything on one side).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be (n, d)")
    n, d = X.shape
    m = n * q
    if d * (m + 1) * (2 * q) ** 2 > STUMP_GUARD:
        raise ValueError("instance too large for exhaustive stump enumeration")
    if draws < 1:
        raise ValueError("draws must be >= 1")

    rng = np.random.Generator(np.random.PCG64(rng_seed))
    sigma = rng.integers(0, 2, size=(draws, n, q)) * 2.0 - 1.0
    totals = sigma.sum(axis=1)  # (draws, q)
    trivial = np.abs(totals).max(axis=1)  # split with one empty side

    best = trivial.copy()
    for f in range(d):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cum = np.cumsum(sigma[:, order, :], axis=1)  # (draws, n, q)
        cuts = np.nonzero(xs[1:] > xs[:-1])[0]  # prefix of length cut+1 goes left
        if cuts.size == 0:
            continue
        left = cum[:, cuts, :]
        right = totals[:, None, :] - left
        vals = np.abs(left).max(axis=2) + np.abs(right).max(axis=2)  # (draws, n_cuts)
        best = np.maximum(best, vals.max(axis=1))

    sups = tau / m * best
    se = float(sups.std(ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
    return RadEstimate(mean=float(sups.mean()), std_error=se, draws=draws)


def tree_class_rad_bound(p: int, tau: float, d: int, n: int, q: int) -> float:
    """Analytic complexity bound for the projected p-leaf tree class:
    ``2 * tau * sqrt(p * log(2 * max(d*n*q, q)) / (n*q))``.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    if min(tau, d, n, q) <= 0:
        raise ValueError("tau, d, n, q must be positive")
    m = n * q
    return 2.0 * tau * math.sqrt(p * math.log(2.0 * max(d * m, q)) / m)


def minoration_cover_bound(epsilon: float, rad_n: float, n: int, beta: float = 1.0) -> float:
    """Sup-norm covering-number bound ``rad**2 * (4n/eps**2) * log(2*e*beta*n/eps)``,
    valid only in the minoration regime ``epsilon > 2 * rad_n``.
    """
    if rad_n < 0 or n < 1 or beta <= 0:
        raise ValueError("rad_n must be >= 0, n >= 1, beta > 0")
    if not epsilon > 2.0 * rad_n:
        raise NumericDomainError(
            f"epsilon={epsilon} is outside the minoration regime (need > {2 * rad_n})"
        )
    return rad_n**2 * (4.0 * n / epsilon**2) * math.log(2.0 * math.e * beta * n / epsilon)


def dudley_chain_bound(epsilons, log_cover, n: int) -> float:
    """Chaining bound ``2 * sum_k (eps_k + eps_{k-1}) * sqrt(logN(eps_k)/n) + eps_K``
    for a strictly decreasing scale sequence ``eps_0 > eps_1 > ... > eps_K > 0``.
    ``log_cover`` maps a scale to a log covering-number bound.
    """
    eps = [float(e) for e in epsilons]
    if len(eps) < 2:
        raise ValueError("need at least eps_0 and eps_1")
    if any(b >= a for a, b in zip(eps, eps[1:])) or eps[-1] <= 0:
        raise ValueError("scales must be strictly decreasing and positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    total = 0.0
    for k in range(1, len(eps)):
        lc = float(log_cover(eps[k]))
        if lc < 0:
            raise ValueError("log covering numbers must be non-negative")
        total += 2.0 * (eps[k] + eps[k - 1]) * math.sqrt(lc / n)
    return total + eps[-1]


def local_contraction_bound(
    lam: float, theta: float, r: float, q: int, n: int, beta: float, rad_nq: float
) -> float:
    """Complexity bound for the loss class restricted to empirical risk <= r:
    ``lam * r**theta * (2**9 * sqrt(q) * log(e*beta*n*q)**1.5 * rad_nq + 1/sqrt(n))``.

    Only exponents theta in [0, 1/2] are admissible; larger exponents are
    rejected rather than extrapolated, since the bound provably fails there.
    """
    if not 0.0 <= theta <= 0.5:
        raise NumericDomainError(f"theta={theta} outside [0, 1/2]; bound does not extend")
    if not r > 0:
        raise ValueError("r must be positive")
    if lam <= 0 or beta < 1 or rad_nq < 0 or min(n, q) < 1:
        raise ValueError("need lam > 0, beta >= 1, rad_nq >= 0, n, q >= 1")
    logf = math.log(math.e * beta * n * q) ** 1.5
    return lam * r**theta * (
        CONTRACTION_CONSTANT * math.sqrt(q) * logf * rad_nq + 1.0 / math.sqrt(n)
    )
