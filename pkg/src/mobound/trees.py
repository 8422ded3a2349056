"""Axis-aligned multi-output regression trees with l1-constrained leaves.

A tree routes an input through binary single-feature splits to one of exactly
``p`` leaves and returns that leaf's weight row ``w`` in R**q, which satisfies
both ``||w||_1 <= tau`` and ``||w||_inf <= 1``.  Trees are grown greedily on
least-squares residuals and leaf rows are obtained by projecting the weighted
residual mean onto the constraint set.

Routing tie rule: a feature value equal to the threshold goes left.  Trees are
padded with trivial splits (identical children) so the leaf count is exactly
``p`` regardless of how many informative splits the data supports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["MultiTree", "TreeConfig", "project_l1_box", "fit_tree"]

CONSTRAINT_SLACK = 1e-12


@dataclass(frozen=True)
class MultiTree:
    """Immutable fitted tree.

    Child references in ``left``/``right``: values >= 0 index another internal
    node, negative values ``c`` encode leaf ``~c`` (so leaf 0 is -1, leaf 1 is
    -2, ...).  Node 0 is the root; a tree always has p - 1 internal nodes and
    p >= 2 leaves.
    """

    feature: np.ndarray  # (p-1,) int
    threshold: np.ndarray  # (p-1,) float
    left: np.ndarray  # (p-1,) int
    right: np.ndarray  # (p-1,) int
    leaves: np.ndarray  # (p, q) float
    tau: float
    d: int

    @property
    def p(self) -> int:
        return self.leaves.shape[0]

    @property
    def q(self) -> int:
        return self.leaves.shape[1]

    def validate(self):
        p = self.p
        if p < 2 or len(self.feature) != p - 1:
            raise ValueError("tree must have exactly p - 1 internal nodes, p >= 2")
        if np.abs(self.leaves).sum(axis=1).max() > self.tau + CONSTRAINT_SLACK:
            raise ValueError("leaf violates the l1 budget")
        if np.abs(self.leaves).max(initial=0.0) > 1.0 + CONSTRAINT_SLACK:
            raise ValueError("leaf violates the box bound")
        if self.feature.min() < 0 or self.feature.max() >= self.d:
            raise ValueError("split feature out of range")
        # every internal node and leaf referenced exactly once apart from the root
        refs = np.concatenate([self.left, self.right])
        internal = refs[refs >= 0]
        leaves = ~refs[refs < 0]
        if sorted(internal) != list(range(1, p - 1)) or sorted(leaves) != list(range(p)):
            raise ValueError("children do not form a binary tree on p leaves")

    def leaf_indices(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ValueError(f"expected inputs of shape (n, {self.d})")
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            rows = np.nonzero(node >= 0)[0]
            if rows.size == 0:
                return ~node
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])

    def leaf_index(self, x) -> int:
        return int(self.leaf_indices(np.asarray(x, dtype=float)[None, :])[0])

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return self.leaves[self.leaf_indices(X)]

    def predict(self, x) -> np.ndarray:
        return self.predict_batch(np.asarray(x, dtype=float)[None, :])[0]

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "q": self.q,
            "d": self.d,
            "tau": self.tau,
            "nodes": [
                {
                    "feature": int(f),
                    "threshold": float(t),
                    "left": int(l),
                    "right": int(r),
                }
                for f, t, l, r in zip(self.feature, self.threshold, self.left, self.right)
            ],
            "leaves": [[float(w) for w in row] for row in self.leaves],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MultiTree":
        nodes = doc["nodes"]
        tree = cls(
            feature=np.array([n["feature"] for n in nodes], dtype=np.int64),
            threshold=np.array([n["threshold"] for n in nodes], dtype=float),
            left=np.array([n["left"] for n in nodes], dtype=np.int64),
            right=np.array([n["right"] for n in nodes], dtype=np.int64),
            leaves=np.array(doc["leaves"], dtype=float),
            tau=float(doc["tau"]),
            d=int(doc["d"]),
        )
        tree.validate()
        return tree


@dataclass
class TreeConfig:
    leaves: int = 4  # exact leaf count p
    tau: float = 1.0
    min_samples_leaf: int = 1
    split_candidates: str = "exhaustive"  # or "quantile"
    n_quantiles: int = 32

    def __post_init__(self):
        if self.leaves < 2:
            raise ValueError("leaves must be >= 2")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.split_candidates not in ("exhaustive", "quantile"):
            raise ValueError("split_candidates must be 'exhaustive' or 'quantile'")


def project_l1_box(v, tau: float) -> np.ndarray:
    """Euclidean projection onto ``{w : ||w||_1 <= tau, ||w||_inf <= 1}``.

    The projection is the soft threshold ``sign(v) * min(1, max(0, |v| - t))``
    where t >= 0 is the smallest shift making the l1 budget feasible; t is
    found exactly by a breakpoint scan, so projecting a feasible vector is the
    identity and the operation is idempotent.
    """
    v = np.asarray(v, dtype=float)
    if not np.isfinite(v).all():
        raise ValueError("cannot project a non-finite vector")
    if not tau > 0:
        raise ValueError("tau must be positive")
    clipped = np.clip(v, -1.0, 1.0)
    # roundoff slack keeps the projection idempotent: a projected vector's l1
    # sum can exceed tau by a few ulps
    if np.abs(clipped).sum() <= tau + CONSTRAINT_SLACK * max(1.0, float(np.abs(v).max(initial=0.0))):
        return clipped

    a = np.abs(v)

    def budget(t):
        return np.minimum(1.0, np.maximum(0.0, a - t)).sum()

    # budget(t) is piecewise linear and non-increasing; slopes change only at
    # |v_i| and |v_i| - 1
    bps = np.unique(np.concatenate([a, a - 1.0, [0.0]]))
    bps = bps[bps >= 0.0]
    vals = np.array([budget(t) for t in bps])
    hi = int(np.searchsorted(-vals, -tau))  # first breakpoint with budget <= tau
    if vals[hi] == tau:
        t_star = bps[hi]
    else:
        lo = hi - 1
        slope = (vals[hi] - vals[lo]) / (bps[hi] - bps[lo])
        t_star = bps[lo] + (tau - vals[lo]) / slope
    return np.sign(v) * np.minimum(1.0, np.maximum(0.0, a - t_star))


# ---------------------------------------------------------------------------
# greedy fitting

class _Leaf:
    __slots__ = ("idx", "value", "best", "slot")

    def __init__(self, idx, value, best, slot):
        self.idx = idx  # sample indices reaching this leaf
        self.value = value  # projected leaf row
        self.best = best  # (gain, feature, threshold) or None
        self.slot = slot  # (node_id, side) or None for the root


def _node_value(R, w, idx, tau):
    if idx.size == 0:
        return None
    mean = (w[idx, None] * R[idx]).sum(axis=0) / w[idx].sum()
    return project_l1_box(mean, tau)


def _best_split(X, R, w, idx, cfg):
    """Best (gain, feature, threshold) for one node, or None.

    Gain is the decrease of the weighted squared residual summed over all
    outputs; ties break toward the lower feature index then lower threshold.
    """
    n = idx.size
    if n < 2 * cfg.min_samples_leaf:
        return None
    Xn, Rn, wn = X[idx], R[idx], w[idx]
    W_tot = wn.sum()
    S_tot = (wn[:, None] * Rn).sum(axis=0)
    base = S_tot @ S_tot / W_tot

    best = None
    for f in range(X.shape[1]):
        order = np.argsort(Xn[:, f], kind="stable")
        xs = Xn[order, f]
        if xs[0] == xs[-1]:
            continue
        ws = wn[order]
        cw = np.cumsum(ws)
        cs = np.cumsum(ws[:, None] * Rn[order], axis=0)

        # candidate prefix lengths: boundaries between distinct values,
        # respecting the minimum leaf size
        cuts = np.nonzero(xs[1:] > xs[:-1])[0] + 1
        cuts = cuts[(cuts >= cfg.min_samples_leaf) & (cuts <= n - cfg.min_samples_leaf)]
        if cfg.split_candidates == "quantile" and cuts.size > cfg.n_quantiles:
            pick = np.linspace(0, cuts.size - 1, cfg.n_quantiles).round().astype(int)
            cuts = cuts[np.unique(pick)]
        if cuts.size == 0:
            continue

        Wl = cw[cuts - 1]
        Sl = cs[cuts - 1]
        Sr = S_tot - Sl
        gains = (Sl * Sl).sum(axis=1) / Wl + (Sr * Sr).sum(axis=1) / (W_tot - Wl) - base
        k = int(np.argmax(gains))
        if best is None or gains[k] > best[0]:
            lo, hi_v = xs[cuts[k] - 1], xs[cuts[k]]
            t = (lo + hi_v) / 2.0
            if t >= hi_v:  # midpoint rounded up between adjacent floats
                t = lo
            best = (float(gains[k]), f, float(t))
    return best


def fit_tree(X, R, weights=None, cfg: TreeConfig | None = None) -> MultiTree:
    """Grow a tree on residuals ``R`` by greedy best-first least-squares splits.

    Each step splits the leaf whose best split most reduces the weighted
    squared residual; growth stops at ``cfg.leaves`` leaves and the tree is
    padded with trivial splits if fewer informative splits exist.  Leaf rows
    are the projected weighted residual means.
    """
    cfg = cfg or TreeConfig()
    X = np.asarray(X, dtype=float)
    R = np.asarray(R, dtype=float)
    if X.ndim != 2 or R.ndim != 2 or X.shape[0] != R.shape[0]:
        raise ValueError("X must be (n, d) and R must be (n, q) with matching n")
    if X.shape[0] == 0:
        raise ValueError("cannot fit a tree on empty data")
    if not (np.isfinite(X).all() and np.isfinite(R).all()):
        raise ValueError("X and R must be finite")
    n, d = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,) or (w <= 0).any():
        raise ValueError("weights must be positive with one entry per row")

    feature, threshold, lefts, rights = [], [], [], []
    all_idx = np.arange(n)
    root = _Leaf(all_idx, _node_value(R, w, all_idx, cfg.tau), None, None)
    root.best = _best_split(X, R, w, all_idx, cfg)
    pending = [root]

    def attach(leaf, node_id):
        if leaf.slot is None:
            return  # root split; node_id is 0 by construction
        parent, side = leaf.slot
        (lefts if side == "L" else rights)[parent] = node_id

    def new_node(f, t):
        node_id = len(feature)
        feature.append(f)
        threshold.append(t)
        lefts.append(None)
        rights.append(None)
        return node_id

    while len(pending) < cfg.leaves:
        cands = [i for i, lf in enumerate(pending) if lf.best is not None]
        if not cands:
            break
        i = max(cands, key=lambda i: pending[i].best[0])
        leaf = pending[i]
        if leaf.best[0] <= 0.0:
            break
        gain, f, t = leaf.best
        node_id = new_node(f, t)
        attach(leaf, node_id)
        mask = X[leaf.idx, f] <= t
        li, ri = leaf.idx[mask], leaf.idx[~mask]
        lchild = _Leaf(li, _node_value(R, w, li, cfg.tau), None, (node_id, "L"))
        rchild = _Leaf(ri, _node_value(R, w, ri, cfg.tau), None, (node_id, "R"))
        lchild.best = _best_split(X, R, w, li, cfg)
        rchild.best = _best_split(X, R, w, ri, cfg)
        pending[i] = lchild
        pending.append(rchild)

    # pad to exactly cfg.leaves with trivial splits (all samples go left,
    # identical leaf rows, right child reachable by inputs beyond the data)
    while len(pending) < cfg.leaves:
        leaf = pending[-1]
        t = float(X[leaf.idx, 0].max()) if leaf.idx.size else 0.0
        node_id = new_node(0, t)
        attach(leaf, node_id)
        lchild = _Leaf(leaf.idx, leaf.value, None, (node_id, "L"))
        rchild = _Leaf(np.empty(0, dtype=np.int64), leaf.value, None, (node_id, "R"))
        pending[-1] = lchild
        pending.append(rchild)

    for leaf_id, leaf in enumerate(pending):
        if leaf.value is None:
            leaf.value = pending[0].value  # unreachable in practice
        if leaf.slot is None:  # single-leaf degenerate case cannot occur (p >= 2)
            raise AssertionError("root leaf left unsplit")
        parent, side = leaf.slot
        (lefts if side == "L" else rights)[parent] = ~leaf_id

    tree = MultiTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        left=np.array(lefts, dtype=np.int64),
        right=np.array(rights, dtype=np.int64),
        leaves=np.vstack([leaf.value for leaf in pending]),
        tau=cfg.tau,
        d=d,
    )
    tree.validate()
    return tree
