"""Functional gradient boosting of l1-constrained multi-output trees.

The trained model is a weighted sum ``f = sum_t alpha_t * h_t`` of trees from
the constrained class, with a hard total-weight budget ``sum_t alpha_t <=
beta``.  Budget membership is what makes a trained ensemble certifiable: the
risk certificate emitted by :mod:`mobound.bounds` is valid for every member of
this class, so it holds for the returned model by construction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .losses import Loss, parse_loss
from .trees import MultiTree, TreeConfig, fit_tree

__all__ = ["Ensemble", "TrainConfig", "train", "empirical_risk"]

BUDGET_SLACK = 1e-12


@dataclass
class Ensemble:
    stages: list  # [(alpha_t, MultiTree), ...]
    beta: float
    loss: Loss
    q: int
    d: int
    train_config: dict | None = None

    def __post_init__(self):
        total = sum(a for a, _ in self.stages)
        if total > self.beta + BUDGET_SLACK:
            raise ValueError(f"stage weights sum to {total}, over budget {self.beta}")
        for a, tree in self.stages:
            if a <= 0:
                raise ValueError("stage weights must be positive")
            if tree.q != self.q or tree.d != self.d:
                raise ValueError("all trees must share the ensemble's q and d")
            tree.validate()

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros((X.shape[0], self.q))
        for alpha, tree in self.stages:
            out += alpha * tree.predict_batch(X)
        return out

    def predict(self, x) -> np.ndarray:
        return self.predict_batch(np.asarray(x, dtype=float)[None, :])[0]

    @property
    def alpha_tau_pairs(self) -> list:
        return [(alpha, tree.tau) for alpha, tree in self.stages]

    @property
    def max_leaves(self) -> int:
        return max((tree.p for _, tree in self.stages), default=2)

    def to_dict(self) -> dict:
        doc = {
            "schema": "mobound-model-v1",
            "beta": self.beta,
            "loss": self.loss.spec_string(),
            "q": self.q,
            "d": self.d,
            "stages": [
                {"alpha": float(a), "tree": tree.to_dict()} for a, tree in self.stages
            ],
            "train_config": self.train_config,
        }
        doc["content_hash"] = _content_hash(doc)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Ensemble":
        expected = doc.get("content_hash")
        if expected is not None and _content_hash(doc) != expected:
            raise ValueError("model content hash mismatch")
        return cls(
            stages=[(s["alpha"], MultiTree.from_dict(s["tree"])) for s in doc["stages"]],
            beta=float(doc["beta"]),
            loss=parse_loss(doc["loss"]),
            q=int(doc["q"]),
            d=int(doc["d"]),
            train_config=doc.get("train_config"),
        )

    def content_hash(self) -> str:
        return self.to_dict()["content_hash"]


def _content_hash(doc: dict) -> str:
    body = {k: v for k, v in doc.items() if k != "content_hash"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class TrainConfig:
    rounds: int
    leaves: int = 4
    tau: float = 1.0
    tau_decay: float = 1.0  # per-round multiplier on tau
    beta: float = 2.0
    shrinkage: float = 0.5
    min_samples_leaf: int = 1
    split_candidates: str = "exhaustive"
    n_quantiles: int = 32
    patience: int = 0  # 0 disables early stopping on the monitored value
    certify_aware: bool = False  # monitor the certificate bound instead of risk
    delta: float = 0.05  # confidence used by certify-aware monitoring
    rng_seed: int = 0
    max_halvings: int = 20

    def __post_init__(self):
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if not 0.0 < self.shrinkage <= 1.0:
            raise ValueError("shrinkage must lie in (0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if not 0.0 < self.tau_decay <= 1.0:
            raise ValueError("tau_decay must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "leaves": self.leaves,
            "tau": self.tau,
            "tau_decay": self.tau_decay,
            "beta": self.beta,
            "shrinkage": self.shrinkage,
            "min_samples_leaf": self.min_samples_leaf,
            "split_candidates": self.split_candidates,
            "n_quantiles": self.n_quantiles,
            "patience": self.patience,
            "certify_aware": self.certify_aware,
            "delta": self.delta,
            "rng_seed": self.rng_seed,
            "max_halvings": self.max_halvings,
        }


def empirical_risk(ens: Ensemble, data: Dataset, loss: Loss | None = None) -> float:
    """Arithmetic mean of per-example losses of the ensemble on the data."""
    if data.n == 0:
        raise ValueError("empirical risk of an empty dataset is undefined")
    loss = loss or ens.loss
    F = ens.predict_batch(data.X)
    return float(loss.values(F, data.Y).mean())


def train(data: Dataset, loss: Loss, cfg: TrainConfig) -> Ensemble:
    """Boost trees on the negated loss gradient for up to ``cfg.rounds`` rounds.

    Each round fits a tree to the per-example negative gradients, then picks
    the stage weight by a backtracking line search (halving from 1, at most
    ``cfg.max_halvings`` halvings, accepting the first strict risk decrease),
    scaled by the shrinkage and capped by the remaining budget.  Training stops
    early when the budget is exhausted, no step decreases the risk, or the
    monitored value (risk, or the certificate bound in certify-aware mode)
    fails to improve for ``cfg.patience`` consecutive rounds.

    Training is deterministic: identical data, config and seed reproduce a
    bit-identical serialized model.
    """
    if data.n == 0:
        raise ValueError("cannot train on empty data")
    if not loss.differentiable:
        raise ValueError(f"loss {loss.spec_string()!r} has no gradient; cannot boost")

    X, Y = data.X, data.Y
    n, q = data.n, data.q
    F = np.zeros((n, q))
    risk = float(loss.values(F, Y).mean())

    monitor_bound = None
    if cfg.certify_aware:
        from .bounds import certificate_bound_value  # deferred: bounds imports losses

        params = loss.declared_params()
        if not np.isfinite(params.bound):
            raise ValueError("certify-aware training needs a loss with finite bound")

        def monitor_bound(stages, emp):
            return certificate_bound_value(
                emp_risk=emp,
                alpha_tau_pairs=[(a, t.tau) for a, t in stages],
                p=cfg.leaves,
                n=n,
                q=q,
                d=data.d,
                beta=max(cfg.beta, 1.0),
                lam=params.lam,
                theta=params.theta,
                loss_bound=params.bound,
                delta=cfg.delta,
            )

    stages = []
    spent = 0.0
    best_monitored = monitor_bound(stages, risk) if cfg.certify_aware else risk
    stall = 0
    for t in range(cfg.rounds):
        remaining = cfg.beta - spent
        if remaining <= BUDGET_SLACK:
            break
        G = -loss.grads(F, Y)
        tree_cfg = TreeConfig(
            leaves=cfg.leaves,
            tau=cfg.tau * cfg.tau_decay**t,
            min_samples_leaf=cfg.min_samples_leaf,
            split_candidates=cfg.split_candidates,
            n_quantiles=cfg.n_quantiles,
        )
        tree = fit_tree(X, G, None, tree_cfg)
        H = tree.predict_batch(X)

        alpha, new_risk = None, None
        step = 1.0
        for _ in range(cfg.max_halvings):
            a = min(cfg.shrinkage * step, remaining)
            cand = float(loss.values(F + a * H, Y).mean())
            if cand < risk:
                alpha, new_risk = a, cand
                break
            step /= 2.0
        if alpha is None:
            break

        stages.append((alpha, tree))
        F += alpha * H
        spent += alpha
        risk = new_risk
        assert spent <= cfg.beta + BUDGET_SLACK

        if cfg.patience > 0:
            monitored = monitor_bound(stages, risk) if cfg.certify_aware else risk
            if monitored < best_monitored:
                best_monitored = monitored
                stall = 0
            else:
                stall += 1
                if stall >= cfg.patience:
                    break

    return Ensemble(
        stages=stages,
        beta=cfg.beta,
        loss=loss,
        q=q,
        d=data.d,
        train_config=cfg.to_dict(),
    )
