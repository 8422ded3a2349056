"""Worst-case regression family and the minimax lower-bound experiment.

The hard family lives on a finite support of ``2n`` abstract points.  A hidden
sign vector ``sigma`` defines a target function whose first output coordinate
is ``delta_gap * sigma_r`` on point ``r`` (all other coordinates zero), with
``delta_gap = sqrt(kappa / (2n))``.  Inputs are uniform over the support and
labels are noiseless, so the problem is realizable: the target itself has zero
risk.  Risk is measured with the clipped power loss
:class:`~mobound.losses.MinimaxPowerLoss`.

Any learner that sees ``n`` samples misses about half the support and must
guess the hidden signs there, which forces mean risk above the envelope
``2**-8 * (lam * sqrt(kappa / n))**(1/(1-theta))``.  The experiment exhibits
this for specific learners; the theory quantifies over all algorithms, which a
simulation cannot do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .losses import MinimaxPowerLoss

__all__ = [
    "MinimaxInstance",
    "LEARNERS",
    "sample_dataset",
    "true_risk",
    "lower_envelope",
    "run_experiment",
    "LearnerResult",
]


@dataclass(frozen=True)
class MinimaxInstance:
    lam: float
    theta: float
    n: int
    q: int
    kappa: float
    sigma: np.ndarray  # (2n,) signs

    def __post_init__(self):
        if not self.lam >= 1.0:
            raise ValueError("lam must be >= 1")
        if not 0.0 <= self.theta <= 0.5:
            raise ValueError("theta must lie in [0, 1/2]")
        if self.n < 1 or self.q < 1:
            raise ValueError("n and q must be >= 1")
        if not 1.0 <= self.kappa <= self.n / self.lam**2:
            raise ValueError(f"kappa must lie in [1, n/lam**2] = [1, {self.n / self.lam**2}]")
        if self.sigma.shape != (2 * self.n,) or not np.isin(self.sigma, (-1.0, 1.0)).all():
            raise ValueError("sigma must be a sign vector of length 2n")

    @property
    def delta_gap(self) -> float:
        return math.sqrt(self.kappa / (2 * self.n))

    @property
    def support_size(self) -> int:
        return 2 * self.n

    def target_matrix(self) -> np.ndarray:
        """Hidden target outputs on the support, shape (2n, q)."""
        T = np.zeros((2 * self.n, self.q))
        T[:, 0] = self.delta_gap * self.sigma
        return T

    def loss(self) -> MinimaxPowerLoss:
        return MinimaxPowerLoss(self.lam, self.theta)

    @classmethod
    def draw(cls, lam, theta, n, q, kappa, rng) -> "MinimaxInstance":
        sigma = rng.integers(0, 2, size=2 * n) * 2.0 - 1.0
        return cls(lam=lam, theta=theta, n=n, q=q, kappa=kappa, sigma=sigma)


def sample_dataset(inst: MinimaxInstance, rng) -> tuple:
    """Draw ``n`` i.i.d. (point index, label vector) pairs: indices uniform on
    the support, labels equal to the hidden target there (noiseless).
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.Generator(np.random.PCG64(int(rng)))
    idx = rng.integers(0, inst.support_size, size=inst.n)
    return idx, inst.target_matrix()[idx]


def true_risk(inst: MinimaxInstance, predictions: np.ndarray) -> float:
    """Exact population risk of a predictor given as its (2n, q) value table."""
    predictions = np.asarray(predictions, dtype=float)
    if predictions.shape != (inst.support_size, inst.q):
        raise ValueError(f"predictions must have shape {(inst.support_size, inst.q)}")
    loss = inst.loss()
    return float(loss.values(predictions, inst.target_matrix()).mean())


def _predict_oracle(inst, idx, labels):
    return inst.target_matrix()


def _predict_constant_zero(inst, idx, labels):
    return np.zeros((inst.support_size, inst.q))


def _predict_erm_match_observed(inst, idx, labels):
    # one empirical risk minimizer among many: interpolate the observations,
    # predict zero on unseen support points
    P = np.zeros((inst.support_size, inst.q))
    P[idx] = labels
    return P


LEARNERS = {
    "erm_match_observed": _predict_erm_match_observed,
    "constant_zero": _predict_constant_zero,
    "oracle": _predict_oracle,
}


def lower_envelope(lam: float, theta: float, n: int, kappa: float) -> float:
    """Minimax floor ``2**-8 * (lam * sqrt(kappa/n))**(1/(1-theta))`` that the
    mean risk of every learner must respect.
    """
    return 2.0**-8 * (lam * math.sqrt(kappa / n)) ** (1.0 / (1.0 - theta))


@dataclass(frozen=True)
class LearnerResult:
    learner: str
    mean_risk: float
    std_error: float
    trials: int


def run_experiment(
    lam: float,
    theta: float,
    n: int,
    q: int,
    kappa: float,
    trials: int,
    rng_seed: int = 0,
    learners=("erm_match_observed", "constant_zero", "oracle"),
) -> dict:
    """Mean true risk of each learner over independent (sigma, dataset) draws,
    reported with standard errors next to the lower envelope.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    unknown = set(learners) - set(LEARNERS)
    if unknown:
        raise ValueError(f"unknown learners: {sorted(unknown)}")
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    risks = {name: np.empty(trials) for name in learners}
    for t in range(trials):
        inst = MinimaxInstance.draw(lam, theta, n, q, kappa, rng)
        idx, labels = sample_dataset(inst, rng)
        for name in learners:
            risks[name][t] = true_risk(inst, LEARNERS[name](inst, idx, labels))

    results = {}
    for name in learners:
        r = risks[name]
        se = float(r.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        results[name] = LearnerResult(name, float(r.mean()), se, trials)
    return {
        "lam": lam,
        "theta": theta,
        "n": n,
        "q": q,
        "kappa": kappa,
        "trials": trials,
        "rng_seed": rng_seed,
        "lower_envelope": lower_envelope(lam, theta, n, kappa),
        "results": results,
    }
