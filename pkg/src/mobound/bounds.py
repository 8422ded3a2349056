"""Generalization-bound formulas and risk-certificate assembly.

All bound evaluators are pure functions of scalars.  A certificate records two
routes to a high-probability risk bound for a trained ensemble:

* the fully explicit route with pinned numerical constants
  (``emp + 90*(rhat + r0) + 4*sqrt(emp*(rhat + r0))``), which is the honest
  certified value, and
* the C-form ``emp + c0*(sqrt(emp*C) + C)`` whose leading constant ``c0`` is
  not pinned by the theory; it defaults to 1 and is recorded in the output.

Certificates always use the analytic tree-class complexity bound, never a
data-dependent Monte-Carlo estimate: the certified statement quantifies over
worst-case data.
"""

from __future__ import annotations

import datetime
import math
from dataclasses import dataclass

from .complexity import CONTRACTION_CONSTANT, tree_class_rad_bound
from .errors import NumericDomainError

__all__ = [
    "BoundInputs",
    "Certificate",
    "r0",
    "rhat",
    "gamma",
    "bound_uniform_explicit",
    "bound_erm_explicit",
    "bound_lipschitz_comparison",
    "bernstein_upper",
    "bernstein_upper_coarse",
    "ensemble_gamma",
    "certificate_bound_value",
    "certify",
    "CERTIFICATE_SCHEMA",
    "COROLLARY_CONSTANTS",
]

CERTIFICATE_SCHEMA = "mobound-certificate-v1"
COROLLARY_CONSTANTS = (90, 4, 100, 9)  # uniform: 90, 4*sqrt; ERM: 100, 9*sqrt


def _require(cond: bool, msg: str):
    if not cond:
        raise ValueError(msg)


def _check_n(n: int):
    if n < 3:
        raise NumericDomainError(f"n must be >= 3 for the log log n term, got {n}")


@dataclass(frozen=True)
class BoundInputs:
    """Scalar inputs shared by the bound evaluators."""

    n: int
    q: int
    delta: float
    lam: float
    theta: float
    beta: float  # sup bound of the function class, >= 1
    loss_bound: float  # range bound B of the loss, >= 1
    rad_nq: float  # complexity bound for the projected class

    def __post_init__(self):
        _check_n(self.n)
        _require(self.q >= 1, "q must be >= 1")
        _require(0.0 < self.delta < 1.0, "delta must lie in (0, 1)")
        _require(self.lam > 0, "lam must be positive")
        _require(0.0 <= self.theta <= 0.5, "theta must lie in [0, 1/2]")
        _require(self.beta >= 1.0, "beta must be >= 1")
        _require(self.loss_bound >= 1.0, "loss_bound must be >= 1")
        _require(self.rad_nq >= 0.0, "rad_nq must be >= 0")


def r0(loss_bound: float, delta: float, n: int) -> float:
    """Confidence radius ``B * (log(1/delta) + 6*log(log(n))) / n``."""
    _check_n(n)
    _require(0.0 < delta < 1.0, "delta must lie in (0, 1)")
    _require(loss_bound > 0, "loss_bound must be positive")
    return loss_bound * (math.log(1.0 / delta) + 6.0 * math.log(math.log(n))) / n


def rhat(lam: float, theta: float, q: int, n: int, beta: float, rad_nq: float) -> float:
    """Fixed point of the local contraction bound: the largest solution of
    ``lam * r**theta * (2**9*sqrt(q)*log(e*beta*n*q)**1.5*rad + 1/sqrt(n)) = r``,
    in closed form ``(lam * (...))**(1/(1-theta))``.
    """
    if not 0.0 <= theta <= 0.5:
        raise NumericDomainError(f"theta={theta} outside [0, 1/2]")
    _require(lam > 0 and beta >= 1 and rad_nq >= 0 and min(n, q) >= 1, "bad arguments")
    inner = lam * (
        CONTRACTION_CONSTANT
        * math.sqrt(q)
        * math.log(math.e * beta * n * q) ** 1.5
        * rad_nq
        + 1.0 / math.sqrt(n)
    )
    return inner ** (1.0 / (1.0 - theta))


def gamma(inputs: BoundInputs) -> float:
    """Complexity term of the optimistic uniform bound:
    ``(lam*(sqrt(q)*log(e*beta*n*q)**1.5*rad + 1/sqrt(n)))**(1/(1-theta))
    + (B/n)*(log(1/delta) + log(log(n)))``.
    """
    main = (
        inputs.lam
        * (
            math.sqrt(inputs.q)
            * math.log(math.e * inputs.beta * inputs.n * inputs.q) ** 1.5
            * inputs.rad_nq
            + 1.0 / math.sqrt(inputs.n)
        )
    ) ** (1.0 / (1.0 - inputs.theta))
    tail = (
        inputs.loss_bound
        / inputs.n
        * (math.log(1.0 / inputs.delta) + math.log(math.log(inputs.n)))
    )
    return main + tail


def bound_uniform_explicit(emp_risk: float, rhat_val: float, r0_val: float) -> float:
    """Explicit-constant uniform risk bound
    ``emp + 90*(rhat + r0) + 4*sqrt(emp*(rhat + r0))``.
    """
    _require(min(emp_risk, rhat_val, r0_val) >= 0, "inputs must be non-negative")
    radius = rhat_val + r0_val
    return emp_risk + 90.0 * radius + 4.0 * math.sqrt(emp_risk * radius)


def bound_erm_explicit(risk_star: float, rhat_val: float, r0_val: float) -> float:
    """Explicit-constant excess-risk bound for empirical risk minimization:
    ``E* + 9*sqrt(E*(rhat + r0)) + 100*(rhat + r0)``.
    """
    _require(min(risk_star, rhat_val, r0_val) >= 0, "inputs must be non-negative")
    radius = rhat_val + r0_val
    return risk_star + 9.0 * math.sqrt(risk_star * radius) + 100.0 * radius


def bound_lipschitz_comparison(
    emp_risk: float,
    lam_lipschitz: float,
    q: int,
    n: int,
    beta: float,
    rad_nq: float,
    loss_bound: float,
    delta: float,
    c2: float = 1.0,
) -> float:
    """Additive slow-rate comparison bound ``emp + c2*J + B*sqrt(log(1/delta)/n)``
    with ``J = lam*(sqrt(q)*log(e*beta*n*q)**1.5*rad + 1/sqrt(n))``.

    ``lam_lipschitz`` is a plain sup-norm Lipschitz constant; for a bounded
    loss with declared ``(lam, theta)`` use ``relax_theta(params, 0.0).lam``.
    """
    _require(0.0 < delta < 1.0, "delta must lie in (0, 1)")
    _require(min(lam_lipschitz, loss_bound) > 0 and beta >= 1, "bad arguments")
    j = lam_lipschitz * (
        math.sqrt(q) * math.log(math.e * beta * n * q) ** 1.5 * rad_nq
        + 1.0 / math.sqrt(n)
    )
    return emp_risk + c2 * j + loss_bound * math.sqrt(math.log(1.0 / delta) / n)


def bernstein_upper(mu: float, loss_bound: float, n: int, delta: float) -> float:
    """Bernstein deviation bound ``mu + sqrt(2*mu*B*log(1/delta)/n) + B*log(1/delta)/n``."""
    _require(mu >= 0 and loss_bound > 0 and n >= 1, "bad arguments")
    _require(0.0 < delta <= 1.0, "delta must lie in (0, 1]")
    t = math.log(1.0 / delta)
    return mu + math.sqrt(2.0 * mu * loss_bound * t / n) + loss_bound * t / n


def bernstein_upper_coarse(mu: float, loss_bound: float, n: int, delta: float) -> float:
    """Coarse form ``2*mu + 3*B*log(1/delta)/(2*n)`` dominating :func:`bernstein_upper`."""
    _require(mu >= 0 and loss_bound > 0 and n >= 1, "bad arguments")
    _require(0.0 < delta <= 1.0, "delta must lie in (0, 1]")
    return 2.0 * mu + 1.5 * loss_bound * math.log(1.0 / delta) / n


def ensemble_gamma(
    alpha_tau_pairs,
    p: int,
    n: int,
    q: int,
    d: int,
    beta: float,
    lam: float,
    theta: float,
    loss_bound: float,
    delta: float,
) -> float:
    """Complexity term of the tree-ensemble bound:
    ``((lam/sqrt(n)) * (sqrt(p)*log(3*n*q*d*beta)**2 * sum_t alpha_t*tau_t + 1))**(1/(1-theta))
    + (B/n)*(log(1/delta) + log(log(n)))``.

    The same ``beta`` serves as the stage-weight budget and the scale inside
    the logarithm.
    """
    _check_n(n)
    if not 0.0 <= theta <= 0.5:
        raise NumericDomainError(f"theta={theta} outside [0, 1/2]")
    _require(p >= 2 and min(q, d) >= 1, "p must be >= 2 and q, d >= 1")
    _require(lam > 0 and beta >= 1 and loss_bound >= 1, "bad arguments")
    _require(0.0 < delta < 1.0, "delta must lie in (0, 1)")
    alphas = [a for a, _ in alpha_tau_pairs]
    _require(all(a > 0 for a in alphas), "stage weights must be positive")
    if sum(alphas) > beta + 1e-12:
        raise ValueError(f"stage weights sum to {sum(alphas)}, over budget {beta}")
    weighted_tau = sum(a * t for a, t in alpha_tau_pairs)
    main = (
        lam
        / math.sqrt(n)
        * (math.sqrt(p) * math.log(3.0 * n * q * d * beta) ** 2 * weighted_tau + 1.0)
    ) ** (1.0 / (1.0 - theta))
    tail = loss_bound / n * (math.log(1.0 / delta) + math.log(math.log(n)))
    return main + tail


def certificate_bound_value(
    emp_risk: float,
    alpha_tau_pairs,
    p: int,
    n: int,
    q: int,
    d: int,
    beta: float,
    lam: float,
    theta: float,
    loss_bound: float,
    delta: float,
) -> float:
    """Explicit-constant certified risk bound for an ensemble: the uniform
    bound evaluated at the analytic tree-class complexity with aggregate
    budget ``sum_t alpha_t * tau_t``.
    """
    weighted_tau = sum(a * t for a, t in alpha_tau_pairs)
    rad = tree_class_rad_bound(p, weighted_tau, d, n, q) if weighted_tau > 0 else 0.0
    rhat_val = rhat(lam, theta, q, n, beta, rad)
    r0_val = r0(loss_bound, delta, n)
    return bound_uniform_explicit(emp_risk, rhat_val, r0_val)


@dataclass(frozen=True)
class Certificate:
    """All inputs and outputs of one risk-bound computation, serializable."""

    inputs: BoundInputs
    empirical_risk: float
    gamma: float
    rhat: float
    r0: float
    bound_explicit: float
    bound_cform: float
    ensemble_term: float | None
    c0: float
    model_hash: str | None
    created: str
    version: str = CERTIFICATE_SCHEMA

    def __post_init__(self):
        for v in (self.bound_explicit, self.bound_cform):
            if not (math.isfinite(v) and v >= self.empirical_risk):
                raise ValueError("certificate bounds must be finite and >= empirical risk")

    def to_dict(self) -> dict:
        return {
            "schema": self.version,
            "inputs": {
                "n": self.inputs.n,
                "q": self.inputs.q,
                "delta": self.inputs.delta,
                "lambda": self.inputs.lam,
                "theta": self.inputs.theta,
                "beta": self.inputs.beta,
                "loss_bound": self.inputs.loss_bound,
                "rad_nq": self.inputs.rad_nq,
            },
            "empirical_risk": self.empirical_risk,
            "gamma": self.gamma,
            "rhat": self.rhat,
            "r0": self.r0,
            "bound_explicit": self.bound_explicit,
            "bound_cform": self.bound_cform,
            "ensemble_term": self.ensemble_term,
            "constants": {
                "c0": self.c0,
                "contraction": CONTRACTION_CONSTANT,
                "corollary": list(COROLLARY_CONSTANTS),
            },
            "model_hash": self.model_hash,
            "created": self.created,
        }


def certify(ens, data, delta: float, loss=None, c0: float = 1.0) -> Certificate:
    """Assemble a risk certificate for a trained ensemble on its training data.

    Requires a loss with a finite declared range bound (clip an unbounded loss
    first).  Deterministic apart from the ``created`` timestamp.
    """
    from .boosting import empirical_risk as _emp  # local import avoids a cycle

    loss = loss or ens.loss
    params = loss.declared_params()
    if not math.isfinite(params.bound):
        raise ValueError(
            f"loss {loss.spec_string()!r} has an unbounded range; wrap it in "
            "clip(...) to certify"
        )
    emp = _emp(ens, data, loss)
    n, q, d = data.n, ens.q, ens.d
    beta = max(ens.beta, 1.0)
    loss_bound = max(params.bound, 1.0)
    pairs = ens.alpha_tau_pairs
    p = ens.max_leaves
    weighted_tau = sum(a * t for a, t in pairs)
    rad = tree_class_rad_bound(p, weighted_tau, d, n, q) if weighted_tau > 0 else 0.0

    inputs = BoundInputs(
        n=n,
        q=q,
        delta=delta,
        lam=params.lam,
        theta=params.theta,
        beta=beta,
        loss_bound=loss_bound,
        rad_nq=rad,
    )
    gamma_val = gamma(inputs)
    rhat_val = rhat(params.lam, params.theta, q, n, beta, rad)
    r0_val = r0(loss_bound, delta, n)
    ens_term = ensemble_gamma(
        pairs, p, n, q, d, beta, params.lam, params.theta, loss_bound, delta
    )
    return Certificate(
        inputs=inputs,
        empirical_risk=emp,
        gamma=gamma_val,
        rhat=rhat_val,
        r0=r0_val,
        bound_explicit=bound_uniform_explicit(emp, rhat_val, r0_val),
        bound_cform=emp + c0 * (math.sqrt(emp * ens_term) + ens_term),
        ensemble_term=ens_term,
        c0=c0,
        model_hash=ens.content_hash(),
        created=datetime.datetime.now(datetime.timezone.utc).isoformat(),
    )
