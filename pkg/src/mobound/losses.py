"""Multi-output loss functions with declared smoothness parameters.

Every loss in this module carries a declared triple ``(lam, theta, bound)``
asserting the self-bounding Lipschitz condition

    |L(u, y) - L(v, y)| <= lam * max(L(u, y), L(v, y))**theta * ||u - v||_inf

for all score vectors ``u, v`` and labels ``y``, together with a range bound
``L <= bound``.  ``theta = 0`` is a plain Lipschitz condition in the sup norm;
``theta = 1/2`` is the smoothness-like regime that drives fast-rate risk
certificates.  The declared parameters can be stress-tested with
:func:`check_sbl`, a randomized falsification engine.

Score vectors are length-``q`` and labels come in four flavours:

* class index ``y`` in ``1..q`` (multi-class),
* binary vector of length ``q`` with at most ``k`` ones (multi-label),
* real vector of length ``q`` (multi-target regression),
* sign ``y`` in ``{-1, +1}`` with ``q = 1`` (binary scoring).

Class indices are 1-based throughout, matching the CSV on-disk format.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._threads import thread_cap

__all__ = [
    "SblParams",
    "SblReport",
    "Loss",
    "ZeroOneLoss",
    "HardMarginLoss",
    "SmoothMarginLoss",
    "MultinomialLogisticLoss",
    "PickAllLabelsLoss",
    "SupNormLoss",
    "BoundedExponentialLoss",
    "MinimaxPowerLoss",
    "ClippedLoss",
    "margin",
    "relax_theta",
    "check_sbl",
    "parse_loss",
]


@dataclass(frozen=True)
class SblParams:
    """Declared self-bounding Lipschitz parameters ``(lam, theta)`` plus range bound."""

    lam: float
    theta: float
    bound: float  # sup of the loss; may be math.inf

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not self.bound > 0:
            raise ValueError(f"bound must be positive, got {self.bound}")


def relax_theta(params: SblParams, theta_new: float) -> SblParams:
    """Trade exponent for constant: a bounded loss keeps the condition at any
    smaller exponent ``theta_new`` with constant ``lam * bound**(theta - theta_new)``.
    """
    if not math.isfinite(params.bound):
        raise ValueError("relax_theta requires a finite range bound")
    if not 0.0 <= theta_new <= params.theta:
        raise ValueError(
            f"theta_new must lie in [0, {params.theta}], got {theta_new}"
        )
    lam_new = params.lam * params.bound ** (params.theta - theta_new)
    return SblParams(lam_new, theta_new, params.bound)


# ---------------------------------------------------------------------------
# shared helpers

def _as_scores(U, q=None):
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[None, :]
    if U.ndim != 2:
        raise ValueError(f"scores must be a vector or matrix, got ndim={U.ndim}")
    if q is not None and U.shape[1] != q:
        raise ValueError(f"score dimension {U.shape[1]} does not match q={q}")
    return U


def _logsumexp(U):
    # max-shift stabilization; rows of U are score vectors
    m = U.max(axis=1, keepdims=True)
    return m[:, 0] + np.log(np.exp(U - m).sum(axis=1))


def _softmax(U):
    m = U.max(axis=1, keepdims=True)
    e = np.exp(U - m)
    return e / e.sum(axis=1, keepdims=True)


def _class_labels(Y, n, q):
    Y = np.asarray(Y)
    if Y.shape != (n,):
        raise ValueError(f"expected {n} class labels, got shape {Y.shape}")
    Y = Y.astype(np.int64)
    if Y.min(initial=1) < 1 or Y.max(initial=1) > q:
        raise ValueError(f"class labels must lie in 1..{q}")
    return Y


def _margins(U, Y):
    """Margin of the labelled class: true score minus best competing score."""
    n, q = U.shape
    if q < 2:
        raise ValueError("margin requires q >= 2")
    rows = np.arange(n)
    true = U[rows, Y - 1]
    masked = U.copy()
    masked[rows, Y - 1] = -np.inf
    return true - masked.max(axis=1), masked


def margin(u, y: int) -> float:
    """Score of the true class minus the best competing score, ``y`` 1-based."""
    U = _as_scores(u)
    Y = _class_labels([y], 1, U.shape[1])
    return float(_margins(U, Y)[0][0])


# ---------------------------------------------------------------------------
# loss catalogue

class Loss:
    """Base class: vectorized evaluation/gradient plus declared parameters.

    ``values``/``grads`` operate on batches (rows of ``U`` are score vectors);
    ``value``/``grad`` are single-point conveniences.
    """

    label_kind = "class"  # "class" | "multilabel" | "regression" | "sign"
    differentiable = True

    def values(self, U, Y) -> np.ndarray:
        raise NotImplementedError

    def grads(self, U, Y) -> np.ndarray:
        raise NotImplementedError

    def declared_params(self) -> SblParams:
        raise NotImplementedError

    def spec_string(self) -> str:
        raise NotImplementedError

    def value(self, u, y) -> float:
        U = _as_scores(u)
        return float(self.values(U, self._wrap_label(y, U.shape[1]))[0])

    def grad(self, u, y) -> np.ndarray:
        U = _as_scores(u)
        return self.grads(U, self._wrap_label(y, U.shape[1]))[0]

    def _wrap_label(self, y, q):
        if self.label_kind in ("class", "sign"):
            return np.asarray([y])
        arr = np.asarray(y, dtype=float)
        if arr.shape != (q,):
            raise ValueError(f"label shape {arr.shape} does not match q={q}")
        return arr[None, :]

    def __repr__(self):
        return f"{type(self).__name__}({self.spec_string()!r})"


class ZeroOneLoss(Loss):
    """Misclassification indicator on the margin; evaluation only."""

    differentiable = False

    def values(self, U, Y):
        U = _as_scores(U)
        Y = _class_labels(Y, U.shape[0], U.shape[1])
        return (_margins(U, Y)[0] <= 0.0).astype(float)

    def grads(self, U, Y):
        raise ValueError("zero_one loss is not differentiable")

    def declared_params(self):
        raise ValueError(
            "zero_one is discontinuous and satisfies no self-bounding Lipschitz "
            "condition; supply explicit params to check_sbl instead"
        )

    def spec_string(self):
        return "zero_one"


class HardMarginLoss(Loss):
    """Indicator of margin below ``rho``; evaluation only."""

    differentiable = False

    def __init__(self, rho: float):
        if not rho > 0:
            raise ValueError("rho must be positive")
        self.rho = float(rho)

    def values(self, U, Y):
        U = _as_scores(U)
        Y = _class_labels(Y, U.shape[0], U.shape[1])
        return (_margins(U, Y)[0] <= self.rho).astype(float)

    def grads(self, U, Y):
        raise ValueError("hard_margin loss is not differentiable")

    def declared_params(self):
        raise ValueError(
            "hard_margin is discontinuous and satisfies no self-bounding "
            "Lipschitz condition; supply explicit params to check_sbl instead"
        )

    def spec_string(self):
        return f"hard_margin(rho={self.rho!r})"


class SmoothMarginLoss(Loss):
    """Piecewise-cubic margin surrogate on scale ``rho``, ranged in [0, 1].

    Sits between the zero-one loss and the hard ``rho``-margin loss, and is
    (4*sqrt(6)/rho, 1/2)-self-bounding Lipschitz.
    """

    def __init__(self, rho: float):
        if not rho > 0:
            raise ValueError("rho must be positive")
        self.rho = float(rho)

    def values(self, U, Y):
        U = _as_scores(U)
        Y = _class_labels(Y, U.shape[0], U.shape[1])
        s = _margins(U, Y)[0] / self.rho
        s = np.clip(s, 0.0, 1.0)
        return 2.0 * s**3 - 3.0 * s**2 + 1.0

    def grads(self, U, Y):
        U = _as_scores(U)
        Y = _class_labels(Y, U.shape[0], U.shape[1])
        n, q = U.shape
        m, masked = _margins(U, Y)
        s = m / self.rho
        slope = np.where((s > 0.0) & (s < 1.0), (6.0 * s**2 - 6.0 * s) / self.rho, 0.0)
        # margin ties resolved toward the smallest competing index (argmax is first-hit)
        comp = masked.argmax(axis=1)
        G = np.zeros_like(U)
        rows = np.arange(n)
        G[rows, Y - 1] += slope
        G[rows, comp] -= slope
        return G

    def declared_params(self):
        return SblParams(4.0 * math.sqrt(6.0) / self.rho, 0.5, 1.0)

    def spec_string(self):
        return f"smooth_margin(rho={self.rho!r})"


class MultinomialLogisticLoss(Loss):
    """Softmax cross-entropy written on score gaps: log sum_j exp(u_j - u_y)."""

    def values(self, U, Y):
        U = _as_scores(U)
        Y = _class_labels(Y, U.shape[0], U.shape[1])
        rows = np.arange(U.shape[0])
        return _logsumexp(U) - U[rows, Y - 1]

    def grads(self, U, Y):
        U = _as_scores(U)
        Y = _class_labels(Y, U.shape[0], U.shape[1])
        G = _softmax(U)
        G[np.arange(U.shape[0]), Y - 1] -= 1.0
        return G

    def declared_params(self):
        # the condition also holds with lam = 1, which certificates do not use;
        # check_sbl can probe both
        return SblParams(2.0, 0.5, math.inf)

    def spec_string(self):
        return "logistic"


class PickAllLabelsLoss(Loss):
    """Sum of per-positive-label logistic losses for k-sparse binary targets."""

    label_kind = "multilabel"

    def __init__(self, k: int):
        if not (isinstance(k, (int, np.integer)) and k >= 1):
            raise ValueError("k must be a positive integer")
        self.k = int(k)

    def _labels(self, Y, n, q):
        Y = np.asarray(Y, dtype=float)
        if Y.shape != (n, q):
            raise ValueError(f"expected binary labels of shape {(n, q)}, got {Y.shape}")
        if not np.isin(Y, (0.0, 1.0)).all():
            raise ValueError("multilabel targets must be 0/1")
        if (Y.sum(axis=1) > self.k).any():
            raise ValueError(f"multilabel targets must have at most k={self.k} ones")
        return Y

    def values(self, U, Y):
        U = _as_scores(U)
        Y = self._labels(Y, U.shape[0], U.shape[1])
        counts = Y.sum(axis=1)
        return counts * _logsumexp(U) - (Y * U).sum(axis=1)

    def grads(self, U, Y):
        U = _as_scores(U)
        Y = self._labels(Y, U.shape[0], U.shape[1])
        counts = Y.sum(axis=1, keepdims=True)
        return counts * _softmax(U) - Y

    def declared_params(self):
        return SblParams(2.0 * math.sqrt(self.k), 0.5, math.inf)

    def spec_string(self):
        return f"pick_all_labels(k={self.k})"


class SupNormLoss(Loss):
    """Regression loss ``kappa * ||u - y||_inf**gamma`` with kappa, gamma in [1, 2]."""

    label_kind = "regression"

    def __init__(self, kappa: float, gamma: float):
        if not 1.0 <= kappa <= 2.0:
            raise ValueError("kappa must lie in [1, 2]")
        if not 1.0 <= gamma <= 2.0:
            raise ValueError("gamma must lie in [1, 2]")
        self.kappa = float(kappa)
        self.gamma = float(gamma)

    def _labels(self, Y, n, q):
        Y = np.asarray(Y, dtype=float)
        if Y.shape != (n, q):
            raise ValueError(f"expected real labels of shape {(n, q)}, got {Y.shape}")
        if not np.isfinite(Y).all():
            raise ValueError("labels must be finite")
        return Y

    def values(self, U, Y):
        U = _as_scores(U)
        Y = self._labels(Y, U.shape[0], U.shape[1])
        t = np.abs(U - Y).max(axis=1)
        return self.kappa * t**self.gamma

    def grads(self, U, Y):
        U = _as_scores(U)
        Y = self._labels(Y, U.shape[0], U.shape[1])
        D = U - Y
        A = np.abs(D)
        j = A.argmax(axis=1)
        rows = np.arange(U.shape[0])
        t = A[rows, j]
        # sign(0) = 0 makes the u = y subgradient the zero vector
        scale = self.kappa * self.gamma * t ** (self.gamma - 1.0) * np.sign(D[rows, j])
        G = np.zeros_like(U)
        G[rows, j] = scale
        return G

    def declared_params(self):
        theta = (self.gamma - 1.0) / self.gamma
        return SblParams((8.0 * self.kappa) ** (1.0 - theta), theta, math.inf)

    def spec_string(self):
        return f"sup_norm(kappa={self.kappa!r},gamma={self.gamma!r})"


class BoundedExponentialLoss(Loss):
    """Binary scoring loss ``min(1, exp(-u*y))`` with y in {-1, +1} and q = 1.

    Satisfies the self-bounding Lipschitz condition with lam = 1 at every
    exponent theta in [0, 1]; the declared exponent is 1/2.
    """

    label_kind = "sign"

    def _labels(self, Y, n):
        Y = np.asarray(Y, dtype=float)
        if Y.shape != (n,):
            raise ValueError(f"expected {n} sign labels, got shape {Y.shape}")
        if not np.isin(Y, (-1.0, 1.0)).all():
            raise ValueError("sign labels must be -1 or +1")
        return Y

    def values(self, U, Y):
        U = _as_scores(U, q=1)
        Y = self._labels(Y, U.shape[0])
        return np.minimum(1.0, np.exp(-U[:, 0] * Y))

    def grads(self, U, Y):
        U = _as_scores(U, q=1)
        Y = self._labels(Y, U.shape[0])
        uy = U[:, 0] * Y
        g = np.where(uy > 0.0, -Y * np.exp(-uy), 0.0)
        return g[:, None]

    def declared_params(self):
        return SblParams(1.0, 0.5, 1.0)

    def spec_string(self):
        return "bounded_exp"


class MinimaxPowerLoss(Loss):
    """Clipped power of the sup-norm error: ``min((lam*||u-y||_inf)**(1/(1-theta))/32, 1)``.

    The worst-case construction used by the lower-bound experiments; it is
    (lam, theta)-self-bounding Lipschitz for lam >= 1, theta in [0, 1/2].
    """

    label_kind = "regression"

    def __init__(self, lam: float, theta: float):
        if not lam >= 1.0:
            raise ValueError("lam must be >= 1")
        if not 0.0 <= theta <= 0.5:
            raise ValueError("theta must lie in [0, 1/2]")
        self.lam = float(lam)
        self.theta = float(theta)

    def _labels(self, Y, n, q):
        Y = np.asarray(Y, dtype=float)
        if Y.shape != (n, q):
            raise ValueError(f"expected real labels of shape {(n, q)}, got {Y.shape}")
        return Y

    def values(self, U, Y):
        U = _as_scores(U)
        Y = self._labels(Y, U.shape[0], U.shape[1])
        t = np.abs(U - Y).max(axis=1)
        p = 1.0 / (1.0 - self.theta)
        return np.minimum((self.lam * t) ** p / 32.0, 1.0)

    def grads(self, U, Y):
        U = _as_scores(U)
        Y = self._labels(Y, U.shape[0], U.shape[1])
        D = U - Y
        A = np.abs(D)
        j = A.argmax(axis=1)
        rows = np.arange(U.shape[0])
        t = A[rows, j]
        p = 1.0 / (1.0 - self.theta)
        raw = (self.lam * t) ** p / 32.0
        slope = np.where(
            raw < 1.0, self.lam**p * p * t ** (p - 1.0) / 32.0 * np.sign(D[rows, j]), 0.0
        )
        G = np.zeros_like(U)
        G[rows, j] = slope
        return G

    def declared_params(self):
        return SblParams(self.lam, self.theta, 1.0)

    def spec_string(self):
        return f"minimax_power(lambda={self.lam!r},theta={self.theta!r})"


class ClippedLoss(Loss):
    """``min(inner, B)``: clipping preserves the inner loss's (lam, theta)."""

    def __init__(self, inner: Loss, bound: float):
        if not bound > 0:
            raise ValueError("clip bound must be positive")
        self.inner = inner
        self.bound = float(bound)
        self.label_kind = inner.label_kind
        self.differentiable = inner.differentiable

    def values(self, U, Y):
        return np.minimum(self.inner.values(U, Y), self.bound)

    def grads(self, U, Y):
        raw = self.inner.values(U, Y)
        G = self.inner.grads(U, Y)
        # zero subgradient at and beyond the clip boundary
        G[raw >= self.bound] = 0.0
        return G

    def declared_params(self):
        p = self.inner.declared_params()
        return SblParams(p.lam, p.theta, min(p.bound, self.bound))

    def spec_string(self):
        return f"clip({self.inner.spec_string()},B={self.bound!r})"


# ---------------------------------------------------------------------------
# falsification engine for the declared condition

@dataclass
class SblReport:
    """Outcome of a randomized search for violations of the declared condition.

    ``max_violation`` is the largest positive excess of |L(u,y) - L(v,y)| over
    lam * max(L(u,y), L(v,y))**theta * ||u - v||_inf seen across all trials
    (negative values mean slack remained).  ``observed_lam`` is the empirically
    tight constant max |dL| / (max_loss**theta * ||u - v||_inf); it is reported
    but never substituted for the declared one.
    """

    trials: int
    max_violation: float
    worst_case: tuple  # (u, v, y) attaining max_violation
    passed: bool
    tolerance: float
    observed_lam: float

    def __post_init__(self):
        assert self.passed == (self.max_violation <= self.tolerance)


def _sample_labels(loss: Loss, q: int, n: int, rng: np.random.Generator, box: float):
    kind = loss.label_kind
    if kind == "class":
        return rng.integers(1, q + 1, size=n)
    if kind == "sign":
        return rng.integers(0, 2, size=n) * 2.0 - 1.0
    if kind == "regression":
        return rng.uniform(-2.0 * box, 2.0 * box, size=(n, q))
    # multilabel: random support of size 1..k
    k = getattr(loss, "k", None) or getattr(loss.inner, "k")
    Y = np.zeros((n, q))
    counts = rng.integers(1, k + 1, size=n)
    for i in range(n):
        Y[i, rng.choice(q, size=counts[i], replace=False)] = 1.0
    return Y


def _check_chunk(loss, params, q, n, seed_seq, box, step_scales):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    U = rng.uniform(-2.0 * box, 2.0 * box, size=(n, q))
    V = rng.uniform(-2.0 * box, 2.0 * box, size=(n, q))
    # overwrite a share of the pairs with fixed-size sup-norm steps to probe
    # the local regime alongside the global one
    n_groups = len(step_scales) + 1
    for g, scale in enumerate(step_scales, start=1):
        sel = np.arange(g, n, n_groups)
        delta = rng.uniform(-1.0, 1.0, size=(len(sel), q))
        norms = np.abs(delta).max(axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        V[sel] = U[sel] + delta * (scale / norms)
    Y = _sample_labels(loss, q, n, rng, box)
    lu = loss.values(U, Y)
    lv = loss.values(V, Y)
    gap = np.abs(lu - lv)
    dist = np.abs(U - V).max(axis=1)
    envelope = np.maximum(lu, lv) ** params.theta * dist
    violation = gap - params.lam * envelope
    i = int(np.argmax(violation))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(envelope > 0.0, gap / envelope, 0.0)
    worst = (U[i].copy(), V[i].copy(), Y[i] if np.ndim(Y) == 1 else Y[i].copy())
    return float(violation[i]), worst, float(ratios.max())


def check_sbl(
    loss: Loss,
    params: SblParams | None = None,
    q: int = 2,
    trials: int = 100_000,
    box: float = 5.0,
    step_scales=(1e-3, 1e-1, 1.0),
    rng_seed: int = 0,
    tolerance: float = 1e-9,
) -> SblReport:
    """Randomized falsification of the self-bounding Lipschitz condition.

    Samples ``trials`` triples (u, v, y): score vectors uniform over
    ``[-2*box, 2*box]**q``, with a share of the pairs replaced by perturbation
    pairs at exact sup-norm distances ``step_scales``.  Deterministic given
    ``rng_seed``; trials run in chunks with independent generator streams, so
    the result is independent of the ``MOBOUND_THREADS`` parallelism cap.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if params is None:
        params = loss.declared_params()
    if loss.label_kind == "sign" and q != 1:
        raise ValueError("sign-labelled losses require q = 1")

    chunk = 25_000
    sizes = [chunk] * (trials // chunk)
    if trials % chunk:
        sizes.append(trials % chunk)
    seeds = np.random.SeedSequence(rng_seed).spawn(len(sizes))
    jobs = [(loss, params, q, n, s, box, step_scales) for n, s in zip(sizes, seeds)]

    cap = thread_cap()
    if cap > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=cap) as pool:
            results = list(pool.map(lambda j: _check_chunk(*j), jobs))
    else:
        results = [_check_chunk(*j) for j in jobs]

    best = max(range(len(results)), key=lambda i: results[i][0])
    max_violation = results[best][0]
    observed = max(r[2] for r in results)
    return SblReport(
        trials=trials,
        max_violation=max_violation,
        worst_case=results[best][1],
        passed=max_violation <= tolerance,
        tolerance=tolerance,
        observed_lam=observed,
    )


# ---------------------------------------------------------------------------
# loss string grammar:  name | name(key=value, ...) | clip(<loss>, B=value)

_NAME_RE = re.compile(r"^\s*([a-z_][a-z0-9_]*)\s*(?:\((.*)\))?\s*$", re.S)


def _split_args(body: str):
    parts, depth, cur = [], 0, []
    for ch in body:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur:
        parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def parse_loss(spec: str) -> Loss:
    """Parse a loss specification string, e.g. ``smooth_margin(rho=1.0)``,
    ``logistic``, ``pick_all_labels(k=5)``, ``sup_norm(kappa=1,gamma=2)``,
    ``clip(logistic,B=3)``, ``minimax_power(lambda=1,theta=0.5)``.
    """
    m = _NAME_RE.match(spec)
    if not m:
        raise ValueError(f"cannot parse loss spec {spec!r}")
    name, body = m.group(1), m.group(2)
    args = _split_args(body) if body else []

    kwargs = {}
    positional = []
    key_re = re.compile(r"^\s*[A-Za-z_][A-Za-z0-9_]*\s*$")
    for a in args:
        head = a.split("=", 1)[0]
        if "=" in a and key_re.match(head):
            key, val = a.split("=", 1)
            kwargs[key.strip()] = val.strip()
        else:
            positional.append(a)

    def num(key, conv=float):
        if key not in kwargs:
            raise ValueError(f"loss {name!r} requires argument {key!r}")
        try:
            return conv(kwargs.pop(key))
        except ValueError as exc:
            raise ValueError(f"bad value for {key!r} in loss spec {spec!r}") from exc

    try:
        if name == "zero_one":
            out = ZeroOneLoss()
        elif name == "hard_margin":
            out = HardMarginLoss(num("rho"))
        elif name == "smooth_margin":
            out = SmoothMarginLoss(num("rho"))
        elif name == "logistic":
            out = MultinomialLogisticLoss()
        elif name == "pick_all_labels":
            out = PickAllLabelsLoss(num("k", int))
        elif name == "sup_norm":
            out = SupNormLoss(num("kappa"), num("gamma"))
        elif name == "bounded_exp":
            out = BoundedExponentialLoss()
        elif name == "minimax_power":
            out = MinimaxPowerLoss(num("lambda"), num("theta"))
        elif name == "clip":
            if len(positional) != 1:
                raise ValueError("clip takes one inner loss, e.g. clip(logistic,B=3)")
            out = ClippedLoss(parse_loss(positional[0]), num("B"))
        else:
            raise ValueError(f"unknown loss {name!r}")
    except ValueError:
        raise
    if kwargs or (positional and name != "clip"):
        raise ValueError(f"unexpected arguments in loss spec {spec!r}")
    return out
