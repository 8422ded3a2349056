import numpy as np
import pytest

from mobound.losses import (
    BoundedExponentialLoss,
    ClippedLoss,
    MultinomialLogisticLoss,
    SblParams,
    SmoothMarginLoss,
    ZeroOneLoss,
    check_sbl,
    relax_theta,
)


def violation_of(loss, params, u, v, y):
    lu, lv = loss.value(u, y), loss.value(v, y)
    dist = np.abs(np.asarray(u, float) - np.asarray(v, float)).max()
    return abs(lu - lv) - params.lam * max(lu, lv) ** params.theta * dist


def test_logistic_declared_params_pass():
    report = check_sbl(MultinomialLogisticLoss(), q=5, trials=30_000, rng_seed=11)
    assert report.passed and report.max_violation <= 1e-9
    assert report.trials == 30_000


def test_zero_one_is_falsified():
    report = check_sbl(
        ZeroOneLoss(), params=SblParams(1.0, 0.0, 1.0), q=3, trials=30_000, rng_seed=11
    )
    assert not report.passed and report.max_violation > 0
    # the reported worst case really is a violation
    u, v, y = report.worst_case
    assert violation_of(ZeroOneLoss(), SblParams(1.0, 0.0, 1.0), u, v, y) == pytest.approx(
        report.max_violation
    )


def test_doubling_lam_keeps_passing():
    loss = MultinomialLogisticLoss()
    base = check_sbl(loss, q=4, trials=20_000, rng_seed=3)
    doubled = check_sbl(
        loss, params=SblParams(4.0, 0.5, np.inf), q=4, trials=20_000, rng_seed=3
    )
    assert base.passed and doubled.passed
    assert doubled.max_violation <= base.max_violation


def test_clipping_keeps_inner_params():
    loss = ClippedLoss(MultinomialLogisticLoss(), 3.0)
    report = check_sbl(loss, params=SblParams(2.0, 0.5, 3.0), q=4, trials=30_000, rng_seed=5)
    assert report.passed


def test_relaxed_params_pass_for_bounded_loss():
    loss = SmoothMarginLoss(1.0)
    relaxed = relax_theta(loss.declared_params(), 0.0)
    report = check_sbl(loss, params=relaxed, q=4, trials=30_000, rng_seed=6)
    assert report.passed


@pytest.mark.parametrize("theta", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_bounded_exp_passes_at_every_exponent(theta):
    report = check_sbl(
        BoundedExponentialLoss(),
        params=SblParams(1.0, theta, 1.0),
        q=1,
        trials=20_000,
        rng_seed=8,
    )
    assert report.passed, (theta, report.max_violation)


def test_logistic_lam_one_is_empirically_falsified():
    # the tighter constant lam = 1 fails; certificates use lam = 2
    u, v, y = np.array([-1.0, 1.0]), np.array([-1.1, 1.1]), 1
    assert violation_of(
        MultinomialLogisticLoss(), SblParams(1.0, 0.5, np.inf), u, v, y
    ) > 0
    report = check_sbl(
        MultinomialLogisticLoss(),
        params=SblParams(1.0, 0.5, np.inf),
        q=4,
        trials=50_000,
        rng_seed=9,
    )
    assert not report.passed


def test_check_sbl_deterministic_and_thread_independent(monkeypatch):
    loss = MultinomialLogisticLoss()
    a = check_sbl(loss, q=3, trials=60_000, rng_seed=21)
    b = check_sbl(loss, q=3, trials=60_000, rng_seed=21)
    assert a.max_violation == b.max_violation
    assert np.array_equal(a.worst_case[0], b.worst_case[0])
    monkeypatch.setenv("MOBOUND_THREADS", "4")
    c = check_sbl(loss, q=3, trials=60_000, rng_seed=21)
    assert c.max_violation == a.max_violation
    assert c.observed_lam == a.observed_lam


def test_check_sbl_rejects_bad_arguments():
    with pytest.raises(ValueError):
        check_sbl(MultinomialLogisticLoss(), trials=0)
    with pytest.raises(ValueError):
        check_sbl(BoundedExponentialLoss(), q=3, trials=10)  # sign labels need q=1
