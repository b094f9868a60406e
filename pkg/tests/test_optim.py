import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rs2.core import ConfigError, NumericError
from rs2.optim import (
    AcceleratedParams,
    LrSchedule,
    OptimizerState,
    accelerated_params,
    compute_md_point,
    lr_at,
    nesterov_step,
    sgd_step,
)


def test_cosine_full_endpoints():
    s = LrSchedule("cosine_full", 1.0, 3)
    assert [lr_at(s, t) for t in (1, 2, 3)] == pytest.approx([1.0, 0.5, 0.0], abs=1e-15)


def test_cosine_r_scaled_reaches_floor_at_its_last_step():
    s = LrSchedule("cosine_r_scaled", 1.0, 10, r=0.5, eta_min=0.1)
    assert s.horizon == 5
    assert lr_at(s, 1) == 1.0
    assert lr_at(s, 3) == pytest.approx(0.55)
    assert lr_at(s, 5) == pytest.approx(0.1)


def test_naive_early_stop_is_truncated_full_schedule():
    s = LrSchedule("naive_early_stop", 1.0, 10)
    assert lr_at(s, 5) == pytest.approx(0.5 * (1 + math.cos(4 * math.pi / 9)))
    full = LrSchedule("cosine_full", 1.0, 10)
    assert all(lr_at(s, t) == lr_at(full, t) for t in range(1, 11))


def test_r_scaled_at_r1_is_cosine_full():
    a = LrSchedule("cosine_r_scaled", 0.3, 50, r=1.0, eta_min=0.01)
    b = LrSchedule("cosine_full", 0.3, 50, eta_min=0.01)
    assert all(lr_at(a, t) == lr_at(b, t) for t in range(1, 51))


def test_scaled_steps_override():
    s = LrSchedule("cosine_r_scaled", 1.0, 100, r=0.1, scaled_steps=7)
    assert s.horizon == 7 and lr_at(s, 7) == 0.0


def test_constant_and_inverse_t():
    assert lr_at(LrSchedule("constant", 0.2), 99) == 0.2
    assert lr_at(LrSchedule("inverse_t", 0.5), 4) == 0.125


def test_single_step_horizon_uses_eta0():
    assert lr_at(LrSchedule("cosine_r_scaled", 0.7, 5, r=0.1), 1) == 0.7


def test_schedule_validation():
    with pytest.raises(ConfigError):
        LrSchedule("linear", 1.0)
    with pytest.raises(ConfigError):
        LrSchedule("constant", 1.0, eta_min=2.0)
    with pytest.raises(ConfigError):
        LrSchedule("cosine_r_scaled", 1.0, 10, r=0.0)
    with pytest.raises(ValueError):
        lr_at(LrSchedule("constant", 1.0), 0)


@settings(max_examples=100, deadline=None)
@given(
    st.sampled_from(["cosine_full", "cosine_r_scaled", "naive_early_stop"]),
    st.floats(0.01, 2.0),
    st.floats(0.0, 1.0),
    st.integers(1, 500),
    st.floats(0.05, 1.0),
)
def test_cosine_schedules_bounded_and_nonincreasing(kind, eta0, frac, total, r):
    s = LrSchedule(kind, eta0, total, r=r, eta_min=frac * eta0)
    vals = [lr_at(s, t) for t in range(1, total + 3)]
    assert all(s.eta_min - 1e-12 <= v <= eta0 + 1e-12 for v in vals)
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_sgd_step_example():
    st0 = OptimizerState.init([1.0, 2.0])
    st1 = sgd_step(st0, [0.5, -1.0], 0.1)
    np.testing.assert_allclose(st1.w, [0.95, 2.1])
    assert st1.t == 2
    assert st0.w.tolist() == [1.0, 2.0]


def test_sgd_zero_lr_is_identity():
    st0 = OptimizerState.init([3.0, -1.0])
    assert np.array_equal(sgd_step(st0, [5.0, 5.0], 0.0).w, st0.w)


def test_momentum_two_steps_hand_unrolled():
    g1, g2, lr, m = np.array([1.0, -2.0]), np.array([0.5, 0.5]), 0.1, 0.9
    st = OptimizerState.init([0.0, 0.0])
    st = sgd_step(st, g1, lr, m)
    st = sgd_step(st, g2, lr, m)
    w1 = -lr * g1
    w2 = w1 - lr * (m * g1 + g2)
    np.testing.assert_allclose(st.w, w2, rtol=0, atol=1e-15)


def test_sgd_rejects_non_finite():
    with pytest.raises(NumericError):
        sgd_step(OptimizerState.init([0.0]), [np.nan], 0.1)
    with pytest.raises(NumericError):
        sgd_step(OptimizerState.init([1e308]), [-1e308], 10.0)


def _lam(t):
    return 0.1 * (1 + (2.0 / (t + 1)) / 8)


def test_nesterov_quadratic_three_steps_hand_unrolled():
    # f(w) = w^2 / 2, so the gradient at w_md is w_md itself
    params = AcceleratedParams(alpha=lambda t: 2.0 / (t + 1), beta=lambda t: 0.1, lam=_lam)
    st = OptimizerState.init([1.0])
    for _ in range(3):
        st = compute_md_point(st, params)
        st = nesterov_step(st, st.w_md, params)

    w = ag = 1.0
    for t in (1, 2, 3):
        a = 2.0 / (t + 1)
        md = w if a == 1.0 else (1 - a) * ag + a * w
        w, ag = w - _lam(t) * md, md - 0.1 * md
    assert st.w[0] == pytest.approx(w, abs=1e-15)
    assert st.w_ag[0] == pytest.approx(ag, abs=1e-15)
    assert st.t == 4


def test_nesterov_alpha_one_is_plain_sgd():
    g = np.random.default_rng(0)
    params = AcceleratedParams(alpha=lambda t: 1.0, beta=lambda t: 0.05, lam=lambda t: 0.05)
    a = OptimizerState.init(g.normal(size=4))
    b = OptimizerState.init(a.w)
    for _ in range(10):
        a = compute_md_point(a, params)
        grad = 2.0 * a.w_md - 1.0
        a = nesterov_step(a, grad, params)
        b = sgd_step(b, 2.0 * b.w - 1.0, 0.05)
        assert np.array_equal(a.w, b.w) and np.array_equal(a.w_ag, b.w)


def test_nesterov_lambda_range_checked():
    bad = AcceleratedParams(alpha=lambda t: 2.0 / (t + 1), beta=lambda t: 0.1, lam=lambda t: 0.2)
    st = compute_md_point(OptimizerState.init([1.0]), bad)
    with pytest.raises(ConfigError):
        nesterov_step(st, [1.0], bad)


def test_accelerated_parameter_examples():
    p = accelerated_params(beta_smooth=2.0, sigma=1.0, r=1.0, T=10, X=10, D_tilde=1.0)
    assert p.beta(1) == pytest.approx(0.1) and p.lam(5) == p.beta(5)
    assert p.alpha(1) == 1.0 and p.alpha(3) == 0.5
    noiseless = accelerated_params(2.0, 0.0, 1.0, 10, 10, 1.0)
    assert noiseless.beta(1) == pytest.approx(8 / 42)
    cvx = accelerated_params(2.0, 1.0, 1.0, 10, 10, 1.0, convex=True)
    step = (1.0 / (4.0 * 1e6)) ** 0.25
    assert cvx.beta(1) == pytest.approx(step)
    assert cvx.lam(3) == pytest.approx(3 * 2.0 * step**2 / 2)
    assert not cvx.check_lambda


@pytest.mark.parametrize("convex", [False, True])
def test_accelerated_converges_on_quadratic(convex):
    # f(w) = 0.5 w^T A w with eigenvalues in [0.5, 2]: smoothness 2
    A = np.diag([0.5, 1.0, 2.0])
    p = accelerated_params(2.0, 0.0, 1.0, 50, 4, 3.0, convex=convex)
    st = OptimizerState.init([1.0, -1.0, 1.0])
    norms = []
    for _ in range(200):
        st = compute_md_point(st, p)
        st = nesterov_step(st, A @ st.w_md, p)
        norms.append(float(np.linalg.norm(st.w_ag)))
    assert norms[-1] < 1e-3 * norms[0]


def test_sgd_contracts_on_quadratic():
    A = np.diag([0.5, 2.0])
    st = OptimizerState.init([1.0, 1.0])
    for _ in range(100):
        prev = np.linalg.norm(st.w)
        st = sgd_step(st, A @ st.w, 0.4)
        assert np.linalg.norm(st.w) < prev
