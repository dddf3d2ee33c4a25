import warnings

import numpy as np
import pytest

from emaopt import AccumulatorMode, DecaySchedule, EmaState, preset
from emaopt.errors import DomainError, NonFiniteError


def test_first_step_momentum():
    st = EmaState.fresh(np.array([1.0]))
    st.update(np.array([1.0]), DecaySchedule(0.9, 0.999, 0.9))
    assert st.m[0] == pytest.approx(0.1)
    assert st.t == 1


def test_fema1_style_update():
    # beta2 = beta3 = 0: upsilon = g^2, v_hat = max(q, g^2)
    st = EmaState.fresh(np.array([1.0]))
    st.update(np.array([0.5]), DecaySchedule(0.9, 0.0, 0.0))
    assert st.v[0] == 0.25
    assert st.v_hat[0] == 1.0


def test_vhat_recursion_example():
    # v_hat = 0.9*1 + 0.1*max(1, 4) = 1.3
    st = EmaState.fresh(np.array([1.0]))
    st.update(np.array([2.0]), DecaySchedule(0.0, 0.0, 0.9))
    assert st.v[0] == 4.0
    assert st.v_hat[0] == pytest.approx(1.3, rel=1e-15)


def test_identity_mode():
    st = EmaState.fresh(np.array([1.0, 1.0]), AccumulatorMode.IDENTITY)
    sched = DecaySchedule(0.0, 0.0, 0.0)
    for g in ([1.0, -2.0], [0.25, 0.5]):
        st.update(np.array(g), sched)
        assert np.array_equal(st.m, g)
        assert np.array_equal(st.v_hat, [1.0, 1.0])


def test_presets():
    assert preset("FEMA1").schedule == DecaySchedule(0.9, 0.0, 0.0)
    assert preset("FEMA2").schedule == DecaySchedule(0.9, 0.999, 0.0)
    assert preset("FEMA3").schedule == DecaySchedule(0.9, 0.999, 0.9)
    assert preset("AMSGrad").schedule == preset("FEMA2").schedule
    assert preset("RMSProp").schedule.beta1 == 0.0
    assert preset("Adam").mode is AccumulatorMode.NO_MAX
    assert preset("SGD").mode is AccumulatorMode.IDENTITY
    assert preset("SGD").q_fill == 1.0
    with pytest.raises(DomainError):
        preset("adagrad")


def test_rmsprop_momentum_free():
    st = EmaState.fresh(np.array([1.0]))
    p = preset("RMSProp")
    st.update(np.array([0.7]), p.schedule)
    assert st.m[0] == 0.7


def test_geometric_beta1_clamped_at_start():
    sched = DecaySchedule(0.9, 0.999, 0.0, pi=0.5)
    assert sched.beta1_at(0) == 0.9  # pi^(t-1) would exceed beta1 at t=0
    assert sched.beta1_at(1) == 0.9
    assert sched.beta1_at(2) == pytest.approx(0.45)
    assert sched.beta1_at(3) == pytest.approx(0.225)


def test_tau_warning():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        DecaySchedule(0.9, 0.5, 0.0)  # 0.9/sqrt(0.5) > 1
    assert any("beta1/sqrt(beta2)" in str(w.message) for w in caught)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        DecaySchedule(0.9, 0.999, 0.0)
    assert not caught


def test_schedule_validation():
    with pytest.raises(DomainError):
        DecaySchedule(1.0, 0.9, 0.0)
    with pytest.raises(DomainError):
        DecaySchedule(0.9, -0.1, 0.0)
    with pytest.raises(DomainError):
        DecaySchedule(0.9, 0.999, 0.0, pi=1.5)


def test_nonfinite_gradient_rejected():
    st = EmaState.fresh(np.ones(2))
    with pytest.raises(NonFiniteError):
        st.update(np.array([1.0, np.nan]), DecaySchedule(0.9, 0.999, 0.9))


def test_vhat_monotone_exact():
    rng = np.random.default_rng(20)
    sched = DecaySchedule(0.9, 0.999, 0.9)
    st = EmaState.fresh(rng.uniform(0.5, 2.0, 8))
    prev = st.v_hat.copy()
    for _ in range(2000):
        st.update(rng.standard_normal(8) * rng.uniform(0, 3), sched)
        assert np.all(st.v_hat >= prev)
        prev = st.v_hat.copy()


def test_beta3_zero_is_running_max():
    rng = np.random.default_rng(21)
    sched = DecaySchedule(0.9, 0.999, 0.0)
    st = EmaState.fresh(np.full(4, 1e-8))
    ref_v = np.zeros(4)
    ref_vhat = np.full(4, 1e-8)
    for _ in range(500):
        g = rng.standard_normal(4)
        st.update(g, sched)
        ref_v = 0.999 * ref_v + (1.0 - 0.999) * (g * g)
        ref_vhat = np.maximum(ref_vhat, ref_v)
        assert np.array_equal(st.v_hat, ref_vhat)


def test_sup_norm_bounds():
    # inputs bounded by G and q <= G^2 keep m and sqrt(v_hat) bounded by G
    rng = np.random.default_rng(22)
    for sched in (DecaySchedule(0.9, 0.999, 0.9), DecaySchedule(0.9, 0.0, 0.0),
                  DecaySchedule(0.5, 0.99, 0.5)):
        G = rng.uniform(0.5, 3.0)
        st = EmaState.fresh(np.full(6, G * G))
        for _ in range(3000):
            g = rng.uniform(-G, G, 6)
            st.update(g, sched)
            assert np.abs(st.m).max() <= G
            assert np.sqrt(st.v_hat).max() <= G


def test_momentum_scaled_norm_bound():
    # ||V^(-1/4) m||^2 <= sum_k tau^(t-k) ||g_k||_1 / ((1-b1) sqrt((1-b2)(1-b3)))
    rng = np.random.default_rng(23)
    b1, b2, b3 = 0.9, 0.999, 0.9
    sched = DecaySchedule(b1, b2, b3)
    tau = b1 / np.sqrt(b2)
    denom = (1 - b1) * np.sqrt((1 - b2) * (1 - b3))
    n_seq, d, steps = 64, 5, 80
    st = EmaState.fresh(np.full(n_seq * d, 1e-8))
    s = np.zeros(n_seq)
    for _ in range(steps):
        g = rng.standard_normal(n_seq * d)
        st.update(g, sched)
        s = tau * s + np.abs(g.reshape(n_seq, d)).sum(axis=1)
        lhs = (st.m.reshape(n_seq, d) ** 2 / np.sqrt(st.v_hat.reshape(n_seq, d))).sum(axis=1)
        assert np.all(lhs <= s / denom + 1e-8)


def test_adam_mode_positive_vhat():
    st = EmaState.fresh(np.full(3, 1e-8), AccumulatorMode.NO_MAX)
    sched = preset("Adam").schedule
    for _ in range(100):
        st.update(np.zeros(3), sched)
        assert np.all(st.v_hat > 0.0)


def test_snapshot_roundtrip():
    rng = np.random.default_rng(24)
    st = EmaState.fresh(np.full(4, 1e-8))
    sched = DecaySchedule(0.9, 0.999, 0.9)
    for _ in range(10):
        st.update(rng.standard_normal(4), sched)
    back = EmaState.from_snapshot(st.snapshot())
    assert back.t == st.t
    assert back.mode is st.mode
    assert np.array_equal(back.m, st.m)
    assert np.array_equal(back.v, st.v)
    assert np.array_equal(back.v_hat, st.v_hat)
    # the restored state advances identically
    g = rng.standard_normal(4)
    st.update(g, sched)
    back.update(g, sched)
    assert np.array_equal(back.v_hat, st.v_hat)
