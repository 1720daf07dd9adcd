import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcofdma import (ChannelRealization, SinrTarget, iterative_power_control, mai, rate,
                     rate_approx, required_power, sinr)
from mcofdma.radio import interference_tensor, link_sinr, rate_tensor, sinr_tensor

from oracles import random_channel, two_link_fixed_point


def test_mai_examples():
    ch = ChannelRealization.from_gains(np.ones((1, 1, 1)))
    assert mai(ch, np.ones((1, 1)), 0, 0, 0) == 0.0
    g = np.array([[[1.0, 0.5]]])
    ch = ChannelRealization.from_gains(g)
    assert mai(ch, np.array([[0.0, 2.0]]), 0, 0, 0) == pytest.approx(1.0)
    g = np.array([[[1.0, 0.1, 0.05]]])
    ch = ChannelRealization.from_gains(g)
    assert mai(ch, np.array([[9.0, 1.0, 2.0]]), 0, 0, 0) == pytest.approx(0.2)


def test_sinr_and_rate_examples():
    ch = ChannelRealization.from_gains(np.ones((1, 1, 1)), N0=0.25)
    assert sinr(ch, np.ones((1, 1)), 0, 0, 0) == pytest.approx(4.0)
    assert sinr(ch, np.zeros((1, 1)), 0, 0, 0) == 0.0
    ch = ChannelRealization.from_gains(np.full((1, 1, 1), 3.0), N0=1.0)
    assert rate(ch, np.ones((1, 1)), 0, 0, 0) == pytest.approx(2.0)
    assert rate_approx(1.0, 1.0, 0.5, 1.0, 0.5) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        rate_approx(1.0, 1.0, -0.1, 1.0, 0.5)


def test_required_power_examples():
    assert required_power(3.0, 0.5, 1.0, 1.0, 1.0) == pytest.approx(12.0)
    assert required_power(1.0, 1e-2, 0.0, 1.0, 1e-3) == pytest.approx(0.1)
    assert required_power(SinrTarget(1e-12), 1.0, 1.0, 1.0, 1.0) == pytest.approx(0.0, abs=1e-11)
    assert SinrTarget(2.0).gamma == 3.0
    with pytest.raises(ValueError):
        required_power(1.0, 0.0, 0.0, 1.0, 1.0)


def test_tensors_match_scalar_kernels(rng):
    ch = random_channel(rng, 3, 4, 3)
    p = rng.uniform(0, 1, size=(4, 3))
    I = interference_tensor(ch, p)
    S = sinr_tensor(ch, p)
    R = rate_tensor(ch, p)
    for k in range(3):
        for m in range(4):
            for q in range(3):
                assert I[k, m, q] == pytest.approx(mai(ch, p, k, m, q), rel=1e-12)
                assert S[k, m, q] == pytest.approx(sinr(ch, p, k, m, q), rel=1e-12)
                assert R[k, m, q] == pytest.approx(rate(ch, p, k, m, q), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.one_of(st.just(0.0), st.floats(1e-6, 10.0)))
def test_mai_linear_and_rate_monotone(seed, alpha):
    rng = np.random.default_rng(seed)
    ch = random_channel(rng, 2, 2, 3)
    p = rng.uniform(0, 1, size=(2, 3))
    base = interference_tensor(ch, p)
    assert np.allclose(interference_tensor(ch, alpha * p), alpha * base, rtol=1e-12, atol=0)
    bumped = p.copy()
    bumped[0, 1] += 0.5
    r0, r1 = rate_tensor(ch, p), rate_tensor(ch, bumped)
    assert np.all(r1[:, 0, 1] >= r0[:, 0, 1])
    assert np.all(r1[:, 0, [0, 2]] <= r0[:, 0, [0, 2]])
    assert np.array_equal(r1[:, 1], r0[:, 1])


@settings(max_examples=100, deadline=None)
@given(G=st.floats(1e-12, 1e3), I=st.floats(0, 1e2), eta=st.floats(0.01, 8))
def test_required_power_hits_target(G, I, eta):
    t = SinrTarget(eta)
    p = required_power(t, G, I, 1.0, 1e-3)
    assert G * p / (I + 1e-3) == pytest.approx(t.gamma, rel=1e-12)


def test_single_link_closed_form():
    ch = ChannelRealization.from_gains(np.full((1, 2, 1), 0.01), N0=1e-3)
    p, off = iterative_power_control(ch, [(0, 1, 0)], SinrTarget(1.0), p_max=1.0)
    assert off == set()
    assert p[1, 0] == pytest.approx(0.1, rel=1e-12) and p[0, 0] == 0.0
    p, off = iterative_power_control(ch, [(0, 1, 0)], SinrTarget(1.0), p_max=0.05)
    assert off == {(1, 0)} and not p.any()


def _two_links(g_own, g_cross, noise):
    # user 0 served by cell 0, user 1 by cell 1, both on carrier 0
    g = np.array([[[g_own[0], g_cross[0]]], [[g_cross[1], g_own[1]]]])
    return ChannelRealization.from_gains(g, N0=noise)


def test_two_link_feasible_matches_closed_form(rng):
    for _ in range(50):
        g_own = rng.uniform(0.5, 1.0, 2)
        g_cross = rng.uniform(0.0, 0.3, 2)
        gamma = rng.uniform(0.5, 2.0)
        noise = 1e-2
        expected = two_link_fixed_point(g_own, g_cross, gamma, noise)
        if expected is None or expected.max() > 10.0:
            continue
        ch = _two_links(g_own, g_cross, noise)
        p, off = iterative_power_control(ch, [(0, 0, 0), (1, 0, 1)], gamma, p_max=10.0,
                                         tol=1e-12, max_iter=5000)
        assert off == set()
        assert np.allclose(p[0], expected, rtol=1e-8)


def test_two_link_infeasible_switches_off():
    # gamma^2 * g_cross1 * g_cross2 / (g_own1 * g_own2) = 9 * 0.5 * 0.5 = 2.25 >= 1
    ch = _two_links((1.0, 1.0), (0.5, 0.5), 1e-3)
    target = SinrTarget(2.0)
    assert two_link_fixed_point(np.ones(2), np.full(2, 0.5), target.gamma, 1e-3) is None
    p, off = iterative_power_control(ch, [(0, 0, 0), (1, 0, 1)], target, p_max=1.0)
    assert len(off) >= 1
    survivors = [(k, 0, q) for k, q in ((0, 0), (1, 1)) if (0, q) not in off]
    if survivors:
        assert np.all(link_sinr(ch, p, np.array(survivors)) >= target.gamma * (1 - 1e-8))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), eta=st.floats(0.2, 3.0))
def test_power_control_postcondition(seed, eta):
    rng = np.random.default_rng(seed)
    K, M, Q = 4, 3, 3
    ch = random_channel(rng, K, M, Q, noise=1e-4, spread=2.0)
    links = [(int(rng.integers(K)), m, q) for m in range(M) for q in range(Q)
             if rng.random() < 0.7]
    target = SinrTarget(eta)
    p, off = iterative_power_control(ch, links, target, p_max=1.0)
    alive = np.array([l for l in links if (l[1], l[2]) not in off], dtype=int).reshape(-1, 3)
    assert np.all((p >= 0) & (p <= 1.0))
    assert np.all(link_sinr(ch, p, alive) >= target.gamma * (1 - 1e-8))
    busy = np.zeros((M, Q), bool)
    busy[alive[:, 1], alive[:, 2]] = True
    assert not p[~busy].any()


def test_power_control_rejects_shared_resource():
    ch = ChannelRealization.from_gains(np.ones((2, 1, 1)))
    with pytest.raises(ValueError):
        iterative_power_control(ch, [(0, 0, 0), (1, 0, 0)], 1.0, 1.0)
