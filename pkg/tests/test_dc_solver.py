"""Rules and outer loop of the successive-convexification planner."""

import math

import numpy as np
import pytest

from tilecast import (InfeasibleDirectionError, Message, audit_allocation,
                      dc_solve, sample_channel, solve_quoted_allocation)
from tilecast.beamforming import beam_plan_asymptotic
from tilecast.dc_solver import (DcDuals, DcState, feasible_beam,
                                initial_point, pair_score, pick_assignment,
                                price_step, priced_rate, solve_convex_approx)

LN2 = math.log(2.0)
B = 39e3


def _msg(subset, audience, demand):
    return Message(subset=subset, level=1, audience=audience, tile_count=1,
                   demand_bits_per_s=demand)


# ---------------------------------------------------------------------------
# scoring and assignment rules
# ---------------------------------------------------------------------------

def test_pair_score_zero_demand_price():
    assert pair_score(0.0, 3.25, B) == 3.25


def test_pair_score_log_term_vanishes():
    lam_sum = 0.7
    gamma = LN2 * lam_sum
    assert pair_score(gamma, lam_sum, B) == pytest.approx(
        -gamma * B / LN2 + lam_sum, rel=1e-12)


def test_pair_score_zero_price_sum():
    assert pair_score(1.0, 0.0, B) == -math.inf
    assert pair_score(0.0, 0.0, B) == 0.0


def test_pair_score_rejects_negative_prices():
    with pytest.raises(ValueError):
        pair_score(-1.0, 1.0, B)
    with pytest.raises(ValueError):
        pair_score(1.0, -1.0, B)


def test_pick_unique_max():
    assert pick_assignment([1.0, 3.0, 2.0]) == (1, True)


def test_pick_tie_prefers_smaller_id():
    idx, unique = pick_assignment([5.0, 5.0, 1.0])
    assert idx == 0
    assert not unique


def test_pick_all_blocked():
    with pytest.raises(ValueError):
        pick_assignment([-math.inf, -math.inf])


def test_pick_matches_independent_scan():
    rng = np.random.default_rng(3)
    for _ in range(100):
        scores = rng.normal(size=5)
        idx, unique = pick_assignment(scores)
        assert idx == int(np.argmax(scores))
        assert unique


def test_priced_rate_cases():
    lam_sum = 0.5
    gamma = 2.0 * LN2 * lam_sum           # price ratio 2, log2 gives 1
    assert priced_rate(gamma, lam_sum, 1, B) == pytest.approx(B)
    assert priced_rate(gamma, lam_sum, 0, B) == 0.0
    assert priced_rate(0.5 * LN2 * lam_sum, lam_sum, 1, B) == 0.0
    assert priced_rate(1.0, 0.0, 1, B) == math.inf
    assert priced_rate(0.0, 0.7, 1, B) == 0.0
    with pytest.raises(ValueError):
        priced_rate(1.0, 1.0, 0.5, B)


# ---------------------------------------------------------------------------
# beam restoration
# ---------------------------------------------------------------------------

def _lin_slack(h_aud, beta, w_prev, w, c_bits, noise_w, bandwidth):
    """Slack of the linearized per-user rate constraint; >= 0 is feasible."""
    m = w_prev.shape[0]
    hw = h_aud.conj() @ w_prev
    hv = h_aud.conj() @ w
    lhs = (2.0 ** (c_bits / bandwidth) - 1.0) + beta * np.abs(hw) ** 2 / (m * noise_w)
    rhs = 2.0 * beta * (hw.conj() * hv).real / (m * noise_w)
    return rhs - lhs


def test_feasible_beam_unassigned_is_zero():
    h = np.array([[1.0, 0.0]], dtype=complex)
    w = feasible_beam([1.0], h, 1.0, np.array([1.0, 0.0], dtype=complex),
                      0, 2.0 * B, 1e-9, B)
    assert np.all(w == 0)


def test_feasible_beam_orthogonal_linearization_point():
    h = np.array([[1.0, 0.0]], dtype=complex)
    w_prev = np.array([0.0, 1.0], dtype=complex)
    w = feasible_beam([1.0], h, 1.0, w_prev, 1, 2.0 * B, 1e-9, B)
    assert np.all(w == 0)


def test_feasible_beam_single_user_algebra():
    rng = np.random.default_rng(5)
    h0 = (rng.normal(size=3) + 1j * rng.normal(size=3)) / np.sqrt(2)
    h = h0[None, :]
    beta, noise, c = 1.3, 2e-9, 1.7 * B
    w_prev = h0 / np.linalg.norm(h0)
    w = feasible_beam([1.0], h, beta, w_prev, 1, c, noise, B)
    # direction is the user's own channel
    cos = abs(np.vdot(w, h0)) / (np.linalg.norm(w) * np.linalg.norm(h0))
    assert cos == pytest.approx(1.0, abs=1e-12)
    # and the stretch puts the single user exactly on the constraint
    slack = _lin_slack(h, np.array([beta]), w_prev, w, c, noise, B)
    assert slack[0] == pytest.approx(0.0, abs=1e-9 * (2.0 ** (c / B)))


def test_feasible_beam_zero_rate_still_covers_offset():
    rng = np.random.default_rng(6)
    h0 = (rng.normal(size=4) + 1j * rng.normal(size=4)) / np.sqrt(2)
    h = h0[None, :]
    w_prev = h0 / np.linalg.norm(h0)
    w = feasible_beam([2.0], h, 1.0, w_prev, 1, 0.0, 1e-9, B)
    slack = _lin_slack(h, np.array([1.0]), w_prev, w, 0.0, 1e-9, B)
    assert slack[0] == pytest.approx(0.0, abs=1e-6)


def test_feasible_beam_multiuser_feasible_with_equality_at_binding_user():
    rng = np.random.default_rng(7)
    a, m = 3, 5
    h = (rng.normal(size=(a, m)) + 1j * rng.normal(size=(a, m))) / np.sqrt(2)
    beta = rng.uniform(0.5, 2.0, size=a)
    prices = rng.uniform(0.1, 1.0, size=a)
    w_prev = (rng.normal(size=m) + 1j * rng.normal(size=m))
    w_prev /= np.linalg.norm(w_prev)
    c = 1.2 * B
    w = feasible_beam(prices, h, beta, w_prev, 1, c, 1e-9, B)
    slack = _lin_slack(h, beta, w_prev, w, c, 1e-9, B)
    scale = np.abs(slack).max() + 2.0 ** (c / B)
    assert np.all(slack >= -1e-9 * scale)
    assert slack.min() == pytest.approx(0.0, abs=1e-9 * scale)


def test_feasible_beam_unreachable_user_raises():
    h = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=complex)
    w_prev = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2)
    # all price weight on user 2: direction misses user 1 entirely
    with pytest.raises(InfeasibleDirectionError):
        feasible_beam([0.0, 1.0], h, 1.0, w_prev, 1, 1.5 * B, 1e-9, B)


def test_feasible_beam_dimension_mismatch():
    h = np.array([[1.0, 0.0]], dtype=complex)
    with pytest.raises(ValueError):
        feasible_beam([1.0], h, 1.0, np.array([1.0, 0.0, 0.0], dtype=complex),
                      1, B, 1e-9, B)


# ---------------------------------------------------------------------------
# price updates and state containers
# ---------------------------------------------------------------------------

def test_price_step_zero_residuals_unchanged():
    duals = DcDuals(demand_price=np.array([1.0, 2.0]),
                    user_price=np.array([0.5]))
    out = price_step(duals, np.array([0.0]), np.array([0.0, 0.0]), 0.1)
    np.testing.assert_array_equal(out.demand_price, duals.demand_price)
    np.testing.assert_array_equal(out.user_price, duals.user_price)


def test_price_step_projects_to_zero():
    duals = DcDuals(demand_price=np.array([0.1]), user_price=np.array([0.0]))
    out = price_step(duals, np.array([-5.0]), np.array([-5.0]), 1.0)
    assert out.demand_price[0] == 0.0
    assert out.user_price[0] == 0.0


def test_price_step_hand_case():
    duals = DcDuals(demand_price=np.array([1.0]), user_price=np.array([2.0]))
    out = price_step(duals, np.array([0.25]), np.array([-0.5]), 2.0)
    assert out.user_price[0] == pytest.approx(2.5)
    assert out.demand_price[0] == 0.0


def test_price_step_requires_positive_step():
    duals = DcDuals(demand_price=np.array([1.0]), user_price=np.array([1.0]))
    with pytest.raises(ValueError):
        price_step(duals, np.array([0.0]), np.array([0.0]), 0.0)


def test_state_validation():
    w = np.zeros((2, 3, 4), dtype=complex)
    mu = np.array([[1.0, 0.5, 0.0], [0.0, 0.5, 1.0]])
    rate = np.zeros((2, 3))
    DcState(scaled_beams=w, assign_frac=mu, rate=rate)
    with pytest.raises(ValueError):
        DcState(scaled_beams=w, assign_frac=0.5 * mu, rate=rate)
    with pytest.raises(ValueError):
        DcState(scaled_beams=w, assign_frac=mu, rate=rate - 1.0)
    with pytest.raises(ValueError):
        DcDuals(demand_price=np.array([-1.0]), user_price=np.array([0.0]))


# ---------------------------------------------------------------------------
# start point
# ---------------------------------------------------------------------------

def test_initial_point_energy_matches_quoted_solution():
    ch = sample_channel(41, m=4, n_sc=6, k_users=2)
    messages = [_msg((1,), (1,), 1.5 * B), _msg((1, 2), (1, 2), 2.0 * B)]
    state = initial_point(ch, messages)
    plan = beam_plan_asymptotic(ch, messages)
    alloc = solve_quoted_allocation(messages, plan.q, ch.bandwidth_hz)
    assert state.total_power_w == pytest.approx(alloc.power_sum / ch.m,
                                                rel=1e-12)
    np.testing.assert_array_equal(state.assign_frac.sum(axis=0),
                                  np.ones(ch.n_sc))


def test_initial_point_single_user_beams_are_mrt():
    ch = sample_channel(42, m=3, n_sc=4, k_users=1)
    messages = [_msg((1,), (1,), 2.5 * B)]
    state = initial_point(ch, messages)
    for n in range(ch.n_sc):
        v = state.scaled_beams[0, n]
        p = np.linalg.norm(v) ** 2
        if p == 0:
            continue
        hn = ch.h[n, 0]
        cos = abs(np.vdot(v, hn)) / (np.linalg.norm(v) * np.linalg.norm(hn))
        assert cos == pytest.approx(1.0, abs=1e-12)


def test_initial_point_random_mode_feasible():
    ch = sample_channel(43, m=3, n_sc=5, k_users=2)
    messages = [_msg((1,), (1,), 1.0 * B), _msg((2,), (2,), 1.0 * B)]
    state = initial_point(ch, messages, mode="random", seed=9)
    assert np.all(state.rate.sum(axis=1) >= np.array([B, B]) * (1 - 1e-9))
    np.testing.assert_allclose(state.assign_frac.sum(axis=0), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        initial_point(ch, messages, mode="pessimistic")


# ---------------------------------------------------------------------------
# one convexified solve
# ---------------------------------------------------------------------------

def test_convex_approx_requires_state():
    ch = sample_channel(44, m=2, n_sc=2, k_users=1)
    with pytest.raises(TypeError):
        solve_convex_approx(np.zeros((1, 2, 2)), ch, [_msg((1,), (1,), B)])


def test_convex_approx_single_user_near_waterfill():
    ch = sample_channel(45, m=3, n_sc=4, k_users=1)
    messages = [_msg((1,), (1,), 2.0 * B)]
    state = initial_point(ch, messages)
    out, duals, info = solve_convex_approx(state, ch, messages)
    plan = beam_plan_asymptotic(ch, messages)    # single user: MRT quotes
    ref = solve_quoted_allocation(messages, plan.q, ch.bandwidth_hz)
    assert out.total_power_w <= (ref.power_sum / ch.m) * (1 + 1e-3)
    np.testing.assert_allclose(out.assign_frac.sum(axis=0), 1.0, atol=1e-12)
    assert info["iterations"] >= 1


def test_convex_approx_fixed_point():
    ch = sample_channel(46, m=3, n_sc=4, k_users=2)
    messages = [_msg((1,), (1,), 1.2 * B), _msg((1, 2), (1, 2), 1.5 * B)]
    state = initial_point(ch, messages)
    duals = None
    prev = state.total_power_w
    for _ in range(40):
        state, duals, _ = solve_convex_approx(state, ch, messages, duals=duals)
        if abs(prev - state.total_power_w) <= 1e-8 * prev:
            break
        prev = state.total_power_w
    again, _, _ = solve_convex_approx(state, ch, messages, duals=duals)
    assert again.total_power_w == pytest.approx(state.total_power_w, rel=5e-4)


# ---------------------------------------------------------------------------
# full outer loop
# ---------------------------------------------------------------------------

def test_dc_solve_small_instance():
    ch = sample_channel(47, m=4, n_sc=6, k_users=3)
    messages = [_msg((1,), (1,), 1.5 * B),
                _msg((2, 3), (2, 3), 2.0 * B),
                _msg((1, 2, 3), (2,), 1.0 * B)]
    alloc = dc_solve(ch, messages)
    trace = alloc.diagnostics["e_trace"]
    assert len(trace) >= 1
    for a, b in zip(trace, trace[1:]):
        assert b <= a * (1 + 1e-8)
    assert set(np.unique(alloc.assign)) <= {0, 1}
    assert audit_allocation(alloc, ch, messages) == []
    assert alloc.total_power_w == pytest.approx(trace[-1], rel=1e-9)
    assert alloc.diagnostics["start_mode"] == "asymptotic"
    assert alloc.converged


def test_dc_solve_never_worse_than_start():
    ch = sample_channel(48, m=4, n_sc=5, k_users=2)
    messages = [_msg((1,), (1,), 1.0 * B), _msg((1, 2), (1, 2), 2.0 * B)]
    start = initial_point(ch, messages)
    alloc = dc_solve(ch, messages)
    assert alloc.total_power_w <= start.total_power_w * (1 + 1e-9)


def test_dc_solve_single_user_matches_asymptotic():
    ch = sample_channel(49, m=4, n_sc=6, k_users=1)
    messages = [_msg((1,), (1,), 3.0 * B)]
    alloc = dc_solve(ch, messages)
    plan = beam_plan_asymptotic(ch, messages)
    ref = solve_quoted_allocation(messages, plan.q, ch.bandwidth_hz)
    ref_w = ref.power_sum / ch.m
    assert alloc.total_power_w <= ref_w * (1 + 1e-9)
    assert alloc.total_power_w >= ref_w * 0.98
    assert audit_allocation(alloc, ch, messages) == []


def test_dc_solve_random_start_stays_feasible():
    ch = sample_channel(50, m=3, n_sc=4, k_users=2)
    messages = [_msg((1,), (1,), 1.0 * B), _msg((2,), (2,), 1.5 * B)]
    alloc = dc_solve(ch, messages, mode="random", seed=1)
    trace = alloc.diagnostics["e_trace"]
    for a, b in zip(trace, trace[1:]):
        assert b <= a * (1 + 1e-8)
    assert audit_allocation(alloc, ch, messages) == []
    assert alloc.diagnostics["start_mode"] == "random"
