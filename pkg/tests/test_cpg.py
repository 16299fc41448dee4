import numpy as np
import pytest

from gaitdiff.cpg import GAITS, Goal, cpg_action, gait_frequency, sample_goal


def closed_form(gait, goal, tick, h0=0.3, k_h=0.25):
    amp = 0.2 + 0.5 * goal.v_des
    freq = 1.5 + goal.v_des
    b = (goal.h_des - h0) / k_h
    delta = 0.1 * goal.omega_des
    side = np.array([1, -1, 1, -1.0])
    ph = np.asarray(gait.phases)
    return amp * np.sin(2 * np.pi * freq * 0.02 * tick + ph) + b + delta * side


def test_trot_zero_goal_tick0_is_zero():
    a = cpg_action(GAITS["trot"], Goal(0.0, 0.3, 0.0), 0)
    assert np.allclose(a, 0.0, atol=1e-15)


def test_hop_legs_identical():
    for tick in (0, 3, 17, 40):
        a = cpg_action(GAITS["hop"], Goal(0.7, 0.4, 0.0), tick)
        assert np.allclose(a, a[0])


def test_pace_matches_closed_form_oracle():
    goal = Goal(0.5, 0.3, 0.2)
    got = cpg_action(GAITS["pace"], goal, 13)
    want = closed_form(GAITS["pace"], goal, 13)
    assert np.allclose(got, want, rtol=0, atol=1e-12)
    # spec'd coefficient values for this goal
    assert 0.2 + 0.5 * goal.v_des == pytest.approx(0.45)
    assert gait_frequency(goal.v_des) == pytest.approx(2.0)
    assert 0.1 * goal.omega_des == pytest.approx(0.02)


def test_periodicity_when_period_is_integral():
    goal = Goal(0.5, 0.35, -0.3)  # f = 2.0 Hz -> period 25 ticks
    period = round(1.0 / (0.02 * gait_frequency(goal.v_des)))
    for g in GAITS.values():
        for t in (0, 7, 12):
            a1 = cpg_action(g, goal, t)
            a2 = cpg_action(g, goal, t + period)
            assert np.allclose(a1, a2, atol=1e-9)


def test_trot_vs_pace_leg3_phase_offset():
    # legs 0 and 3: in phase for trot, anti-phase for pace
    goal = Goal(0.4, 0.3, 0.0)
    f = gait_frequency(goal.v_des)
    period = 1.0 / (0.02 * f)
    ticks = np.arange(int(round(4 * period)))
    for name, expect in (("trot", 0.0), ("pace", np.pi)):
        traj = np.array([cpg_action(GAITS[name], goal, int(t)) for t in ticks])
        x0 = traj[:, 0] - traj[:, 0].mean()
        x3 = traj[:, 3] - traj[:, 3].mean()
        lags = np.arange(int(round(period)))
        corr = [np.sum(x3[lag:] * x0[:len(x0) - lag]) for lag in lags]
        phase = 2 * np.pi * lags[int(np.argmax(corr))] / period
        dist = min(abs(phase - expect), 2 * np.pi - abs(phase - expect))
        assert dist < np.pi / 2


def test_goal_clamping():
    g = Goal(5.0, -1.0, 99.0)
    assert g.v_des == 1.0 and g.h_des == 0.2 and g.omega_des == 1.0
    g = Goal(-3.0, 2.0, -99.0)
    assert g.v_des == 0.0 and g.h_des == 0.6 and g.omega_des == -1.0


def test_negative_tick_rejected():
    with pytest.raises(ValueError):
        cpg_action(GAITS["trot"], Goal(0.5, 0.3, 0.0), -1)


class TestSampleGoal:
    def test_deterministic(self):
        assert sample_goal(11) == sample_goal(11)

    def test_monte_carlo_ranges_and_mean(self):
        rng = np.random.default_rng(2024)
        goals = [sample_goal(rng) for _ in range(10_000)]
        v = np.array([g.v_des for g in goals])
        h = np.array([g.h_des for g in goals])
        w = np.array([g.omega_des for g in goals])
        assert v.min() >= 0.0 and v.max() <= 1.0
        assert h.min() >= 0.2 and h.max() <= 0.6
        assert w.min() >= -1.0 and w.max() <= 1.0
        assert abs(v.mean() - 0.5) < 0.02

    def test_collapsed_range_gives_constant(self):
        g1 = sample_goal(0, v_range=(0.4, 0.4), h_range=(0.3, 0.3), omega_range=(0.1, 0.1))
        g2 = sample_goal(99, v_range=(0.4, 0.4), h_range=(0.3, 0.3), omega_range=(0.1, 0.1))
        assert g1 == g2 == Goal(0.4, 0.3, 0.1)
