import numpy as np
import pytest

from mtquad import geom
from mtquad.dynamics import QuadState
from mtquad.tasks import (
    RacingRewardCoeffs,
    StabilizationRewardCoeffs,
    TrackingRewardCoeffs,
    racing_reward,
    stabilization_reward,
    tracking_reward,
)
from mtquad.tracks import Gate, Track


def make_state(p=(0, 0, 0), q=(1, 0, 0, 0), v=(0, 0, 0), omega=(0, 0, 0)):
    return QuadState(
        p_WB=np.array(p, dtype=float),
        q_WB=np.array(q, dtype=float),
        v_WB=np.array(v, dtype=float),
        omega_B=np.array(omega, dtype=float),
        motor_thrusts=np.zeros(4),
    )


@pytest.fixture
def straight_track():
    gates = [Gate.from_yaw([5.0, 0, 1.0], 0.0), Gate.from_yaw([10.0, 0, 1.0], 0.0)]
    return Track(gates=gates, name="straight")


class TestTunedCoefficients:
    def test_racing_table(self):
        c = RacingRewardCoeffs()
        assert (c.progress, c.perception, c.perception_exp) == (0.5, 0.025, -1.0)
        assert (c.action_diff, c.body_rate) == (-2e-4, -5e-4)
        assert (c.gate_pass, c.crash) == (-5.0, -10.0)

    def test_stabilization_table(self):
        c = StabilizationRewardCoeffs()
        assert (c.height, c.attitude, c.velocity) == (-2e-3, -2e-4, -4e-5)
        assert (c.body_rate, c.action_diff, c.success) == (-1e-5, -1e-4, 10.0)

    def test_tracking_table(self):
        c = TrackingRewardCoeffs()
        assert (c.velocity, c.body_rate, c.action_diff) == (-2e-4, -1.2e-3, -1e-4)


class TestRacingReward:
    def test_stationary_perception_only(self, straight_track):
        # facing the gate dead-on: every term vanishes except perception
        state = make_state(p=(0, 0, 1.0))
        r, comps = racing_reward(state, state, np.zeros(4), np.zeros(4), straight_track, 0)
        assert r == pytest.approx(0.025, abs=1e-15)
        assert comps["perception"] == pytest.approx(0.025, abs=1e-15)
        assert comps["progress"] == 0.0

    def test_progress_term(self, straight_track):
        prev = make_state(p=(0, 0, 1.0))
        curr = make_state(p=(0.2, 0, 1.0))
        r, comps = racing_reward(prev, curr, np.zeros(4), np.zeros(4), straight_track, 0)
        assert comps["progress"] == pytest.approx(0.1, abs=1e-12)

    def test_crash_component(self, straight_track):
        state = make_state(p=(0, 0, 1.0))
        _, comps = racing_reward(
            state, state, np.zeros(4), np.zeros(4), straight_track, 0, crashed=True
        )
        assert comps["crash"] == -10.0

    def test_pass_component_uses_tuned_sign(self, straight_track):
        state = make_state(p=(0, 0, 1.0))
        _, comps = racing_reward(
            state, state, np.zeros(4), np.zeros(4), straight_track, 0, passed=True
        )
        assert comps["gate_pass"] == -5.0

    def test_perception_angle_dependence(self, straight_track):
        # yawed 90 degrees away from the gate direction
        c = np.cos(np.pi / 4)
        state = make_state(p=(0, 0, 1.0), q=(c, 0, 0, c))
        _, comps = racing_reward(state, state, np.zeros(4), np.zeros(4), straight_track, 0)
        expected = 0.025 * np.exp(-1.0 * (np.pi / 2) ** 4)
        assert comps["perception"] == pytest.approx(expected, rel=1e-9)

    def test_action_and_body_rate_penalties(self, straight_track):
        state = make_state(p=(0, 0, 1.0), omega=(0, 0, 2.0))
        u_t = np.array([0.5, 0, 0, 0])
        r, comps = racing_reward(state, state, u_t, np.zeros(4), straight_track, 0)
        assert comps["action_diff"] == pytest.approx(-2e-4 * 0.5, abs=1e-15)
        assert comps["body_rate"] == pytest.approx(-5e-4 * 2.0, abs=1e-15)

    def test_components_sum_to_reward(self, straight_track):
        rng = np.random.default_rng(3)
        for _ in range(20):
            prev = make_state(p=rng.uniform(-5, 5, 3))
            curr = make_state(
                p=rng.uniform(-5, 5, 3),
                q=geom.random_unit_quat(rng),
                omega=rng.uniform(-3, 3, 3),
            )
            r, comps = racing_reward(
                prev, curr, rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4),
                straight_track, 0, passed=bool(rng.integers(2)), crashed=bool(rng.integers(2)),
            )
            assert r == pytest.approx(sum(comps.values()), abs=1e-12)

    def test_translation_invariance_whole_scene(self):
        rng = np.random.default_rng(4)
        t = np.array([3.0, -7.0, 2.0])
        gates = [Gate.from_yaw([5.0, 0, 1.0], 0.0), Gate.from_yaw([10.0, 2.0, 1.0], 45.0)]
        shifted = [Gate.from_yaw(g.center + t, 0.0) for g in gates]
        shifted[1] = Gate.from_yaw(gates[1].center + t, 45.0)
        track_a, track_b = Track(gates=gates), Track(gates=shifted)
        q = geom.random_unit_quat(rng)
        for _ in range(5):
            p0, p1 = rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3)
            u_t, u_prev = rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4)
            ra, ca = racing_reward(make_state(p=p0, q=q), make_state(p=p1, q=q), u_t, u_prev, track_a, 0)
            rb, cb = racing_reward(
                make_state(p=p0 + t, q=q), make_state(p=p1 + t, q=q), u_t, u_prev, track_b, 0
            )
            assert ra == pytest.approx(rb, abs=1e-9)
            for k in ca:
                assert ca[k] == pytest.approx(cb[k], abs=1e-9)


class TestStabilizationReward:
    def test_perfect_hover_before_success_flag(self):
        state = make_state(p=(0, 0, 3.0))
        r, comps = stabilization_reward(state, np.zeros(4), np.zeros(4), z_d=3.0)
        assert r == 0.0
        assert all(v == 0.0 for v in comps.values())

    def test_velocity_penalty(self):
        state = make_state(p=(0, 0, 3.0), v=(1.0, 0, 0))
        _, comps = stabilization_reward(state, np.zeros(4), np.zeros(4), z_d=3.0)
        assert comps["velocity"] == pytest.approx(-4e-5, abs=1e-18)

    def test_height_penalty(self):
        state = make_state(p=(0, 0, 5.0))
        _, comps = stabilization_reward(state, np.zeros(4), np.zeros(4), z_d=3.0)
        assert comps["height"] == pytest.approx(-4e-3, abs=1e-18)

    def test_success_bonus(self):
        state = make_state(p=(0, 0, 3.0))
        r, comps = stabilization_reward(state, np.zeros(4), np.zeros(4), z_d=3.0, hovering=True)
        assert comps["success"] == 10.0
        assert r == 10.0

    def test_attitude_geodesic_angle(self):
        q = geom.quat_from_axis_angle(np.array([1.0, 0, 0]), 0.3)
        state = make_state(p=(0, 0, 3.0), q=q)
        _, comps = stabilization_reward(state, np.zeros(4), np.zeros(4), z_d=3.0)
        assert comps["attitude"] == pytest.approx(-2e-4 * 0.3, rel=1e-9)

    def test_attitude_tilt_mode_ignores_yaw(self):
        coeffs = StabilizationRewardCoeffs(attitude_mode="tilt")
        q = geom.quat_from_axis_angle(np.array([0.0, 0, 1.0]), 1.0)  # pure yaw
        state = make_state(p=(0, 0, 3.0), q=q)
        _, comps = stabilization_reward(state, np.zeros(4), np.zeros(4), 3.0, coeffs=coeffs)
        assert comps["attitude"] == pytest.approx(0.0, abs=1e-12)

    def test_components_sum(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            state = make_state(
                p=rng.uniform(-2, 8, 3), q=geom.random_unit_quat(rng),
                v=rng.uniform(-5, 5, 3), omega=rng.uniform(-3, 3, 3),
            )
            r, comps = stabilization_reward(
                state, rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4), 3.0,
                hovering=bool(rng.integers(2)),
            )
            assert r == pytest.approx(sum(comps.values()), abs=1e-12)


class TestTrackingReward:
    def test_perfect_tracking(self):
        state = make_state(v=(2.0, 0, 0))
        r, _ = tracking_reward(state, np.zeros(4), np.zeros(4), np.array([2.0, 0, 0]))
        assert r == 0.0

    def test_velocity_error(self):
        state = make_state(v=(3.0, 0, 0))
        r, comps = tracking_reward(state, np.zeros(4), np.zeros(4), np.array([1.0, 0, 0]))
        assert comps["velocity"] == pytest.approx(-4e-4, abs=1e-18)
        assert r == pytest.approx(-4e-4, abs=1e-18)

    def test_body_rate_penalty(self):
        state = make_state(omega=(0, 0, 1.0))
        r, _ = tracking_reward(state, np.zeros(4), np.zeros(4), np.zeros(3))
        assert r == pytest.approx(-1.2e-3, abs=1e-18)

    def test_components_sum(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            state = make_state(v=rng.uniform(-10, 10, 3), omega=rng.uniform(-3, 3, 3))
            r, comps = tracking_reward(
                state, rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4), rng.uniform(-5, 5, 3)
            )
            assert r == pytest.approx(sum(comps.values()), abs=1e-12)
