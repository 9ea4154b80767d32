"""Linearization, Riccati recursion and the sliding-window gain provider."""

import numpy as np
import pytest

from centroplan.contacts import LqrSettings
from centroplan.errors import ScheduleError
from centroplan.lqr import (
    BLOCK_NORM_HEADER,
    GainSchedule,
    LqrWeights,
    block_norm_rows,
    build_window,
    gains_document,
    linearize,
    momentum_rate_ref,
    policy,
    riccati,
    sliding_recompute,
)
from centroplan.model import CentroidalState, ContactWrench, momentum_rate, skew


def _state_rate(plan, x, poles, wrenches):
    """Full 9-state derivative for finite differencing."""
    st = CentroidalState.from_vector(x)
    h = momentum_rate(st, poles, wrenches, plan.scenario.params)
    return np.concatenate([x[3:6] / plan.scenario.params.mass, h])


class TestLinearize:
    def test_matches_finite_differences(self, benchmark_plan, rng):
        for t in rng.uniform(0.1, 7.9, size=6):
            A, B, poles, _ = linearize(benchmark_plan, t)
            _, forces, torques, _ = benchmark_plan.pole_wrenches(t)
            wr = [ContactWrench(f, tau) for f, tau in zip(forces, torques)]
            x0 = benchmark_plan.state(t).as_vector()
            lam0 = np.concatenate([np.r_[f, tau] for f, tau in zip(forces, torques)])

            for k in range(9):
                e = np.zeros(9)
                e[k] = 1e-6
                fd = (
                    _state_rate(benchmark_plan, x0 + e, poles, wr)
                    - _state_rate(benchmark_plan, x0 - e, poles, wr)
                ) / 2e-6
                scale = max(1.0, np.max(np.abs(fd)))
                assert np.allclose(A[:, k], fd, atol=1e-6 * scale)

            for k in range(len(lam0)):
                e = np.zeros(len(lam0))
                e[k] = 1e-6
                wr_p = [
                    ContactWrench((lam0 + e)[6 * i : 6 * i + 3], (lam0 + e)[6 * i + 3 : 6 * i + 6])
                    for i in range(len(poles))
                ]
                wr_m = [
                    ContactWrench((lam0 - e)[6 * i : 6 * i + 3], (lam0 - e)[6 * i + 3 : 6 * i + 6])
                    for i in range(len(poles))
                ]
                fd = (
                    _state_rate(benchmark_plan, x0, poles, wr_p)
                    - _state_rate(benchmark_plan, x0, poles, wr_m)
                ) / 2e-6
                assert np.allclose(B[:, k], fd, atol=1e-6)

    def test_zero_force_reduces_to_double_integrator(self, standing_scenario):
        from centroplan.optimizer import DecisionLayout, extract_plan

        plan = extract_plan(np.zeros(DecisionLayout(standing_scenario).dim), standing_scenario)
        A, _B, _poles, _ = linearize(plan, 0.5)
        assert np.allclose(A[6:9, 0:3], 0.0)

    def test_kappa_block_is_force_cross_matrix(self, standing_plan):
        A, _B, _poles, _ = linearize(standing_plan, 1.0)
        _, forces, _, _ = standing_plan.pole_wrenches(1.0)
        assert np.allclose(A[6:9, 0:3], skew(np.sum(forces, axis=0)), atol=1e-12)


class TestRiccati:
    def test_no_input_means_no_gain(self):
        A = np.eye(3) * 0.9
        dyn = [(A, np.zeros((3, 0))) for _ in range(10)]
        # width-0 input: solve degenerates to an empty gain
        gains, cost = riccati(dyn, LqrWeights(q_state=1.0))
        assert all(K.shape == (0, 3) for K in gains)
        assert len(cost) == 11

    def test_cost_to_go_symmetric_psd(self, standing_plan):
        window = build_window(standing_plan, 0.0, standing_plan.scenario.lqr)
        for P in window.cost_to_go:
            assert np.allclose(P, P.T, atol=1e-10 * max(1.0, np.linalg.norm(P)))
            assert np.min(np.linalg.eigvalsh(P)) >= -1e-10 * np.linalg.norm(P)

    def test_static_closed_loop_is_contractive(self, standing_plan):
        settings = standing_plan.scenario.lqr
        window = build_window(standing_plan, 0.0, settings)
        for step in window.steps[:20]:
            A, B, _, _ = linearize(standing_plan, step.t)
            Ad = np.eye(9) + settings.dt * A
            Bd = settings.dt * B
            rho = np.max(np.abs(np.linalg.eigvals(Ad - Bd @ step.K)))
            assert rho < 1.0


class TestPolicy:
    def test_zero_error_returns_feedforward(self, standing_plan):
        window = build_window(standing_plan, 0.0, standing_plan.scenario.lqr)
        t = 0.42
        step = window.step_at(t)
        lam = policy(window, standing_plan.state(t), t)
        assert np.allclose(lam, step.lam_star, atol=1e-9)

    def test_feedback_is_linear_in_error(self, standing_plan):
        window = build_window(standing_plan, 0.0, standing_plan.scenario.lqr)
        t = 0.42
        step = window.step_at(t)
        dx = np.r_[0.01, 0.0, 0.0, np.zeros(6)]
        d1 = policy(window, step.x_star + dx, t) - step.lam_star
        d2 = policy(window, step.x_star + 2 * dx, t) - step.lam_star
        assert np.allclose(d2, 2 * d1, atol=1e-12)

    def test_momentum_rate_ref_identities(self, standing_plan):
        window = build_window(standing_plan, 0.0, standing_plan.scenario.lqr)
        t = 0.42
        step = window.step_at(t)
        assert np.allclose(momentum_rate_ref(window, step.x_star, t), step.hdot_star)
        dx = np.zeros(9)
        dx[0] = 0.02
        got = momentum_rate_ref(window, step.x_star + dx, t)
        assert np.allclose(got, step.hdot_star + step.wmap @ (-step.K @ dx), atol=1e-12)

    def test_outside_window_raises(self, standing_plan):
        window = build_window(standing_plan, 0.0, standing_plan.scenario.lqr)
        with pytest.raises(ScheduleError):
            policy(window, np.zeros(9), 5.0)


class TestSliding:
    def test_static_plan_windows_identical(self, standing_plan):
        settings = LqrSettings(horizon=0.5, dt=0.01, stride=0.01)
        provider = sliding_recompute(standing_plan, settings)
        k0 = provider.window(0.0).steps[0].K
        k1 = provider.window(0.3).steps[0].K
        assert np.allclose(k0, k1, atol=1e-9)

    def test_window_clamps_near_plan_end(self, standing_plan):
        provider = sliding_recompute(standing_plan)
        step = provider(standing_plan.horizon - 1e-6)
        assert step.t <= standing_plan.horizon
        win = provider.window(standing_plan.horizon - 1e-6)
        assert win.t0 <= standing_plan.horizon - win.dt + 1e-9

    def test_windows_are_cached(self, standing_plan):
        provider = sliding_recompute(standing_plan, LqrSettings(horizon=0.5))
        assert provider.window(0.123) is provider.window(0.125)

    def test_gain_dimension_tracks_contact_count(self, benchmark_plan):
        provider = sliding_recompute(benchmark_plan)
        assert provider(2.5).K.shape == (12, 9)   # double support
        assert provider(3.5).K.shape == (6, 9)    # single support


def test_gain_norms_jump_at_contact_switch(benchmark_plan):
    # one window spanning the 3 s liftoff: the gain blocks change
    # discontinuously where the support mode switches
    window = build_window(benchmark_plan, 2.0, benchmark_plan.scenario.lqr)
    rows = np.array([r for r in block_norm_rows(window.steps)])
    t = rows[:, 0]
    before = rows[np.isclose(t, 2.99)][0]
    after = rows[np.isclose(t, 3.00)][0]
    assert before[1] == 2 and after[1] == 1
    jump = np.max(np.abs(before[2:] - after[2:]))
    smooth = np.max(
        np.abs(rows[np.isclose(t, 2.98)][0][2:] - before[2:])
    )
    assert jump > 3 * max(smooth, 1e-12)


def test_gains_document_shape(standing_plan):
    window = build_window(standing_plan, 0.0, standing_plan.scenario.lqr)
    doc = gains_document(window)
    assert doc["n_steps"] == len(window.steps) == 200
    step = doc["steps"][0]
    assert np.asarray(step["K"]).shape == (12, 9)
    assert len(step["lambda_star"]) == 12
    assert len(BLOCK_NORM_HEADER) == 8


def test_schedule_index_convention():
    sched = GainSchedule(t0=1.0, dt=0.1, steps=["a", "b", "c"])
    assert sched.index_of(1.0) == 0
    assert sched.index_of(1.1999) == 1
    assert sched.index_of(1.2) == 2
    with pytest.raises(ScheduleError):
        sched.index_of(1.3)
