"""NLP assembly, the augmented-Lagrangian solver and plan extraction."""

from dataclasses import replace

import numpy as np
import pytest

from centroplan.contacts import ContactSchedule
from centroplan.errors import ScheduleError
from centroplan.optimizer import (
    DecisionLayout,
    ReferenceTrajectory,
    assemble,
    extract_plan,
    objective_grid,
    receding_shift,
    solve,
    window_scenario,
)

_CHANNELS = ("fx", "fy", "fz", "tau", "ux", "uy")


def _hold_refs(scenario):
    return ReferenceTrajectory.hold(scenario.initial_state, scenario.horizon)


def _gravity_x(scenario, layout):
    """Constant vertical force split evenly over the two coplanar feet."""
    x = np.zeros(layout.dim)
    share = scenario.params.mass * 9.81 / len(scenario.schedule.phases)
    for i in range(len(scenario.schedule.phases)):
        x[layout.sl(i, "fz").start] = share
    return x


def test_layout_is_a_bijection(benchmark_scenario):
    layout = DecisionLayout(benchmark_scenario)
    seen = np.zeros(layout.dim, dtype=int)
    for i in range(len(benchmark_scenario.schedule.phases)):
        for ch in _CHANNELS:
            seen[layout.sl(i, ch)] += 1
    assert np.all(seen == 1)


def test_objective_positive_at_zero_force(standing_scenario):
    problem = assemble(standing_scenario, _hold_refs(standing_scenario))
    J = problem.objective(np.zeros(problem.layout.dim))
    assert np.isfinite(J)
    assert J > 1.0  # ballistic drift plus the l-dot = Mg rate term


def test_gravity_compensation_is_stationary_and_feasible(standing_scenario):
    problem = assemble(standing_scenario, _hold_refs(standing_scenario))
    x = _gravity_x(standing_scenario, problem.layout)
    assert problem.objective(x) <= 1e-16
    assert np.linalg.norm(problem.gradient(x)) <= 1e-8
    assert problem.max_violation(x) <= 0.0


def test_residual_identity(standing_scenario, rng):
    problem = assemble(standing_scenario, _hold_refs(standing_scenario))
    x = rng.normal(size=problem.layout.dim) * 20.0
    r, J = problem.residuals(x)
    assert np.isclose(r @ r, problem.objective(x), rtol=1e-12)
    assert np.allclose(2.0 * J.T @ r, problem.gradient(x), rtol=1e-9, atol=1e-9)


def test_gradient_matches_finite_differences(standing_scenario, rng):
    problem = assemble(standing_scenario, _hold_refs(standing_scenario))
    x = rng.normal(size=problem.layout.dim) * 10.0
    g = problem.gradient(x)
    for k in rng.choice(problem.layout.dim, size=6, replace=False):
        h = 1e-6 * (1.0 + abs(x[k]))
        e = np.zeros_like(x)
        e[k] = h
        fd = (problem.objective(x + e) - problem.objective(x - e)) / (2 * h)
        assert np.isclose(g[k], fd, rtol=1e-5, atol=1e-7)


def test_constraint_rows_match_schedule_count(benchmark_scenario):
    sc = benchmark_scenario
    problem = assemble(sc, _hold_refs(sc))
    knots = sc.optimizer.knots_per_phase + 2
    expected = 0
    for ph in sc.schedule.phases:
        expected += 12 * knots  # 4 cop + 2 torque + 4 pyramid + 2 cap
        leaves = ph.t_end < sc.horizon and not any(
            o.effector == ph.effector and abs(o.t_start - ph.t_end) < 1e-9
            for o in sc.schedule.phases
        )
        if leaves:
            expected += 8  # terminal zero force and torque
    assert problem.A.shape == (expected, problem.layout.dim)
    assert len(problem.labels) == expected


def test_terminal_rows_only_at_liftoff(benchmark_scenario):
    problem = assemble(benchmark_scenario, _hold_refs(benchmark_scenario))
    terminal_phases = {lab[1] for lab in problem.labels if lab[0].startswith("terminal")}
    phases = benchmark_scenario.schedule.phases
    ends = {phases[i].t_end for i in terminal_phases}
    assert ends == {3.0, 5.0, 7.0}


def test_objective_invariant_under_phase_relabeling(standing_scenario, rng):
    sc = standing_scenario
    problem = assemble(sc, _hold_refs(sc))
    swapped = replace(
        sc,
        schedule=ContactSchedule(phases=sc.schedule.phases[::-1], horizon=sc.horizon),
    )
    problem2 = assemble(swapped, _hold_refs(swapped))
    x = rng.normal(size=problem.layout.dim) * 5.0
    x2 = np.empty_like(x)
    for i_new, i_old in enumerate((1, 0)):
        for ch in _CHANNELS:
            x2[problem2.layout.sl(i_new, ch)] = x[problem.layout.sl(i_old, ch)]
    assert np.isclose(problem.objective(x), problem2.objective(x2), rtol=1e-12)


class TestSolve:
    def test_standing_converges(self, standing_solution):
        _plan, diag, problem = standing_solution
        assert diag.converged
        assert diag.termination == "tol"
        assert diag.max_violation <= 1e-6

    def test_standing_plan_is_static(self, standing_plan):
        r0 = standing_plan.r(0.0)
        for t in np.linspace(0, standing_plan.horizon, 9):
            assert np.allclose(standing_plan.r(t), r0, atol=1e-6)

    def test_solution_feasible_at_labeled_rows(self, standing_solution):
        plan, _diag, problem = standing_solution
        resid = problem.A @ plan.x - problem.b
        assert np.max(resid, initial=0.0) <= 1e-6


class TestPlan:
    def test_initial_state_matches_scenario(self, benchmark_plan, benchmark_scenario):
        st = benchmark_plan.state(0.0)
        assert np.allclose(st.r, benchmark_scenario.initial_state.r, atol=1e-9)
        assert np.allclose(st.l, benchmark_scenario.initial_state.l, atol=1e-9)

    def test_momentum_rate_stacks_derivatives(self, benchmark_plan):
        t = 4.3
        h = benchmark_plan.momentum_rate(t)
        assert np.allclose(h[:3], benchmark_plan.ldot(t))
        assert np.allclose(h[3:], benchmark_plan.kdot(t))

    def test_pole_wrench_preserves_momentum_rate(self, benchmark_plan):
        # re-expressing each wrench at the pole must not change its net effect
        for t in (0.7, 3.5, 4.6, 7.2):
            samples = benchmark_plan.contact_samples(t)
            r = benchmark_plan.r(t)
            direct = sum(
                s.torque + np.cross(s.cop - r, s.force) for s in samples
            )
            poles, forces, torques, _ = benchmark_plan.pole_wrenches(t)
            via_pole = sum(
                tau + np.cross(p - r, f) for p, f, tau in zip(poles, forces, torques)
            )
            assert np.allclose(direct, via_pole, atol=1e-9)


class TestRecedingHorizon:
    def test_window_scenario_clips_and_shifts(self, benchmark_scenario):
        win = window_scenario(benchmark_scenario, 2.5, 4.5)
        assert win.horizon == 2.0
        assert all(ph.t_start >= 0 and ph.t_end <= 2.0 for ph in win.schedule.phases)
        # the left-foot piece [2.5, 3.0) survives as [0, 0.5)
        lf = [ph for ph in win.schedule.phases if ph.effector == "l_foot"]
        assert np.isclose(lf[0].t_start, 0.0) and np.isclose(lf[0].t_end, 0.5)

    def test_window_outside_horizon_raises(self, benchmark_scenario):
        with pytest.raises(ScheduleError):
            window_scenario(benchmark_scenario, 5.0, 9.0)

    def test_zero_shift_is_identity(self, benchmark_scenario, rng):
        win = window_scenario(benchmark_scenario, 1.0, 3.0)
        layout = DecisionLayout(win)
        x_old = rng.normal(size=layout.dim)
        x0 = receding_shift((x_old, layout), 0.0, win, win)
        assert np.array_equal(x0, x_old)

    def test_shift_reproduces_controls_on_overlap(self, benchmark_scenario, rng):
        old = window_scenario(benchmark_scenario, 0.0, 2.0)
        new = window_scenario(benchmark_scenario, 0.5, 2.5)
        layout_old = DecisionLayout(old)
        x_old = rng.normal(size=layout_old.dim)
        x0 = receding_shift((x_old, layout_old), 0.5, new, old)
        plan_old = extract_plan(x_old, old)
        plan_new = extract_plan(x0, new)
        # compare the force profiles on the shared interval [0.5, 2.0] abs time
        for t_abs in np.linspace(0.6, 1.9, 14):
            f_old = sum(s.force for s in plan_old.contact_samples(t_abs))
            f_new = sum(s.force for s in plan_new.contact_samples(t_abs - 0.5))
            assert np.allclose(f_old, f_new, atol=1e-8)

    def test_standing_warm_start_stays_optimal(self, standing_scenario, standing_solution):
        plan, _diag, _problem = standing_solution
        old = window_scenario(standing_scenario, 0.0, 2.0)
        new = window_scenario(standing_scenario, 0.0, 2.0)
        x0 = receding_shift((plan.x, plan.layout), 0.0, new, old)
        problem = assemble(new, ReferenceTrajectory.hold(new.initial_state, new.horizon))
        assert problem.objective(x0) <= 1e-8


def test_reference_mismatch_rejected(standing_scenario):
    short = ReferenceTrajectory(
        np.array([0.0, 1.0]), np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 3))
    )
    with pytest.raises(ValueError):
        assemble(standing_scenario, short)


def test_objective_grid_contains_boundaries(benchmark_scenario):
    grid = objective_grid(benchmark_scenario)
    assert np.all(np.diff(grid) > 0)
    for tb in np.arange(0.5, 8.0, 0.5):
        assert np.any(np.isclose(grid, tb))
