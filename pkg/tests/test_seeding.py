"""Kinematic reference seeding and the seed/optimize iteration."""

from dataclasses import replace

import numpy as np

from centroplan.contacts import ContactPhase, ContactSchedule
from centroplan.model import CentroidalState
from centroplan.seeding import ANG_TOL, COM_TOL, iterated_plan, seed_references


def _shifted(scenario, d):
    d = np.asarray(d, dtype=float)
    phases = tuple(replace(ph, center=ph.center + d) for ph in scenario.schedule.phases)
    init = scenario.initial_state
    return replace(
        scenario,
        schedule=ContactSchedule(phases=phases, horizon=scenario.horizon),
        initial_state=CentroidalState(init.r + d, init.l, init.kappa),
    )


def test_translation_equivariance(standing_scenario):
    d = np.array([0.3, -1.2, 0.05])
    refs = seed_references(standing_scenario)
    refs_shifted = seed_references(_shifted(standing_scenario, d))
    assert np.allclose(refs_shifted.r_des, refs.r_des + d, atol=1e-9)
    assert np.allclose(refs_shifted.kappa_des, refs.kappa_des, atol=1e-9)


def test_stationary_limbs_give_zero_angular_reference(standing_scenario):
    refs = seed_references(standing_scenario)
    assert np.allclose(refs.kappa_des, 0.0, atol=1e-9)
    assert np.allclose(refs.r_des, refs.r_des[0], atol=1e-9)
    assert np.allclose(refs.l_des, 0.0, atol=1e-9)


def test_com_guess_inversion_identity(standing_scenario, rng):
    # handing back a CoM trajectory as the guess must reproduce it as r_des
    target = standing_scenario.initial_state.r + np.array([0.01, -0.02, 0.0])

    refs = seed_references(standing_scenario, com_guess=lambda t: target)
    assert np.allclose(refs.r_des, target, atol=1e-9)


def test_benchmark_seed_swings_carry_angular_momentum(benchmark_scenario):
    refs = seed_references(benchmark_scenario)
    # walking is along +y, so leg swings show up in the x/y components
    def peak(t0, t1):
        mask = (refs.times >= t0) & (refs.times <= t1)
        return refs.kappa_des[mask]

    left = peak(3.2, 3.8)
    right = peak(5.2, 5.8)
    assert np.max(np.linalg.norm(left, axis=1)) > 0.1
    assert np.max(np.linalg.norm(right, axis=1)) > 0.1
    # opposite legs swing on opposite sides of the CoM: the vertical
    # component flips sign between the two swings
    assert np.sign(left[np.argmax(np.abs(left[:, 2])), 2]) != np.sign(
        right[np.argmax(np.abs(right[:, 2])), 2]
    )


def test_iterated_plan_standing_converges_first_pass(standing_scenario):
    plan, report = iterated_plan(standing_scenario)
    assert report.converged
    assert report.passes == 1
    assert report.com_deviation <= COM_TOL
    assert report.ang_deviation <= ANG_TOL
    assert np.allclose(plan.r(1.0), standing_scenario.initial_state.r, atol=1e-6)


def test_benchmark_iteration_report(benchmark_result):
    _plan, report, _elapsed = benchmark_result
    assert report.converged
    assert report.passes == 2
    assert len(report.diagnostics) == report.passes
    assert report.deviations  # at least one successive-pass comparison
    d = report.as_dict()
    assert d["passes"] == 2 and len(d["solves"]) == 2


def test_references_cover_horizon(benchmark_scenario):
    refs = seed_references(benchmark_scenario)
    assert refs.times[0] == 0.0
    assert np.isclose(refs.times[-1], benchmark_scenario.horizon)
    assert np.all(np.isfinite(refs.r_des))
    assert np.all(np.isfinite(refs.l_des))
    assert np.all(np.isfinite(refs.kappa_des))
