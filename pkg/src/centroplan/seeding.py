"""Kinematic seeding of reference trajectories and the plan iteration loop.

The momentum objective needs desired CoM, linear-momentum and
angular-momentum knots. A full kinematic model is out of scope, so the
limbs are point masses: each effector carries a fixed mass fraction with
its CoM partway between a base point and the foot, and the base carries
the rest. The first pass places the base above the smoothed centroid of
the active supports; later passes invert the mass distribution around
the CoM trajectory returned by the optimizer, and the loop stops when
successive references agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .contacts import Scenario, foot_position
from .optimizer import (
    ReferenceTrajectory,
    SolveOptions,
    assemble,
    extract_plan,
    objective_grid,
    solve,
)

__all__ = [
    "seed_references",
    "iterated_plan",
    "SeedReport",
    "COM_TOL",
    "ANG_TOL",
]

# convergence thresholds between successive seeding passes
COM_TOL = 1e-3       # m
ANG_TOL = 1e-2       # kg m^2/s

_SMOOTH_DT = 0.01
_SMOOTH_SIGMA = 0.25  # seconds


def _support_centroid(scenario: Scenario, fine):
    """Centroid of the active sole centers, smoothed over ~_SMOOTH_SIGMA seconds."""
    T = scenario.horizon
    raw = np.zeros((len(fine), 3))
    for k, t in enumerate(fine):
        tq = min(t, T)
        centers = [
            ph.center
            for ph in scenario.schedule.phases
            if ph.t_start <= tq < ph.t_end or (tq == T and ph.t_end == T)
        ]
        raw[k] = np.mean(centers, axis=0) if centers else raw[k - 1]
    sigma = _SMOOTH_SIGMA / _SMOOTH_DT
    return gaussian_filter1d(raw, sigma=sigma, axis=0, mode="nearest")


def _smooth(track):
    """Low-pass a uniformly sampled track with the seeding filter.

    Differentiating the base trajectory amplifies sample-scale wiggles in
    the CoM guess into large angular-momentum reference changes, which
    would keep the seed iteration from settling.
    """
    sigma = _SMOOTH_SIGMA / _SMOOTH_DT
    return gaussian_filter1d(track, sigma=sigma, axis=0, mode="nearest")


def _foot_tracks(scenario: Scenario, times):
    return {
        eff: np.stack([foot_position(scenario, eff, t) for t in times])
        for eff in scenario.effectors()
    }


def _sample_guess(com_guess, fine, times):
    """CoM guess on the fine grid: call it if callable, else interpolate knots."""
    if callable(com_guess):
        return np.stack([np.asarray(com_guess(t), dtype=float) for t in fine])
    com_guess = np.asarray(com_guess, dtype=float).reshape(len(times), 3)
    return np.stack([np.interp(fine, times, com_guess[:, c]) for c in range(3)], axis=1)


def seed_references(scenario: Scenario, com_guess=None, times=None) -> ReferenceTrajectory:
    """Reference knots from the point-mass limb model.

    ``com_guess`` is an optional CoM trajectory from a previous
    optimization pass, either a callable of time (preferred: the plan's
    ``r``) or an array sampled at the knots; without it the base is
    placed above the smoothed support centroid. All differencing happens
    on a fine uniform grid so knot spacing does not leak into the
    velocity references.
    """
    if times is None:
        times = objective_grid(scenario)
    times = np.asarray(times, dtype=float)
    T = scenario.horizon
    fine = np.arange(0.0, T + 0.5 * _SMOOTH_DT, _SMOOTH_DT)
    fine[-1] = min(fine[-1], T)
    limb = scenario.limb_model
    M = scenario.params.mass
    feet = _foot_tracks(scenario, fine)
    m_e = limb.foot_mass_fraction * M
    m_base = M - m_e * len(feet)
    rho = limb.com_ratio

    foot_sum = sum(feet.values())
    if com_guess is None:
        base = _support_centroid(scenario, fine)
        base[:, 2] += limb.base_height
    else:
        guess = _sample_guess(com_guess, fine, times)
        # invert r = (m_base*b + sum_e m_e*((1-rho)*b + rho*foot_e)) / M for b
        denom = m_base + (1.0 - rho) * m_e * len(feet)
        base = (M * guess - rho * m_e * foot_sum) / denom

    # each of the len(feet) limbs contributes (1-rho) of its mass at the base
    r_des = (
        (m_base + (1.0 - rho) * m_e * len(feet)) * base + rho * m_e * foot_sum
    ) / M

    def vel(track):
        return np.stack([np.gradient(track[:, c], fine) for c in range(3)], axis=1)

    l_des = M * vel(r_des)

    kappa_des = np.zeros_like(r_des)
    base_v = vel(_smooth(base))
    for track in feet.values():
        limb_com = (1.0 - rho) * base + rho * track
        limb_v = (1.0 - rho) * base_v + rho * vel(track)
        kappa_des += m_e * np.cross(limb_com - r_des, limb_v)

    def knots(track):
        return np.stack([np.interp(times, fine, track[:, c]) for c in range(3)], axis=1)

    return ReferenceTrajectory(times, knots(r_des), knots(l_des), knots(kappa_des))


@dataclass
class SeedReport:
    """Outcome of the seeding iteration."""

    converged: bool
    passes: int
    com_deviation: float
    ang_deviation: float
    references: ReferenceTrajectory
    x: np.ndarray
    diagnostics: list = field(default_factory=list)
    deviations: list = field(default_factory=list)

    def as_dict(self):
        return {
            "converged": self.converged,
            "passes": self.passes,
            "com_deviation": self.com_deviation,
            "ang_deviation": self.ang_deviation,
            "deviations": [list(d) for d in self.deviations],
            "solves": [d.as_dict() for d in self.diagnostics],
        }


def iterated_plan(scenario: Scenario, opts: SolveOptions | None = None,
                  x0=None, max_passes=None):
    """Alternate reference seeding and momentum optimization.

    Returns (plan, SeedReport). Convergence means the reference CoM moved
    less than COM_TOL and the reference angular momentum less than
    ANG_TOL between the last two passes (single-pass runs count as
    converged: there is nothing to compare).
    """
    if max_passes is None:
        max_passes = scenario.optimizer.seed_passes
    times = objective_grid(scenario)
    refs = seed_references(scenario, times=times)
    diagnostics = []
    deviations = []
    x = x0
    plan = None
    converged = False
    com_dev = ang_dev = float("nan")
    prev_com = prev_kappa = None
    refs_used = refs
    for _ in range(max_passes):
        refs_used = refs
        problem = assemble(scenario, refs)
        x, diag = solve(problem, x0=x, opts=opts)
        diagnostics.append(diag)
        plan = extract_plan(x, scenario)
        com = np.stack([plan.r(t) for t in times])
        kappa = np.stack([plan.kappa(t) for t in times])
        if prev_com is not None:
            com_dev = float(np.max(np.linalg.norm(com - prev_com, axis=1)))
            ang_dev = float(np.max(np.linalg.norm(kappa - prev_kappa, axis=1)))
            deviations.append((com_dev, ang_dev))
            if com_dev <= COM_TOL and ang_dev <= ANG_TOL:
                converged = True
                break
        prev_com, prev_kappa = com, kappa
        new_refs = seed_references(scenario, com_guess=plan.r, times=times)
        # fixed point shortcut: if the plan already reproduces its own
        # references and reseeding does not move them, another pass would
        # return the identical plan
        ref_dev = float(np.max(np.linalg.norm(new_refs.r_des - refs.r_des, axis=1)))
        ref_ang = float(np.max(np.linalg.norm(new_refs.kappa_des - refs.kappa_des, axis=1)))
        track = float(np.max(np.linalg.norm(com - refs.r_des, axis=1)))
        track_ang = float(np.max(np.linalg.norm(kappa - refs.kappa_des, axis=1)))
        if max(ref_dev, track) <= COM_TOL and max(ref_ang, track_ang) <= ANG_TOL:
            com_dev, ang_dev = ref_dev, ref_ang
            deviations.append((com_dev, ang_dev))
            converged = True
            break
        refs = new_refs

    report = SeedReport(
        converged=converged,
        passes=len(diagnostics),
        com_deviation=com_dev,
        ang_deviation=ang_dev,
        references=refs_used,
        x=x,
        diagnostics=diagnostics,
        deviations=deviations,
    )
    return plan, report
