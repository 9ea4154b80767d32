"""Momentum trajectory optimization over polynomial contact controls.

The decision vector concatenates, per contact phase, the sole-frame force
coefficients (3 channels), sole-normal torque coefficients, CoP offset
coefficients (2 channels in the sole plane) and, optionally, a constant
sole-location offset. States follow analytically from the controls
(see :mod:`centroplan.poly`), which makes the dynamics structurally
feasible for every iterate: the objective is a smooth quartic and all
contact constraints are linear in the coefficients, sampled at per-phase
knots. The solver is an augmented-Lagrangian outer loop with a damped
Gauss-Newton inner minimizer and a final projection polish onto the
constraint polyhedron.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import jets
from .contacts import Scenario, ContactPhase, ContactSchedule
from .errors import ScheduleError, SolverDivergedError
from .model import CentroidalState
from .poly import Poly, PolyVec3, PiecewisePoly, build_state_segments, partition_times

__all__ = [
    "DecisionLayout",
    "ReferenceTrajectory",
    "NlpProblem",
    "SolveOptions",
    "SolveDiagnostics",
    "Plan",
    "assemble",
    "solve",
    "extract_plan",
    "receding_shift",
    "window_scenario",
    "objective_grid",
    "phase_knots",
    "REGULARIZATION",
]

REGULARIZATION = 1e-9

_CHANNELS = ("fx", "fy", "fz", "tau", "ux", "uy")


class DecisionLayout:
    """Bijective map between (phase, channel, coefficient) and flat indices."""

    def __init__(self, scenario: Scenario):
        n = scenario.optimizer.poly_coeffs
        self.n_coeffs = n
        self.with_offsets = scenario.optimizer.optimize_sole_offsets
        self.slices = {}
        pos = 0
        for i, _ in enumerate(scenario.schedule.phases):
            for ch in _CHANNELS:
                self.slices[(i, ch)] = slice(pos, pos + n)
                pos += n
            if self.with_offsets:
                self.slices[(i, "dp")] = slice(pos, pos + 2)
                pos += 2
        self.dim = pos
        self.n_phases = len(scenario.schedule.phases)

    def sl(self, phase, channel):
        return self.slices[(phase, channel)]

    def coeffs(self, x, phase, channel):
        return x[self.sl(phase, channel)]

    def describe(self, flat_index):
        for (i, ch), sl in self.slices.items():
            if sl.start <= flat_index < sl.stop:
                return (i, ch, flat_index - sl.start)
        raise IndexError(flat_index)


@dataclass
class ReferenceTrajectory:
    """Desired CoM / momentum knots; linearly interpolated between knots."""

    times: np.ndarray
    r_des: np.ndarray
    l_des: np.ndarray
    kappa_des: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.r_des = np.asarray(self.r_des, dtype=float).reshape(len(self.times), 3)
        self.l_des = np.asarray(self.l_des, dtype=float).reshape(len(self.times), 3)
        self.kappa_des = np.asarray(self.kappa_des, dtype=float).reshape(len(self.times), 3)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("reference knot times must be strictly increasing")

    def at(self, t_grid):
        t_grid = np.asarray(t_grid, dtype=float)
        out = []
        for arr in (self.r_des, self.l_des, self.kappa_des):
            cols = [np.interp(t_grid, self.times, arr[:, c]) for c in range(3)]
            out.append(np.stack(cols, axis=1))
        return tuple(out)

    @staticmethod
    def hold(state: CentroidalState, horizon: float):
        t = np.array([0.0, float(horizon)])
        return ReferenceTrajectory(
            t, np.tile(state.r, (2, 1)), np.tile(state.l, (2, 1)), np.tile(state.kappa, (2, 1))
        )


def phase_knots(settings):
    """Per-phase normalized knot locations: uniform interior knots plus both endpoints."""
    return np.linspace(0.0, 1.0, settings.knots_per_phase + 2)


def objective_grid(scenario: Scenario) -> np.ndarray:
    """Global knot grid: union of all phase knots; includes every phase boundary."""
    s = phase_knots(scenario.optimizer)
    ts = [np.array([0.0, scenario.horizon])]
    for ph in scenario.schedule.phases:
        ts.append(ph.t_start + s * ph.duration)
    allts = np.concatenate(ts)
    allts = allts[(allts >= -1e-12) & (allts <= scenario.horizon + 1e-12)]
    allts = np.clip(allts, 0.0, scenario.horizon)
    grid = np.unique(np.round(allts / 1e-9) * 1e-9)
    return grid


def _true_deactivation(scenario, idx):
    """Whether phase idx ends with its effector actually leaving the surface."""
    ph = scenario.schedule.phases[idx]
    if ph.t_end >= scenario.horizon - 1e-9:
        return False
    return not any(
        other.effector == ph.effector and abs(other.t_start - ph.t_end) < 1e-9
        for other in scenario.schedule.phases
    )


def _controls_jets(scenario, layout, x, nx):
    """Per-phase world-frame (f, tau, p) coefficient jets for decision vector x."""
    n = layout.n_coeffs
    out = {}
    for i, ph in enumerate(scenario.schedule.phases):
        R = ph.rotation
        w = [layout.coeffs(x, i, c) for c in ("fx", "fy", "fz")]
        v = layout.coeffs(x, i, "tau")
        u = [layout.coeffs(x, i, c) for c in ("ux", "uy")]
        dp = layout.coeffs(x, i, "dp") if layout.with_offsets else np.zeros(2)

        f = []
        tau = []
        p = []
        for c in range(3):
            jf = np.zeros((1 + nx, n))
            jf[0] = R[c, 0] * w[0] + R[c, 1] * w[1] + R[c, 2] * w[2]
            jt = np.zeros((1 + nx, n))
            jt[0] = R[c, 2] * v
            jp = np.zeros((1 + nx, n))
            jp[0] = R[c, 0] * u[0] + R[c, 1] * u[1]
            jp[0, 0] += ph.center[c] + R[c, 0] * dp[0] + R[c, 1] * dp[1]
            if nx:
                rng = np.arange(n)
                for k, ch in enumerate(("fx", "fy", "fz")):
                    jf[1 + layout.sl(i, ch).start + rng, rng] = R[c, k]
                jt[1 + layout.sl(i, "tau").start + rng, rng] = R[c, 2]
                for k, ch in enumerate(("ux", "uy")):
                    jp[1 + layout.sl(i, ch).start + rng, rng] = R[c, k]
                if layout.with_offsets:
                    sl = layout.sl(i, "dp")
                    jp[1 + sl.start, 0] = R[c, 0]
                    jp[1 + sl.start + 1, 0] = R[c, 1]
            f.append(jf)
            tau.append(jt)
            p.append(jp)
        out[i] = (f, tau, p)
    return out


@dataclass
class NlpProblem:
    """Smooth objective with exact gradient plus labeled linear inequalities A x <= b."""

    scenario: Scenario
    layout: DecisionLayout
    refs: ReferenceTrajectory
    grid: np.ndarray
    A: np.ndarray
    b: np.ndarray
    labels: list
    lb: np.ndarray
    ub: np.ndarray
    _grid_refs: tuple = field(default=None, repr=False)
    _seg_knots: list = field(default=None, repr=False)

    def objective(self, x):
        return self._cost(x, with_grad=False)[0]

    def gradient(self, x):
        return self._cost(x, with_grad=True)[1]

    def obj_grad(self, x):
        return self._cost(x, with_grad=True)

    def _segments(self, x, nx):
        controls = _controls_jets(self.scenario, self.layout, x, nx)
        return build_state_segments(
            self.scenario.schedule.phases,
            self.scenario.horizon,
            controls,
            self.scenario.initial_state,
            self.scenario.params,
            nx=nx,
        )

    def _cost(self, x, with_grad):
        nx = self.layout.dim if with_grad else 0
        segs = self._segments(x, nx)
        r_des, l_des, k_des = self._grid_refs
        w = self.scenario.weights
        terms = (
            ("l", l_des, w.lin),
            ("r", r_des, w.com),
            ("kappa", k_des, w.ang),
            ("ldot", None, w.lin_rate),
            ("kdot", None, w.ang_rate),
        )
        J = 0.0
        g = np.zeros(self.layout.dim) if with_grad else None
        for seg, (idx, powers) in zip(segs, self._seg_knots):
            if len(idx) == 0:
                continue
            for key, des, weight in terms:
                comps = seg[key]
                for c in range(3):
                    arr = comps[c]
                    ph = powers[: arr.shape[1]]
                    vals = arr[0] @ ph
                    resid = vals - (des[idx, c] if des is not None else 0.0)
                    J += float(weight[c] * np.dot(resid, resid))
                    if with_grad:
                        g += 2.0 * weight[c] * ((arr[1:] @ ph) @ resid)
        if with_grad:
            return J, g
        return J, None

    def residuals(self, x):
        """Weighted objective residual vector and its exact Jacobian.

        objective(x) == r @ r and gradient(x) == 2 J^T r; the rows are
        sqrt(w_c) * (q_c(t_k) - des_c(t_k)) over all terms, components
        and knots.
        """
        segs = self._segments(x, self.layout.dim)
        r_des, l_des, k_des = self._grid_refs
        w = self.scenario.weights
        terms = (
            ("l", l_des, w.lin),
            ("r", r_des, w.com),
            ("kappa", k_des, w.ang),
            ("ldot", None, w.lin_rate),
            ("kdot", None, w.ang_rate),
        )
        res_blocks = []
        jac_blocks = []
        for seg, (idx, powers) in zip(segs, self._seg_knots):
            if len(idx) == 0:
                continue
            for key, des, weight in terms:
                comps = seg[key]
                for c in range(3):
                    if weight[c] == 0.0:
                        continue
                    arr = comps[c]
                    ph = powers[: arr.shape[1]]
                    sw = np.sqrt(weight[c])
                    vals = arr[0] @ ph
                    resid = vals - (des[idx, c] if des is not None else 0.0)
                    res_blocks.append(sw * resid)
                    jac_blocks.append(sw * (arr[1:] @ ph).T)
        return np.concatenate(res_blocks), np.vstack(jac_blocks)

    def max_violation(self, x):
        if self.A.shape[0] == 0:
            return 0.0
        return float(np.max(self.A @ x - self.b, initial=0.0))


def assemble(scenario: Scenario, refs: ReferenceTrajectory, layout: DecisionLayout | None = None):
    """Build the NLP for a scenario and reference trajectory."""
    layout = layout or DecisionLayout(scenario)
    grid = objective_grid(scenario)
    if len(grid) == 0:
        raise ValueError("empty knot grid")
    if refs.times[0] > 1e-9 or refs.times[-1] < scenario.horizon - 1e-9:
        raise ValueError(
            f"references cover [{refs.times[0]}, {refs.times[-1]}] "
            f"but the horizon is [0, {scenario.horizon}]"
        )

    settings = scenario.optimizer
    n = settings.poly_coeffs
    s_knots = phase_knots(settings)
    rows, rhs, labels = [], [], []

    def add_row(coeffs_by_channel, bound, label, phase):
        row = np.zeros(layout.dim)
        for ch, c in coeffs_by_channel:
            row[layout.sl(phase, ch)] += c
        rows.append(row)
        rhs.append(bound)
        labels.append(label)

    for i, ph in enumerate(scenario.schedule.phases):
        cap = scenario.force_cap(ph)
        mu = ph.friction
        for k, s in enumerate(s_knots):
            basis = np.power(s, np.arange(n))
            if not ph.point_contact:
                for ch, ext, name in (("ux", ph.cop_half_extents[0], "cop_x"),
                                      ("uy", ph.cop_half_extents[1], "cop_y")):
                    add_row([(ch, basis)], ext, (f"{name}+", i, k), i)
                    add_row([(ch, -basis)], ext, (f"{name}-", i, k), i)
                add_row([("tau", basis)], ph.torque_bound, ("torque+", i, k), i)
                add_row([("tau", -basis)], ph.torque_bound, ("torque-", i, k), i)
            for ch, name in (("fx", "x"), ("fy", "y")):
                add_row([(ch, basis), ("fz", -mu * basis)], 0.0, (f"pyr_{name}+", i, k), i)
                add_row([(ch, -basis), ("fz", -mu * basis)], 0.0, (f"pyr_{name}-", i, k), i)
                # conservative upper cap: mu*f_n - f_t <= f_cap implies the pyramid band stays bounded
                add_row([("fz", mu * basis), (ch, -basis)], cap, (f"cap_{name}", i, k), i)
        if settings.terminal_zero_wrench and _true_deactivation(scenario, i):
            basis = np.ones(n)  # s = 1
            for ch in ("fx", "fy", "fz"):
                add_row([(ch, basis)], 0.0, (f"terminal_{ch}+", i, -1), i)
                add_row([(ch, -basis)], 0.0, (f"terminal_{ch}-", i, -1), i)
            if not ph.point_contact:
                add_row([("tau", basis)], 0.0, ("terminal_tau+", i, -1), i)
                add_row([("tau", -basis)], 0.0, ("terminal_tau-", i, -1), i)

    lb = np.full(layout.dim, -np.inf)
    ub = np.full(layout.dim, np.inf)
    for i, ph in enumerate(scenario.schedule.phases):
        if ph.point_contact:
            for ch in ("tau", "ux", "uy"):
                lb[layout.sl(i, ch)] = 0.0
                ub[layout.sl(i, ch)] = 0.0
        if layout.with_offsets:
            bound = settings.sole_offset_bound
            lb[layout.sl(i, "dp")] = -bound
            ub[layout.sl(i, "dp")] = bound
            for j in range(2):
                row = np.zeros(layout.dim)
                row[layout.sl(i, "dp").start + j] = 1.0
                rows.append(row)
                rhs.append(bound)
                labels.append(("offset+", i, j))
                rows.append(-row)
                rhs.append(bound)
                labels.append(("offset-", i, j))

    A = np.array(rows) if rows else np.zeros((0, layout.dim))
    b = np.array(rhs)

    problem = NlpProblem(
        scenario=scenario,
        layout=layout,
        refs=refs,
        grid=grid,
        A=A,
        b=b,
        labels=labels,
        lb=lb,
        ub=ub,
    )
    problem._grid_refs = refs.at(grid)

    cuts = partition_times(scenario.schedule.phases, scenario.horizon)
    seg_knots = []
    max_deg = 4 * n + 8  # safe upper bound on any state-poly length
    for a, b_ in zip(cuts, cuts[1:]):
        if abs(b_ - scenario.horizon) < 1e-12:
            mask = (grid >= a - 1e-12) & (grid <= b_ + 1e-12)
        else:
            mask = (grid >= a - 1e-12) & (grid < b_ - 1e-12)
        idx = np.nonzero(mask)[0]
        sigma = (grid[idx] - a) / (b_ - a)
        powers = np.power(sigma[None, :], np.arange(max_deg)[:, None])
        seg_knots.append((idx, powers))
    problem._seg_knots = seg_knots
    return problem


@dataclass
class SolveOptions:
    tol: float = 1e-5
    feas_tol: float = 1e-6
    max_outer: int = 25
    max_inner: int = 500
    penalty0: float = 10.0
    penalty_growth: float = 10.0
    verbose: bool = False

    @staticmethod
    def from_scenario(scenario):
        s = scenario.optimizer
        return SolveOptions(
            tol=s.tol, feas_tol=s.feas_tol, max_outer=s.max_outer, max_inner=s.max_inner
        )


@dataclass
class SolveDiagnostics:
    converged: bool
    termination: str
    iterations: int
    outer_iterations: int
    objective: float
    max_violation: float
    stationarity: float
    objective_history: list
    wall_time: float
    multipliers: np.ndarray | None = None  # final inequality multipliers

    def as_dict(self):
        return {
            "converged": self.converged,
            "termination": self.termination,
            "iterations": self.iterations,
            "outer_iterations": self.outer_iterations,
            "objective": self.objective,
            "max_violation": self.max_violation,
            "stationarity": self.stationarity,
            "objective_history": list(self.objective_history),
            "wall_time": self.wall_time,
        }


def _project_polyhedron(A, b, x, lb, ub, tol=1e-12, iters=100):
    """Minimal-norm correction onto {A x <= b, lb <= x <= ub}, iterated."""
    for _ in range(iters):
        x = np.clip(x, lb, ub)
        r = A @ x - b
        bad = r > tol
        if not bad.any():
            return x
        dx = np.linalg.lstsq(A[bad], r[bad], rcond=None)[0]
        x = x - dx
    return np.clip(x, lb, ub)


def solve(problem: NlpProblem, x0=None, opts: SolveOptions | None = None,
          lam0=None):
    """Augmented-Lagrangian solve with a damped Gauss-Newton inner loop.

    The objective is a sum of squares of residuals that are affine or
    quadratic in x with exact Jacobians, so Gauss-Newton handles the
    strong coupling between early force coefficients and late states
    that defeats first-order methods. Inequalities enter as clipped
    penalty residuals; multipliers update between inner solves and can be
    warm-started through ``lam0`` (see shift_multipliers).
    """
    opts = opts or SolveOptions.from_scenario(problem.scenario)
    t_start = time.perf_counter()
    nx = problem.layout.dim
    x = np.zeros(nx) if x0 is None else np.asarray(x0, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise SolverDivergedError("non-finite initial iterate", last_iterate=x)
    x = np.clip(x, problem.lb, problem.ub)

    fixed = np.isfinite(problem.lb) & (problem.lb == problem.ub)
    free = ~fixed
    x[fixed] = problem.lb[fixed]
    nf = int(np.sum(free))

    m = problem.A.shape[0]
    scale = np.maximum(np.max(np.abs(problem.A), axis=1), 1e-12) if m else np.zeros(0)
    As = problem.A / scale[:, None] if m else problem.A
    bs = problem.b / scale if m else problem.b
    if lam0 is None:
        lam = np.zeros(m)
    else:
        lam = np.asarray(lam0, dtype=float).copy()
        if lam.shape != (m,):
            raise ValueError(f"lam0 must have shape ({m},), got {lam.shape}")
        lam = np.maximum(lam, 0.0)
    rho = opts.penalty0
    feas_target = 0.1 * opts.feas_tol

    def al_value(z):
        F = problem.objective(z)
        if m:
            t = lam + rho * (As @ z - bs)
            F += float(np.sum(np.maximum(t, 0.0) ** 2)) / (2.0 * rho)
        if not np.isfinite(F):
            raise SolverDivergedError("objective became non-finite", last_iterate=z)
        return F

    def al_residuals(z):
        r_obj, J_obj = problem.residuals(z)
        res = [r_obj]
        jac = [J_obj]
        if m:
            t = lam + rho * (As @ z - bs)
            act = t > 0.0
            if act.any():
                res.append(t[act] / np.sqrt(2.0 * rho))
                jac.append(np.sqrt(rho / 2.0) * As[act])
        return np.concatenate(res), np.vstack(jac)

    def inner_minimize(z, max_iters):
        mu = None
        its = 0
        step_converged = False
        for _ in range(max_iters):
            r, J = al_residuals(z)
            F = float(r @ r)
            Jf = J[:, free]
            g = 2.0 * Jf.T @ r
            H = 2.0 * Jf.T @ Jf
            # tie-breaking term: its Hessian keeps flat directions (for
            # example the force split between coplanar feet at identical
            # poses) positive definite without biasing fitted directions
            H[np.diag_indices(nf)] += 2.0 * REGULARIZATION
            tr = float(np.trace(H)) / max(nf, 1)
            if mu is None:
                mu = 1e-8 * tr + 1e-30
            accepted = False
            for _trial in range(30):
                # Jacobi-scaled normal equations keep the solve stable at high rho
                d = 1.0 / np.sqrt(np.diag(H) + mu)
                try:
                    dy = np.linalg.solve(
                        d[:, None] * (H + mu * np.eye(nf)) * d[None, :], -(d * g)
                    )
                    dx = d * dy
                except np.linalg.LinAlgError:
                    mu = max(mu * 10.0, 1e-12 * tr)
                    continue
                zn = z.copy()
                zn[free] += dx
                Fn = al_value(zn)
                if Fn < F:
                    accepted = True
                    break
                mu = max(mu * 10.0, 1e-12 * tr)
            if not accepted:
                step_converged = True
                break
            z = zn
            its += 1
            mu = max(mu / 3.0, 1e-14 * tr)
            if np.linalg.norm(dx) <= opts.tol * (1.0 + np.linalg.norm(z)):
                step_converged = True
                break
        return z, its, step_converged

    history = []
    total_inner = 0
    prev_J = np.inf
    termination = "max_iter"
    converged = False
    stationarity = np.inf
    inner_cap = min(opts.max_inner, 100)
    # LANCELOT-style safeguard: multipliers only update when the iterate
    # meets the current feasibility tolerance eta; otherwise the penalty
    # grows and the (possibly poisoned) multiplier estimate is kept as is.
    eta = 1.0
    best = None  # (viol, J, x, lam)
    viol_prev = np.inf

    for outer in range(opts.max_outer):
        x, its, inner_ok = inner_minimize(x, inner_cap)
        total_inner += its
        viol = problem.max_violation(x)
        J = problem.objective(x)
        history.append(J)
        if best is None or (viol, J) < best[:2]:
            best = (viol, J, x.copy(), lam.copy())
        if m:
            if viol <= max(eta, feas_target) or rho >= 1e8:
                lam = np.maximum(0.0, lam + rho * (As @ x - bs))
                eta = max(eta / np.sqrt(rho), feas_target)
                # multiplier-only iteration contracts slowly at small rho;
                # if an outer step barely improved feasibility, grow the
                # penalty as well instead of waiting for eta to catch down
                # (matters for warm starts that begin almost feasible)
                if viol > opts.feas_tol and viol > 0.1 * viol_prev:
                    rho = min(rho * opts.penalty_growth, 1e8)
            else:
                rho = min(rho * opts.penalty_growth, 1e8)
            grad_L = problem.gradient(x) + As.T @ lam
        else:
            grad_L = problem.gradient(x)
        viol_prev = viol
        stationarity = float(np.max(np.abs(grad_L[free]), initial=0.0))

        obj_stalled = abs(prev_J - J) <= 1e-4 * (1.0 + abs(J))
        if m and inner_ok and obj_stalled and opts.feas_tol < viol <= 1e3 * opts.feas_tol:
            # the objective has settled but a small violation lingers
            # (typical for warm starts whose active set barely moved);
            # a min-norm projection is cheaper and more reliable than
            # driving it out through the penalty
            x_p = _project_polyhedron(problem.A, problem.b, x, problem.lb, problem.ub)
            J_p = problem.objective(x_p)
            if (
                problem.max_violation(x_p) <= opts.feas_tol
                and J_p <= J + 1e-4 * (1.0 + abs(J))
            ):
                x, J = x_p, J_p
                viol = problem.max_violation(x)
                history[-1] = J
        if viol <= opts.feas_tol and inner_ok and obj_stalled:
            converged, termination = True, "tol"
            break
        prev_J = J
        if opts.verbose:
            print(f"[outer {outer}] J={J:.6e} viol={viol:.2e} stat={stationarity:.2e} rho={rho:.1e}")

    if best is not None and not converged:
        viol_now = problem.max_violation(x)
        if (viol_now, problem.objective(x)) > best[:2]:
            x = best[2]
            lam = best[3]

    viol_final = problem.max_violation(x)
    if m and 1e-12 < viol_final <= 10.0 * opts.feas_tol:
        # near-feasible already; the min-norm polish is a tiny correction
        x_polished = _project_polyhedron(problem.A, problem.b, x, problem.lb, problem.ub)
        if problem.max_violation(x_polished) < viol_final:
            x = x_polished

    diag = SolveDiagnostics(
        converged=converged,
        termination=termination,
        iterations=total_inner,
        outer_iterations=outer + 1,
        objective=problem.objective(x),
        max_violation=problem.max_violation(x),
        stationarity=stationarity,
        objective_history=history,
        wall_time=time.perf_counter() - t_start,
        multipliers=lam.copy(),
    )
    return x, diag


# -- plan extraction -----------------------------------------------------

@dataclass
class ContactSample:
    """One contact's wrench at a query time."""

    phase_index: int
    phase: ContactPhase
    force: np.ndarray           # world frame, applied at cop
    torque: np.ndarray          # world frame, pure torque at the cop (sole-normal)
    cop: np.ndarray             # world application point
    pole: np.ndarray            # stationary sole center

    def pole_wrench(self):
        """(force, torque) transformed to the stationary pole."""
        tau = self.torque + np.cross(self.cop - self.pole, self.force)
        return self.force, tau


class Plan:
    """Optimized trajectories: states, wrenches and the raw decision vector."""

    def __init__(self, scenario: Scenario, layout: DecisionLayout, x):
        self.scenario = scenario
        self.layout = layout
        self.x = np.asarray(x, dtype=float).copy()
        n = layout.n_coeffs
        self.controls = {}
        for i, ph in enumerate(scenario.schedule.phases):
            R = ph.rotation
            w = np.stack([layout.coeffs(self.x, i, c) for c in ("fx", "fy", "fz")])
            v = layout.coeffs(self.x, i, "tau")
            u = np.stack([layout.coeffs(self.x, i, c) for c in ("ux", "uy")])
            dp = layout.coeffs(self.x, i, "dp") if layout.with_offsets else np.zeros(2)
            fw = R @ w
            pw = R[:, :2] @ u
            pw[:, 0] += ph.center + R[:, :2] @ dp
            tw = np.outer(R[:, 2], v)
            self.controls[i] = (
                PolyVec3.from_coeffs(*fw),
                PolyVec3.from_coeffs(*tw),
                PolyVec3.from_coeffs(*pw),
            )
        from .poly import build_state_polys

        self.l, self.r, self.kappa = build_state_polys(
            scenario.schedule.phases,
            scenario.horizon,
            self.controls,
            scenario.initial_state,
            scenario.params,
        )
        self.ldot = self.l.derivative()
        self.kdot = self.kappa.derivative()

    @property
    def horizon(self):
        return self.scenario.horizon

    def state(self, t) -> CentroidalState:
        return CentroidalState(self.r(t), self.l(t), self.kappa(t))

    def momentum_rate(self, t):
        return np.concatenate([self.ldot(t), self.kdot(t)])

    def active_indices(self, t):
        t = float(t)
        T = self.scenario.horizon
        out = []
        for i, ph in enumerate(self.scenario.schedule.phases):
            if ph.t_start <= t < ph.t_end or (t == T and ph.t_end == T and ph.t_start <= t):
                out.append(i)
        return out

    def contact_samples(self, t):
        out = []
        for i in self.active_indices(t):
            ph = self.scenario.schedule.phases[i]
            f, tau, p = self.controls[i]
            s = (float(t) - ph.t_start) / ph.duration
            s = min(max(s, 0.0), 1.0)
            pole = ph.center.copy()
            if self.layout.with_offsets:
                dp = self.layout.coeffs(self.x, i, "dp")
                pole = pole + ph.rotation[:, :2] @ dp
            out.append(
                ContactSample(
                    phase_index=i,
                    phase=ph,
                    force=f(s),
                    torque=tau(s),
                    cop=p(s),
                    pole=pole,
                )
            )
        return out

    def pole_wrenches(self, t):
        """Stacked (poles, forces, torques) re-expressed at the stationary poles."""
        samples = self.contact_samples(t)
        poles = [s.pole for s in samples]
        wr = [s.pole_wrench() for s in samples]
        return poles, [w[0] for w in wr], [w[1] for w in wr], [s.phase_index for s in samples]


def extract_plan(x, scenario: Scenario, layout: DecisionLayout | None = None) -> Plan:
    return Plan(scenario, layout or DecisionLayout(scenario), x)


# -- receding horizon ----------------------------------------------------

def window_scenario(scenario: Scenario, t0: float, t1: float,
                    initial_state: CentroidalState | None = None) -> Scenario:
    """Scenario restricted to [t0, t1], times shifted so the window starts at 0."""
    if not (0.0 <= t0 < t1 <= scenario.horizon + 1e-9):
        raise ScheduleError(f"window [{t0}, {t1}] outside horizon [0, {scenario.horizon}]")
    phases = []
    for ph in scenario.schedule.phases:
        a = max(ph.t_start, t0)
        b = min(ph.t_end, t1)
        if b - a > 1e-9:
            phases.append(replace(ph, t_start=a - t0, t_end=b - t0))
    swings = []
    for sw in scenario.swings:
        a = max(sw.t_start, t0)
        b = min(sw.t_end, t1)
        if b - a > 1e-9:
            swings.append(replace(sw, t_start=sw.t_start - t0, t_end=sw.t_end - t0))
    return replace(
        scenario,
        schedule=ContactSchedule(phases=tuple(phases), horizon=t1 - t0),
        swings=tuple(swings),
        initial_state=initial_state or scenario.initial_state,
    )


def _match_phase(scenario_new, scenario_old, shift, i_new):
    """Old-window phase matching new phase i (same effector/pole, overlapping in absolute time)."""
    ph = scenario_new.schedule.phases[i_new]
    for j, old in enumerate(scenario_old.schedule.phases):
        if old.effector != ph.effector or not np.allclose(old.center, ph.center):
            continue
        a = max(ph.t_start + shift, old.t_start)
        b = min(ph.t_end + shift, old.t_end)
        if b - a > 1e-9:
            return j, a, b
    return None


def receding_shift(previous, delta: float, scenario_new: Scenario,
                   scenario_old: Scenario) -> np.ndarray:
    """Warm start for the window shifted by delta.

    ``previous`` is the (x, layout) pair of the old window's solution;
    ``scenario_old``/``scenario_new`` are the window scenarios (local time
    starting at 0), where the new window lags the old one by ``delta``.
    Overlapping phases are re-fit by least squares so the shifted
    polynomials reproduce the previous controls on the overlap; phases
    entering the horizon start at zero.
    """
    x_old, layout_old = previous
    layout_new = DecisionLayout(scenario_new)
    n = layout_new.n_coeffs
    x0 = np.zeros(layout_new.dim)
    for i, ph in enumerate(scenario_new.schedule.phases):
        match = _match_phase(scenario_new, scenario_old, delta, i)
        if match is None:
            continue
        j, a, b = match
        old = scenario_old.schedule.phases[j]
        same_interval = (
            abs(ph.t_start + delta - old.t_start) < 1e-12
            and abs(ph.t_end + delta - old.t_end) < 1e-12
        )
        for ch in _CHANNELS:
            c_old = layout_old.coeffs(x_old, j, ch)
            if same_interval:
                x0[layout_new.sl(i, ch)] = c_old
                continue
            m = max(2 * n, 8)
            t_abs = np.linspace(a, b, m)
            s_old = (t_abs - old.t_start) / old.duration
            s_new = (t_abs - delta - ph.t_start) / ph.duration
            vals = np.vander(s_old, n, increasing=True) @ c_old
            V = np.vander(s_new, n, increasing=True)
            x0[layout_new.sl(i, ch)] = np.linalg.lstsq(V, vals, rcond=None)[0]
        if layout_new.with_offsets and layout_old.with_offsets:
            x0[layout_new.sl(i, "dp")] = layout_old.coeffs(x_old, j, "dp")
    return x0


def shift_multipliers(previous, delta: float, problem_new: NlpProblem,
                      scenario_old: Scenario) -> np.ndarray:
    """Warm-start inequality multipliers for the window shifted by delta.

    ``previous`` is the (multipliers, labels) pair of the old window's
    solve (SolveDiagnostics.multipliers and NlpProblem.labels). Rows of
    phases whose placement maps exactly onto an old-window phase keep
    their multiplier; rows of phases entering the horizon start at zero.
    Warm primal iterates alone make the solver re-estimate the active
    set from scratch, which costs more outer iterations than the warm
    start saves; carrying the multipliers over avoids that.
    """
    lam_old, labels_old = previous
    lam_old = np.asarray(lam_old, dtype=float)
    index_old = {lab: k for k, lab in enumerate(labels_old)}
    scenario_new = problem_new.scenario

    exact = {}
    for i, ph in enumerate(scenario_new.schedule.phases):
        match = _match_phase(scenario_new, scenario_old, delta, i)
        if match is None:
            continue
        j = match[0]
        old = scenario_old.schedule.phases[j]
        if (
            abs(ph.t_start + delta - old.t_start) < 1e-12
            and abs(ph.t_end + delta - old.t_end) < 1e-12
        ):
            exact[i] = j

    lam = np.zeros(len(problem_new.labels))
    for k, (kind, i, knot) in enumerate(problem_new.labels):
        j = exact.get(i)
        if j is None:
            continue
        k_old = index_old.get((kind, j, knot))
        if k_old is not None:
            lam[k] = lam_old[k_old]
    return lam
