"""Time-varying LQR around a momentum plan.

The momentum dynamics are linearized about the planned trajectory with
all contact wrenches re-expressed at the stationary sole centers (the
"poles"), discretized with explicit Euler, and a finite-horizon backward
Riccati recursion yields a gain schedule. The policy is
``lambda = lambda* - K (x - x*)`` with ``lambda`` stacking the per-contact
(force, torque) pairs at the poles; the same correction mapped through
the wrench map gives a momentum-rate reference. Gains are recomputed on
a window sliding by a fixed stride, shrinking near the plan end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contacts import LqrSettings
from .errors import ScheduleError
from .model import skew, wrench_map
from .optimizer import Plan

__all__ = [
    "LqrWeights",
    "StepGains",
    "GainSchedule",
    "linearize",
    "riccati",
    "build_window",
    "policy",
    "momentum_rate_ref",
    "sliding_recompute",
    "RecedingGainProvider",
    "gains_document",
    "block_norm_rows",
    "BLOCK_NORM_HEADER",
]

NX = 9


@dataclass(frozen=True)
class LqrWeights:
    """Diagonal LQR weights; R repeats (force, torque) entries per contact."""

    q_state: float = 10.0
    r_force: float = 0.1
    r_torque: float = 0.5
    q_terminal: float | None = None

    def Q(self):
        return self.q_state * np.eye(NX)

    def Qf(self):
        qf = self.q_state if self.q_terminal is None else self.q_terminal
        return qf * np.eye(NX)

    def R(self, n_contacts):
        if self.r_force <= 0 or self.r_torque <= 0:
            raise ValueError("effort weights must be positive")
        d = np.tile(np.r_[np.full(3, self.r_force), np.full(3, self.r_torque)], n_contacts)
        return np.diag(d)

    @staticmethod
    def from_settings(s: LqrSettings):
        return LqrWeights(q_state=s.q_state, r_force=s.r_force, r_torque=s.r_torque)


def linearize(plan: Plan, t):
    """Continuous-time (A, B, poles, phase_indices) about the plan at t."""
    poles, forces, _torques, idxs = plan.pole_wrenches(t)
    if not poles:
        raise ScheduleError(f"no active contacts at t={t}")
    M = plan.scenario.params.mass
    r_star = plan.r(t)
    A = np.zeros((NX, NX))
    A[0:3, 3:6] = np.eye(3) / M
    A[6:9, 0:3] = skew(np.sum(forces, axis=0))
    B = np.zeros((NX, 6 * len(poles)))
    B[3:9, :] = wrench_map(poles, r_star)
    return A, B, poles, idxs


@dataclass
class StepGains:
    """One control step of the schedule."""

    t: float
    K: np.ndarray            # (6c, 9)
    lam_star: np.ndarray     # (6c,) stacked (f_i, tau_i) at the poles
    x_star: np.ndarray       # (9,)
    hdot_star: np.ndarray    # (6,)
    poles: list
    phase_indices: list
    wmap: np.ndarray         # (6, 6c)

    @property
    def n_contacts(self):
        return len(self.poles)

    def feedback(self, x):
        """Stacked wrench vector for the measured 9-state x."""
        return self.lam_star - self.K @ (np.asarray(x, dtype=float) - self.x_star)

    def split(self, lam):
        """Per-contact (force, torque) pairs from a stacked wrench vector."""
        lam = np.asarray(lam, dtype=float).reshape(self.n_contacts, 6)
        return [(row[:3], row[3:]) for row in lam]


@dataclass
class GainSchedule:
    """Backward-pass result over one window [t0, t0 + n*dt]."""

    t0: float
    dt: float
    steps: list = field(default_factory=list)
    cost_to_go: list = field(default_factory=list)  # P_k, len(steps) + 1

    @property
    def horizon(self):
        return self.t0 + len(self.steps) * self.dt

    def index_of(self, t):
        k = int(np.floor((float(t) - self.t0) / self.dt + 1e-9))
        if k < 0 or k >= len(self.steps):
            raise ScheduleError(
                f"t={t} outside gain window [{self.t0}, {self.horizon})"
            )
        return k

    def step_at(self, t) -> StepGains:
        return self.steps[self.index_of(t)]


def _nominal(plan: Plan, t):
    poles, forces, torques, idxs = plan.pole_wrenches(t)
    lam = np.concatenate([np.r_[f, tau] for f, tau in zip(forces, torques)])
    return poles, idxs, lam


def riccati(dynamics, weights: LqrWeights):
    """Backward recursion over discrete (A_k, B_k); returns (gains list, P list).

    ``dynamics`` is a sequence of (A, B) with A (n x n) and B (n x m_k);
    the R block is built per step from the contact count m_k // 6 when
    m_k is a multiple of 6, else a scalar r_force diagonal.
    """
    n = dynamics[0][0].shape[0]
    Q = weights.q_state * np.eye(n)
    Qf = Q if weights.q_terminal is None else weights.q_terminal * np.eye(n)
    P = Qf
    gains = [None] * len(dynamics)
    cost = [None] * (len(dynamics) + 1)
    cost[-1] = P
    for k in range(len(dynamics) - 1, -1, -1):
        A, B = dynamics[k]
        m = B.shape[1]
        R = weights.R(m // 6) if m % 6 == 0 and m else weights.r_force * np.eye(m)
        S = R + B.T @ P @ B
        K = np.linalg.solve(S, B.T @ P @ A)
        P = Q + A.T @ P @ (A - B @ K)
        P = 0.5 * (P + P.T)
        gains[k] = K
        cost[k] = P
    return gains, cost


def _step_sample(plan: Plan, t: float, dt: float):
    """Everything build_window needs about the plan at one control step."""
    T = plan.horizon
    A, B, poles, idxs = linearize(plan, t)
    # feedforward at the step midpoint: the policy output is held over the
    # whole step, so midpoint sampling cancels the first-order
    # zero-order-hold bias of the planned wrench profiles
    _, mid_idxs, lam = _nominal(plan, min(t + 0.5 * dt, T))
    if mid_idxs != idxs:  # a contact switch falls inside this step
        _, _, lam = _nominal(plan, t)
    return (
        np.eye(NX) + dt * A,
        dt * B,
        poles,
        idxs,
        lam,
        B[3:9, :].copy(),
        plan.state(t).as_vector(),
        plan.momentum_rate(t),
    )


def build_window(plan: Plan, t0: float, settings: LqrSettings,
                 weights: LqrWeights | None = None, sampler=None) -> GainSchedule:
    """Gain schedule for the window [t0, min(t0 + horizon, plan end)].

    ``sampler`` optionally replaces the per-step plan sampling; the
    sliding provider passes a memoized one because overlapping windows
    revisit the same absolute times.
    """
    weights = weights or LqrWeights.from_settings(settings)
    T = plan.horizon
    t1 = min(t0 + settings.horizon, T)
    n_steps = max(1, int(round((t1 - t0) / settings.dt)))
    dt = settings.dt
    if sampler is None:
        sampler = lambda t: _step_sample(plan, t, dt)

    samples = [sampler(min(t0 + k * dt, T)) for k in range(n_steps)]
    gains, cost = riccati([(Ad, Bd) for Ad, Bd, *_ in samples], weights)

    steps = []
    for k, (K, (_Ad, _Bd, poles, idxs, lam, wmap, x_star, hdot_star)) in enumerate(
        zip(gains, samples)
    ):
        steps.append(
            StepGains(
                t=min(t0 + k * dt, T),
                K=K,
                lam_star=lam,
                x_star=x_star,
                hdot_star=hdot_star,
                poles=poles,
                phase_indices=idxs,
                wmap=wmap,
            )
        )
    return GainSchedule(t0=t0, dt=dt, steps=steps, cost_to_go=cost)


def policy(gains: GainSchedule, state, t):
    """Stacked wrench vector lambda = lambda* - K (x - x*) at time t."""
    x = state.as_vector() if hasattr(state, "as_vector") else np.asarray(state, dtype=float)
    return gains.step_at(t).feedback(x)


def momentum_rate_ref(gains: GainSchedule, state, t):
    """Desired momentum rate: plan rate plus the mapped wrench correction."""
    step = gains.step_at(t)
    x = state.as_vector() if hasattr(state, "as_vector") else np.asarray(state, dtype=float)
    lam = step.feedback(x)
    return step.hdot_star + step.wmap @ (lam - step.lam_star)


class RecedingGainProvider:
    """Lazily recomputed sliding-window gains, cached per window start."""

    def __init__(self, plan: Plan, settings: LqrSettings | None = None,
                 weights: LqrWeights | None = None):
        self.plan = plan
        self.settings = settings or plan.scenario.lqr
        self.weights = weights or LqrWeights.from_settings(self.settings)
        self._cache = {}
        self._samples = {}

    def _sampler(self, t):
        key = int(round(t * 1e9))  # exact-time memoization
        if key not in self._samples:
            self._samples[key] = _step_sample(self.plan, t, self.settings.dt)
        return self._samples[key]

    def window_start(self, t):
        stride = self.settings.stride
        w = np.floor(float(t) / stride + 1e-9) * stride
        # keep at least one step inside the plan
        w = min(w, max(0.0, self.plan.horizon - self.settings.dt))
        return max(0.0, w)

    def window(self, t) -> GainSchedule:
        w = self.window_start(t)
        key = int(round(w / self.settings.stride))
        if key not in self._cache:
            self._cache[key] = build_window(
                self.plan, w, self.settings, self.weights, sampler=self._sampler
            )
        return self._cache[key]

    def step_at(self, t) -> StepGains:
        win = self.window(t)
        k = int(np.floor((float(t) - win.t0) / win.dt + 1e-9))
        k = min(max(k, 0), len(win.steps) - 1)
        return win.steps[k]

    def __call__(self, t) -> StepGains:
        return self.step_at(t)


def sliding_recompute(plan: Plan, settings: LqrSettings | None = None,
                      weights: LqrWeights | None = None) -> RecedingGainProvider:
    return RecedingGainProvider(plan, settings, weights)


# -- export ---------------------------------------------------------------

def gains_document(schedule: GainSchedule) -> dict:
    """Structured document of one window (row-major matrices)."""
    return {
        "window_start": schedule.t0,
        "dt": schedule.dt,
        "n_steps": len(schedule.steps),
        "steps": [
            {
                "t": s.t,
                "n_contacts": s.n_contacts,
                "phase_indices": list(s.phase_indices),
                "poles": [p for p in s.poles],
                "K": s.K,
                "lambda_star": s.lam_star,
                "x_star": s.x_star,
                "hdot_star": s.hdot_star,
            }
            for s in schedule.steps
        ],
    }


BLOCK_NORM_HEADER = [
    "t",
    "n_contacts",
    "dl_dr",
    "dl_dl",
    "dl_dk",
    "dk_dr",
    "dk_dl",
    "dk_dk",
]


def block_norm_rows(steps):
    """Frobenius norms of the 3x3 blocks of the momentum gain wmap @ K."""
    rows = []
    for s in steps:
        G = s.wmap @ s.K  # (6, 9): state error -> momentum-rate correction (sign dropped)
        row = [s.t, s.n_contacts]
        for i in range(2):
            for j in range(3):
                row.append(float(np.linalg.norm(G[3 * i : 3 * i + 3, 3 * j : 3 * j + 3])))
        rows.append(row)
    return rows


def effective_steps(provider: RecedingGainProvider, t_grid=None):
    """The gains actually applied over the plan: one step per stride."""
    plan = provider.plan
    if t_grid is None:
        t_grid = np.arange(0.0, plan.horizon - 1e-9, provider.settings.stride)
    return [provider.step_at(t) for t in t_grid]
