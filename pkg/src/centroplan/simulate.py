"""Closed-loop validation of a plan/gain pair on the reduced model.

The simulator advances the centroidal state with RK4 at a fine step while
the policy output is held over each control step (zero-order hold at the
gain stride). Commanded wrenches are clamped per contact by a sequential
projection in the sole frame so every applied wrench satisfies the phase
constraints exactly. Disturbances are injected at the momentum-rate
level. The run log carries per-step actual/reference states, pre/post
clamp wrench sums and clamp flags, plus summary tracking metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contacts import ContactPhase
from .errors import SimulationDivergedError
from .model import CentroidalState, ContactWrench, momentum_rate
from .serialize import write_csv

__all__ = [
    "Disturbance",
    "RunLog",
    "clamp_wrench",
    "wrench_feasible",
    "simulate",
    "runlog_rows",
    "RUNLOG_HEADER",
    "write_runlog",
    "plot_runlog",
    "plot_gain_norms",
]


@dataclass(frozen=True)
class Disturbance:
    """Momentum-rate level disturbance.

    kinds: "initial_offset" (9-vector added to the initial state),
    "impulse" and "bias" (6-vector momentum rate over [t_start, t_end]).
    """

    kind: str
    value: np.ndarray
    t_start: float = 0.0
    t_end: float = float("inf")

    def __post_init__(self):
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float).reshape(-1))
        if self.kind not in ("initial_offset", "impulse", "bias"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        size = 9 if self.kind == "initial_offset" else 6
        if self.value.size != size:
            raise ValueError(f"{self.kind} disturbance needs a {size}-vector")
        if self.kind != "initial_offset" and not self.t_end > self.t_start:
            raise ValueError("disturbance window must have t_end > t_start")

    def rate(self, t):
        if self.kind == "initial_offset":
            return np.zeros(6)
        if self.t_start <= t < self.t_end:
            return self.value
        return np.zeros(6)


def clamp_wrench(wrench: ContactWrench, phase: ContactPhase, force_cap: float) -> ContactWrench:
    """Project a pole wrench onto the phase's admissible set (sole frame).

    Order: normal force to [0, cap]; tangential forces shrunk radially to
    the friction pyramid; CoP offsets clipped to the sole box; normal free
    torque clipped; torque components the clipped CoP cannot produce are
    dropped. Point contacts keep only the projected force.
    """
    R = phase.rotation
    f_s = R.T @ wrench.f
    tau_s = R.T @ wrench.tau

    f_n = float(np.clip(f_s[2], 0.0, force_cap))
    if f_n <= 0.0:
        return ContactWrench(np.zeros(3), np.zeros(3))
    f_t = f_s[:2].copy()
    lim = phase.friction * f_n
    peak = float(np.max(np.abs(f_t)))
    if peak > lim:
        f_t *= lim / peak
    f_s = np.array([f_t[0], f_t[1], f_n])

    if phase.point_contact:
        return ContactWrench(R @ f_s, np.zeros(3))

    # tangential torque <-> CoP offset: tau_t = (u2*f_n, -u1*f_n)
    u1 = float(np.clip(-tau_s[1] / f_n, -phase.cop_half_extents[0], phase.cop_half_extents[0]))
    u2 = float(np.clip(tau_s[0] / f_n, -phase.cop_half_extents[1], phase.cop_half_extents[1]))
    yaw_from_cop = u1 * f_s[1] - u2 * f_s[0]
    v = float(np.clip(tau_s[2] - yaw_from_cop, -phase.torque_bound, phase.torque_bound))
    tau_s = np.array([u2 * f_n, -u1 * f_n, yaw_from_cop + v])
    return ContactWrench(R @ f_s, R @ tau_s)


def wrench_feasible(wrench: ContactWrench, phase: ContactPhase, force_cap: float,
                    tol: float = 1e-9) -> bool:
    """Exact admissibility check of a pole wrench for one phase."""
    R = phase.rotation
    f_s = R.T @ wrench.f
    tau_s = R.T @ wrench.tau
    if f_s[2] < -tol or f_s[2] > force_cap + tol:
        return False
    if np.max(np.abs(f_s[:2])) > phase.friction * f_s[2] + tol:
        return False
    if phase.point_contact:
        return bool(np.max(np.abs(tau_s)) <= tol)
    if f_s[2] <= tol:
        return bool(np.max(np.abs(tau_s)) <= tol)
    u1 = -tau_s[1] / f_s[2]
    u2 = tau_s[0] / f_s[2]
    if abs(u1) > phase.cop_half_extents[0] + tol or abs(u2) > phase.cop_half_extents[1] + tol:
        return False
    v = tau_s[2] - (u1 * f_s[1] - u2 * f_s[0])
    return bool(abs(v) <= phase.torque_bound + tol)


@dataclass
class RunLog:
    """Uniform-time closed-loop record plus summary metrics."""

    times: np.ndarray
    states: np.ndarray        # (n, 9) actual
    references: np.ndarray    # (n, 9) plan states
    force_pre: np.ndarray     # (n, 3) summed commanded force
    force_post: np.ndarray    # (n, 3) summed applied force
    torque_pre: np.ndarray
    torque_post: np.ndarray
    n_contacts: np.ndarray
    n_clamped: np.ndarray
    diverged: bool = False
    metrics: dict = field(default_factory=dict)

    def compute_metrics(self):
        err = self.states - self.references
        out = {}
        for name, sl in (("com", slice(0, 3)), ("lin", slice(3, 6)), ("ang", slice(6, 9))):
            norms = np.linalg.norm(err[:, sl], axis=1)
            out[f"rms_{name}_error"] = float(np.sqrt(np.mean(norms**2))) if len(norms) else 0.0
            out[f"max_{name}_error"] = float(np.max(norms)) if len(norms) else 0.0
        total = int(np.sum(self.n_contacts))
        out["clamp_fraction"] = float(np.sum(self.n_clamped)) / total if total else 0.0
        out["diverged"] = self.diverged
        out["steps"] = int(len(self.times))
        self.metrics = out
        return out


def simulate(plan, gains_provider, disturbances=(), dt_sim: float = 0.001,
             feedback: bool = True, divergence_bound: float = 10.0,
             t_end: float | None = None) -> RunLog:
    """Run the closed loop; raises SimulationDivergedError with a partial log.

    ``gains_provider`` maps a query time to a StepGains; the policy output
    is held over each control step of ``stride`` seconds and integrated
    with RK4 substeps of ``dt_sim``.
    """
    scenario = plan.scenario
    stride = scenario.lqr.stride
    n_sub = int(round(stride / dt_sim))
    if abs(n_sub * dt_sim - stride) > 1e-12:
        raise ValueError(f"dt_sim={dt_sim} must divide the gain stride {stride}")
    T = plan.horizon if t_end is None else min(t_end, plan.horizon)
    n_steps = int(round(T / stride))

    x = plan.scenario.initial_state.as_vector()
    for d in disturbances:
        if d.kind == "initial_offset":
            x = x + d.value

    def dist_rate(t):
        out = np.zeros(6)
        for d in disturbances:
            out += d.rate(t)
        return out

    params = scenario.params
    M = params.mass

    rec = {k: [] for k in ("t", "x", "ref", "fpre", "fpost", "tpre", "tpost", "nc", "ncl")}
    diverged = False

    for k in range(n_steps):
        t = k * stride
        step = gains_provider(t)
        lam = step.feedback(x) if feedback else step.lam_star.copy()
        pairs = step.split(lam)
        phases = [scenario.schedule.phases[i] for i in step.phase_indices]
        clamped = []
        n_cl = 0
        for (f, tau), ph in zip(pairs, phases):
            raw = ContactWrench(f, tau)
            out = clamp_wrench(raw, ph, scenario.force_cap(ph))
            if not (np.allclose(out.f, raw.f, atol=1e-9) and np.allclose(out.tau, raw.tau, atol=1e-9)):
                n_cl += 1
            clamped.append(out)

        ref = plan.state(t).as_vector()
        rec["t"].append(t)
        rec["x"].append(x.copy())
        rec["ref"].append(ref)
        rec["fpre"].append(np.sum([p[0] for p in pairs], axis=0))
        rec["fpost"].append(np.sum([w.f for w in clamped], axis=0))
        rec["tpre"].append(np.sum([p[1] for p in pairs], axis=0))
        rec["tpost"].append(np.sum([w.tau for w in clamped], axis=0))
        rec["nc"].append(len(clamped))
        rec["ncl"].append(n_cl)

        if np.linalg.norm(x - ref) > divergence_bound:
            diverged = True
            break

        def deriv(tq, y):
            st = CentroidalState.from_vector(y)
            h = momentum_rate(st, step.poles, clamped, params) + dist_rate(tq)
            return np.concatenate([y[3:6] / M, h])

        for j in range(n_sub):
            ts = t + j * dt_sim
            h = dt_sim
            k1 = deriv(ts, x)
            k2 = deriv(ts + h / 2, x + h / 2 * k1)
            k3 = deriv(ts + h / 2, x + h / 2 * k2)
            k4 = deriv(ts + h, x + h * k3)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    log = RunLog(
        times=np.array(rec["t"]),
        states=np.array(rec["x"]).reshape(-1, 9),
        references=np.array(rec["ref"]).reshape(-1, 9),
        force_pre=np.array(rec["fpre"]).reshape(-1, 3),
        force_post=np.array(rec["fpost"]).reshape(-1, 3),
        torque_pre=np.array(rec["tpre"]).reshape(-1, 3),
        torque_post=np.array(rec["tpost"]).reshape(-1, 3),
        n_contacts=np.array(rec["nc"], dtype=int),
        n_clamped=np.array(rec["ncl"], dtype=int),
        diverged=diverged,
    )
    log.compute_metrics()
    if diverged:
        raise SimulationDivergedError(
            f"state error exceeded {divergence_bound} at t={rec['t'][-1]:.3f}", partial_log=log
        )
    return log


RUNLOG_HEADER = (
    ["t"]
    + [f"{q}_{c}" for q in ("r", "l", "k") for c in "xyz"]
    + [f"{q}_ref_{c}" for q in ("r", "l", "k") for c in "xyz"]
    + [f"f_pre_{c}" for c in "xyz"]
    + [f"f_post_{c}" for c in "xyz"]
    + [f"tau_pre_{c}" for c in "xyz"]
    + [f"tau_post_{c}" for c in "xyz"]
    + ["n_contacts", "n_clamped"]
)


def runlog_rows(log: RunLog):
    rows = []
    for i, t in enumerate(log.times):
        rows.append(
            [float(t)]
            + [float(v) for v in log.states[i]]
            + [float(v) for v in log.references[i]]
            + [float(v) for v in log.force_pre[i]]
            + [float(v) for v in log.force_post[i]]
            + [float(v) for v in log.torque_pre[i]]
            + [float(v) for v in log.torque_post[i]]
            + [int(log.n_contacts[i]), int(log.n_clamped[i])]
        )
    return rows


def write_runlog(log: RunLog, path):
    write_csv(path, RUNLOG_HEADER, runlog_rows(log))


def _figure():
    import matplotlib

    matplotlib.use("Agg", force=False)
    matplotlib.rcParams["svg.hashsalt"] = "centroplan"
    import matplotlib.pyplot as plt

    return plt


def _save_svg(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_runlog(log: RunLog, out_dir):
    """CoM and momentum tracking plots; returns the written paths."""
    import os

    plt = _figure()
    paths = []

    fig, axes = plt.subplots(3, 1, figsize=(7, 6), sharex=True)
    for c, ax in enumerate(axes):
        ax.plot(log.times, log.references[:, c], "k--", label="plan")
        ax.plot(log.times, log.states[:, c], "C0-", label="sim")
        ax.set_ylabel("xyz"[c] + " [m]")
        ax.grid(True, alpha=0.3)
    axes[0].set_title("CoM tracking")
    axes[0].legend(loc="best")
    axes[-1].set_xlabel("t [s]")
    p = os.path.join(out_dir, "com_tracking.svg")
    _save_svg(fig, p)
    plt.close(fig)
    paths.append(p)

    fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for c in range(3):
        axes[0].plot(log.times, log.states[:, 3 + c], f"C{c}-", label="lmk"[1] + "xyz"[c])
        axes[0].plot(log.times, log.references[:, 3 + c], f"C{c}--")
        axes[1].plot(log.times, log.states[:, 6 + c], f"C{c}-")
        axes[1].plot(log.times, log.references[:, 6 + c], f"C{c}--")
    axes[0].set_ylabel("l [kg m/s]")
    axes[1].set_ylabel("kappa [kg m^2/s]")
    axes[0].set_title("momentum tracking (solid sim, dashed plan)")
    axes[1].set_xlabel("t [s]")
    for ax in axes:
        ax.grid(True, alpha=0.3)
    p = os.path.join(out_dir, "momentum_tracking.svg")
    _save_svg(fig, p)
    plt.close(fig)
    paths.append(p)
    return paths


def plot_gain_norms(rows, out_dir):
    """Line plot of the 3x3 momentum-gain block norms over time."""
    import os

    plt = _figure()
    arr = np.array([r for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(7, 4))
    labels = ["dl/dr", "dl/dl", "dl/dk", "dk/dr", "dk/dl", "dk/dk"]
    for j, lab in enumerate(labels):
        ax.plot(arr[:, 0], arr[:, 2 + j], label=lab)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("block Frobenius norm")
    ax.set_title("LQR momentum-gain block norms")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", ncol=3, fontsize=8)
    p = os.path.join(out_dir, "gain_norms.svg")
    _save_svg(fig, p)
    plt.close(fig)
    return [p]
