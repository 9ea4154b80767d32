"""Command-line front end: plan, gains, simulate and the full pipeline.

Every command writes its artifacts into a run directory together with a
manifest that lists each output file with its SHA-256 digest. Wall-clock
timings go into a separate timings file so that everything listed in the
manifest (and the manifest itself) is byte-identical across reruns with
the same inputs and seed.

Exit codes: 0 success, 1 error, 2 planner not converged (files still
written), 3 simulation diverged (partial log written).
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time

import click
import numpy as np

from . import __version__
from .contacts import LqrSettings, Scenario, parse_scenario, serialize_scenario
from .contacts import scenario_document
from .errors import CentroplanError, ScenarioError, SimulationDivergedError
from .lqr import (
    BLOCK_NORM_HEADER,
    LqrWeights,
    block_norm_rows,
    build_window,
    effective_steps,
    gains_document,
    sliding_recompute,
)
from .optimizer import Plan, SolveOptions, extract_plan, objective_grid
from .seeding import iterated_plan
from .serialize import canonical_yaml, load_yaml, write_csv
from .simulate import (
    Disturbance,
    plot_gain_norms,
    plot_runlog,
    simulate,
    write_runlog,
)

PLAN_FORMAT_VERSION = 1

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2
EXIT_DIVERGED = 3


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fail(message, errors=None, code=EXIT_ERROR):
    payload = {"error": message}
    if errors:
        payload["violations"] = list(errors)
    print(json.dumps(payload), file=sys.stderr)
    sys.exit(code)


def _load_scenario_or_fail(path) -> Scenario:
    try:
        with open(path) as fh:
            return parse_scenario(fh.read())
    except FileNotFoundError:
        _fail(f"scenario file not found: {path}")
    except ScenarioError as exc:
        _fail("scenario validation failed", errors=exc.violations)


# -- plan document --------------------------------------------------------

def plan_document(scenario: Scenario, plan: Plan, report) -> dict:
    refs = report.references
    report_doc = report.as_dict()
    # wall clocks go to timings.yaml; the plan document must be reproducible
    for solve_doc in report_doc.get("solves", []):
        solve_doc.pop("wall_time", None)
    return {
        "plan_format_version": PLAN_FORMAT_VERSION,
        "tool_version": __version__,
        "scenario": scenario_document(scenario),
        "x": plan.x,
        "report": report_doc,
        "references": {
            "times": refs.times,
            "r_des": refs.r_des,
            "l_des": refs.l_des,
            "kappa_des": refs.kappa_des,
        },
    }


def load_plan(path):
    """Reconstruct (scenario, plan, document) from a plan file."""
    with open(path) as fh:
        doc = load_yaml(fh)
    if not isinstance(doc, dict) or doc.get("plan_format_version") != PLAN_FORMAT_VERSION:
        raise CentroplanError(f"{path}: not a plan document")
    scenario = parse_scenario(canonical_yaml(doc["scenario"]))
    plan = extract_plan(np.asarray(doc["x"], dtype=float), scenario)
    return scenario, plan, doc


def _trajectory_rows(plan: Plan, times):
    rows = []
    for t in times:
        st = plan.state(t)
        hdot = plan.momentum_rate(t)
        rows.append(
            [float(t)]
            + [float(v) for v in st.r]
            + [float(v) for v in st.l]
            + [float(v) for v in st.kappa]
            + [float(v) for v in hdot]
        )
    return rows


_TRAJ_HEADER = (
    ["t"]
    + [f"{q}_{c}" for q in ("r", "l", "k") for c in "xyz"]
    + [f"ldot_{c}" for c in "xyz"]
    + [f"kdot_{c}" for c in "xyz"]
)


def _write_plan_stage(run_dir, scenario, plan, report):
    plan_dir = os.path.join(run_dir, "plan")
    os.makedirs(plan_dir, exist_ok=True)
    outputs = {}

    path = os.path.join(run_dir, "scenario.yaml")
    _atomic_write(path, serialize_scenario(scenario))
    outputs["scenario.yaml"] = path

    path = os.path.join(plan_dir, "plan.yaml")
    _atomic_write(path, canonical_yaml(plan_document(scenario, plan, report)))
    outputs["plan/plan.yaml"] = path

    times = objective_grid(scenario)
    path = os.path.join(plan_dir, "trajectory.csv")
    write_csv(path, _TRAJ_HEADER, _trajectory_rows(plan, times))
    outputs["plan/trajectory.csv"] = path

    refs = report.references
    path = os.path.join(plan_dir, "references.csv")
    header = ["t"] + [f"{q}_des_{c}" for q in ("r", "l", "k") for c in "xyz"]
    rows = [
        [float(t)] + [float(v) for v in np.r_[refs.r_des[i], refs.l_des[i], refs.kappa_des[i]]]
        for i, t in enumerate(refs.times)
    ]
    write_csv(path, header, rows)
    outputs["plan/references.csv"] = path
    return outputs


def _write_gains_stage(run_dir, plan, settings: LqrSettings, weights: LqrWeights):
    gains_dir = os.path.join(run_dir, "gains")
    os.makedirs(gains_dir, exist_ok=True)
    outputs = {}

    window = build_window(plan, 0.0, settings, weights)
    doc = gains_document(window)
    doc["settings"] = {
        "horizon": settings.horizon,
        "dt": settings.dt,
        "stride": settings.stride,
        "q_state": weights.q_state,
        "r_force": weights.r_force,
        "r_torque": weights.r_torque,
    }
    path = os.path.join(gains_dir, "gains.yaml")
    _atomic_write(path, canonical_yaml(doc))
    outputs["gains/gains.yaml"] = path

    provider = sliding_recompute(plan, settings, weights)
    rows = block_norm_rows(effective_steps(provider))
    path = os.path.join(gains_dir, "gain_norms.csv")
    write_csv(path, BLOCK_NORM_HEADER, rows)
    outputs["gains/gain_norms.csv"] = path
    return outputs, provider, rows


def _write_sim_stage(run_dir, log, norm_rows=None, plots=True):
    sim_dir = os.path.join(run_dir, "sim")
    os.makedirs(sim_dir, exist_ok=True)
    outputs = {}

    path = os.path.join(sim_dir, "runlog.csv")
    write_runlog(log, path)
    outputs["sim/runlog.csv"] = path

    path = os.path.join(sim_dir, "summary.yaml")
    _atomic_write(path, canonical_yaml(log.metrics))
    outputs["sim/summary.yaml"] = path

    if plots:
        for p in plot_runlog(log, sim_dir):
            outputs[f"sim/{os.path.basename(p)}"] = p
        if norm_rows is not None:
            for p in plot_gain_norms(norm_rows, sim_dir):
                outputs[f"sim/{os.path.basename(p)}"] = p
    return outputs


def _write_manifest(run_dir, command, seed, inputs, outputs, resolved, status, timings):
    manifest = {
        "manifest_format_version": 1,
        "tool_version": __version__,
        "command": command,
        "seed": int(seed),
        "inputs": {name: sha for name, sha in sorted(inputs.items())},
        "resolved": resolved,
        "status": status,
        "outputs": [
            {"path": rel, "sha256": _sha256(path)} for rel, path in sorted(outputs.items())
        ],
    }
    _atomic_write(os.path.join(run_dir, "manifest.yaml"), canonical_yaml(manifest))
    # timings vary run to run; keeping them out of the manifest preserves
    # byte-identical reruns of everything the manifest covers
    _atomic_write(
        os.path.join(run_dir, "timings.yaml"),
        canonical_yaml({"stage_seconds": timings}),
    )


def parse_disturbance(spec: str) -> Disturbance:
    """KIND:v1,v2,...[:t_start[:t_end]], e.g. impulse:50,0,0,0,0,0:3.5:3.55"""
    parts = spec.split(":")
    if len(parts) < 2:
        raise ValueError(f"bad disturbance spec {spec!r}")
    kind = parts[0].strip()
    values = np.array([float(v) for v in parts[1].split(",")])
    t0 = float(parts[2]) if len(parts) > 2 else 0.0
    t1 = float(parts[3]) if len(parts) > 3 else float("inf")
    return Disturbance(kind=kind, value=values, t_start=t0, t_end=t1)


def _lqr_from_flags(scenario, horizon, dt, stride, q, r_force, r_torque):
    base = scenario.lqr
    settings = LqrSettings(
        horizon=horizon if horizon is not None else base.horizon,
        dt=dt if dt is not None else base.dt,
        stride=stride if stride is not None else base.stride,
        q_state=q if q is not None else base.q_state,
        r_force=r_force if r_force is not None else base.r_force,
        r_torque=r_torque if r_torque is not None else base.r_torque,
    )
    return settings, LqrWeights.from_settings(settings)


@click.group()
@click.version_option(version=__version__, prog_name="centroplan")
def main():
    """Centroidal momentum planning, LQR tracking and reduced-model simulation."""


_lqr_options = [
    click.option("--horizon", type=float, default=None, help="Gain window length [s]."),
    click.option("--dt", type=float, default=None, help="Gain discretization step [s]."),
    click.option("--stride", type=float, default=None, help="Window recompute stride [s]."),
    click.option("--q", type=float, default=None, help="State error weight."),
    click.option("--r-force", type=float, default=None, help="Force effort weight."),
    click.option("--r-torque", type=float, default=None, help="Torque effort weight."),
]


def _with_options(opts):
    def deco(f):
        for opt in reversed(opts):
            f = opt(f)
        return f

    return deco


def _run_plan_stage(scenario, seed):
    np.random.seed(seed)
    t0 = time.perf_counter()
    plan, report = iterated_plan(scenario, opts=SolveOptions.from_scenario(scenario))
    return plan, report, time.perf_counter() - t0


@main.command("plan")
@click.argument("scenario_path", type=click.Path())
@click.option("--out", "-o", type=click.Path(), default=None, help="Run directory.")
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_plan(scenario_path, out, seed):
    """Seed references and optimize the momentum plan for SCENARIO_PATH."""
    scenario = _load_scenario_or_fail(scenario_path)
    run_dir = out or f"run_{scenario.name}"
    os.makedirs(run_dir, exist_ok=True)
    plan, report, elapsed = _run_plan_stage(scenario, seed)
    outputs = _write_plan_stage(run_dir, scenario, plan, report)
    status = {
        "plan_converged": report.converged
        and all(d.converged for d in report.diagnostics),
        "objective": report.diagnostics[-1].objective,
        "max_violation": report.diagnostics[-1].max_violation,
        "seed_passes": report.passes,
    }
    _write_manifest(
        run_dir,
        "plan",
        seed,
        {os.path.basename(scenario_path): _sha256(scenario_path)},
        outputs,
        scenario_document(scenario),
        status,
        {"plan": elapsed},
    )
    if not status["plan_converged"]:
        sys.exit(EXIT_NOT_CONVERGED)


@main.command("gains")
@click.argument("plan_path", type=click.Path())
@click.option("--out", "-o", type=click.Path(), default=None, help="Run directory.")
@click.option("--seed", type=int, default=0, show_default=True)
@_with_options(_lqr_options)
def cmd_gains(plan_path, out, seed, horizon, dt, stride, q, r_force, r_torque):
    """Synthesize the sliding-window LQR gain schedule for PLAN_PATH."""
    try:
        scenario, plan, _doc = load_plan(plan_path)
    except (FileNotFoundError, CentroplanError, ScenarioError) as exc:
        _fail(str(exc))
    settings, weights = _lqr_from_flags(scenario, horizon, dt, stride, q, r_force, r_torque)
    if plan.horizon < settings.horizon - 1e-9:
        _fail(
            f"plan horizon {plan.horizon} s is shorter than the gain window {settings.horizon} s"
        )
    run_dir = out or os.path.dirname(os.path.dirname(os.path.abspath(plan_path)))
    os.makedirs(run_dir, exist_ok=True)
    t0 = time.perf_counter()
    outputs, _provider, _rows = _write_gains_stage(run_dir, plan, settings, weights)
    _write_manifest(
        run_dir,
        "gains",
        seed,
        {os.path.basename(plan_path): _sha256(plan_path)},
        outputs,
        {
            "horizon": settings.horizon,
            "dt": settings.dt,
            "stride": settings.stride,
            "q_state": settings.q_state,
            "r_force": settings.r_force,
            "r_torque": settings.r_torque,
        },
        {"ok": True},
        {"gains": time.perf_counter() - t0},
    )


_sim_options = [
    click.option("--disturb", multiple=True,
                 help="Disturbance spec KIND:v1,...[:t_start[:t_end]] (repeatable)."),
    click.option("--feedback/--no-feedback", default=True, show_default=True),
    click.option("--dt-sim", type=float, default=0.001, show_default=True),
    click.option("--divergence-bound", type=float, default=10.0, show_default=True),
    click.option("--plots/--no-plots", default=True, show_default=True),
]


@main.command("simulate")
@click.argument("plan_path", type=click.Path())
@click.option("--out", "-o", type=click.Path(), default=None, help="Run directory.")
@click.option("--seed", type=int, default=0, show_default=True)
@_with_options(_lqr_options)
@_with_options(_sim_options)
def cmd_simulate(plan_path, out, seed, horizon, dt, stride, q, r_force, r_torque,
                 disturb, feedback, dt_sim, divergence_bound, plots):
    """Closed-loop simulation of PLAN_PATH under the LQR policy."""
    try:
        scenario, plan, _doc = load_plan(plan_path)
        disturbances = [parse_disturbance(s) for s in disturb]
    except (FileNotFoundError, CentroplanError, ScenarioError, ValueError) as exc:
        _fail(str(exc))
    settings, weights = _lqr_from_flags(scenario, horizon, dt, stride, q, r_force, r_torque)
    run_dir = out or os.path.dirname(os.path.dirname(os.path.abspath(plan_path)))
    os.makedirs(run_dir, exist_ok=True)
    np.random.seed(seed)

    provider = sliding_recompute(plan, settings, weights)
    t0 = time.perf_counter()
    diverged = False
    try:
        log = simulate(
            plan,
            provider,
            disturbances=disturbances,
            dt_sim=dt_sim,
            feedback=feedback,
            divergence_bound=divergence_bound,
        )
    except SimulationDivergedError as exc:
        log = exc.partial_log
        diverged = True
    norm_rows = block_norm_rows(effective_steps(provider))
    outputs = _write_sim_stage(run_dir, log, norm_rows=norm_rows, plots=plots)
    _write_manifest(
        run_dir,
        "simulate",
        seed,
        {os.path.basename(plan_path): _sha256(plan_path)},
        outputs,
        {
            "disturbances": list(disturb),
            "feedback": feedback,
            "dt_sim": dt_sim,
            "divergence_bound": divergence_bound,
        },
        log.metrics,
        {"simulate": time.perf_counter() - t0},
    )
    if diverged:
        sys.exit(EXIT_DIVERGED)


@main.command("pipeline")
@click.argument("scenario_path", type=click.Path())
@click.option("--out", "-o", type=click.Path(), default=None, help="Run directory.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--skip-simulate", is_flag=True, default=False)
@_with_options(_lqr_options)
@_with_options(_sim_options)
def cmd_pipeline(scenario_path, out, seed, skip_simulate, horizon, dt, stride, q,
                 r_force, r_torque, disturb, feedback, dt_sim, divergence_bound, plots):
    """Run plan, gains and simulate end to end into one run directory."""
    scenario = _load_scenario_or_fail(scenario_path)
    try:
        disturbances = [parse_disturbance(s) for s in disturb]
    except ValueError as exc:
        _fail(str(exc))
    settings, weights = _lqr_from_flags(scenario, horizon, dt, stride, q, r_force, r_torque)
    if scenario.horizon < settings.horizon - 1e-9:
        _fail(
            f"scenario horizon {scenario.horizon} s is shorter than "
            f"the gain window {settings.horizon} s"
        )
    run_dir = out or f"run_{scenario.name}"
    os.makedirs(run_dir, exist_ok=True)

    timings = {}
    plan, report, timings["plan"] = _run_plan_stage(scenario, seed)
    outputs = _write_plan_stage(run_dir, scenario, plan, report)
    plan_converged = report.converged and all(d.converged for d in report.diagnostics)

    t0 = time.perf_counter()
    gains_outputs, provider, norm_rows = _write_gains_stage(run_dir, plan, settings, weights)
    outputs.update(gains_outputs)
    timings["gains"] = time.perf_counter() - t0

    diverged = False
    metrics = {}
    if not skip_simulate:
        t0 = time.perf_counter()
        try:
            log = simulate(
                plan,
                provider,
                disturbances=disturbances,
                dt_sim=dt_sim,
                feedback=feedback,
                divergence_bound=divergence_bound,
            )
        except SimulationDivergedError as exc:
            log = exc.partial_log
            diverged = True
        timings["simulate"] = time.perf_counter() - t0
        outputs.update(_write_sim_stage(run_dir, log, norm_rows=norm_rows, plots=plots))
        metrics = log.metrics

    status = {
        "plan_converged": plan_converged,
        "objective": report.diagnostics[-1].objective,
        "max_violation": report.diagnostics[-1].max_violation,
        "seed_passes": report.passes,
        "simulated": not skip_simulate,
        "sim_metrics": metrics,
    }
    _write_manifest(
        run_dir,
        "pipeline",
        seed,
        {os.path.basename(scenario_path): _sha256(scenario_path)},
        outputs,
        scenario_document(scenario),
        status,
        timings,
    )
    if not plan_converged:
        sys.exit(EXIT_NOT_CONVERGED)
    if diverged:
        sys.exit(EXIT_DIVERGED)


if __name__ == "__main__":
    main()
