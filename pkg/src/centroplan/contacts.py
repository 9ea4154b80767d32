"""Contact schedules, sole frames, swing trajectories and scenario files.

A scenario document fully describes one planning problem: model
parameters, the timed contact phases with their sole frames and wrench
bounds, swing-leg trajectories for the flight intervals, limb-model
parameters for reference seeding, cost weights and solver/LQR settings.
Files are YAML; angles are stored in degrees and converted on parse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ScenarioError, ScheduleError
from .model import CentroidalState, ModelParams
from .serialize import canonical_yaml, load_yaml

__all__ = [
    "ContactPhase",
    "ContactSchedule",
    "SwingTrajectory",
    "LimbModel",
    "CostWeights",
    "OptimizerSettings",
    "LqrSettings",
    "Scenario",
    "parse_scenario",
    "load_scenario",
    "serialize_scenario",
    "active_contacts",
    "foot_position",
]

FORMAT_VERSION = 1


def _rpy_matrix(rpy_deg):
    """World-from-sole rotation, columns (tangent_x, tangent_y, normal)."""
    r, p, y = np.radians(np.asarray(rpy_deg, dtype=float))
    cr, sr = math.cos(r), math.sin(r)
    cp, sp = math.cos(p), math.sin(p)
    cy, sy = math.cos(y), math.sin(y)
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


@dataclass(frozen=True)
class ContactPhase:
    """One stationary sole placement of one effector over [t_start, t_end).

    The sole frame is right-handed orthonormal: tangent_x (foot forward),
    tangent_y (foot left), normal. ``cop_half_extents`` bounds the CoP in
    the tangent plane, ``torque_bound`` the sole-normal torque,
    ``friction`` the pyramid coefficient and ``force_cap`` the upper
    force bound. Point contacts carry no CoP or torque freedom.
    """

    effector: str
    t_start: float
    t_end: float
    center: np.ndarray
    rpy_deg: np.ndarray = field(default_factory=lambda: np.zeros(3))
    cop_half_extents: np.ndarray = field(default_factory=lambda: np.array([0.11, 0.05]))
    torque_bound: float = 10.0
    friction: float = 0.7
    force_cap: float | None = None
    point_contact: bool = False

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        object.__setattr__(self, "rpy_deg", np.asarray(self.rpy_deg, dtype=float).reshape(3))
        object.__setattr__(
            self, "cop_half_extents", np.asarray(self.cop_half_extents, dtype=float).reshape(2)
        )

    @property
    def rotation(self):
        return _rpy_matrix(self.rpy_deg)

    @property
    def tangent_x(self):
        return self.rotation[:, 0]

    @property
    def tangent_y(self):
        return self.rotation[:, 1]

    @property
    def normal(self):
        return self.rotation[:, 2]

    @property
    def duration(self):
        return self.t_end - self.t_start

    def validate(self, idx, errors):
        tag = f"contacts[{idx}] ({self.effector})"
        if not self.t_end > self.t_start:
            errors.append(f"{tag}: t_end ({self.t_end}) must exceed t_start ({self.t_start})")
        if not np.all(np.isfinite(self.center)):
            errors.append(f"{tag}: center must be finite")
        if not self.friction > 0:
            errors.append(f"{tag}: friction must be positive")
        if np.any(self.cop_half_extents < 0):
            errors.append(f"{tag}: cop_half_extents must be non-negative")
        if self.force_cap is not None and self.force_cap <= 0:
            errors.append(f"{tag}: force_cap must be positive")
        if self.point_contact and (
            self.torque_bound != 0.0 or np.any(self.cop_half_extents != 0.0)
        ):
            errors.append(f"{tag}: point contact requires torque_bound=0 and cop_half_extents=0")


@dataclass(frozen=True)
class ContactSchedule:
    phases: tuple
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))

    def validate(self, errors, allow_flight=False):
        if not self.horizon > 0:
            errors.append(f"horizon must be positive, got {self.horizon}")
        for i, ph in enumerate(self.phases):
            ph.validate(i, errors)
        by_eff = {}
        for i, ph in enumerate(self.phases):
            by_eff.setdefault(ph.effector, []).append((i, ph))
        for eff, items in by_eff.items():
            items.sort(key=lambda x: x[1].t_start)
            for (i, a), (j, b) in zip(items, items[1:]):
                if a.t_end > b.t_start + 1e-12:
                    errors.append(
                        f"contacts[{i}] and contacts[{j}]: phases of effector {eff} overlap"
                    )
        if not allow_flight:
            cuts = sorted(
                {0.0, self.horizon}
                | {t for ph in self.phases for t in (ph.t_start, ph.t_end) if 0 < t < self.horizon}
            )
            for a, b in zip(cuts, cuts[1:]):
                mid = 0.5 * (a + b)
                if not any(ph.t_start <= mid < ph.t_end for ph in self.phases):
                    errors.append(f"no active contact on [{a:.6g}, {b:.6g}) (flight rejected)")


def active_contacts(schedule: ContactSchedule, t):
    """Phases active at t, using the half-open [t_start, t_end) convention.

    The horizon end instant belongs to the phases ending exactly there.
    """
    t = float(t)
    if t < 0 or t > schedule.horizon:
        raise ScheduleError(f"t={t} outside horizon [0, {schedule.horizon}]")
    out = []
    for ph in schedule.phases:
        if ph.t_start <= t < ph.t_end:
            out.append(ph)
        elif t == schedule.horizon and ph.t_end == schedule.horizon and ph.t_start <= t:
            out.append(ph)
    return out


def _smoothstep(u):
    return u * u * (3.0 - 2.0 * u)


@dataclass(frozen=True)
class SwingTrajectory:
    """Cubic swing interpolation between two sole placements.

    Horizontal motion follows a cubic easing between the start and end
    centers (zero end velocities); the vertical channel adds a cubic
    two-segment arc through an apex ``lift_height`` above the higher end.
    """

    effector: str
    t_start: float
    t_end: float
    start: np.ndarray
    end: np.ndarray
    lift_height: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float).reshape(3))
        object.__setattr__(self, "end", np.asarray(self.end, dtype=float).reshape(3))

    def position(self, t):
        u = (float(t) - self.t_start) / (self.t_end - self.t_start)
        u = min(max(u, 0.0), 1.0)
        pos = self.start + (self.end - self.start) * _smoothstep(u)
        apex = max(self.start[2], self.end[2]) + self.lift_height
        # two Hermite arcs meeting at the apex with zero vertical velocity
        if u < 0.5:
            v = _smoothstep(2 * u)
            z = self.start[2] + (apex - self.start[2]) * v
        else:
            v = _smoothstep(2 * u - 1)
            z = apex + (self.end[2] - apex) * v
        pos = pos.copy()
        pos[2] = z
        return pos


@dataclass(frozen=True)
class LimbModel:
    """Point-mass stand-in for the swing limbs.

    Each effector carries ``foot_mass_fraction * M``; the limb CoM sits at
    ``com_ratio`` of the way from the base point to the foot. The base
    carries the remaining mass and is kept ``base_height`` above the feet
    when seeding the first reference pass.
    """

    foot_mass_fraction: float = 0.16
    com_ratio: float = 0.5
    base_height: float = 0.8

    def validate(self, n_effectors, errors):
        if not 0 < self.foot_mass_fraction:
            errors.append("limb_model.foot_mass_fraction must be positive")
        if self.foot_mass_fraction * n_effectors >= 1.0:
            errors.append("limb_model: total limb mass must stay below the robot mass")
        if not 0.0 <= self.com_ratio <= 1.0:
            errors.append("limb_model.com_ratio must be in [0, 1]")


def _weight3(v):
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.size == 1:
        a = np.repeat(a, 3)
    return a.reshape(3)


@dataclass(frozen=True)
class CostWeights:
    """Diagonal weights of the tracking objective (3-vectors of diagonals)."""

    lin_rate: np.ndarray = field(default_factory=lambda: np.full(3, 1e-3))
    lin: np.ndarray = field(default_factory=lambda: np.ones(3))
    com: np.ndarray = field(default_factory=lambda: np.ones(3))
    ang_rate: np.ndarray = field(default_factory=lambda: np.full(3, 1e-3))
    ang: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        for name in ("lin_rate", "lin", "com", "ang_rate", "ang"):
            object.__setattr__(self, name, _weight3(getattr(self, name)))

    def validate(self, errors):
        for name in ("lin_rate", "lin", "com", "ang_rate", "ang"):
            if np.any(getattr(self, name) < 0):
                errors.append(f"weights.{name} must be non-negative")


@dataclass(frozen=True)
class OptimizerSettings:
    poly_coeffs: int = 4
    knots_per_phase: int = 20
    terminal_zero_wrench: bool = True
    optimize_sole_offsets: bool = False
    sole_offset_bound: float = 0.1
    tol: float = 1e-5
    feas_tol: float = 1e-6
    max_outer: int = 25
    max_inner: int = 500
    seed_passes: int = 2

    def validate(self, errors):
        if self.poly_coeffs < 1:
            errors.append("optimizer.poly_coeffs must be at least 1")
        if self.knots_per_phase < 1:
            errors.append("optimizer.knots_per_phase must be at least 1")


@dataclass(frozen=True)
class LqrSettings:
    horizon: float = 2.0
    dt: float = 0.01
    stride: float = 0.01
    q_state: float = 10.0
    r_force: float = 0.1
    r_torque: float = 0.5

    def validate(self, errors):
        if self.dt <= 0 or self.horizon <= 0 or self.stride <= 0:
            errors.append("lqr horizon, dt and stride must be positive")
        if self.r_force <= 0 or self.r_torque <= 0:
            errors.append("lqr effort weights must be positive")


@dataclass(frozen=True)
class Scenario:
    name: str
    params: ModelParams
    schedule: ContactSchedule
    swings: tuple
    initial_state: CentroidalState
    limb_model: LimbModel = field(default_factory=LimbModel)
    weights: CostWeights = field(default_factory=CostWeights)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    lqr: LqrSettings = field(default_factory=LqrSettings)
    allow_flight: bool = False

    def __post_init__(self):
        object.__setattr__(self, "swings", tuple(self.swings))

    @property
    def horizon(self):
        return self.schedule.horizon

    def force_cap(self, phase: ContactPhase):
        if phase.force_cap is not None:
            return phase.force_cap
        return 4.0 * self.params.mass * float(np.linalg.norm(self.params.gravity))

    def effectors(self):
        seen = []
        for ph in self.schedule.phases:
            if ph.effector not in seen:
                seen.append(ph.effector)
        return seen

    def with_optimizer(self, **kw):
        return replace(self, optimizer=replace(self.optimizer, **kw))

    def with_weights(self, **kw):
        return replace(self, weights=replace(self.weights, **kw))


def foot_position(scenario: Scenario, effector: str, t):
    """Foot location at time t: sole center in stance, swing spline in flight."""
    t = float(t)
    phases = sorted(
        (ph for ph in scenario.schedule.phases if ph.effector == effector),
        key=lambda p: p.t_start,
    )
    if not phases:
        raise ScheduleError(f"unknown effector {effector!r}")
    for ph in phases:
        if ph.t_start <= t < ph.t_end:
            return ph.center.copy()
    for sw in scenario.swings:
        if sw.effector == effector and sw.t_start <= t <= sw.t_end:
            return sw.position(t)
    if t < phases[0].t_start:
        return phases[0].center.copy()
    # after the last phase/swing: hold the last known placement
    last = phases[-1]
    for sw in scenario.swings:
        if sw.effector == effector and sw.t_start >= last.t_end:
            last_pos = sw.end if t >= sw.t_end else sw.position(t)
            return np.asarray(last_pos, dtype=float).copy()
    return last.center.copy()


# -- parsing / serialization --------------------------------------------

def _get(d, key, errors, default=None, required=False, ctx=""):
    if key in d:
        return d[key]
    if required:
        errors.append(f"missing field {ctx}{key}")
    return default


def parse_scenario(text: str) -> Scenario:
    """Parse and fully validate a scenario document.

    Raises :class:`ScenarioError` carrying every violation found.
    """
    errors = []
    try:
        doc = load_yaml(text)
    except Exception as exc:  # malformed YAML
        raise ScenarioError([f"invalid YAML: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ScenarioError(["scenario document must be a mapping"])

    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        errors.append(f"format_version must be {FORMAT_VERSION}, got {version}")

    model = doc.get("model", {}) or {}
    try:
        params = ModelParams(
            mass=float(model.get("mass", 60.0)),
            gravity=np.asarray(model.get("gravity", [0.0, 0.0, -9.81]), dtype=float),
        )
    except (ValueError, TypeError) as exc:
        errors.append(f"model: {exc}")
        params = ModelParams()

    horizon = float(_get(doc, "horizon", errors, default=1.0, required=True))

    phases = []
    for i, entry in enumerate(doc.get("contacts", []) or []):
        try:
            phases.append(
                ContactPhase(
                    effector=str(entry["effector"]),
                    t_start=float(entry["t_start"]),
                    t_end=float(entry["t_end"]),
                    center=np.asarray(entry["center"], dtype=float),
                    rpy_deg=np.asarray(entry.get("rpy_deg", [0, 0, 0]), dtype=float),
                    cop_half_extents=np.asarray(
                        entry.get("cop_half_extents", [0.11, 0.05]), dtype=float
                    ),
                    torque_bound=float(entry.get("torque_bound", 10.0)),
                    friction=float(entry.get("friction", 0.7)),
                    force_cap=(
                        float(entry["force_cap"]) if entry.get("force_cap") is not None else None
                    ),
                    point_contact=bool(entry.get("point_contact", False)),
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            errors.append(f"contacts[{i}]: {exc!r}")
    if not phases:
        errors.append("scenario needs at least one contact phase")
        raise ScenarioError(errors)

    allow_flight = bool(doc.get("allow_flight", False))
    schedule = ContactSchedule(phases=tuple(phases), horizon=horizon)
    schedule.validate(errors, allow_flight=allow_flight)

    swings = []
    for i, entry in enumerate(doc.get("swings", []) or []):
        try:
            eff = str(entry["effector"])
            t0, t1 = float(entry["t_start"]), float(entry["t_end"])
            prev = [p for p in phases if p.effector == eff and abs(p.t_end - t0) < 1e-9]
            nxt = [p for p in phases if p.effector == eff and abs(p.t_start - t1) < 1e-9]
            if prev:
                start = prev[-1].center
            else:
                errors.append(f"swings[{i}]: no {eff} phase ends at t={t0}")
                continue
            if nxt:
                end = nxt[0].center
            elif entry.get("target") is not None:
                end = np.asarray(entry["target"], dtype=float)
            else:
                errors.append(f"swings[{i}]: no {eff} phase starts at t={t1} and no target given")
                continue
            swings.append(
                SwingTrajectory(
                    effector=eff,
                    t_start=t0,
                    t_end=t1,
                    start=start,
                    end=end,
                    lift_height=float(entry.get("lift_height", 0.1)),
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            errors.append(f"swings[{i}]: {exc!r}")

    limb_doc = doc.get("limb_model", {}) or {}
    limb = LimbModel(
        foot_mass_fraction=float(limb_doc.get("foot_mass_fraction", 0.16)),
        com_ratio=float(limb_doc.get("com_ratio", 0.5)),
        base_height=float(limb_doc.get("base_height", 0.8)),
    )
    limb.validate(len({p.effector for p in phases}), errors)

    wdoc = doc.get("weights", {}) or {}
    weights = CostWeights(
        lin_rate=wdoc.get("lin_rate", 1e-3),
        lin=wdoc.get("lin", 1.0),
        com=wdoc.get("com", 1.0),
        ang_rate=wdoc.get("ang_rate", 1e-3),
        ang=wdoc.get("ang", 1.0),
    )
    weights.validate(errors)

    odoc = doc.get("optimizer", {}) or {}
    optimizer = OptimizerSettings(
        **{k: odoc[k] for k in OptimizerSettings.__dataclass_fields__ if k in odoc}
    )
    optimizer.validate(errors)

    ldoc = doc.get("lqr", {}) or {}
    lqr = LqrSettings(**{k: ldoc[k] for k in LqrSettings.__dataclass_fields__ if k in ldoc})
    lqr.validate(errors)

    sdoc = doc.get("initial_state", {}) or {}
    try:
        initial = CentroidalState(
            r=np.asarray(sdoc.get("com", [0.0, 0.0, 1.0]), dtype=float),
            l=np.asarray(sdoc.get("lin_momentum", [0.0, 0.0, 0.0]), dtype=float),
            kappa=np.asarray(sdoc.get("ang_momentum", [0.0, 0.0, 0.0]), dtype=float),
        )
    except (ValueError, TypeError) as exc:
        errors.append(f"initial_state: {exc}")
        initial = CentroidalState(np.zeros(3), np.zeros(3), np.zeros(3))

    if errors:
        raise ScenarioError(errors)

    return Scenario(
        name=str(doc.get("name", "scenario")),
        params=params,
        schedule=schedule,
        swings=tuple(swings),
        initial_state=initial,
        limb_model=limb,
        weights=weights,
        optimizer=optimizer,
        lqr=lqr,
        allow_flight=allow_flight,
    )


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return parse_scenario(fh.read())


def scenario_document(sc: Scenario) -> dict:
    swings = []
    for sw in sc.swings:
        entry = {
            "effector": sw.effector,
            "t_start": sw.t_start,
            "t_end": sw.t_end,
            "lift_height": sw.lift_height,
        }
        nxt = [
            p
            for p in sc.schedule.phases
            if p.effector == sw.effector and abs(p.t_start - sw.t_end) < 1e-9
        ]
        if not nxt:
            entry["target"] = sw.end
        swings.append(entry)
    return {
        "format_version": FORMAT_VERSION,
        "name": sc.name,
        "model": {"mass": sc.params.mass, "gravity": sc.params.gravity},
        "horizon": sc.schedule.horizon,
        "initial_state": {
            "com": sc.initial_state.r,
            "lin_momentum": sc.initial_state.l,
            "ang_momentum": sc.initial_state.kappa,
        },
        "contacts": [
            {
                "effector": ph.effector,
                "t_start": ph.t_start,
                "t_end": ph.t_end,
                "center": ph.center,
                "rpy_deg": ph.rpy_deg,
                "cop_half_extents": ph.cop_half_extents,
                "torque_bound": ph.torque_bound,
                "friction": ph.friction,
                "force_cap": ph.force_cap,
                "point_contact": ph.point_contact,
            }
            for ph in sc.schedule.phases
        ],
        "swings": swings,
        "limb_model": {
            "foot_mass_fraction": sc.limb_model.foot_mass_fraction,
            "com_ratio": sc.limb_model.com_ratio,
            "base_height": sc.limb_model.base_height,
        },
        "weights": {
            "lin_rate": sc.weights.lin_rate,
            "lin": sc.weights.lin,
            "com": sc.weights.com,
            "ang_rate": sc.weights.ang_rate,
            "ang": sc.weights.ang,
        },
        "optimizer": {
            k: getattr(sc.optimizer, k) for k in OptimizerSettings.__dataclass_fields__
        },
        "lqr": {k: getattr(sc.lqr, k) for k in LqrSettings.__dataclass_fields__},
        "allow_flight": sc.allow_flight,
    }


def serialize_scenario(sc: Scenario) -> str:
    return canonical_yaml(scenario_document(sc))
