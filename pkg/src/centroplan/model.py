"""Reduced centroidal dynamics: CoM, linear and angular momentum.

The state is (r, l, kappa) with
    M * dr/dt     = l
    dl/dt         = M*g + sum_i f_i
    dkappa/dt     = sum_i tau_i + sum_i (p_i - r) x f_i
where each contact i applies a force f_i and a pure torque tau_i at a
point p_i. Angular momentum is taken about the (moving) CoM.

Everything here is a pure function of its arguments; the dataclasses are
frozen and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationError

__all__ = [
    "CentroidalState",
    "ContactWrench",
    "ModelParams",
    "skew",
    "momentum_rate",
    "wrench_map",
    "integrate_state",
]


def _vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"expected finite 3-vector, got {v!r}")
    return a


@dataclass(frozen=True)
class CentroidalState:
    """CoM position r [m], linear momentum l [kg m/s], angular momentum kappa [kg m^2/s]."""

    r: np.ndarray
    l: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", _vec3(self.r))
        object.__setattr__(self, "l", _vec3(self.l))
        object.__setattr__(self, "kappa", _vec3(self.kappa))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.r, self.l, self.kappa])

    @staticmethod
    def from_vector(x) -> "CentroidalState":
        x = np.asarray(x, dtype=float).reshape(9)
        return CentroidalState(x[:3], x[3:6], x[6:9])


@dataclass(frozen=True)
class ContactWrench:
    """Force [N] and pure torque [N m]; the application point is stated separately."""

    f: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "f", _vec3(self.f))
        object.__setattr__(self, "tau", _vec3(self.tau))


@dataclass(frozen=True)
class ModelParams:
    """Total mass M [kg] and gravity vector g [m/s^2]."""

    mass: float = 60.0
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def __post_init__(self):
        if not (np.isfinite(self.mass) and self.mass > 0):
            raise ValueError(f"mass must be positive, got {self.mass}")
        object.__setattr__(self, "gravity", _vec3(self.gravity))


def skew(a) -> np.ndarray:
    """Matrix [a]_x with [a]_x @ b == cross(a, b)."""
    a = np.asarray(a, dtype=float).reshape(3)
    return np.array(
        [
            [0.0, -a[2], a[1]],
            [a[2], 0.0, -a[0]],
            [-a[1], a[0], 0.0],
        ]
    )


def momentum_rate(state, points, wrenches, params) -> np.ndarray:
    """Momentum rate (dl, dkappa) for wrenches applied at the given points."""
    if len(points) != len(wrenches):
        raise ValueError(
            f"points ({len(points)}) and wrenches ({len(wrenches)}) must have equal length"
        )
    ldot = params.mass * params.gravity.copy()
    kdot = np.zeros(3)
    for p, w in zip(points, wrenches):
        p = _vec3(p)
        ldot = ldot + w.f
        kdot = kdot + w.tau + np.cross(p - state.r, w.f)
    return np.concatenate([ldot, kdot])


def wrench_map(poles, r) -> np.ndarray:
    """6 x 6c map from stacked contact wrenches to their momentum-rate contribution.

    Multiplying the stacked (f_1, tau_1, f_2, tau_2, ...) yields
    (sum f_i, sum tau_i + sum (pole_i - r) x f_i); gravity is not included.
    """
    if len(poles) < 1:
        raise ValueError("wrench_map requires at least one contact")
    r = _vec3(r)
    blocks = []
    for p in poles:
        p = _vec3(p)
        top = np.hstack([np.eye(3), np.zeros((3, 3))])
        bottom = np.hstack([skew(p - r), np.eye(3)])
        blocks.append(np.vstack([top, bottom]))
    return np.hstack(blocks)


def _rate9(state: CentroidalState, points, wrenches, params) -> np.ndarray:
    h = momentum_rate(state, points, wrenches, params)
    return np.concatenate([state.l / params.mass, h])


def integrate_state(x0, wrench_fn, params, t_end, dt):
    """Integrate the momentum dynamics with fixed-step RK4.

    ``wrench_fn(t)`` returns ``(points, wrenches)`` active at time t. Returns
    ``(times, states)`` with states sampled at k*dt (final partial step
    included so the trajectory ends exactly at t_end).
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t_end < 0:
        raise ValueError(f"t_end must be non-negative, got {t_end}")

    def deriv(t, y):
        points, wrenches = wrench_fn(t)
        for w in wrenches:
            if not (np.all(np.isfinite(w.f)) and np.all(np.isfinite(w.tau))):
                raise IntegrationError(f"non-finite wrench sample at t={t:.6g}", t=t)
        return _rate9(CentroidalState.from_vector(y), points, wrenches, params)

    n_full = int(np.floor(t_end / dt + 1e-12))
    steps = [dt] * n_full
    rem = t_end - n_full * dt
    if rem > 1e-12 * max(1.0, t_end):
        steps.append(rem)

    t = 0.0
    y = x0.as_vector()
    times = [0.0]
    states = [x0]
    for h in steps:
        k1 = deriv(t, y)
        k2 = deriv(t + h / 2, y + h / 2 * k1)
        k3 = deriv(t + h / 2, y + h / 2 * k2)
        k4 = deriv(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        times.append(t)
        states.append(CentroidalState.from_vector(y))
    return np.array(times), states
