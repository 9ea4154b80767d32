"""Estimator-style front ends over the planner and tracker.

These wrap the functional modules in the familiar fit/predict shape so
the toolkit composes with generic hyperparameter tooling: constructor
arguments are plain hyperparameters (None means "use the scenario's
value"), fit() consumes a Scenario or Plan, and fitted attributes carry
the trailing underscore.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .contacts import Scenario
from .lqr import LqrWeights, momentum_rate_ref, sliding_recompute
from .optimizer import Plan, SolveOptions
from .seeding import iterated_plan

__all__ = ["MomentumPlanner", "LqrTracker"]


class MomentumPlanner(BaseEstimator):
    """Plans centroidal momentum trajectories for a contact scenario.

    Parameters override the scenario's optimizer settings when not None.
    After fit: ``plan_`` (the Plan), ``references_`` (final seeded
    references), ``report_`` (SeedReport) and ``x_`` (decision vector).
    """

    def __init__(self, tol=None, feas_tol=None, max_outer=None, max_inner=None,
                 seed_passes=None):
        self.tol = tol
        self.feas_tol = feas_tol
        self.max_outer = max_outer
        self.max_inner = max_inner
        self.seed_passes = seed_passes

    def _options(self, scenario):
        opts = SolveOptions.from_scenario(scenario)
        for name in ("tol", "feas_tol", "max_outer", "max_inner"):
            value = getattr(self, name)
            if value is not None:
                setattr(opts, name, value)
        return opts

    def fit(self, scenario: Scenario, x0=None):
        if not isinstance(scenario, Scenario):
            raise TypeError(f"fit expects a Scenario, got {type(scenario).__name__}")
        passes = self.seed_passes
        plan, report = iterated_plan(
            scenario, opts=self._options(scenario), x0=x0, max_passes=passes
        )
        self.scenario_ = scenario
        self.plan_ = plan
        self.references_ = report.references
        self.report_ = report
        self.x_ = report.x
        return self

    def predict(self, t):
        """9-state (r, l, kappa) rows at the query times."""
        check_is_fitted(self, "plan_")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([self.plan_.state(ti).as_vector() for ti in t])


class LqrTracker(BaseEstimator):
    """Synthesizes the sliding-window LQR gain schedule around a plan."""

    def __init__(self, q_state=None, r_force=None, r_torque=None):
        self.q_state = q_state
        self.r_force = r_force
        self.r_torque = r_torque

    def fit(self, plan: Plan, y=None):
        if not isinstance(plan, Plan):
            raise TypeError(f"fit expects a Plan, got {type(plan).__name__}")
        settings = plan.scenario.lqr
        weights = LqrWeights(
            q_state=settings.q_state if self.q_state is None else self.q_state,
            r_force=settings.r_force if self.r_force is None else self.r_force,
            r_torque=settings.r_torque if self.r_torque is None else self.r_torque,
        )
        self.plan_ = plan
        self.weights_ = weights
        self.provider_ = sliding_recompute(plan, settings, weights)
        return self

    def policy(self, t, state):
        """Stacked pole wrenches for the measured state at time t."""
        check_is_fitted(self, "provider_")
        x = state.as_vector() if hasattr(state, "as_vector") else np.asarray(state, dtype=float)
        return self.provider_(t).feedback(x)

    def momentum_rate_ref(self, t, state):
        check_is_fitted(self, "provider_")
        return momentum_rate_ref(self.provider_.window(t), state, t)

    def predict(self, t):
        """Feedforward pole wrenches (zero state error) at the query times."""
        check_is_fitted(self, "provider_")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return [self.provider_(ti).lam_star.copy() for ti in t]
