"""Polynomial algebra and analytic state construction."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from centroplan.contacts import ContactPhase
from centroplan.model import CentroidalState, ContactWrench, ModelParams, integrate_state
from centroplan.poly import PiecewisePoly, Poly, PolyVec3, build_state_polys, cross

coeff_lists = st.lists(
    st.floats(-10, 10, allow_nan=False, allow_infinity=False), min_size=1, max_size=6
)


@given(coeff_lists, st.floats(0, 1))
def test_poly_eval_matches_numpy(coeffs, s):
    p = Poly(coeffs)
    assert np.isclose(p(s), np.polyval(coeffs[::-1], s), atol=1e-9)


@given(coeff_lists, coeff_lists, st.floats(0, 1))
def test_poly_product_rule(a, b, s):
    pa, pb = Poly(a), Poly(b)
    assert np.isclose((pa * pb)(s), pa(s) * pb(s), rtol=1e-9, atol=1e-9)


@given(coeff_lists)
def test_antiderivative_derivative_roundtrip(coeffs):
    p = Poly(coeffs)
    q = p.antiderivative().derivative()
    got = np.zeros(len(p.coeffs))
    got[: len(q.coeffs)] = q.coeffs[: len(p.coeffs)]
    assert np.allclose(got, p.coeffs, rtol=1e-12, atol=1e-12)


@settings(max_examples=30)
@given(coeff_lists, st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1))
def test_compose_affine(coeffs, c0, c1, s):
    p = Poly(coeffs)
    assert np.isclose(p.compose_affine(c0, c1)(s), p(c0 + c1 * s), rtol=1e-7, atol=1e-7)


def test_antiderivative_vanishes_at_zero():
    p = Poly([3.0, 2.0, 1.0]).antiderivative()
    assert p(0.0) == 0.0


def test_vector_cross_matches_numpy(rng):
    a = PolyVec3.from_coeffs(rng.normal(size=3), rng.normal(size=2), rng.normal(size=4))
    b = PolyVec3.from_coeffs(rng.normal(size=2), rng.normal(size=3), rng.normal(size=3))
    for s in np.linspace(0, 1, 7):
        assert np.allclose(cross(a, b)(s), np.cross(a(s), b(s)), atol=1e-9)


class TestPiecewise:
    def test_segment_lookup_and_boundaries(self):
        pp = PiecewisePoly(
            [
                (0.0, 1.0, PolyVec3.constant([1, 0, 0])),
                (1.0, 2.0, PolyVec3.constant([2, 0, 0])),
            ]
        )
        assert pp(0.5)[0] == 1
        assert pp(1.0)[0] == 2  # half-open convention
        assert pp(2.0)[0] == 2  # final right endpoint included
        assert np.allclose(pp(3.0), 0.0)

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            PiecewisePoly(
                [
                    (0.0, 1.5, PolyVec3.constant([1, 0, 0])),
                    (1.0, 2.0, PolyVec3.constant([2, 0, 0])),
                ]
            )

    def test_derivative_uses_global_time(self):
        # p(s) = s on [0, 2] means value t/2, slope 1/2 in global time
        pp = PiecewisePoly([(0.0, 2.0, PolyVec3.from_coeffs([0, 1], [0], [0]))])
        d = pp.derivative()
        assert np.isclose(d(1.3)[0], 0.5)


def _two_phase_setup():
    phases = (
        ContactPhase("a", 0.0, 1.0, [0.1, 0.0, 0.0]),
        ContactPhase("b", 0.5, 1.5, [-0.1, 0.0, 0.0]),
    )
    params = ModelParams(mass=3.0, gravity=[0, 0, -9.81])
    x0 = CentroidalState([0, 0, 0.9], [0.1, 0, 0], [0, 0.05, 0])
    return phases, params, x0


def _random_controls(phases, rng, n=4):
    out = {}
    for i, _ in enumerate(phases):
        out[i] = (
            PolyVec3.from_coeffs(*(rng.normal(size=n) * 5 for _ in range(3))),
            PolyVec3.from_coeffs(*(rng.normal(size=n) for _ in range(3))),
            PolyVec3.from_coeffs(*(rng.normal(size=n) * 0.05 for _ in range(3))),
        )
    return out


def test_state_polys_satisfy_dynamics(rng):
    """d(l)/dt == Mg + sum f, d(r)/dt == l/M, d(kappa)/dt == sum tau + (p-r) x f."""
    phases, params, x0 = _two_phase_setup()
    horizon = 1.5
    controls = _random_controls(phases, rng)
    l, r, kappa = build_state_polys(phases, horizon, controls, x0, params)
    ldot, rdot, kdot = l.derivative(), r.derivative(), kappa.derivative()

    for t in rng.uniform(0, horizon, size=60):
        active = [i for i, ph in enumerate(phases) if ph.t_start <= t < ph.t_end]
        fsum = params.mass * params.gravity.copy()
        ksum = np.zeros(3)
        for i in active:
            ph = phases[i]
            s = (t - ph.t_start) / ph.duration
            f, tau, p = (c(s) for c in controls[i])
            fsum = fsum + f
            ksum = ksum + tau + np.cross(p - r(t), f)
        assert np.allclose(ldot(t), fsum, atol=1e-9)
        assert np.allclose(rdot(t), l(t) / params.mass, atol=1e-9)
        assert np.allclose(kdot(t), ksum, atol=1e-9)


def test_state_polys_continuous_and_match_initial(rng):
    phases, params, x0 = _two_phase_setup()
    controls = _random_controls(phases, rng)
    l, r, kappa = build_state_polys(phases, 1.5, controls, x0, params)
    assert np.allclose(l(0.0), x0.l)
    assert np.allclose(r(0.0), x0.r)
    assert np.allclose(kappa(0.0), x0.kappa)
    for tb in (0.5, 1.0):
        eps = 1e-10
        for traj in (l, r, kappa):
            assert np.allclose(traj(tb - eps), traj(tb + eps), atol=1e-6)


def test_state_polys_match_rk4(rng):
    # integrate partition by partition so RK4 never steps across a control
    # discontinuity (the active contact set changes at phase boundaries)
    phases, params, x0 = _two_phase_setup()
    controls = _random_controls(phases, rng)
    l, r, kappa = build_state_polys(phases, 1.5, controls, x0, params)

    cuts = [0.0, 0.5, 1.0, 1.5]
    state = x0
    worst = 0.0
    for a, b in zip(cuts, cuts[1:]):
        mid = 0.5 * (a + b)
        active = [i for i, ph in enumerate(phases) if ph.t_start <= mid < ph.t_end]

        def wrench_fn(t_local, _a=a, _active=active):
            pts, ws = [], []
            for i in _active:
                ph = phases[i]
                s = np.clip((_a + t_local - ph.t_start) / ph.duration, 0.0, 1.0)
                f, tau, p = (c(s) for c in controls[i])
                pts.append(p)
                ws.append(ContactWrench(f, tau))
            return pts, ws

        times, states = integrate_state(state, wrench_fn, params, t_end=b - a, dt=1e-3)
        for t_local, st in zip(times, states):
            t = a + t_local
            analytic = np.r_[r(t), l(t), kappa(t)]
            num = st.as_vector()
            worst = max(worst, np.max(np.abs(num - analytic) / np.maximum(np.abs(analytic), 1.0)))
        state = states[-1]
    assert worst < 1e-6
