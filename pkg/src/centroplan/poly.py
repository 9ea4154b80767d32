"""Monomial-basis polynomials over a phase-local normalized time s in [0, 1].

Provides exact polynomial algebra (add, multiply, antiderivative, cross
product of vector polynomials) plus the analytic construction of the
state trajectories l(t), r(t), kappa(t) from polynomial contact controls.
Keeping the basis phase-local bounds the magnitude of s^k and avoids the
conditioning problems of a single global-time basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets
from .errors import ScheduleError

__all__ = ["Poly", "PolyVec3", "PiecewisePoly", "build_state_polys", "build_state_segments"]


class Poly:
    """Polynomial sum_k c_k s^k with ascending coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("Poly needs at least one coefficient")
        self.coeffs = c

    def __call__(self, s):
        # Horner evaluation; supports scalar or array s.
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for c in self.coeffs[::-1]:
            out = out * s + c
        return out if out.ndim else float(out)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def trimmed(self):
        """Canonical form with trailing zeros removed (keeps at least one)."""
        nz = np.nonzero(self.coeffs)[0]
        end = nz[-1] + 1 if len(nz) else 1
        return Poly(self.coeffs[:end])

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return np.array_equal(self.trimmed().coeffs, other.trimmed().coeffs)

    def __add__(self, other):
        if isinstance(other, Poly):
            n = max(len(self.coeffs), len(other.coeffs))
            out = np.zeros(n)
            out[: len(self.coeffs)] += self.coeffs
            out[: len(other.coeffs)] += other.coeffs
            return Poly(out)
        out = self.coeffs.copy()
        out[0] += float(other)
        return Poly(out)

    def __neg__(self):
        return Poly(-self.coeffs)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Poly) else -float(other))

    def __mul__(self, other):
        if isinstance(other, Poly):
            return Poly(np.convolve(self.coeffs, other.coeffs))
        return Poly(self.coeffs * float(other))

    __rmul__ = __mul__

    def antiderivative(self):
        """Antiderivative with value 0 at s=0."""
        n = len(self.coeffs)
        out = np.zeros(n + 1)
        out[1:] = self.coeffs / np.arange(1, n + 1)
        return Poly(out)

    def derivative(self):
        if len(self.coeffs) == 1:
            return Poly([0.0])
        return Poly(self.coeffs[1:] * np.arange(1, len(self.coeffs)))

    def compose_affine(self, c0, c1):
        """p(c0 + c1*s) as a polynomial in s."""
        P = jets.affine_power_matrix(c0, c1, len(self.coeffs))
        return Poly(self.coeffs @ P)

    def __repr__(self):
        return f"Poly({self.coeffs.tolist()})"


@dataclass
class PolyVec3:
    """Three scalar polynomials; component degrees may differ."""

    x: Poly
    y: Poly
    z: Poly

    @staticmethod
    def constant(v):
        return PolyVec3(Poly([v[0]]), Poly([v[1]]), Poly([v[2]]))

    @staticmethod
    def from_coeffs(cx, cy, cz):
        return PolyVec3(Poly(cx), Poly(cy), Poly(cz))

    def __call__(self, s):
        return np.array([self.x(s), self.y(s), self.z(s)])

    def __add__(self, other):
        return PolyVec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other):
        return PolyVec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scale(self, k):
        return PolyVec3(self.x * k, self.y * k, self.z * k)

    def antiderivative(self):
        return PolyVec3(self.x.antiderivative(), self.y.antiderivative(), self.z.antiderivative())

    def derivative(self):
        return PolyVec3(self.x.derivative(), self.y.derivative(), self.z.derivative())

    def compose_affine(self, c0, c1):
        return PolyVec3(
            self.x.compose_affine(c0, c1),
            self.y.compose_affine(c0, c1),
            self.z.compose_affine(c0, c1),
        )

    def components(self):
        return (self.x, self.y, self.z)


def cross(a: PolyVec3, b: PolyVec3) -> PolyVec3:
    """Polynomial cross product a x b."""
    return PolyVec3(
        a.y * b.z - a.z * b.y,
        a.z * b.x - a.x * b.z,
        a.x * b.y - a.y * b.x,
    )


class PiecewisePoly:
    """Ordered non-overlapping segments [t_a, t_b) each holding a PolyVec3 in local s.

    Value is zero outside all segments; the final segment additionally
    includes its right endpoint so trajectories are defined at t = T.
    """

    def __init__(self, segments):
        segs = sorted(segments, key=lambda s: s[0])
        for (a, b, _), (a2, _, _) in zip(segs, segs[1:]):
            if b > a2 + 1e-12:
                raise ValueError("segments overlap")
        for a, b, _ in segs:
            if not b > a:
                raise ValueError("segment must have t_b > t_a")
        self.segments = [(float(a), float(b), p) for a, b, p in segs]

    def _locate(self, t):
        for i, (a, b, _) in enumerate(self.segments):
            if a <= t < b:
                return i
        if self.segments and abs(t - self.segments[-1][1]) <= 1e-12:
            return len(self.segments) - 1
        return None

    def __call__(self, t):
        t = float(t)
        i = self._locate(t)
        if i is None:
            return np.zeros(3)
        a, b, p = self.segments[i]
        return p((t - a) / (b - a))

    def derivative(self):
        """Derivative with respect to global time."""
        return PiecewisePoly(
            [(a, b, p.derivative().scale(1.0 / (b - a))) for a, b, p in self.segments]
        )

    @property
    def t_start(self):
        return self.segments[0][0]

    @property
    def t_end(self):
        return self.segments[-1][1]


def partition_times(phases, horizon):
    """Sorted unique boundaries of all phases clipped to [0, horizon]."""
    cuts = {0.0, float(horizon)}
    for ph in phases:
        for t in (ph.t_start, ph.t_end):
            t = float(t)
            if 0.0 < t < horizon:
                cuts.add(t)
    ts = sorted(cuts)
    # merge near-duplicates from float noise
    out = [ts[0]]
    for t in ts[1:]:
        if t - out[-1] > 1e-9:
            out.append(t)
    return out


def build_state_segments(phases, horizon, controls, x0, params, nx=0, x_tangents=None):
    """Analytic state trajectories as per-partition coefficient jets.

    ``controls`` maps phase index -> (f, tau, p), each a 3-list of jets in
    the phase-local s. With nx > 0 the jets carry tangents with respect to
    nx outer parameters and the returned state jets carry exact Jacobians.

    Returns a list of dicts with keys t0, t1, l, r, kappa, ldot, kdot;
    ldot/kdot are the exact global-time derivatives on the partition.
    """
    cuts = partition_times(phases, horizon)
    M = params.mass
    mg = params.mass * params.gravity

    l_b = jets.jvec_const(x0.l, nx)
    r_b = jets.jvec_const(x0.r, nx)
    k_b = jets.jvec_const(x0.kappa, nx)

    segments = []
    for a, b in zip(cuts, cuts[1:]):
        d = b - a
        mid = 0.5 * (a + b)
        active = [
            i
            for i, ph in enumerate(phases)
            if ph.t_start <= mid < ph.t_end
        ]
        local = []
        for i in active:
            if i not in controls:
                raise ScheduleError(f"no controls supplied for phase {i}")
            f, tau, p = controls[i]
            ph = phases[i]
            dur = ph.t_end - ph.t_start
            c0 = (a - ph.t_start) / dur
            c1 = d / dur
            n_max = max(q.shape[1] for vec in (f, tau, p) for q in vec)
            P = jets.affine_power_matrix(c0, c1, n_max)
            comp = lambda vec: [jets.jcompose_affine(q, P) for q in vec]
            local.append((comp(f), comp(tau), comp(p)))

        fsum = jets.jvec_const(mg, nx)
        for f, _, _ in local:
            fsum = jets.jvec_add(fsum, f)

        l = jets.jvec_add(l_b, jets.jvec_antider(fsum, d))
        r = jets.jvec_add(r_b, jets.jvec_antider(l, d / M))

        integrand = jets.jvec_const(np.zeros(3), nx)
        for f, tau, p in local:
            lever = jets.jvec_sub(p, r)
            integrand = jets.jvec_add(integrand, jets.jvec_add(tau, jets.jcross(lever, f)))
        kappa = jets.jvec_add(k_b, jets.jvec_antider(integrand, d))

        segments.append(
            {
                "t0": a,
                "t1": b,
                "l": l,
                "r": r,
                "kappa": kappa,
                "ldot": fsum,
                "kdot": integrand,
            }
        )

        l_b = [jets.jconst(0.0, nx) for _ in range(3)]
        r_b = [jets.jconst(0.0, nx) for _ in range(3)]
        k_b = [jets.jconst(0.0, nx) for _ in range(3)]
        for j in range(3):
            lv = jets.jeval(l[j], 1.0)
            rv = jets.jeval(r[j], 1.0)
            kv = jets.jeval(kappa[j], 1.0)
            l_b[j][:, 0] = lv
            r_b[j][:, 0] = rv
            k_b[j][:, 0] = kv
    return segments


def _segments_to_piecewise(segments, key):
    out = []
    for seg in segments:
        polys = [Poly(c[0]) for c in seg[key]]
        out.append((seg["t0"], seg["t1"], PolyVec3(*polys)))
    return PiecewisePoly(out)


def build_state_polys(phases, horizon, controls, x0, params):
    """Exact (l(t), r(t), kappa(t)) from per-phase polynomial controls.

    ``controls`` maps phase index -> (f, tau, p) PolyVec3 triples in the
    phase-local s (world frame; p is the application-point trajectory).
    States are continuous across partition boundaries by construction.
    """
    jet_controls = {}
    for i, (f, tau, p) in controls.items():
        jet_controls[i] = tuple(
            [jets.jet(c.coeffs) for c in vec.components()] for vec in (f, tau, p)
        )
    segs = build_state_segments(phases, horizon, jet_controls, x0, params)
    return (
        _segments_to_piecewise(segs, "l"),
        _segments_to_piecewise(segs, "r"),
        _segments_to_piecewise(segs, "kappa"),
    )
