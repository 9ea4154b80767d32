"""Polynomial coefficient "jets": values with forward-mode tangents.

A jet is a 2-D array of shape (1 + nx, n): row 0 holds the monomial
coefficients c_0..c_{n-1} of a polynomial, rows 1..nx hold the partial
derivatives of each coefficient with respect to nx outer parameters.
With nx == 0 a jet is just a polynomial. All operations are exact
(polynomial algebra, no truncation), so propagated tangents are exact
Jacobians of the resulting coefficients.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "jet",
    "jconst",
    "jadd",
    "jsub",
    "jscale",
    "jmul",
    "jantider",
    "jcompose_affine",
    "affine_power_matrix",
    "jeval",
    "jcross",
    "jvec_const",
    "jvec_add",
    "jvec_sub",
    "jvec_scale",
    "jvec_antider",
    "jvec_eval",
]


def jet(coeffs, nx=0):
    """Jet with the given value coefficients and zero tangents."""
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    out = np.zeros((1 + nx, len(c)))
    out[0] = c
    return out


def jconst(value, nx=0, tangent=None):
    """Degree-0 jet; ``tangent`` is the (nx,) gradient of the constant."""
    out = np.zeros((1 + nx, 1))
    out[0, 0] = value
    if tangent is not None:
        out[1:, 0] = tangent
    return out


def _pad(a, n):
    if a.shape[1] == n:
        return a
    out = np.zeros((a.shape[0], n))
    out[:, : a.shape[1]] = a
    return out


def jadd(a, b):
    n = max(a.shape[1], b.shape[1])
    return _pad(a, n) + _pad(b, n)


def jsub(a, b):
    n = max(a.shape[1], b.shape[1])
    return _pad(a, n) - _pad(b, n)


def jscale(a, k):
    return a * float(k)


def _conv_matrix(p, m):
    """T with row_i shifted copy of p, so (row @ T) == convolve(row, p)."""
    n = len(p)
    T = np.zeros((m, m + n - 1))
    for i in range(m):
        T[i, i : i + n] = p
    return T


def jmul(a, b):
    """Product of two jets (polynomial convolution with product-rule tangents)."""
    T = _conv_matrix(b[0], a.shape[1])
    out = a @ T
    if a.shape[0] > 1:
        out[1:] += b[1:] @ _conv_matrix(a[0], b.shape[1])
    return out


def jantider(a, scale=1.0):
    """Antiderivative vanishing at 0, optionally scaled (for du = scale * ds)."""
    rows, n = a.shape
    out = np.zeros((rows, n + 1))
    out[:, 1:] = a * (scale / np.arange(1, n + 1))
    return out


def affine_power_matrix(c0, c1, n):
    """P (n x n) with row k the coefficients of (c0 + c1*s)^k; compose(a) = a @ P."""
    P = np.zeros((n, n))
    row = np.array([1.0])
    P[0, :1] = row
    for k in range(1, n):
        row = np.convolve(row, [c0, c1])
        P[k, : len(row)] = row
    return P


def jcompose_affine(a, P=None, c0=None, c1=None):
    """Jet of p(c0 + c1*s); pass a precomputed ``affine_power_matrix`` as P."""
    if P is None:
        P = affine_power_matrix(c0, c1, a.shape[1])
    return a @ P[: a.shape[1], : a.shape[1]]


def jeval(a, s):
    """Value and tangents at s: returns shape (1 + nx,)."""
    powers = np.power(float(s), np.arange(a.shape[1]))
    return a @ powers


# -- 3-vectors of jets ---------------------------------------------------

def jvec_const(v, nx=0, tangents=None):
    return [
        jconst(v[i], nx, None if tangents is None else tangents[i])
        for i in range(3)
    ]


def jvec_add(a, b):
    return [jadd(a[i], b[i]) for i in range(3)]


def jvec_sub(a, b):
    return [jsub(a[i], b[i]) for i in range(3)]


def jvec_scale(a, k):
    return [jscale(a[i], k) for i in range(3)]


def jvec_antider(a, scale=1.0):
    return [jantider(a[i], scale) for i in range(3)]


def jcross(a, b):
    """Componentwise polynomial cross product of two jet 3-vectors."""
    return [
        jsub(jmul(a[1], b[2]), jmul(a[2], b[1])),
        jsub(jmul(a[2], b[0]), jmul(a[0], b[2])),
        jsub(jmul(a[0], b[1]), jmul(a[1], b[0])),
    ]


def jvec_eval(a, s):
    return np.stack([jeval(c, s) for c in a], axis=-1)  # (1+nx, 3)
