"""Clamped B-spline bases on [0, 1].

Evaluation uses the Cox-de Boor triangular recursion, restricted to the
``order`` basis functions that are nonzero on each knot span. Derivatives are
obtained by differencing lower-order bases over the same knot vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import DomainError, ParameterError

__all__ = [
    "BasisSpec",
    "make_spec",
    "eval_basis",
    "penalty_matrix",
    "centering_weights",
    "centering_nullspace",
]


@dataclass(frozen=True)
class BasisSpec:
    """Order-``order`` B-spline system with clamped boundary knots at 0 and 1.

    Parameters
    ----------
    order : int
        Spline order m (polynomial degree m - 1).
    interior : tuple of float
        Interior knots, strictly inside (0, 1) and nondecreasing.
    """

    order: int
    interior: tuple[float, ...]

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 2:
            raise ParameterError(f"spline order must be an integer >= 2, got {self.order!r}")
        interior = tuple(float(v) for v in self.interior)
        if any(not 0.0 < v < 1.0 for v in interior):
            raise ParameterError("interior knots must lie strictly inside (0, 1)")
        if any(b < a for a, b in zip(interior, interior[1:])):
            raise ParameterError("interior knots must be nondecreasing")
        object.__setattr__(self, "interior", interior)

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    @property
    def n_basis(self) -> int:
        return self.n_interior + self.order

    @cached_property
    def knots(self) -> np.ndarray:
        m = self.order
        t = np.concatenate([np.zeros(m), np.asarray(self.interior, dtype=float), np.ones(m)])
        t.setflags(write=False)
        return t


def make_spec(order=4, n_interior=6, placement="uniform", data=None) -> BasisSpec:
    """Build a clamped knot layout.

    ``placement="uniform"`` puts the interior knots at j / (K + 1);
    ``placement="quantile"`` uses empirical quantiles of ``data`` and falls back
    to the uniform layout when tied quantiles would collapse knots.
    """
    if int(order) != order or order < 2:
        raise ParameterError(f"order must be an integer >= 2, got {order!r}")
    if int(n_interior) != n_interior or n_interior < 0:
        raise ParameterError(f"n_interior must be a nonnegative integer, got {n_interior!r}")
    order, n_interior = int(order), int(n_interior)
    uniform = tuple(np.arange(1, n_interior + 1) / (n_interior + 1))
    if placement == "uniform":
        return BasisSpec(order, uniform)
    if placement != "quantile":
        raise ParameterError(f"unknown knot placement {placement!r}")
    if data is None or np.size(data) == 0:
        raise ParameterError("quantile placement needs a nonempty data column")
    data = np.asarray(data, dtype=float).ravel()
    probs = np.arange(1, n_interior + 1) / (n_interior + 1)
    knots = np.unique(np.quantile(data, probs))
    if len(knots) < n_interior or knots.size and (knots[0] <= 0.0 or knots[-1] >= 1.0):
        return BasisSpec(order, uniform)
    return BasisSpec(order, tuple(knots))


def _span_index(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    # x == 1 belongs to the last nonempty span
    last = np.flatnonzero(t[:-1] < t[1:])[-1]
    return np.minimum(np.searchsorted(t, x, side="right") - 1, last)


def _basis_of_order(t: np.ndarray, order: int, x: np.ndarray) -> np.ndarray:
    n_funcs = len(t) - order
    span = _span_index(t, x)
    vals = np.zeros((len(x), order))
    vals[:, 0] = 1.0
    left = np.empty((len(x), order))
    right = np.empty((len(x), order))
    for j in range(1, order):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(len(x))
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = vals[:, r] / denom
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    out = np.zeros((len(x), n_funcs))
    cols = span[:, None] - (order - 1) + np.arange(order)
    np.put_along_axis(out, cols, vals, axis=1)
    return out


def _derivative_operator(t: np.ndarray, order: int) -> np.ndarray:
    """Map order-(order-1) basis values to derivatives of the order-``order`` basis."""
    n_hi = len(t) - order
    n_lo = n_hi + 1
    D = np.zeros((n_lo, n_hi))
    for k in range(n_hi):
        a = t[k + order - 1] - t[k]
        b = t[k + order] - t[k + 1]
        if a > 0:
            D[k, k] = (order - 1) / a
        if b > 0:
            D[k + 1, k] = -(order - 1) / b
    return D


def eval_basis(spec: BasisSpec, xs, deriv: int = 0) -> np.ndarray:
    """Evaluate the basis (or its ``deriv``-th derivative) at points in [0, 1].

    Returns an array of shape ``(len(xs), spec.n_basis)``.
    """
    x = np.atleast_1d(np.asarray(xs, dtype=float))
    if x.ndim != 1:
        raise ParameterError("xs must be one-dimensional")
    if not np.all((x >= 0.0) & (x <= 1.0)):
        raise DomainError("basis evaluation points must lie in [0, 1]; rescale features first")
    m = spec.order
    if deriv < 0 or deriv >= m:
        raise ParameterError(f"derivative order must be in [0, {m - 1}]")
    t = spec.knots
    B = _basis_of_order(t, m - deriv, x)
    for r in range(m - deriv + 1, m + 1):
        B = B @ _derivative_operator(t, r)
    return B


def penalty_matrix(spec: BasisSpec) -> np.ndarray:
    """Gram matrix of second derivatives, S[k, l] = int_0^1 N_k'' N_l'' dt.

    Integrated exactly span by span with Gauss-Legendre quadrature.
    """
    m = spec.order
    if m < 3:
        raise ParameterError("the curvature penalty needs spline order >= 3")
    n_nodes = math.ceil((2 * m - 5) / 2) + 1
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    breaks = np.unique(spec.knots)
    a, b = breaks[:-1, None], breaks[1:, None]
    pts = (0.5 * (b - a) * nodes + 0.5 * (a + b)).ravel()
    wts = (0.5 * (b - a) * weights).ravel()
    D2 = eval_basis(spec, pts, deriv=2)
    S = D2.T @ (wts[:, None] * D2)
    return 0.5 * (S + S.T)


def centering_weights(spec: BasisSpec) -> np.ndarray:
    """Integrals c_k = int_0^1 N_k(t) dt = (t_{k+m} - t_k) / m."""
    t, m = spec.knots, spec.order
    return (t[m:] - t[:-m]) / m


def centering_nullspace(spec: BasisSpec) -> np.ndarray:
    """Orthonormal basis Z of {theta : c . theta = 0}, shape (n_basis, n_basis - 1)."""
    c = centering_weights(spec)
    q, _ = np.linalg.qr(c[:, None], mode="complete")
    return q[:, 1:]
