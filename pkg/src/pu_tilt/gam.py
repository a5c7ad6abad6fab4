"""Penalized additive logistic regression with fractional responses.

Maximizes

    sum_i y_i f_i - sum_i log(1 + exp(f_i)) - kappa * sum_j theta_j' S theta_j

with ``f_i = a + sum_j nu_j(x_ij)`` by Newton's method (IRLS) with step
halving. Responses may be anywhere in [0, 1]. Each spline component is kept
centered (``c . theta_j = 0``) by solving in an orthonormal basis of the
centering null space, which is an exact reparameterization.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg.blas import dsyrk
from scipy.special import expit

from .exceptions import NonConvergenceError, NumericError, ParameterError
from .splines import BasisSpec, centering_nullspace, eval_basis, penalty_matrix

WEIGHT_FLOOR = 1e-6


class AdditiveDesign:
    """Centered spline design ``[1, B_1 Z, ..., B_p Z]`` and its penalty.

    Z spans the centered coefficients and diagonalizes the curvature
    penalty, so ``P`` is diagonal.
    """

    def __init__(self, X, spec: BasisSpec):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ParameterError("design features must be a 2-D array")
        self.spec = spec
        self.n, self.p = X.shape
        Z = centering_nullspace(spec)
        q = Z.shape[1]
        if spec.order >= 3:
            # rotate to the penalty eigenbasis so the null direction is penalized by exactly 0
            lam, U = np.linalg.eigh(Z.T @ penalty_matrix(spec) @ Z)
            lam[lam < 1e-10 * lam.max()] = 0.0
            Z = Z @ U
        else:
            lam = np.zeros(q)
        self.Z = Z
        self.block = q
        cols = [np.ones((self.n, 1))]
        cols += [eval_basis(spec, X[:, j]) @ Z for j in range(self.p)]
        self.F = np.asfortranarray(np.hstack(cols))
        self.P = np.diag(np.concatenate([[0.0], np.tile(lam, self.p)]))

    @property
    def n_coef(self) -> int:
        return self.F.shape[1]

    def theta(self, coef) -> np.ndarray:
        """Full centered spline coefficients, one row per feature."""
        gam = np.asarray(coef[1:]).reshape(self.p, self.block)
        return gam @ self.Z.T

    def coef_from(self, intercept, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).reshape(self.p, -1)
        # Z has orthonormal columns, so Z' theta_j recovers the centered part
        return np.concatenate([[intercept], (theta @ self.Z).ravel()])


class LinearDesign:
    """Intercept plus features centered at 0.5; no penalty.

    The solver intercept is the log ratio at the cube center; ``raw_intercept``
    converts it back to the parameterization ``a + x . beta``.
    """

    CENTER = 0.5

    def __init__(self, X):
        X = np.asarray(X, dtype=float)
        self.n, self.p = X.shape
        self.F = np.asfortranarray(np.hstack([np.ones((self.n, 1)), X - self.CENTER]))
        self.P = np.zeros((self.p + 1, self.p + 1))

    def raw_intercept(self, coef) -> float:
        return float(coef[0] - self.CENTER * np.sum(coef[1:]))

    @property
    def n_coef(self) -> int:
        return self.F.shape[1]


@dataclass(frozen=True, eq=False)
class AdditiveFit:
    """Result of one penalized M-step.

    ``theta`` rows are centered; ``coef`` is the solver's reduced vector
    (intercept first) and can be fed back as a warm start.
    """

    intercept: float
    theta: np.ndarray
    kappa: float
    edf: float
    objective: float
    converged: bool
    iterations: int
    coef: np.ndarray
    weights: np.ndarray
    gradient_norm: float


def _softplus_sum(f):
    # sum of log(1 + exp(f)), stable for large |f|
    return float(np.maximum(f, 0.0).sum() + np.log1p(np.exp(-np.abs(f))).sum())


def _loglik(F, y, coef):
    f = F @ coef
    return float(y @ f) - _softplus_sum(f)


def penalized_objective(design, y, coef, kappa) -> float:
    """Fractional-response logistic log-likelihood minus the curvature penalty."""
    return _loglik(design.F, y, coef) - kappa * float(coef @ design.P @ coef)


def _gram(F, w, full=True):
    """F' diag(w) F via a symmetric rank-k update (w >= 0).

    With ``full=False`` only the upper triangle is filled, which is all the
    Cholesky solver reads.
    """
    G = dsyrk(1.0, F * np.sqrt(w)[:, None], trans=1)
    return np.triu(G) + np.triu(G, 1).T if full else G


def _solve_spd(H, g):
    try:
        return sla.cho_solve(sla.cho_factor(H, check_finite=False), g, check_finite=False)
    except np.linalg.LinAlgError:
        H = np.triu(H) + np.triu(H, 1).T
        ridge = 1e-10 * max(np.trace(H) / len(H), 1.0)
        warnings.warn("singular Newton system, adding a ridge", RuntimeWarning)
        return np.linalg.lstsq(H + ridge * np.eye(len(H)), g, rcond=None)[0]


def irls(design, y, kappa=0.0, coef0=None, max_iter=100, tol_grad=1e-6, tol_rel=1e-9,
         max_halvings=40, trace=None):
    """Newton ascent on the concave penalized objective.

    Returns ``(coef, objective, iterations, converged, weights, grad_norm)``.
    ``trace``, if a list, receives the objective of every accepted iterate.
    """
    F, P = design.F, design.P
    n = F.shape[0]
    y = np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise ParameterError(f"need {n} working responses, got shape {y.shape}")
    if np.any((y < 0.0) | (y > 1.0)):
        raise ParameterError("working responses must lie in [0, 1]")
    if not np.isfinite(kappa) or kappa < 0:
        raise ParameterError("kappa must be finite and nonnegative")
    P2 = 2.0 * kappa * P
    coef = np.zeros(F.shape[1]) if coef0 is None else np.array(coef0, dtype=float)
    if coef0 is None:
        ybar = np.clip(y.mean(), 1e-6, 1 - 1e-6)
        coef[0] = np.log(ybar) - np.log1p(-ybar)

    f = F @ coef
    obj = float(y @ f) - _softplus_sum(f) - 0.5 * float(coef @ P2 @ coef)
    if not np.isfinite(obj):
        raise NumericError("non-finite objective at the starting coefficients")
    if trace is not None:
        trace.append(obj)
    converged = False
    for it in range(1, max_iter + 1):
        mu = expit(f)
        w = np.maximum(mu * (1.0 - mu), WEIGHT_FLOOR)
        grad = F.T @ (y - mu) - P2 @ coef
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol_grad * n:
            converged = True
            break
        H = _gram(F, w, full=False) + P2
        step = _solve_spd(H, grad)
        t = 1.0
        for _ in range(max_halvings):
            cand = coef + t * step
            f_new = F @ cand
            obj_new = float(y @ f_new) - _softplus_sum(f_new) - 0.5 * float(cand @ P2 @ cand)
            if obj_new >= obj:
                break
            t *= 0.5
        else:
            # no ascent left in the Newton direction: numerically at the optimum
            if gnorm <= 1e-3 * n:
                converged = True
                break
            raise NonConvergenceError("step halving exhausted in IRLS", last=coef)
        rel = (obj_new - obj) / max(abs(obj), 1.0)
        coef, f, obj = cand, f_new, obj_new
        if trace is not None:
            trace.append(obj)
        if rel < tol_rel:
            converged = True
            mu = expit(f)
            w = np.maximum(mu * (1.0 - mu), WEIGHT_FLOOR)
            gnorm = float(np.linalg.norm(F.T @ (y - mu) - P2 @ coef))
            break
    else:
        it = max_iter
    if not converged:
        raise NonConvergenceError(f"IRLS did not converge in {max_iter} iterations", last=coef)
    return coef, obj, it, converged, w, gnorm


def _edf(design, weights, kappa):
    G = _gram(design.F, weights)
    H = G + 2.0 * kappa * design.P
    try:
        return float(np.trace(sla.cho_solve(sla.cho_factor(H), G)))
    except np.linalg.LinAlgError:
        warnings.warn("singular system in edf, adding a ridge", RuntimeWarning)
        ridge = 1e-10 * max(np.trace(H) / len(H), 1.0)
        return float(np.trace(np.linalg.solve(H + ridge * np.eye(len(H)), G)))


def fit_additive_logistic(X, y, spec: BasisSpec, kappa=0.0, init: AdditiveFit | None = None,
                          design: AdditiveDesign | None = None, **irls_kw) -> AdditiveFit:
    """Penalized IRLS for the additive logistic M-step.

    Parameters
    ----------
    X : array (n, p)
        Features in [0, 1]. Ignored when ``design`` is given.
    y : array (n,)
        Working responses in [0, 1].
    spec : BasisSpec
    kappa : float
        Curvature penalty weight shared by all components.
    init : AdditiveFit, optional
        Warm start.
    """
    if design is None:
        design = AdditiveDesign(X, spec)
    coef0 = None if init is None else init.coef
    coef, obj, it, conv, w, gnorm = irls(design, y, kappa, coef0, **irls_kw)
    return AdditiveFit(
        intercept=float(coef[0]),
        theta=design.theta(coef),
        kappa=float(kappa),
        edf=_edf(design, w, kappa),
        objective=obj,
        converged=conv,
        iterations=it,
        coef=coef,
        weights=w,
        gradient_norm=gnorm,
    )


def fit_linear_logistic(features, y, design: LinearDesign | None = None, coef0=None, **irls_kw):
    """Unpenalized logistic fit; returns ``(intercept, beta)`` for ``intercept + x . beta``.

    ``coef0`` is a warm start in the solver's centered parameterization.
    """
    if design is None:
        design = LinearDesign(features)
    coef = irls(design, y, 0.0, coef0, **irls_kw)[0]
    return design.raw_intercept(coef), coef[1:].copy()


def effective_df(fit: AdditiveFit, design, y=None) -> float:
    """Trace of the influence operator F (F'WF + 2 kappa P)^-1 F'W at the fit.

    ``y`` is accepted for API symmetry; the weights stored on the fit are used.
    """
    if isinstance(design, np.ndarray):
        raise ParameterError("pass an AdditiveDesign, not a raw matrix")
    return _edf(design, fit.weights, fit.kappa)
