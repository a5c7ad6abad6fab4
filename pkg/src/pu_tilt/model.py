"""Parameters, datasets and likelihood pieces of the additive tilting model.

The log density ratio between the positive and negative feature
distributions is ``alpha + sum_j u_j(x_j)``, each ``u_j`` a centered spline.
The negative-class density is profiled out by empirical likelihood, which
leaves :func:`profile_loglik` as a function of ``(pi, alpha, u)`` alone.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .exceptions import DataError, DomainError, NumericError, ParameterError
from .splines import BasisSpec, centering_weights, eval_basis

LOG_RATIO_CLIP = 40.0


@dataclass(frozen=True)
class Bounds:
    """Box of the sieve space: pi in [pi_min, 1 - pi_min], |alpha| <= alpha_max, |theta_jk| <= theta_max."""

    pi_min: float = 1e-3
    alpha_max: float = 20.0
    theta_max: float = 50.0

    def __post_init__(self):
        if not 0.0 < self.pi_min < 0.5:
            raise ParameterError("pi_min must lie in (0, 0.5)")
        if self.alpha_max <= 0 or self.theta_max <= 0:
            raise ParameterError("alpha_max and theta_max must be positive")

    def clip_pi(self, pi):
        return float(np.clip(pi, self.pi_min, 1.0 - self.pi_min))


@dataclass(frozen=True, eq=False)
class GaetParams:
    """A point of the spline sieve: mixture proportion, normalizer, coefficients.

    ``theta`` has one row per feature and one column per basis function.
    """

    pi: float
    alpha: float
    theta: np.ndarray
    spec: BasisSpec
    bounds: Bounds = field(default_factory=Bounds)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float, ndmin=2)
        if theta.shape[1] != self.spec.n_basis:
            raise ParameterError(
                f"theta has {theta.shape[1]} columns but the basis has {self.spec.n_basis} functions"
            )
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "pi", float(self.pi))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n_features(self) -> int:
        return self.theta.shape[0]

    def component(self, j: int, xs) -> np.ndarray:
        """Values of the j-th additive component at points in [0, 1]."""
        return eval_basis(self.spec, xs) @ self.theta[j]

    def eta(self, X) -> np.ndarray:
        X = _as_rows(X, self.n_features)
        out = np.zeros(X.shape[0])
        for j in range(self.n_features):
            out += eval_basis(self.spec, X[:, j]) @ self.theta[j]
        return out

    def log_ratio(self, X) -> np.ndarray:
        return self.alpha + self.eta(X)

    @property
    def central_log_ratio(self) -> float:
        """Average log ratio over the unit cube; the quantity bounded by alpha_max."""
        return self.alpha

    def centering_gaps(self) -> np.ndarray:
        return self.theta @ centering_weights(self.spec)


@dataclass(frozen=True, eq=False)
class LinearParams:
    """Classical exponential tilting, log ratio ``alpha + x . beta``."""

    pi: float
    alpha: float
    beta: np.ndarray
    bounds: Bounds = field(default_factory=Bounds)

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).ravel()
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "pi", float(self.pi))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n_features(self) -> int:
        return len(self.beta)

    @property
    def central_log_ratio(self) -> float:
        """Log ratio at the cube center; the quantity bounded by alpha_max."""
        return self.alpha + 0.5 * float(self.beta.sum())

    def eta(self, X) -> np.ndarray:
        return _as_rows(X, self.n_features) @ self.beta

    def log_ratio(self, X) -> np.ndarray:
        return self.alpha + self.eta(X)


def _as_rows(X, p) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != p:
        raise ParameterError(f"expected feature rows of length {p}, got shape {np.shape(X)}")
    return X


def check_bounds(params):
    """Clip pi and alpha into the sieve box, warning on any violation.

    Coefficient bounds are only reported; the M-step does not constrain them.
    """
    b = params.bounds
    changes = {}
    pi = b.clip_pi(params.pi)
    if pi != params.pi:
        warnings.warn(f"pi={params.pi:.6g} outside [{b.pi_min}, {1 - b.pi_min}], clipped", RuntimeWarning)
        changes["pi"] = pi
    a = params.central_log_ratio
    if abs(a) > b.alpha_max:
        warnings.warn(f"|alpha|={abs(a):.6g} exceeds {b.alpha_max}, clipped", RuntimeWarning)
        changes["alpha"] = params.alpha + float(np.clip(a, -b.alpha_max, b.alpha_max)) - a
    if isinstance(params, GaetParams) and np.abs(params.theta).max(initial=0.0) > b.theta_max:
        warnings.warn(f"spline coefficients exceed the bound {b.theta_max}", RuntimeWarning)
    return replace(params, **changes) if changes else params


@dataclass(frozen=True, eq=False)
class PuDataset:
    """Labeled positives plus an unlabeled mixture, features scaled to [0, 1].

    ``scaling`` holds the per-feature (min, max) used to map raw values onto
    the unit interval; ``true_labels`` is for evaluation only.
    """

    labeled: np.ndarray
    unlabeled: np.ndarray
    true_labels: np.ndarray | None = None
    scaling: np.ndarray | None = None
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        lab = np.array(self.labeled, dtype=float, ndmin=2)
        unl = np.array(self.unlabeled, dtype=float, ndmin=2)
        if lab.shape[0] < 1 or unl.shape[0] < 1:
            raise DataError("need at least one labeled and one unlabeled row")
        if lab.shape[1] != unl.shape[1]:
            raise DataError("labeled and unlabeled samples have different feature counts")
        for name, arr in (("labeled", lab), ("unlabeled", unl)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} features contain non-finite values")
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise DomainError(f"{name} features must be rescaled into [0, 1]")
            arr.setflags(write=False)
        object.__setattr__(self, "labeled", lab)
        object.__setattr__(self, "unlabeled", unl)
        if self.true_labels is not None:
            y = np.asarray(self.true_labels).astype(int).ravel()
            if len(y) != unl.shape[0] or not np.isin(y, (0, 1)).all():
                raise DataError("true_labels must be 0/1 with one entry per unlabeled row")
            y.setflags(write=False)
            object.__setattr__(self, "true_labels", y)
        if self.scaling is not None:
            sc = np.array(self.scaling, dtype=float).reshape(lab.shape[1], 2)
            sc.setflags(write=False)
            object.__setattr__(self, "scaling", sc)
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @classmethod
    def from_raw(cls, labeled, unlabeled, true_labels=None, feature_names=None):
        """Min-max scale raw features using both samples; constant columns are rejected."""
        lab = np.array(labeled, dtype=float, ndmin=2)
        unl = np.array(unlabeled, dtype=float, ndmin=2)
        both = np.vstack([lab, unl])
        lo, hi = both.min(axis=0), both.max(axis=0)
        const = np.flatnonzero(hi <= lo)
        if const.size:
            names = feature_names or [f"x{j}" for j in range(both.shape[1])]
            raise DataError(f"constant feature column(s): {', '.join(names[j] for j in const)}")
        if both.shape[1] < 2:
            warnings.warn("fewer than two features: the additive model is not identifiable", RuntimeWarning)
        scaling = np.column_stack([lo, hi])
        span = hi - lo
        return cls((lab - lo) / span, (unl - lo) / span, true_labels, scaling, feature_names)

    @property
    def n0(self) -> int:
        return self.labeled.shape[0]

    @property
    def n1(self) -> int:
        return self.unlabeled.shape[0]

    @property
    def n(self) -> int:
        return self.n0 + self.n1

    @property
    def n_features(self) -> int:
        return self.labeled.shape[1]

    @property
    def features(self) -> np.ndarray:
        """All rows, labeled first."""
        return np.vstack([self.labeled, self.unlabeled])

    def transform(self, raw) -> np.ndarray:
        """Map raw feature rows to [0, 1] with the stored scaling, clamping out-of-range values."""
        raw = _as_rows(raw, self.n_features)
        if self.scaling is None:
            return np.clip(raw, 0.0, 1.0)
        lo, hi = self.scaling[:, 0], self.scaling[:, 1]
        return np.clip((raw - lo) / (hi - lo), 0.0, 1.0)

    def subset(self, labeled_idx, unlabeled_idx) -> "PuDataset":
        y = None if self.true_labels is None else self.true_labels[unlabeled_idx]
        return PuDataset(self.labeled[labeled_idx], self.unlabeled[unlabeled_idx], y,
                         self.scaling, self.feature_names)


def eta(params, x):
    """Additive predictor sum_j u_j(x_j) for one row or a matrix of rows."""
    out = params.eta(x)
    return float(out[0]) if np.ndim(x) == 1 else out


def density_ratio(params, x):
    """exp(alpha + eta(x)), with the exponent clipped to +-40."""
    lin = np.clip(params.log_ratio(x), -LOG_RATIO_CLIP, LOG_RATIO_CLIP)
    out = np.exp(lin)
    return float(out[0]) if np.ndim(x) == 1 else out


def posterior_from_log_ratio(pi, lin):
    """P(Y = 1 | x, unlabeled) given the log density ratio at x."""
    lin = np.asarray(lin, dtype=float)
    return expit(lin + np.log(pi) - np.log1p(-pi))


def posterior(params, x):
    out = posterior_from_log_ratio(params.pi, params.log_ratio(x))
    return float(out[0]) if np.ndim(x) == 1 else out


def lambda_tilde(pi, n0, n1):
    """Maximizing Lagrange multiplier (n0 + n1 pi) / n."""
    n = n0 + n1
    if n <= 0:
        raise ParameterError("need a positive sample size")
    return (n0 + n1 * pi) / n


def profile_loglik_terms(lin, n0, pi):
    """Per-observation profile log-likelihood terms, labeled rows first.

    ``lin`` is alpha + eta(x_i) for every observation. Each term is <= 0.
    """
    lin = np.asarray(lin, dtype=float)
    n1 = len(lin) - n0
    if not 0.0 < pi < 1.0:
        raise ParameterError(f"pi must lie in (0, 1), got {pi}")
    bad = np.flatnonzero(~np.isfinite(lin))
    if bad.size:
        raise NumericError(f"non-finite log density ratio at observation {bad[0]}")
    tau = np.log1p(-pi) - np.log(pi)
    s = lin - tau
    log_a = np.log(n1 * pi)
    log_denom = np.logaddexp(log_a, np.log(n0 + n1 * pi) + s)
    out = np.empty_like(s)
    out[:n0] = np.log(n0) + s[:n0] - log_denom[:n0]
    out[n0:] = log_a + np.logaddexp(0.0, s[n0:]) - log_denom[n0:]
    # each ratio is <= 1 analytically; remove rounding excess
    return np.minimum(out, 0.0)


def profile_loglik(params, dataset: PuDataset) -> float:
    """Empirical-likelihood profile log-likelihood of (pi, alpha, u)."""
    lin = params.log_ratio(dataset.features)
    return float(profile_loglik_terms(lin, dataset.n0, params.pi).sum())


def empirical_weights(params, dataset: PuDataset) -> np.ndarray:
    """Profiled masses p_i = 1 / (n [1 + lambda (omega_i - 1)])."""
    omega = density_ratio(params, dataset.features)
    lam = lambda_tilde(params.pi, dataset.n0, dataset.n1)
    return 1.0 / (dataset.n * (1.0 + lam * (omega - 1.0)))


def empirical_normalization_gap(params, dataset: PuDataset) -> float:
    """sum_i p_i omega(x_i) - 1; near zero at a well-converged fit."""
    omega = density_ratio(params, dataset.features)
    return float(np.sum(empirical_weights(params, dataset) * omega) - 1.0)
