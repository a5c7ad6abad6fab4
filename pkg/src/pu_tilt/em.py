"""EM-type estimation of (pi, alpha, u_1..u_p) from positive-unlabeled data.

Each iteration computes posterior labels for the unlabeled rows (E-step),
updates pi as their mean, refits the additive logistic M-step on the working
responses, and shifts the fitted intercept back by
``c = log(n0/n1 + pi) - log(1 - pi)`` to obtain alpha.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from ._parallel import parallel_map
from .exceptions import EstimationError, NonConvergenceError, NumericError, ParameterError
from .gam import AdditiveDesign, LinearDesign, irls, _edf
from .model import (
    Bounds,
    GaetParams,
    LinearParams,
    PuDataset,
    check_bounds,
    posterior_from_log_ratio,
    profile_loglik_terms,
)
from .splines import BasisSpec, centering_weights, make_spec

log = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-8
DEFAULT_KAPPA_GRID = tuple(float(k) for k in np.logspace(-4, 2, 8))


@dataclass(frozen=True)
class EmConfig:
    """Settings for multi-start EM with AIC selection of the penalty weight."""

    n_starts: int = 20
    max_em_iter: int = 500
    tol_loglik: float = 1e-4
    tol_pi_rel: float = 1e-4
    kappa_grid: tuple[float, ...] = DEFAULT_KAPPA_GRID
    spec: BasisSpec = field(default_factory=lambda: make_spec(4, 6))
    seed: int = 0
    model: str = "gaet"
    bounds: Bounds = field(default_factory=Bounds)
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kappa_grid", tuple(float(k) for k in self.kappa_grid))
        if self.n_starts < 1:
            raise ParameterError("n_starts must be at least 1")
        if self.max_em_iter < 1:
            raise ParameterError("max_em_iter must be at least 1")
        if self.tol_loglik <= 0 or self.tol_pi_rel <= 0:
            raise ParameterError("tolerances must be positive")
        if not self.kappa_grid or any(not (k >= 0 and math.isfinite(k)) for k in self.kappa_grid):
            raise ParameterError("kappa_grid must be a nonempty list of finite values >= 0")
        if self.model not in ("gaet", "linear"):
            raise ParameterError(f"model must be 'gaet' or 'linear', got {self.model!r}")


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of an EM run (or the AIC winner of a grid of runs).

    ``loglik_trace`` holds the profile log-likelihood after every iteration
    (index 0 is the starting point); ``objective_trace`` subtracts the
    curvature penalty, and is the quantity EM never decreases. ``pi_trace``
    records pi at the same points.
    """

    params: GaetParams | LinearParams
    loglik_trace: np.ndarray
    objective_trace: np.ndarray
    posteriors: np.ndarray
    kappa_selected: float
    edf: float
    aic: float
    start_index: int
    iterations: int
    converged: bool
    grid: tuple = ()
    failures: int = 0
    pi_trace: np.ndarray | None = None

    @property
    def loglik(self) -> float:
        return float(self.loglik_trace[-1])

    @property
    def pi(self) -> float:
        return self.params.pi

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.objective_trace) >= -MONOTONE_SLACK))


@dataclass(frozen=True)
class Classification:
    labels: np.ndarray


def shift_constant(pi, n0, n1):
    """Offset between the M-step logistic intercept and alpha."""
    return math.log(n0 / n1 + pi) - math.log1p(-pi)


def e_step(params, dataset: PuDataset) -> np.ndarray:
    """Working responses: 1 for labeled rows, posterior probabilities for unlabeled rows."""
    post = posterior_from_log_ratio(params.pi, params.log_ratio(dataset.unlabeled))
    return np.concatenate([np.ones(dataset.n0), post])


def update_pi(y, n0, n1, bounds: Bounds | None = None) -> float:
    """Mean unlabeled working response, clipped into the admissible range."""
    if n1 < 1:
        raise ParameterError("need at least one unlabeled row")
    y = np.asarray(y, dtype=float)
    unl = y[n0:] if len(y) == n0 + n1 else y
    return (bounds or Bounds()).clip_pi(float(np.mean(unl)))


class _Problem:
    """Dataset plus its (cached) M-step design."""

    def __init__(self, dataset: PuDataset, config: EmConfig):
        self.dataset = dataset
        self.config = config
        self.n0, self.n1 = dataset.n0, dataset.n1
        X = dataset.features
        if config.model == "gaet":
            self.design = AdditiveDesign(X, config.spec)
        else:
            self.design = LinearDesign(X)
        self.G = self.design.F[:, 1:]

    def to_solver(self, params):
        """(intercept, coefficients) in the solver parameterization."""
        if isinstance(params, GaetParams):
            return params.alpha, self.design.coef_from(0.0, params.theta)[1:]
        beta = np.asarray(params.beta, dtype=float).copy()
        return params.alpha + LinearDesign.CENTER * beta.sum(), beta

    def to_params(self, pi, a, gam):
        b = self.config.bounds
        if self.config.model == "gaet":
            return GaetParams(pi, a, self.design.theta(np.concatenate([[0.0], gam])),
                              self.config.spec, b)
        return LinearParams(pi, self.design.raw_intercept(np.concatenate([[a], gam])), gam, b)

    def random_init(self, rng):
        pi = rng.uniform(0.05, 0.95)
        if self.config.model == "gaet":
            theta = rng.normal(0.0, 0.25, size=(self.dataset.n_features, self.config.spec.n_basis))
            theta -= (theta @ centering_weights(self.config.spec))[:, None]
            return GaetParams(pi, 0.0, theta, self.config.spec, self.config.bounds)
        beta = rng.normal(0.0, 0.25, size=self.dataset.n_features)
        return LinearParams(pi, 0.0, beta, self.config.bounds)


def _run_em(problem: _Problem, kappa, init, start_index=0) -> FitResult:
    cfg = problem.config
    n0, n1 = problem.n0, problem.n1
    kappa = 0.0 if cfg.model == "linear" else float(kappa)
    P = problem.design.P
    init = check_bounds(init)
    # alpha is the solver intercept: for the linear model, the log ratio at the cube center
    pi = init.pi
    alpha, gam = problem.to_solver(init)
    pen_mat = P[1:, 1:]

    def evaluate(pi_, alpha_, gam_):
        lin_ = alpha_ + problem.G @ gam_
        ll_ = float(profile_loglik_terms(lin_, n0, pi_).sum())
        return lin_, ll_, ll_ - kappa * float(gam_ @ pen_mat @ gam_)

    lin, ll, obj = evaluate(pi, alpha, gam)
    lls, objs, pis = [ll], [obj], [pi]
    weights = None
    converged = False
    it = 0
    for it in range(1, cfg.max_em_iter + 1):
        post = posterior_from_log_ratio(pi, lin[n0:])
        y = np.concatenate([np.ones(n0), post])
        pi_new = cfg.bounds.clip_pi(float(post.mean()))
        c = shift_constant(pi_new, n0, n1)
        coef0 = np.concatenate([[alpha + c], gam])
        coef, _, _, _, weights, _ = irls(problem.design, y, kappa, coef0)
        alpha_new, gam = float(coef[0] - c), coef[1:]
        if abs(alpha_new) > cfg.bounds.alpha_max:
            log.debug("alpha=%.4g clipped at iteration %d", alpha_new, it)
            warnings.warn("alpha left the sieve bound and was clipped", RuntimeWarning)
            alpha_new = float(np.clip(alpha_new, -cfg.bounds.alpha_max, cfg.bounds.alpha_max))
        lin, ll_new, obj_new = evaluate(pi_new, alpha_new, gam)
        if obj_new < objs[-1] - MONOTONE_SLACK:
            log.warning("EM objective decreased by %.3g at iteration %d", objs[-1] - obj_new, it)
        done = (ll_new - lls[-1] < cfg.tol_loglik) and abs(pi_new - pi) / pi < cfg.tol_pi_rel
        lls.append(ll_new)
        objs.append(obj_new)
        pis.append(pi_new)
        pi, alpha = pi_new, alpha_new
        if done:
            converged = True
            break
    if weights is None:
        mu = 1.0 / (1.0 + np.exp(-(lin + shift_constant(pi, n0, n1))))
        weights = np.maximum(mu * (1.0 - mu), 1e-6)
    params = problem.to_params(pi, alpha, gam)
    if isinstance(params, GaetParams) and np.abs(params.theta).max() > cfg.bounds.theta_max:
        warnings.warn("spline coefficients exceed the sieve bound", RuntimeWarning)
    edf = _edf(problem.design, weights, kappa)
    post = posterior_from_log_ratio(pi, lin[n0:])
    return FitResult(
        params=params,
        loglik_trace=np.array(lls),
        objective_trace=np.array(objs),
        posteriors=post,
        kappa_selected=kappa,
        edf=edf,
        aic=-2.0 * lls[-1] + 2.0 * (edf + 2.0),
        start_index=start_index,
        iterations=it,
        converged=converged,
        pi_trace=np.array(pis),
    )


def em_fit_single(dataset: PuDataset, config: EmConfig, kappa, init) -> FitResult:
    """Run the EM iteration from one starting point at a fixed penalty weight."""
    return _run_em(_Problem(dataset, config), kappa, init)


def _cell(args):
    problem, kidx, kappa, sidx, init = args
    if init is None:
        rng = np.random.default_rng([problem.config.seed, sidx, kidx])
        init = problem.random_init(rng)
    try:
        return kidx, sidx, _run_em(problem, kappa, init, sidx)
    except (NonConvergenceError, NumericError, np.linalg.LinAlgError) as exc:
        log.info("start %d at kappa index %d failed: %s", sidx, kidx, exc)
        return kidx, sidx, None


def em_fit(dataset: PuDataset, config: EmConfig, inits=None) -> FitResult:
    """Multi-start EM over the penalty grid; the AIC winner is returned.

    Within each penalty weight the start with the largest profile
    log-likelihood wins; across weights the smallest AIC wins. ``inits``
    replaces the first random starts with given parameter values.
    """
    problem = _Problem(dataset, config)
    inits = list(inits or [])
    grid = (0.0,) if config.model == "linear" else config.kappa_grid
    cells = []
    for kidx, kappa in enumerate(grid):
        for sidx in range(config.n_starts):
            cells.append((problem, kidx, kappa, sidx, inits[sidx] if sidx < len(inits) else None))
    results = parallel_map(_cell, cells, config.threads)
    best_per_kappa = {}
    failures = 0
    for kidx, sidx, res in sorted(results, key=lambda r: (r[0], r[1])):
        if res is None:
            failures += 1
            continue
        cur = best_per_kappa.get(kidx)
        if cur is None or res.loglik > cur.loglik:
            best_per_kappa[kidx] = res
    if not best_per_kappa:
        raise EstimationError("every EM start failed")
    summary = tuple(
        (grid[k], r.loglik, r.edf, r.aic) for k, r in sorted(best_per_kappa.items())
    )
    winner = min(best_per_kappa.values(), key=lambda r: r.aic)
    return replace(winner, grid=summary, failures=failures)


def classify(fit) -> Classification:
    """Posterior classifier: label 1 iff the posterior exceeds 0.5 (ties go to 0)."""
    post = fit.posteriors if isinstance(fit, FitResult) else np.asarray(fit, dtype=float)
    return Classification((post > 0.5).astype(int))
