"""Simulated and masked PU data, the Bayes oracle, and replicated studies."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.special import expit

from ._parallel import derive_seed, parallel_map
from .em import Classification, EmConfig, em_fit, classify
from .exceptions import (
    EstimationError,
    GenerationError,
    MaskingError,
    NonConvergenceError,
    NumericError,
    ParameterError,
)
from .model import GaetParams, PuDataset

log = logging.getLogger(__name__)

SETTINGS = ("S1", "S2", "S3", "S1Z", "S2Z")
GRID_POINTS = 201
MAX_DRAWS = 10_000_000
ORACLE_DRAWS = 1_000_000
ORACLE_SEED = 20240531
_BATCH = 4096


def _setting_id(setting) -> str:
    sid = setting if isinstance(setting, str) else setting.id
    sid = sid.upper().replace("ZETA", "Z")
    if sid not in SETTINGS:
        raise ParameterError(f"unknown setting {sid!r}; expected one of {SETTINGS}")
    return sid


@dataclass(frozen=True)
class SimSetting:
    """One of the five-feature simulation designs.

    ``S1Z``/``S2Z`` scale the first feature's effect by ``zeta``; with
    ``zeta=1`` they coincide with ``S1``/``S2``.
    """

    id: str = "S1"
    zeta: float = 1.0
    pi0: float = 0.4
    n0: int = 1250
    n: int = 1500
    seed: int = 0
    p: int = field(default=5, init=False)

    def __post_init__(self):
        object.__setattr__(self, "id", _setting_id(self.id))
        if not 0.0 <= self.zeta <= 1.0:
            raise ParameterError("zeta must lie in [0, 1]")
        if not self.n > self.n0 >= 1:
            raise ParameterError("need n > n0 >= 1")
        if not 0.0 < self.pi0 < 1.0:
            raise ParameterError("pi0 must lie in (0, 1)")

    @property
    def effective_zeta(self) -> float:
        return self.zeta if self.id in ("S1Z", "S2Z") else 1.0

    def draw(self, seed):
        ds = generate_pu(replace(self, seed=seed))
        return ds, self.pi0


def m_function(setting, x) -> np.ndarray:
    """Log-odds of P(Y = 1 | x) for a simulation setting; ``x`` is (5,) or (n, 5)."""
    sid = _setting_id(setting)
    zeta = setting.effective_zeta if isinstance(setting, SimSetting) else 1.0
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != 5:
        raise ParameterError("the simulation settings use five features")
    if sid in ("S1", "S1Z"):
        out = -16.0 + 6.0 * zeta * X[:, 0] + 6.0 * X[:, 1:].sum(axis=1)
    elif sid in ("S2", "S2Z"):
        sq = (X - 0.3) ** 2
        out = -14.0 + 24.0 * zeta * sq[:, 0] + 24.0 * sq[:, 1:].sum(axis=1)
    else:
        x1, x2, x3, x4, x5 = X.T
        out = (-13.0 + 6.0 * x1 + 24.0 * (x2 - 0.3) ** 2 + 1.0 / (x3 + 0.1)
               - 5.0 * np.cos(5.0 * x4) + 2.0 * np.exp(4.0 * x5 - 2.0))
    return float(out[0]) if single else out


def true_component(setting, j: int):
    """Centered true additive component u_j as a vectorized callable on [0, 1]."""
    sid = _setting_id(setting)
    zeta = setting.effective_zeta if isinstance(setting, SimSetting) else 1.0
    scale = zeta if j == 0 else 1.0
    if sid in ("S1", "S1Z"):
        return lambda x: scale * 6.0 * (np.asarray(x) - 0.5)
    if sid in ("S2", "S2Z"):
        mean_sq = (0.7 ** 3 + 0.3 ** 3) / 3.0
        return lambda x: scale * 24.0 * ((np.asarray(x) - 0.3) ** 2 - mean_sq)
    funcs = [
        lambda x: 6.0 * (np.asarray(x) - 0.5),
        lambda x: 24.0 * ((np.asarray(x) - 0.3) ** 2 - (0.7 ** 3 + 0.3 ** 3) / 3.0),
        lambda x: 1.0 / (np.asarray(x) + 0.1) - math.log(11.0),
        lambda x: -5.0 * np.cos(5.0 * np.asarray(x)) + math.sin(5.0),
        lambda x: 2.0 * np.exp(4.0 * np.asarray(x) - 2.0) - (math.e ** 2 - math.e ** -2) / 2.0,
    ]
    return funcs[j]


def draw_points(setting, size, rng):
    """Uniform points on the unit cube with labels Y ~ Bernoulli(expit(m(x)))."""
    X = rng.uniform(size=(size, 5))
    y = rng.uniform(size=size) < expit(m_function(setting, X))
    return X, y


def generate_pu(setting: SimSetting, rng=None) -> PuDataset:
    """Draw a PU sample by the binomial-then-rejection protocol.

    The unlabeled count of positives n* ~ Binomial(n - n0, pi0) is drawn
    first; points are then drawn uniformly with logistic labels until both
    groups are large enough. Unlabeled rows are shuffled.
    """
    rng = np.random.default_rng(setting.seed) if rng is None else rng
    n0, n = setting.n0, setting.n
    n_star = int(rng.binomial(n - n0, setting.pi0))
    need1, need0 = n0 + n_star, n - n0 - n_star
    pos, neg = [], []
    got1 = got0 = drawn = 0
    while got1 < need1 or got0 < need0:
        if drawn >= MAX_DRAWS:
            raise GenerationError(f"could not fill both groups within {MAX_DRAWS} draws")
        X, y = draw_points(setting, _BATCH, rng)
        drawn += _BATCH
        pos.append(X[y])
        neg.append(X[~y])
        got1 += int(y.sum())
        got0 += int((~y).sum())
    pos = np.vstack(pos)[:need1]
    neg = np.vstack(neg)[:need0]
    unl = np.vstack([pos[n0:], neg])
    truth = np.concatenate([np.ones(n_star, dtype=int), np.zeros(need0, dtype=int)])
    order = rng.permutation(len(unl))
    scaling = np.tile([0.0, 1.0], (5, 1))
    names = tuple(f"x{j + 1}" for j in range(5))
    return PuDataset(pos[:n0], unl[order], truth[order], scaling, names)


@dataclass(frozen=True)
class MaskSpec:
    p_z: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.p_z < 1.0:
            raise ParameterError("p_z must lie in (0, 1)")


def masked_pi0(p_z, n_pos, n_neg) -> float:
    """True unlabeled mixture proportion after masking positives with keep-probability p_z."""
    hidden = (1.0 - p_z) * n_pos
    return hidden / (hidden + n_neg)


def mask_labeled(features, labels, spec: MaskSpec, feature_names=None):
    """Turn a fully labeled dataset into PU data.

    Each positive is kept labeled with probability ``p_z``; the other
    positives join the negatives in the unlabeled sample. Returns the dataset
    and its true mixture proportion.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels).astype(int).ravel()
    if not np.isin(y, (0, 1)).all() or y.min() == y.max():
        raise ParameterError("labels must be 0/1 with both classes present")
    rng = np.random.default_rng(spec.seed)
    z = np.zeros(len(y), dtype=bool)
    pos = np.flatnonzero(y == 1)
    z[pos] = rng.uniform(size=len(pos)) < spec.p_z
    if not z.any():
        raise MaskingError("masking left no labeled positives")
    unl = ~z
    ds = PuDataset.from_raw(X[z], X[unl], y[unl], feature_names)
    return ds, masked_pi0(spec.p_z, int((y == 1).sum()), int((y == 0).sum()))


@dataclass(frozen=True)
class MaskedSource:
    """Fully labeled data re-masked independently in each study replicate."""

    features: np.ndarray
    labels: np.ndarray
    p_z: float
    feature_names: tuple | None = None

    def draw(self, seed):
        return mask_labeled(self.features, self.labels, MaskSpec(self.p_z, seed), self.feature_names)


@lru_cache(maxsize=None)
def oracle_prior(setting_id: str, zeta: float = 1.0) -> float:
    """Monte Carlo estimate of P(Y = 1) = E[expit(m(X))] for X uniform on the cube."""
    rng = np.random.default_rng(ORACLE_SEED)
    setting = SimSetting(setting_id, zeta=zeta)
    total = 0.0
    for _ in range(ORACLE_DRAWS // 100_000):
        total += expit(m_function(setting, rng.uniform(size=(100_000, 5)))).sum()
    return total / ORACLE_DRAWS


def bayes_oracle(setting: SimSetting, dataset: PuDataset) -> Classification:
    """Classify unlabeled rows with the true density ratio and pi0."""
    q = oracle_prior(setting.id, setting.effective_zeta)
    log_ratio = m_function(setting, dataset.unlabeled) + math.log1p(-q) - math.log(q)
    post = expit(log_ratio + math.log(setting.pi0) - math.log1p(-setting.pi0))
    return Classification((post > 0.5).astype(int))


@dataclass(frozen=True)
class Metrics:
    """FP and FN rates and overall error; None when a class is absent."""

    fp: float | None
    fn: float | None
    err: float


def evaluate(classification, true_labels) -> Metrics:
    pred = np.asarray(getattr(classification, "labels", classification)).astype(int)
    y = np.asarray(true_labels).astype(int)
    if pred.shape != y.shape:
        raise ParameterError("prediction and label lengths differ")
    neg, pos = y == 0, y == 1
    fp = float((pred[neg] == 1).mean()) if neg.any() else None
    fn = float((pred[pos] == 0).mean()) if pos.any() else None
    return Metrics(fp, fn, float((pred != y).mean()))


REPLICATE_COLUMNS = ("replicate", "method", "pi0", "pi_hat", "alpha_hat", "kappa", "edf", "aic",
                     "loglik", "iterations", "converged", "fp", "fn", "err", "failed")


@dataclass(frozen=True, eq=False)
class StudyReport:
    """Per-replicate rows plus per-method aggregates.

    ``component_means`` holds the replicate mean of each fitted GAET
    component on a uniform grid of [0, 1] (rows = features).
    """

    rows: list
    summary: dict
    component_grid: np.ndarray | None = None
    component_means: np.ndarray | None = None


def _replicate(args):
    source, config, rep, seed, methods = args
    dataset, pi0 = source.draw(derive_seed(seed, rep, 0))
    rows, curves = [], None
    for method in methods:
        row = dict.fromkeys(REPLICATE_COLUMNS)
        row.update(replicate=rep, method=method, pi0=pi0, failed=0)
        if method == "bayes":
            cls = bayes_oracle(source, dataset)
        else:
            cfg = replace(config, model=method, seed=derive_seed(seed, rep, 1), threads=1)
            try:
                fit = em_fit(dataset, cfg)
            except (EstimationError, NonConvergenceError, NumericError) as exc:
                log.warning("replicate %d (%s) failed: %s", rep, method, exc)
                row["failed"] = 1
                rows.append(row)
                continue
            cls = classify(fit)
            row.update(pi_hat=fit.pi, alpha_hat=fit.params.alpha, kappa=fit.kappa_selected,
                       edf=fit.edf, aic=fit.aic, loglik=fit.loglik, iterations=fit.iterations,
                       converged=int(fit.converged))
            if isinstance(fit.params, GaetParams):
                grid = np.linspace(0.0, 1.0, GRID_POINTS)
                curves = np.array([fit.params.component(j, grid) for j in range(fit.params.n_features)])
        if dataset.true_labels is not None:
            m = evaluate(cls, dataset.true_labels)
            row.update(fp=m.fp, fn=m.fn, err=m.err)
        rows.append(row)
    return rows, curves


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


def summarize(rows) -> dict:
    """Aggregate bias, se, mse of pi_hat and mean FP/FN/Err per method."""
    out = {}
    for method in dict.fromkeys(r["method"] for r in rows):
        mine = [r for r in rows if r["method"] == method]
        ok = [r for r in mine if not r["failed"]]
        entry = {"replicates": len(mine), "failures": len(mine) - len(ok),
                 "fp": _mean([r["fp"] for r in ok]), "fn": _mean([r["fn"] for r in ok]),
                 "err": _mean([r["err"] for r in ok])}
        est = np.array([r["pi_hat"] for r in ok if r["pi_hat"] is not None], dtype=float)
        if est.size:
            pi0 = np.array([r["pi0"] for r in ok if r["pi_hat"] is not None], dtype=float)
            entry.update(pi_hat_mean=float(est.mean()), bias=float(np.mean(est - pi0)),
                         se=float(est.std(ddof=1)) if est.size > 1 else None,
                         mse=float(np.mean((est - pi0) ** 2)))
        out[method] = entry
    return out


def run_study(source, config: EmConfig | None = None, replicates=100, methods=("gaet", "linear"),
              seed=0, threads=1) -> StudyReport:
    """Replicate generate -> fit -> classify -> evaluate and aggregate.

    ``source`` is a :class:`SimSetting` or :class:`MaskedSource`. Include
    ``"bayes"`` in ``methods`` to add the oracle classifier (simulations only).
    Failed fits are kept as rows flagged ``failed`` and excluded from
    aggregates.
    """
    if replicates < 1:
        raise ParameterError("replicates must be at least 1")
    config = config or EmConfig()
    if "bayes" in methods and not isinstance(source, SimSetting):
        raise ParameterError("the Bayes oracle needs a simulation setting")
    jobs = [(source, config, rep, seed, tuple(methods)) for rep in range(replicates)]
    results = parallel_map(_replicate, jobs, threads)
    rows = [row for rep_rows, _ in results for row in rep_rows]
    curves = [c for _, c in results if c is not None]
    grid = means = None
    if curves:
        grid = np.linspace(0.0, 1.0, GRID_POINTS)
        means = np.mean(curves, axis=0)
    return StudyReport(rows, summarize(rows), grid, means)
