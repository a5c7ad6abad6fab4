"""Command-line interface: ``pu-tilt <command> [options]``.

Exit status is 0 on success, 1 on usage or input errors, 2 when estimation
or inference fails numerically.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio
from ._parallel import resolve_threads
from .em import classify, em_fit
from .exceptions import (
    DataError,
    DomainError,
    EstimationError,
    GenerationError,
    InferenceError,
    MaskingError,
    NonConvergenceError,
    NumericError,
    ParameterError,
)
from .inference import bootstrap_ci_pi, test_component
from .simulation import (
    REPLICATE_COLUMNS,
    SETTINGS,
    MaskedSource,
    MaskSpec,
    SimSetting,
    evaluate,
    generate_pu,
    mask_labeled,
    run_study,
)

log = logging.getLogger("pu_tilt")

COMMANDS = ("fit", "classify", "bootstrap", "test", "simulate", "mask", "study")
USAGE_ERRORS = (ParameterError, DataError, DomainError, MaskingError, FileNotFoundError,
                IsADirectoryError, PermissionError)
NUMERIC_ERRORS = (EstimationError, NonConvergenceError, NumericError, InferenceError, GenerationError,
                  np.linalg.LinAlgError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _csv_floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_common(p):
    g = p.add_argument_group("run")
    g.add_argument("--config", help="key-value configuration file; flags override it")
    g.add_argument("--out", dest="output", help="output directory (default: current)")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int, help="worker processes, 0 = all cores (env PU_TILT_THREADS)")
    g.add_argument("-v", "--verbose", action="store_true")
    e = p.add_argument_group("estimation")
    e.add_argument("--model", choices=("gaet", "linear"))
    e.add_argument("--n-starts", type=int)
    e.add_argument("--max-em-iter", type=int)
    e.add_argument("--tol-loglik", type=float)
    e.add_argument("--tol-pi-rel", type=float)
    e.add_argument("--kappa-grid", type=_csv_floats, help="comma-separated penalty weights")
    e.add_argument("--spline-order", type=int)
    e.add_argument("--n-interior", type=int)
    e.add_argument("--pi-min", type=float)
    e.add_argument("--alpha-max", type=float)
    e.add_argument("--theta-max", type=float)


def _add_input(p):
    g = p.add_argument_group("input")
    g.add_argument("--labeled", help="CSV of labeled (positive) rows")
    g.add_argument("--unlabeled", help="CSV of unlabeled rows")
    g.add_argument("--data", help="single CSV holding both samples")
    g.add_argument("--labeled-column", help="0/1 column of --data marking labeled rows")
    g.add_argument("--truth", help="CSV with true 0/1 labels of the unlabeled rows")


def _add_setting(p, required=True):
    p.add_argument("--setting", choices=SETTINGS, required=required)
    p.add_argument("--n", type=int)
    p.add_argument("--n0", type=int)
    p.add_argument("--pi0", type=float)
    p.add_argument("--zeta", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pu-tilt", description="Additive exponential tilting for positive-unlabeled data.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("fit", help="estimate pi and the additive log density ratio")
    _add_input(p)
    _add_common(p)

    p = sub.add_parser("classify", help="fit, then label the unlabeled rows")
    _add_input(p)
    _add_common(p)

    p = sub.add_parser("bootstrap", help="percentile bootstrap interval for pi")
    _add_input(p)
    _add_common(p)
    p.add_argument("--B", "--resamples", dest="B", type=int)
    p.add_argument("--level", type=float)

    p = sub.add_parser("test", help="bootstrap test that one component is zero")
    _add_input(p)
    _add_common(p)
    p.add_argument("--component", type=int, help="0-based feature index")
    p.add_argument("--B", "--resamples", dest="B", type=int)
    p.add_argument("--J", type=int, help="number of Fourier functions")

    p = sub.add_parser("simulate", help="draw one simulated PU dataset")
    _add_setting(p)
    _add_common(p)

    p = sub.add_parser("mask", help="turn fully labeled data into PU data")
    p.add_argument("--data", required=True, help="CSV with features and a 0/1 label column")
    p.add_argument("--label-column", required=True)
    p.add_argument("--p-z", type=float, help="labeling probability for positives")
    _add_common(p)

    p = sub.add_parser("study", help="replicated simulation or masking study")
    _add_setting(p, required=False)
    p.add_argument("--data", help="fully labeled CSV for a masking study")
    p.add_argument("--label-column")
    p.add_argument("--p-z", type=float)
    p.add_argument("--reps", type=int)
    p.add_argument("--methods", help="comma-separated subset of gaet, linear, bayes")
    _add_common(p)
    return parser


_NOT_CONFIG = {"config", "verbose"}


def resolve_config(args) -> dataio.RunConfig:
    """Defaults, then the --config file, then explicit flags.

    PU_TILT_THREADS stands in for ``--threads`` when that flag is absent.
    """
    cfg = dataio.RunConfig.load(args.config) if getattr(args, "config", None) else dataio.RunConfig()
    flags = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG and v is not None}
    if args.threads is None and os.environ.get("PU_TILT_THREADS", "").strip():
        flags["threads"] = os.environ["PU_TILT_THREADS"]
    return cfg.updated(**flags)


def _load_input(cfg: dataio.RunConfig):
    if cfg.data is not None and cfg.labeled_column is not None:
        return dataio.ingest_csv(cfg.data, labeled_column=cfg.labeled_column, truth_path=cfg.truth)
    if cfg.labeled is not None and cfg.unlabeled is not None:
        return dataio.ingest_csv(cfg.labeled, cfg.unlabeled, truth_path=cfg.truth)
    raise UsageError("give --labeled and --unlabeled, or --data with --labeled-column")


def _setting(cfg: dataio.RunConfig) -> SimSetting:
    if cfg.setting is None:
        raise UsageError("--setting is required")
    n0 = cfg.n0 if cfg.n0 is not None else round(5 * cfg.n / 6)
    return SimSetting(cfg.setting, zeta=cfg.zeta, pi0=cfg.pi0, n0=n0, n=cfg.n, seed=cfg.seed)


def _outdir(cfg) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _metrics(dataset, labels):
    if dataset.true_labels is None:
        return None
    m = evaluate(labels, dataset.true_labels)
    return {"fp": m.fp, "fn": m.fn, "err": m.err}


def _components_csv(path, bundle):
    comps = bundle.get("components")
    if not comps:
        return
    header = ["x"]
    cols = [comps["grid"]]
    for fn in comps["functions"]:
        header += [f"{fn['feature']}_original", f"u_{fn['feature']}"]
        cols += [fn["grid_original"], fn["values"]]
    dataio.write_csv(path, header, list(zip(*cols)))


def cmd_fit(cfg):
    ds = _load_input(cfg)
    fit = em_fit(ds, cfg.em_config())
    out = _outdir(cfg)
    bundle = dataio.result_bundle(cfg, ds, fit)
    dataio.write_json(out / "fit.json", bundle)
    _components_csv(out / "components.csv", bundle)
    print(f"pi = {fit.pi:.6f}  kappa = {fit.kappa_selected:.4g}  edf = {fit.edf:.3f}  aic = {fit.aic:.3f}")


def cmd_classify(cfg):
    ds = _load_input(cfg)
    fit = em_fit(ds, cfg.em_config())
    labels = classify(fit).labels
    out = _outdir(cfg)
    dataio.write_csv(out / "classification.csv", ["row", "posterior", "label"],
                     [(i, p, lab) for i, (p, lab) in enumerate(zip(fit.posteriors, labels))])
    summary = {"positives": int(labels.sum()), "unlabeled": int(len(labels)),
               "metrics": _metrics(ds, labels), "files": {"labels": "classification.csv"}}
    dataio.write_json(out / "classify.json", dataio.result_bundle(cfg, ds, fit, classification=summary))
    print(f"pi = {fit.pi:.6f}  labeled positive: {summary['positives']} of {summary['unlabeled']}")


def cmd_bootstrap(cfg):
    ds = _load_input(cfg)
    em_cfg = cfg.em_config()
    fit = em_fit(ds, em_cfg)
    res = bootstrap_ci_pi(ds, em_cfg, cfg.B, cfg.level, fit=fit)
    out = _outdir(cfg)
    section = {"ci_lower": res.ci_lower, "ci_upper": res.ci_upper, "level": res.level, "B": res.B,
               "failures": res.failures, "kappa": res.kappa, "kappa_fixed": res.kappa_fixed,
               "estimates": res.estimates}
    dataio.write_json(out / "bootstrap.json", dataio.result_bundle(cfg, ds, fit, posteriors=False,
                                                                  bootstrap=section))
    print(f"pi = {fit.pi:.6f}  {100 * res.level:g}% interval [{res.ci_lower:.6f}, {res.ci_upper:.6f}]")


def cmd_test(cfg):
    ds = _load_input(cfg)
    em_cfg = cfg.em_config()
    fit = em_fit(ds, em_cfg)
    res = test_component(ds, em_cfg, cfg.component, cfg.B, cfg.J, fit=fit)
    out = _outdir(cfg)
    section = {"component": res.j, "J": res.J, "b_hat": res.b_hat, "statistic": res.statistic,
               "critical_value": res.critical_value, "reject": res.reject, "p_value": res.p_value,
               "B": res.B, "failures": res.failures, "kappa": res.kappa, "kappa_fixed": res.kappa_fixed}
    dataio.write_json(out / "test.json", dataio.result_bundle(cfg, ds, fit, posteriors=False, test=section))
    verdict = "reject" if res.reject else "do not reject"
    print(f"T = {res.statistic:.4g}  critical = {res.critical_value:.4g}  p = {res.p_value:.4g}  ({verdict})")


def cmd_simulate(cfg):
    setting = _setting(cfg)
    ds = generate_pu(setting)
    out = _outdir(cfg)
    files = dataio.write_dataset(ds, out)
    truth = {"setting": setting.id, "pi0": setting.pi0, "zeta": setting.effective_zeta,
             "true_positive_fraction": float(np.mean(ds.true_labels)), "files": files}
    dataio.write_json(out / "simulate.json", dataio.result_bundle(cfg, ds, truth=truth))
    print(f"wrote {ds.n0} labeled and {ds.n1} unlabeled rows to {out}")


def cmd_mask(cfg):
    if cfg.label_column is None:
        raise UsageError("--label-column is required")
    header, table = dataio.read_table(cfg.data)
    labels, names, feats = dataio._split_column(header, table, cfg.label_column, cfg.data)
    ds, pi0 = mask_labeled(feats, labels, MaskSpec(cfg.p_z, cfg.seed), tuple(names))
    out = _outdir(cfg)
    files = dataio.write_dataset(ds, out)
    dataio.write_json(out / "mask.json", dataio.result_bundle(cfg, ds, truth={"pi0": pi0, "files": files}))
    print(f"pi0 = {pi0:.6f}; wrote {ds.n0} labeled and {ds.n1} unlabeled rows to {out}")


def cmd_study(cfg):
    if cfg.setting is not None:
        source = _setting(cfg)
    elif cfg.data is not None and cfg.label_column is not None:
        header, table = dataio.read_table(cfg.data)
        labels, names, feats = dataio._split_column(header, table, cfg.label_column, cfg.data)
        source = MaskedSource(feats, labels, cfg.p_z, tuple(names))
    else:
        raise UsageError("give --setting, or --data with --label-column")
    rep = run_study(source, cfg.em_config(), cfg.reps, cfg.methods, cfg.seed,
                    resolve_threads(cfg.threads))
    out = _outdir(cfg)
    dataio.write_csv(out / "study_replicates.csv", REPLICATE_COLUMNS,
                     [[r[c] for c in REPLICATE_COLUMNS] for r in rep.rows])
    files = {"replicates": "study_replicates.csv"}
    if rep.component_means is not None:
        files["component_means"] = "study_components.csv"
        header = ["x"] + [f"u{j + 1}" for j in range(rep.component_means.shape[0])]
        dataio.write_csv(out / files["component_means"], header,
                         np.column_stack([rep.component_grid, rep.component_means.T]).tolist())
    dataio.write_json(out / "study_summary.json",
                      dataio.result_bundle(cfg, summary=rep.summary, files=files))
    for method, s in rep.summary.items():
        print(f"{method}: bias = {s.get('bias')}  se = {s.get('se')}  err = {s.get('err')}  "
              f"failures = {s['failures']}")


HANDLERS = {"fit": cmd_fit, "classify": cmd_classify, "bootstrap": cmd_bootstrap, "test": cmd_test,
            "simulate": cmd_simulate, "mask": cmd_mask, "study": cmd_study}


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        HANDLERS[cfg.command](cfg)
    except (UsageError, *USAGE_ERRORS) as exc:
        print(f"pu-tilt {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except NUMERIC_ERRORS as exc:
        print(f"pu-tilt {args.command}: estimation failed: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
