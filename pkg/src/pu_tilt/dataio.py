"""CSV ingestion, run configuration files, and JSON result bundles."""
from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path

import numpy as np
from scipy.integrate import simpson

from .em import EmConfig, FitResult
from .exceptions import DataError, ParameterError
from .model import Bounds, GaetParams, PuDataset
from .splines import make_spec

SCHEMA_VERSION = "pu-tilt/1"
GRID_POINTS = 201


# ---------------------------------------------------------------- CSV input

def read_table(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV with a header row.

    Raises DataError naming the line and column of the first cell that does
    not parse as a finite number.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, a header row is required") from None
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {line_no} has {len(row)} fields, expected {len(header)}")
            vals = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: line {line_no}, column {name!r}: cannot parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: line {line_no}, column {name!r}: non-finite value")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, np.array(rows, dtype=float)


def _split_column(header, data, name, path):
    if name not in header:
        raise DataError(f"{path}: no column named {name!r}")
    k = header.index(name)
    col = data[:, k]
    if not np.isin(col, (0.0, 1.0)).all():
        raise DataError(f"{path}: column {name!r} must contain only 0 and 1")
    rest = [h for i, h in enumerate(header) if i != k]
    return col.astype(int), rest, np.delete(data, k, axis=1)


def ingest_csv(path, unlabeled_path=None, labeled_column: str | None = None,
               truth_path=None) -> PuDataset:
    """Load PU data from CSV and min-max rescale it.

    Either ``path`` holds labeled rows and ``unlabeled_path`` unlabeled rows
    (same header), or ``path`` is a single file whose ``labeled_column``
    marks labeled rows with 1. ``truth_path`` optionally gives true 0/1
    labels for the unlabeled rows (single column, header required).
    """
    if (unlabeled_path is None) == (labeled_column is None):
        raise ParameterError("give either an unlabeled file or a labeled-indicator column")
    if labeled_column is not None:
        header, data = read_table(path)
        flag, names, feats = _split_column(header, data, labeled_column, path)
        lab, unl = feats[flag == 1], feats[flag == 0]
        if len(lab) == 0 or len(unl) == 0:
            raise DataError(f"{path}: need at least one labeled and one unlabeled row")
    else:
        names, lab = read_table(path)
        names_u, unl = read_table(unlabeled_path)
        if names_u != names:
            raise DataError("labeled and unlabeled files have different headers")
    truth = None
    if truth_path is not None:
        _, t = read_table(truth_path)
        if t.shape[1] != 1 or len(t) != len(unl):
            raise DataError(f"{truth_path}: expected one column with {len(unl)} rows")
        if not np.isin(t, (0.0, 1.0)).all():
            raise DataError(f"{truth_path}: labels must be 0 or 1")
        truth = t[:, 0].astype(int)
    return PuDataset.from_raw(lab, unl, truth, tuple(names))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    """RFC-4180 CSV; floats written with full round-trip precision."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_dataset(dataset: PuDataset, directory, raw=True) -> dict:
    """Write labeled.csv, unlabeled.csv and (if known) truth.csv; returns the file map."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = dataset.feature_names or tuple(f"x{j + 1}" for j in range(dataset.n_features))
    lab, unl = dataset.labeled, dataset.unlabeled
    if raw and dataset.scaling is not None:
        lo, hi = dataset.scaling[:, 0], dataset.scaling[:, 1]
        lab, unl = lo + lab * (hi - lo), lo + unl * (hi - lo)
    files = {"labeled": "labeled.csv", "unlabeled": "unlabeled.csv"}
    write_csv(directory / files["labeled"], names, lab.tolist())
    write_csv(directory / files["unlabeled"], names, unl.tolist())
    if dataset.true_labels is not None:
        files["truth"] = "truth.csv"
        write_csv(directory / files["truth"], ["y"], [[int(v)] for v in dataset.true_labels])
    return files


# ------------------------------------------------------------ run configuration

def _floats(text) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def _strs(text) -> tuple[str, ...]:
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


@dataclass
class RunConfig:
    """Everything a CLI run needs; serializes to an INI-style key-value file.

    ``None`` values are omitted from the file and restored as ``None``.
    """

    command: str | None = None
    labeled: str | None = None
    unlabeled: str | None = None
    data: str | None = None
    labeled_column: str | None = None
    label_column: str | None = None
    truth: str | None = None
    output: str = "."
    seed: int = 0
    threads: int = 1
    model: str = "gaet"
    n_starts: int = 20
    max_em_iter: int = 500
    tol_loglik: float = 1e-4
    tol_pi_rel: float = 1e-4
    kappa_grid: tuple[float, ...] = field(default_factory=lambda: EmConfig().kappa_grid)
    spline_order: int = 4
    n_interior: int = 6
    pi_min: float = 1e-3
    alpha_max: float = 20.0
    theta_max: float = 50.0
    B: int = 200
    level: float = 0.95
    component: int = 0
    J: int = 11
    setting: str | None = None
    n: int = 1500
    n0: int | None = None  # None: 5n/6, the simulation design ratio
    pi0: float = 0.4
    zeta: float = 1.0
    p_z: float = 0.7
    reps: int = 100
    methods: tuple[str, ...] = ("gaet", "linear")

    def __post_init__(self):
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if val is not None:
                setattr(self, f.name, _coerce(f.name, val))

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v, tuple) else v)
                for f in dataclasses.fields(self) for v in [getattr(self, f.name)]}

    def to_text(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        section = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                section[f.name] = ", ".join(_fmt(x) for x in v)
            else:
                section[f.name] = _fmt(v)
        parser["run"] = section
        buf = StringIO()
        parser.write(buf)
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ParameterError(f"malformed configuration: {exc}") from None
        if not parser.has_section("run"):
            raise ParameterError("configuration needs a [run] section")
        known = {f.name for f in dataclasses.fields(cls)}
        values = {}
        for key, raw in parser["run"].items():
            if key not in known:
                raise ParameterError(f"unknown configuration key {key!r}")
            values[key] = raw
        return cls(**values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def updated(self, **changes) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)

    def em_config(self) -> EmConfig:
        return EmConfig(
            n_starts=self.n_starts,
            max_em_iter=self.max_em_iter,
            tol_loglik=self.tol_loglik,
            tol_pi_rel=self.tol_pi_rel,
            kappa_grid=self.kappa_grid,
            spec=make_spec(self.spline_order, self.n_interior),
            seed=self.seed,
            model=self.model,
            bounds=Bounds(self.pi_min, self.alpha_max, self.theta_max),
            threads=self.threads,
        )


_INT_FIELDS = {"seed", "threads", "n_starts", "max_em_iter", "spline_order", "n_interior", "B",
               "component", "J", "n", "n0", "reps"}
_FLOAT_FIELDS = {"tol_loglik", "tol_pi_rel", "pi_min", "alpha_max", "theta_max", "level", "pi0",
                 "zeta", "p_z"}


def _coerce(name, val):
    try:
        if name in _INT_FIELDS:
            if isinstance(val, float) and not val.is_integer():
                raise ValueError
            return int(val)
        if name in _FLOAT_FIELDS:
            return float(val)
        if name == "kappa_grid":
            return _floats(val) if isinstance(val, str) else tuple(float(v) for v in val)
        if name == "methods":
            return _strs(val) if isinstance(val, str) else tuple(str(v) for v in val)
    except (TypeError, ValueError):
        raise ParameterError(f"invalid value {val!r} for {name}") from None
    return str(val)


# ---------------------------------------------------------------- result bundles

def grid_mean(values) -> float:
    """Mean of a function sampled on the uniform grid of [0, 1] (Simpson's rule)."""
    values = np.asarray(values, dtype=float)
    return float(simpson(values, x=np.linspace(0.0, 1.0, len(values))))


def component_table(params: GaetParams, dataset: PuDataset, points=GRID_POINTS) -> list[dict]:
    """Each fitted component on a uniform grid, in rescaled and original units."""
    grid = np.linspace(0.0, 1.0, points)
    names = dataset.feature_names or tuple(f"x{j + 1}" for j in range(dataset.n_features))
    out = []
    for j in range(params.n_features):
        vals = params.component(j, grid)
        if dataset.scaling is not None:
            lo, hi = dataset.scaling[j]
            orig = lo + grid * (hi - lo)
        else:
            orig = grid
        out.append({"feature": names[j], "grid_original": orig.tolist(), "values": vals.tolist(),
                    "grid_mean": grid_mean(vals)})
    return out


def _clean(obj):
    # JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def fit_summary(fit: FitResult) -> dict:
    p = fit.params
    out = {
        "model": "gaet" if isinstance(p, GaetParams) else "linear",
        "pi": fit.pi,
        "alpha": p.alpha,
        "kappa": fit.kappa_selected,
        "edf": fit.edf,
        "aic": fit.aic,
        "loglik": fit.loglik,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "start_index": fit.start_index,
        "failed_starts": fit.failures,
        "monotone": fit.monotone,
        "kappa_grid": [{"kappa": k, "loglik": ll, "edf": e, "aic": a} for k, ll, e, a in fit.grid],
    }
    if not isinstance(p, GaetParams):
        out["beta"] = list(p.beta)
    return out


def result_bundle(config: RunConfig, dataset: PuDataset | None = None, fit: FitResult | None = None,
                  posteriors=True, **sections) -> dict:
    """Versioned JSON-ready record of a run.

    Extra keyword sections (bootstrap, test, ...) are stored verbatim.
    """
    bundle = {"schema": SCHEMA_VERSION, "config": config.to_dict()}
    if dataset is not None:
        bundle["data"] = {"n0": dataset.n0, "n1": dataset.n1, "p": dataset.n_features,
                          "features": list(dataset.feature_names or ()),
                          "scaling": None if dataset.scaling is None else dataset.scaling.tolist()}
    if fit is not None:
        bundle["fit"] = fit_summary(fit)
        if isinstance(fit.params, GaetParams) and dataset is not None:
            bundle["components"] = {"grid": np.linspace(0.0, 1.0, GRID_POINTS).tolist(),
                                    "functions": component_table(fit.params, dataset)}
        if posteriors:
            bundle["posteriors"] = fit.posteriors.tolist()
    bundle.update(sections)
    return _clean(bundle)


def write_json(path, obj) -> None:
    text = json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
