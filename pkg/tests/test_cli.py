import csv
import json

import pytest

from pu_tilt import cli
from pu_tilt.exceptions import EstimationError

FAST = ["--n-starts", "2", "--kappa-grid", "0.01,1", "--seed", "3", "--threads", "1"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = cli.run_command(["simulate", "--setting", "S1", "--n", "600", "--n0", "500",
                            "--seed", "7", "--out", str(out)])
    assert code == 0
    return out


def _inputs(d):
    return ["--labeled", str(d / "labeled.csv"), "--unlabeled", str(d / "unlabeled.csv"),
            "--truth", str(d / "truth.csv")]


def test_simulate_default_sizes(tmp_path):
    assert cli.run_command(["simulate", "--setting", "S1", "--seed", "1", "--out", str(tmp_path)]) == 0
    lab, unl, truth = (_rows(tmp_path / f) for f in ("labeled.csv", "unlabeled.csv", "truth.csv"))
    assert len(lab) - 1 == 1250 and len(unl) - 1 == 250 and len(truth) - 1 == 250
    meta = json.loads((tmp_path / "simulate.json").read_text())
    assert meta["truth"]["setting"] == "S1"


def test_simulate_n0_follows_design_ratio(tmp_path):
    assert cli.run_command(["simulate", "--setting", "S2", "--n", "3000", "--out", str(tmp_path)]) == 0
    assert len(_rows(tmp_path / "labeled.csv")) - 1 == 2500
    assert len(_rows(tmp_path / "unlabeled.csv")) - 1 == 500


def test_fit_writes_bundle(sim_dir, tmp_path, capsys):
    assert cli.run_command(["fit", *_inputs(sim_dir), *FAST, "--out", str(tmp_path)]) == 0
    bundle = json.loads((tmp_path / "fit.json").read_text())
    assert 0.0 < bundle["fit"]["pi"] < 1.0
    assert (tmp_path / "components.csv").exists()
    assert "pi =" in capsys.readouterr().out


def test_fit_json_is_reproducible(sim_dir, tmp_path):
    blobs = []
    for _ in range(2):
        assert cli.run_command(["fit", *_inputs(sim_dir), *FAST, "--out", str(tmp_path)]) == 0
        blobs.append((tmp_path / "fit.json").read_bytes())
    assert blobs[0] == blobs[1]


def test_classify(sim_dir, tmp_path):
    assert cli.run_command(["classify", *_inputs(sim_dir), *FAST, "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "classification.csv")
    assert rows[0] == ["row", "posterior", "label"] and len(rows) - 1 == 100
    summary = json.loads((tmp_path / "classify.json").read_text())["classification"]
    assert 0.0 <= summary["metrics"]["err"] <= 1.0


def test_bootstrap_and_component_test(sim_dir, tmp_path):
    args = [*_inputs(sim_dir), "--n-starts", "2", "--kappa-grid", "1", "--seed", "3"]
    assert cli.run_command(["bootstrap", *args, "--B", "50", "--out", str(tmp_path)]) == 0
    boot = json.loads((tmp_path / "bootstrap.json").read_text())["bootstrap"]
    assert boot["ci_lower"] <= boot["ci_upper"] and boot["kappa_fixed"] is True
    assert cli.run_command(["test", *args, "--B", "100", "--component", "3", "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "test.json").read_text())["test"]
    assert 0.0 < res["p_value"] <= 1.0 and len(res["b_hat"]) == 11


def test_mask(tmp_path):
    data = tmp_path / "full.csv"
    lines = ["a,b,y"] + [f"{i % 7},{(3 * i) % 11},{i % 2}" for i in range(40)]
    data.write_text("\n".join(lines) + "\n")
    out = tmp_path / "out"
    assert cli.run_command(["mask", "--data", str(data), "--label-column", "y", "--p-z", "0.5",
                            "--seed", "2", "--out", str(out)]) == 0
    meta = json.loads((out / "mask.json").read_text())
    n0 = len(_rows(out / "labeled.csv")) - 1
    n1 = len(_rows(out / "unlabeled.csv")) - 1
    assert n0 + n1 == 40
    # expected proportion from the masking rate, not the realized draw
    assert meta["truth"]["pi0"] == pytest.approx(0.5 * 20 / (0.5 * 20 + 20), abs=1e-12)


def test_study_byte_identical(tmp_path):
    argv = ["study", "--setting", "S1", "--n", "600", "--n0", "500", "--reps", "2",
            "--methods", "gaet,bayes", *FAST[:-2]]
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run_command([*argv, "--threads", "1", "--out", str(a)]) == 0
    assert cli.run_command([*argv, "--threads", "2", "--out", str(b)]) == 0
    for name in ("study_replicates.csv", "study_components.csv", "study_summary.json"):
        if name.endswith(".json"):
            # echoed thread count and output path differ; everything else must agree
            ja, jb = (json.loads((d / name).read_text()) for d in (a, b))
            for j in (ja, jb):
                j["config"].pop("threads"), j["config"].pop("output")
            assert ja == jb
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes()


def test_unknown_flag_exits_one(capsys):
    assert cli.run_command(["fit", "--no-such-flag"]) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_file_exits_one(tmp_path, capsys):
    code = cli.run_command(["fit", "--labeled", str(tmp_path / "nope.csv"),
                            "--unlabeled", str(tmp_path / "nope2.csv")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_missing_inputs_exit_one(capsys):
    assert cli.run_command(["fit"]) == 1


def test_estimation_failure_exits_two(sim_dir, tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise EstimationError("all starts failed")

    monkeypatch.setattr(cli, "em_fit", boom)
    assert cli.run_command(["fit", *_inputs(sim_dir), "--out", str(tmp_path)]) == 2
    assert "all starts failed" in capsys.readouterr().err


def test_config_precedence(tmp_path, monkeypatch):
    conf = tmp_path / "run.ini"
    conf.write_text("[run]\nseed = 11\nn_starts = 4\nthreads = 3\n")
    args = cli.build_parser().parse_args(["fit", "--config", str(conf), "--seed", "12"])
    monkeypatch.delenv("PU_TILT_THREADS", raising=False)
    cfg = cli.resolve_config(args)
    assert cfg.seed == 12 and cfg.n_starts == 4 and cfg.threads == 3
    monkeypatch.setenv("PU_TILT_THREADS", "2")
    assert cli.resolve_config(args).threads == 2
    args = cli.build_parser().parse_args(["fit", "--threads", "1"])
    assert cli.resolve_config(args).threads == 1


def test_bad_config_key_exits_one(tmp_path, capsys):
    conf = tmp_path / "run.ini"
    conf.write_text("[run]\nbogus = 1\n")
    assert cli.run_command(["fit", "--config", str(conf)]) == 1
