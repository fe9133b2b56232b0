import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from mhmmx.cli import main
from mhmmx.modelio import read_model, validate_model_document
from mhmmx.data import DataError


def _csv(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    sim, fit = root / "sim", root / "fit"
    assert main(["simulate", "--N", "40", "--T", "12", "--seed", "3", "--output-dir", str(sim)]) == 0
    data = ["--baseline", str(sim / "baseline.csv"), "--trajectories", str(sim / "trajectories.csv")]
    assert main(["fit", *data, "--schema", str(sim / "schema.json"), "--T", "12", "--restarts", "1",
                 "--output-dir", str(fit)]) == 0
    return {"root": root, "sim": sim, "fit": fit, "data": data,
            "model": ["--model", str(fit / "model.json"), "--T", "12"]}


def test_simulate_outputs(work):
    sim = work["sim"]
    truth = json.loads((sim / "truth.json").read_text())
    assert len(truth["ids"]) == 40 and set(truth["subgroups"]) <= {1, 2}
    assert np.array(truth["state_paths"]).shape == (40, 12)
    rows = _csv(sim / "trajectories.csv")
    assert 0.85 * 40 * 12 < len(rows) <= 40 * 12  # missing weeks are omitted rows
    assert {int(r["week"]) for r in rows} == set(range(1, 13))
    manifest = json.loads((sim / "manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["seed"] == 3
    assert set(manifest["outputs"]) == {"baseline.csv", "trajectories.csv", "schema.json", "truth.json"}


def test_fit_model_validates(work):
    doc = json.loads((work["fit"] / "model.json").read_text())
    validate_model_document(doc)
    params, spec, enc, _ = read_model(work["fit"] / "model.json")
    assert (spec.K, spec.S) == (2, 3) and params.P == 4
    assert np.all(np.diff(params.lambda_p, axis=1) <= 0)
    diag = json.loads((work["fit"] / "diagnostics.json").read_text())
    assert diag["mode"] == "map"
    bad = dict(doc, hmms=doc["hmms"][:1])
    with pytest.raises(DataError):
        validate_model_document(bad)


def test_assign_decode_accuracy(work, tmp_path):
    out = tmp_path / "a"
    assert main(["assign", *work["data"], *work["model"], "--weeks", "0,6,12", "--output-dir", str(out)]) == 0
    rows = _csv(out / "assignments.csv")
    assert len(rows) == 3 * 40
    assert list(rows[0]) == ["id", "mode", "t", "prob_1", "prob_2", "label", "max_prob"]
    assert {r["mode"] for r in rows if r["t"] == "0"} == {"offline"}
    assert all(abs(float(r["prob_1"]) + float(r["prob_2"]) - 1) < 1e-12 for r in rows)

    assert main(["decode", *work["data"], *work["model"], "--output-dir", str(out)]) == 0
    paths = _csv(out / "paths.csv")
    assert len(paths) == 40 and len(paths[0]) == 2 + 12
    assert {int(v) for r in paths for k, v in r.items() if k.startswith("week_")} <= {1, 2, 3}
    occ = _csv(out / "occupancy.csv")
    allrows = [r for r in occ if r["subgroup"] == "all"]
    assert len(allrows) == 12
    assert all(abs(sum(float(r[f"state_{s}"]) for s in (1, 2, 3)) - 1) < 1e-12 for r in allrows)

    assert main(["accuracy", *work["data"], *work["model"], "--output-dir", str(out)]) == 0
    acc = _csv(out / "accuracy.csv")
    assert len(acc) == 13 * 3
    final = [r for r in acc if r["t"] == "12" and r["n_qualifying"] != "0"]
    assert all(float(r["agreement"]) == 1.0 for r in final)

    assert main(["cvi", *work["data"], "--schema", str(work["sim"] / "schema.json"), "--T", "12",
                 "--assignments", str(out / "assignments.csv"), "--methods", "mhmmx",
                 "--output-dir", str(out)]) == 0
    cvi = _csv(out / "cvi.csv")
    assert cvi[0]["method"] == "mhmmx"
    assert list(cvi[0])[:2] == ["method", "subgroups"]


def test_missing_file_exit_code(work, tmp_path, capsys):
    code = main(["fit", *work["data"][:2], "--trajectories", str(tmp_path / "nope.csv"),
                 "--schema", str(work["sim"] / "schema.json"), "--output-dir", str(tmp_path)])
    assert code == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert "nope.csv" in err["path"]


def test_usage_errors(work, tmp_path, capsys):
    assert main(["fit", "--mode", "bogus"]) == 2
    assert main(["frobnicate"]) == 2
    bad = tmp_path / "cfg.json"
    bad.write_text(json.dumps({"not_a_key": 1}))
    assert main(["simulate", "--config", str(bad), "--output-dir", str(tmp_path)]) == 3  # bad input file
    assert main(["assign", *work["data"], *work["model"], "--weeks", "99", "--output-dir", str(tmp_path)]) == 2


def test_config_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"N": 7, "T": 3, "seed": 1}))
    out = tmp_path / "o"
    assert main(["--config", str(cfg), "simulate", "--T", "4", "--output-dir", str(out)]) == 0
    truth = json.loads((out / "truth.json").read_text())
    assert len(truth["ids"]) == 7 and len(truth["state_paths"][0]) == 4


def test_rerun_from_manifest_is_byte_identical(work, tmp_path):
    first = tmp_path / "first"
    assert main(["assign", *work["data"], *work["model"], "--weeks", "0..12", "--output-dir", str(first)]) == 0
    manifest = json.loads((first / "manifest.json").read_text())
    cfg = tmp_path / "rerun.json"
    cfg.write_text(json.dumps(manifest["config"]))
    second = tmp_path / "second"
    assert main(["assign", "--config", str(cfg), "--output-dir", str(second)]) == 0
    assert (first / "assignments.csv").read_bytes() == (second / "assignments.csv").read_bytes()
    assert (first / "manifest.json").read_bytes() == (second / "manifest.json").read_bytes()


def test_fit_is_deterministic_and_inputs_untouched(work, tmp_path):
    before = {p.name: p.read_bytes() for p in work["sim"].iterdir()}
    out = tmp_path / "fit2"
    assert main(["fit", *work["data"], "--schema", str(work["sim"] / "schema.json"), "--T", "12",
                 "--restarts", "1", "--output-dir", str(out)]) == 0
    assert (out / "model.json").read_bytes() == (work["fit"] / "model.json").read_bytes()
    assert {p.name: p.read_bytes() for p in work["sim"].iterdir()} == before


def test_mcmc_fit_writes_draws(work, tmp_path):
    out = tmp_path / "mcmc"
    assert main(["fit", *work["data"], "--schema", str(work["sim"] / "schema.json"), "--T", "12",
                 "--mode", "mcmc", "--chains", "2", "--iter", "60", "--warmup", "30", "--restarts", "1",
                 "--output-dir", str(out)]) == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["n_chains"] == 2 and diag["n_draws_per_chain"] == 30
    assert "lambda_p[1,1]" in diag["rhat"]
    draws = _csv(out / "draws.csv")
    assert len(draws) == 60 and list(draws[0])[:2] == ["chain", "draw"]
    res = tmp_path / "assign"
    assert main(["assign", *work["data"], "--model", str(out / "model.json"), "--draws", str(out / "draws.csv"),
                 "--T", "12", "--weeks", "12", "--output-dir", str(res)]) == 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mhmmx", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
