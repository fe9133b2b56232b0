"""Command-line interface: fit, select, assign, decode, cvi, simulate, accuracy.

Every command writes its outputs atomically into ``--output-dir`` together
with a ``manifest.json`` recording the resolved configuration and its hash,
input-file hashes, the package version and the seed. Labels for subgroups
and states are 1-based in every CSV.

Exit codes: 0 success, 2 usage error, 3 input error, 4 numerical failure.
Errors are reported on stderr as a single JSON object.
"""

from __future__ import annotations

import argparse
import csv
import errno
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import DEFAULT_MD, DEFAULT_MP, DEFAULT_T, DataError, ModelSpec, PriorSettings, load_dataset

log = logging.getLogger("mhmmx")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- plumbing

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _int_range(text: str) -> list[int]:
    """'1..4' or '1,2,3' or '2'."""
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse integer list {text!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse number list {text!r}") from None


def _configure_threads(n: int | None):
    if not n:
        return
    os.environ["OMP_NUM_THREADS"] = str(n)
    flags = os.environ.get("XLA_FLAGS", "")
    if "intra_op_parallelism_threads" not in flags:
        os.environ["XLA_FLAGS"] = (flags + " --xla_cpu_multi_thread_eigen=false "
                                   f"intra_op_parallelism_threads={n}").strip()


# defaults for every configurable key; a --config JSON overrides these and
# explicit command-line flags override the config file
DEFAULTS = {
    "seed": 0, "threads": None, "output_dir": ".",
    "baseline": None, "trajectories": None, "schema": None,
    "T": DEFAULT_T, "MP": DEFAULT_MP, "MD": DEFAULT_MD,
    "K": 2, "S": 3, "copula": "survival-gumbel",
    "priors": None,
    "mode": "map", "chains": 4, "iter": 2000, "warmup": 1000, "leapfrog": 10,
    "target_accept": 0.8, "restarts": 10, "max_draws": 200,
    "K_range": "1..3", "S_range": "3", "fraction": 0.5,
    "model": None, "draws": None, "weeks": "0",
    "assignments": None, "methods": None,
    "thresholds": "0.5,0.65,0.8",
    "N": 400, "missing_rate": 0.05, "truth": None,
}


def _resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(str(path))
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"config is not valid JSON: {exc}", path=path) from exc
        unknown = sorted(set(loaded) - set(DEFAULTS) - {"command"})
        if unknown:
            raise DataError("unknown config keys", unknown, path=path)
        cfg.update({k: v for k, v in loaded.items() if k != "command"})
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            cfg[key] = value
    cfg["command"] = args.command
    cfg.pop("config", None)
    return cfg


def _config_for_manifest(cfg: dict) -> dict:
    # thread count and output location do not affect results
    return {k: v for k, v in sorted(cfg.items()) if k not in ("threads", "output_dir")}


class Run:
    """Tracks inputs and outputs of one command for the manifest."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.out = Path(cfg["output_dir"])
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}

    def input(self, path) -> Path:
        if path is None:
            raise UsageError("a required input path is missing")
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(errno.ENOENT, "input file not found", str(p))
        self.inputs[str(p)] = _sha256(p)
        return p

    def path(self, name: str) -> Path:
        return self.out / name

    def wrote(self, path: Path):
        self.outputs[path.name] = _sha256(path)

    def manifest(self):
        from .modelio import dumps, write_json

        conf = _config_for_manifest(self.cfg)
        doc = {
            "command": self.cfg["command"],
            "config": conf,
            "config_sha256": hashlib.sha256(dumps(conf).encode()).hexdigest(),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "version": __version__,
            "seed": self.cfg["seed"],
        }
        write_json(self.path("manifest.json"), doc)


def _priors(cfg) -> PriorSettings:
    return PriorSettings(**(cfg["priors"] or {}))


def _dataset(run: Run, schema=None):
    cfg = run.cfg
    schema = schema if schema is not None else run.input(cfg["schema"])
    return load_dataset(run.input(cfg["baseline"]), run.input(cfg["trajectories"]), schema,
                        T=int(cfg["T"]), MP=int(cfg["MP"]), MD=int(cfg["MD"]))


def _load_model(run: Run):
    from .modelio import read_draws, read_model

    params, spec, enc, doc = read_model(run.input(run.cfg["model"]))
    if (spec.MP, spec.MD) != (int(run.cfg["MP"]), int(run.cfg["MD"])):
        run.cfg["MP"], run.cfg["MD"] = spec.MP, spec.MD
    if run.cfg["schema"]:
        from .data import RiskFactorEncoding

        given = RiskFactorEncoding.from_json(run.input(run.cfg["schema"]))
        if given.encoded_names != enc.encoded_names:
            raise DataError("encoding mismatch between the schema and the fitted model",
                            [f"schema: {given.encoded_names}", f"model: {enc.encoded_names}"])
    model = params
    if run.cfg["draws"]:
        model = read_draws(run.input(run.cfg["draws"]), params)
    return params, model, spec, enc


# ---------------------------------------------------------------- commands

def cmd_simulate(run: Run):
    from .mixture import ModelParams
    from .modelio import write_json
    from .simulate import SimConfig, benchmark_truth, simulate
    from .data import write_dataset

    cfg = run.cfg
    if cfg["truth"]:
        truth = ModelParams.from_dict(json.loads(run.input(cfg["truth"]).read_text(encoding="utf-8")))
    else:
        truth = benchmark_truth(int(cfg["MP"]), int(cfg["MD"]))
    n_num = min(2, truth.P)
    sim = simulate(SimConfig(N=int(cfg["N"]), truth=truth, T=int(cfg["T"]), n_numeric=n_num,
                             n_binary=truth.P - n_num, missing_rate=float(cfg["missing_rate"]),
                             seed=int(cfg["seed"])))
    run.out.mkdir(parents=True, exist_ok=True)
    base, traj = run.path("baseline.csv"), run.path("trajectories.csv")
    write_dataset(sim.dataset, base, traj)
    run.wrote(base)
    run.wrote(traj)
    enc = sim.dataset.encoding
    schema = {"columns": enc.to_dict()["columns"], "centering": None}
    run.wrote(write_json(run.path("schema.json"), schema))
    run.wrote(write_json(run.path("truth.json"), {
        "params": truth.to_dict(),
        "centering": list(enc.centering),
        "ids": sim.dataset.ids,
        "subgroups": (sim.subgroups + 1).tolist(),
        "state_paths": (sim.state_paths + 1).tolist(),
    }))


def cmd_fit(run: Run):
    from .inference import Posterior, fit_map, sample_posterior
    from .modelio import write_draws, write_json, write_model

    cfg = run.cfg
    ds = _dataset(run)
    spec = ModelSpec(K=int(cfg["K"]), S=int(cfg["S"]), MP=ds.MP, MD=ds.MD, priors=_priors(cfg),
                     copula=cfg["copula"])
    post = Posterior(ds, spec)
    run.out.mkdir(parents=True, exist_ok=True)
    if cfg["mode"] == "map":
        res = fit_map(ds, spec, seed=int(cfg["seed"]), n_restarts=int(cfg["restarts"]), posterior=post)
        params = res.params
        diag = {"mode": "map", "log_posterior": res.log_posterior, "grad_norm": res.grad_norm,
                "restarts": res.restarts, "n_converged": res.n_converged}
        from .inference import relabel_params
        params = relabel_params(params)
    elif cfg["mode"] == "mcmc":
        draws = sample_posterior(ds, spec, n_chains=int(cfg["chains"]), n_warmup=int(cfg["warmup"]),
                                 n_iter=int(cfg["iter"]), seed=int(cfg["seed"]),
                                 n_leapfrog=int(cfg["leapfrog"]), target_accept=float(cfg["target_accept"]),
                                 map_restarts=int(cfg["restarts"]), posterior=post)
        params = draws.mean()
        diag = {"mode": "mcmc", **draws.diagnostics}
        run.wrote(write_draws(run.path("draws.csv"), draws))
    else:
        raise UsageError(f"unknown fit mode {cfg['mode']!r}")
    run.wrote(write_model(run.path("model.json"), params, spec, ds.encoding, post.qr,
                          {"mode": cfg["mode"], "N": ds.N}))
    run.wrote(write_json(run.path("diagnostics.json"), diag))


def cmd_select(run: Run):
    from .data import split_dataset
    from .modelio import write_csv, write_json
    from .selection import SelectionConfig, select_over

    cfg = run.cfg
    ds = _dataset(run)
    train, test = split_dataset(ds, float(cfg["fraction"]), int(cfg["seed"]))
    specs = [(k, s) for k in _int_range(cfg["K_range"]) for s in _int_range(cfg["S_range"])]
    if not specs:
        raise UsageError("no (K, S) combinations to compare")
    sel = SelectionConfig(mode=cfg["mode"], n_chains=int(cfg["chains"]), n_warmup=int(cfg["warmup"]),
                          n_iter=int(cfg["iter"]), n_leapfrog=int(cfg["leapfrog"]),
                          map_restarts=int(cfg["restarts"]), max_draws=cfg["max_draws"],
                          seed=int(cfg["seed"]), copula=cfg["copula"], priors=_priors(cfg))
    reports, best = select_over(train, test, specs, sel)
    run.out.mkdir(parents=True, exist_ok=True)
    run.wrote(write_csv(run.path("selection.csv"),
                        ["K", "S", "in_sample_lpd", "out_of_sample_lpd", "n_draws", "error"],
                        [[r.K, r.S, r.in_sample, r.out_of_sample, r.n_draws, r.error or ""] for r in reports]))
    run.wrote(write_json(run.path("recommendation.json"), {
        "recommended": None if best is None else {"K": best[0], "S": best[1]},
        "scale": "deviance", "n_train": train.N, "n_test": test.N,
        "failed": [{"K": r.K, "S": r.S, "error": r.error} for r in reports if r.error],
    }))
    if best is None:
        raise ArithmeticError("every spec in the sweep failed")


def cmd_assign(run: Run):
    from .assignment import online_probabilities
    from .modelio import write_csv

    params, model, spec, enc = _load_model(run)
    ds = _dataset(run, schema=enc)
    weeks = _int_range(run.cfg["weeks"])
    bad = [t for t in weeks if not 0 <= t <= ds.T]
    if bad:
        raise UsageError(f"weeks {bad} outside 0..{ds.T}")
    probs = online_probabilities(model, ds.X, ds.yp, ds.yd, max_draws=run.cfg["max_draws"])
    K = probs.shape[-1]
    rows = []
    for t in weeks:
        for pid, p in zip(ds.ids, probs[:, t]):
            rows.append([pid, "offline" if t == 0 else "online", t, *p.tolist(),
                         int(np.argmax(p)) + 1, float(p.max())])
    run.out.mkdir(parents=True, exist_ok=True)
    run.wrote(write_csv(run.path("assignments.csv"),
                        ["id", "mode", "t", *[f"prob_{k + 1}" for k in range(K)], "label", "max_prob"], rows))


def cmd_decode(run: Run):
    from .assignment import online_probabilities
    from .hmm import state_occupancy, viterbi_decode
    from .modelio import write_csv

    params, model, spec, enc = _load_model(run)
    ds = _dataset(run, schema=enc)
    labels = np.argmax(online_probabilities(model, ds.X, ds.yp, ds.yd, max_draws=run.cfg["max_draws"])[:, -1],
                       axis=-1)
    hmms = [params.hmm(k) for k in range(params.K)]
    paths = np.stack([viterbi_decode(hmms[labels[i]], ds.yp[i], ds.yd[i]) for i in range(ds.N)]) \
        if ds.N else np.zeros((0, ds.T), dtype=int)
    run.out.mkdir(parents=True, exist_ok=True)
    run.wrote(write_csv(run.path("paths.csv"), ["id", "subgroup", *[f"week_{t + 1}" for t in range(ds.T)]],
                        [[pid, int(labels[i]) + 1, *(paths[i] + 1).tolist()] for i, pid in enumerate(ds.ids)]))
    S = params.S
    rows = []
    groups = [("all", np.arange(ds.N))] + [(str(k + 1), np.flatnonzero(labels == k)) for k in range(params.K)]
    for name, idx in groups:
        if idx.size == 0:
            continue
        occ = state_occupancy(paths[idx], S)
        for t in range(ds.T):
            rows.append([name, t + 1, idx.size, *occ[t].tolist()])
    run.wrote(write_csv(run.path("occupancy.csv"),
                        ["subgroup", "week", "n_patients", *[f"state_{s + 1}" for s in range(S)]], rows))


def _read_labels(path: Path, ids: list[str]) -> np.ndarray:
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or "id" not in reader.fieldnames or "label" not in reader.fieldnames:
            raise DataError("assignment file needs 'id' and 'label' columns", path=path)
        rows = list(reader)
    if rows and "t" in rows[0]:
        # keep the latest week per patient when several are present
        latest: dict[str, tuple[int, str]] = {}
        for r in rows:
            t = int(r["t"])
            if r["id"] not in latest or t > latest[r["id"]][0]:
                latest[r["id"]] = (t, r["label"])
        mapping = {pid: lab for pid, (_, lab) in latest.items()}
    else:
        mapping = {r["id"]: r["label"] for r in rows}
    missing = [pid for pid in ids if pid not in mapping]
    if missing:
        raise DataError("patients without an assignment", [f"id {m!r}" for m in missing[:20]], path=path)
    return np.array([mapping[pid] for pid in ids])


def cmd_cvi(run: Run):
    from .cvi import CVI_COLUMNS, cvi_row
    from .modelio import write_csv

    cfg = run.cfg
    ds = _dataset(run)
    paths = cfg["assignments"] or []
    if isinstance(paths, str):
        paths = [paths]
    if not paths:
        raise UsageError("at least one --assignments file is required")
    methods = cfg["methods"] or [Path(p).stem for p in paths]
    if isinstance(methods, str):
        methods = methods.split(",")
    if len(methods) != len(paths):
        raise UsageError("give one method name per assignment file")
    rows = []
    for method, p in zip(methods, paths):
        row = cvi_row(method, _read_labels(run.input(p), ds.ids), ds)
        rows.append([row[c] for c in CVI_COLUMNS])
    run.out.mkdir(parents=True, exist_ok=True)
    run.wrote(write_csv(run.path("cvi.csv"), list(CVI_COLUMNS), rows))


def cmd_accuracy(run: Run):
    from .assignment import accuracy_over_time
    from .modelio import write_csv

    params, model, spec, enc = _load_model(run)
    ds = _dataset(run, schema=enc)
    table = accuracy_over_time(model, ds, _floats(run.cfg["thresholds"]), max_draws=run.cfg["max_draws"])
    run.out.mkdir(parents=True, exist_ok=True)
    run.wrote(write_csv(run.path("accuracy.csv"), ["t", "threshold", "n_qualifying", "agreement"],
                        list(table.rows())))


COMMANDS = {
    "fit": cmd_fit, "select": cmd_select, "assign": cmd_assign, "decode": cmd_decode,
    "cvi": cmd_cvi, "simulate": cmd_simulate, "accuracy": cmd_accuracy,
}


# ---------------------------------------------------------------- parser

def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=d)
    p.add_argument("--threads", type=int, default=d, help="cap on compute threads")
    p.add_argument("--output-dir", dest="output_dir", default=d)
    p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def _data_flags(p, schema=True):
    p.add_argument("--baseline", help="baseline risk-factor CSV")
    p.add_argument("--trajectories", help="long-format trajectory CSV (id, week, pain, disability)")
    if schema:
        p.add_argument("--schema", help="risk-factor encoding JSON")
    p.add_argument("--T", type=int)
    p.add_argument("--MP", type=int)
    p.add_argument("--MD", type=int)


def _sampler_flags(p):
    p.add_argument("--mode", choices=["map", "mcmc"])
    p.add_argument("--chains", type=int)
    p.add_argument("--iter", type=int, help="iterations per chain, warmup included")
    p.add_argument("--warmup", type=int)
    p.add_argument("--leapfrog", type=int, help="leapfrog steps per transition")
    p.add_argument("--target-accept", dest="target_accept", type=float)
    p.add_argument("--restarts", type=int, help="MAP restarts")
    p.add_argument("--copula", choices=["survival-gumbel", "independence"])


def _model_flags(p):
    p.add_argument("--model", help="fitted model JSON")
    p.add_argument("--draws", help="posterior draws CSV; probabilities are averaged over draws")
    p.add_argument("--max-draws", dest="max_draws", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mhmmx", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="MAP or MCMC fit")
    _global_flags(p, True)
    _data_flags(p)
    _sampler_flags(p)
    p.add_argument("--K", type=int)
    p.add_argument("--S", type=int)

    p = sub.add_parser("select", help="lpd sweep over K and S")
    _global_flags(p, True)
    _data_flags(p)
    _sampler_flags(p)
    p.add_argument("--K", dest="K_range", help="e.g. 1..4 or 1,2,3")
    p.add_argument("--S", dest="S_range", help="e.g. 3 or 1..4")
    p.add_argument("--fraction", type=float, help="training fraction of the random split")
    p.add_argument("--max-draws", dest="max_draws", type=int)

    p = sub.add_parser("assign", help="offline/online subgroup probabilities")
    _global_flags(p, True)
    _data_flags(p)
    _model_flags(p)
    p.add_argument("--weeks", help="weeks to report, 0 = offline (e.g. 0,10,52 or 0..52)")

    p = sub.add_parser("decode", help="Viterbi paths and state occupancy")
    _global_flags(p, True)
    _data_flags(p)
    _model_flags(p)

    p = sub.add_parser("cvi", help="cluster validity indices per symptom panel")
    _global_flags(p, True)
    _data_flags(p)
    p.add_argument("--assignments", action="append", help="CSV with id,label (repeatable)")
    p.add_argument("--methods", help="comma-separated method names, one per assignment file")

    p = sub.add_parser("simulate", help="synthetic cohort with ground truth")
    _global_flags(p, True)
    p.add_argument("--N", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--MP", type=int)
    p.add_argument("--MD", type=int)
    p.add_argument("--missing-rate", dest="missing_rate", type=float)
    p.add_argument("--truth", help="ModelParams JSON; default is the frozen benchmark")

    p = sub.add_parser("accuracy", help="agreement of week-t with final assignments")
    _global_flags(p, True)
    _data_flags(p)
    _model_flags(p)
    p.add_argument("--thresholds", help="comma-separated max-probability thresholds")
    return parser


def _error(code: int, exc: BaseException) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    path = getattr(exc, "path", None) or getattr(exc, "filename", None)
    if path is not None:
        doc["path"] = str(path)
    diag = getattr(exc, "diagnostics", None)
    if diag:
        doc["diagnostics"] = list(diag)
    block = getattr(exc, "block", None)
    if block:
        doc["block"] = block
    print(json.dumps(doc), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        _configure_threads(cfg["threads"])
        run = Run(cfg)
        COMMANDS[args.command](run)
        run.manifest()
        return EXIT_OK
    except UsageError as exc:
        return _error(EXIT_USAGE, exc)
    except (DataError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _error(EXIT_INPUT, exc)
    except (ArithmeticError, RuntimeError) as exc:
        return _error(EXIT_NUMERIC, exc)
    except ValueError as exc:
        return _error(EXIT_INPUT, exc)


if __name__ == "__main__":
    sys.exit(main())
