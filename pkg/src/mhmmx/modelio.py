"""Fitted-model JSON, columnar draws CSV and diagnostics JSON."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .data import DataError, ModelSpec, RiskFactorEncoding
from .mixture import ModelParams, QRTransform

MODEL_FORMAT = "mhmmx-model"
MODEL_VERSION = 1


def atomic_write_text(path, text: str) -> Path:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _clean(obj):
    """JSON-safe copy: numpy to python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write_text(path, dumps(obj))


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "NA" if not math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def model_document(params: ModelParams, spec: ModelSpec, encoding: RiskFactorEncoding,
                   qr: QRTransform | None = None, fit_info: dict | None = None) -> dict:
    """Serializable model: weights in both slope spaces, every subgroup HMM, spec, encoding.

    Subgroups and states are listed in 0-based array order; the accompanying
    CSV outputs number them from 1.
    """
    weights = {"alpha": params.alpha, "beta": params.beta}
    if qr is not None:
        weights["R"] = qr.R
        weights["beta_tilde"] = qr.to_tilde(params.beta)
    hmms = [{"pi": params.pi[k], "Phi": params.Phi[k], "lambda_p": params.lambda_p[k],
             "lambda_d": params.lambda_d[k], "rho": float(params.rho[k])} for k in range(params.K)]
    return _clean({
        "format": MODEL_FORMAT, "version": MODEL_VERSION,
        "spec": spec.to_dict(), "encoding": encoding.to_dict(),
        "weights": weights, "hmms": hmms, "fit": fit_info or {},
    })


def validate_model_document(doc: dict) -> None:
    """Raise DataError describing every structural problem found."""
    problems = []
    if not isinstance(doc, dict):
        raise DataError("model document must be a JSON object")
    if doc.get("format") != MODEL_FORMAT:
        problems.append(f"format must be {MODEL_FORMAT!r}")
    for key in ("spec", "encoding", "weights", "hmms"):
        if key not in doc:
            problems.append(f"missing key {key!r}")
    if problems:
        raise DataError("invalid model document", problems)
    try:
        spec = ModelSpec.from_dict(doc["spec"])
        enc = RiskFactorEncoding.from_dict(doc["encoding"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError("invalid model document", [str(exc)]) from exc
    K, S, P = spec.K, spec.S, enc.P
    alpha = np.asarray(doc["weights"].get("alpha", []), dtype=float)
    beta = np.asarray(doc["weights"].get("beta", []), dtype=float)
    if alpha.shape != (K,):
        problems.append(f"weights.alpha must have {K} entries")
    if beta.shape != (K, P) and not (P == 0 and beta.size == 0):
        problems.append(f"weights.beta must be {K}x{P}")
    if len(doc["hmms"]) != K:
        problems.append(f"expected {K} subgroup HMMs, found {len(doc['hmms'])}")
    for k, h in enumerate(doc["hmms"]):
        for name, shape in (("pi", (S,)), ("Phi", (S, S)), ("lambda_p", (S,)), ("lambda_d", (S,))):
            arr = np.asarray(h.get(name, []), dtype=float)
            if arr.shape != shape:
                problems.append(f"hmms[{k}].{name} must have shape {shape}")
        if "rho" not in h:
            problems.append(f"hmms[{k}].rho missing")
    if problems:
        raise DataError("invalid model document", problems)


def params_from_document(doc: dict) -> tuple[ModelParams, ModelSpec, RiskFactorEncoding]:
    validate_model_document(doc)
    spec = ModelSpec.from_dict(doc["spec"])
    enc = RiskFactorEncoding.from_dict(doc["encoding"])
    hmms = doc["hmms"]
    try:
        params = ModelParams(
            alpha=doc["weights"]["alpha"],
            beta=np.asarray(doc["weights"]["beta"], dtype=float).reshape(spec.K, enc.P),
            pi=[h["pi"] for h in hmms], Phi=[h["Phi"] for h in hmms],
            lambda_p=[h["lambda_p"] for h in hmms], lambda_d=[h["lambda_d"] for h in hmms],
            rho=[h["rho"] for h in hmms], copula=spec.copula, MP=spec.MP, MD=spec.MD,
        )
        params.to_mixture()  # validates simplexes and rates
    except ValueError as exc:
        raise DataError("invalid model parameters", [str(exc)]) from exc
    return params, spec, enc


def write_model(path, params: ModelParams, spec: ModelSpec, encoding: RiskFactorEncoding,
                qr: QRTransform | None = None, fit_info: dict | None = None) -> Path:
    return write_json(path, model_document(params, spec, encoding, qr, fit_info))


def read_model(path) -> tuple[ModelParams, ModelSpec, RiskFactorEncoding, dict]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"model file is not valid JSON: {exc}", path=path) from exc
    try:
        params, spec, enc = params_from_document(doc)
    except DataError as exc:
        raise DataError(str(exc), exc.diagnostics, path) from exc
    return params, spec, enc, doc


def write_draws(path, draws) -> Path:
    """One row per draw: chain and draw number (1-based), then every named parameter."""
    names = draws.names()
    mat = draws.matrix()
    counters: dict[int, int] = {}
    rows = []
    for c, row in zip(draws.chain_id, mat):
        counters[int(c)] = counters.get(int(c), 0) + 1
        rows.append([int(c) + 1, counters[int(c)], *row.tolist()])
    return write_csv(path, ["chain", "draw", *names], rows)


def read_draws(path, template: ModelParams, n_warmup: int = 0):
    from .inference.mcmc import PosteriorDraws, param_names

    with Path(path).open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        rows = [r for r in reader if r]
    expected = param_names(template)
    if header[2:] != expected:
        raise DataError("draws file columns do not match the model", path=path)
    mat = np.array([[float(v) for v in r[2:]] for r in rows])
    chains = np.array([int(r[0]) - 1 for r in rows])
    return PosteriorDraws.from_matrix(mat, template, chains, n_warmup)
