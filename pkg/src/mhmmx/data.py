"""Domain types and CSV ingestion for patient records.

Symptom trajectories are stored as integer arrays where ``MISSING`` (-1)
marks an absent weekly report. Risk factors are kept *uncentered* on the
record; :attr:`Dataset.X` applies the encoding's centering so that a test
split can reuse the centering fitted on the training split.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MISSING = -1
NA_MARKERS = frozenset({"", "NA", "na", "NaN", "nan"})

# Natural scale maxima: NRS pain 0-10, days with activity limitation 0-7.
DEFAULT_MP = 10
DEFAULT_MD = 7
DEFAULT_T = 52

COLUMN_KINDS = ("numeric", "binary", "categorical")


class DataError(ValueError):
    """Input validation failure; ``diagnostics`` holds one message per bad row."""

    def __init__(self, message: str, diagnostics: Sequence[str] = (), path=None):
        self.diagnostics = list(diagnostics)
        self.path = None if path is None else str(path)
        detail = "" if not self.diagnostics else "\n  " + "\n  ".join(self.diagnostics[:50])
        super().__init__(message + detail)


def _readonly(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = "numeric"
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and len(self.levels) < 2:
            raise DataError(f"column {self.name!r}: categorical needs >= 2 levels")
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))

    @property
    def encoded_names(self) -> list[str]:
        if self.kind == "categorical":
            # reference level (first) is dropped
            return [f"{self.name}[{lvl}]" for lvl in self.levels[1:]]
        return [self.name]

    def encode(self, raw: str) -> list[float]:
        raw = raw.strip()
        if raw in NA_MARKERS:
            raise ValueError(f"missing value for {self.name!r}")
        if self.kind == "numeric":
            value = float(raw)
            if not np.isfinite(value):
                raise ValueError(f"non-finite value {raw!r} for {self.name!r}")
            return [value]
        if self.kind == "binary":
            if raw not in ("0", "1"):
                raise ValueError(f"binary column {self.name!r} expects 0/1, got {raw!r}")
            return [float(raw)]
        if raw not in self.levels:
            raise ValueError(f"unknown level {raw!r} for {self.name!r}")
        return [1.0 if raw == lvl else 0.0 for lvl in self.levels[1:]]


@dataclass(frozen=True)
class RiskFactorEncoding:
    """Ordered column catalog plus the per-encoded-column centering vector."""

    columns: tuple[Column, ...]
    centering: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names in encoding")
        if self.centering is not None:
            centering = tuple(float(v) for v in self.centering)
            if len(centering) != self.P:
                raise DataError(f"centering has {len(centering)} entries, expected {self.P}")
            if not all(np.isfinite(centering)):
                raise DataError("centering values must be finite")
            object.__setattr__(self, "centering", centering)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def encoded_names(self) -> list[str]:
        return [n for c in self.columns for n in c.encoded_names]

    @property
    def P(self) -> int:
        return len(self.encoded_names)

    def encode_row(self, row: dict[str, str]) -> np.ndarray:
        return np.array([v for c in self.columns for v in c.encode(row[c.name])], dtype=float)

    def fit_centering(self, raw_x: np.ndarray) -> "RiskFactorEncoding":
        raw_x = np.asarray(raw_x, dtype=float).reshape(-1, self.P)
        if raw_x.shape[0] == 0:
            raise DataError("cannot fit centering on zero patients")
        return replace(self, centering=tuple(raw_x.mean(axis=0)))

    def to_dict(self) -> dict:
        return {
            "columns": [
                {"name": c.name, "kind": c.kind, **({"levels": list(c.levels)} if c.levels else {})}
                for c in self.columns
            ],
            "centering": None if self.centering is None else list(self.centering),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RiskFactorEncoding":
        cols = tuple(
            Column(c["name"], c.get("kind", "numeric"), tuple(c.get("levels", ()))) for c in d["columns"]
        )
        return cls(cols, d.get("centering"))

    @classmethod
    def from_json(cls, path) -> "RiskFactorEncoding":
        path = Path(path)
        try:
            return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"malformed encoding document: {exc}", path=path) from exc


@dataclass(frozen=True)
class PatientRecord:
    id: str
    x: np.ndarray
    yp: np.ndarray
    yd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "x", _readonly(self.x, float).reshape(-1))
        yp = _readonly([MISSING if v is None else v for v in self.yp], np.int64)
        yd = _readonly([MISSING if v is None else v for v in self.yd], np.int64)
        if yp.shape != yd.shape or yp.ndim != 1:
            raise DataError(f"patient {self.id}: pain and disability sequences differ in length")
        if not np.all(np.isfinite(self.x)):
            raise DataError(f"patient {self.id}: risk factors must be finite")
        object.__setattr__(self, "yp", yp)
        object.__setattr__(self, "yd", yd)

    @property
    def T(self) -> int:
        return len(self.yp)


@dataclass(frozen=True)
class Dataset:
    patients: tuple[PatientRecord, ...]
    encoding: RiskFactorEncoding
    T: int = DEFAULT_T
    MP: int = DEFAULT_MP
    MD: int = DEFAULT_MD

    def __post_init__(self):
        object.__setattr__(self, "patients", tuple(self.patients))
        if self.T < 1 or self.MP < 1 or self.MD < 1:
            raise DataError("T, MP and MD must be positive integers")
        ids = [p.id for p in self.patients]
        if len(set(ids)) != len(ids):
            raise DataError("patient ids must be unique")
        P = self.encoding.P
        for p in self.patients:
            if p.T != self.T:
                raise DataError(f"patient {p.id}: trajectory length {p.T} != T={self.T}")
            if p.x.shape != (P,):
                raise DataError(f"patient {p.id}: expected {P} risk factors, got {p.x.shape[0]}")
            for name, y, M in (("pain", p.yp, self.MP), ("disability", p.yd, self.MD)):
                bad = (y != MISSING) & ((y < 0) | (y > M))
                if bad.any():
                    raise DataError(f"patient {p.id}: {name} value out of range [0, {M}]")

    def __len__(self) -> int:
        return len(self.patients)

    @property
    def N(self) -> int:
        return len(self.patients)

    @property
    def P(self) -> int:
        return self.encoding.P

    @cached_property
    def ids(self) -> list[str]:
        return [p.id for p in self.patients]

    @cached_property
    def raw_X(self) -> np.ndarray:
        return _readonly(np.stack([p.x for p in self.patients]) if self.N else np.zeros((0, self.P)), float)

    @cached_property
    def X(self) -> np.ndarray:
        """Centered design matrix (N, P)."""
        c = np.zeros(self.P) if self.encoding.centering is None else np.asarray(self.encoding.centering)
        return _readonly(self.raw_X - c, float)

    @cached_property
    def yp(self) -> np.ndarray:
        return _readonly(np.stack([p.yp for p in self.patients]) if self.N else np.zeros((0, self.T)), np.int64)

    @cached_property
    def yd(self) -> np.ndarray:
        return _readonly(np.stack([p.yd for p in self.patients]) if self.N else np.zeros((0, self.T)), np.int64)

    def subset(self, indices: Iterable[int], encoding: RiskFactorEncoding | None = None) -> "Dataset":
        pts = tuple(self.patients[i] for i in indices)
        return Dataset(pts, encoding or self.encoding, self.T, self.MP, self.MD)

    def with_encoding(self, encoding: RiskFactorEncoding) -> "Dataset":
        if encoding.encoded_names != self.encoding.encoded_names:
            raise DataError("encoding columns do not match the dataset")
        return replace(self, encoding=encoding)


@dataclass(frozen=True)
class PriorSettings:
    sd_alpha: float = 5.0
    sd_beta_tilde: float = 1.0
    sd_lambda: float = 5.0
    sd_rho_tilde: float = 5.0

    def __post_init__(self):
        for name in ("sd_alpha", "sd_beta_tilde", "sd_lambda", "sd_rho_tilde"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v}")

    @staticmethod
    def dirichlet_init(S: int) -> np.ndarray:
        """Concentration S on state 0 (severe), 1 elsewhere."""
        a = np.ones(S)
        a[0] = S
        return a

    @staticmethod
    def dirichlet_rows(S: int) -> np.ndarray:
        """Row-wise concentrations: S on the diagonal, 1 off it."""
        return np.ones((S, S)) + (S - 1) * np.eye(S)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("sd_alpha", "sd_beta_tilde", "sd_lambda", "sd_rho_tilde")}


@dataclass(frozen=True)
class ModelSpec:
    K: int
    S: int = 3
    MP: int = DEFAULT_MP
    MD: int = DEFAULT_MD
    priors: PriorSettings = field(default_factory=PriorSettings)
    copula: str = "survival-gumbel"

    def __post_init__(self):
        for name in ("K", "S", "MP", "MD"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v}")
            object.__setattr__(self, name, int(v))
        if self.copula not in ("survival-gumbel", "independence"):
            raise ValueError(f"unknown copula family {self.copula!r}")

    def to_dict(self) -> dict:
        return {"K": self.K, "S": self.S, "MP": self.MP, "MD": self.MD,
                "copula": self.copula, "priors": self.priors.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(d["K"], d.get("S", 3), d.get("MP", DEFAULT_MP), d.get("MD", DEFAULT_MD),
                   PriorSettings(**d.get("priors", {})), d.get("copula", "survival-gumbel"))


def _parse_symptom(raw: str, M: int, what: str) -> int:
    raw = raw.strip()
    if raw in NA_MARKERS:
        return MISSING
    try:
        value = float(raw)
    except ValueError:
        raise ValueError(f"{what} {raw!r} is not an integer") from None
    if not value.is_integer():
        raise ValueError(f"{what} {raw!r} is not an integer")
    value = int(value)
    if not 0 <= value <= M:
        raise ValueError(f"{what} value out of range: {value} not in [0, {M}]")
    return value


def _read_csv(path: Path) -> tuple[list[str], list[dict[str, str]]]:
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise DataError("empty CSV file", path=path)
        return [f.strip() for f in reader.fieldnames], list(reader)


def load_dataset(baseline_path, trajectory_path, schema, *, T: int = DEFAULT_T,
                 MP: int = DEFAULT_MP, MD: int = DEFAULT_MD) -> Dataset:
    """Read baseline and long-format trajectory CSVs into a validated Dataset.

    ``schema`` is a :class:`RiskFactorEncoding` or a path to its JSON form.
    If the schema carries a centering vector it is reused (scoring new
    patients); otherwise centering is fitted on the loaded patients.
    Row-level problems are collected and raised together as one DataError.
    """
    if not isinstance(schema, RiskFactorEncoding):
        schema = RiskFactorEncoding.from_json(schema)
    baseline_path, trajectory_path = Path(baseline_path), Path(trajectory_path)

    fields, rows = _read_csv(baseline_path)
    if "id" not in fields:
        raise DataError("baseline file lacks an 'id' column", path=baseline_path)
    unknown = [f for f in fields if f != "id" and f not in schema.names]
    absent = [n for n in schema.names if n not in fields]
    if unknown or absent:
        diag = [f"unknown column {u!r}" for u in unknown] + [f"missing column {a!r}" for a in absent]
        raise DataError("baseline columns do not match the schema", diag, path=baseline_path)

    errors: list[str] = []
    xs: dict[str, np.ndarray] = {}
    for lineno, row in enumerate(rows, start=2):
        pid = (row.get("id") or "").strip()
        if not pid:
            errors.append(f"line {lineno}: empty id")
            continue
        if pid in xs:
            errors.append(f"line {lineno}: duplicate patient id {pid!r}")
            continue
        try:
            xs[pid] = schema.encode_row(row)
        except ValueError as exc:
            errors.append(f"line {lineno}: {exc}")
    if errors:
        raise DataError("invalid baseline file", errors, path=baseline_path)

    fields, rows = _read_csv(trajectory_path)
    required = ["id", "week", "pain", "disability"]
    if [f for f in required if f not in fields] or len(fields) != len(required):
        diag = [f"unknown column {f!r}" for f in fields if f not in required]
        diag += [f"missing column {f!r}" for f in required if f not in fields]
        raise DataError("trajectory columns must be exactly id, week, pain, disability", diag,
                        path=trajectory_path)

    yp = {pid: np.full(T, MISSING, dtype=np.int64) for pid in xs}
    yd = {pid: np.full(T, MISSING, dtype=np.int64) for pid in xs}
    seen: set[tuple[str, int]] = set()
    for lineno, row in enumerate(rows, start=2):
        pid = row["id"].strip()
        try:
            if pid not in xs:
                raise ValueError(f"patient {pid!r} not present in baseline file")
            week_f = float(row["week"])
            if not week_f.is_integer() or not 1 <= week_f <= T:
                raise ValueError(f"week {row['week']!r} outside [1, {T}]")
            week = int(week_f)
            if (pid, week) in seen:
                raise ValueError(f"duplicate (id, week) pair ({pid}, {week})")
            seen.add((pid, week))
            p = _parse_symptom(row["pain"], MP, "pain")
            d = _parse_symptom(row["disability"], MD, "disability")
        except ValueError as exc:
            errors.append(f"line {lineno}: {exc}")
            continue
        yp[pid][week - 1] = p
        yd[pid][week - 1] = d
    if errors:
        raise DataError("invalid trajectory file", errors, path=trajectory_path)

    patients = tuple(PatientRecord(pid, xs[pid], yp[pid], yd[pid]) for pid in xs)
    encoding = schema
    if encoding.centering is None and patients:
        encoding = schema.fit_centering(np.stack([p.x for p in patients]))
    return Dataset(patients, encoding, T, MP, MD)


def split_dataset(ds: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random disjoint split; the first part is the training split.

    The first part gets round(fraction * N) patients and its own centering,
    which the second part reuses.
    """
    if ds.N == 0:
        raise DataError("cannot split an empty dataset")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(ds.N)
    n_first = int(np.floor(fraction * ds.N + 0.5))
    first_idx, second_idx = sorted(order[:n_first]), sorted(order[n_first:])
    first = ds.subset(first_idx)
    if first.N:
        first = first.with_encoding(ds.encoding.fit_centering(first.raw_X))
    return first, ds.subset(second_idx, first.encoding)


def write_dataset(ds: Dataset, baseline_path, trajectory_path, raw_columns: dict[str, np.ndarray] | None = None):
    """Write the CSV pair that :func:`load_dataset` reads.

    Only numeric/binary encodings round-trip from ``raw_X`` directly;
    categorical columns need their raw strings passed via ``raw_columns``.
    """
    names = ds.encoding.names
    with Path(baseline_path).open("w", newline="", encoding="utf-8") as handle:
        w = csv.writer(handle, lineterminator="\n")
        w.writerow(["id", *names])
        for i, p in enumerate(ds.patients):
            vals = []
            j = 0
            for c in ds.encoding.columns:
                if raw_columns is not None and c.name in raw_columns:
                    vals.append(str(raw_columns[c.name][i]))
                elif c.kind == "categorical":
                    raise DataError(f"categorical column {c.name!r} needs raw values to be written")
                elif c.kind == "binary":
                    vals.append(str(int(p.x[j])))
                else:
                    vals.append(repr(float(p.x[j])))
                j += len(c.encoded_names)
            w.writerow([p.id, *vals])
    with Path(trajectory_path).open("w", newline="", encoding="utf-8") as handle:
        w = csv.writer(handle, lineterminator="\n")
        w.writerow(["id", "week", "pain", "disability"])
        for p in ds.patients:
            for t in range(ds.T):
                a, b = int(p.yp[t]), int(p.yd[t])
                if a == MISSING and b == MISSING:
                    continue
                w.writerow([p.id, t + 1, "NA" if a == MISSING else a, "NA" if b == MISSING else b])
