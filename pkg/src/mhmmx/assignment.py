"""Offline (risk factors only) and online (risk factors plus trajectory prefix)
subgroup assignment, and agreement of early assignments with the final one."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .data import Dataset
from .mixture import MixtureModel, ModelParams, component_prefix_logliks, log_subgroup_weights

DEFAULT_THRESHOLDS = (0.50, 0.65, 0.80)


@dataclass(frozen=True)
class AssignmentResult:
    id: str
    mode: str  # "offline" or "online"
    t: int
    probs: np.ndarray

    @property
    def label(self) -> int:
        return int(np.argmax(self.probs))  # first maximum wins ties

    @property
    def max_prob(self) -> float:
        return float(np.max(self.probs))


def _point_models(model, max_draws: int | None = None) -> list:
    if isinstance(model, (ModelParams, MixtureModel)):
        return [model]
    draws = list(model)
    if not draws:
        raise ValueError("no posterior draws")
    if max_draws is not None and len(draws) > max_draws:
        idx = np.unique(np.linspace(0, len(draws) - 1, max_draws).round().astype(int))
        draws = [draws[i] for i in idx]
    return draws


def _check_dims(m, P: int):
    w = m.weights
    if w.P != P:
        raise ValueError(f"risk factors have {P} entries but the model was fitted with {w.P}; "
                         "the encoding does not match")


def online_probabilities(model, X, yp, yd, *, max_draws: int | None = None) -> np.ndarray:
    """Subgroup probabilities after every prefix length: (N, T+1, K).

    Slice ``[:, 0]`` is the offline assignment. For posterior draws the
    per-draw probabilities are averaged.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    yp = np.atleast_2d(yp)
    yd = np.atleast_2d(yd)
    total = None
    models = _point_models(model, max_draws)
    for m in models:
        _check_dims(m, X.shape[1])
        log_w = log_subgroup_weights(m.weights, X)  # (N, K)
        scores = log_w[:, :, None] + component_prefix_logliks(m, yp, yd)  # (N, K, T+1)
        probs = np.exp(scores - logsumexp(scores, axis=1, keepdims=True))
        total = probs if total is None else total + probs
    probs = np.transpose(total / len(models), (0, 2, 1))
    return probs / probs.sum(axis=-1, keepdims=True)


def offline_probabilities(model, X, *, max_draws: int | None = None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    total = None
    models = _point_models(model, max_draws)
    for m in models:
        _check_dims(m, X.shape[1])
        w = np.exp(log_subgroup_weights(m.weights, X))
        total = w if total is None else total + w
    probs = total / len(models)
    return probs / probs.sum(axis=-1, keepdims=True)


def assign_offline(model, x, id: str = "", **kw) -> AssignmentResult:
    probs = offline_probabilities(model, np.asarray(x, dtype=float)[None], **kw)[0]
    return AssignmentResult(id, "offline", 0, probs)


def assign_online(model, x, yp_prefix, yd_prefix, id: str = "", **kw) -> AssignmentResult:
    """Assignment given the first t weeks; an empty prefix falls back to offline."""
    yp_prefix = np.asarray(yp_prefix, dtype=np.int64).ravel()
    yd_prefix = np.asarray(yd_prefix, dtype=np.int64).ravel()
    if yp_prefix.size != yd_prefix.size:
        raise ValueError("pain and disability prefixes differ in length")
    t = yp_prefix.size
    if t == 0:
        return assign_offline(model, x, id, **kw)
    probs = online_probabilities(model, np.asarray(x, dtype=float)[None], yp_prefix[None],
                                 yd_prefix[None], **kw)[0, t]
    return AssignmentResult(id, "online", t, probs)


def assign_dataset(model, ds: Dataset, t: int | None = None, **kw) -> list[AssignmentResult]:
    """Assign every patient offline (``t`` None or 0) or online at week ``t``."""
    if not t:
        probs = offline_probabilities(model, ds.X, **kw)
        return [AssignmentResult(pid, "offline", 0, p) for pid, p in zip(ds.ids, probs)]
    if not 1 <= t <= ds.T:
        raise ValueError(f"week {t} outside 1..{ds.T}")
    probs = online_probabilities(model, ds.X, ds.yp[:, :t], ds.yd[:, :t], **kw)[:, t]
    return [AssignmentResult(pid, "online", t, p) for pid, p in zip(ds.ids, probs)]


@dataclass(frozen=True)
class AccuracyTable:
    """Agreement of week-t labels with the final (week-T) label, per threshold.

    ``agreement`` is NaN where no patient exceeds the threshold.
    """

    weeks: np.ndarray  # 0..T
    thresholds: tuple[float, ...]
    n_qualifying: np.ndarray  # (T+1, H)
    agreement: np.ndarray  # (T+1, H)

    def rows(self):
        for i, t in enumerate(self.weeks):
            for j, thr in enumerate(self.thresholds):
                yield int(t), thr, int(self.n_qualifying[i, j]), float(self.agreement[i, j])

    def column(self, threshold: float) -> np.ndarray:
        return self.agreement[:, self.thresholds.index(threshold)]


def accuracy_from_probabilities(probs, thresholds=DEFAULT_THRESHOLDS) -> AccuracyTable:
    probs = np.asarray(probs)
    labels = np.argmax(probs, axis=-1)  # (N, T+1)
    maxp = probs.max(axis=-1)
    final = labels[:, -1:]
    agree = labels == final
    thresholds = tuple(float(x) for x in thresholds)
    n_q = np.empty((probs.shape[1], len(thresholds)), dtype=np.int64)
    acc = np.full(n_q.shape, np.nan)
    for j, thr in enumerate(thresholds):
        q = maxp > thr
        n_q[:, j] = q.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            rate = (agree & q).sum(axis=0) / n_q[:, j]
        acc[:, j] = np.where(n_q[:, j] > 0, rate, np.nan)
    return AccuracyTable(np.arange(probs.shape[1]), thresholds, n_q, acc)


def accuracy_over_time(model, ds: Dataset, thresholds=DEFAULT_THRESHOLDS, **kw) -> AccuracyTable:
    return accuracy_from_probabilities(online_probabilities(model, ds.X, ds.yp, ds.yd, **kw), thresholds)


def smooth(series, window: int = 4) -> np.ndarray:
    """Trailing moving average ignoring undefined (NaN) cells."""
    s = np.asarray(series, dtype=float)
    out = np.full_like(s, np.nan)
    for i in range(s.size):
        seg = s[max(0, i - window + 1): i + 1]
        seg = seg[np.isfinite(seg)]
        if seg.size:
            out[i] = seg.mean()
    return out
