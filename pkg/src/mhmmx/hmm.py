"""Log-domain forward recursion and Viterbi decoding for one subgroup HMM.

Trajectories are pairs of integer arrays (pain, disability) with
``MISSING`` (-1) for an absent report; ``None`` entries are accepted too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .data import MISSING
from .emission import EmissionParams, emission_log_table


@dataclass(frozen=True)
class SubgroupHMM:
    pi: np.ndarray
    Phi: np.ndarray
    emissions: EmissionParams

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        Phi = np.array(self.Phi, dtype=float)
        S = self.emissions.S
        if pi.shape != (S,) or Phi.shape != (S, S):
            raise ValueError(f"pi/Phi shapes {pi.shape}/{Phi.shape} inconsistent with S={S}")
        if pi.min() < 0 or Phi.min() < 0:
            raise ValueError("probabilities must be non-negative")
        if abs(pi.sum() - 1) > 1e-12 or np.max(np.abs(Phi.sum(axis=1) - 1)) > 1e-12:
            raise ValueError("pi and every row of Phi must sum to 1")
        pi.setflags(write=False)
        Phi.setflags(write=False)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "Phi", Phi)

    @property
    def S(self) -> int:
        return self.emissions.S

    def log_emission_table(self) -> np.ndarray:
        return emission_log_table(self.emissions)


def _as_obs(y, M: int, what: str) -> np.ndarray:
    arr = np.array([MISSING if v is None else v for v in np.ravel(np.asarray(y, dtype=object))], dtype=np.int64)
    if np.any((arr != MISSING) & ((arr < 0) | (arr > M))):
        raise ValueError(f"{what} observation outside [0, {M}]")
    return arr


def observation_index(yp, yd, MP: int, MD: int) -> tuple[np.ndarray, np.ndarray]:
    """Map observations to emission-table indices (missing -> M+1)."""
    yp = np.asarray(yp, dtype=np.int64)
    yd = np.asarray(yd, dtype=np.int64)
    if yp.shape != yd.shape:
        raise ValueError("pain and disability sequences must have equal shape")
    if np.any((yp != MISSING) & ((yp < 0) | (yp > MP))) or np.any((yd != MISSING) & ((yd < 0) | (yd > MD))):
        raise ValueError("observation outside the emission support")
    return np.where(yp == MISSING, MP + 1, yp), np.where(yd == MISSING, MD + 1, yd)


def _trajectory(m: SubgroupHMM, yp, yd):
    e = m.emissions
    yp = _as_obs(yp, e.MP, "pain")
    yd = _as_obs(yd, e.MD, "disability")
    if yp.ndim != 1 or yp.shape != yd.shape or yp.size == 0:
        raise ValueError("trajectory must be two equal-length non-empty sequences")
    return observation_index(yp, yd, e.MP, e.MD)


def emission_logprobs(m: SubgroupHMM, yp, yd, table: np.ndarray | None = None) -> np.ndarray:
    """log b_s(y_t) for each step; shape (..., T, S) for inputs shaped (..., T)."""
    if table is None:
        table = m.log_emission_table()
    ip, id_ = observation_index(yp, yd, m.emissions.MP, m.emissions.MD)
    return np.moveaxis(table[:, ip, id_], 0, -1)


def forward_loglik(m: SubgroupHMM, yp, yd) -> float:
    """log P(trajectory | m) via the log-sum-exp forward recursion."""
    ip, id_ = _trajectory(m, yp, yd)
    if np.all(ip == m.emissions.MP + 1) and np.all(id_ == m.emissions.MD + 1):
        return 0.0  # no evidence; avoids round-off from pi and Phi row sums
    logb = np.moveaxis(m.log_emission_table()[:, ip, id_], 0, -1)
    with np.errstate(divide="ignore"):
        log_phi = np.log(m.Phi)
        log_alpha = np.log(m.pi) + logb[0]
    for t in range(1, logb.shape[0]):
        log_alpha = logsumexp(log_alpha[:, None] + log_phi, axis=0) + logb[t]
    return float(logsumexp(log_alpha))


def prefix_logliks(m: SubgroupHMM, yp, yd, table: np.ndarray | None = None) -> np.ndarray:
    """log P(y_1..y_t | m) for t = 0..T, batched over leading axes.

    ``yp``/``yd`` shaped (N, T) give an (N, T+1) result whose column 0 is 0.
    """
    yp = np.atleast_2d(np.asarray(yp, dtype=np.int64))
    yd = np.atleast_2d(np.asarray(yd, dtype=np.int64))
    logb = emission_logprobs(m, yp, yd, table)  # (N, T, S)
    N, T, S = logb.shape
    out = np.zeros((N, T + 1))
    if T == 0:
        return out
    with np.errstate(divide="ignore"):
        log_pi = np.log(m.pi)
    phi = m.Phi
    log_alpha = log_pi + logb[:, 0]
    out[:, 1] = logsumexp(log_alpha, axis=1)
    for t in range(1, T):
        mx = log_alpha.max(axis=1, keepdims=True)
        with np.errstate(divide="ignore"):
            log_alpha = np.log(np.exp(log_alpha - mx) @ phi) + mx + logb[:, t]
        out[:, t + 1] = logsumexp(log_alpha, axis=1)
    return out


def viterbi_decode(m: SubgroupHMM, yp, yd) -> np.ndarray:
    """Most probable state path; ties resolve toward the lower state index."""
    path, _ = viterbi(m, yp, yd)
    return path


def viterbi(m: SubgroupHMM, yp, yd) -> tuple[np.ndarray, float]:
    ip, id_ = _trajectory(m, yp, yd)
    logb = np.moveaxis(m.log_emission_table()[:, ip, id_], 0, -1)
    T, S = logb.shape
    with np.errstate(divide="ignore"):
        log_phi = np.log(m.Phi)
        delta = np.log(m.pi) + logb[0]
    back = np.zeros((T, S), dtype=np.int64)
    for t in range(1, T):
        scores = delta[:, None] + log_phi  # (prev, next)
        back[t] = np.argmax(scores, axis=0)  # argmax returns the first maximum
        delta = scores[back[t], np.arange(S)] + logb[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(delta[path[-1]])


def path_log_score(m: SubgroupHMM, yp, yd, path) -> float:
    """log P(states = path, observations | m)."""
    ip, id_ = _trajectory(m, yp, yd)
    path = np.asarray(path, dtype=np.int64)
    table = m.log_emission_table()
    with np.errstate(divide="ignore"):
        score = np.log(m.pi[path[0]]) + np.sum(table[path, ip, id_])
        score += np.sum(np.log(m.Phi[path[:-1], path[1:]]))
    return float(score)


def state_occupancy(paths, S: int | None = None) -> np.ndarray:
    """Per-week fraction of patients in each state; shape (T, S)."""
    paths = np.asarray(paths, dtype=np.int64)
    if paths.ndim != 2 or paths.shape[0] == 0:
        raise ValueError("need a non-empty (n_patients, T) array of equal-length paths")
    if S is None:
        S = int(paths.max()) + 1
    counts = np.stack([(paths == s).sum(axis=0) for s in range(S)], axis=1)
    return counts / paths.shape[0]
