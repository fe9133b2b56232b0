"""Bivariate discrete emissions: truncated-Poisson margins joined by a copula.

State indices are 0-based; state 0 is the "severe" state after relabeling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .copula import CopulaParam, copula_cdf, copula_sample, gumbel_joint_survival

PMF_FLOOR = 1e-300
LOG_PMF_FLOOR = math.log(PMF_FLOOR)


def _check_rate(lam) -> float:
    lam = float(lam)
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"Poisson rate must be positive and finite, got {lam}")
    return lam


def trunc_poisson_logpmf(lam: float, M: int) -> np.ndarray:
    lam = _check_rate(lam)
    y = np.arange(M + 1)
    logw = y * np.log(lam) - gammaln(y + 1)
    return logw - logsumexp(logw)


def trunc_poisson_pmf(lam: float, M: int) -> np.ndarray:
    """Poisson(lam) restricted and renormalized to {0, ..., M}."""
    return np.exp(trunc_poisson_logpmf(lam, M))


def trunc_poisson_cdf(lam: float, M: int) -> np.ndarray:
    """CDF on {0, ..., M} via compensated summation; the last entry is exactly 1."""
    pmf = trunc_poisson_pmf(lam, M)
    cdf = np.array([math.fsum(pmf[: y + 1]) for y in range(M + 1)])
    cdf[-1] = 1.0
    return np.minimum(cdf, 1.0)


def trunc_poisson_sf(lam: float, M: int) -> np.ndarray:
    """P(Y > y) for y = 0..M, summed from the upper tail to keep small values accurate."""
    pmf = trunc_poisson_pmf(lam, M)
    return np.array([math.fsum(pmf[y + 1:]) for y in range(M + 1)])


@dataclass(frozen=True)
class EmissionParams:
    lambda_p: np.ndarray
    lambda_d: np.ndarray
    copula: CopulaParam
    MP: int
    MD: int

    def __post_init__(self):
        lp = np.array(self.lambda_p, dtype=float).reshape(-1)
        ld = np.array(self.lambda_d, dtype=float).reshape(-1)
        if lp.shape != ld.shape or lp.size == 0:
            raise ValueError("lambda_p and lambda_d must be non-empty with equal length S")
        if not (np.all(np.isfinite(lp)) and np.all(np.isfinite(ld)) and lp.min() > 0 and ld.min() > 0):
            raise ValueError("emission rates must be strictly positive and finite")
        if int(self.MP) < 0 or int(self.MD) < 0:
            raise ValueError("support maxima must be non-negative")
        lp.setflags(write=False)
        ld.setflags(write=False)
        object.__setattr__(self, "lambda_p", lp)
        object.__setattr__(self, "lambda_d", ld)
        object.__setattr__(self, "MP", int(self.MP))
        object.__setattr__(self, "MD", int(self.MD))

    @property
    def S(self) -> int:
        return self.lambda_p.shape[0]

    def _check_state(self, s: int):
        if not 0 <= s < self.S:
            raise IndexError(f"state index {s} outside [0, {self.S})")


def joint_pmf(e: EmissionParams, s: int, yP: int, yD: int) -> float:
    """P(pain = yP, disability = yD | state s) by inclusion-exclusion over the copula CDF."""
    e._check_state(s)
    if not (0 <= yP <= e.MP and 0 <= yD <= e.MD):
        raise IndexError(f"observation ({yP}, {yD}) outside support [0,{e.MP}]x[0,{e.MD}]")
    FP = trunc_poisson_cdf(e.lambda_p[s], e.MP)
    FD = trunc_poisson_cdf(e.lambda_d[s], e.MD)
    total = 0.0
    for iP in (0, 1):
        for iD in (0, 1):
            a, b = yP - iP, yD - iD
            if a < 0 or b < 0:
                continue  # F(-1) = 0 and C(0, v) = C(u, 0) = 0
            total += (-1) ** (iP + iD) * copula_cdf(e.copula, FP[a], FD[b])
    return min(max(total, 0.0), 1.0)


def _neg_log_sf(lam: float, M: int) -> np.ndarray:
    # -log P(Y > y) on y = -1..M (0 at y=-1, inf at y=M)
    logpmf = trunc_poisson_logpmf(lam, M)
    out = np.empty(M + 2)
    out[0] = 0.0
    for y in range(M + 1):
        out[y + 1] = -logsumexp(logpmf[y + 1:]) if y < M else np.inf
    return np.maximum(out, 0.0)


def joint_pmf_table(e: EmissionParams, clamp: bool = True) -> np.ndarray:
    """All joint probabilities, shape (S, MP+1, MD+1).

    Uses rectangle differences of the joint survival function, which equal
    the copula-CDF inclusion-exclusion sum exactly (the linear part of the
    survival copula cancels) but avoid the 1 - u round-off.
    """
    rho = e.copula.effective_rho
    out = np.empty((e.S, e.MP + 1, e.MD + 1))
    for s in range(e.S):
        a = _neg_log_sf(e.lambda_p[s], e.MP)
        b = _neg_log_sf(e.lambda_d[s], e.MD)
        G = gumbel_joint_survival(a[:, None], b[None, :], rho)
        out[s] = G[:-1, :-1] - G[1:, :-1] - G[:-1, 1:] + G[1:, 1:]
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return out


def joint_log_pmf_table(e: EmissionParams) -> np.ndarray:
    """log of :func:`joint_pmf_table`, floored at log(1e-300)."""
    return np.log(np.maximum(joint_pmf_table(e), PMF_FLOOR))


def emission_log_table(e: EmissionParams) -> np.ndarray:
    """Log-emission lookup including partially and fully missing observations.

    Shape (S, MP+2, MD+2); index MP+1 (resp. MD+1) means "missing". A
    half-missing pair scores with the present coordinate's marginal, a fully
    missing pair scores 0.
    """
    out = np.zeros((e.S, e.MP + 2, e.MD + 2))
    out[:, : e.MP + 1, : e.MD + 1] = joint_log_pmf_table(e)
    for s in range(e.S):
        out[s, : e.MP + 1, e.MD + 1] = np.maximum(trunc_poisson_logpmf(e.lambda_p[s], e.MP), LOG_PMF_FLOOR)
        out[s, e.MP + 1, : e.MD + 1] = np.maximum(trunc_poisson_logpmf(e.lambda_d[s], e.MD), LOG_PMF_FLOOR)
    return out


def emission_sample(e: EmissionParams, s: int, rng: np.random.Generator, size=None):
    """Draw (yP, yD) by pushing copula draws through the generalized inverse CDFs."""
    e._check_state(s)
    u, v = copula_sample(e.copula, rng, size)
    FP = trunc_poisson_cdf(e.lambda_p[s], e.MP)
    FD = trunc_poisson_cdf(e.lambda_d[s], e.MD)
    # min{y : F(y) >= u}
    yP = np.minimum(np.searchsorted(FP, u, side="left"), e.MP)
    yD = np.minimum(np.searchsorted(FD, v, side="left"), e.MD)
    if size is None:
        return int(yP), int(yD)
    return yP.astype(np.int64), yD.astype(np.int64)
