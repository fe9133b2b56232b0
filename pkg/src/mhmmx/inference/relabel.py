"""Canonical relabeling of states and subgroups against label switching.

States within each subgroup are ordered by decreasing pain rate (state 0
is the most severe); subgroups are ordered by decreasing mean pain rate.
Ties fall back to the disability rate, then the original index. After
subgroups move, intercepts and slopes are re-expressed relative to the new
reference subgroup so that its row stays pinned at zero; this leaves the
subgroup weights, and hence the likelihood, unchanged.
"""

from __future__ import annotations

import numpy as np

from ..mixture import ModelParams


def state_order(lambda_p, lambda_d) -> np.ndarray:
    idx = np.arange(len(lambda_p))
    return np.lexsort((idx, -np.asarray(lambda_d), -np.asarray(lambda_p)))


def subgroup_order(lambda_p, lambda_d) -> np.ndarray:
    lp = np.asarray(lambda_p).mean(axis=1)
    ld = np.asarray(lambda_d).mean(axis=1)
    return np.lexsort((np.arange(lp.size), -ld, -lp))


def permute_states(p: ModelParams, k: int, perm) -> ModelParams:
    """Reorder the states of subgroup ``k`` so new state j is old state perm[j]."""
    perm = np.asarray(perm)
    pi, Phi = p.pi.copy(), p.Phi.copy()
    lp, ld = p.lambda_p.copy(), p.lambda_d.copy()
    pi[k] = p.pi[k, perm]
    Phi[k] = p.Phi[k][np.ix_(perm, perm)]
    lp[k] = p.lambda_p[k, perm]
    ld[k] = p.lambda_d[k, perm]
    return p.replace(pi=pi, Phi=Phi, lambda_p=lp, lambda_d=ld)


def permute_subgroups(p: ModelParams, perm) -> ModelParams:
    """Reorder subgroups so new subgroup j is old subgroup perm[j], re-pinning row 0."""
    perm = np.asarray(perm)
    alpha = p.alpha[perm] - p.alpha[perm[0]]
    beta = p.beta[perm] - p.beta[perm[0]]
    return p.replace(alpha=alpha, beta=beta, pi=p.pi[perm], Phi=p.Phi[perm],
                     lambda_p=p.lambda_p[perm], lambda_d=p.lambda_d[perm], rho=p.rho[perm])


def relabel_params(p: ModelParams) -> ModelParams:
    for k in range(p.K):
        perm = state_order(p.lambda_p[k], p.lambda_d[k])
        if np.any(perm != np.arange(p.S)):
            p = permute_states(p, k, perm)
    perm = subgroup_order(p.lambda_p, p.lambda_d)
    if np.any(perm != np.arange(p.K)):
        p = permute_subgroups(p, perm)
    return p


def relabel(draws):
    """Relabel every draw of a PosteriorDraws (or a plain sequence of ModelParams)."""
    if hasattr(draws, "with_draws"):
        if len(draws) == 0:
            raise ValueError("no draws to relabel")
        return draws.with_draws([relabel_params(d) for d in draws])
    out = [relabel_params(d) for d in draws]
    if not out:
        raise ValueError("no draws to relabel")
    return out
