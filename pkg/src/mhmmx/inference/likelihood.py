"""Differentiable (jax) mirror of the emission tables and the mixture likelihood.

The numpy implementations in :mod:`mhmmx.emission` and :mod:`mhmmx.hmm`
are the reference; these functions exist so the log-posterior can be
differentiated exactly and evaluated for all patients in one pass.
"""

from __future__ import annotations

import jax.numpy as jnp
from jax import lax
from jax.scipy.special import gammaln, logsumexp

from ..emission import LOG_PMF_FLOOR, PMF_FLOOR

_TINY = 1e-300


def trunc_poisson_logpmf(lam, M: int):
    y = jnp.arange(M + 1.0)
    logw = y * jnp.log(lam)[..., None] - gammaln(y + 1.0)
    return logw - logsumexp(logw, axis=-1, keepdims=True)


def _neg_log_sf(logpmf):
    # -log P(Y > y) for y = 0..M-1
    tail = lax.cumlogsumexp(logpmf[..., ::-1], axis=logpmf.ndim - 1)[..., ::-1]
    return jnp.maximum(-tail[..., 1:], 0.0)


def emission_tables(lam_p, lam_d, rho, MP: int, MD: int):
    """Log-emission lookup of shape (K, S, MP+2, MD+2) with missing slots last.

    ``lam_p``/``lam_d`` are (K, S); ``rho`` is (K,) and equals 1 for the
    independence copula.
    """
    lpp = trunc_poisson_logpmf(lam_p, MP)
    lpd = trunc_poisson_logpmf(lam_d, MD)
    a = _neg_log_sf(lpp)  # (K, S, MP)
    b = _neg_log_sf(lpd)  # (K, S, MD)
    r = rho[:, None, None, None]
    la = jnp.log(jnp.maximum(a, _TINY))[..., :, None]
    lb = jnp.log(jnp.maximum(b, _TINY))[..., None, :]
    inner = jnp.exp(-jnp.exp(jnp.logaddexp(r * la, r * lb) / r))  # joint survival, interior
    lead = lam_p.shape
    sf_p = jnp.exp(-a)
    sf_d = jnp.exp(-b)
    one = jnp.ones(lead + (1,))
    zero_d = jnp.zeros(lead + (1,))
    top = jnp.concatenate([one, sf_d, zero_d], axis=-1)[..., None, :]  # y_P = -1
    mid = jnp.concatenate([sf_p[..., :, None], inner, jnp.zeros(lead + (MP, 1))], axis=-1)
    bottom = jnp.zeros(lead + (1, MD + 2))  # y_P = MP
    G = jnp.concatenate([top, mid, bottom], axis=-2)  # (K, S, MP+2, MD+2)
    pmf = G[..., :-1, :-1] - G[..., 1:, :-1] - G[..., :-1, 1:] + G[..., 1:, 1:]
    log_joint = jnp.log(jnp.maximum(pmf, PMF_FLOOR))
    marg_p = jnp.maximum(lpp, LOG_PMF_FLOOR)[..., :, None]
    marg_d = jnp.maximum(lpd, LOG_PMF_FLOOR)[..., None, :]
    upper = jnp.concatenate([log_joint, marg_p], axis=-1)
    lower = jnp.concatenate([marg_d, jnp.zeros(lead + (1, 1))], axis=-1)
    return jnp.concatenate([upper, lower], axis=-2)


def forward_prefix(log_pi, log_Phi, tables, obs_index, all_prefixes: bool = False):
    """Forward recursion for every subgroup and patient at once.

    ``tables`` is (K, S, C) with C flattened observation codes and
    ``obs_index`` is (N, T). Returns the full-trajectory log-likelihood
    (K, N), or (T, K, N) prefix log-likelihoods when ``all_prefixes``.
    """
    logb = jnp.transpose(tables[:, :, obs_index], (3, 0, 2, 1))  # (T, K, N, S)
    Phi = jnp.exp(log_Phi)
    alpha0 = log_pi[:, None, :] + logb[0]

    def step(alpha, lb):
        m = lax.stop_gradient(jnp.max(alpha, axis=-1, keepdims=True))
        nxt = jnp.log(jnp.einsum("kns,ksr->knr", jnp.exp(alpha - m), Phi)) + m + lb
        return nxt, (logsumexp(nxt, axis=-1) if all_prefixes else None)

    alpha, prefixes = lax.scan(step, alpha0, logb[1:])
    if all_prefixes:
        first = logsumexp(alpha0, axis=-1)[None]
        return jnp.concatenate([first, prefixes], axis=0)
    return logsumexp(alpha, axis=-1)


def mixture_loglik(blocks, Q, obs_index, MP: int, MD: int, copula: str):
    """Sum over patients of log sum_k w_ik P(trajectory_i | m^k)."""
    rho = 1.0 + blocks["rho_tilde"] if copula == "survival-gumbel" else jnp.ones_like(blocks["rho_tilde"])
    tables = emission_tables(blocks["lambda_p"], blocks["lambda_d"], rho, MP, MD)
    K, S = tables.shape[:2]
    ll = forward_prefix(blocks["log_pi"], blocks["log_Phi"], tables.reshape(K, S, -1), obs_index)
    scores = blocks["alpha"][None, :] + Q @ blocks["beta_tilde"].T
    log_w = scores - logsumexp(scores, axis=1, keepdims=True)
    return jnp.sum(logsumexp(log_w + ll.T, axis=1))
