"""Weakly informative priors.

Normal(0, sd_alpha) on free intercepts, Normal(0, sd_beta_tilde) on the
QR-space slopes, Dirichlet on pi (state 0 boosted to S) and on every Phi
row (S on the diagonal), half-normal(sd_lambda) on the Poisson rates and
half-normal(sd_rho_tilde) on rho - 1.
"""

from __future__ import annotations

import math

import jax.numpy as jnp
import numpy as np
from jax.scipy.special import gammaln
from scipy import stats

from ..data import PriorSettings

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def _normal_logpdf(x, sd):
    return -0.5 * (x / sd) ** 2 - math.log(sd) - _LOG_SQRT_2PI


def _half_normal_logpdf(x, sd):
    return math.log(2.0) + _normal_logpdf(x, sd)


def _dirichlet_logpdf_logx(log_x, conc):
    return jnp.sum((conc - 1.0) * log_x, axis=-1) + gammaln(jnp.sum(conc, axis=-1)) - jnp.sum(gammaln(conc), axis=-1)


def prior_terms(blocks, priors: PriorSettings, copula: str) -> dict:
    """Per-block log prior densities for constrained blocks (jax-traceable)."""
    S = blocks["log_pi"].shape[-1]
    terms = {
        "alpha": jnp.sum(_normal_logpdf(blocks["alpha"][1:], priors.sd_alpha)),
        "beta_tilde": jnp.sum(_normal_logpdf(blocks["beta_tilde"][1:], priors.sd_beta_tilde)),
        "pi": jnp.sum(_dirichlet_logpdf_logx(blocks["log_pi"], jnp.asarray(PriorSettings.dirichlet_init(S)))),
        "Phi": jnp.sum(_dirichlet_logpdf_logx(blocks["log_Phi"], jnp.asarray(PriorSettings.dirichlet_rows(S)))),
        "lambda_p": jnp.sum(_half_normal_logpdf(blocks["lambda_p"], priors.sd_lambda)),
        "lambda_d": jnp.sum(_half_normal_logpdf(blocks["lambda_d"], priors.sd_lambda)),
    }
    if copula == "survival-gumbel":
        terms["rho"] = jnp.sum(_half_normal_logpdf(blocks["rho_tilde"], priors.sd_rho_tilde))
    return terms


def log_prior(params, priors: PriorSettings | None = None, qr=None) -> float:
    """Log prior density of constrained parameters, evaluated with scipy.stats.

    ``qr`` supplies R for the slope prior on beta_tilde = R beta; without it
    the slopes are taken to already live in QR space.
    """
    priors = priors or PriorSettings()
    K, S = params.K, params.S
    if np.any(params.pi < 0) or np.any(np.abs(params.pi.sum(-1) - 1) > 1e-9):
        raise ValueError("pi must lie on the simplex")
    if np.any(params.Phi < 0) or np.any(np.abs(params.Phi.sum(-1) - 1) > 1e-9):
        raise ValueError("Phi rows must lie on the simplex")
    if np.any(params.lambda_p <= 0) or np.any(params.lambda_d <= 0):
        raise ValueError("emission rates must be positive")
    beta_tilde = params.beta if qr is None else qr.to_tilde(params.beta)
    total = stats.norm.logpdf(params.alpha[1:], scale=priors.sd_alpha).sum()
    total += stats.norm.logpdf(beta_tilde[1:], scale=priors.sd_beta_tilde).sum()
    a_init = PriorSettings.dirichlet_init(S)
    a_rows = PriorSettings.dirichlet_rows(S)
    for k in range(K):
        if S > 1:
            total += stats.dirichlet.logpdf(params.pi[k] / params.pi[k].sum(), a_init)
            for r in range(S):
                total += stats.dirichlet.logpdf(params.Phi[k, r] / params.Phi[k, r].sum(), a_rows[r])
    total += stats.halfnorm.logpdf(params.lambda_p, scale=priors.sd_lambda).sum()
    total += stats.halfnorm.logpdf(params.lambda_d, scale=priors.sd_lambda).sum()
    if params.copula == "survival-gumbel":
        if np.any(params.rho < 1):
            raise ValueError("copula parameters must be >= 1")
        total += stats.halfnorm.logpdf(params.rho - 1.0, scale=priors.sd_rho_tilde).sum()
    return float(total)
