"""Priors, posterior evaluation, MAP fitting and Hamiltonian Monte Carlo."""

import jax

jax.config.update("jax_enable_x64", True)

from .posterior import NumericalError, Posterior, fit_map, log_posterior, MapResult  # noqa: E402
from .prior import log_prior  # noqa: E402
from .mcmc import PosteriorDraws, SamplerError, sample_posterior  # noqa: E402
from .relabel import relabel, relabel_params  # noqa: E402
from .diagnostics import effective_sample_size, split_rhat  # noqa: E402

__all__ = [
    "MapResult", "NumericalError", "Posterior", "PosteriorDraws", "SamplerError",
    "effective_sample_size", "fit_map", "log_posterior", "log_prior", "relabel",
    "relabel_params", "sample_posterior", "split_rhat",
]
