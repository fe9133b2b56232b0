"""Posterior sampling: chains started at a jittered MAP, relabeled, diagnosed."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset, ModelSpec
from ..mixture import ModelParams
from .diagnostics import effective_sample_size, split_rhat
from .hmc import hmc_chain, rwm_chain
from .posterior import Posterior, fit_map
from .relabel import relabel_params

log = logging.getLogger(__name__)

RHAT_THRESHOLD = 1.02


class SamplerError(RuntimeError):
    pass


def _flat_names(name: str, shape: tuple[int, ...]) -> list[str]:
    return [f"{name}[{','.join(str(i + 1) for i in idx)}]" for idx in np.ndindex(*shape)]


def param_names(template: ModelParams) -> list[str]:
    """Column names (1-based indices) for flattened ModelParams."""
    out = []
    for name in ModelParams.FIELDS:
        out += _flat_names(name, getattr(template, name).shape)
    return out


def flatten(p: ModelParams) -> np.ndarray:
    return np.concatenate([getattr(p, name).ravel() for name in ModelParams.FIELDS])


def unflatten(row, template: ModelParams) -> ModelParams:
    row = np.asarray(row, dtype=float)
    parts, start = {}, 0
    for name in ModelParams.FIELDS:
        shape = getattr(template, name).shape
        n = int(np.prod(shape))
        parts[name] = row[start:start + n].reshape(shape)
        start += n
    return template.replace(**parts)


@dataclass
class PosteriorDraws:
    """Post-warmup draws from one or more chains, in chain order."""

    draws: list[ModelParams]
    chain_id: np.ndarray
    n_warmup: int = 0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.chain_id = np.asarray(self.chain_id, dtype=np.int64)
        if self.chain_id.shape != (len(self.draws),):
            raise ValueError("one chain id per draw is required")

    def __len__(self) -> int:
        return len(self.draws)

    def __iter__(self):
        return iter(self.draws)

    def __getitem__(self, i):
        return self.draws[i]

    @property
    def n_chains(self) -> int:
        return int(np.unique(self.chain_id).size)

    @property
    def template(self) -> ModelParams:
        return self.draws[0]

    def with_draws(self, draws: list[ModelParams]) -> "PosteriorDraws":
        return PosteriorDraws(list(draws), self.chain_id.copy(), self.n_warmup, dict(self.diagnostics))

    def names(self) -> list[str]:
        return param_names(self.template)

    def matrix(self) -> np.ndarray:
        return np.stack([flatten(d) for d in self.draws])

    @classmethod
    def from_matrix(cls, matrix, template: ModelParams, chain_id, n_warmup: int = 0,
                    diagnostics: dict | None = None) -> "PosteriorDraws":
        return cls([unflatten(r, template) for r in np.asarray(matrix)], chain_id, n_warmup,
                   diagnostics or {})

    def mean(self) -> ModelParams:
        if not self.draws:
            raise ValueError("no draws")
        p = unflatten(self.matrix().mean(axis=0), self.template)
        return p.replace(pi=p.pi / p.pi.sum(-1, keepdims=True),
                         Phi=p.Phi / p.Phi.sum(-1, keepdims=True))

    def compute_diagnostics(self) -> dict:
        """Split R-hat and ESS for every parameter that varies across draws."""
        mat = self.matrix()
        chains = np.unique(self.chain_id)
        n = min(int(np.sum(self.chain_id == c)) for c in chains)
        per_chain = np.stack([mat[self.chain_id == c][:n] for c in chains])  # (m, n, D)
        rhat, ess = {}, {}
        for j, name in enumerate(self.names()):
            x = per_chain[:, :, j]
            if np.ptp(x) == 0:
                continue  # pinned or fixed quantities
            rhat[name] = split_rhat(x)
            ess[name] = effective_sample_size(x)
        finite = [v for v in rhat.values() if np.isfinite(v)]
        out = {
            "rhat": rhat, "ess": ess,
            "max_rhat": max(finite) if finite else float("nan"),
            "min_ess": min(ess.values()) if ess else float("nan"),
            "n_chains": int(chains.size), "n_draws_per_chain": n,
            "n_warmup": self.n_warmup,
        }
        out["converged"] = bool(finite) and out["max_rhat"] < RHAT_THRESHOLD
        return out


def sample_posterior(ds: Dataset, spec: ModelSpec, n_chains: int = 4, n_warmup: int = 1000,
                     n_iter: int = 2000, seed: int = 0, *, n_leapfrog: int = 10,
                     target_accept: float = 0.8, method: str = "hmc", init=None,
                     map_restarts: int = 4, jitter: float = 0.05,
                     max_divergence_rate: float = 0.2,
                     posterior: Posterior | None = None) -> PosteriorDraws:
    """Draw ``n_iter - n_warmup`` post-warmup samples from each of ``n_chains`` chains.

    Chains start from the MAP estimate (or ``init``) plus Gaussian jitter of
    scale ``jitter`` in unconstrained space. Draws are mapped back to the
    constrained space and canonically relabeled before diagnostics.
    """
    if n_iter <= n_warmup:
        raise ValueError("n_iter must exceed n_warmup")
    if n_chains < 1:
        raise ValueError("need at least one chain")
    if method not in ("hmc", "rwm"):
        raise ValueError(f"unknown sampler {method!r}")
    post = posterior or Posterior(ds, spec)
    if init is None:
        map_fit = fit_map(ds, spec, seed=seed, n_restarts=map_restarts, posterior=post)
        theta_map, map_value = map_fit.theta, map_fit.log_posterior
    else:
        theta_map = post.unconstrain(init) if isinstance(init, ModelParams) else np.asarray(init, dtype=float)
        map_value = post.logp(theta_map)

    seqs = np.random.SeedSequence(seed).spawn(n_chains)
    thetas, chain_ids, stats = [], [], []
    for c, sq in enumerate(seqs):
        jitter_seq, chain_seq = sq.spawn(2)
        start = theta_map + jitter * np.random.default_rng(jitter_seq).standard_normal(theta_map.size)
        if not np.isfinite(post.logp(start)):
            start = theta_map
        if method == "hmc":
            res = hmc_chain(post._logp_impl, start, n_warmup=n_warmup, n_iter=n_iter, seed=chain_seq,
                            n_leapfrog=n_leapfrog, target_accept=target_accept)
        else:
            res = rwm_chain(post._logp_impl, start, n_warmup=n_warmup, n_iter=n_iter, seed=chain_seq)
        log.info("chain %d: step size %.4g, accept %.3f, divergences %d/%d",
                 c + 1, res.step_size, res.accept_stat.mean(), res.divergent.sum(), res.divergent.size)
        if res.divergence_rate > max_divergence_rate:
            raise SamplerError(
                f"chain {c + 1}: {100 * res.divergence_rate:.1f}% of transitions diverged; "
                "use a smaller step size (raise target_accept) or more leapfrog steps")
        thetas.append(res.samples)
        chain_ids.append(np.full(res.samples.shape[0], c))
        stats.append({"step_size": res.step_size, "mean_accept": float(res.accept_stat.mean()),
                      "divergences": int(res.divergent.sum()),
                      "warmup_divergences": res.warmup_divergences,
                      "mean_log_posterior": float(res.logp.mean())})

    draws = [relabel_params(p) for p in post.constrain_batch(np.concatenate(thetas))]
    out = PosteriorDraws(draws, np.concatenate(chain_ids), n_warmup)
    out.diagnostics = out.compute_diagnostics()
    out.diagnostics.update({"chains": stats, "map_log_posterior": float(map_value), "method": method,
                            "n_leapfrog": n_leapfrog})
    if not out.diagnostics["converged"]:
        log.warning("max split R-hat %.4f exceeds %.2f", out.diagnostics["max_rhat"], RHAT_THRESHOLD)
    return out
