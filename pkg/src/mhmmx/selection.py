"""Model comparison over (K, S) by log pointwise predictive density."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .data import Dataset, ModelSpec, PriorSettings
from .mixture import MixtureModel, ModelParams, patient_logliks

log = logging.getLogger(__name__)


def _draw_list(draws) -> list:
    if isinstance(draws, (ModelParams, MixtureModel)):
        return [draws]
    out = list(draws)
    if not out:
        raise ValueError("lpd needs at least one draw")
    return out


def pointwise_log_density(draws, ds: Dataset) -> np.ndarray:
    """Per-patient log of the draw-averaged trajectory likelihood: (N,)."""
    draws = _draw_list(draws)
    if ds.N == 0:
        raise ValueError("lpd needs at least one patient")
    ll = np.stack([patient_logliks(d, ds) for d in draws])  # (M, N)
    return logsumexp(ll, axis=0) - np.log(ll.shape[0])


def lpd(draws, ds: Dataset, deviance: bool = True) -> float:
    """Sum over patients of log mean_m P(trajectory_i | theta_m, x_i).

    On the deviance scale (default) the value is multiplied by -2, so lower
    is better.
    """
    value = float(np.sum(pointwise_log_density(draws, ds)))
    return -2.0 * value if deviance else value


@dataclass(frozen=True)
class SelectionConfig:
    mode: str = "mcmc"  # or "map"
    n_chains: int = 1
    n_warmup: int = 500
    n_iter: int = 1500
    n_leapfrog: int = 10
    map_restarts: int = 4
    max_draws: int | None = 200  # draws used for lpd, thinned evenly
    seed: int = 0
    copula: str = "survival-gumbel"
    priors: PriorSettings = field(default_factory=PriorSettings)

    def __post_init__(self):
        if self.mode not in ("map", "mcmc"):
            raise ValueError(f"unknown fit mode {self.mode!r}")


@dataclass
class LpdReport:
    K: int
    S: int
    in_sample: float
    out_of_sample: float
    deviance: bool = True
    n_draws: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and np.isfinite(self.out_of_sample)


def fit_spec(ds: Dataset, spec: ModelSpec, cfg: SelectionConfig):
    """Fit one spec; returns a list of ModelParams draws (one for MAP)."""
    from .inference import fit_map, sample_posterior

    if cfg.mode == "map":
        return [fit_map(ds, spec, seed=cfg.seed, n_restarts=cfg.map_restarts).params]
    draws = sample_posterior(ds, spec, n_chains=cfg.n_chains, n_warmup=cfg.n_warmup, n_iter=cfg.n_iter,
                             seed=cfg.seed, n_leapfrog=cfg.n_leapfrog, map_restarts=cfg.map_restarts)
    out = list(draws)
    if cfg.max_draws is not None and len(out) > cfg.max_draws:
        idx = np.unique(np.linspace(0, len(out) - 1, cfg.max_draws).round().astype(int))
        out = [out[i] for i in idx]
    return out


def select_over(ds_train: Dataset, ds_test: Dataset, specs, cfg: SelectionConfig | None = None,
                deviance: bool = True) -> tuple[list[LpdReport], tuple[int, int] | None]:
    """Fit every (K, S) in ``specs`` on the training split and score both splits.

    A failing spec is reported with its error and skipped by the
    recommendation, which is the spec with the lowest out-of-sample deviance.
    """
    cfg = cfg or SelectionConfig()
    specs = [tuple(int(v) for v in s) for s in specs]
    if not specs:
        raise ValueError("no specs to compare")
    reports = []
    for K, S in specs:
        try:
            spec = ModelSpec(K=K, S=S, MP=ds_train.MP, MD=ds_train.MD, priors=cfg.priors, copula=cfg.copula)
            draws = fit_spec(ds_train, spec, cfg)
            reports.append(LpdReport(K, S, lpd(draws, ds_train, deviance), lpd(draws, ds_test, deviance),
                                     deviance, len(draws)))
        except Exception as exc:  # keep sweeping; the failure is part of the report
            log.warning("spec K=%d S=%d failed: %s", K, S, exc)
            reports.append(LpdReport(K, S, float("nan"), float("nan"), deviance, 0,
                                     f"{type(exc).__name__}: {exc}"))
        else:
            log.info("K=%d S=%d: in-sample %.2f, out-of-sample %.2f", K, S,
                     reports[-1].in_sample, reports[-1].out_of_sample)
    return reports, recommend(reports)


def recommend(reports: list[LpdReport]) -> tuple[int, int] | None:
    ok = [r for r in reports if r.ok]
    if not ok:
        return None
    sign = 1.0 if ok[0].deviance else -1.0
    best = min(ok, key=lambda r: sign * r.out_of_sample)
    return best.K, best.S

