"""Log-posterior in unconstrained space and multi-start MAP estimation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np
from scipy.optimize import minimize

from ..data import Dataset, ModelSpec
from ..hmm import observation_index
from ..mixture import ModelParams, QRTransform, qr_reparameterize
from . import likelihood
from .prior import prior_terms
from .transforms import ParamLayout, constrain, unconstrain

log = logging.getLogger(__name__)


class NumericalError(ArithmeticError):
    """Non-finite log-posterior; ``block`` names the offending parameter block."""

    def __init__(self, message: str, block: str | None = None):
        self.block = block
        super().__init__(message if block is None else f"{message} (parameter block: {block})")


class Posterior:
    """Log-posterior of a dataset under a model spec, with exact gradients.

    Slopes are sampled in QR space of the centered design matrix; the
    returned :class:`ModelParams` carry slopes mapped back to the original
    (centered) risk-factor space.
    """

    def __init__(self, ds: Dataset, spec: ModelSpec):
        if (spec.MP, spec.MD) != (ds.MP, ds.MD):
            raise ValueError("model support maxima differ from the dataset's")
        self.ds = ds
        self.spec = spec
        self.layout = ParamLayout(spec.K, spec.S, ds.P, spec.copula)
        if ds.N:
            self.qr = qr_reparameterize(ds.X)
        else:
            self.qr = QRTransform(np.zeros((0, ds.P)), np.eye(ds.P))
        ip, id_ = observation_index(ds.yp, ds.yd, ds.MP, ds.MD)
        self._obs = jnp.asarray(ip * (ds.MD + 2) + id_, dtype=jnp.int32)
        self._Q = jnp.asarray(self.qr.Q)
        self._logp = jax.jit(self._logp_impl)
        self._vg = jax.jit(jax.value_and_grad(self._logp_impl))
        self._terms = jax.jit(self._terms_impl)
        self._constrain_batch = jax.jit(jax.vmap(lambda th: constrain(self.layout, th)[0]))

    @property
    def dim(self) -> int:
        return self.layout.size

    def _terms_impl(self, theta):
        blocks, log_jac = constrain(self.layout, theta)
        terms = prior_terms(blocks, self.spec.priors, self.spec.copula)
        if self.ds.N:
            terms["likelihood"] = likelihood.mixture_loglik(
                blocks, self._Q, self._obs, self.ds.MP, self.ds.MD, self.spec.copula)
        else:
            terms["likelihood"] = jnp.zeros(())
        terms["jacobian"] = log_jac
        return terms

    def _logp_impl(self, theta):
        terms = self._terms_impl(theta)
        return sum(terms[k] for k in sorted(terms))

    def logp(self, theta) -> float:
        return float(self._logp(jnp.asarray(theta, dtype=jnp.float64)))

    def value_and_grad(self, theta) -> tuple[float, np.ndarray]:
        v, g = self._vg(jnp.asarray(theta, dtype=jnp.float64))
        return float(v), np.asarray(g)

    def terms(self, theta) -> dict[str, float]:
        return {k: float(v) for k, v in self._terms(jnp.asarray(theta, dtype=jnp.float64)).items()}

    def checked_logp(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(theta)):
            bad = int(np.flatnonzero(~np.isfinite(theta))[0])
            raise NumericalError("non-finite unconstrained parameter", self.layout.block_of(bad))
        terms = self.terms(theta)
        for name, value in terms.items():
            if not np.isfinite(value):
                raise NumericalError("non-finite log-posterior term", name)
        return float(sum(terms[k] for k in sorted(terms)))

    def constrain(self, theta) -> ModelParams:
        return self.constrain_batch(np.asarray(theta, dtype=float)[None])[0]

    def constrain_batch(self, thetas) -> list[ModelParams]:
        b = {k: np.asarray(v) for k, v in self._constrain_batch(jnp.asarray(thetas, dtype=jnp.float64)).items()}
        out = []
        for m in range(b["alpha"].shape[0]):
            out.append(ModelParams(
                alpha=b["alpha"][m],
                beta=self.qr.recover_beta(b["beta_tilde"][m]),
                pi=np.exp(b["log_pi"][m]),
                Phi=np.exp(b["log_Phi"][m]),
                lambda_p=b["lambda_p"][m],
                lambda_d=b["lambda_d"][m],
                rho=1.0 + b["rho_tilde"][m],
                copula=self.spec.copula, MP=self.spec.MP, MD=self.spec.MD,
            ))
        return out

    def unconstrain(self, params: ModelParams) -> np.ndarray:
        if (params.K, params.S, params.P) != (self.layout.K, self.layout.S, self.layout.P):
            raise ValueError("parameter dimensions do not match the posterior layout")
        return unconstrain(self.layout, params.alpha, self.qr.to_tilde(params.beta), params.pi,
                           params.Phi, params.lambda_p, params.lambda_d, params.rho)


_CACHE: dict = {}


def _posterior_for(ds: Dataset, spec: ModelSpec) -> Posterior:
    key = (id(ds), spec)
    post = _CACHE.get(key)
    if post is None or post.ds is not ds:
        if len(_CACHE) > 8:
            _CACHE.clear()
        post = _CACHE[key] = Posterior(ds, spec)
    return post


def log_posterior(u, ds: Dataset, spec: ModelSpec) -> float:
    """Unnormalized log-posterior at unconstrained point ``u``, Jacobians included."""
    return _posterior_for(ds, spec).checked_logp(u)


@dataclass
class MapResult:
    params: ModelParams
    theta: np.ndarray
    log_posterior: float
    grad_norm: float
    n_converged: int
    restarts: list[float]


def initial_params(ds: Dataset, spec: ModelSpec, rng: np.random.Generator) -> ModelParams:
    """Random data-informed start: rates spread over observed symptom quantiles."""
    K, S, P = spec.K, spec.S, ds.P

    def rates(y, M):
        obs = y[y >= 0]
        qs = np.linspace(0.85, 0.15, S) if S > 1 else np.array([0.5])
        base = np.quantile(obs, qs) if obs.size else np.full(S, M / 3)
        base = np.clip(base, 0.2, M) + 0.2
        jit = rng.lognormal(0.0, 0.35, size=(K, S))
        return np.sort(base[None, :] * jit, axis=1)[:, ::-1]

    Phi = np.stack([0.75 * np.eye(S) + 0.25 * rng.dirichlet(np.ones(S), size=S) for _ in range(K)])
    Phi = Phi / Phi.sum(-1, keepdims=True)
    return ModelParams(
        alpha=np.concatenate([[0.0], rng.normal(0, 0.3, K - 1)]),
        beta=np.vstack([np.zeros((1, P)), rng.normal(0, 0.02, (K - 1, P))]),
        pi=rng.dirichlet(np.full(S, 3.0), size=K),
        Phi=Phi,
        lambda_p=rates(ds.yp, ds.MP),
        lambda_d=rates(ds.yd, ds.MD),
        rho=1.0 + rng.uniform(0.2, 1.0, K),
        copula=spec.copula, MP=spec.MP, MD=spec.MD,
    )


def fit_map(ds: Dataset, spec: ModelSpec, init=None, *, seed: int = 0, n_restarts: int = 10,
            maxiter: int = 3000, gtol: float = 1e-5, posterior: Posterior | None = None) -> MapResult:
    """Best of ``n_restarts`` L-BFGS ascents of the log-posterior.

    ``init`` may be a ModelParams or an unconstrained vector; it is used as
    the first start and the remaining starts are random.
    """
    if ds.N == 0:
        raise ValueError("cannot fit a model to an empty dataset")
    post = posterior or Posterior(ds, spec)
    rng = np.random.default_rng(seed)

    def objective(theta):
        v, g = post.value_and_grad(theta)
        if not np.isfinite(v) or not np.all(np.isfinite(g)):
            return np.inf, np.zeros_like(theta)
        return -v, -g

    starts = []
    if init is not None:
        starts.append(post.unconstrain(init) if isinstance(init, ModelParams) else np.asarray(init, dtype=float))
    while len(starts) < max(n_restarts, 1):
        starts.append(post.unconstrain(initial_params(ds, spec, rng)))

    best, values = None, []
    for r, x0 in enumerate(starts):
        res = minimize(objective, x0, jac=True, method="L-BFGS-B",
                       options={"maxiter": maxiter, "gtol": gtol, "maxcor": 20})
        value = -float(res.fun)
        if not np.isfinite(value):
            log.info("restart %d diverged", r)
            values.append(float("nan"))
            continue
        values.append(value)
        log.debug("restart %d: log posterior %.4f after %d iterations", r, value, res.nit)
        if best is None or value > best[1]:
            best = (res.x, value)
    if best is None:
        raise NumericalError("all MAP restarts diverged")
    theta, value = best
    _, grad = post.value_and_grad(theta)
    return MapResult(post.constrain(theta), theta, value, float(np.linalg.norm(grad)),
                     int(np.sum(np.isfinite(values))), values)
