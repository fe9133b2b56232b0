"""Fixed-length Hamiltonian Monte Carlo with warmup adaptation.

Step size follows dual averaging; a diagonal inverse mass matrix is
estimated over doubling warmup windows. No tree building: every
transition takes ``n_leapfrog`` steps. A random-walk Metropolis chain is
provided for debugging targets.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

log = logging.getLogger(__name__)

MAX_ENERGY_ERROR = 1000.0


@dataclass
class ChainResult:
    samples: np.ndarray  # (n_draws, D), post-warmup
    logp: np.ndarray
    accept_stat: np.ndarray
    divergent: np.ndarray
    step_size: float
    inv_mass: np.ndarray
    warmup_divergences: int

    @property
    def divergence_rate(self) -> float:
        return float(self.divergent.mean()) if self.divergent.size else 0.0


@functools.lru_cache(maxsize=32)
def _compiled(logp_fn):
    vg = jax.value_and_grad(logp_fn)

    def trajectory(theta, p, lp, g, eps, inv_mass, n_steps, args):
        def body(_, state):
            th, mom, _, grad = state
            mom = mom + 0.5 * eps * grad
            th = th + eps * inv_mass * mom
            val, grad = vg(th, *args)
            mom = mom + 0.5 * eps * grad
            return th, mom, val, grad

        return jax.lax.fori_loop(0, n_steps, body, (theta, p, lp, g))

    return jax.jit(vg), jax.jit(trajectory)


def _hamiltonian(lp, p, inv_mass):
    with np.errstate(over="ignore", invalid="ignore"):  # blown-up trajectories count as divergent
        return -lp + 0.5 * float(np.sum(inv_mass * p * p))


class _DualAveraging:
    def __init__(self, step_size: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.restart(step_size)

    def restart(self, step_size: float):
        self.mu = math.log(10.0 * step_size)
        self.h_bar = 0.0
        self.log_eps_bar = 0.0
        self.m = 0
        self.log_eps = math.log(step_size)

    def update(self, accept: float) -> float:
        self.m += 1
        w = 1.0 / (self.m + self.t0)
        self.h_bar = (1 - w) * self.h_bar + w * (self.target - accept)
        self.log_eps = self.mu - math.sqrt(self.m) / self.gamma * self.h_bar
        mk = self.m ** (-self.kappa)
        self.log_eps_bar = mk * self.log_eps + (1 - mk) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def final(self) -> float:
        return math.exp(self.log_eps_bar)


def _windows(n_warmup: int) -> list[int]:
    """Iteration indices (exclusive ends) at which the mass matrix is re-estimated."""
    if n_warmup < 20:
        return []
    init, term, base = 75, 50, 25
    if init + term + base > n_warmup:
        init, term = int(0.15 * n_warmup), int(0.1 * n_warmup)
        base = n_warmup - init - term
    ends, start, size = [], init, base
    last = n_warmup - term
    while start < last:
        end = start + size
        if end + 2 * size > last:
            end = last
        ends.append(end)
        start, size = end, 2 * size
    return ends


def hmc_chain(logp_fn, theta0, *, n_warmup: int, n_iter: int, seed, n_leapfrog: int = 10,
              target_accept: float = 0.8, step_size: float | None = None, inv_mass=None,
              adapt_mass: bool = True, jitter: float = 0.1, args: tuple = ()) -> ChainResult:
    """Run one chain of ``n_iter`` transitions, the first ``n_warmup`` adapting.

    ``logp_fn(theta, *args)`` must be jax-traceable. Draws of randomness per
    iteration do not depend on adaptation outcomes, so a longer run with the
    same warmup length and seed reproduces a shorter one as its prefix.
    """
    if n_iter <= n_warmup:
        raise ValueError("n_iter must exceed n_warmup")
    vg, trajectory = _compiled(logp_fn)
    rng = np.random.default_rng(seed)
    theta = np.asarray(theta0, dtype=float).copy()
    D = theta.size
    inv_mass = np.ones(D) if inv_mass is None else np.asarray(inv_mass, dtype=float).copy()
    args = tuple(args)

    lp, g = vg(jnp.asarray(theta), *args)
    lp, g = float(lp), np.asarray(g)
    if not np.isfinite(lp):
        raise FloatingPointError("log density is not finite at the initial point")

    def transition(theta, lp, g, eps, n_steps):
        p0 = rng.standard_normal(D) / np.sqrt(inv_mass)
        h0 = _hamiltonian(lp, p0, inv_mass)
        th1, p1, lp1, g1 = trajectory(jnp.asarray(theta), jnp.asarray(p0), lp, jnp.asarray(g),
                                      eps, jnp.asarray(inv_mass), n_steps, args)
        lp1 = float(lp1)
        p1 = np.asarray(p1)
        h1 = _hamiltonian(lp1, p1, inv_mass) if np.isfinite(lp1) else np.inf
        delta = h1 - h0
        divergent = not np.isfinite(delta) or delta > MAX_ENERGY_ERROR
        accept = 0.0 if divergent else min(1.0, math.exp(-delta))
        return np.asarray(th1), lp1, np.asarray(g1), accept, divergent

    def find_step_size(theta, lp, g, eps):
        # double or halve until a single leapfrog step crosses acceptance 0.5
        _, _, _, a, _ = transition(theta, lp, g, eps, 1)
        direction = 1 if a > 0.5 else -1
        for _ in range(50):
            eps_new = eps * (2.0 ** direction)
            _, _, _, a, _ = transition(theta, lp, g, eps_new, 1)
            if (direction == 1 and not a > 0.5) or (direction == -1 and a > 0.5):
                return eps_new if direction == -1 else eps
            eps = eps_new
        return eps

    if step_size is None:
        step_size = find_step_size(theta, lp, g, 0.1) if n_warmup > 0 else 0.1
    da = _DualAveraging(step_size, target_accept)
    eps = step_size
    window_ends = _windows(n_warmup) if adapt_mass else []
    window_start = 75 if window_ends else 0
    if window_ends and window_ends[0] - 25 < 75:
        window_start = int(0.15 * n_warmup)
    window_samples: list[np.ndarray] = []

    n_draws = n_iter - n_warmup
    samples = np.empty((n_draws, D))
    logps = np.empty(n_draws)
    accepts = np.empty(n_draws)
    divs = np.zeros(n_draws, dtype=bool)
    warm_div = 0
    for it in range(n_iter):
        u_jit = rng.uniform(1.0 - jitter, 1.0 + jitter)
        u_acc = rng.random()
        eps_it = eps * u_jit
        th1, lp1, g1, accept, divergent = transition(theta, lp, g, eps_it, n_leapfrog)
        if not divergent and u_acc < accept:
            theta, lp, g = th1, lp1, g1
        if it < n_warmup:
            warm_div += int(divergent)
            eps = da.update(accept)
            if window_ends and it >= window_start:
                window_samples.append(theta.copy())
                if it + 1 == window_ends[0]:
                    x = np.asarray(window_samples)
                    n = x.shape[0]
                    var = x.var(axis=0, ddof=1) if n > 1 else np.ones(D)
                    inv_mass = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                    window_samples = []
                    window_ends = window_ends[1:]
                    eps = find_step_size(theta, lp, g, eps)
                    da.restart(eps)
            if it + 1 == n_warmup:
                eps = da.final
        else:
            j = it - n_warmup
            samples[j], logps[j], accepts[j], divs[j] = theta, lp, accept, divergent
    log.debug("chain done: step size %.4g, mean accept %.3f, divergences %d",
              eps, accepts.mean(), divs.sum())
    return ChainResult(samples, logps, accepts, divs, eps, inv_mass, warm_div)


def rwm_chain(logp_fn, theta0, *, n_warmup: int, n_iter: int, seed, scale: float = 0.1,
              target_accept: float = 0.234, args: tuple = ()) -> ChainResult:
    """Random-walk Metropolis with Robbins-Monro scale tuning during warmup."""
    if n_iter <= n_warmup:
        raise ValueError("n_iter must exceed n_warmup")
    f = jax.jit(logp_fn)
    rng = np.random.default_rng(seed)
    theta = np.asarray(theta0, dtype=float).copy()
    lp = float(f(jnp.asarray(theta), *args))
    n_draws = n_iter - n_warmup
    samples, logps = np.empty((n_draws, theta.size)), np.empty(n_draws)
    accepts = np.empty(n_draws)
    log_scale = math.log(scale)
    for it in range(n_iter):
        prop = theta + math.exp(log_scale) * rng.standard_normal(theta.size)
        lp_prop = float(f(jnp.asarray(prop), *args))
        a = 0.0 if not np.isfinite(lp_prop) else min(1.0, math.exp(min(0.0, lp_prop - lp)))
        if rng.random() < a:
            theta, lp = prop, lp_prop
        if it < n_warmup:
            log_scale += (a - target_accept) / math.sqrt(it + 1.0)
        else:
            j = it - n_warmup
            samples[j], logps[j], accepts[j] = theta, lp, a
    return ChainResult(samples, logps, accepts, np.zeros(n_draws, dtype=bool),
                       math.exp(log_scale), np.ones(theta.size), 0)
