"""Bijection between the flat unconstrained vector and constrained parameters.

Layout, in order: alpha[1:] (K-1), beta_tilde[1:] (K-1, P), stick-breaking
coordinates of pi (K, S-1) and of every Phi row (K, S, S-1), log lambda_p
(K, S), log lambda_d (K, S) and, for the survival Gumbel family,
log(rho - 1) (K,).
"""

from __future__ import annotations

from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np
from jax.nn import log_sigmoid


@dataclass(frozen=True)
class ParamLayout:
    K: int
    S: int
    P: int
    copula: str = "survival-gumbel"

    @property
    def blocks(self) -> list[tuple[str, tuple[int, ...]]]:
        K, S, P = self.K, self.S, self.P
        out = [
            ("alpha", (K - 1,)),
            ("beta_tilde", (K - 1, P)),
            ("pi", (K, S - 1)),
            ("Phi", (K, S, S - 1)),
            ("log_lambda_p", (K, S)),
            ("log_lambda_d", (K, S)),
        ]
        if self.copula == "survival-gumbel":
            out.append(("log_rho_tilde", (K,)))
        return out

    @property
    def size(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.blocks)

    def slices(self) -> dict[str, tuple[slice, tuple[int, ...]]]:
        out, start = {}, 0
        for name, shape in self.blocks:
            n = int(np.prod(shape))
            out[name] = (slice(start, start + n), shape)
            start += n
        return out

    def unpack(self, theta) -> dict:
        return {name: theta[..., sl].reshape(*theta.shape[:-1], *shape)
                for name, (sl, shape) in self.slices().items()}

    def pack(self, blocks: dict) -> np.ndarray:
        return np.concatenate([np.asarray(blocks[name], dtype=float).reshape(-1) for name, _ in self.blocks])

    def block_of(self, index: int) -> str:
        for name, (sl, _) in self.slices().items():
            if sl.start <= index < sl.stop:
                return name
        raise IndexError(index)


def stick_breaking(y):
    """Map (..., S-1) reals to the log of a point on the S-simplex.

    Returns (log_x, log_jacobian). Zero input maps to the uniform simplex.
    """
    n = y.shape[-1]
    if n == 0:  # one-point simplex
        return jnp.zeros(y.shape[:-1] + (1,)), jnp.zeros(y.shape[:-1])
    offsets = jnp.log(jnp.arange(n, 0, -1.0))
    z = y - offsets
    log_z = log_sigmoid(z)
    log_1mz = log_sigmoid(-z)
    cum = jnp.cumsum(log_1mz, axis=-1)
    log_rem = jnp.concatenate([jnp.zeros(y.shape[:-1] + (1,)), cum[..., :-1]], axis=-1)
    log_x = jnp.concatenate([log_z + log_rem, cum[..., -1:]], axis=-1)
    log_jac = jnp.sum(log_z + log_1mz + log_rem, axis=-1)
    return log_x, log_jac


def inverse_stick_breaking(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x = x / x.sum(axis=-1, keepdims=True)
    n = x.shape[-1] - 1
    rem = 1.0 - np.concatenate([np.zeros(x.shape[:-1] + (1,)), np.cumsum(x[..., :-1], axis=-1)], axis=-1)
    z = x[..., :n] / rem[..., :n]
    offsets = np.log(np.arange(n, 0, -1.0))
    return np.log(z) - np.log1p(-z) + offsets


def constrain(layout: ParamLayout, theta):
    """Unconstrained vector -> dict of constrained blocks plus the total log-Jacobian.

    Works on jax or numpy input. beta stays in the QR (tilde) space.
    """
    b = layout.unpack(theta)
    K, P = layout.K, layout.P
    alpha = jnp.concatenate([jnp.zeros(1), b["alpha"]])
    beta_tilde = jnp.concatenate([jnp.zeros((1, P)), b["beta_tilde"]], axis=0)
    log_pi, jac_pi = stick_breaking(b["pi"])
    log_Phi, jac_Phi = stick_breaking(b["Phi"])
    lam_p = jnp.exp(b["log_lambda_p"])
    lam_d = jnp.exp(b["log_lambda_d"])
    log_jac = jnp.sum(jac_pi) + jnp.sum(jac_Phi) + jnp.sum(b["log_lambda_p"]) + jnp.sum(b["log_lambda_d"])
    if layout.copula == "survival-gumbel":
        rho_tilde = jnp.exp(b["log_rho_tilde"])
        log_jac = log_jac + jnp.sum(b["log_rho_tilde"])
    else:
        rho_tilde = jnp.zeros(K)
    return {
        "alpha": alpha, "beta_tilde": beta_tilde, "log_pi": log_pi, "log_Phi": log_Phi,
        "lambda_p": lam_p, "lambda_d": lam_d, "rho_tilde": rho_tilde,
    }, log_jac


def unconstrain(layout: ParamLayout, alpha, beta_tilde, pi, Phi, lambda_p, lambda_d, rho) -> np.ndarray:
    blocks = {
        "alpha": np.asarray(alpha, dtype=float)[1:] - float(np.asarray(alpha)[0]),
        "beta_tilde": np.asarray(beta_tilde, dtype=float).reshape(layout.K, layout.P)[1:],
        "pi": inverse_stick_breaking(pi),
        "Phi": inverse_stick_breaking(Phi),
        "log_lambda_p": np.log(lambda_p),
        "log_lambda_d": np.log(lambda_d),
    }
    if layout.copula == "survival-gumbel":
        rho = np.asarray(rho, dtype=float)
        if np.any(rho <= 1.0):
            raise ValueError("survival Gumbel parameters must exceed 1 for the log(rho - 1) transform")
        blocks["log_rho_tilde"] = np.log(rho - 1.0)
    return layout.pack(blocks)
