"""Survival Gumbel copula and its independence limit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FAMILIES = ("survival-gumbel", "independence")

_ONE_MINUS = 1.0 - 1e-15


@dataclass(frozen=True)
class CopulaParam:
    rho: float = 1.0
    family: str = "survival-gumbel"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown copula family {self.family!r}")
        rho = float(self.rho)
        if not np.isfinite(rho) or rho < 1.0:
            raise ValueError(f"copula parameter rho must be finite and >= 1, got {self.rho}")
        object.__setattr__(self, "rho", rho)

    @property
    def effective_rho(self) -> float:
        return 1.0 if self.family == "independence" else self.rho


def gumbel_joint_survival(a, b, rho):
    """exp(-(a^rho + b^rho)^(1/rho)) for a, b in [0, inf].

    With a = -log P(X > x) and b = -log P(Y > y) this is the joint survival
    function P(X > x, Y > y) under the survival Gumbel copula. The linear
    terms of the copula cancel in every rectangle difference, so discrete
    pmfs can be formed from this quantity alone.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if rho == 1.0:
        return np.exp(-(a + b))
    m = np.maximum(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(m > 0, np.minimum(a, b) / np.where(m > 0, m, 1.0), 0.0)
        norm = m * (1.0 + ratio**rho) ** (1.0 / rho)
    norm = np.where(np.isinf(m), np.inf, norm)
    return np.exp(-norm)


def copula_cdf(c: CopulaParam, u, v):
    """C(u, v) = u + v - 1 + exp(-((-log(1-u))^rho + (-log(1-v))^rho)^(1/rho)).

    Vectorized over ``u`` and ``v``. Boundary values use the copula's
    limits; the result is clamped to the Frechet-Hoeffding bounds.
    """
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    if np.any((u < 0) | (u > 1) | (v < 0) | (v > 1)) or np.any(np.isnan(u) | np.isnan(v)):
        raise ValueError("copula arguments must lie in [0, 1]")
    rho = c.effective_rho
    uc = np.minimum(u, _ONE_MINUS)
    vc = np.minimum(v, _ONE_MINUS)
    a = -np.log1p(-uc)
    b = -np.log1p(-vc)
    out = uc + vc - 1.0 + gumbel_joint_survival(a, b, rho)
    out = np.where(u >= _ONE_MINUS, v, out)
    out = np.where(v >= _ONE_MINUS, u, out)
    out = np.where((u <= 0) | (v <= 0), 0.0, out)
    out = np.clip(out, np.maximum(u + v - 1.0, 0.0), np.minimum(u, v))
    return out if out.ndim else float(out)


def lower_tail_coefficient(c: CopulaParam) -> float:
    return 2.0 - 2.0 ** (1.0 / c.effective_rho)


def _positive_stable(alpha: float, rng: np.random.Generator, size) -> np.ndarray:
    # Kanter's representation; Laplace transform exp(-s^alpha), alpha in (0, 1].
    theta = rng.uniform(0.0, np.pi, size)
    w = rng.standard_exponential(size)
    if alpha == 1.0:
        return np.ones(size)
    return (np.sin(alpha * theta) / np.sin(theta) ** (1.0 / alpha)) * (
        np.sin((1.0 - alpha) * theta) / w
    ) ** ((1.0 - alpha) / alpha)


def copula_sample(c: CopulaParam, rng: np.random.Generator, size=None):
    """Draw (u, v) from the survival Gumbel copula.

    Marshall-Olkin: a positive stable mixing variable V gives
    Gumbel pairs exp(-(E_i / V)^(1/rho)); reflecting them yields the
    survival copula. Returns two arrays shaped like ``size`` (floats when
    ``size`` is None). The number of draws taken from ``rng`` does not
    depend on rho.
    """
    shape = () if size is None else (size if isinstance(size, tuple) else (int(size),))
    alpha = 1.0 / c.effective_rho
    v_mix = _positive_stable(alpha, rng, shape)
    e = rng.standard_exponential((2, *shape))
    # 1 - exp(-(E/V)^alpha), i.e. the reflected Gumbel draw
    u = -np.expm1(-((e[0] / v_mix) ** alpha))
    v = -np.expm1(-((e[1] / v_mix) ** alpha))
    # keep strictly inside (0, 1)
    tiny = np.finfo(float).tiny
    u = np.clip(u, tiny, 1.0 - 2**-53)
    v = np.clip(v, tiny, 1.0 - 2**-53)
    if size is None:
        return float(u), float(v)
    return u, v
