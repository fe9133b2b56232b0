"""Subgroup weights, QR reparameterization and the mixture log-likelihood.

Subgroup and state indices are 0-based. Subgroup 0 is the reference
category of the multinomial logit (its intercept and slopes are zero).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .copula import CopulaParam
from .data import DEFAULT_MD, DEFAULT_MP, Dataset
from .emission import EmissionParams
from .hmm import SubgroupHMM, prefix_logliks


class RankDeficiencyError(ValueError):
    pass


@dataclass(frozen=True)
class WeightParams:
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        beta = np.array(self.beta, dtype=float).reshape(alpha.shape[0], -1)
        if alpha[0] != 0.0 or np.any(beta[0] != 0.0):
            raise ValueError("subgroup 0 is the reference: alpha[0] and beta[0] must be exactly zero")
        alpha.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def K(self) -> int:
        return self.alpha.shape[0]

    @property
    def P(self) -> int:
        return self.beta.shape[1]


def log_subgroup_weights(w: WeightParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != w.P:
        raise ValueError(f"risk-factor vector has {x.shape[-1]} entries, model expects {w.P}")
    scores = w.alpha + x @ w.beta.T
    return scores - logsumexp(scores, axis=-1, keepdims=True)


def subgroup_weights(w: WeightParams, x) -> np.ndarray:
    """Multinomial-logit subgroup probabilities for one (P,) or many (N, P) patients."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != w.P:
        raise ValueError(f"risk-factor vector has {x.shape[-1]} entries, model expects {w.P}")
    scores = w.alpha + x @ w.beta.T
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class QRTransform:
    """Thin QR of the centered design matrix; beta_tilde = R @ beta."""

    Q: np.ndarray
    R: np.ndarray

    @property
    def P(self) -> int:
        return self.R.shape[0]

    def to_tilde(self, beta) -> np.ndarray:
        return np.asarray(beta, dtype=float) @ self.R.T

    def recover_beta(self, beta_tilde) -> np.ndarray:
        """Solve R @ beta = beta_tilde row-wise by back substitution."""
        bt = np.asarray(beta_tilde, dtype=float)
        if self.P == 0:
            return bt.copy()
        return solve_triangular(self.R, bt.T, lower=False).T


def qr_reparameterize(X, rtol: float = 1e-10) -> QRTransform:
    X = np.asarray(X, dtype=float)
    N, P = X.shape
    if N < P:
        raise RankDeficiencyError(f"need at least as many patients as risk factors (N={N} < P={P})")
    Q, R = np.linalg.qr(X, mode="reduced")
    # sign convention: positive diagonal of R
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    Q = Q * signs
    R = R * signs[:, None]
    scale = max(np.max(np.abs(R)) if R.size else 0.0, 1e-300)
    for j in range(P):
        if abs(R[j, j]) <= rtol * scale:
            coef = solve_triangular(R[:j, :j], R[:j, j]) if j else np.zeros(0)
            involved = [i for i in range(j) if abs(coef[i]) > 1e-8]
            raise RankDeficiencyError(
                f"design matrix is rank deficient: column {j} is a linear combination of columns {involved}"
            )
    return QRTransform(Q, R)


@dataclass(frozen=True)
class MixtureModel:
    weights: WeightParams
    hmms: tuple[SubgroupHMM, ...]

    def __post_init__(self):
        object.__setattr__(self, "hmms", tuple(self.hmms))
        if len(self.hmms) != self.weights.K:
            raise ValueError(f"{len(self.hmms)} HMMs for K={self.weights.K} subgroups")

    @property
    def K(self) -> int:
        return self.weights.K


@dataclass(frozen=True)
class ModelParams:
    """One full parameterization as stacked arrays.

    Shapes: alpha (K,), beta (K, P) in centered risk-factor space, pi (K, S),
    Phi (K, S, S), lambda_p / lambda_d (K, S), rho (K,).
    """

    alpha: np.ndarray
    beta: np.ndarray
    pi: np.ndarray
    Phi: np.ndarray
    lambda_p: np.ndarray
    lambda_d: np.ndarray
    rho: np.ndarray
    copula: str = "survival-gumbel"
    MP: int = DEFAULT_MP
    MD: int = DEFAULT_MD

    FIELDS = ("alpha", "beta", "pi", "Phi", "lambda_p", "lambda_d", "rho")

    def __post_init__(self):
        for name in self.FIELDS:
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        K, S = self.pi.shape
        if self.beta.ndim != 2:
            object.__setattr__(self, "beta", self.beta.reshape(K, -1))
        expected = {"alpha": (K,), "pi": (K, S), "Phi": (K, S, S), "lambda_p": (K, S),
                    "lambda_d": (K, S), "rho": (K,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.beta.shape[0] != K:
            raise ValueError("beta must have one row per subgroup")

    @property
    def K(self) -> int:
        return self.pi.shape[0]

    @property
    def S(self) -> int:
        return self.pi.shape[1]

    @property
    def P(self) -> int:
        return self.beta.shape[1]

    @property
    def weights(self) -> WeightParams:
        return WeightParams(self.alpha, self.beta)

    def emissions(self, k: int) -> EmissionParams:
        rho = 1.0 if self.copula == "independence" else float(self.rho[k])
        return EmissionParams(self.lambda_p[k], self.lambda_d[k], CopulaParam(rho, self.copula), self.MP, self.MD)

    def hmm(self, k: int) -> SubgroupHMM:
        pi = self.pi[k] / self.pi[k].sum()
        Phi = self.Phi[k] / self.Phi[k].sum(axis=1, keepdims=True)
        return SubgroupHMM(pi, Phi, self.emissions(k))

    def to_mixture(self) -> MixtureModel:
        return MixtureModel(self.weights, tuple(self.hmm(k) for k in range(self.K)))

    @classmethod
    def from_mixture(cls, m: MixtureModel) -> "ModelParams":
        e0 = m.hmms[0].emissions
        return cls(
            m.weights.alpha, m.weights.beta,
            np.stack([h.pi for h in m.hmms]), np.stack([h.Phi for h in m.hmms]),
            np.stack([h.emissions.lambda_p for h in m.hmms]),
            np.stack([h.emissions.lambda_d for h in m.hmms]),
            np.array([h.emissions.copula.rho for h in m.hmms]),
            e0.copula.family, e0.MP, e0.MD,
        )

    def replace(self, **changes) -> "ModelParams":
        d = {name: getattr(self, name) for name in (*self.FIELDS, "copula", "MP", "MD")}
        d.update(changes)
        return ModelParams(**d)

    def to_dict(self) -> dict:
        d = {name: getattr(self, name).tolist() for name in self.FIELDS}
        d.update(copula=self.copula, MP=self.MP, MD=self.MD)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(**{k: d[k] for k in (*cls.FIELDS, "copula", "MP", "MD")})


def _as_mixture(model) -> MixtureModel:
    return model.to_mixture() if isinstance(model, ModelParams) else model


def component_prefix_logliks(model, yp, yd) -> np.ndarray:
    """log P(y_1..y_t | m^k) for every patient, subgroup and prefix length: (N, K, T+1)."""
    model = _as_mixture(model)
    return np.stack([prefix_logliks(h, yp, yd) for h in model.hmms], axis=1)


def component_logliks(model, yp, yd) -> np.ndarray:
    """Full-trajectory log-likelihood per patient and subgroup: (N, K)."""
    return component_prefix_logliks(model, yp, yd)[:, :, -1]


def patient_logliks(model, ds: Dataset) -> np.ndarray:
    model = _as_mixture(model)
    if ds.N == 0:
        return np.zeros(0)
    if ds.P != model.weights.P:
        raise ValueError(f"dataset has {ds.P} risk factors, model expects {model.weights.P}")
    log_w = log_subgroup_weights(model.weights, ds.X)
    return logsumexp(log_w + component_logliks(model, ds.yp, ds.yd), axis=1)


def mixture_loglik(model, ds: Dataset) -> float:
    """sum_i log sum_k w_i^k P(trajectory_i | m^k), with a fixed summation order."""
    return float(np.sum(patient_logliks(model, ds)))
