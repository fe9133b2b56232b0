import itertools

import numpy as np
import pytest

from mhmmx.copula import CopulaParam
from mhmmx.emission import EmissionParams, joint_pmf, trunc_poisson_pmf
from mhmmx.hmm import SubgroupHMM
from mhmmx.mixture import ModelParams


def random_hmm(rng, S=3, MP=4, MD=3, rho=None):
    lp = rng.uniform(0.3, 4.0, S)
    ld = rng.uniform(0.3, 3.0, S)
    rho = rng.uniform(1.0, 4.0) if rho is None else rho
    e = EmissionParams(lp, ld, CopulaParam(rho), MP, MD)
    return SubgroupHMM(rng.dirichlet(np.ones(S)), rng.dirichlet(np.ones(S), size=S), e)


def random_params(rng, K=2, S=3, P=2, MP=4, MD=3):
    return ModelParams(
        alpha=np.concatenate([[0.0], rng.normal(0, 1, K - 1)]),
        beta=np.vstack([np.zeros((1, P)), rng.normal(0, 0.5, (K - 1, P))]),
        pi=rng.dirichlet(np.ones(S), size=K),
        Phi=rng.dirichlet(np.ones(S), size=(K, S)),
        lambda_p=rng.uniform(0.3, 4.0, (K, S)),
        lambda_d=rng.uniform(0.3, 3.0, (K, S)),
        rho=rng.uniform(1.0, 3.0, K),
        MP=MP, MD=MD,
    )


def emission_prob(e, s, yp, yd):
    """Single-step emission probability straight from the inclusion-exclusion formula."""
    if yp < 0 and yd < 0:
        return 1.0
    if yd < 0:
        return trunc_poisson_pmf(e.lambda_p[s], e.MP)[yp]
    if yp < 0:
        return trunc_poisson_pmf(e.lambda_d[s], e.MD)[yd]
    return joint_pmf(e, s, yp, yd)


def brute_paths(m, yp, yd):
    """Linear-space probability of every state path: dict path -> P(path, y)."""
    S, T = m.S, len(yp)
    b = [[emission_prob(m.emissions, s, yp[t], yd[t]) for s in range(S)] for t in range(T)]
    out = {}
    for path in itertools.product(range(S), repeat=T):
        p = m.pi[path[0]]
        for t in range(1, T):
            p *= m.Phi[path[t - 1], path[t]]
        for t in range(T):
            p *= b[t][path[t]]
        out[path] = p
    return out


def random_obs(rng, T, MP, MD, missing=0.2):
    yp = rng.integers(0, MP + 1, T)
    yd = rng.integers(0, MD + 1, T)
    yp[rng.random(T) < missing] = -1
    yd[rng.random(T) < missing] = -1
    return yp, yd


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(X, yp, yd, MP=4, MD=3):
    """Dataset whose centered design matrix equals ``X`` (zero centering)."""
    from mhmmx.data import Column, Dataset, PatientRecord, RiskFactorEncoding

    X = np.asarray(X, dtype=float)
    yp, yd = np.atleast_2d(yp), np.atleast_2d(yd)
    P = X.shape[1]
    enc = RiskFactorEncoding(tuple(Column(f"x{j + 1}", "numeric") for j in range(P)), (0.0,) * P)
    patients = tuple(PatientRecord(f"id{i}", X[i], yp[i], yd[i]) for i in range(X.shape[0]))
    return Dataset(patients, enc, yp.shape[1], MP, MD)
