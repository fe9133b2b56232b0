import itertools
import math

import numpy as np
import pytest

from conftest import brute_paths, emission_prob, random_hmm, random_obs
from mhmmx.copula import CopulaParam
from mhmmx.emission import EmissionParams, joint_pmf
from mhmmx.hmm import (
    SubgroupHMM, forward_loglik, path_log_score, prefix_logliks, state_occupancy, viterbi,
    viterbi_decode,
)


def test_forward_matches_enumeration(rng):
    for _ in range(40):
        m = random_hmm(rng)
        T = int(rng.integers(1, 6))
        yp, yd = random_obs(rng, T, 4, 3)
        ref = math.log(sum(brute_paths(m, yp, yd).values()))
        assert forward_loglik(m, yp, yd) == pytest.approx(ref, rel=1e-9)


def test_viterbi_matches_enumeration(rng):
    for _ in range(100):
        m = random_hmm(rng)
        yp, yd = random_obs(rng, 5, 4, 3)
        probs = brute_paths(m, yp, yd)
        best = max(probs.values())
        path, score = viterbi(m, yp, yd)
        assert score == pytest.approx(math.log(best), rel=1e-9)
        assert path_log_score(m, yp, yd, path) == pytest.approx(score, rel=1e-12)


def test_single_state_is_product_of_emissions(rng):
    e = EmissionParams([2.0], [1.0], CopulaParam(1.8), 10, 7)
    m = SubgroupHMM([1.0], [[1.0]], e)
    yp, yd = random_obs(rng, 12, 10, 7, missing=0.0)
    ref = sum(math.log(joint_pmf(e, 0, a, b)) for a, b in zip(yp, yd))
    assert forward_loglik(m, yp, yd) == pytest.approx(ref, rel=1e-12)
    assert np.all(viterbi_decode(m, yp, yd) == 0)


def test_all_missing_is_zero(rng):
    m = random_hmm(rng)
    assert forward_loglik(m, [-1] * 6, [-1] * 6) == 0.0


def test_missing_step_marginalizes(rng):
    m = random_hmm(rng, MP=3, MD=2)
    yp, yd = random_obs(rng, 4, 3, 2, missing=0.0)
    # fully missing step 2
    total = 0.0
    for a in range(4):
        for b in range(3):
            yp2, yd2 = yp.copy(), yd.copy()
            yp2[2], yd2[2] = a, b
            total += math.exp(forward_loglik(m, yp2, yd2))
    yp_m, yd_m = yp.copy(), yd.copy()
    yp_m[2] = yd_m[2] = -1
    assert forward_loglik(m, yp_m, yd_m) == pytest.approx(math.log(total), rel=1e-9)
    # half missing: disability absent at step 1
    total = 0.0
    for b in range(3):
        yd2 = yd.copy()
        yd2[1] = b
        total += math.exp(forward_loglik(m, yp, yd2))
    yd_h = yd.copy()
    yd_h[1] = -1
    assert forward_loglik(m, yp, yd_h) == pytest.approx(math.log(total), rel=1e-9)


def test_state_permutation_invariance(rng):
    m = random_hmm(rng)
    yp, yd = random_obs(rng, 8, 4, 3)
    perm = np.array([2, 0, 1])
    e = m.emissions
    m2 = SubgroupHMM(m.pi[perm], m.Phi[np.ix_(perm, perm)],
                     EmissionParams(e.lambda_p[perm], e.lambda_d[perm], e.copula, e.MP, e.MD))
    assert forward_loglik(m2, yp, yd) == pytest.approx(forward_loglik(m, yp, yd), rel=1e-12)


def test_prefix_monotone_and_viterbi_bound(rng):
    for _ in range(20):
        m = random_hmm(rng)
        yp, yd = random_obs(rng, 10, 4, 3)
        pre = prefix_logliks(m, yp, yd)[0]
        assert pre[0] == 0.0
        assert np.all(np.diff(pre) <= 1e-12)
        assert pre[-1] == pytest.approx(forward_loglik(m, yp, yd), rel=1e-12)
        assert viterbi(m, yp, yd)[1] <= forward_loglik(m, yp, yd) + 1e-12


def test_batched_prefix_matches_single(rng):
    m = random_hmm(rng)
    obs = [random_obs(rng, 7, 4, 3) for _ in range(5)]
    yp = np.stack([o[0] for o in obs])
    yd = np.stack([o[1] for o in obs])
    batch = prefix_logliks(m, yp, yd)
    for i in range(5):
        assert batch[i, -1] == pytest.approx(forward_loglik(m, yp[i], yd[i]), rel=1e-12)


def test_viterbi_follows_strong_evidence():
    e = EmissionParams([8.0, 4.0, 0.3], [6.0, 3.0, 0.2], CopulaParam(1.5), 10, 7)
    Phi = np.full((3, 3), 0.01) + 0.97 * np.eye(3)
    m = SubgroupHMM([1 / 3] * 3, Phi, e)
    states = np.array([0] * 5 + [1] * 5 + [2] * 5)
    yp = np.array([8, 4, 0])[states]
    yd = np.array([6, 3, 0])[states]
    assert np.array_equal(viterbi_decode(m, yp, yd), states)


def test_viterbi_tie_breaks_low():
    e = EmissionParams([2.0, 2.0], [1.0, 1.0], CopulaParam(1.0), 5, 5)
    m = SubgroupHMM([0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]], e)
    assert np.array_equal(viterbi_decode(m, [1, 2, 3], [0, 1, 2]), [0, 0, 0])


def test_malformed_trajectory(rng):
    m = random_hmm(rng)
    with pytest.raises(ValueError):
        forward_loglik(m, [1, 2], [1])
    with pytest.raises(ValueError):
        forward_loglik(m, [9], [0])
    with pytest.raises(ValueError):
        forward_loglik(m, [], [])


def test_hmm_validation():
    e = EmissionParams([1.0, 2.0], [1.0, 2.0], CopulaParam(1.0), 3, 3)
    with pytest.raises(ValueError):
        SubgroupHMM([0.6, 0.6], np.eye(2), e)
    with pytest.raises(ValueError):
        SubgroupHMM([0.5, 0.5], [[0.5, 0.6], [0.5, 0.5]], e)


def test_state_occupancy():
    assert np.array_equal(state_occupancy([[0, 1, 2]], 3), np.eye(3))
    occ = state_occupancy([[0, 1], [1, 1]], 3)
    assert np.allclose(occ[0], [0.5, 0.5, 0.0])
    with pytest.raises(ValueError):
        state_occupancy(np.zeros((0, 4)))


def test_state_occupancy_matches_chain_marginal():
    rng = np.random.default_rng(7)
    pi = np.array([0.6, 0.3, 0.1])
    Phi = np.array([[0.8, 0.15, 0.05], [0.1, 0.8, 0.1], [0.05, 0.15, 0.8]])
    n, T = 5000, 10
    paths = np.empty((n, T), dtype=int)
    paths[:, 0] = rng.choice(3, n, p=pi)
    for t in range(1, T):
        u = rng.random(n)
        paths[:, t] = (u[:, None] > np.cumsum(Phi[paths[:, t - 1]], axis=1)).sum(axis=1)
    occ = state_occupancy(paths, 3)
    marg = pi.copy()
    for t in range(T):
        assert np.max(np.abs(occ[t] - marg)) < 0.03
        marg = marg @ Phi
