import numpy as np
import pytest
from scipy import stats

from mhmmx.emission import joint_pmf_table
from mhmmx.mixture import ModelParams, mixture_loglik, subgroup_weights
from mhmmx.simulate import SimConfig, benchmark_config, benchmark_truth, recovery_report, simulate


def _single_state(rho=1.8):
    return ModelParams(alpha=[0.0], beta=np.zeros((1, 1)), pi=[[1.0]], Phi=[[[1.0]]],
                       lambda_p=[[2.5]], lambda_d=[[1.2]], rho=[rho], MP=6, MD=4)


def test_same_seed_bit_identical():
    a = simulate(benchmark_config(N=20, seed=5))
    b = simulate(benchmark_config(N=20, seed=5))
    c = simulate(benchmark_config(N=20, seed=6))
    assert np.array_equal(a.dataset.yp, b.dataset.yp) and np.array_equal(a.dataset.X, b.dataset.X)
    assert np.array_equal(a.state_paths, b.state_paths)
    assert not np.array_equal(a.dataset.yp, c.dataset.yp)


def test_emission_goodness_of_fit():
    truth = _single_state()
    sim = simulate(SimConfig(N=2000, T=50, truth=truth, n_numeric=1, n_binary=0, seed=1))
    table = joint_pmf_table(truth.emissions(0))[0]
    counts = np.zeros_like(table)
    np.add.at(counts, (sim.dataset.yp.ravel(), sim.dataset.yd.ravel()), 1)
    n = counts.sum()
    assert n == 100_000
    expected = table * n
    keep = expected >= 5
    obs, exp = counts[keep], expected[keep]
    if not keep.all():  # pool sparse cells
        obs, exp = np.append(obs, counts[~keep].sum()), np.append(exp, expected[~keep].sum())
    chi2 = np.sum((obs - exp) ** 2 / exp)
    assert stats.chi2.sf(chi2, obs.size - 1) > 0.01


def test_subgroup_frequencies_match_weights():
    cfg = benchmark_config(N=10_000, seed=9, T=1, missing_rate=0.0)
    sim = simulate(cfg)
    w = subgroup_weights(sim.truth.weights, sim.dataset.X)
    freq = np.bincount(sim.subgroups, minlength=2) / sim.dataset.N
    assert np.all(np.abs(freq - w.mean(axis=0)) < 0.02)


def test_missingness_commutes_with_generation():
    full = simulate(benchmark_config(N=50, seed=2, missing_rate=0.0))
    masked = simulate(benchmark_config(N=50, seed=2, missing_rate=0.3))
    assert np.array_equal(full.full_yp, masked.full_yp) and np.array_equal(full.full_yd, masked.full_yd)
    mask = masked.dataset.yp == -1
    assert np.array_equal(mask, masked.dataset.yd == -1)
    assert np.array_equal(np.where(mask, -1, full.dataset.yp), masked.dataset.yp)
    assert 0.25 < mask.mean() < 0.35


def test_generator_and_likelihood_agree():
    sim = simulate(benchmark_config(N=1000, seed=17, T=20))
    t = sim.truth
    perturbed = t.replace(lambda_p=1.5 * t.lambda_p, lambda_d=1.5 * t.lambda_d)
    assert mixture_loglik(t, sim.dataset) > mixture_loglik(perturbed, sim.dataset)


def test_config_validation():
    with pytest.raises(ValueError):
        benchmark_config(missing_rate=1.0)
    with pytest.raises(ValueError):
        SimConfig(N=5, truth=benchmark_truth(), n_numeric=1, n_binary=1)


def test_recovery_report_identity_and_null():
    sim = simulate(benchmark_config(N=200, seed=3))
    rep = recovery_report(sim.truth, sim.truth, sim.subgroups, sim.subgroups, sim.dataset, sim.state_paths)
    assert rep["ari"] == 1.0 and rep["label_accuracy"] == 1.0
    assert all(v["max_abs_error"] == 0.0 for v in rep["parameters"].values())
    assert 0.5 < rep["state_path_agreement"] <= 1.0
    rng = np.random.default_rng(0)
    aris = [recovery_report(sim.truth, sim.truth, rng.integers(0, 2, 2000), rng.integers(0, 2, 2000))["ari"]
            for _ in range(5)]
    assert np.all(np.abs(aris) < 0.05)
    wrong = ModelParams(alpha=[0.0], beta=np.zeros((1, 4)), pi=[[1.0]], Phi=[[[1.0]]],
                        lambda_p=[[1.0]], lambda_d=[[1.0]], rho=[1.5], MP=10, MD=7)
    with pytest.raises(ValueError, match="dimensions"):
        recovery_report(wrong, sim.truth)


def test_benchmark_truth_is_canonical():
    from mhmmx.inference import relabel_params

    t = benchmark_truth()
    assert relabel_params(t).to_dict() == t.to_dict()
