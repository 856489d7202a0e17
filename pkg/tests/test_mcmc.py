import numpy as np
import pytest
from scipy.stats import chi2

from gpcal import FitError, NumericalError, Prior1D, PriorSpec, mcmc_sample


def wide_prior(d=2, half=10.0):
    return PriorSpec([Prior1D.uniform(-half, half) for _ in range(d)],
                     nominal=np.zeros(d))


def test_standard_gaussian_target_moments():
    target = lambda th: -0.5 * float(np.sum(np.asarray(th) ** 2))
    chain = mcmc_sample(target, wide_prior(), n_samples=50_000, n_burn=5_000,
                        seed=7)
    kept = chain.post_burn
    assert kept.shape == (50_000, 2)
    assert np.max(np.abs(kept.mean(axis=0))) < 0.1
    cov = np.cov(kept.T)
    assert np.max(np.abs(cov - np.eye(2))) < 0.15
    assert 0.15 <= chain.accept_rate <= 0.5


def test_flat_target_recovers_uniform_prior():
    prior = PriorSpec([Prior1D.uniform(0.0, 1.0), Prior1D.uniform(-2.0, 2.0)],
                      nominal=[0.5, 0.0])
    chain = mcmc_sample(prior.log_prior, prior, n_samples=4_000, n_burn=1_000,
                        seed=3, thin=10)
    kept = chain.post_burn
    assert kept.shape[0] == 4_000
    # chi-square goodness of fit against uniform marginals at the 1% level
    for j, (lo, hi) in enumerate([(0.0, 1.0), (-2.0, 2.0)]):
        counts, _ = np.histogram(kept[:, j], bins=10, range=(lo, hi))
        expected = kept.shape[0] / 10.0
        stat = float(np.sum((counts - expected) ** 2 / expected))
        assert stat < chi2.ppf(0.99, df=9)
    # every sample inside the prior support
    assert np.all((kept[:, 0] >= 0.0) & (kept[:, 0] <= 1.0))
    assert np.all((kept[:, 1] >= -2.0) & (kept[:, 1] <= 2.0))


def test_chain_determinism():
    target = lambda th: -0.5 * float(np.sum(np.asarray(th) ** 2))
    a = mcmc_sample(target, wide_prior(), n_samples=2_000, seed=42)
    b = mcmc_sample(target, wide_prior(), n_samples=2_000, seed=42)
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(a.log_post, b.log_post)
    assert a.accept_rate == b.accept_rate
    c = mcmc_sample(target, wide_prior(), n_samples=2_000, seed=43)
    assert not np.array_equal(a.samples, c.samples)


def test_correlated_target_adaptation():
    cov = np.array([[1.0, 0.85], [0.85, 1.0]])
    prec = np.linalg.inv(cov)
    target = lambda th: -0.5 * float(np.asarray(th) @ prec @ np.asarray(th))
    chain = mcmc_sample(target, wide_prior(), n_samples=30_000, n_burn=6_000,
                        seed=11)
    got = np.cov(chain.post_burn.T)
    assert np.max(np.abs(got - cov)) < 0.15
    assert 0.15 <= chain.accept_rate <= 0.5


def test_initial_point_outside_support_rejected():
    prior = wide_prior()
    target = lambda th: -np.inf
    with pytest.raises(NumericalError):
        mcmc_sample(target, prior, n_samples=100, seed=0)


def test_burn_in_default_is_twenty_percent():
    target = lambda th: -0.5 * float(np.sum(np.asarray(th) ** 2))
    chain = mcmc_sample(target, wide_prior(), n_samples=1_000, seed=1)
    assert chain.n_burn == 200
    assert chain.samples.shape[0] == 1_200


def test_chain_summary_and_csv(tmp_path):
    target = lambda th: -0.5 * float(np.sum(np.asarray(th) ** 2))
    chain = mcmc_sample(target, wide_prior(), n_samples=500, seed=5,
                        param_names=("a", "b"))
    s = chain.summary()
    assert set(s["parameters"]) == {"a", "b"}
    assert s["n_samples"] == 500
    path = tmp_path / "chain.csv"
    chain.save_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "a,b"
    assert len(lines) == 501
    # byte-identical across repeated saves of the same chain
    chain.save_csv(tmp_path / "chain2.csv")
    assert (tmp_path / "chain2.csv").read_bytes() == path.read_bytes()


def test_bad_arguments():
    target = lambda th: 0.0
    with pytest.raises(FitError):
        mcmc_sample(target, wide_prior(), n_samples=0, seed=0)
    with pytest.raises(FitError):
        mcmc_sample(target, wide_prior(), n_samples=10, thin=0, seed=0)
