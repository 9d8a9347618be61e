"""Sampler correctness against closed-form conjugate posteriors, plus the
ESS estimator and the degenerate-input guards."""

import math

import numpy as np
import pytest

from privtab.mcmc import (FunctionTarget, McmcError, PosteriorDraws,
                          SampleConfig, effective_sample_size, mcse_mean,
                          mcse_var, sample)


def fit(target, keep=5000, warmup=2000, seed=9, chains=2):
    return sample(target, SampleConfig(chains=chains, warmup=warmup, keep=keep,
                                       seed=seed))


def check_moments(draws, coord, want_mean, want_var):
    est_mean = draws.draws[:, coord].mean()
    est_var = draws.draws[:, coord].var(ddof=1)
    assert abs(est_mean - want_mean) < 3 * mcse_mean(draws, coord)
    assert abs(est_var - want_var) < 3 * mcse_var(draws, coord)


def test_conjugate_normal_mean():
    rng = np.random.default_rng(11)
    y = rng.normal(1.3, 1.0, 50)
    tau2 = 100.0
    post_var = 1.0 / (1.0 / tau2 + len(y))
    post_mean = post_var * y.sum()

    target = FunctionTarget(
        1, lambda v: -0.5 * np.sum((y - v[0]) ** 2) - 0.5 * v[0] ** 2 / tau2,
        init=[0.0])
    draws = fit(target, keep=10000)
    check_moments(draws, 0, post_mean, post_var)


def test_conjugate_normal_variance_known_mean():
    rng = np.random.default_rng(12)
    y = rng.normal(0.0, math.sqrt(2.0), 40)
    a0, b0 = 3.0, 2.0
    a1 = a0 + len(y) / 2.0
    b1 = b0 + 0.5 * float(np.sum(y**2))
    want_mean = b1 / (a1 - 1.0)
    want_var = b1**2 / ((a1 - 1.0) ** 2 * (a1 - 2.0))

    ssq = float(np.sum(y**2))

    def logpost(v):
        u = v[0]                       # u = log sigma^2
        s2 = math.exp(u)
        loglik = -0.5 * len(y) * u - 0.5 * ssq / s2
        logprior = -(a0 + 1.0) * u - b0 / s2
        return loglik + logprior + u   # + log-Jacobian of the log map

    target = FunctionTarget(1, logpost, init=[0.0],
                            to_natural=lambda v: np.array([math.exp(v[0])]),
                            from_natural=lambda p: np.array([math.log(p[0])]))
    draws = fit(target, keep=10000)
    check_moments(draws, 0, want_mean, want_var)


def test_conjugate_regression_coefficients():
    rng = np.random.default_rng(13)
    n, k = 60, 3
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
    beta_true = np.array([1.0, -0.5, 2.0])
    y = X @ beta_true + rng.normal(size=n)
    tau2 = 25.0
    prec = X.T @ X + np.eye(k) / tau2
    cov = np.linalg.inv(prec)
    mean = cov @ X.T @ y

    def logpost(v):
        r = y - X @ v
        return -0.5 * float(r @ r) - 0.5 * float(v @ v) / tau2

    draws = fit(FunctionTarget(k, logpost, init=np.zeros(k)), keep=10000)
    for j in range(k):
        check_moments(draws, j, mean[j], cov[j, j])


def test_prior_only_zero_data_target():
    # zero-length data: the per-record vector is empty, posterior == prior
    def records(v):
        return np.zeros(0)

    target = FunctionTarget(
        1, lambda v: -0.5 * (v[0] - 1.5) ** 2 / 4.0, records_fn=records,
        init=[1.5])
    lp, rec = target.eval(np.array([0.3]))
    assert rec.shape == (0,)
    draws = fit(target, keep=10000)
    check_moments(draws, 0, 1.5, 4.0)


def test_determinism_bit_identical():
    target = FunctionTarget(2, lambda v: -0.5 * float(v @ v), init=[0.1, -0.2])
    cfg = SampleConfig(chains=2, warmup=500, keep=400, seed=123)
    d1 = sample(target, cfg)
    d2 = sample(target, SampleConfig(chains=2, warmup=500, keep=400, seed=123))
    assert np.array_equal(d1.draws, d2.draws)
    assert d1.acceptance_rate == d2.acceptance_rate
    d3 = sample(target, SampleConfig(chains=2, warmup=500, keep=400, seed=124))
    assert not np.array_equal(d1.draws, d3.draws)


def test_zero_proposal_scale_is_an_error():
    target = FunctionTarget(1, lambda v: -0.5 * v[0] ** 2)
    with pytest.raises(McmcError, match="init_scale"):
        sample(target, SampleConfig(init_scale=0.0))


def test_nonfinite_init_is_an_error():
    target = FunctionTarget(1, lambda v: -np.inf)
    with pytest.raises(McmcError, match="initial point"):
        sample(target, SampleConfig(warmup=100, keep=10))


def test_all_rejected_warmup_window_is_an_error():
    init = np.array([0.25])

    def spike(v):
        return 0.0 if abs(v[0] - init[0]) < 1e-12 else -np.inf

    with pytest.raises(McmcError, match="warmup"):
        sample(FunctionTarget(1, spike, init=init),
               SampleConfig(chains=1, warmup=2000, keep=10, seed=5))


def iid_draws(n=10000, seed=3):
    rng = np.random.default_rng(seed)
    return PosteriorDraws(draws=rng.standard_normal((n, 1)),
                          acceptance_rate=1.0, seed=seed, warmup=0, thin=1)


def test_ess_iid_within_15_percent():
    d = iid_draws()
    ess = effective_sample_size(d, 0)
    assert 0.85 * d.n_draws <= ess <= 1.15 * d.n_draws


def test_ess_antithetic_capped():
    x = np.tile([1.0, -1.0], 500).reshape(-1, 1)
    d = PosteriorDraws(draws=x, acceptance_rate=1.0, seed=0, warmup=0, thin=1)
    assert effective_sample_size(d, 0) == d.n_draws * d.chains


def test_ess_constant_chain_errors():
    x = np.ones((100, 1))
    d = PosteriorDraws(draws=x, acceptance_rate=1.0, seed=0, warmup=0, thin=1)
    with pytest.raises(McmcError, match="zero variance"):
        effective_sample_size(d, 0)


def test_draws_validation():
    with pytest.raises(McmcError, match="non-finite"):
        PosteriorDraws(draws=np.array([[np.nan]]), acceptance_rate=0.5, seed=0,
                       warmup=0, thin=1)
    with pytest.raises(McmcError, match="acceptance"):
        PosteriorDraws(draws=np.zeros((3, 1)), acceptance_rate=1.5, seed=0,
                       warmup=0, thin=1)
