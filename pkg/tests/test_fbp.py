"""Population-model synthesizer: density normalization by quadrature,
weight construction, synthesis contracts, and bias correction."""

import math

import numpy as np
import pytest

from privtab.data import DataError, SurveyDataset
from privtab.fbp import FbpModel, FbpParams
from privtab.kernels import fbp_records
from privtab.mcmc import SampleConfig, mcse_mean, mcse_var, sample
from privtab.simharness import (allocate_proportional, default_population_spec,
                                gen_population, population_truth, pps_sample)


def informative_sample(n=1000, seed=42):
    spec = default_population_spec()
    pop = gen_population(spec, seed)
    alloc = allocate_proportional(n, spec.field_props)
    return pop, pps_sample(pop, alloc, seed)


def small_dataset(n=40, seed=3):
    rng = np.random.default_rng(seed)
    # cycle the design codes so every level appears even for tiny n
    field = np.arange(n) % 2
    gender = (np.arange(n) // 2) % 2
    y = np.exp(rng.normal(11, 0.4, n))
    pi = np.exp(rng.normal(-4.5, 0.4, n))
    pi = np.minimum(pi, 1.0)
    return SurveyDataset(y, field, gender, ["1", "2"], ["1", "2"], 1.0 / pi,
                         pi=pi)


def params_for(model, beta, sigma_y, kappa_y, kappa_x, sigma_pi):
    return FbpParams(beta=np.asarray(beta, dtype=float), sigma_y=sigma_y,
                     kappa_y=kappa_y, kappa_x=np.asarray(kappa_x, dtype=float),
                     sigma_pi=sigma_pi)


def test_requires_inclusion_probabilities():
    ds = small_dataset()
    ds_no_pi = SurveyDataset(ds.y, ds.field_idx, ds.gender_idx,
                             ds.field_levels, ds.gender_levels, ds.w)
    with pytest.raises(DataError, match="pi"):
        FbpModel(ds_no_pi)


def test_decoupled_density_factorizes():
    # kappa = 0, sigma_pi = 1: the estimated density is
    # N(log pi | 0, 1) * exp(-1/2) * N(log y | x beta, sigma_y^2); the
    # normalized-plane version adds the +log pi change of variables
    ds = small_dataset(n=6)
    model = FbpModel(ds)
    K = model.K
    params = params_for(model, np.full(K, 11.0) * (np.arange(K) == 0), 0.5,
                        0.0, np.zeros(K), 1.0)

    def norm_logpdf(x, mu, s):
        return -0.5 * math.log(2 * math.pi) - math.log(s) \
            - 0.5 * ((x - mu) / s) ** 2

    mu_y = model.X @ params.beta
    estimated = fbp_records(model.yt, model.zpi, mu_y, model.X @ params.kappa_x,
                            0.0, 0.5, 1.0, False)
    plane = model.log_density_records(params)
    for i in range(ds.n):
        want = norm_logpdf(model.zpi[i], 0.0, 1.0) - 0.5 \
            + norm_logpdf(model.yt[i], mu_y[i], 0.5)
        assert estimated[i] == pytest.approx(want, rel=1e-12)
        assert plane[i] == pytest.approx(want + model.zpi[i], rel=1e-12)


def quadrature_integral(params, x_row):
    """Trapezoid integral of the joint density of (log y, log pi) over a wide
    box; the independent oracle for normalization."""
    mu_y = float(x_row @ params.beta)
    xk = float(x_row @ params.kappa_x)
    gy = np.linspace(mu_y - 12 * params.sigma_y, mu_y + 12 * params.sigma_y, 1601)
    z_lo = params.kappa_y * gy.min() + xk - 12 * params.sigma_pi
    z_hi = params.kappa_y * gy.max() + xk + 12 * params.sigma_pi
    if params.kappa_y < 0:
        z_lo, z_hi = (params.kappa_y * gy.max() + xk - 12 * params.sigma_pi,
                      params.kappa_y * gy.min() + xk + 12 * params.sigma_pi)
    gz = np.linspace(z_lo, z_hi, 1601)
    YT, Z = np.meshgrid(gy, gz, indexing="ij")
    flat_mu = np.full(YT.size, mu_y)
    flat_xk = np.full(YT.size, xk)
    ll = fbp_records(YT.ravel(), Z.ravel(), flat_mu, flat_xk, params.kappa_y,
                     params.sigma_y, params.sigma_pi, True)
    dens = np.exp(ll).reshape(YT.shape)
    return float(np.trapezoid(np.trapezoid(dens, gz, axis=1), gy))


def test_density_normalizes_to_one_for_ten_parameter_sets():
    ds = small_dataset(n=4)
    model = FbpModel(ds)
    K = model.K
    rng = np.random.default_rng(17)
    for _ in range(10):
        params = params_for(model, rng.normal(11, 1, K),
                            rng.uniform(0.2, 0.8),
                            rng.uniform(-1.5, 1.5),
                            rng.normal(0, 1, K),
                            rng.uniform(0.2, 0.8))
        total = quadrature_integral(params, model.X[0])
        assert total == pytest.approx(1.0, abs=1e-4)


def test_degenerate_scale_guard():
    with pytest.raises(DataError):
        FbpParams(np.array([1.0]), 0.5, 1.0, np.array([0.0]), 0.0)
    with pytest.raises(DataError):
        FbpParams(np.array([1.0]), 0.0, 1.0, np.array([0.0]), 0.5)


def test_synthesize_degenerate_noise_limit():
    ds = small_dataset(n=30)
    model = FbpModel(ds)
    K = model.K
    params = params_for(model, np.full(K, 0.0) + 11.0 * (np.arange(K) == 0),
                        1e-12, 0.9, np.full(K, -14.5) * (np.arange(K) == 0),
                        1e-12)
    rng = np.random.default_rng(1)
    y_star, pi_star, w_star, _ = model.generate_one(params, rng)
    yt_want = model.X @ params.beta
    np.testing.assert_allclose(np.log(y_star), yt_want, atol=1e-9)
    pi_want = np.exp(params.kappa_y * yt_want + model.X @ params.kappa_x)
    np.testing.assert_allclose(pi_star, pi_want, rtol=1e-9)
    np.testing.assert_allclose(w_star, 1.0 / pi_star, rtol=1e-12)


def test_smoothed_weights_share_stratum_totals_with_raw():
    ds = small_dataset(n=80)
    model = FbpModel(ds)
    K = model.K
    params = params_for(model, np.full(K, 11.0) * (np.arange(K) == 0), 0.4,
                        1.1, np.full(K, -15.0) * (np.arange(K) == 0), 0.4)
    rng = np.random.default_rng(5)
    _, _, w_star, w_smooth = model.generate_one(params, rng)
    for h in range(ds.n_strata):
        members = ds.stratum_idx == h
        total_raw = w_star[members].sum()
        total_smooth = w_smooth[members].sum()
        assert total_smooth == pytest.approx(total_raw, rel=1e-9)


def test_smoothed_weights_kappa_zero_equal_within_stratum():
    ds = small_dataset(n=50)
    model = FbpModel(ds)
    K = model.K
    params = params_for(model, np.zeros(K), 0.4, 0.0, np.zeros(K), 0.4)
    ws = model.smoothed_weights(ds.y, params)
    for h in range(ds.n_strata):
        members = ws[ds.stratum_idx == h]
        assert np.ptp(members) < 1e-12 * members[0]


def test_smoothed_weights_monotone_decreasing_in_y():
    ds = small_dataset(n=50)
    model = FbpModel(ds)
    K = model.K
    params = params_for(model, np.zeros(K), 0.4, 0.8, np.zeros(K), 0.4)
    ws = model.smoothed_weights(ds.y, params)
    for h in range(ds.n_strata):
        members = ds.stratum_idx == h
        order = np.argsort(ds.y[members])
        assert np.all(np.diff(ws[members][order]) < 0)


def test_smoothed_weights_recompute_oracle():
    # the weights follow exp(-kappa_y * log y) exactly, up to one stratum
    # constant; doubling y* rescales each weight by 2^(-kappa_y) before
    # renormalization
    ds = small_dataset(n=50)
    model = FbpModel(ds)
    K = model.K
    kappa_y = 0.7
    params = params_for(model, np.zeros(K), 0.4, kappa_y, np.zeros(K), 0.4)
    totals = model._stratum_totals(ds.w)
    ws = model.smoothed_weights(ds.y, params, totals)
    inv_tilt = np.exp(-kappa_y * np.log(ds.y))
    for h in range(ds.n_strata):
        members = ds.stratum_idx == h
        c_h = totals[h] / inv_tilt[members].sum()
        np.testing.assert_allclose(ws[members], c_h * inv_tilt[members],
                                   rtol=1e-12)
    ws2 = model.smoothed_weights(2.0 * ds.y, params, totals)
    ratio = ws2 / (ws * 2.0 ** (-kappa_y))
    for h in range(ds.n_strata):
        members = ds.stratum_idx == h
        assert np.ptp(ratio[members]) < 1e-9 * ratio[members][0]


def test_synthesize_reproducible_and_partial():
    ds = small_dataset(n=60)
    model = FbpModel(ds)
    draws = sample(model.make_target(np.ones(ds.n)),
                   SampleConfig(chains=2, warmup=800, keep=300, seed=8))
    rel = model.synthesize(draws, 3, seed=4)
    rel2 = model.synthesize(draws, 3, seed=4)
    assert np.array_equal(rel.y, rel2.y)
    assert np.array_equal(rel.w, rel2.w)
    assert rel.dataset(0).field_idx is ds.field_idx


def test_fit_alpha_zero_recovers_prior():
    ds = small_dataset(n=40)
    model = FbpModel(ds)
    draws = sample(model.make_target(np.zeros(ds.n)),
                   SampleConfig(chains=2, warmup=4000, keep=4000, seed=44))
    # coefficients have a N(0, 100) prior
    for j in [0, model.K + 1]:
        x = draws.draws[:, j]
        assert abs(x.mean()) < 3 * mcse_mean(draws, j)
        assert abs(x.var(ddof=1) - 100.0) < 3 * mcse_var(draws, j)
    # scales have a half-Cauchy(0, 1) prior: median 1, quartiles tan(pi/8),
    # tan(3 pi/8)
    s = draws.draws[:, model.K]
    assert np.median(s) == pytest.approx(1.0, rel=0.25)
    assert np.quantile(s, 0.25) == pytest.approx(math.tan(math.pi / 8), rel=0.3)


def test_fit_recovers_known_truth():
    # generate a population from the two-stage model, then select records
    # with probability pi: the sample-corrected likelihood describes exactly
    # that size-biased sample
    rng = np.random.default_rng(55)
    N = 140_000
    field = rng.integers(0, 2, N)
    gender = rng.integers(0, 2, N)
    X = np.column_stack([np.ones(N), (field == 1).astype(float),
                         (gender == 1).astype(float)])
    beta = np.array([11.0, 0.5, -0.3])
    kappa_y, sy, sp = 1.0, 0.4, 0.4
    kappa_x = np.array([-15.4, 0.2, 0.0])
    yt = X @ beta + sy * rng.standard_normal(N)
    zpi = kappa_y * yt + X @ kappa_x + sp * rng.standard_normal(N)
    pi = np.minimum(np.exp(zpi), 1.0)
    take = rng.random(N) < pi
    n = int(take.sum())
    assert 1200 < n < 6000
    ds = SurveyDataset(np.exp(yt[take]), field[take], gender[take],
                       ["1", "2"], ["1", "2"], 1.0 / pi[take], pi=pi[take])
    model = FbpModel(ds)
    draws = sample(model.make_target(np.ones(n)),
                   SampleConfig(chains=2, warmup=2500, keep=1200, seed=56))
    truth = np.concatenate([beta, [sy, kappa_y], kappa_x, [sp]])
    est = draws.draws.mean(axis=0)
    sd = draws.draws.std(axis=0, ddof=1)
    assert np.all(np.abs(est - truth) < 3 * sd)


def test_population_bias_correction():
    # on an informative design, unweighted means of the synthetic outcome are
    # closer to the population cell means than the raw sample means are, in
    # at least 12 of 16 interior cells
    pop, smp = informative_sample()
    truth = population_truth(pop)
    model = FbpModel(smp)
    draws = sample(model.make_target(np.ones(smp.n)),
                   SampleConfig(chains=2, warmup=2500, keep=1000, seed=60))
    rel = model.synthesize(draws, 3, seed=61)
    wins = 0
    cells = [c for c in smp.cells() if c.kind == "interior"]
    for cell in cells:
        mask = smp.cell_mask(cell)
        true_mean = truth[cell.key()][1]
        sample_err = abs(np.mean(smp.y[mask]) - true_mean)
        synth_err = abs(np.mean([np.mean(rel.y[ell][mask])
                                 for ell in range(rel.m)]) - true_mean)
        wins += synth_err < sample_err
    assert wins >= 12
