"""Simulation world: generator correlations, PPS inclusion probabilities,
metrics, and the Monte Carlo driver's bookkeeping."""

import numpy as np
import pytest

from privtab.mcmc import SampleConfig
from privtab.simharness import (MonteCarloResult, PopulationSpec,
                                SimulationError, allocate_proportional,
                                default_population_spec, gen_population,
                                monte_carlo, population_truth, pps_sample,
                                rmse)


@pytest.fixture(scope="module")
def world():
    spec = default_population_spec()
    pop = gen_population(spec, 42)
    return spec, pop


def test_population_spec_validation():
    with pytest.raises(SimulationError):
        PopulationSpec(N=10, field_props=[0.7, 0.2],
                       gender_props_by_field=[[1.0], [1.0]],
                       cell_log_means=[[11.0], [11.0]])
    with pytest.raises(SimulationError):
        PopulationSpec(N=10, field_props=[1.0],
                       gender_props_by_field=[[0.5, 0.5]],
                       cell_log_means=[[11.0, 11.0]], outcome_scale=-1.0)


def test_allocate_proportional_exact_total():
    alloc = allocate_proportional(1000, default_population_spec().field_props)
    assert sum(alloc) == 1000
    assert alloc == [270, 45, 50, 150, 105, 125, 215, 40]


def test_population_correlation_in_paper_range(world):
    spec, pop = world
    corr = float(np.corrcoef(pop.y, pop.w)[0, 1])
    assert -0.62 <= corr <= -0.52


def test_population_noninformative_limit():
    # selection noise swamps the outcome signal; the weight distribution is
    # extremely heavy-tailed here, so compute the correlation on rescaled
    # columns to stay inside float range
    spec = default_population_spec(N=30_000)
    spec.selection_noise_scale = 100.0
    pop = gen_population(spec, 7)
    y = (pop.y - pop.y.mean()) / pop.y.std()
    w = pop.w / pop.w.max()
    w = (w - w.mean()) / w.std()
    corr = float(np.mean(y * w))
    assert np.isfinite(corr)
    assert abs(corr) < 0.1


def test_population_reproducible(world):
    spec, pop = world
    pop2 = gen_population(spec, 42)
    assert np.array_equal(pop.y, pop2.y)
    assert np.array_equal(pop.w, pop2.w)
    pop3 = gen_population(spec, 43)
    assert not np.array_equal(pop.y, pop3.y)


def test_population_cell_shares_follow_spec(world):
    spec, pop = world
    counts = np.bincount(pop.field_idx, minlength=spec.n_fields)
    np.testing.assert_allclose(counts / spec.N, spec.field_props, atol=1e-4)


def test_pps_sample_correlation(world):
    spec, pop = world
    alloc = allocate_proportional(1000, spec.field_props)
    smp = pps_sample(pop, alloc, 42)
    assert smp.n == 1000
    corr = float(np.corrcoef(smp.y, smp.w)[0, 1])
    assert -0.63 <= corr <= -0.53
    np.testing.assert_allclose(smp.w, 1.0 / smp.pi, rtol=1e-12)


def test_pps_sample_sizes_exact(world):
    spec, pop = world
    alloc = allocate_proportional(500, spec.field_props)
    smp = pps_sample(pop, alloc, 3)
    got = np.bincount(smp.stratum_idx, minlength=len(alloc))
    assert got.tolist() == alloc


def test_pps_equal_sizes_inclusion_formula():
    # equal size measures: pi* = 1 - (1 - 1/H)^n for every unit
    H, n_h = 500, 12
    pop = gen_population(PopulationSpec(
        N=H, field_props=[1.0], gender_props_by_field=[[0.5, 0.5]],
        cell_log_means=[[11.0, 11.0]]), 5)
    pop = type(pop)(y=pop.y, field_idx=pop.field_idx, gender_idx=pop.gender_idx,
                    field_levels=pop.field_levels, gender_levels=pop.gender_levels,
                    w=np.ones(H))
    smp = pps_sample(pop, [n_h], 6)
    want = 1.0 - (1.0 - 1.0 / H) ** n_h
    np.testing.assert_allclose(smp.pi, want, rtol=1e-12)


def test_pps_design_unbiasedness(world):
    # stratum weight totals estimate the stratum population sizes within
    # 3 design-based SEs over 50 replicate samples
    spec, pop = world
    alloc = allocate_proportional(1000, spec.field_props)
    pop_sizes = np.bincount(pop.stratum_idx, minlength=pop.n_strata)
    totals = np.empty((50, pop.n_strata))
    for r in range(50):
        smp = pps_sample(pop, alloc, 100 + r)
        for h in range(pop.n_strata):
            totals[r, h] = smp.w[smp.stratum_idx == h].sum()
    ok = 0
    for h in range(pop.n_strata):
        se = totals[:, h].std(ddof=1) / np.sqrt(50)
        ok += abs(totals[:, h].mean() - pop_sizes[h]) < 3 * se
    assert ok >= 7


def test_pps_rejects_undersized_strata():
    pop = gen_population(PopulationSpec(
        N=30, field_props=[1.0], gender_props_by_field=[[0.5, 0.5]],
        cell_log_means=[[11.0, 11.0]]), 5)
    with pytest.raises(SimulationError):
        pps_sample(pop, [31], 1)
    with pytest.raises(SimulationError):
        pps_sample(pop, [1], 1)


def test_rmse_examples():
    assert rmse(13.0, 16.0, 10.0) == pytest.approx(5.0)
    assert rmse(10.0, 0.0, 10.0) == 0.0
    with pytest.raises(SimulationError):
        rmse(1.0, -0.5, 0.0)


def test_rmse_self_ratio_is_one(world):
    spec, pop = world
    truth = population_truth(pop)
    for key, (count, mean) in list(truth.items())[:5]:
        r = rmse(count, 4.0, count + 3.0)
        assert r / r == 1.0


def test_population_truth_counts(world):
    spec, pop = world
    truth = population_truth(pop)
    grand = truth[("grand", None, None)]
    assert grand[0] == spec.N
    interior_total = sum(v[0] for k, v in truth.items() if k[0] == "interior")
    assert interior_total == spec.N


def small_spec():
    return PopulationSpec(
        N=4000,
        field_props=[0.4, 0.3, 0.2, 0.1],
        gender_props_by_field=[[0.6, 0.4]] * 4,
        cell_log_means=[[11.5, 11.3], [11.7, 11.5], [11.2, 11.1],
                        [11.6, 11.4]],
    )


def test_monte_carlo_passthrough_cells_and_coverage():
    spec = small_spec()
    cfg = SampleConfig(chains=1, warmup=50, keep=20, seed=0)
    result = monte_carlo(spec, ["passthrough"], 3, 3, 1.8, seed=2, config=cfg,
                         n_sample=200)
    assert not result.failures
    for stat in ("count", "mean"):
        rows = [r for r in result.rows if r.statistic == stat]
        # the plotted cell set: 8 interior + 4 field margins here
        assert len(rows) == 12
        kinds = {r.cell_kind for r in rows}
        assert kinds == {"interior", "field_margin"}
        # zero-width intervals: coverage is exactly 0 or 1 per cell
        assert all(r.coverage in (0.0, 1.0) for r in rows)
    # deterministic under the same seed
    result2 = monte_carlo(spec, ["passthrough"], 3, 3, 1.8, seed=2, config=cfg,
                          n_sample=200)
    assert [r.coverage for r in result.rows] == [r.coverage for r in result2.rows]


def test_monte_carlo_records_failures():
    spec = small_spec()
    cfg = SampleConfig(chains=1, warmup=50, keep=20, seed=0)
    result = monte_carlo(spec, ["passthrough", "nonsense"], 2, 3, 1.8, seed=3,
                         config=cfg, n_sample=150)
    assert len(result.failures) == 2
    assert all(f["mechanism"] == "nonsense" for f in result.failures)
    assert result.replicates_used["passthrough"] == 2
    assert result.replicates_used["nonsense"] == 0


def test_monte_carlo_csv_outputs(tmp_path):
    spec = small_spec()
    cfg = SampleConfig(chains=1, warmup=50, keep=20, seed=0)
    result = monte_carlo(spec, ["passthrough"], 2, 3, 1.8, seed=4, config=cfg,
                         n_sample=150)
    result.to_metrics_csv(tmp_path / "metrics.csv")
    result.to_frontier_csv(tmp_path / "frontier.csv")
    head = (tmp_path / "metrics.csv").read_text().splitlines()[0]
    assert head.startswith("mechanism,statistic,cell_kind")
    assert len((tmp_path / "frontier.csv").read_text().splitlines()) == 25


def test_monte_carlo_needs_replicates():
    with pytest.raises(SimulationError):
        monte_carlo(small_spec(), ["passthrough"], 1, 3, 1.8, seed=0,
                    config=SampleConfig(), n_sample=100)
