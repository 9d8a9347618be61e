"""Simulation world: a lognormal population with outcome-linked selection
sizes, stratified PPS sampling, utility metrics, and the repeated-sampling
Monte Carlo comparing the synthesis mechanisms with the additive-noise
baseline at matched privacy guarantees.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import SurveyDataset, all_cells
from .fbp import FbpModel
from .fbs import FbsModel
from .laplace import build_noised_tables
from .release import SyntheticRelease
from .riskweights import epsilon as privacy_epsilon
from .riskweights import tune_to_target
from .rng import derive_rng, derive_seed_sequence
from .tabulate import build_release_tables, build_sample_tables


class SimulationError(ValueError):
    pass


@dataclass
class PopulationSpec:
    N: int
    field_props: list
    gender_props_by_field: list        # F rows of G proportions
    cell_log_means: list               # F x G log-scale outcome means
    outcome_scale: float = 0.4
    selection_noise_scale: float = 0.4
    field_labels: list | None = None
    gender_labels: list | None = None

    def __post_init__(self):
        if self.N < 1:
            raise SimulationError("population size must be positive")
        props = np.asarray(self.field_props, dtype=np.float64)
        if np.any(props < 0) or not math.isclose(props.sum(), 1.0, abs_tol=1e-9):
            raise SimulationError("field proportions must be nonnegative and sum to 1")
        for row in self.gender_props_by_field:
            r = np.asarray(row, dtype=np.float64)
            if np.any(r < 0) or not math.isclose(r.sum(), 1.0, abs_tol=1e-9):
                raise SimulationError("gender proportions must sum to 1 per field")
        if not (self.outcome_scale > 0 and self.selection_noise_scale > 0):
            raise SimulationError("scales must be positive")
        if self.field_labels is None:
            self.field_labels = [str(f + 1) for f in range(self.n_fields)]
        if self.gender_labels is None:
            self.gender_labels = [str(g + 1) for g in range(self.n_genders)]

    @property
    def n_fields(self):
        return len(self.field_props)

    @property
    def n_genders(self):
        return len(self.gender_props_by_field[0])


# Field shares, male shares, and cell mean salaries shaped like a doctoral
# salary survey; the log means target the stated cell means under the 0.4
# lognormal scale.
_FIELD_PROPS = [0.27, 0.045, 0.05, 0.15, 0.105, 0.125, 0.215, 0.04]
_MALE_SHARE = [0.54, 0.81, 0.72, 0.74, 0.33, 0.53, 0.77, 0.42]
_CELL_SALARY = [
    (115000, 99000), (136000, 118000), (106000, 103000), (112000, 107000),
    (104000, 90000), (104000, 86000), (124000, 110000), (117000, 93000),
]


def default_population_spec(N=100_000):
    log_means = [[math.log(m_sal) - 0.08, math.log(f_sal) - 0.08]
                 for m_sal, f_sal in _CELL_SALARY]
    return PopulationSpec(
        N=N,
        field_props=list(_FIELD_PROPS),
        gender_props_by_field=[[p, 1.0 - p] for p in _MALE_SHARE],
        cell_log_means=log_means,
    )


def allocate_proportional(total, props):
    """Largest-remainder integer allocation of `total` over proportions."""
    props = np.asarray(props, dtype=np.float64)
    raw = total * props / props.sum()
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    order = np.argsort(-(raw - counts))
    counts[order[:short]] += 1
    return counts.tolist()


def gen_population(spec, seed):
    """Population with lognormal outcomes and selection sizes proportional to
    the outcome times lognormal noise; stored weights are 1/size, so the
    sampler recovers the size variable as 1/w and rescales it per stratum.
    """
    rng = derive_rng(seed, "population")
    field_counts = allocate_proportional(spec.N, spec.field_props)
    fields, genders = [], []
    for f, n_f in enumerate(field_counts):
        gender_counts = allocate_proportional(n_f, spec.gender_props_by_field[f])
        for g, n_g in enumerate(gender_counts):
            fields.append(np.full(n_g, f, dtype=np.intp))
            genders.append(np.full(n_g, g, dtype=np.intp))
    field_idx = np.concatenate(fields)
    gender_idx = np.concatenate(genders)
    log_mu = np.asarray(spec.cell_log_means)[field_idx, gender_idx]
    y = np.exp(log_mu + spec.outcome_scale * rng.standard_normal(spec.N))
    noise = spec.selection_noise_scale * rng.standard_normal(spec.N)
    size = y * np.exp(noise)
    return SurveyDataset(y=y, field_idx=field_idx, gender_idx=gender_idx,
                         field_levels=spec.field_labels,
                         gender_levels=spec.gender_labels, w=1.0 / size)


def pps_sample(population, n_per_stratum, seed):
    """Stratified PPS sample: draws with replacement proportional to size,
    duplicates collapsed (redrawing until n_h distinct units, capped at 100x
    oversampling); marginal inclusion probabilities follow
    pi* = 1 - (1 - size / stratum size total)^n_h and w = 1/pi*.
    """
    rng = derive_rng(seed, "pps-sample")
    size = 1.0 / population.w
    n_per_stratum = list(n_per_stratum)
    if len(n_per_stratum) != population.n_strata:
        raise SimulationError("need one sample size per stratum")
    chosen_all = []
    pi_all = []
    for h, n_h in enumerate(n_per_stratum):
        members = np.flatnonzero(population.stratum_idx == h)
        if n_h < 2:
            raise SimulationError("need at least 2 draws per stratum")
        if n_h > len(members):
            raise SimulationError(f"stratum {h} has only {len(members)} units "
                                  f"for {n_h} requested draws")
        sizes_h = size[members]
        p = sizes_h / sizes_h.sum()
        chosen = {}
        drawn = 0
        while len(chosen) < n_h:
            if drawn >= 100 * n_h:
                raise SimulationError(
                    f"collapse rule exhausted its retry budget in stratum {h}")
            batch = rng.choice(len(members), size=n_h - len(chosen), replace=True, p=p)
            drawn += len(batch)
            for j in batch:
                if len(chosen) == n_h:
                    break
                chosen.setdefault(int(j), None)
        idx_local = np.array(sorted(chosen), dtype=np.intp)
        pi_star = 1.0 - (1.0 - p[idx_local]) ** n_h
        chosen_all.append(members[idx_local])
        pi_all.append(np.minimum(pi_star, 1.0))
    idx = np.concatenate(chosen_all)
    pi = np.concatenate(pi_all)
    return SurveyDataset(
        y=population.y[idx],
        field_idx=population.field_idx[idx],
        gender_idx=population.gender_idx[idx],
        field_levels=population.field_levels,
        gender_levels=population.gender_levels,
        w=1.0 / pi,
        pi=pi,
    )


def population_truth(population):
    """Unweighted per-cell truths: {cell key: (count, mean outcome)}."""
    truth = {}
    for cell in population.cells():
        mask = population.cell_mask(cell)
        if not np.any(mask):
            continue
        truth[cell.key()] = (float(np.sum(mask)), float(np.mean(population.y[mask])))
    return truth


def rmse(point, variance, truth):
    """Root of squared bias plus variance."""
    if variance < 0:
        raise SimulationError("variance must be nonnegative")
    return math.sqrt((point - truth) ** 2 + variance)


@dataclass
class MetricRow:
    mechanism: str
    statistic: str
    cell_kind: str
    field_label: object
    gender_label: object
    rmse: float
    rmse_ratio: float
    coverage: float
    cv: float
    ci_length: float


@dataclass
class MonteCarloResult:
    rows: list
    failures: list
    replicates_used: dict
    target_delta: float
    m: int

    def mean_ci_ratio(self, mechanism_a, mechanism_b, statistic):
        """Mean over cells of (mechanism_a mean CI length / mechanism_b's)."""
        a = {(r.cell_kind, r.field_label, r.gender_label): r.ci_length
             for r in self.rows if r.mechanism == mechanism_a
             and r.statistic == statistic}
        b = {(r.cell_kind, r.field_label, r.gender_label): r.ci_length
             for r in self.rows if r.mechanism == mechanism_b
             and r.statistic == statistic}
        ratios = [a[k] / b[k] for k in a if k in b and b[k] > 0]
        if not ratios:
            raise SimulationError("no overlapping cells for the CI ratio")
        return float(np.mean(ratios))

    def to_metrics_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["mechanism", "statistic", "cell_kind", "field",
                             "gender", "rmse", "rmse_ratio", "coverage", "cv",
                             "ci_length"])
            for r in self.rows:
                writer.writerow([r.mechanism, r.statistic, r.cell_kind,
                                 "" if r.field_label is None else r.field_label,
                                 "" if r.gender_label is None else r.gender_label,
                                 repr(r.rmse), repr(r.rmse_ratio), repr(r.coverage),
                                 repr(r.cv), repr(r.ci_length)])

    def to_frontier_csv(self, path):
        baseline = {}
        for r in self.rows:
            if r.mechanism == "fbs":
                baseline[(r.statistic, r.cell_kind, r.field_label,
                          r.gender_label)] = r.ci_length
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["mechanism", "statistic", "cell_kind", "field",
                             "gender", "coverage", "cv", "ci_length",
                             "ci_ratio_vs_fbs"])
            for r in self.rows:
                key = (r.statistic, r.cell_kind, r.field_label, r.gender_label)
                base = baseline.get(key)
                ratio = "" if not base else repr(r.ci_length / base)
                writer.writerow([r.mechanism, r.statistic, r.cell_kind,
                                 "" if r.field_label is None else r.field_label,
                                 "" if r.gender_label is None else r.gender_label,
                                 repr(r.coverage), repr(r.cv), repr(r.ci_length),
                                 ratio])


def _sub_seed(root, *path):
    return int(derive_seed_sequence(root, *path).generate_state(1)[0])


def synthesize_tuned(sample, mechanism, m, target_delta, tol, config, seed):
    """Tune the risk weights to the target bound, synthesize m datasets, and
    return (release, tables, tune result)."""
    if mechanism == "fbs":
        model = FbsModel(sample)
    elif mechanism == "fbp":
        model = FbpModel(sample)
    else:
        raise SimulationError(f"unknown synthesis mechanism {mechanism!r}")
    cfg = replace(config, seed=_sub_seed(seed, mechanism, "fit"))
    tuned = tune_to_target(model, target_delta, tol, cfg)
    account = privacy_epsilon(tuned.profile.overall_lipschitz, m)
    rel = model.synthesize(tuned.draws, m, _sub_seed(seed, mechanism, "synth"),
                           account=account)
    counts, means = build_release_tables(rel)
    return rel, (counts, means), tuned


def _mc_cells(n_fields, n_genders):
    """The plotted cell set: interior cells plus field margins."""
    return [c for c in all_cells(n_fields, n_genders)
            if c.kind in ("interior", "field_margin")]


def monte_carlo(spec, mechanisms, r_reps, m, target_delta, seed, config,
                n_sample=1000, tol=0.05):
    """Repeated-sampling comparison.

    Per replicate: draw a PPS sample, tune each synthesizer to the target
    bound, synthesize m datasets, tabulate, and record interval coverage of
    the population truth, CV, CI length, and RMSE (ratio vs the confidential
    sample).  Failed replicates are recorded and excluded, never silently
    dropped.
    """
    if r_reps < 2:
        raise SimulationError("need at least 2 Monte Carlo replicates")
    population = gen_population(spec, _sub_seed(seed, "mc-population"))
    truth = population_truth(population)
    alloc = allocate_proportional(n_sample, spec.field_props)
    cells = _mc_cells(spec.n_fields, spec.n_genders)
    epsilon_total = 2.0 * target_delta * m

    stats = {}
    failures = []
    used = {mech: 0 for mech in mechanisms}

    def record(mech, statistic, table, sample_rmse):
        rows = table.row_map()
        for cell in cells:
            row = rows.get(cell.key())
            if row is None:
                continue
            lo, hi = row.interval()
            t_count, t_mean = truth[cell.key()]
            tru = t_count if statistic == "count" else t_mean
            hit = 1.0 if lo <= tru <= hi else 0.0
            cv = row.se / abs(row.estimate) if row.estimate != 0 else math.nan
            err = rmse(row.estimate, row.se**2, tru)
            base = sample_rmse[(statistic, cell.key())]
            key = (mech, statistic, cell.key())
            stats.setdefault(key, []).append(
                (hit, cv, hi - lo, err, err / base if base > 0 else math.nan))

    for r in range(r_reps):
        sample = pps_sample(population, alloc, _sub_seed(seed, "mc-sample", r))
        sc, sm = build_sample_tables(sample)
        sample_rmse = {}
        for statistic, table in (("count", sc), ("mean", sm)):
            for row in table.rows:
                t_count, t_mean = truth[row.cell.key()]
                tru = t_count if statistic == "count" else t_mean
                sample_rmse[(statistic, row.cell.key())] = rmse(
                    row.estimate, row.se**2, tru)
        for mech in mechanisms:
            try:
                if mech in ("fbs", "fbp"):
                    _, (counts, means), _ = synthesize_tuned(
                        sample, mech, m, target_delta, tol, config,
                        _sub_seed(seed, "mc-mech", mech, r))
                elif mech == "laplace":
                    counts, means, _, _ = build_noised_tables(
                        sample, epsilon_total, _sub_seed(seed, "mc-mech", mech, r))
                elif mech == "passthrough":
                    counts, means = sc, sm
                    counts = _zero_se_copy(sc)
                    means = _zero_se_copy(sm)
                else:
                    raise SimulationError(f"unknown mechanism {mech!r}")
            except Exception as exc:  # noqa: BLE001 - replicate failures are data
                failures.append({"replicate": r, "mechanism": mech,
                                 "error": f"{type(exc).__name__}: {exc}"})
                continue
            used[mech] += 1
            record(mech, "count", counts, sample_rmse)
            record(mech, "mean", means, sample_rmse)

    rows = []
    labels = {c.key(): c for c in cells}
    for (mech, statistic, cell_key), values in sorted(stats.items()):
        arr = np.asarray(values, dtype=np.float64)
        cell = labels[cell_key]
        f_lab = None if cell.field is None else spec.field_labels[cell.field]
        g_lab = None if cell.gender is None else spec.gender_labels[cell.gender]
        rows.append(MetricRow(
            mechanism=mech, statistic=statistic, cell_kind=cell.kind,
            field_label=f_lab, gender_label=g_lab,
            rmse=float(np.nanmean(arr[:, 3])),
            rmse_ratio=float(np.nanmean(arr[:, 4])),
            coverage=float(np.mean(arr[:, 0])),
            cv=float(np.nanmean(arr[:, 1])),
            ci_length=float(np.mean(arr[:, 2])),
        ))
    return MonteCarloResult(rows=rows, failures=failures, replicates_used=used,
                            target_delta=target_delta, m=m)


def _zero_se_copy(table):
    from copy import deepcopy

    out = deepcopy(table)
    for row in out.rows:
        row.se = 0.0
        row.var_within = 0.0
    return out
