"""Additive-noise baseline: local sensitivities of weighted counts and means,
Laplace noising under a fixed budget split, and rescaled-replicate variances.

Each individual contributes to 4 cells in each of 2 tables, and every cell
releases a point and a variance estimate, so epsilon = 8 eps_pc + 8 eps_vc
with eps_vc spread over R replicate estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import derive_rng
from .tabulate import CellRow, CellTable, TableError, cell_points, _labels


class NoiseError(ValueError):
    pass


@dataclass
class SensitivityProfile:
    delta_count: dict
    delta_mean: dict
    delta_count_star: float
    delta_mean_star: float

    def count_scale_delta(self, cell):
        """Sensitivity used for noising a count: the interior-max (starred)
        value for interior cells, the cell's own member-set value for
        margins and the grand cell."""
        if cell.kind == "interior":
            return self.delta_count_star
        return self.delta_count[cell.key()]

    def mean_scale_delta(self, cell):
        if cell.kind == "interior":
            return self.delta_mean_star
        return self.delta_mean[cell.key()]


def sensitivity_count(w):
    """Largest possible change of a weighted count under one record swap."""
    w = np.asarray(w, dtype=np.float64)
    if len(w) == 0:
        raise NoiseError("cell is empty; count sensitivity undefined")
    return float(np.max(w) - np.min(w))


def sensitivity_mean(y, w):
    """Worst-case numerator change of the weighted mean over the worst-case
    swapped weight total."""
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if len(w) == 0:
        raise NoiseError("cell is empty; mean sensitivity undefined")
    wy = w * y
    denom = float(np.sum(w) - (np.max(w) - np.min(w)))
    if denom <= 0:
        raise NoiseError("a single weight dominates the cell total; widen the "
                         "cell or fail the release")
    return float((np.max(wy) - np.min(wy)) / denom)


def sensitivity_profile(dataset):
    delta_count = {}
    delta_mean = {}
    for cell in dataset.cells():
        mask = dataset.cell_mask(cell)
        if not np.any(mask):
            if cell.kind == "interior":
                raise NoiseError(f"empty interior cell {cell.key()}; the noise "
                                 "mechanism needs every interior cell populated")
            continue
        delta_count[cell.key()] = sensitivity_count(dataset.w[mask])
        delta_mean[cell.key()] = sensitivity_mean(dataset.y[mask], dataset.w[mask])
    interior = [k for k in delta_count if k[0] == "interior"]
    return SensitivityProfile(
        delta_count=delta_count,
        delta_mean=delta_mean,
        delta_count_star=max(delta_count[k] for k in interior),
        delta_mean_star=max(delta_mean[k] for k in interior),
    )


@dataclass(frozen=True)
class BudgetAllocation:
    epsilon_total: float
    epsilon_pc: float
    epsilon_vc: float
    epsilon_rep: float
    replicates: int

    def __post_init__(self):
        if not math.isclose(self.epsilon_total,
                            8 * self.epsilon_pc + 8 * self.epsilon_vc,
                            rel_tol=0, abs_tol=1e-12 * max(1.0, self.epsilon_total)):
            raise NoiseError("budget identity epsilon = 8 eps_pc + 8 eps_vc violated")


def allocate_budget(epsilon_total, replicates=10):
    """Equal split over the 8 point and 8 variance releases a record touches."""
    if epsilon_total <= 0:
        raise NoiseError("epsilon must be positive")
    if replicates < 1:
        raise NoiseError("replicate count must be >= 1")
    eps_pc = epsilon_total / 16.0
    eps_rep = epsilon_total / (16.0 * replicates)
    return BudgetAllocation(epsilon_total=epsilon_total, epsilon_pc=eps_pc,
                            epsilon_vc=replicates * eps_rep, epsilon_rep=eps_rep,
                            replicates=replicates)


def add_laplace(value, delta, eps, rng):
    """value + Laplace(0, delta/eps) noise; exact pass-through at delta = 0."""
    if eps <= 0:
        raise NoiseError("noise budget must be positive")
    if delta < 0:
        raise NoiseError("sensitivity must be nonnegative")
    if delta == 0.0:
        return float(value)
    return float(value + rng.laplace(0.0, delta / eps))


def replicate_weights(w, stratum_idx, n_strata, rng):
    """One rescaled replicate: per stratum, a random floor(n_h/2) units are
    zeroed and the rest are upweighted by n_h / (n_h - floor(n_h / 2)), which
    doubles survivors in even strata."""
    w = np.asarray(w, dtype=np.float64)
    out = np.zeros_like(w)
    for h in range(n_strata):
        members = np.flatnonzero(stratum_idx == h)
        n_h = len(members)
        if n_h == 0:
            continue
        if n_h < 2:
            raise NoiseError("replicate weights need at least 2 units per stratum")
        drop = n_h // 2
        dropped = rng.choice(members, size=drop, replace=False)
        keep = np.setdiff1d(members, dropped, assume_unique=True)
        out[keep] = w[keep] * (n_h / (n_h - drop))
    return out


def _cell_statistic(y, w, mask, statistic):
    wm = w[mask]
    total = float(np.sum(wm))
    if statistic == "count":
        return total
    if total <= 0:
        return math.nan
    return float(np.sum(wm * y[mask]) / total)


def replicate_variance(dataset, cell, R, seed, eps_rep, delta, statistic="mean",
                       center=None):
    """Noised replicate variance of one cell statistic.

    Builds R rescaled replicates, noises each replicate estimate with
    Laplace(0, delta/eps_rep), and returns (1/R) sum (est_r - center)^2; the
    center defaults to the exact full-sample statistic so the variance is a
    post-processing of the noised replicate set.
    """
    if R < 2:
        raise NoiseError("need at least 2 replicates")
    mask = dataset.cell_mask(cell)
    if center is None:
        center = _cell_statistic(dataset.y, dataset.w, mask, statistic)
    rng = derive_rng(seed, "replicate-variance", statistic, cell.key())
    estimates = np.empty(R)
    for r in range(R):
        w_r = replicate_weights(dataset.w, dataset.stratum_idx,
                                dataset.n_strata, rng)
        est = _cell_statistic(dataset.y, w_r, mask, statistic)
        if math.isnan(est):
            # a replicate can zero out every unit of a small cell; treat the
            # replicate estimate as the center so it adds only its noise
            est = center
        estimates[r] = add_laplace(est, delta, eps_rep, rng)
    return float(np.mean((estimates - center) ** 2))


def build_noised_tables(dataset, epsilon_total, seed, replicates=10):
    """Laplace-mechanism release: noised count and mean tables with noised
    replicate variances, plus the sensitivity profile and budget used."""
    budget = allocate_budget(epsilon_total, replicates)
    profile = sensitivity_profile(dataset)
    points = cell_points(dataset, mode="weighted")
    counts = CellTable("count", "laplace", 0, epsilon_total)
    means = CellTable("mean", "laplace", 0, epsilon_total)
    for est in points:
        cell = est.cell
        f, g = _labels(dataset, cell)
        for table, value, statistic, delta in (
            (counts, est.n_hat, "count", profile.count_scale_delta(cell)),
            (means, est.mu_hat, "mean", profile.mean_scale_delta(cell)),
        ):
            rng = derive_rng(seed, "laplace-point", statistic, cell.key())
            noised = add_laplace(value, delta, budget.epsilon_pc, rng)
            var = replicate_variance(dataset, cell, replicates, seed,
                                     budget.epsilon_rep, delta,
                                     statistic=statistic, center=value)
            table.rows.append(CellRow(cell, f, g, noised, math.sqrt(var),
                                      var_within=var, within_only=True))
    return counts, means, profile, budget
