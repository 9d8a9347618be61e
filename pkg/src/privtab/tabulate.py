"""Count and mean tables over the F x G cell layout, with design-based
variances (Taylor linearization over strata) and combining rules that pool
point and variance estimates across the m datasets of a release.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import CellId
from .special import normal_ppf, t_ppf


class TableError(ValueError):
    pass


@dataclass
class CellEstimate:
    cell: CellId
    n_hat: float
    mu_hat: float
    var_n: float = 0.0
    var_mu: float = 0.0

    def __post_init__(self):
        if self.n_hat < 0 or self.var_n < 0 or self.var_mu < 0:
            raise TableError("counts and variances must be nonnegative")


@dataclass
class CombinedEstimate:
    """Pooled inference over m >= 2 synthetic datasets.

    T = b_m / m + u_bar estimates the variance of q_bar; intervals use a t
    reference with v = (m - 1) (1 + u_bar / (b_m / m))^2 degrees of freedom
    (normal when the between-dataset variance vanishes).
    """

    q_bar: float
    b_m: float
    u_bar: float
    T: float
    v: float
    m: int
    degenerate_between: bool = False

    def se(self):
        return math.sqrt(self.T)

    def quantile(self, p=0.975):
        if self.degenerate_between or math.isinf(self.v):
            return normal_ppf(p)
        return t_ppf(p, self.v)

    def interval(self, level=0.95):
        half = self.quantile(0.5 + level / 2.0) * self.se()
        return self.q_bar - half, self.q_bar + half


def combine_partial(points, withins):
    """Combining rules for partially synthetic releases."""
    q = np.asarray(points, dtype=np.float64)
    u = np.asarray(withins, dtype=np.float64)
    m = len(q)
    if m < 2:
        raise TableError("combining rules need m >= 2 datasets "
                         "(between-dataset variance is undefined otherwise)")
    if len(u) != m:
        raise TableError("points and withins must have equal length")
    if np.any(u < 0):
        raise TableError("within variances must be nonnegative")
    q_bar = float(np.mean(q))
    b_m = float(np.sum((q - q_bar) ** 2) / (m - 1))
    u_bar = float(np.mean(u))
    T = b_m / m + u_bar
    # points that agree to float roundoff have no real between-dataset spread
    if b_m <= (1e-12 * max(1.0, abs(q_bar))) ** 2:
        return CombinedEstimate(q_bar, b_m, u_bar, T, math.inf, m,
                                degenerate_between=True)
    v = (m - 1) * (1.0 + u_bar / (b_m / m)) ** 2
    return CombinedEstimate(q_bar, b_m, u_bar, T, v, m)


def cell_points(dataset, mode="weighted"):
    """Point estimates for every non-empty cell.

    weighted: N-hat = sum of weights, mu-hat = weighted mean, in all cells.
    fbp: interior means are unweighted (the synthetic outcome is already
    population-corrected within a cell); margin/grand means and every count
    use the supplied weights.
    Empty interior cells are omitted (absent, not zero).
    """
    if mode not in ("weighted", "fbp"):
        raise TableError(f"unknown table mode {mode!r}")
    out = []
    for cell in dataset.cells():
        mask = dataset.cell_mask(cell)
        if not np.any(mask):
            continue
        w = dataset.w[mask]
        y = dataset.y[mask]
        n_hat = float(np.sum(w))
        if mode == "fbp" and cell.kind == "interior":
            mu_hat = float(np.mean(y))
        else:
            mu_hat = float(np.sum(w * y) / n_hat)
        out.append(CellEstimate(cell=cell, n_hat=n_hat, mu_hat=mu_hat))
    return out


def taylor_variance(dataset, cell, n_hat, mu_hat, weights=None):
    """Design-based variances of (N-hat, mu-hat) for one cell.

    Linearized scores z_i = 1_cell w_i (y_i - mu) / N (mean) and
    z_i = 1_cell w_i (count) are centered within each stratum and aggregated
    with the with-replacement factor n_h / (n_h - 1); every sampled unit of a
    stratum enters, with zero score outside the cell.
    """
    w = dataset.w if weights is None else np.asarray(weights, dtype=np.float64)
    mask = dataset.cell_mask(cell)
    if n_hat <= 0:
        raise TableError("cell has nonpositive estimated size")
    z_mu = np.where(mask, w * (dataset.y - mu_hat) / n_hat, 0.0)
    z_n = np.where(mask, w, 0.0)
    var_mu = 0.0
    var_n = 0.0
    for h in range(dataset.n_strata):
        members = dataset.stratum_idx == h
        if not np.any(mask & members):
            continue
        n_h = int(np.sum(members))
        if n_h < 2:
            raise TableError(f"stratum {dataset.stratum_levels[h]!r} has fewer "
                             "than 2 sampled units; variance is not estimable")
        factor = n_h / (n_h - 1)
        zm = z_mu[members]
        zn = z_n[members]
        var_mu += factor * float(np.sum((zm - zm.mean()) ** 2))
        var_n += factor * float(np.sum((zn - zn.mean()) ** 2))
    return var_n, var_mu


def cell_estimates(dataset, mode="weighted"):
    """Points plus Taylor variances for every non-empty cell.

    In fbp mode, interior means and their variances are computed with unit
    weights; counts and margin/grand means use the dataset weights.
    """
    estimates = cell_points(dataset, mode=mode)
    ones = np.ones(dataset.n)
    for est in estimates:
        unweighted_mean = mode == "fbp" and est.cell.kind == "interior"
        if unweighted_mean:
            mask = dataset.cell_mask(est.cell)
            n_unw = float(np.sum(mask))
            _, est.var_mu = taylor_variance(dataset, est.cell, n_unw, est.mu_hat,
                                            weights=ones)
            est.var_n, _ = taylor_variance(dataset, est.cell, est.n_hat, est.mu_hat)
        else:
            est.var_n, est.var_mu = taylor_variance(dataset, est.cell, est.n_hat,
                                                    est.mu_hat)
    return estimates


@dataclass
class CellRow:
    cell: CellId
    field_label: object
    gender_label: object
    estimate: float
    se: float
    var_within: float = 0.0
    var_between: float = 0.0
    dof: float = math.inf
    within_only: bool = False

    def interval(self, level=0.95):
        p = 0.5 + level / 2.0
        q = normal_ppf(p) if math.isinf(self.dof) else t_ppf(p, self.dof)
        return self.estimate - q * self.se, self.estimate + q * self.se


@dataclass
class CellTable:
    statistic: str            # "count" | "mean"
    mechanism: str
    m: int
    epsilon: float | None
    rows: list = field(default_factory=list)

    def row_map(self):
        return {r.cell.key(): r for r in self.rows}

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cell_kind", "field", "gender", "estimate", "se",
                             "mechanism", "m", "epsilon"])
            for r in self.rows:
                writer.writerow([
                    r.cell.kind,
                    "" if r.field_label is None else r.field_label,
                    "" if r.gender_label is None else r.gender_label,
                    repr(float(r.estimate)), repr(float(r.se)),
                    self.mechanism, self.m,
                    "" if self.epsilon is None else repr(float(self.epsilon)),
                ])

    def to_json(self, path):
        payload = {
            "statistic": self.statistic,
            "mechanism": self.mechanism,
            "m": self.m,
            "epsilon": self.epsilon,
            "cells": [
                {
                    "cell_kind": r.cell.kind,
                    "field": r.field_label,
                    "gender": r.gender_label,
                    "estimate": r.estimate,
                    "se": r.se,
                    "var_within": r.var_within,
                    "var_between": r.var_between,
                    "dof": None if math.isinf(r.dof) else r.dof,
                    "within_only": r.within_only,
                }
                for r in self.rows
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _labels(dataset, cell):
    f = None if cell.field is None else dataset.field_levels[cell.field]
    g = None if cell.gender is None else dataset.gender_levels[cell.gender]
    return f, g


def build_sample_tables(dataset, mechanism="sample", epsilon=None):
    """Single-dataset tables (confidential baseline or one synthetic copy):
    within-dataset Taylor SEs only."""
    estimates = cell_estimates(dataset, mode="weighted")
    counts = CellTable("count", mechanism, 1, epsilon)
    means = CellTable("mean", mechanism, 1, epsilon)
    for est in estimates:
        f, g = _labels(dataset, est.cell)
        counts.rows.append(CellRow(est.cell, f, g, est.n_hat,
                                   math.sqrt(est.var_n), var_within=est.var_n,
                                   within_only=True))
        means.rows.append(CellRow(est.cell, f, g, est.mu_hat,
                                  math.sqrt(est.var_mu), var_within=est.var_mu,
                                  within_only=True))
    return counts, means


def build_release_tables(release, weights="smoothed"):
    """Combined count and mean tables from a synthetic release.

    Per dataset: cell estimates plus Taylor variances, with the weighting
    rules of the release's mechanism; across datasets: combining rules.
    With m = 1 the tables carry within-only SEs and are flagged as such.
    """
    mode = "fbp" if release.mechanism == "fbp" else "weighted"
    per_dataset = []
    for ell in range(release.m):
        ds = release.dataset(ell, weights=weights)
        per_dataset.append({e.cell.key(): e for e in cell_estimates(ds, mode=mode)})

    keys = [k for k in per_dataset[0] if all(k in d for d in per_dataset)]
    epsilon = None if release.account is None else release.account.epsilon
    counts = CellTable("count", release.mechanism, release.m, epsilon)
    means = CellTable("mean", release.mechanism, release.m, epsilon)
    base = release.dataset(0, weights=weights)
    for key in keys:
        cell = per_dataset[0][key].cell
        f, g = _labels(base, cell)
        for table, point_attr, var_attr in ((counts, "n_hat", "var_n"),
                                            (means, "mu_hat", "var_mu")):
            points = [getattr(d[key], point_attr) for d in per_dataset]
            withins = [getattr(d[key], var_attr) for d in per_dataset]
            if release.m == 1:
                table.rows.append(CellRow(cell, f, g, points[0],
                                          math.sqrt(withins[0]),
                                          var_within=withins[0], within_only=True))
            else:
                comb = combine_partial(points, withins)
                table.rows.append(CellRow(cell, f, g, comb.q_bar, comb.se(),
                                          var_within=comb.u_bar, var_between=comb.b_m,
                                          dof=comb.v))
    return counts, means
