"""Population-model synthesizer: a linear model for the log outcome at the
population level plus a conditional lognormal model for inclusion
probabilities, estimated through the size-biased (sample-corrected) exact
likelihood of the observed pairs (log y, log pi).

Synthetic outcomes are drawn unbiased with respect to the population;
synthetic weights are rebuilt from synthetic inclusion probabilities and
normalized to the observed per-stratum weight totals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import DataError
from .mcmc import TargetBase
from .release import SyntheticRelease
from .rng import derive_rng


@dataclass(frozen=True)
class FbpParams:
    beta: np.ndarray
    sigma_y: float
    kappa_y: float
    kappa_x: np.ndarray
    sigma_pi: float

    def __post_init__(self):
        if not (self.sigma_y > 0 and self.sigma_pi > 0):
            raise DataError("scales must be positive")


@dataclass(frozen=True)
class FbpPriorSpec:
    """Zero-mean normal coefficients (variance coef_var) and half-Cauchy scales."""

    coef_var: float = 100.0
    scale_cauchy: float = 1.0

    def __post_init__(self):
        if not (self.coef_var > 0 and self.scale_cauchy > 0):
            raise DataError("prior hyperparameters must be positive")


def _log_half_cauchy(x, scale):
    return math.log(2.0) - math.log(math.pi * scale) - math.log1p((x / scale) ** 2)


class _FbpTarget(TargetBase):
    def __init__(self, model, alpha):
        self.model = model
        self.dim = model.dim
        self.alpha = np.ascontiguousarray(alpha, dtype=np.float64)
        if len(self.alpha) != model.n:
            raise DataError("alpha length does not match record count")

    def _decode(self, v):
        K = self.model.K
        beta = v[:K]
        sigma_y = math.exp(v[K])
        kappa_y = v[K + 1]
        kappa_x = v[K + 2:2 * K + 2]
        sigma_pi = math.exp(v[2 * K + 2])
        return beta, sigma_y, kappa_y, kappa_x, sigma_pi

    def _log_prior(self, v, sigma_y, sigma_pi):
        K = self.model.K
        prior = self.model.prior
        coef = np.concatenate([v[:K], v[K + 1:2 * K + 2]])
        lp = float(-0.5 * np.sum(coef**2) / prior.coef_var
                   - 0.5 * len(coef) * math.log(2 * math.pi * prior.coef_var))
        lp += _log_half_cauchy(sigma_y, prior.scale_cauchy) + v[K]
        lp += _log_half_cauchy(sigma_pi, prior.scale_cauchy) + v[2 * K + 2]
        return lp

    def logpost(self, v):
        beta, sigma_y, kappa_y, kappa_x, sigma_pi = self._decode(v)
        mu_y = self.model.X @ beta
        xk = self.model.X @ kappa_x
        ll = kernels.fbp_weighted_sum(self.model.yt, self.model.zpi, mu_y, xk,
                                      kappa_y, sigma_y, sigma_pi,
                                      self.model.include_jacobian, self.alpha)
        return ll + self._log_prior(v, sigma_y, sigma_pi)

    def eval(self, v):
        beta, sigma_y, kappa_y, kappa_x, sigma_pi = self._decode(v)
        mu_y = self.model.X @ beta
        xk = self.model.X @ kappa_x
        rec = kernels.fbp_records(self.model.yt, self.model.zpi, mu_y, xk,
                                  kappa_y, sigma_y, sigma_pi,
                                  self.model.include_jacobian)
        live = self.alpha > 0
        lp = float(np.dot(self.alpha[live], rec[live])) \
            + self._log_prior(v, sigma_y, sigma_pi)
        return lp, rec

    def to_natural(self, v):
        beta, sigma_y, kappa_y, kappa_x, sigma_pi = self._decode(v)
        return np.concatenate([beta, [sigma_y, kappa_y], kappa_x, [sigma_pi]])

    def from_natural(self, p):
        K = self.model.K
        out = np.asarray(p, dtype=np.float64).copy()
        out[K] = math.log(p[K])
        out[2 * K + 2] = math.log(p[2 * K + 2])
        return out

    def initial_point(self):
        return self.from_natural(self.model.initial_params_row())


class FbpModel:
    name = "fbp"

    def __init__(self, dataset, prior=None, interactions=False,
                 include_jacobian=True):
        if dataset.pi is None:
            raise DataError("the population synthesizer requires inclusion "
                            "probabilities (pi) on every record")
        self.dataset = dataset
        self.prior = prior or FbpPriorSpec()
        # whether the +log pi change-of-variable term enters the risk
        # likelihood (giving the normalized density of (log y, log pi));
        # posterior fits are unaffected (the term is constant in theta)
        self.include_jacobian = include_jacobian
        self.X = np.ascontiguousarray(dataset.design_matrix(interactions))
        self.K = self.X.shape[1]
        self.yt = np.ascontiguousarray(np.log(dataset.y))
        self.zpi = np.ascontiguousarray(np.log(dataset.pi))

    @property
    def n(self):
        return self.dataset.n

    @property
    def dim(self):
        return 2 * self.K + 3

    def make_target(self, alpha):
        return _FbpTarget(self, alpha)

    def params_from_row(self, row):
        K = self.K
        return FbpParams(beta=np.asarray(row[:K]), sigma_y=float(row[K]),
                         kappa_y=float(row[K + 1]),
                         kappa_x=np.asarray(row[K + 2:2 * K + 2]),
                         sigma_pi=float(row[2 * K + 2]))

    def initial_params_row(self):
        beta, *_ = np.linalg.lstsq(self.X, self.yt, rcond=None)
        sd_y = max(float(np.std(self.yt - self.X @ beta)), 1e-3)
        design = np.column_stack([self.yt, self.X])
        kappa, *_ = np.linalg.lstsq(design, self.zpi, rcond=None)
        sd_pi = max(float(np.std(self.zpi - design @ kappa)), 1e-3)
        return np.concatenate([beta, [sd_y, kappa[0]], kappa[1:], [sd_pi]])

    def log_density_records(self, params):
        """Per-record log density of the observed (log y, log pi) pair under
        the sample-corrected model; integrates to one over the plane."""
        mu_y = self.X @ params.beta
        xk = self.X @ params.kappa_x
        return kernels.fbp_records(self.yt, self.zpi, mu_y, xk, params.kappa_y,
                                   params.sigma_y, params.sigma_pi, True)

    def loglik_matrix(self, draws):
        out = np.empty((draws.n_draws, self.n))
        for s in range(draws.n_draws):
            params = self.params_from_row(draws.draws[s])
            mu_y = self.X @ params.beta
            xk = self.X @ params.kappa_x
            kernels.fbp_records(self.yt, self.zpi, mu_y, xk, params.kappa_y,
                                params.sigma_y, params.sigma_pi,
                                self.include_jacobian, out=out[s])
        return out

    def _normalize_weights(self, inv_pi, stratum_totals):
        """Per-stratum constants c_h so the weights sum to the given stratum
        totals (the raw synthetic totals of the same release, or the observed
        totals when no release is at hand)."""
        w = np.empty_like(inv_pi)
        for h in range(self.dataset.n_strata):
            members = self.dataset.stratum_idx == h
            if not np.any(members):
                continue
            total = float(stratum_totals[h])
            if total <= 0:
                raise DataError(f"stratum {h} has zero reference weight total")
            w[members] = inv_pi[members] * (total / float(np.sum(inv_pi[members])))
        return w

    def _stratum_totals(self, w):
        return np.array([float(np.sum(w[self.dataset.stratum_idx == h]))
                         for h in range(self.dataset.n_strata)])

    def generate_one(self, params, rng):
        mu_y = self.X @ params.beta
        xk = self.X @ params.kappa_x
        yt_star = mu_y + params.sigma_y * rng.standard_normal(self.n)
        z_star = params.kappa_y * yt_star + xk \
            + params.sigma_pi * rng.standard_normal(self.n)
        pi_star = np.exp(z_star)
        y_star = np.exp(yt_star)
        # the fitted inclusion model reproduces the observed probability
        # scale (intercepts included), so raw weights are 1/pi* directly;
        # stratum totals float from draw to draw like any other estimate
        w_star = 1.0 / pi_star
        w_smooth = self.smoothed_weights(y_star, params,
                                         self._stratum_totals(w_star))
        return y_star, pi_star, w_star, w_smooth

    def smoothed_weights(self, y_star, params, stratum_totals=None):
        """Weights from the outcome-driven component of the inclusion model
        only; within a stratum they vary only through y*.  The dropped
        x-component is restored by rescaling to the given per-stratum totals
        (the same release's raw totals, or the observed ones by default)."""
        yt_star = np.log(np.asarray(y_star, dtype=np.float64))
        pi_tilde = np.exp(params.kappa_y * yt_star)
        if stratum_totals is None:
            stratum_totals = self._stratum_totals(self.dataset.w)
        return self._normalize_weights(1.0 / pi_tilde, stratum_totals)

    def synthesize(self, draws, m, seed, account=None):
        if m < 1:
            raise DataError("m must be >= 1")
        if m > draws.n_draws:
            raise DataError(f"m={m} exceeds the {draws.n_draws} available draws")
        from .fbs import selected_draw_indices

        idx = selected_draw_indices(draws.n_draws, m)
        y = np.empty((m, self.n))
        w = np.empty((m, self.n))
        ws = np.empty((m, self.n))
        for ell, s in enumerate(idx):
            params = self.params_from_row(draws.draws[s])
            rng = derive_rng(seed, "synth", self.name, ell)
            y[ell], _, w[ell], ws[ell] = self.generate_one(params, rng)
        return SyntheticRelease(mechanism=self.name, base=self.dataset, y=y, w=w,
                                w_smoothed=ws, seed=seed, draw_indices=list(idx),
                                account=account)
