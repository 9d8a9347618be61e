"""Sample-distribution synthesizer: joint bivariate normal model for the
log outcome and log weight of each record, with cell predictors.

The model is fit on the observed sample without population correction; the
synthesized weights (raw or conditional-mean smoothed) carry the correction
into table construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import DataError, transform_arrays
from .mcmc import TargetBase
from .release import SyntheticRelease
from .rng import derive_rng


@dataclass(frozen=True)
class FbsParams:
    beta_y: np.ndarray
    beta_w: np.ndarray
    sigma_y: float
    sigma_w: float
    rho: float

    def __post_init__(self):
        if not (self.sigma_y > 0 and self.sigma_w > 0):
            raise DataError("scales must be positive")
        if not abs(self.rho) < 1:
            raise DataError("correlation must lie in (-1, 1)")

    @property
    def sigma(self):
        cov = self.rho * self.sigma_y * self.sigma_w
        return np.array([[self.sigma_y**2, cov], [cov, self.sigma_w**2]])


@dataclass(frozen=True)
class FbsPriorSpec:
    """Weakly informative defaults: heavy-tailed coefficient and scale priors
    plus a correlation prior concentrating mildly on independence."""

    coef_df: float = 3.0
    coef_scale: float = 10.0
    corr_shape: float = 6.0
    scale_df: float = 3.0
    scale_scale: float = 10.0

    def __post_init__(self):
        for v in (self.coef_df, self.coef_scale, self.corr_shape,
                  self.scale_df, self.scale_scale):
            if not v > 0:
                raise DataError("prior hyperparameters must be positive")


def _log_t(x, df, scale):
    c = (math.lgamma(0.5 * (df + 1)) - math.lgamma(0.5 * df)
         - 0.5 * math.log(df * math.pi) - math.log(scale))
    return c - 0.5 * (df + 1) * np.log1p((x / scale) ** 2 / df)


def _log_half_t(x, df, scale):
    return math.log(2.0) + _log_t(x, df, scale)


class _FbsTarget(TargetBase):
    def __init__(self, model, alpha):
        self.model = model
        self.dim = model.dim
        self.alpha = np.ascontiguousarray(alpha, dtype=np.float64)
        if len(self.alpha) != model.n:
            raise DataError("alpha length does not match record count")

    def _decode(self, v):
        K = self.model.K
        beta_y = v[:K]
        beta_w = v[K:2 * K]
        sigma_y = math.exp(v[2 * K])
        sigma_w = math.exp(v[2 * K + 1])
        rho = math.tanh(v[2 * K + 2])
        return beta_y, beta_w, sigma_y, sigma_w, rho

    def _log_prior(self, v, sigma_y, sigma_w, rho):
        K = self.model.K
        prior = self.model.prior
        lp = float(np.sum(_log_t(v[:2 * K], prior.coef_df, prior.coef_scale)))
        # scale priors include the log-Jacobian of the log parameterization
        lp += _log_half_t(sigma_y, prior.scale_df, prior.scale_scale) + v[2 * K]
        lp += _log_half_t(sigma_w, prior.scale_df, prior.scale_scale) + v[2 * K + 1]
        # correlation prior (1 - rho^2)^(shape - 1) with the tanh Jacobian folded in
        lp += prior.corr_shape * math.log1p(-rho * rho)
        return lp

    def logpost(self, v):
        beta_y, beta_w, sigma_y, sigma_w, rho = self._decode(v)
        mu_y = self.model.X @ beta_y
        mu_w = self.model.X @ beta_w
        ll = kernels.fbs_weighted_sum(self.model.yt, self.model.wt, mu_y, mu_w,
                                      sigma_y, sigma_w, rho,
                                      self.model.include_jacobian, self.alpha)
        return ll + self._log_prior(v, sigma_y, sigma_w, rho)

    def eval(self, v):
        beta_y, beta_w, sigma_y, sigma_w, rho = self._decode(v)
        mu_y = self.model.X @ beta_y
        mu_w = self.model.X @ beta_w
        rec = kernels.fbs_records(self.model.yt, self.model.wt, mu_y, mu_w,
                                  sigma_y, sigma_w, rho,
                                  self.model.include_jacobian)
        live = self.alpha > 0
        lp = float(np.dot(self.alpha[live], rec[live])) \
            + self._log_prior(v, sigma_y, sigma_w, rho)
        return lp, rec

    def to_natural(self, v):
        beta_y, beta_w, sigma_y, sigma_w, rho = self._decode(v)
        return np.concatenate([beta_y, beta_w, [sigma_y, sigma_w, rho]])

    def from_natural(self, p):
        K = self.model.K
        out = np.asarray(p, dtype=np.float64).copy()
        out[2 * K] = math.log(p[2 * K])
        out[2 * K + 1] = math.log(p[2 * K + 1])
        out[2 * K + 2] = math.atanh(p[2 * K + 2])
        return out

    def initial_point(self):
        return self.from_natural(self.model.initial_params_row())


class FbsModel:
    """Model wrapper: builds targets for fitting, recomputes per-record
    log-likelihoods at posterior draws, and generates synthetic releases."""

    name = "fbs"

    def __init__(self, dataset, prior=None, interactions=False,
                 include_jacobian=False):
        self.dataset = dataset
        self.prior = prior or FbsPriorSpec()
        # whether the -log y - log w transform Jacobian enters the risk
        # likelihood; posterior fits are unaffected (the term is constant)
        self.include_jacobian = include_jacobian
        self.X = np.ascontiguousarray(dataset.design_matrix(interactions))
        self.K = self.X.shape[1]
        yt, wt = transform_arrays(dataset.y, dataset.w)
        self.yt = np.ascontiguousarray(yt)
        self.wt = np.ascontiguousarray(wt)

    @property
    def n(self):
        return self.dataset.n

    @property
    def dim(self):
        return 2 * self.K + 3

    def make_target(self, alpha):
        return _FbsTarget(self, alpha)

    def params_from_row(self, row):
        K = self.K
        return FbsParams(beta_y=np.asarray(row[:K]), beta_w=np.asarray(row[K:2 * K]),
                         sigma_y=float(row[2 * K]), sigma_w=float(row[2 * K + 1]),
                         rho=float(row[2 * K + 2]))

    def initial_params_row(self):
        beta_y, res_y = _lstsq_with_residual_sd(self.X, self.yt)
        beta_w, res_w = _lstsq_with_residual_sd(self.X, self.wt)
        ry = self.yt - self.X @ beta_y
        rw = self.wt - self.X @ beta_w
        denom = np.std(ry) * np.std(rw)
        rho = float(np.clip(np.mean(ry * rw) / denom, -0.9, 0.9)) if denom > 0 else 0.0
        return np.concatenate([beta_y, beta_w, [res_y, res_w, rho]])

    def log_likelihood_records(self, params, include_jacobian=True):
        """Per-record log density at the given parameters: of (y, w) on the
        original scale by default, of (log y, log w) without the Jacobian."""
        mu_y = self.X @ params.beta_y
        mu_w = self.X @ params.beta_w
        return kernels.fbs_records(self.yt, self.wt, mu_y, mu_w, params.sigma_y,
                                   params.sigma_w, params.rho, include_jacobian)

    def loglik_matrix(self, draws):
        out = np.empty((draws.n_draws, self.n))
        for s in range(draws.n_draws):
            params = self.params_from_row(draws.draws[s])
            mu_y = self.X @ params.beta_y
            mu_w = self.X @ params.beta_w
            kernels.fbs_records(self.yt, self.wt, mu_y, mu_w, params.sigma_y,
                                params.sigma_w, params.rho, self.include_jacobian,
                                out=out[s])
        return out

    def smoothed_weights(self, y_star, params):
        """Conditional-mean weights exp(E[log w | log y*]) under the fitted
        bivariate normal; these remove weight variation unrelated to the
        outcome."""
        if params.sigma_y <= 0:
            raise DataError("sigma_y must be positive for weight smoothing")
        yt_star = np.log(np.asarray(y_star, dtype=np.float64))
        mu_y = self.X @ params.beta_y
        mu_w = self.X @ params.beta_w
        wt_smooth = mu_w + params.rho * (yt_star - mu_y) * params.sigma_w / params.sigma_y
        return np.exp(wt_smooth)

    def generate_one(self, params, rng):
        mu_y = self.X @ params.beta_y
        mu_w = self.X @ params.beta_w
        z1 = rng.standard_normal(self.n)
        z2 = rng.standard_normal(self.n)
        yt_star = mu_y + params.sigma_y * z1
        wt_star = mu_w + params.sigma_w * (params.rho * z1
                                           + math.sqrt(1 - params.rho**2) * z2)
        y_star = np.exp(yt_star)
        w_star = np.exp(wt_star)
        return y_star, w_star, self.smoothed_weights(y_star, params)

    def synthesize(self, draws, m, seed, account=None):
        """Generate m synthetic datasets from m evenly spaced parameter draws."""
        if m < 1:
            raise DataError("m must be >= 1")
        if m > draws.n_draws:
            raise DataError(f"m={m} exceeds the {draws.n_draws} available draws")
        idx = selected_draw_indices(draws.n_draws, m)
        y = np.empty((m, self.n))
        w = np.empty((m, self.n))
        ws = np.empty((m, self.n))
        for ell, s in enumerate(idx):
            params = self.params_from_row(draws.draws[s])
            rng = derive_rng(seed, "synth", self.name, ell)
            y[ell], w[ell], ws[ell] = self.generate_one(params, rng)
        return SyntheticRelease(mechanism=self.name, base=self.dataset, y=y, w=w,
                                w_smoothed=ws, seed=seed, draw_indices=list(idx),
                                account=account)


def selected_draw_indices(n_draws, m):
    if m == 1:
        return [n_draws - 1]
    return sorted({int(round(i)) for i in np.linspace(0, n_draws - 1, m)})


def _lstsq_with_residual_sd(X, y):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    sd = float(np.std(resid))
    return beta, max(sd, 1e-3)
