"""Adaptive random-walk Metropolis sampler for arbitrary log densities.

Targets are supplied in an unconstrained parameterization (log for scales,
atanh for correlations) with all change-of-variable Jacobians folded into the
density; draws are returned on the natural scale.  The proposal covariance is
adapted from the chain history during warmup only (diagonal first, then the
dense empirical covariance, with an acceptance-rate-tuned scale); after
warmup the kernel is frozen so the chain targets the exact density.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import derive_rng

TARGET_ACCEPT = 0.234


class McmcError(RuntimeError):
    pass


class TargetBase:
    """Base for log-density targets.

    Subclasses provide ``dim``, ``eval`` returning (log density, per-record
    log-likelihood vector), and the constraint maps between the unconstrained
    sampling space and the natural parameter space.
    """

    dim: int

    def eval(self, v):
        raise NotImplementedError

    def logpost(self, v):
        return self.eval(v)[0]

    def to_natural(self, v):
        return np.asarray(v, dtype=np.float64)

    def from_natural(self, p):
        return np.asarray(p, dtype=np.float64)

    def initial_point(self):
        return np.zeros(self.dim)


class FunctionTarget(TargetBase):
    """Wrap plain callables as a target; identity constraint map by default."""

    def __init__(self, dim, logpost_fn, records_fn=None, to_natural=None,
                 from_natural=None, init=None):
        self.dim = dim
        self._logpost = logpost_fn
        self._records = records_fn
        self._to_natural = to_natural
        self._from_natural = from_natural
        self._init = init

    def eval(self, v):
        lp = float(self._logpost(v))
        rec = np.zeros(0) if self._records is None else np.asarray(self._records(v))
        return lp, rec

    def logpost(self, v):
        return float(self._logpost(v))

    def to_natural(self, v):
        if self._to_natural is None:
            return np.asarray(v, dtype=np.float64).copy()
        return self._to_natural(v)

    def from_natural(self, p):
        if self._from_natural is None:
            return np.asarray(p, dtype=np.float64).copy()
        return self._from_natural(p)

    def initial_point(self):
        if self._init is None:
            return np.zeros(self.dim)
        return np.asarray(self._init, dtype=np.float64).copy()


@dataclass
class SampleConfig:
    chains: int = 2
    warmup: int = 5000
    keep: int = 2000
    thin: int = 1
    seed: int = 0
    init: np.ndarray | None = None
    init_scale: float = 0.1
    # adaptation knobs; changing them only affects warmup behaviour
    cov_start: int = 200
    cov_refresh: int = 50
    reject_window: int = 500

    def validate(self):
        if self.keep < 1:
            raise McmcError("keep must be >= 1")
        if self.chains < 1:
            raise McmcError("chains must be >= 1")
        if self.warmup < 0 or self.thin < 1:
            raise McmcError("warmup must be >= 0 and thin >= 1")
        if not (self.init_scale > 0):
            raise McmcError("proposal init_scale must be > 0 (degenerate proposal)")


@dataclass
class PosteriorDraws:
    """Kept draws in the natural parameterization, chains stacked in order."""

    draws: np.ndarray
    acceptance_rate: float
    seed: int
    warmup: int
    thin: int
    chains: int = 1
    unconstrained: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=np.float64)
        if self.draws.ndim != 2 or self.draws.shape[0] < 1:
            raise McmcError("draws must be a non-empty S x dim matrix")
        if not np.all(np.isfinite(self.draws)):
            raise McmcError("draws contain non-finite entries")
        if not (0.0 <= self.acceptance_rate <= 1.0):
            raise McmcError("acceptance rate outside [0, 1]")

    @property
    def n_draws(self):
        return self.draws.shape[0]


def _run_chain(target, config, chain_index):
    rng = derive_rng(config.seed, "mcmc-chain", chain_index)
    dim = target.dim
    v = np.asarray(config.init if config.init is not None else target.initial_point(),
                   dtype=np.float64).copy()
    if v.shape != (dim,):
        raise McmcError(f"init has shape {v.shape}, expected ({dim},)")
    lp = target.logpost(v)
    if not np.isfinite(lp):
        raise McmcError(f"log density is not finite at the initial point ({lp})")

    log_lam = np.log(2.38**2 / dim)
    base_cov = np.eye(dim) * config.init_scale**2
    chol = np.linalg.cholesky(base_cov)
    mean = v.copy()
    m2 = np.zeros((dim, dim))
    seen = 1

    kept = np.empty((config.keep, dim))
    n_iter = config.warmup + config.keep * config.thin
    accepted_post = 0
    kept_count = 0
    consecutive_rejects = 0

    for t in range(1, n_iter + 1):
        warm = t <= config.warmup
        step = chol @ rng.standard_normal(dim)
        prop = v + np.exp(0.5 * log_lam) * step
        lp_prop = target.logpost(prop)
        if np.isfinite(lp_prop):
            log_acc = min(0.0, lp_prop - lp)
        else:
            log_acc = -np.inf
        if np.log(rng.random()) < log_acc:
            v, lp = prop, lp_prop
            consecutive_rejects = 0
            if not warm:
                accepted_post += 1
        else:
            consecutive_rejects += 1
            if warm and consecutive_rejects >= config.reject_window:
                raise McmcError(
                    f"no proposals accepted for {config.reject_window} consecutive "
                    "warmup iterations; initial point or proposal scale is mis-scaled")

        if warm:
            acc_prob = np.exp(log_acc)
            log_lam += (acc_prob - TARGET_ACCEPT) * min(0.1, t**-0.6)
            delta = v - mean
            seen += 1
            mean += delta / seen
            m2 += np.outer(delta, v - mean)
            if t >= config.cov_start and t % config.cov_refresh == 0:
                emp = m2 / (seen - 1)
                base_cov = emp + 1e-10 * np.eye(dim)
                try:
                    chol = np.linalg.cholesky(base_cov)
                except np.linalg.LinAlgError:
                    base_cov = emp + 1e-6 * np.eye(dim)
                    chol = np.linalg.cholesky(base_cov)
        else:
            offset = t - config.warmup
            if offset % config.thin == 0:
                kept[kept_count] = v
                kept_count += 1

    acc_rate = accepted_post / max(1, config.keep * config.thin)
    return kept, acc_rate


def sample(target, config):
    """Run the configured chains and merge kept draws by chain order."""
    config.validate()
    all_kept = []
    acc_rates = []
    for c in range(config.chains):
        kept, acc = _run_chain(target, config, c)
        all_kept.append(kept)
        acc_rates.append(acc)
    unconstrained = np.vstack(all_kept)
    natural = np.vstack([np.array([target.to_natural(v) for v in kept])
                         for kept in all_kept])
    return PosteriorDraws(
        draws=natural,
        acceptance_rate=float(np.mean(acc_rates)),
        seed=config.seed,
        warmup=config.warmup,
        thin=config.thin,
        chains=config.chains,
        unconstrained=unconstrained,
    )


def _autocorrelation(x):
    n = len(x)
    x = x - x.mean()
    size = 1
    while size < 2 * n:
        size <<= 1
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real / n
    return acov


def effective_sample_size(draws, coordinate):
    """ESS of one coordinate via Geyer's initial positive sequence.

    Autocorrelations are estimated within chains and averaged; the result is
    capped at draws.n_draws * draws.chains (antithetic chains can exceed the
    nominal draw count).
    """
    x = draws.draws[:, coordinate]
    s_total = len(x)
    if s_total < 10:
        raise McmcError("need at least 10 draws for an ESS estimate")
    per_chain = s_total // draws.chains
    acovs = []
    for c in range(draws.chains):
        seg = x[c * per_chain:(c + 1) * per_chain]
        acovs.append(_autocorrelation(seg))
    acov = np.mean(acovs, axis=0)
    if acov[0] <= 0 or not np.isfinite(acov[0]):
        raise McmcError("zero variance: constant chain has no ESS")
    rho = acov / acov[0]
    tau = -1.0
    k = 0
    while 2 * k + 1 < len(rho):
        gamma = rho[2 * k] + rho[2 * k + 1]
        if gamma <= 0:
            break
        tau += 2.0 * gamma
        k += 1
    cap = float(s_total * draws.chains)
    if tau <= 0:
        return cap
    return float(min(cap, s_total / tau))


def mcse_mean(draws, coordinate):
    """Monte Carlo standard error of the posterior mean of one coordinate."""
    x = draws.draws[:, coordinate]
    return float(np.std(x, ddof=1) / np.sqrt(effective_sample_size(draws, coordinate)))


def mcse_var(draws, coordinate):
    """Approximate MCSE of the posterior variance estimate (normal theory)."""
    x = draws.draws[:, coordinate]
    ess = effective_sample_size(draws, coordinate)
    return float(np.var(x, ddof=1) * np.sqrt(2.0 / ess))
