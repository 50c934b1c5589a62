"""Fully Bayesian inference: sequential Monte Carlo inside independent
Metropolis-Hastings.

One SMC pass propagates N particles through t = 1..T.  Each particle
carries the sparsity-window length d_t (fixed, or a binomial chain), the
latent scales tau_t drawn from the conditional GIG law, and beta_t drawn
from the locally optimal Gaussian proposal; the incremental weight is the
analytic marginal N(y_t; alpha X_t beta_{t-1}, X_t D_tau X_t' + sigma^2 I)
and therefore does not depend on the sampled beta_t.  Systematic
resampling runs every step by default.  The evidence estimate
Z-hat = prod_t mean(w_t) is unbiased, which makes the outer independent
MH chain (accept with probability min(1, Z*/Z)) exact for the posterior
over trajectories.

Particle histories are kept as per-generation states plus ancestor
indices; the window of past beta values needed by the GIG conditional is
read from a rolling lineage buffer that is re-gathered at every
resampling step, so windows never mix values across particle lineages.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy.special import logsumexp

from .distributions import gig_rvs
from .errors import DegeneracyError, DomainError, NumericalError
from .map_em import RegressionData
from .prior import ModelConfig, _mahal_sq_batch

__all__ = [
    "Particle",
    "PosteriorChain",
    "PosteriorSummary",
    "propose_step",
    "smc_run",
    "pimh_run",
    "posterior_summary",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class Particle:
    """One particle at one generation."""

    beta_t: NDArray[np.float64]
    tau_t: NDArray[np.float64]
    d_t: int
    ancestor: int
    log_weight: float


@dataclass
class PosteriorChain:
    """Output of the independent MH chain over SMC runs."""

    betas: NDArray[np.float64]  # M x p x T
    ds: NDArray[np.int64]  # M x T
    log_evidence: NDArray[np.float64]  # M
    accepted: NDArray[np.bool_]  # M

    @property
    def acceptance_rate(self) -> float:
        if self.accepted.shape[0] <= 1:
            return 1.0
        return float(np.mean(self.accepted[1:]))


@dataclass
class PosteriorSummary:
    """Plot-ready posterior tables."""

    mean: NDArray[np.float64]  # p x T
    quantiles: NDArray[np.float64]  # len(probs) x p x T
    probs: NDArray[np.float64]
    d_posterior: NDArray[np.float64]  # (max_d+1) x T, columns sum to 1
    log_evidence: NDArray[np.float64]  # per-iteration trace


def _sample_tau(
    hist: NDArray[np.float64],
    ds: NDArray[np.int64],
    config: ModelConfig,
    rng: np.random.Generator,
    scaled_at_zero: bool,
) -> NDArray[np.float64]:
    """Latent scales for every (particle, coefficient) pair.

    ``hist`` is the lineage buffer (N, p, L) with the most recent value
    last; ``ds[i]`` window lengths (all <= L).  The scaled conditional
    pairs with a Gaussian step of mean alpha * beta_{t-1} and variance
    tau; ``scaled_at_zero`` keeps that convention at d = 0 (the binomial
    chain's transition), whereas t = 1 and the fixed d = 0 model use the
    unscaled marginal GIG paired with a mean-zero step.
    """
    N, p, _ = hist.shape
    sa2 = 1.0 - config.alpha**2
    nu_arr = np.empty((N, p))
    dl_arr = np.empty((N, p))
    gm_arr = np.empty((N, p))
    for d in np.unique(ds):
        idx = ds == d
        if d == 0:
            nu_arr[idx] = config.nu
            if scaled_at_zero:
                dl_arr[idx] = np.sqrt(sa2) * config.delta
                gm_arr[idx] = config.gamma / np.sqrt(sa2)
            else:
                dl_arr[idx] = config.delta
                gm_arr[idx] = config.gamma
            continue
        block = hist[idx, :, hist.shape[2] - d :].reshape(-1, d)
        msq = _mahal_sq_batch(block, config.alpha).reshape(-1, p)
        nu_arr[idx] = config.nu - d / 2.0
        dl_arr[idx] = np.sqrt(sa2 * (config.delta**2 + msq))
        gm_arr[idx] = config.gamma / np.sqrt(sa2)
    return gig_rvs(nu_arr, dl_arr, gm_arr, rng)


def _log_weights(
    y: NDArray[np.float64],
    X: NDArray[np.float64],
    tau: NDArray[np.float64],
    prev_beta: NDArray[np.float64],
    mean_scale: NDArray[np.float64],
    sigma2: float,
    alpha: float,
) -> NDArray[np.float64]:
    """log N(y; alpha X beta_{t-1}, X D_tau X' + sigma^2 I) per particle.

    ``mean_scale`` is 0 or 1 per particle: particles with an empty
    window (d = 0 under a fixed-d model, or t = 1) revert to the prior
    mean zero.
    """
    n = y.shape[0]
    resid = y[None, :] - alpha * mean_scale[:, None] * (prev_beta @ X.T)
    cov = np.einsum("nj,ij,mj->inm", X, tau, X)
    cov[:, np.arange(n), np.arange(n)] += sigma2
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"weight covariance not positive definite: {exc}") from exc
    sol = np.linalg.solve(cov, resid[:, :, None])[:, :, 0]
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
    return -0.5 * (n * _LOG_2PI + logdet + np.einsum("in,in->i", resid, sol))


def _propose_beta(
    y: NDArray[np.float64],
    X: NDArray[np.float64],
    tau: NDArray[np.float64],
    prev_beta: NDArray[np.float64],
    mean_scale: NDArray[np.float64],
    sigma2: float,
    alpha: float,
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    """Draw beta_t from N(mu_t, Sigma_t), the locally optimal proposal."""
    N, p = tau.shape
    prec = np.einsum("nj,nk->jk", X, X)[None, :, :] / sigma2
    prec = np.repeat(prec, N, axis=0)
    prec[:, np.arange(p), np.arange(p)] += 1.0 / tau
    rhs = alpha * mean_scale[:, None] * prev_beta / tau + (X.T @ y)[None, :] / sigma2
    try:
        chol = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(prec).max()
        raise NumericalError(
            f"proposal precision ill-conditioned (max condition {cond:.3e}): {exc}"
        ) from exc
    mu = np.linalg.solve(prec, rhs[:, :, None])[:, :, 0]
    z = rng.standard_normal((N, p))
    return mu + np.linalg.solve(np.transpose(chol, (0, 2, 1)), z[:, :, None])[:, :, 0]


def _systematic_resample(
    weights: NDArray[np.float64], rng: np.random.Generator
) -> NDArray[np.int64]:
    """Systematic resampling: one uniform, N evenly spaced points."""
    N = weights.shape[0]
    positions = (rng.random() + np.arange(N)) / N
    return np.searchsorted(np.cumsum(weights), positions).clip(max=N - 1)


def _next_d(
    ds: NDArray[np.int64], t: int, config: ModelConfig, rng: np.random.Generator
) -> NDArray[np.int64]:
    """Window lengths at step t (1-based): binomial chain or min(d, t-1)."""
    if config.fixed_d:
        return np.full(ds.shape, min(int(config.d), t - 1), dtype=np.int64)
    return rng.binomial(ds + 1, config.rho).astype(np.int64)


def propose_step(
    prev: Optional[Particle],
    y_t: NDArray[np.float64],
    X_t: NDArray[np.float64],
    config: ModelConfig,
    rng: np.random.Generator,
    history: Optional[NDArray[np.float64]] = None,
    t: int = 2,
) -> tuple[Particle, float]:
    """Single-particle propagation (the unit of Algorithm 1's inner loop).

    ``history`` holds the lineage's past beta values (p x m, most recent
    last, m >= the window length that will be drawn); ``prev`` is None at
    t = 1.  Returns the new particle and its log-weight.
    """
    y_t = np.atleast_1d(np.asarray(y_t, dtype=float))
    X_t = np.atleast_2d(np.asarray(X_t, dtype=float))
    p = X_t.shape[1]
    s2 = config.sigma**2
    if prev is None:
        d_t = 0
        prev_beta = np.zeros((1, p))
        hist = np.zeros((1, p, 0))
        ancestor = -1
    else:
        d_arr = _next_d(np.array([prev.d_t], dtype=np.int64), t, config, rng)
        d_t = int(d_arr[0])
        if history is None:
            history = prev.beta_t[:, None]
        if history.shape[1] < d_t:
            raise DomainError(
                f"history depth {history.shape[1]} < sampled window length {d_t}"
            )
        prev_beta = prev.beta_t[None, :]
        hist = history[None, :, :]
        ancestor = prev.ancestor
    scaled_at_zero = prev is not None and not config.fixed_d
    mean_scale = np.array([1.0 if (d_t > 0 or scaled_at_zero) else 0.0])
    tau = _sample_tau(
        hist, np.array([d_t], dtype=np.int64), config, rng, scaled_at_zero
    )
    lw = _log_weights(y_t, X_t, tau, prev_beta, mean_scale, s2, config.alpha)
    beta = _propose_beta(
        y_t, X_t, tau, prev_beta, mean_scale, s2, config.alpha, rng
    )
    particle = Particle(
        beta_t=beta[0],
        tau_t=tau[0],
        d_t=d_t,
        ancestor=ancestor,
        log_weight=float(lw[0]),
    )
    return particle, float(lw[0])


def smc_run(
    data: RegressionData,
    config: ModelConfig,
    N: int,
    rng: np.random.Generator,
    ess_threshold: Optional[float] = None,
) -> tuple[NDArray[np.float64], NDArray[np.int64], float]:
    """One SMC pass; returns (trajectory draw, d draw, log evidence).

    ``ess_threshold`` switches resampling from every-step (the default)
    to adaptive: resample only when the effective sample size drops
    below ``ess_threshold * N``.
    """
    if N < 2:
        raise DomainError(f"need at least 2 particles, got N={N}")
    T, p = data.T, data.p
    s2 = config.sigma**2
    alpha = config.alpha

    states = np.empty((T, N, p))
    d_hist = np.empty((T, N), dtype=np.int64)
    ancestors = np.empty((T, N), dtype=np.int64)

    hist = np.zeros((N, p, 0))  # lineage window buffer, regathered on resample
    ds = np.zeros(N, dtype=np.int64)
    prev_beta = np.zeros((N, p))
    log_norm_w = np.full(N, -np.log(N))  # normalized weights carried over
    log_Z = 0.0

    for t in range(T):
        y, X = data.ys[t], data.Xs[t]
        scaled_at_zero = t > 0 and not config.fixed_d
        if t > 0:
            ds = _next_d(ds, t + 1, config, rng)
        # t = 1 and the fixed d = 0 model step from the prior mean 0; the
        # binomial chain steps from alpha * beta_{t-1} even at d_t = 0
        if t == 0:
            mean_scale = np.zeros(N)
        elif scaled_at_zero:
            mean_scale = np.ones(N)
        else:
            mean_scale = (ds > 0).astype(float)
        tau = _sample_tau(hist, ds, config, rng, scaled_at_zero)
        lw = _log_weights(y, X, tau, prev_beta, mean_scale, s2, alpha)
        beta = _propose_beta(y, X, tau, prev_beta, mean_scale, s2, alpha, rng)

        total = log_norm_w + lw
        if np.all(np.isinf(total) & (total < 0)) or np.all(np.isnan(total)):
            raise DegeneracyError(f"all particle weights collapsed at t={t + 1}")
        log_Z += float(logsumexp(total))
        log_norm_w = total - logsumexp(total)

        states[t] = beta
        d_hist[t] = ds

        w = np.exp(log_norm_w)
        ess = 1.0 / np.sum(w**2)
        if ess_threshold is None or ess < ess_threshold * N:
            anc = _systematic_resample(w, rng)
            log_norm_w = np.full(N, -np.log(N))
        else:
            anc = np.arange(N)
        ancestors[t] = anc
        w_final = w

        hist = np.concatenate([hist, beta[:, :, None]], axis=2)
        keep = int(ds.max()) + 1  # deepest window next step can request
        hist = hist[anc, :, max(0, hist.shape[2] - keep) :]
        prev_beta = beta[anc]
        ds = ds[anc]

    # final draw proportional to the terminal (pre-resample) weights,
    # traced through the ancestry: the parent of pre-resample particle i
    # at time t is ancestors[t-1][i]
    cur = int(rng.choice(N, p=w_final / w_final.sum()))
    trajectory = np.empty((p, T))
    d_draw = np.empty(T, dtype=np.int64)
    for t in range(T - 1, -1, -1):
        trajectory[:, t] = states[t, cur]
        d_draw[t] = d_hist[t, cur]
        if t > 0:
            cur = int(ancestors[t - 1][cur])
    return trajectory, d_draw, log_Z


def pimh_run(
    data: RegressionData,
    config: ModelConfig,
    N: int,
    M: int,
    rng: np.random.Generator,
    ess_threshold: Optional[float] = None,
) -> PosteriorChain:
    """Independent MH over SMC runs (accept with min(1, Z*/Z))."""
    if M < 1:
        raise DomainError(f"need at least one iteration, got M={M}")
    T, p = data.T, data.p
    betas = np.empty((M, p, T))
    ds = np.empty((M, T), dtype=np.int64)
    log_ev = np.empty(M)
    accepted = np.zeros(M, dtype=bool)

    cur_beta, cur_d, cur_lz = smc_run(data, config, N, rng, ess_threshold)
    betas[0], ds[0], log_ev[0] = cur_beta, cur_d, cur_lz
    accepted[0] = True
    for m in range(1, M):
        try:
            prop_beta, prop_d, prop_lz = smc_run(data, config, N, rng, ess_threshold)
        except (DegeneracyError, NumericalError) as exc:
            warnings.warn(
                f"iteration {m + 1}: proposal SMC failed ({exc}); counted as rejection",
                RuntimeWarning,
                stacklevel=2,
            )
            betas[m], ds[m], log_ev[m] = cur_beta, cur_d, cur_lz
            continue
        if np.log(rng.random()) < prop_lz - cur_lz:
            cur_beta, cur_d, cur_lz = prop_beta, prop_d, prop_lz
            accepted[m] = True
        betas[m], ds[m], log_ev[m] = cur_beta, cur_d, cur_lz
    return PosteriorChain(betas=betas, ds=ds, log_evidence=log_ev, accepted=accepted)


def posterior_summary(
    chain: PosteriorChain, probs: NDArray[np.float64]
) -> PosteriorSummary:
    """Posterior mean/quantile tables and the per-t window-length law."""
    probs = np.atleast_1d(np.asarray(probs, dtype=float))
    if chain.betas.shape[0] == 0:
        raise DomainError("empty chain")
    if np.any((probs <= 0) | (probs >= 1)):
        raise DomainError("quantile probabilities must lie strictly in (0, 1)")
    mean = chain.betas.mean(axis=0)
    quantiles = np.quantile(chain.betas, probs, axis=0)
    max_d = int(chain.ds.max())
    T = chain.ds.shape[1]
    d_post = np.zeros((max_d + 1, T))
    for t in range(T):
        counts = np.bincount(chain.ds[:, t], minlength=max_d + 1)
        d_post[:, t] = counts / counts.sum()
    return PosteriorSummary(
        mean=mean,
        quantiles=quantiles,
        probs=probs,
        d_posterior=d_post,
        log_evidence=chain.log_evidence.copy(),
    )
