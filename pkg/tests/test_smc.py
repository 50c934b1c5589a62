"""Particle filter and independent MH: weight identities, unbiasedness,
resampling, lineage structure, and chain summaries."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from dynsparse import (
    DegeneracyError,
    DomainError,
    GhParams,
    ModelConfig,
    Particle,
    PosteriorChain,
    RegressionData,
    conditional_gh,
    gh_log_pdf,
    pimh_run,
    posterior_summary,
    propose_step,
    smc_run,
)
from dynsparse.smc import _log_weights, _propose_beta, _systematic_resample

from helpers import gh_pdf_by_mixture, normal_pdf


def cfg(**kw):
    base = dict(nu=1.0, delta=0.5, gamma=1.0, alpha=0.5, sigma=0.7, p=1, d=0)
    base.update(kw)
    return ModelConfig(**base)


def iid_log_evidence(config, data):
    """Quadrature log-evidence for d = 0 (independent coefficients, p=1)."""
    marg = GhParams(0.0, config.nu, config.delta, config.gamma)
    total = 0.0
    for y, X in zip(data.ys, data.Xs):
        x = X[0, 0]

        def f(b):
            return normal_pdf(y[0], x * b, config.sigma**2) * gh_pdf_by_mixture(
                marg, b, rel_tol=1e-9
            )

        val, _ = quad(f, -np.inf, np.inf, epsabs=0.0, epsrel=1e-9, limit=400)
        total += math.log(val)
    return total


# ---------------------------------------------------------------------------
# weight identity and proposal structure
# ---------------------------------------------------------------------------


def test_weight_scalar_formula():
    # p=1, n=1, X=1: log N(y; alpha*beta_prev, tau + sigma^2)
    y, X = np.array([1.3]), np.array([[1.0]])
    tau = np.array([[0.8]])
    prev = np.array([[2.0]])
    lw = _log_weights(y, X, tau, prev, np.ones(1), 0.49, 0.5)
    expected = math.log(normal_pdf(1.3, 0.5 * 2.0, 0.8 + 0.49))
    assert lw[0] == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_weight_matches_quadrature_marginal(seed):
    # p=2, n=2: the analytic weight equals integrating beta out of
    # N(y; X beta, s2 I) N(beta; alpha*prev, D_tau)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((2, 2))
    y = rng.standard_normal(2)
    tau = rng.uniform(0.3, 2.0, (1, 2))
    prev = rng.standard_normal((1, 2))
    alpha, s2 = 0.6, 0.5
    lw = _log_weights(y, X, tau, prev, np.ones(1), s2, alpha)

    mean = alpha * prev[0]

    def inner(b1, b2):
        b = np.array([b1, b2])
        r = y - X @ b
        like = math.exp(-0.5 * np.dot(r, r) / s2) / (2 * math.pi * s2)
        pri = normal_pdf(b1, mean[0], tau[0, 0]) * normal_pdf(b2, mean[1], tau[0, 1])
        return like * pri

    lo1, hi1 = mean[0] - 9 * math.sqrt(tau[0, 0]), mean[0] + 9 * math.sqrt(tau[0, 0])
    lo2, hi2 = mean[1] - 9 * math.sqrt(tau[0, 1]), mean[1] + 9 * math.sqrt(tau[0, 1])
    from scipy.integrate import dblquad

    val, _ = dblquad(inner, lo2, hi2, lo1, hi1, epsabs=1e-12, epsrel=1e-10)
    assert lw[0] == pytest.approx(math.log(val), abs=1e-6)


def test_proposal_reverts_to_prior_transition_without_data():
    # X = 0: mu = alpha * beta_prev, variance tau
    rng = np.random.default_rng(7)
    tau = np.full((20_000, 1), 1.7)
    prev = np.full((20_000, 1), 3.0)
    beta = _propose_beta(
        np.array([0.0]), np.array([[0.0]]), tau, prev, np.ones(20_000), 1.0, 0.4, rng
    )
    assert beta.mean() == pytest.approx(0.4 * 3.0, abs=0.03)
    assert beta.var() == pytest.approx(1.7, rel=0.05)


def test_propose_step_first_generation():
    rng = np.random.default_rng(0)
    config = cfg()
    particle, lw = propose_step(None, np.array([1.0]), np.eye(1), config, rng)
    assert particle.d_t == 0
    assert particle.tau_t.shape == (1,)
    assert np.isfinite(lw) and particle.log_weight == lw


def test_propose_step_insufficient_history():
    rng = np.random.default_rng(0)
    config = cfg(d=None, rho=1.0)  # forces d_t = d_{t-1} + 1
    prev = Particle(np.array([1.0]), np.array([1.0]), 3, 0, 0.0)
    with pytest.raises(DomainError, match="history"):
        propose_step(prev, np.array([1.0]), np.eye(1), config, rng,
                     history=np.ones((1, 2)))


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------


def test_systematic_resampling_preserves_expectations():
    rng = np.random.default_rng(3)
    vals = rng.standard_normal(200)
    w = rng.random(200)
    w /= w.sum()
    target = np.dot(w, np.tanh(vals))
    means = []
    for _ in range(400):
        idx = _systematic_resample(w, rng)
        means.append(np.tanh(vals[idx]).mean())
    se = np.std(means) / math.sqrt(len(means))
    assert abs(np.mean(means) - target) < 4 * se + 1e-12
    # counts concentrate: each expected count is off by less than 1
    idx = _systematic_resample(w, rng)
    counts = np.bincount(idx, minlength=200)
    assert np.all(np.abs(counts - 200 * w) < 1.0 + 1e-9)


# ---------------------------------------------------------------------------
# smc_run
# ---------------------------------------------------------------------------


def _tiny_data(T=1, seed=0, x=1.0):
    rng = np.random.default_rng(seed)
    ys = [np.array([0.6 + 0.1 * t + 0.01 * rng.standard_normal()]) for t in range(T)]
    Xs = [np.array([[x]])] * T
    return RegressionData(ys, Xs)


def test_evidence_single_step_matches_quadrature():
    config = cfg(d=0)
    data = _tiny_data(T=1)
    truth = iid_log_evidence(config, data)
    rng = np.random.default_rng(11)
    log_zs = np.array([smc_run(data, config, 64, rng)[2] for _ in range(300)])
    zs = np.exp(log_zs)
    se = zs.std(ddof=1) / math.sqrt(zs.size)
    assert abs(zs.mean() - math.exp(truth)) < 4 * se


def test_evidence_unbiased_two_steps():
    config = cfg(d=0)
    data = _tiny_data(T=2)
    truth = math.exp(iid_log_evidence(config, data))
    rng = np.random.default_rng(13)
    zs = np.exp([smc_run(data, config, 50, rng)[2] for _ in range(500)])
    se = zs.std(ddof=1) / math.sqrt(zs.size)
    assert abs(zs.mean() - truth) < 4 * se


def test_posterior_mean_converges_in_n():
    # fixed d=1, T=2: compare against a nested-quadrature posterior mean
    config = cfg(d=1, alpha=0.5)
    data = _tiny_data(T=2)
    marg = GhParams(0.0, config.nu, config.delta, config.gamma)
    s2 = config.sigma**2

    def joint(b1):
        cond = conditional_gh(config, np.array([b1]))

        def inner(b2):
            return normal_pdf(data.ys[1][0], b2, s2) * math.exp(gh_log_pdf(cond, b2))

        val, _ = quad(inner, -12, 12, epsabs=1e-13, epsrel=1e-9, limit=300)
        return val * normal_pdf(data.ys[0][0], b1, s2) * math.exp(gh_log_pdf(marg, b1))

    grid = np.linspace(-6, 6, 1201)
    dens = np.array([joint(b) for b in grid])
    norm = np.trapezoid(dens, grid)
    target = np.trapezoid(grid * dens, grid) / norm
    cdf = np.concatenate(
        [[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(grid))]
    ) / norm

    rng = np.random.default_rng(17)
    draws = np.array(
        [smc_run(data, config, 300, rng)[0][0, 0] for _ in range(3000)]
    )
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - target) < 4 * se
    # trajectory draws reproduce the quadrature posterior law of beta_1
    for q in [0.2, 0.6, 1.0, 1.4]:
        emp = np.mean(draws <= q)
        assert emp == pytest.approx(np.interp(q, grid, cdf), abs=0.04)


def test_lineage_d_increments_bounded():
    # along any ancestral line d_t <= d_{t-1} + 1, read via the genealogy
    config = cfg(d=None, rho=0.8, delta=0.3)
    data = _tiny_data(T=30, seed=5)
    rng = np.random.default_rng(23)
    for _ in range(5):
        _, d_draw, _ = smc_run(data, config, 40, rng)
        assert d_draw[0] == 0
        assert np.all(np.diff(d_draw) <= 1)
        assert np.all(d_draw >= 0)


def test_smc_reproducible_and_requires_particles():
    config = cfg()
    data = _tiny_data(T=3)
    out1 = smc_run(data, config, 32, np.random.default_rng(9))
    out2 = smc_run(data, config, 32, np.random.default_rng(9))
    assert np.array_equal(out1[0], out2[0]) and out1[2] == out2[2]
    with pytest.raises(DomainError, match="particles"):
        smc_run(data, config, 1, np.random.default_rng(0))


def test_weight_collapse_raises_degeneracy():
    config = cfg()
    data = RegressionData([np.array([1e200])], [np.eye(1)])
    with pytest.raises(DegeneracyError, match="t=1"):
        smc_run(data, config, 16, np.random.default_rng(2))


def test_ess_mode_matches_evidence_scale():
    config = cfg(d=0)
    data = _tiny_data(T=4)
    rng = np.random.default_rng(31)
    every = np.mean([smc_run(data, config, 100, rng)[2] for _ in range(60)])
    adaptive = np.mean(
        [smc_run(data, config, 100, rng, ess_threshold=0.5)[2] for _ in range(60)]
    )
    assert abs(every - adaptive) < 0.05


# ---------------------------------------------------------------------------
# pimh_run / posterior_summary
# ---------------------------------------------------------------------------


def test_acceptance_rate_increases_with_n():
    config = cfg(d=1)
    data = _tiny_data(T=4, seed=2)
    rates = []
    rng = np.random.default_rng(41)
    for N in [5, 50, 500]:
        chain = pimh_run(data, config, N, 120, rng)
        rates.append(chain.acceptance_rate)
    assert rates[0] < rates[2]
    assert rates[-1] > 0.5


def test_chain_stores_current_or_proposed():
    config = cfg(d=1)
    data = _tiny_data(T=3, seed=4)
    chain = pimh_run(data, config, 20, 50, np.random.default_rng(3))
    for m in range(1, 50):
        same = np.array_equal(chain.betas[m], chain.betas[m - 1])
        assert same != chain.accepted[m] or chain.accepted[m]


def test_summary_single_iteration_and_symmetry():
    beta = np.arange(6.0).reshape(1, 2, 3)
    chain = PosteriorChain(
        betas=beta, ds=np.zeros((1, 3), dtype=np.int64),
        log_evidence=np.zeros(1), accepted=np.ones(1, dtype=bool),
    )
    summ = posterior_summary(chain, np.array([0.5]))
    assert np.array_equal(summ.mean, beta[0])
    sym = PosteriorChain(
        betas=np.concatenate([beta, -beta]),
        ds=np.zeros((2, 3), dtype=np.int64),
        log_evidence=np.zeros(2),
        accepted=np.ones(2, dtype=bool),
    )
    assert np.allclose(posterior_summary(sym, np.array([0.5])).mean, 0.0)


def test_summary_quantiles_sorting_oracle():
    rng = np.random.default_rng(8)
    betas = rng.standard_normal((101, 2, 4))
    chain = PosteriorChain(
        betas=betas,
        ds=rng.integers(0, 3, (101, 4)).astype(np.int64),
        log_evidence=rng.standard_normal(101),
        accepted=np.ones(101, dtype=bool),
    )
    probs = np.array([0.1, 0.5, 0.9])
    summ = posterior_summary(chain, probs)
    for k, q in enumerate(probs):
        for j in range(2):
            for t in range(4):
                srt = np.sort(betas[:, j, t])
                assert summ.quantiles[k, j, t] == pytest.approx(
                    np.quantile(srt, q), abs=1e-12
                )
    assert np.allclose(summ.d_posterior.sum(axis=0), 1.0)


def test_summary_validation():
    chain = PosteriorChain(
        betas=np.zeros((0, 1, 1)), ds=np.zeros((0, 1), dtype=np.int64),
        log_evidence=np.zeros(0), accepted=np.zeros(0, dtype=bool),
    )
    with pytest.raises(DomainError, match="empty"):
        posterior_summary(chain, np.array([0.5]))
    good = PosteriorChain(
        betas=np.zeros((2, 1, 1)), ds=np.zeros((2, 1), dtype=np.int64),
        log_evidence=np.zeros(2), accepted=np.ones(2, dtype=bool),
    )
    with pytest.raises(DomainError, match="0, 1"):
        posterior_summary(good, np.array([1.5]))
