"""Shared quadrature oracles for the test suite.

Everything here is deliberately independent of the code paths it checks:
densities are integrated numerically through scipy.integrate, never through
the package's own normalizers or samplers.
"""

import math

import numpy as np
from scipy.integrate import quad

from dynsparse import gh_log_pdf, gig_log_pdf


def gig_unnormalized(nu, delta, gamma):
    """Unnormalized GIG density as a plain closure."""

    def f(x):
        if x <= 0.0:
            return 0.0
        return x ** (nu - 1.0) * math.exp(-0.5 * (delta**2 / x + gamma**2 * x))

    return f


def normal_pdf(x, mean, var):
    return math.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2.0 * math.pi * var)


def gh_pdf_by_mixture(params, x, rel_tol=1e-10):
    """GH density at x via quadrature over the mixing variable."""

    def f(tau):
        return normal_pdf(x, params.mu, tau) * math.exp(
            gig_log_pdf(params.mixing, tau)
        )

    val, _ = quad(f, 0.0, np.inf, epsabs=0.0, epsrel=rel_tol, limit=500)
    if val <= 0.0:
        # retry with domain splits for very peaked mixing laws
        val = sum(
            quad(f, lo, hi, epsabs=0.0, epsrel=rel_tol, limit=500)[0]
            for lo, hi in [(0.0, 1e-4), (1e-4, 1.0), (1.0, 1e4), (1e4, np.inf)]
        )
    return val


def gh_cdf_grid(params, xs, x_lo, x_hi, n_grid=20001):
    """GH cdf at the points xs via trapezoid integration of the pdf."""
    grid = np.linspace(x_lo, x_hi, n_grid)
    pdf = np.array([math.exp(gh_log_pdf(params, g)) for g in grid])
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(grid))])
    cdf /= cdf[-1]
    return np.interp(xs, grid, cdf)


def ks_statistic(samples, cdf_values):
    """Two-sided KS statistic of sorted samples against their model cdf values."""
    n = len(samples)
    ecdf_hi = np.arange(1, n + 1) / n
    ecdf_lo = np.arange(0, n) / n
    return max(np.max(np.abs(ecdf_hi - cdf_values)), np.max(np.abs(ecdf_lo - cdf_values)))
