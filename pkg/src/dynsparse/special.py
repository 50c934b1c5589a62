"""Log-scale special functions and the half-line quadrature oracle.

Every density in the package is computed in log space; the central
primitive is ``log K_a(z)``, the log of the modified Bessel function of
the second kind.  ``scipy.special.kve`` covers the bulk of the domain in
double precision; the extreme corner (tiny argument together with a large
order, where ``K_a(z)`` overflows a double) falls back to arbitrary
precision via mpmath.
"""

from __future__ import annotations

import math
from typing import Callable

import mpmath
import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln, kve

from .errors import DomainError, NumericalError

__all__ = ["log_bessel_k", "log_gig_normalizer", "integrate_positive_halfline"]


def log_bessel_k(order: float, arg: float) -> float:
    """log K_order(arg), valid for any real order and arg > 0.

    Symmetric in the order (K_a = K_{-a}).  Relative error on the value
    scale is ~1e-12 over arg in [1e-8, 1e4], |order| <= 50.
    """
    order = float(order)
    arg = float(arg)
    if not (math.isfinite(order) and math.isfinite(arg)):
        raise DomainError(f"log_bessel_k needs finite inputs, got order={order}, arg={arg}")
    if arg <= 0.0:
        raise DomainError(f"log_bessel_k needs arg > 0, got {arg}")
    v = abs(order)
    # kve(v, z) = K_v(z) * e^z avoids underflow of K_v for large z
    scaled = kve(v, arg)
    if np.isfinite(scaled) and scaled > 0.0:
        return math.log(scaled) - arg
    # K_v(z) itself overflows a double (small z, large v); mpmath is exact
    with mpmath.workdps(30):
        return float(mpmath.log(mpmath.besselk(v, mpmath.mpf(arg))))


def log_gig_normalizer(nu: float, delta: float, gamma: float) -> float:
    """Log normalizing constant of the GIG(nu, delta, gamma) density.

    The density is ``C * x^(nu-1) * exp(-(delta^2/x + gamma^2 x)/2)`` on
    (0, inf); this returns log C.  The boundaries delta = 0 (gamma limit)
    and gamma = 0 (inverse-gamma limit) are explicit branches.
    """
    _validate_gig_region(nu, delta, gamma)
    if delta == 0.0:
        # gamma(shape=nu, rate=gamma^2/2)
        return nu * math.log(gamma * gamma / 2.0) - gammaln(nu)
    if gamma == 0.0:
        # inverse-gamma(shape=-nu, scale=delta^2/2)
        return -nu * math.log(delta * delta / 2.0) - gammaln(-nu)
    return (
        nu * (math.log(gamma) - math.log(delta))
        - math.log(2.0)
        - log_bessel_k(nu, delta * gamma)
    )


def _validate_gig_region(nu: float, delta: float, gamma: float) -> None:
    if not (math.isfinite(nu) and math.isfinite(delta) and math.isfinite(gamma)):
        raise DomainError(f"non-finite GIG parameters ({nu}, {delta}, {gamma})")
    if delta < 0.0 or gamma < 0.0:
        raise DomainError(f"delta and gamma must be nonnegative, got ({delta}, {gamma})")
    if delta == 0.0 and gamma == 0.0:
        raise DomainError("delta and gamma cannot both be zero")
    if delta == 0.0 and nu <= 0.0:
        raise DomainError(f"delta = 0 requires nu > 0, got nu={nu}")
    if gamma == 0.0 and nu >= 0.0:
        raise DomainError(f"gamma = 0 requires nu < 0, got nu={nu}")


def integrate_positive_halfline(
    f: Callable[[float], float], rel_tol: float = 1e-10
) -> float:
    """Adaptive quadrature of f over (0, inf) to relative error rel_tol.

    Used as the independent oracle behind normalization and moment tests.
    Raises NumericalError when the error estimate cannot be brought under
    the target even after splitting the domain.
    """
    attempts: list[tuple[float, float]] = []

    def _try(points: tuple[float, ...]) -> tuple[float, float]:
        total = 0.0
        err = 0.0
        edges = (0.0,) + points + (np.inf,)
        for lo, hi in zip(edges[:-1], edges[1:]):
            v, e = quad(f, lo, hi, epsabs=0.0, epsrel=rel_tol, limit=500)
            total += v
            err += e
        return total, err

    for points in ((), (1.0,), (1e-6, 1e-3, 1.0, 1e3), (1e-8, 1e-4, 1e-2, 1.0, 1e2, 1e4)):
        try:
            val, err = _try(points)
        except Exception:  # quad can raise on hopeless integrands
            continue
        if math.isfinite(val) and err <= 10.0 * rel_tol * max(abs(val), 1e-300):
            return val
        attempts.append((val, err))
    raise NumericalError(
        f"half-line quadrature did not converge to rel_tol={rel_tol}; attempts={attempts}"
    )
