"""Reference copulas with known extremal behaviour: samplers and exact summaries.

All samplers work on the unit Fréchet scale and map back with
``u = exp(-1/z)``. The logistic family uses the positive stable mixture
representation, which is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from gmcopula.exceptions import DimensionError, DomainError

_BLOCK = 65536
_EXP_FLOOR = 1e-300
_U_MAX = np.nextafter(1.0, 0.0)
_U_MIN = np.finfo(float).tiny


@dataclass(frozen=True)
class LogisticSpec:
    """Extreme value logistic copula of dimension ``d``; ``alpha = 1`` is independence."""

    d: int = 2
    alpha: float = 0.5

    def __post_init__(self):
        if self.d < 2:
            raise DimensionError("d must be at least 2")
        if not 0 < self.alpha <= 1:
            raise DomainError("alpha must lie in (0, 1]")


@dataclass(frozen=True)
class AsymmetricLogisticSpec:
    """Bivariate asymmetric logistic copula with asymmetry weights ``t1``, ``t2``."""

    alpha: float = 0.5
    t1: float = 1.0
    t2: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise DomainError("alpha must lie in (0, 1]")
        if not (0 <= self.t1 <= 1 and 0 <= self.t2 <= 1):
            raise DomainError("t1 and t2 must lie in [0, 1]")

    @property
    def chi_limit(self):
        """``t1 + t2 - (t1^(1/alpha) + t2^(1/alpha))^alpha``."""
        a = self.alpha
        return self.t1 + self.t2 - (self.t1 ** (1 / a) + self.t2 ** (1 / a)) ** a


def positive_stable(alpha, size, rng):
    """Positive stable variables with Laplace transform ``exp(-t^alpha)``.

    Uses Kanter's form of the Chambers-Mallows-Stuck construction:
    ``S = sin(a V) / sin(V)^(1/a) * (sin((1-a) V) / W)^((1-a)/a)`` with
    ``V`` uniform on ``(0, pi)`` and ``W`` a unit exponential.
    """
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0, 1]")
    v = np.pi * rng.random(size)
    w = rng.standard_exponential(size)
    if alpha == 1:
        return np.ones(size)
    a = alpha
    return (
        np.sin(a * v) / np.sin(v) ** (1 / a) * (np.sin((1 - a) * v) / w) ** ((1 - a) / a)
    )


def _logistic_exponents(alpha, d, m, rng):
    """``(E_i / S)^alpha``: the values ``1/Z_i`` of a logistic Fréchet vector."""
    s = positive_stable(alpha, m, rng)
    e = np.maximum(rng.standard_exponential((m, d)), _EXP_FLOOR)
    return (e / s[:, None]) ** alpha


def _blocks(n, seed):
    n = int(n)
    if n < 1:
        raise DomainError("n must be at least 1")
    children = np.random.SeedSequence(seed).spawn(-(-n // _BLOCK))
    for b, child in enumerate(children):
        start = b * _BLOCK
        yield slice(start, min(n, start + _BLOCK)), np.random.default_rng(child)


def _to_uniform(inv_frechet, upper=False):
    """``exp(-x)`` or, for the reflected copula, ``1 - exp(-x)`` without cancellation."""
    u = -np.expm1(-inv_frechet) if upper else np.exp(-inv_frechet)
    return np.clip(u, _U_MIN, _U_MAX)


def _sample_logistic(spec, n, seed, reflect):
    out = np.empty((int(n), spec.d))
    for rows, rng in _blocks(n, seed):
        x = _logistic_exponents(spec.alpha, spec.d, rows.stop - rows.start, rng)
        out[rows] = _to_uniform(x, upper=reflect)
    return out


def sample_logistic(spec, n, seed=None):
    """Draw ``n`` rows from the logistic extreme value copula."""
    return _sample_logistic(spec, n, seed, reflect=False)


def sample_inverted_logistic(spec, n, seed=None):
    """Draw ``n`` rows from the inverted logistic copula, ``1 - U`` for logistic ``U``.

    Uses the same random stream as :func:`sample_logistic`, so the two samples
    for one seed are exact reflections of each other.
    """
    return _sample_logistic(spec, n, seed, reflect=True)


def sample_asymmetric_logistic(spec, n, seed=None):
    """Draw ``n`` rows from the bivariate asymmetric logistic copula.

    ``Z_i = max((1 - t_i) M_i, t_i T_i)`` with independent unit Fréchet
    ``M_i`` and a logistic Fréchet pair ``(T_1, T_2)``.
    """
    t = np.array([spec.t1, spec.t2])
    out = np.empty((int(n), 2))
    for rows, rng in _blocks(n, seed):
        m = rows.stop - rows.start
        inv_t = _logistic_exponents(spec.alpha, 2, m, rng)
        inv_m = np.maximum(rng.standard_exponential((m, 2)), _EXP_FLOOR)
        with np.errstate(divide="ignore"):
            z = np.maximum((1 - t) / inv_m, t / inv_t)
        out[rows] = _to_uniform(1.0 / z)
    return out


# -- exact summaries ------------------------------------------------------------


def _check_r(r):
    r = np.asarray(r, dtype=float)
    if not np.all((r > 0) & (r < 1)):
        raise DomainError("levels must lie strictly inside (0, 1)")
    return r


def _scalar(x, r):
    return float(x) if np.ndim(r) == 0 else x


def logistic_diagonal_survivor(spec, r):
    """``P(U_i > r for all i)`` by inclusion-exclusion over the closed-form CDF.

    The CDF on the diagonal of ``m`` coordinates is ``r^(m^alpha)``; the
    alternating sum is written with ``expm1`` terms, which sum to the same value
    because the binomial coefficients alternate to zero.
    """
    r = _check_r(r)
    log_r = np.log(r)
    total = np.zeros_like(r)
    for m in range(1, spec.d + 1):
        total = total + (-1) ** m * comb(spec.d, m) * np.expm1(m**spec.alpha * log_r)
    return _scalar(np.clip(total, 0.0, 1.0), r)


def true_chi_logistic(spec, r):
    """χ(r) of the logistic copula; tends to ``2 - 2^alpha`` when ``d = 2``."""
    r = _check_r(r)
    return _scalar(logistic_diagonal_survivor(spec, r) / (1 - r), r)


def true_eta_logistic(spec, r):
    r = _check_r(r)
    return _scalar(np.log1p(-r) / np.log(logistic_diagonal_survivor(spec, r)), r)


def logistic_chi_limit(spec):
    """Limit of χ(r) as ``r -> 1``: the alternating sum of ``C(d, m) m^alpha``."""
    return float(
        sum((-1) ** (m + 1) * comb(spec.d, m) * m**spec.alpha for m in range(1, spec.d + 1))
    )


def inverted_logistic_diagonal_survivor(spec, r):
    """``(1 - r)^(d^alpha)``: the logistic CDF evaluated at ``1 - r``."""
    r = _check_r(r)
    return _scalar(np.exp(spec.d**spec.alpha * np.log1p(-r)), r)


def true_chi_inverted_logistic(spec, r):
    r = _check_r(r)
    return _scalar(inverted_logistic_diagonal_survivor(spec, r) / (1 - r), r)


def true_eta_inverted_logistic(spec, r=None):
    """``d^(-alpha)`` at every level."""
    value = spec.d ** (-spec.alpha)
    if r is None:
        return value
    r = _check_r(r)
    return _scalar(np.full(r.shape, value), r)


def asymmetric_logistic_cdf(spec, u1, u2):
    """Closed-form CDF of the bivariate asymmetric logistic copula."""
    a, t1, t2 = spec.alpha, spec.t1, spec.t2
    x1 = -np.log(np.asarray(u1, dtype=float))
    x2 = -np.log(np.asarray(u2, dtype=float))
    v = (1 - t1) * x1 + (1 - t2) * x2 + ((t1 * x1) ** (1 / a) + (t2 * x2) ** (1 / a)) ** a
    return np.exp(-v)


def true_chi_asymmetric_logistic(spec, r):
    """χ(r) of the asymmetric logistic copula on the diagonal."""
    r = _check_r(r)
    x = -np.log(r)
    a, t1, t2 = spec.alpha, spec.t1, spec.t2
    v = x * ((1 - t1) + (1 - t2) + (t1 ** (1 / a) + t2 ** (1 / a)) ** a)
    # 1 - 2r + exp(-v) written to avoid cancellation near r = 1
    surv = np.expm1(-v) - 2 * np.expm1(-x)
    return _scalar(surv / (1 - r), r)
