"""The Gaussian mixture distribution and the copula it induces.

A ``d``-variate vector ``Y`` equals the Gaussian component ``Z_j ~ N(mu_j, Sigma_j)``
with probability ``p_j``. Its copula is evaluated by mapping uniforms through the
numerically inverted mixture margins.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from gmcopula.exceptions import (
    ConstraintViolation,
    DimensionError,
    DomainError,
    NotPositiveDefiniteError,
)
from gmcopula.numerics import (
    DEFAULT_TARGET_ABS_ERR,
    CorrelationMatrix,
    CovarianceFactor,
    IntegrationResult,
    mvn_cdf,
    mvn_log_pdf,
    mvn_survivor,
)

QUANTILE_TOL = 1e-10
# Uniform inputs are clipped to [U_CLIP, 1 - U_CLIP] before quantile inversion.
U_CLIP = 1e-12
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class MixtureParameters:
    """Parameters of a ``k``-component, ``d``-dimensional Gaussian mixture.

    Only shapes are checked on construction, so that optimizer candidates can be
    represented before their constraints are tested with :meth:`violation`.

    Parameters
    ----------
    weights : array-like of shape (k,)
        Mixing probabilities.
    means : array-like of shape (k, d)
        Component means.
    scales : array-like of shape (k, d)
        Component standard deviations.
    correlations : array-like of shape (k, d * (d - 1) / 2)
        Upper-triangle correlations of each component, row-major.
    """

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray
    correlations: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).reshape(-1)
        means = np.array(self.means, dtype=float)
        k = weights.size
        if k < 1:
            raise DimensionError("at least one component is required")
        if means.ndim == 1 and means.size % k == 0:
            means = means.reshape(k, -1)
        if means.ndim != 2 or means.shape[0] != k:
            raise DimensionError("means must have shape (k, d)")
        d = means.shape[1]
        scales = np.array(self.scales, dtype=float)
        corrs = np.array(self.correlations, dtype=float)
        if scales.size != k * d:
            raise DimensionError("scales must have shape (k, d)")
        if corrs.size != k * d * (d - 1) // 2:
            raise DimensionError(f"correlations must have shape (k, {d * (d - 1) // 2})")
        scales = scales.reshape(k, d)
        corrs = corrs.reshape(k, d * (d - 1) // 2)
        for arr in (weights, means, scales, corrs):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "correlations", corrs)

    @property
    def k(self):
        return self.weights.size

    @property
    def d(self):
        return self.means.shape[1]

    def __repr__(self):
        return (
            f"MixtureParameters(k={self.k}, d={self.d}, weights={np.round(self.weights, 4).tolist()})"
        )

    @cached_property
    def correlation_matrices(self):
        """Validated correlation matrix of every component."""
        return tuple(CorrelationMatrix(self.d, c) for c in self.correlations)

    @cached_property
    def factors(self):
        """Covariance factor of every component."""
        return tuple(
            CovarianceFactor.from_scales_and_corr(s, c)
            for s, c in zip(self.scales, self.correlation_matrices)
        )

    def violation(self):
        """First violated constraint as a :class:`ConstraintViolation`, or None."""
        w, mu, sd = self.weights, self.means, self.scales
        if self.d < 2:
            return ConstraintViolation("dimension", "d must be at least 2")
        finite = all(np.all(np.isfinite(a)) for a in (w, mu, sd, self.correlations))
        if not finite:
            return ConstraintViolation("finite", "parameters must be finite")
        if np.any(w < 0) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-10:
            return ConstraintViolation("simplex", "weights must lie on the simplex")
        if not w[0] > 0:
            return ConstraintViolation("first_weight", "p_1 must be strictly positive")
        if np.any(mu[0] != 0.0):
            return ConstraintViolation("reference_mean", "mu_1 must be the zero vector")
        if sd[0, 0] != 1.0:
            return ConstraintViolation("reference_scale", "sigma_11 must equal 1")
        if np.any(np.diff(mu[:, 0]) <= 0):
            return ConstraintViolation(
                "ordering", "first-coordinate means must be strictly increasing"
            )
        if np.any(sd <= 0):
            return ConstraintViolation("positive_scale", "scales must be positive")
        if np.any(np.abs(self.correlations) > 1):
            return ConstraintViolation("correlation_range", "correlations must lie in [-1, 1]")
        for j, c in enumerate(self.correlations):
            try:
                CorrelationMatrix(self.d, c)
            except NotPositiveDefiniteError:
                return ConstraintViolation(
                    "positive_definite", f"component {j + 1} correlation matrix is not PD"
                )
        return None

    def validate(self):
        """Raise the first violated constraint; return self otherwise."""
        v = self.violation()
        if v is not None:
            raise v
        return self

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "scales": self.scales.tolist(),
            "correlations": self.correlations.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["weights"], data["means"], data["scales"], data["correlations"])

    @classmethod
    def gaussian(cls, corr):
        """Single-component parameters, i.e. a Gaussian copula."""
        corr = corr if isinstance(corr, CorrelationMatrix) else CorrelationMatrix.from_matrix(corr)
        d = corr.dim
        return cls([1.0], np.zeros((1, d)), np.ones((1, d)), corr.offdiag[None, :])


def logsumexp(a, axis=-1):
    """Log of summed exponentials along ``axis``; tolerates all ``-inf`` slices."""
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _check_index(theta, i):
    if not 0 <= int(i) < theta.d:
        raise DimensionError(f"margin index {i} out of range for d={theta.d}")
    return int(i)


def _log_weights(theta):
    with np.errstate(divide="ignore"):
        return np.log(theta.weights)


def _standardize(theta, i, y):
    y = np.asarray(y, dtype=float)
    mu, sd = theta.means[:, i], theta.scales[:, i]
    return (y[..., None] - mu) / sd


def marginal_cdf(theta, i, y):
    """Distribution function of the ``i``-th margin (0-based) at ``y``."""
    i = _check_index(theta, i)
    out = ndtr(_standardize(theta, i, y)) @ theta.weights
    return float(out) if np.ndim(out) == 0 else out


def marginal_survivor(theta, i, y):
    """Survivor function of the ``i``-th margin."""
    i = _check_index(theta, i)
    out = ndtr(-_standardize(theta, i, y)) @ theta.weights
    return float(out) if np.ndim(out) == 0 else out


def _marginal_log_pdf(theta, i, y):
    z = _standardize(theta, i, y)
    terms = _log_weights(theta) - 0.5 * z * z - _HALF_LOG_2PI - np.log(theta.scales[:, i])
    return logsumexp(terms, axis=-1)


def marginal_pdf(theta, i, y):
    """Density of the ``i``-th margin."""
    i = _check_index(theta, i)
    out = np.exp(_marginal_log_pdf(theta, i, y))
    return float(out) if np.ndim(out) == 0 else out


def marginal_log_pdf(theta, i, y):
    i = _check_index(theta, i)
    out = _marginal_log_pdf(theta, i, y)
    return float(out) if np.ndim(out) == 0 else out


def _log_tail(theta, i, x, upper):
    z = _standardize(theta, i, x)
    return logsumexp(_log_weights(theta) + log_ndtr(-z if upper else z), axis=-1)


_GRID_SIZE = 1025


def _bracket(theta, i, u_min, u_max):
    """Interval ``[lo, hi]`` with ``F(lo) <= u_min`` and ``F(hi) >= u_max``."""
    mu, sd = theta.means[:, i], theta.scales[:, i]
    lo = float(np.min(mu - 10.0 * sd))
    hi = float(np.max(mu + 10.0 * sd))
    width = hi - lo
    while marginal_cdf(theta, i, lo) > u_min:
        lo -= width
        width *= 2.0
    width = hi - lo
    while marginal_survivor(theta, i, hi) > 1.0 - u_max:
        hi += width
        width *= 2.0
    return lo, hi


def _newton_tail(theta, i, target, upper, lo, hi, x, max_iter):
    """Solve ``F(x) = target`` (``S(x) = target`` when ``upper``) inside ``[lo, hi]``."""
    mu, sd = theta.means[:, i], theta.scales[:, i]
    w_pdf = theta.weights / (sd * np.sqrt(2.0 * np.pi))
    sign = -1.0 if upper else 1.0
    active = np.arange(x.size)
    for _ in range(max_iter):
        xa = x[active]
        z = (xa[:, None] - mu) / sd
        g = ndtr(sign * z) @ theta.weights - target[active]
        too_high = g < 0 if upper else g > 0
        hi[active] = np.where(too_high, xa, hi[active])
        lo[active] = np.where(too_high, lo[active], xa)
        slope = sign * (np.exp(-0.5 * z * z) @ w_pdf)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            x_new = xa - g / slope
        outside = ~np.isfinite(x_new) | (x_new < lo[active]) | (x_new > hi[active])
        x_new = np.where(outside, 0.5 * (lo[active] + hi[active]), x_new)
        x_new = np.where(g == 0, xa, x_new)
        x[active] = x_new
        scale = 1.0 + np.abs(x_new)
        # quadratic convergence: a Newton step below 1e-8 leaves an error near 1e-16
        done = (~outside & (np.abs(x_new - xa) <= 1e-8 * scale)) | (
            hi[active] - lo[active] <= 4e-16 * scale
        )
        active = active[~done]
        if active.size == 0:
            break
    return x


def _invert_margin(theta, i, u, tol=QUANTILE_TOL, max_iter=100):
    """Quantile of the ``i``-th margin by grid interpolation and Newton refinement.

    Values of ``u`` at most 1/2 are solved on ``log F``, larger ones on
    ``log(1 - F)``, so both tails keep full relative precision. Every Newton
    step is kept inside a shrinking bracket and replaced by bisection when it
    would leave it.
    """
    u = np.asarray(u, dtype=float)
    shape = u.shape
    u = u.reshape(-1)
    x = np.empty_like(u)
    if u.size == 0:
        return x.reshape(shape)
    lo0, hi0 = _bracket(theta, i, u.min(), u.max())
    grid = np.linspace(lo0, hi0, _GRID_SIZE)
    for upper in (False, True):
        sel = np.flatnonzero(u > 0.5) if upper else np.flatnonzero(u <= 0.5)
        if sel.size == 0:
            continue
        log_target = np.log1p(-u[sel]) if upper else np.log(u[sel])
        log_grid = _log_tail(theta, i, grid, upper)
        # log F increases along the grid, log S decreases
        ordered = log_grid[::-1] if upper else log_grid
        xs = grid[::-1] if upper else grid
        pos = np.searchsorted(ordered, log_target)
        lo_idx = np.clip(pos - 1, 0, grid.size - 1)
        hi_idx = np.clip(pos, 0, grid.size - 1)
        a, b = xs[lo_idx], xs[hi_idx]
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        finite = np.isfinite(ordered)
        x0 = np.interp(log_target, ordered[finite], xs[finite])
        x0 = np.clip(x0, lo, hi)
        target = 1.0 - u[sel] if upper else u[sel]
        x[sel] = _newton_tail(theta, i, target, upper, lo, hi, x0, max_iter)
    return x.reshape(shape)


def marginal_quantile(theta, i, u, tol=QUANTILE_TOL):
    """Inverse of :func:`marginal_cdf` for ``u`` in the open unit interval."""
    i = _check_index(theta, i)
    u_arr = np.asarray(u, dtype=float)
    if not np.all((u_arr > 0) & (u_arr < 1)):
        raise DomainError("marginal_quantile requires 0 < u < 1")
    out = _invert_margin(theta, i, u_arr, tol)
    return float(out) if out.ndim == 0 else out


def _as_points(theta, y):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != theta.d:
        raise DimensionError(f"expected points of dimension {theta.d}, got {y.shape[-1]}")
    return y


def joint_log_pdf(theta, y):
    """Log-density of the mixture at one point or at rows of points."""
    y = _as_points(theta, y)
    terms = np.stack(
        [
            np.atleast_1d(mvn_log_pdf(y, mu, f))
            for mu, f in zip(theta.means, theta.factors)
        ],
        axis=-1,
    )
    out = logsumexp(terms + _log_weights(theta), axis=-1)
    return float(out[0]) if y.ndim == 1 else out


def _combine(theta, y, fn, target_abs_err, seed):
    y = _as_points(theta, y).reshape(-1)
    value, err, evals, ok = 0.0, 0.0, 0, True
    for j in range(theta.k):
        if theta.weights[j] == 0.0:
            continue
        z = (y - theta.means[j]) / theta.scales[j]
        res = fn(z, theta.correlation_matrices[j], target_abs_err, seed=seed)
        value += theta.weights[j] * res.value
        err += theta.weights[j] * res.std_error
        evals += res.evaluations
        ok = ok and res.converged
    return IntegrationResult(float(min(max(value, 0.0), 1.0)), err, evals, ok)


def joint_survivor(theta, y, target_abs_err=DEFAULT_TARGET_ABS_ERR, seed=0):
    """``P(Y_i > y_i for all i)`` as an :class:`IntegrationResult`."""
    return _combine(theta, y, mvn_survivor, target_abs_err, seed)


def joint_cdf(theta, y, target_abs_err=DEFAULT_TARGET_ABS_ERR, seed=0):
    """``P(Y_i <= y_i for all i)`` as an :class:`IntegrationResult`."""
    return _combine(theta, y, mvn_cdf, target_abs_err, seed)


def _check_open_unit(u):
    u = np.asarray(u, dtype=float)
    if not np.all((u > 0) & (u < 1)):
        raise DomainError("copula arguments must lie strictly inside (0, 1)")
    return u


def copula_scores(theta, u, clip=U_CLIP):
    """Map uniforms to the model scale through the marginal quantiles, column by column."""
    u = np.clip(_check_open_unit(u), clip, 1.0 - clip)
    if u.shape[-1] != theta.d:
        raise DimensionError(f"expected {theta.d} columns, got {u.shape[-1]}")
    y = np.empty_like(u)
    for i in range(theta.d):
        y[..., i] = _invert_margin(theta, i, u[..., i])
    return y


def copula_log_density(theta, u, clip=U_CLIP):
    """Log copula density at one point or at rows of points in ``(0, 1)^d``."""
    y = copula_scores(theta, u, clip)
    out = joint_log_pdf(theta, y)
    for i in range(theta.d):
        out = out - _marginal_log_pdf(theta, i, y[..., i])
    return out


def _closed_unit_scores(theta, u):
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != theta.d:
        raise DimensionError(f"expected {theta.d} coordinates")
    if not np.all((u >= 0) & (u <= 1)):
        raise DomainError("copula arguments must lie in [0, 1]")
    y = np.empty(theta.d)
    for i in range(theta.d):
        if u[i] == 0.0:
            y[i] = -np.inf
        elif u[i] == 1.0:
            y[i] = np.inf
        else:
            y[i] = _invert_margin(theta, i, u[i])
    return y


def copula_joint_survivor(theta, u, target_abs_err=DEFAULT_TARGET_ABS_ERR, seed=0):
    """``P(U_i > u_i for all i)`` under the copula; ``u_i`` may be 0 or 1."""
    return joint_survivor(theta, _closed_unit_scores(theta, u), target_abs_err, seed)


def copula_cdf(theta, u, target_abs_err=DEFAULT_TARGET_ABS_ERR, seed=0):
    """Copula distribution function ``C(u)``; ``u_i`` may be 0 or 1."""
    return joint_cdf(theta, _closed_unit_scores(theta, u), target_abs_err, seed)


_BLOCK = 65536


def simulate(theta, n, seed=None):
    """Draw ``n`` rows from the copula of the mixture.

    Each block of rows gets its own child seed, so the output depends only on
    ``seed`` and ``n``.
    """
    n = int(n)
    if n < 1:
        raise DomainError("n must be at least 1")
    theta.factors  # noqa: B018 - raises early for an invalid covariance
    cum = np.cumsum(theta.weights)
    cum[-1] = 1.0
    n_blocks = -(-n // _BLOCK)
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    out = np.empty((n, theta.d))
    for b, child in enumerate(children):
        rng = np.random.default_rng(child)
        rows = slice(b * _BLOCK, min(n, (b + 1) * _BLOCK))
        m = rows.stop - rows.start
        comp = np.searchsorted(cum, rng.random(m), side="right")
        comp = np.minimum(comp, theta.k - 1)
        z = rng.standard_normal((m, theta.d))
        y = np.empty_like(z)
        for j in range(theta.k):
            sel = comp == j
            y[sel] = theta.means[j] + z[sel] @ theta.factors[j].lower.T
        out[rows] = y
    u = np.empty_like(out)
    for i in range(theta.d):
        lower = marginal_cdf(theta, i, out[:, i])
        upper = marginal_survivor(theta, i, out[:, i])
        u[:, i] = np.where(lower <= 0.5, lower, 1.0 - upper)
    tiny = np.finfo(float).tiny
    return np.clip(u, tiny, np.nextafter(1.0, 0.0))
