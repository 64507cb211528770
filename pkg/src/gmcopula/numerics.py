"""Gaussian primitives and orthant probabilities for small dimensions.

Multivariate normal probabilities are computed with the separation-of-variables
transform of Genz (1992) integrated by a randomly shifted Richtmyer lattice.
The spread of the shifted estimates gives the reported standard error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtr, ndtri, owens_t

from gmcopula.exceptions import DimensionError, DomainError, NotPositiveDefiniteError

# Pivots of the triangular factorization must exceed this to count as positive definite.
PIVOT_TOL = 1e-12
MAX_MVN_DIM = 6
DEFAULT_TARGET_ABS_ERR = 1e-6
DEFAULT_N_SHIFTS = 12

_LOG_2PI = np.log(2.0 * np.pi)
_PRIMES = np.array([2, 3, 5, 7, 11, 13, 17, 19, 23, 29])
_TINY = np.finfo(float).tiny


def std_normal_cdf(x):
    """Standard normal distribution function, elementwise."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("std_normal_cdf requires finite input")
    out = ndtr(x)
    return float(out) if out.ndim == 0 else out


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf` on the open unit interval."""
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0.0) & (p < 1.0)):
        raise DomainError("std_normal_quantile requires 0 < p < 1")
    out = ndtri(p)
    return float(out) if out.ndim == 0 else out


def triu_pairs(d):
    """Row-major upper-triangle index pairs (0,1), (0,2), ..., (d-2,d-1)."""
    return [(m, n) for m in range(d) for n in range(m + 1, d)]


def checked_cholesky(mat):
    """Lower Cholesky factor of ``mat``; every squared pivot must exceed ``PIVOT_TOL``."""
    try:
        lower = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc
    pivots = np.diag(lower) ** 2
    if not np.all(pivots > PIVOT_TOL):
        raise NotPositiveDefiniteError(
            f"smallest pivot {pivots.min():.3e} is below {PIVOT_TOL:g}"
        )
    return lower


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Validated positive-definite correlation matrix.

    Parameters
    ----------
    dim : int
        Matrix dimension.
    offdiag : array-like of shape (dim * (dim - 1) / 2,)
        Correlations in row-major upper-triangle order (1,2), (1,3), ..., (d-1,d).
    """

    dim: int
    offdiag: np.ndarray
    matrix: np.ndarray = field(init=False, repr=False)
    cholesky: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = int(self.dim)
        if d < 1:
            raise DimensionError("dim must be at least 1")
        off = np.array(self.offdiag, dtype=float).reshape(-1)
        if off.size != d * (d - 1) // 2:
            raise DimensionError(
                f"expected {d * (d - 1) // 2} correlations for dim={d}, got {off.size}"
            )
        if not np.all(np.isfinite(off)) or np.any(np.abs(off) > 1.0):
            raise DomainError("correlations must lie in [-1, 1]")
        mat = np.eye(d)
        for value, (m, n) in zip(off, triu_pairs(d)):
            mat[m, n] = mat[n, m] = value
        off.setflags(write=False)
        mat.setflags(write=False)
        chol = checked_cholesky(mat)
        chol.setflags(write=False)
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "offdiag", off)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "cholesky", chol)

    @classmethod
    def from_matrix(cls, mat):
        mat = np.asarray(mat, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionError("correlation matrix must be square")
        if not np.allclose(mat, mat.T, atol=1e-12) or not np.allclose(np.diag(mat), 1.0):
            raise DomainError("correlation matrix must be symmetric with unit diagonal")
        d = mat.shape[0]
        return cls(d, [mat[m, n] for m, n in triu_pairs(d)])

    @classmethod
    def identity(cls, dim):
        return cls(dim, np.zeros(dim * (dim - 1) // 2))

    @classmethod
    def equicorrelated(cls, dim, rho):
        return cls(dim, np.full(dim * (dim - 1) // 2, float(rho)))

    def precision(self):
        """Inverse of the correlation matrix."""
        eye = np.eye(self.dim)
        inv_l = solve_triangular(self.cholesky, eye, lower=True)
        return inv_l.T @ inv_l

    def submatrix(self, index):
        index = list(index)
        return CorrelationMatrix.from_matrix(self.matrix[np.ix_(index, index)])


@dataclass(frozen=True, eq=False)
class CovarianceFactor:
    """Lower-triangular factor ``L`` of a covariance matrix with ``Sigma = L @ L.T``."""

    lower: np.ndarray
    log_det: float

    @property
    def dim(self):
        return self.lower.shape[0]

    @property
    def covariance(self):
        return self.lower @ self.lower.T

    @classmethod
    def from_covariance(cls, cov):
        cov = np.asarray(cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise DimensionError("covariance must be square")
        scales = np.sqrt(np.diag(cov))
        if not np.all(scales > 0):
            raise NotPositiveDefiniteError("covariance diagonal must be positive")
        corr = cov / np.outer(scales, scales)
        np.fill_diagonal(corr, 1.0)
        return cls.from_scales_and_corr(scales, CorrelationMatrix.from_matrix(corr))

    @classmethod
    def from_scales_and_corr(cls, scales, corr):
        scales = np.asarray(scales, dtype=float)
        if scales.shape != (corr.dim,):
            raise DimensionError("scales must have one entry per dimension")
        if not np.all(scales > 0):
            raise DomainError("scales must be strictly positive")
        lower = scales[:, None] * corr.cholesky
        log_det = 2.0 * float(np.sum(np.log(np.diag(lower))))
        lower.setflags(write=False)
        return cls(lower, log_det)


@dataclass(frozen=True)
class IntegrationResult:
    """Probability estimate from the lattice integrator.

    ``converged`` is False when the evaluation budget ran out before
    ``std_error`` reached the requested target.
    """

    value: float
    std_error: float
    evaluations: int
    converged: bool = True

    def __float__(self):
        return float(self.value)


def mvn_log_pdf(x, mean, factor):
    """Log-density of ``N(mean, L L^T)`` at ``x`` (one point or rows of points)."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    d = factor.dim
    if x.shape[-1] != d or mean.shape != (d,):
        raise DimensionError(f"expected vectors of length {d}")
    diff = np.atleast_2d(x - mean)
    z = solve_triangular(factor.lower, diff.T, lower=True, check_finite=False)
    out = -0.5 * (d * _LOG_2PI + factor.log_det) - 0.5 * np.sum(z * z, axis=0)
    return float(out[0]) if x.ndim == 1 else out


def _sov_integrand(w, upper, lower):
    """Genz separation-of-variables integrand on ``[0, 1]^(d-1)``."""
    m, d = w.shape[0], upper.size
    e = np.full(m, ndtr(upper[0] / lower[0, 0]))
    f = e.copy()
    y = np.empty((m, d - 1))
    for i in range(1, d):
        t = np.clip(w[:, i - 1] * e, _TINY, 1.0 - 1e-16)
        y[:, i - 1] = ndtri(t)
        shift = y[:, :i] @ lower[i, :i]
        e = ndtr((upper[i] - shift) / lower[i, i])
        f *= e
    return f


def _bvn_cdf(h, k, rho):
    """Bivariate normal distribution function through Owen's T function."""
    if h == 0.0 and k == 0.0:
        return float(0.25 + np.arcsin(rho) / (2.0 * np.pi))
    s = np.sqrt((1.0 - rho) * (1.0 + rho))
    with np.errstate(divide="ignore", invalid="ignore"):
        a_h = (k - rho * h) / (h * s) if h != 0.0 else np.copysign(np.inf, k)
        a_k = (h - rho * k) / (k * s) if k != 0.0 else np.copysign(np.inf, h)
    # compare signs rather than h * k, which underflows for tiny bounds
    same_sign = np.sign(h) * np.sign(k)
    beta = 0.0 if (same_sign > 0 or (same_sign == 0 and h + k >= 0.0)) else 0.5
    value = 0.5 * (ndtr(h) + ndtr(k)) - owens_t(h, a_h) - owens_t(k, a_k) - beta
    return float(np.clip(value, 0.0, min(ndtr(h), ndtr(k))))


def _check_bounds(bounds, corr, target_abs_err):
    bounds = np.asarray(bounds, dtype=float).reshape(-1)
    if bounds.size != corr.dim:
        raise DimensionError(f"bound vector has length {bounds.size}, correlation dim is {corr.dim}")
    if not 1 <= corr.dim <= MAX_MVN_DIM:
        raise DimensionError(f"orthant integration supports 1 <= d <= {MAX_MVN_DIM}")
    if np.any(np.isnan(bounds)):
        raise DomainError("bounds must not be NaN")
    if not target_abs_err >= 1e-8:
        raise DomainError("target_abs_err must be at least 1e-8")
    return bounds


def mvn_cdf(
    upper,
    corr,
    target_abs_err=DEFAULT_TARGET_ABS_ERR,
    *,
    seed=0,
    n_shifts=DEFAULT_N_SHIFTS,
    max_evaluations=12 * 2**18,
    method="auto",
):
    """Probability ``P(Z_i <= upper_i for all i)`` for ``Z ~ N(0, corr)``.

    Parameters
    ----------
    upper : array-like of shape (d,)
        Upper integration limits; ``+inf`` and ``-inf`` are allowed.
    corr : CorrelationMatrix
        Correlation matrix of dimension ``1 <= d <= 6``.
    target_abs_err : float, default=1e-6
        The lattice size doubles until the standard error falls below this.
    seed : int, default=0
        Seed of the random lattice shifts. Fixing it makes the result reproducible.
    n_shifts : int, default=12
        Number of independent random shifts.
    max_evaluations : int
        Integrand evaluation budget.
    method : {"auto", "lattice"}, default="auto"
        ``"auto"`` evaluates two-dimensional problems exactly with Owen's T
        function and uses the lattice rule otherwise; ``"lattice"`` always
        integrates.

    Returns
    -------
    IntegrationResult
    """
    upper = _check_bounds(upper, corr, target_abs_err)
    if np.any(upper == -np.inf):
        return IntegrationResult(0.0, 0.0, 0)
    keep = np.flatnonzero(upper < np.inf)
    if keep.size == 0:
        return IntegrationResult(1.0, 0.0, 0)
    b = upper[keep]
    mat = corr.matrix[np.ix_(keep, keep)]
    if keep.size == 1:
        return IntegrationResult(float(ndtr(b[0])), 0.0, 0)
    if keep.size == 2 and method == "auto":
        return IntegrationResult(_bvn_cdf(b[0], b[1], mat[0, 1]), 0.0, 1)
    if method not in ("auto", "lattice"):
        raise ValueError(f"unknown method {method!r}")
    # most restrictive limits first: smaller variance of the integrand
    order = np.argsort(b, kind="stable")
    b = b[order]
    lower = checked_cholesky(mat[np.ix_(order, order)])
    d = b.size

    rng = np.random.default_rng(seed)
    shifts = rng.random((n_shifts, d - 1))
    generator = np.sqrt(_PRIMES[: d - 1])
    sums = np.zeros(n_shifts)
    n_done = 0
    block = 512
    evaluations = 0
    while True:
        idx = np.arange(n_done + 1, n_done + block + 1, dtype=float)
        base = np.modf(idx[:, None] * generator)[0]
        for s in range(n_shifts):
            pts = np.modf(base + shifts[s])[0]
            pts = np.abs(2.0 * pts - 1.0)
            sums[s] += _sov_integrand(pts, b, lower).sum()
        n_done += block
        evaluations += block * n_shifts
        means = sums / n_done
        std_error = float(np.std(means, ddof=1) / np.sqrt(n_shifts))
        if std_error <= target_abs_err:
            converged = True
            break
        if evaluations + 2 * block * n_shifts > max_evaluations:
            converged = False
            break
        block = n_done
    value = float(np.clip(means.mean(), 0.0, 1.0))
    return IntegrationResult(value, std_error, evaluations, converged)


def mvn_survivor(lower, corr, target_abs_err=DEFAULT_TARGET_ABS_ERR, **kwargs):
    """Probability ``P(Z_i > lower_i for all i)``, by central symmetry of ``N(0, corr)``."""
    lower = _check_bounds(lower, corr, target_abs_err)
    return mvn_cdf(-lower, corr, target_abs_err, **kwargs)
