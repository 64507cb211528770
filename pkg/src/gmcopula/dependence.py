"""Extremal dependence summaries, model-based and empirical.

Undefined values (an empirical joint count of zero, a model survivor that
underflows) are reported as NaN and never replaced by zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from gmcopula.exceptions import DimensionError, DomainError
from gmcopula.model import copula_cdf, copula_joint_survivor
from gmcopula.numerics import (
    DEFAULT_TARGET_ABS_ERR,
    CorrelationMatrix,
    mvn_survivor,
    triu_pairs,
)

UNDEFINED = float("nan")
SOURCES = ("model", "empirical", "true")
# relative accuracy requested from the integrator for small joint survivors
SURVIVOR_REL_TOL = 1e-4
_MIN_ABS_TARGET = 1e-8
MIN_DENOMINATOR = 1e-12
DEFAULT_NEAR_ZERO = 0.1


def default_r_grid():
    """99 equispaced levels on [0.01, 0.99] followed by 0.995, 0.999, 0.9999."""
    return np.concatenate([np.linspace(0.01, 0.99, 99), [0.995, 0.999, 0.9999]])


@dataclass
class DependenceCurve:
    """A dependence summary evaluated on a grid of levels ``r``.

    ``estimates`` holds NaN where the statistic is undefined. ``excluded``
    counts, per level, the bootstrap replicates dropped for being undefined.
    """

    levels: np.ndarray
    estimates: np.ndarray
    band_lo: np.ndarray | None = None
    band_hi: np.ndarray | None = None
    source: str = "model"
    statistic: str = "chi"
    excluded: np.ndarray | None = None
    n_replicates: int = 0
    low_replicates: bool = False

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float).reshape(-1)
        self.estimates = np.asarray(self.estimates, dtype=float).reshape(-1)
        if self.estimates.shape != self.levels.shape:
            raise DimensionError("levels and estimates must have the same length")
        if np.any(np.diff(self.levels) <= 0):
            raise DomainError("levels must be strictly increasing")
        if self.source not in SOURCES:
            raise DomainError(f"source must be one of {SOURCES}")
        for name in ("band_lo", "band_hi"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=float).reshape(-1)
                if val.shape != self.levels.shape:
                    raise DimensionError(f"{name} must match the levels")
                setattr(self, name, val)
        if self.band_lo is not None and self.band_hi is not None:
            both = np.isfinite(self.band_lo) & np.isfinite(self.band_hi)
            if np.any(self.band_lo[both] > self.band_hi[both]):
                raise DomainError("band_lo must not exceed band_hi")

    @property
    def defined(self):
        return np.isfinite(self.estimates)

    def __len__(self):
        return self.levels.size


@dataclass(frozen=True)
class RayWeights:
    """A direction ``w`` on the unit simplex."""

    w: np.ndarray = field()

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if w.size < 2:
            raise DimensionError("ray weights need at least two entries")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("ray weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("ray weights must sum to one")
        object.__setattr__(self, "w", w)

    @classmethod
    def equal(cls, d):
        return cls(np.full(d, 1.0 / d))

    @property
    def d(self):
        return self.w.size


def _as_ray(w, d=None):
    ray = w if isinstance(w, RayWeights) else RayWeights(w)
    if d is not None and ray.d != d:
        raise DimensionError(f"ray has {ray.d} entries, expected {d}")
    return ray


def _check_level(r):
    r = np.asarray(r, dtype=float)
    if not np.all((r > 0) & (r < 1)):
        raise DomainError("levels must lie strictly inside (0, 1)")
    return r


def _survivor(theta, u, target_abs_err=DEFAULT_TARGET_ABS_ERR, seed=0, rel_tol=SURVIVOR_REL_TOL):
    """Copula joint survivor, refining the integration target for small values.

    Starting from ``target_abs_err``, the target is tightened to
    ``rel_tol`` times the current value (but not below 1e-8) until it no
    longer changes. ``rel_tol=None`` keeps the absolute target.
    """
    target = target_abs_err
    res = copula_joint_survivor(theta, u, target, seed)
    if rel_tol is not None:
        while res.value > 0 and target > max(rel_tol * res.value, _MIN_ABS_TARGET):
            target = max(rel_tol * res.value, _MIN_ABS_TARGET)
            res = copula_joint_survivor(theta, u, target, seed)
    return res.value


def _map_levels(fn, r):
    r = _check_level(r)
    out = np.array([fn(float(x)) for x in r.reshape(-1)]).reshape(r.shape)
    return float(out) if out.ndim == 0 else out


def chi_model(theta, r, target_abs_err=DEFAULT_TARGET_ABS_ERR, seed=0, rel_tol=SURVIVOR_REL_TOL):
    """``P(U_i > r for all i) / (1 - r)`` under the copula."""
    return _map_levels(
        lambda x: _survivor(theta, np.full(theta.d, x), target_abs_err, seed, rel_tol) / (1.0 - x), r
    )


def _eta_from(survivor, r):
    if not survivor > 0:
        return UNDEFINED
    return float(np.log1p(-r) / np.log(survivor))


def eta_model(theta, r, target_abs_err=DEFAULT_TARGET_ABS_ERR, seed=0, rel_tol=SURVIVOR_REL_TOL):
    """``log(1 - r) / log P(U_i > r for all i)``; NaN when the survivor underflows."""
    return _map_levels(
        lambda x: _eta_from(_survivor(theta, np.full(theta.d, x), target_abs_err, seed, rel_tol), x), r
    )


def _ray_levels(ray, r, t):
    """Uniform levels ``1 - (1 - r)^(w_i / w_t)`` along the ray."""
    tail = np.exp((ray.w / ray.w[t]) * np.log1p(-r))
    return 1.0 - tail


def lambda_model(theta, w, r, t=None, target_abs_err=DEFAULT_TARGET_ABS_ERR, seed=0, rel_tol=SURVIVOR_REL_TOL):
    """Exponent function along the ray ``w`` at level ``r``.

    ``t`` indexes a coordinate with ``w_t > 0``; by default the largest entry.
    """
    ray = _as_ray(w, theta.d)
    if t is None:
        t = int(np.argmax(ray.w))
    if not 0 <= t < ray.d or ray.w[t] <= 0:
        raise DomainError("lambda_model needs an index t with w_t > 0")

    def one(x):
        s = _survivor(theta, _ray_levels(ray, x, t), target_abs_err, seed, rel_tol)
        if not s > 0:
            return UNDEFINED
        return float(ray.w[t] * np.log(s) / np.log1p(-x))

    return _map_levels(one, r)


def model_curves(theta, levels=None, target_abs_err=DEFAULT_TARGET_ABS_ERR, seed=0, rel_tol=SURVIVOR_REL_TOL):
    """χ and η curves from one joint-survivor evaluation per level."""
    levels = default_r_grid() if levels is None else _check_level(levels).reshape(-1)
    surv = np.array([_survivor(theta, np.full(theta.d, x), target_abs_err, seed, rel_tol) for x in levels])
    chi = surv / (1.0 - levels)
    eta = np.array([_eta_from(s, x) for s, x in zip(surv, levels)])
    return (
        DependenceCurve(levels, chi, source="model", statistic="chi"),
        DependenceCurve(levels, eta, source="model", statistic="eta"),
    )


# -- empirical -----------------------------------------------------------------


def _as_sample(sample):
    u = np.asarray(sample, dtype=float)
    if u.ndim != 2 or u.shape[1] < 2:
        raise DimensionError("sample must be an (n, d) array with d >= 2")
    if u.shape[0] < 1:
        raise DimensionError("sample must have at least one row")
    return u


def _joint_counts(u, levels):
    # the minimum of each row exceeds r exactly when every coordinate does
    row_min = np.sort(u.min(axis=1))
    return u.shape[0] - np.searchsorted(row_min, levels, side="right")


def chi_empirical(sample, r):
    """Proportion of rows with every coordinate above ``r``, divided by ``1 - r``."""
    u = _as_sample(sample)
    r = _check_level(r)
    out = _joint_counts(u, r.reshape(-1)) / u.shape[0] / (1.0 - r.reshape(-1))
    return float(out[0]) if r.ndim == 0 else out.reshape(r.shape)


def eta_empirical(sample, r):
    """Empirical η; NaN when no row, or every row, lies above ``r``."""
    u = _as_sample(sample)
    r = _check_level(r)
    n = u.shape[0]
    counts = _joint_counts(u, r.reshape(-1))
    out = np.full(counts.shape, UNDEFINED)
    ok = (counts > 0) & (counts < n)
    out[ok] = np.log1p(-r.reshape(-1)[ok]) / np.log(counts[ok] / n)
    return float(out[0]) if r.ndim == 0 else out.reshape(r.shape)


_EMPIRICAL = {"chi": chi_empirical, "eta": eta_empirical}


def empirical_curve(sample, statistic="chi", levels=None):
    levels = default_r_grid() if levels is None else _check_level(levels).reshape(-1)
    est = np.atleast_1d(_EMPIRICAL[statistic](sample, levels))
    return DependenceCurve(levels, est, source="empirical", statistic=statistic)


def bootstrap_band(sample, statistic="chi", levels=None, B=250, level=0.95, seed=0, n_jobs=None):
    """Pointwise percentile bootstrap band around the empirical curve.

    Each replicate resamples ``n`` rows with replacement from its own child
    seed, so the band depends only on ``seed`` and ``B``. Undefined replicate
    values are dropped level by level; the drop counts are kept in
    ``excluded``.
    """
    if statistic not in _EMPIRICAL:
        raise DomainError(f"statistic must be one of {tuple(_EMPIRICAL)}")
    if not 0 < level < 1:
        raise DomainError("confidence level must lie in (0, 1)")
    if B < 1:
        raise DomainError("B must be positive")
    u = _as_sample(sample)
    levels = default_r_grid() if levels is None else _check_level(levels).reshape(-1)
    low = B < 50
    if low:
        warnings.warn(f"B={B} bootstrap replicates is too few for stable bands", RuntimeWarning, stacklevel=2)
    est_fn = _EMPIRICAL[statistic]
    n = u.shape[0]
    children = np.random.SeedSequence(seed).spawn(B)

    def replicate(child):
        idx = np.random.default_rng(child).integers(0, n, size=n)
        return np.atleast_1d(est_fn(u[idx], levels))

    if n_jobs not in (None, 1):
        from joblib import Parallel, delayed

        reps = np.array(Parallel(n_jobs=n_jobs)(delayed(replicate)(c) for c in children))
    else:
        reps = np.array([replicate(c) for c in children])
    excluded = np.sum(~np.isfinite(reps), axis=0)
    alpha = 1.0 - level
    lo = np.full(levels.size, UNDEFINED)
    hi = np.full(levels.size, UNDEFINED)
    for m in range(levels.size):
        col = reps[:, m][np.isfinite(reps[:, m])]
        if col.size:
            lo[m], hi[m] = np.percentile(col, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return DependenceCurve(
        levels,
        np.atleast_1d(est_fn(u, levels)),
        band_lo=lo,
        band_hi=hi,
        source="empirical",
        statistic=statistic,
        excluded=excluded,
        n_replicates=B,
        low_replicates=low,
    )


# -- regions in exponential margins --------------------------------------------


def aw_thresholds(w, uE):
    """Exponential-margin thresholds of the bivariate region ``A_w``.

    The coordinate with the larger weight gets ``uE``; the other gets ``uE``
    scaled by the ratio of the smaller to the larger weight.
    """
    if not 0 < w < 1:
        raise DomainError("w must lie strictly inside (0, 1)")
    if not uE > 0:
        raise DomainError("uE must be positive")
    if w > 0.5:
        return (float(uE), float((1.0 - w) / w * uE))
    return (float(w / (1.0 - w) * uE), float(uE))


def aw_levels(w, uE, d=None):
    """Thresholds ``uE * w_i / max(w)`` for a ray of any dimension.

    A scalar ``w`` is read as the bivariate ray ``(w, 1 - w)``.
    """
    if np.ndim(w) == 0:
        return np.array(aw_thresholds(float(w), uE))
    ray = _as_ray(w, d)
    if not uE > 0:
        raise DomainError("uE must be positive")
    return uE * ray.w / ray.w.max()


def _exp_to_uniform(x):
    return -np.expm1(-np.asarray(x, dtype=float))


def aw_probability_model(theta, w, uE, target_abs_err=DEFAULT_TARGET_ABS_ERR, seed=0, rel_tol=SURVIVOR_REL_TOL):
    """``P(A_w | max_i X_i > uE)`` with ``X`` in standard exponential margins."""
    x = aw_levels(w, uE, theta.d)
    if x.size != theta.d:
        raise DimensionError("ray dimension does not match the model")
    num = _survivor(theta, _exp_to_uniform(x), target_abs_err, seed, rel_tol)
    level = float(_exp_to_uniform(uE))
    den = 1.0 - copula_cdf(theta, np.full(theta.d, level), target_abs_err, seed).value
    if den < MIN_DENOMINATOR:
        return UNDEFINED
    return float(min(max(num / den, 0.0), 1.0))


def aw_probability_empirical(sample, w, uE):
    """Empirical counterpart of :func:`aw_probability_model`."""
    u = _as_sample(sample)
    x = aw_levels(w, uE, u.shape[1])
    if x.size != u.shape[1]:
        raise DimensionError("ray dimension does not match the sample")
    xe = -np.log1p(-u)
    den = np.count_nonzero(xe.max(axis=1) > uE)
    if den == 0:
        return UNDEFINED
    num = np.count_nonzero(np.all(xe > x, axis=1))
    return num / den


def conditional_exceedance(theta, cond_index, u, v, target_abs_err=DEFAULT_TARGET_ABS_ERR, seed=0, rel_tol=SURVIVOR_REL_TOL):
    """``P(U_j > v for all j != i | U_i > u)`` for conditioning coordinate ``i``."""
    if not (0 < u < 1 and 0 < v < 1):
        raise DomainError("u and v must lie strictly inside (0, 1)")
    if not 0 <= cond_index < theta.d:
        raise DomainError(f"cond_index must lie in [0, {theta.d})")
    levels = np.full(theta.d, float(v))
    levels[cond_index] = u
    return float(min(_survivor(theta, levels, target_abs_err, seed, rel_tol) / (1.0 - u), 1.0))


# -- limits and precision structure --------------------------------------------


def _as_corr(corr):
    if isinstance(corr, CorrelationMatrix):
        return corr
    return CorrelationMatrix.from_matrix(np.asarray(corr, dtype=float))


def gaussian_eta_limit(corr):
    """Limit of η for a Gaussian copula: ``1 / (1' P 1)`` with ``P`` the precision."""
    c = _as_corr(corr)
    return float(1.0 / c.precision().sum())


def construction_chi_limit(corr, target_abs_err=1e-7):
    """``2 P(Z > 0)`` for ``Z ~ N(0, corr)``: the χ level reached by a far-away component."""
    c = _as_corr(corr)
    return 2.0 * mvn_survivor(np.zeros(c.dim), c, target_abs_err).value


@dataclass
class PrecisionEntry:
    component: int
    pair: tuple
    value: float
    near_zero: bool


def precision_report(theta, near_zero_threshold=DEFAULT_NEAR_ZERO):
    """Off-diagonal precision entries of every component, with near-zero flags.

    Components and coordinates are numbered from 0.
    """
    if not near_zero_threshold >= 0:
        raise DomainError("near_zero_threshold must be nonnegative")
    out = []
    for j, corr in enumerate(theta.correlation_matrices):
        prec = corr.precision()
        for m, n in triu_pairs(theta.d):
            val = float(prec[m, n])
            out.append(PrecisionEntry(j, (m, n), val, abs(val) < near_zero_threshold))
    return out
