"""Constrained maximum likelihood for Gaussian mixture copulas.

Constraints are enforced in two ways. The packed coordinates used by the
optimizer map onto the simplex, positive scales and ordered first-coordinate
means by construction; everything else (positive definiteness in particular)
is checked inside :func:`log_likelihood`, which returns ``-inf`` for any
candidate that fails.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit
from scipy.stats import rankdata

from gmcopula.exceptions import (
    DegenerateFitError,
    DimensionError,
    DomainError,
    NotPositiveDefiniteError,
)
from gmcopula.model import MixtureParameters, copula_log_density
from gmcopula.numerics import CorrelationMatrix, triu_pairs

logger = logging.getLogger(__name__)

SENTINEL = -np.inf
# Packed coordinates are clipped block by block so that the natural values stay
# representable: expit keeps weights positive, exp keeps gaps above one ulp of
# the running mean sum, tanh stays strictly inside (-1, 1).
_CLIP_LOGIT = 30.0
_CLIP_GAP = 12.0
_CLIP_SCALE = 20.0
_CLIP_CORR = 18.0
REDUCED_WEIGHT = 1e-4


def count_parameters(d, k, exchangeable=False):
    """Number of free parameters after the reference and ordering constraints."""
    if d < 2 or k < 1:
        raise DomainError("count_parameters requires d >= 2 and k >= 1")
    n_corr = k * d * (d - 1) // 2
    if exchangeable:
        return 3 * (k - 1) + n_corr
    return (k - 1) + (k - 1) * d + (k * d - 1) + n_corr


def check_constraints(theta):
    """Return None when ``theta`` is admissible, else the first violated constraint."""
    return theta.violation()


def as_copula_sample(sample, d=None):
    """Validate an ``(n, d)`` array of pseudo-observations strictly inside (0, 1)."""
    u = np.asarray(sample, dtype=float)
    if u.ndim != 2:
        raise DimensionError("sample must be a 2-D array")
    if d is not None and u.shape[1] != d:
        raise DimensionError(f"sample has {u.shape[1]} columns, parameters have d={d}")
    if not np.all((u > 0) & (u < 1)):
        raise DomainError("sample entries must lie strictly inside (0, 1)")
    return u


def log_likelihood(theta, sample):
    """Copula log-likelihood, or ``-inf`` when ``theta`` violates a constraint."""
    u = as_copula_sample(sample, theta.d)
    if u.shape[0] < 2:
        raise DimensionError("log-likelihood needs at least two rows")
    if theta.violation() is not None:
        return SENTINEL
    with np.errstate(all="ignore"):
        terms = copula_log_density(theta, u)
    total = float(np.sum(terms))
    return total if np.isfinite(total) else SENTINEL


# -- packed coordinates --------------------------------------------------------


def packed_size(d, k, exchangeable=False):
    return count_parameters(d, k, exchangeable)


def _stick_offsets(k):
    # zero logits give equal weights
    return np.log(k - 1 - np.arange(k - 1)) if k > 1 else np.zeros(0)


def pack(theta, exchangeable=False):
    """Map admissible parameters to an unconstrained vector.

    Layout: stick-breaking logits of the weights, log gaps between successive
    first-coordinate means followed by the free mean coordinates, log scales,
    then inverse hyperbolic tangents of the correlations.
    """
    k, d = theta.k, theta.d
    w = theta.weights
    remaining = 1.0 - np.concatenate([[0.0], np.cumsum(w[:-1])])
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(remaining[: k - 1] > 0, w[: k - 1] / remaining[: k - 1], 1.0)
    logits = logit(np.clip(frac, 0.0, 1.0)) + _stick_offsets(k)
    parts = [logits]
    if exchangeable:
        mu = theta.means[:, 0]
        parts.append(np.log(np.diff(mu)))
        parts.append(np.log(theta.scales[1:, 0]))
    else:
        for j in range(1, k):
            gap = theta.means[j, 0] - theta.means[j - 1, 0]
            parts.append(np.concatenate([[np.log(gap)], theta.means[j, 1:]]))
        parts.append(np.log(theta.scales.reshape(-1)[1:]))
    parts.append(np.arctanh(theta.correlations.reshape(-1)))
    return np.concatenate(parts)


def _clip_bounds(d, k, exchangeable):
    n_corr = k * d * (d - 1) // 2
    if exchangeable:
        blocks = [(_CLIP_LOGIT, k - 1), (_CLIP_GAP, k - 1), (_CLIP_SCALE, k - 1)]
    else:
        blocks = [(_CLIP_LOGIT, k - 1)]
        blocks += [(_CLIP_GAP, 1), (np.inf, d - 1)] * (k - 1)
        blocks.append((_CLIP_SCALE, k * d - 1))
    blocks.append((_CLIP_CORR, n_corr))
    return np.concatenate([np.full(m, b) for b, m in blocks])


def unpack(vector, d, k, exchangeable=False):
    """Inverse of :func:`pack`; the result may still fail positive definiteness."""
    v = np.asarray(vector, dtype=float).reshape(-1)
    if v.size != packed_size(d, k, exchangeable):
        raise DimensionError(
            f"packed vector has length {v.size}, expected {packed_size(d, k, exchangeable)}"
        )
    bound = _clip_bounds(d, k, exchangeable)
    v = np.clip(v, -bound, bound)
    pos = 0

    def take(m):
        nonlocal pos
        out = v[pos : pos + m]
        pos += m
        return out

    frac = expit(take(k - 1) - _stick_offsets(k))
    weights = np.empty(k)
    remaining = 1.0
    for j in range(k - 1):
        weights[j] = remaining * frac[j]
        remaining -= weights[j]
    weights[k - 1] = max(remaining, 0.0)

    means = np.zeros((k, d))
    scales = np.ones((k, d))
    if exchangeable:
        means[1:, :] = np.cumsum(np.exp(take(k - 1)))[:, None]
        scales[1:, :] = np.exp(take(k - 1))[:, None]
    else:
        for j in range(1, k):
            block = take(d)
            means[j, 0] = means[j - 1, 0] + np.exp(block[0])
            means[j, 1:] = block[1:]
        flat = np.ones(k * d)
        flat[1:] = np.exp(take(k * d - 1))
        scales = flat.reshape(k, d)
    corr = np.tanh(take(k * d * (d - 1) // 2)).reshape(k, -1)
    return MixtureParameters(weights, means, scales, corr)


# -- positive-definite repair and pairwise starts ------------------------------


def shrink_to_pd(offdiag, d, factor=0.95, max_iter=200):
    """Scale correlations toward zero until the matrix is positive definite.

    Returns the repaired correlations and the number of shrink steps taken.
    """
    off = np.asarray(offdiag, dtype=float).copy()
    for n_iter in range(max_iter + 1):
        try:
            CorrelationMatrix(d, off)
            return off, n_iter
        except NotPositiveDefiniteError:
            off *= factor
    raise NotPositiveDefiniteError(f"no positive-definite matrix after {max_iter} shrink steps")


def pairwise_initialize(sample, k, options=None):
    """Start for a ``d >= 3`` fit assembled from all bivariate fits.

    Each pair is fitted with ``k`` components. The copula only identifies each
    coordinate's parameters up to location and scale, so every pairwise estimate
    is first expressed relative to component 1 of that coordinate before the
    estimates are averaged across the pairs sharing it.
    """
    u = as_copula_sample(sample)
    d = u.shape[1]
    if d < 3:
        raise DimensionError("pairwise initialization needs d >= 3")
    options = options or FitOptions(k=k)
    pair_opts = FitOptions(
        k=k,
        exchangeable=options.exchangeable,
        max_evals=options.max_evals,
        rel_tol=options.rel_tol,
        n_starts=max(1, min(options.n_starts, 2)),
        seed=options.seed,
        init="random",
    )
    w_sum = np.zeros(k)
    mu_sum = np.zeros((k, d))
    sd_sum = np.zeros((k, d))
    counts = np.zeros(d)
    corr = np.zeros((k, d * (d - 1) // 2))
    pair_index = {p: n for n, p in enumerate(triu_pairs(d))}
    for m, n in combinations(range(d), 2):
        res = fit(u[:, [m, n]], pair_opts)
        th = res.theta_hat
        w_sum += th.weights
        for col, coord in enumerate((m, n)):
            ref = th.scales[0, col]
            mu_sum[:, coord] += th.means[:, col] / ref
            sd_sum[:, coord] += th.scales[:, col] / ref
            counts[coord] += 1
        corr[:, pair_index[(m, n)]] = th.correlations[:, 0]
    weights = w_sum / w_sum.sum()
    means = mu_sum / counts
    scales = sd_sum / counts
    means[0] = 0.0
    scales[0] = 1.0
    # the first coordinate's means must increase strictly with the component index
    order = np.argsort(means[:, 0], kind="stable")
    weights, means, scales, corr = weights[order], means[order], scales[order], corr[order]
    if order[0] != 0:
        means = means - means[0]
        scales = scales / scales[0]
    for j in range(1, k):
        if means[j, 0] <= means[j - 1, 0]:
            means[j, 0] = means[j - 1, 0] + 1e-3
    repaired = np.empty_like(corr)
    shrink_steps = 0
    for j in range(k):
        repaired[j], steps = shrink_to_pd(corr[j], d)
        shrink_steps += steps
    if weights[0] <= 0:
        weights = np.full(k, 1.0 / k)
    theta0 = MixtureParameters(weights, means, scales, repaired)
    if options.exchangeable:
        theta0 = _exchangeable_projection(theta0)
    logger.info("pairwise start assembled with %d shrink steps", shrink_steps)
    return theta0


def _exchangeable_projection(theta):
    """Closest exchangeable parameters: one mean and one scale per component."""
    mu = theta.means.mean(axis=1)
    mu = mu - mu[0]
    for j in range(1, theta.k):
        if mu[j] <= mu[j - 1]:
            mu[j] = mu[j - 1] + 1e-3
    sd = theta.scales.mean(axis=1)
    sd = sd / sd[0]
    means = np.repeat(mu[:, None], theta.d, axis=1)
    scales = np.repeat(sd[:, None], theta.d, axis=1)
    return MixtureParameters(theta.weights, means, scales, theta.correlations)


# -- fitting -------------------------------------------------------------------


@dataclass
class FitOptions:
    """Settings for :func:`fit`.

    ``init`` is ``"random"`` (jittered starts around a data-driven origin),
    ``"pairwise"`` (assembled from bivariate fits, d >= 3), ``"auto"`` (pairwise
    for d >= 3, random otherwise) or a :class:`MixtureParameters` start.
    """

    k: int = 1
    exchangeable: bool = False
    max_evals: int | None = None
    rel_tol: float = 1e-8
    n_starts: int = 5
    seed: int | None = 0
    init: object = "auto"
    jitter: float = 0.25
    n_jobs: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise DomainError("k must be at least 1")
        if self.n_starts < 1:
            raise DomainError("n_starts must be at least 1")
        if self.max_evals is not None and self.max_evals < 100:
            raise DomainError("max_evals must be at least 100")
        if isinstance(self.init, str) and self.init not in ("auto", "random", "pairwise"):
            raise DomainError(f"unknown init {self.init!r}")


@dataclass
class FitResult:
    """Outcome of :func:`fit`."""

    theta_hat: MixtureParameters
    log_likelihood: float
    aic: float
    n_params: int
    converged: bool
    evaluations: int
    elapsed_seconds: float
    reduced: bool
    exchangeable: bool = False
    n_obs: int = 0
    start_values: list = field(default_factory=list)

    @property
    def k(self):
        return self.theta_hat.k


def aic(fit_result_or_n_params, log_lik=None):
    """Akaike information criterion ``2 m - 2 l``."""
    if log_lik is None:
        res = fit_result_or_n_params
        return 2.0 * res.n_params - 2.0 * res.log_likelihood
    return 2.0 * fit_result_or_n_params - 2.0 * log_lik


def compare(fits):
    """Rank fits by AIC and report the AIC change relative to the ``k = 1`` fit.

    Returns a list of dicts sorted by ascending AIC. ``delta_vs_k1`` is NaN when
    no single-component fit is present.
    """
    fits = list(fits)
    base = [f.aic for f in fits if f.k == 1]
    ref = min(base) if base else np.nan
    rows = [
        {
            "k": f.k,
            "n_params": f.n_params,
            "loglik": f.log_likelihood,
            "aic": f.aic,
            "delta_vs_k1": f.aic - ref,
            "fit": f,
        }
        for f in fits
    ]
    order = sorted(range(len(rows)), key=lambda i: (rows[i]["aic"], rows[i]["n_params"]))
    for rank, i in enumerate(order, start=1):
        rows[i]["rank"] = rank
    return [rows[i] for i in order]


def normal_score_correlation(u):
    """Correlation matrix of the normal scores ``Phi^{-1}(rank / (n + 1))``."""
    from scipy.special import ndtri

    n = u.shape[0]
    z = ndtri(rankdata(u, axis=0) / (n + 1))
    c = np.corrcoef(z, rowvar=False)
    return np.atleast_2d(c)


def _origin(u, k, exchangeable):
    """Packed start: equal weights, unit gaps, unit scales, normal-score correlations."""
    d = u.shape[1]
    c = normal_score_correlation(u)
    off = np.array([c[m, n] for m, n in triu_pairs(d)])
    off, _ = shrink_to_pd(np.clip(off, -0.95, 0.95), d)
    corr = np.tile(off, (k, 1))
    means = np.zeros((k, d))
    means[:, 0] = np.arange(k)
    if exchangeable:
        means[:] = np.arange(k)[:, None]
    theta = MixtureParameters(np.full(k, 1.0 / k), means, np.ones((k, d)), corr)
    return pack(theta, exchangeable)


class _Objective:
    """Negative mean log-likelihood in packed coordinates, with an evaluation count."""

    def __init__(self, u, d, k, exchangeable):
        self.u, self.d, self.k, self.exchangeable = u, d, k, exchangeable
        self.n_evals = 0

    def __call__(self, v):
        self.n_evals += 1
        theta = unpack(v, self.d, self.k, self.exchangeable)
        ll = log_likelihood(theta, self.u)
        return np.inf if ll == SENTINEL else -ll / self.u.shape[0]


def _run_start(objective, v0, max_evals, rel_tol):
    """Simplex search restarted from its own best point until it stops improving."""
    v, f = np.asarray(v0, dtype=float), objective(v0)
    converged = False
    while objective.n_evals < max_evals:
        budget = max_evals - objective.n_evals
        res = minimize(
            objective,
            v,
            method="Nelder-Mead",
            options={
                "maxfev": budget,
                "xatol": 1e-6,
                "fatol": rel_tol * max(1.0, abs(f)) if np.isfinite(f) else 1e-8,
                "adaptive": v.size > 4,
            },
        )
        f_new = float(res.fun)
        if np.isfinite(f) and np.isfinite(f_new) and abs(f - f_new) <= rel_tol * max(1.0, abs(f)):
            v, f = res.x, min(f, f_new)
            converged = True
            break
        if f_new <= f or not np.isfinite(f):
            v, f = res.x, f_new
    return v, f, converged


def fit(sample, options=None, **kwargs):
    """Maximize the copula log-likelihood over ``k``-component parameters.

    Parameters
    ----------
    sample : array-like of shape (n, d)
        Pseudo-observations strictly inside (0, 1).
    options : FitOptions, optional
        Fit settings; keyword arguments build one when omitted.

    Returns
    -------
    FitResult

    Raises
    ------
    DegenerateFitError
        When every start ends at the ``-inf`` sentinel.
    """
    if options is None:
        options = FitOptions(**kwargs)
    elif kwargs:
        raise TypeError("pass either options or keyword arguments, not both")
    u = as_copula_sample(sample)
    n, d = u.shape
    if d < 2:
        raise DimensionError("fitting needs at least two columns")
    k, exch = options.k, options.exchangeable
    m = count_parameters(d, k, exch)
    if n < 10 * m:
        warnings.warn(
            f"{n} observations for {m} parameters; estimates may be unstable",
            RuntimeWarning,
            stacklevel=2,
        )
    max_evals = options.max_evals or 20000 * m
    t0 = time.perf_counter()

    init = options.init
    if isinstance(init, MixtureParameters):
        base = pack(init.validate(), exch)
    elif init == "pairwise" or (init == "auto" and d >= 3):
        base = pack(pairwise_initialize(u, k, options), exch)
    else:
        base = _origin(u, k, exch)

    rng = np.random.default_rng(options.seed)
    starts = [base] + [
        base + options.jitter * rng.standard_normal(base.size)
        for _ in range(options.n_starts - 1)
    ]

    def one(v0):
        obj = _Objective(u, d, k, exch)
        v, f, ok = _run_start(obj, v0, max_evals, options.rel_tol)
        return v, f, ok, obj.n_evals

    if options.n_jobs not in (None, 1) and len(starts) > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=options.n_jobs)(delayed(one)(v0) for v0 in starts)
    else:
        results = [one(v0) for v0 in starts]

    values = [r[1] for r in results]
    best = int(np.argmin(values))
    if not np.isfinite(values[best]):
        raise DegenerateFitError("every start returned the -inf likelihood sentinel")
    v, f, converged, _ = results[best]
    theta = unpack(v, d, k, exch)
    ll = log_likelihood(theta, u)
    evaluations = int(sum(r[3] for r in results))
    if not converged:
        logger.warning("optimizer budget exhausted before convergence (k=%d)", k)
    return FitResult(
        theta_hat=theta,
        log_likelihood=ll,
        aic=aic(m, ll),
        n_params=m,
        converged=bool(converged),
        evaluations=evaluations,
        elapsed_seconds=time.perf_counter() - t0,
        reduced=bool(np.any(theta.weights <= REDUCED_WEIGHT)),
        exchangeable=exch,
        n_obs=n,
        start_values=[float(-r[1] * n) for r in results],
    )
