"""Scikit-learn style wrappers around fitting and the dependence summaries."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from gmcopula import dependence as dep
from gmcopula import inference
from gmcopula.exceptions import DomainError
from gmcopula.io import rank_transform
from gmcopula.model import copula_log_density, simulate


class RankTransformer(TransformerMixin, BaseEstimator):
    """Map each column to ``rank / (n + 1)``, averaging the ranks of ties.

    The transform is computed from the rows it is given, so ``transform``
    on new data ranks that data on its own.
    """

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2, ensure_min_features=2)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, ensure_min_samples=2, ensure_min_features=2)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return rank_transform(X)


def _check_unit(X, n_features=None):
    X = check_array(X, ensure_min_samples=1, ensure_min_features=2)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, expected {n_features}")
    if not np.all((X > 0) & (X < 1)):
        raise DomainError("X must hold pseudo-observations strictly inside (0, 1)")
    return X


class GaussianMixtureCopula(BaseEstimator):
    """Gaussian mixture copula fitted by constrained maximum likelihood.

    Parameters
    ----------
    n_components : int, default=1
        Number of mixture components ``k``.
    exchangeable : bool, default=False
        Share one mean and one scale across coordinates within each component.
    n_starts : int, default=5
        Number of optimizer starts.
    max_evals : int or None, default=None
        Evaluation budget per start; ``None`` scales it with the parameter count.
    rel_tol : float, default=1e-8
        Relative change of the objective that ends a start.
    init : {"auto", "random", "pairwise"} or MixtureParameters, default="auto"
        Starting point of the search.
    random_state : int or None, default=0
        Seed for the jittered starts.
    n_jobs : int or None, default=None
        Run starts in parallel with joblib when greater than one.

    Attributes
    ----------
    theta_ : MixtureParameters
        Fitted parameters.
    fit_result_ : FitResult
        Full optimizer report.
    n_features_in_ : int
    """

    def __init__(
        self,
        n_components=1,
        exchangeable=False,
        n_starts=5,
        max_evals=None,
        rel_tol=1e-8,
        init="auto",
        random_state=0,
        n_jobs=None,
    ):
        self.n_components = n_components
        self.exchangeable = exchangeable
        self.n_starts = n_starts
        self.max_evals = max_evals
        self.rel_tol = rel_tol
        self.init = init
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        X = _check_unit(X)
        opts = inference.FitOptions(
            k=self.n_components,
            exchangeable=self.exchangeable,
            max_evals=self.max_evals,
            rel_tol=self.rel_tol,
            n_starts=self.n_starts,
            seed=self.random_state,
            init=self.init,
            n_jobs=self.n_jobs,
        )
        self.fit_result_ = inference.fit(X, opts)
        self.theta_ = self.fit_result_.theta_hat
        self.n_features_in_ = X.shape[1]
        return self

    def score_samples(self, X):
        """Log copula density of each row."""
        check_is_fitted(self, "theta_")
        return copula_log_density(self.theta_, _check_unit(X, self.n_features_in_))

    def score(self, X, y=None):
        """Mean log copula density per row."""
        return float(np.mean(self.score_samples(X)))

    def aic(self, X=None):
        """AIC of the fit, or of the fitted parameters on new data ``X``."""
        check_is_fitted(self, "theta_")
        if X is None:
            return self.fit_result_.aic
        ll = inference.log_likelihood(self.theta_, _check_unit(X, self.n_features_in_))
        return inference.aic(self.fit_result_.n_params, ll)

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self, "theta_")
        return simulate(self.theta_, n_samples, random_state)

    def chi(self, r):
        check_is_fitted(self, "theta_")
        return dep.chi_model(self.theta_, r)

    def eta(self, r):
        check_is_fitted(self, "theta_")
        return dep.eta_model(self.theta_, r)
