import numpy as np
import pytest
from cases import gaussian
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import GridSearchCV
from sklearn.pipeline import make_pipeline

from gmcopula.dependence import chi_model
from gmcopula.estimator import GaussianMixtureCopula, RankTransformer
from gmcopula.exceptions import DomainError
from gmcopula.inference import log_likelihood
from gmcopula.io import rank_transform
from gmcopula.model import simulate


@pytest.fixture(scope="module")
def sample():
    return simulate(gaussian(0.5), 800, seed=0)


@pytest.fixture(scope="module")
def fitted(sample):
    return GaussianMixtureCopula(n_starts=1).fit(sample)


def test_params_round_trip():
    est = GaussianMixtureCopula(n_components=2, exchangeable=True, random_state=4)
    params = est.get_params()
    assert params["n_components"] == 2 and params["exchangeable"] and params["random_state"] == 4
    other = clone(est).set_params(n_starts=2)
    assert other.n_starts == 2 and other.n_components == 2


def test_fit_attributes(fitted):
    assert fitted.n_features_in_ == 2
    assert fitted.theta_.k == 1
    assert fitted.theta_.correlations[0, 0] == pytest.approx(0.5, abs=0.07)


def test_score(fitted, sample):
    assert fitted.score_samples(sample).shape == (800,)
    assert fitted.score(sample) * 800 == pytest.approx(log_likelihood(fitted.theta_, sample), rel=1e-12)
    assert fitted.aic() == fitted.fit_result_.aic
    assert fitted.aic(sample) == pytest.approx(fitted.aic(), abs=1e-6)


def test_sample_and_summaries(fitted):
    u = fitted.sample(100, random_state=1)
    assert u.shape == (100, 2)
    np.testing.assert_array_equal(u, fitted.sample(100, random_state=1))
    assert fitted.chi(0.9) == chi_model(fitted.theta_, 0.9)
    assert 0.5 < fitted.eta(0.9) < 1


def test_unfitted():
    with pytest.raises(NotFittedError):
        GaussianMixtureCopula().score_samples(np.full((3, 2), 0.5))


def test_rejects_raw_data(fitted):
    with pytest.raises(DomainError):
        fitted.score(np.array([[0.5, 1.5], [0.2, 0.3]]))
    with pytest.raises(ValueError):
        fitted.score(np.full((4, 3), 0.5))


def test_pipeline_on_raw_data(sample):
    raw = np.column_stack([np.exp(sample[:, 0]), -np.log1p(-sample[:, 1])])
    pipe = make_pipeline(RankTransformer(), GaussianMixtureCopula(n_starts=1))
    pipe.fit(raw)
    np.testing.assert_allclose(pipe[0].transform(raw), rank_transform(raw))
    # monotone transforms of the margins leave the ranks, and so the fit, unchanged
    direct = GaussianMixtureCopula(n_starts=1).fit(rank_transform(sample))
    np.testing.assert_allclose(pipe[-1].theta_.correlations, direct.theta_.correlations, atol=1e-12)
    assert np.isfinite(pipe.score(raw))


def test_grid_search(sample):
    search = GridSearchCV(GaussianMixtureCopula(n_starts=1, max_evals=400), {"exchangeable": [False, True]}, cv=2)
    search.fit(sample[:200])
    assert search.best_params_["exchangeable"] in (False, True)


def test_rank_transformer_checks():
    t = RankTransformer().fit(np.random.default_rng(0).normal(size=(5, 2)))
    with pytest.raises(ValueError):
        t.transform(np.zeros((5, 3)) + np.arange(5)[:, None])
