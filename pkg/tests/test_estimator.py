import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from oica import OvercompleteICA
from oica.cumulants import Exponential, Gaussian, SourceSpec, population_cumulants
from oica.errors import DimensionMismatchError
from oica.experiments import match_error
from oica.mixing import MixingMatrix

from _matrices import A_ID


def test_params_and_clone():
    est = OvercompleteICA(n_sources=6, restarts=3, random_state=4)
    assert est.get_params()["restarts"] == 3
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est


def test_fit_cumulants():
    cp = population_cumulants(A_ID, SourceSpec.default(6))
    est = OvercompleteICA(n_sources=6).fit_cumulants(cp)
    assert est.mixing_.shape == (4, 6) and est.n_sources_ == 6 and est.n_features_in_ == 4
    assert match_error(MixingMatrix(A_ID), est.mixing_) <= 0.01
    assert np.allclose(est.covariance(), cp.k2.full(), atol=1e-7)


def test_fit_data():
    rng = np.random.default_rng(3)
    spec = SourceSpec([Exponential(1.0)] * 5 + [Gaussian(1.0)])
    X = spec.sample(rng, 100_000) @ A_ID.T
    est = OvercompleteICA(n_sources=6, strict=False).fit(X)
    U = A_ID / np.linalg.norm(A_ID, axis=0)
    assert abs(est.gaussian_column_ @ U[:, 5]) > 0.95
    assert est.check_features(X[:3]).shape == (3, 4)
    with pytest.raises(DimensionMismatchError):
        est.check_features(np.ones((2, 3)))


def test_fit_is_deterministic():
    cp = population_cumulants(A_ID, SourceSpec.default(6))
    a = OvercompleteICA(n_sources=6, random_state=2).fit_cumulants(cp).mixing_
    b = OvercompleteICA(n_sources=6, random_state=2).fit_cumulants(cp).mixing_
    assert np.array_equal(a, b)


def test_input_validation():
    with pytest.raises(ValueError):
        OvercompleteICA().fit(np.ones((1, 3)))
    with pytest.raises(ValueError):
        OvercompleteICA().fit(np.array([[1.0, np.nan], [2.0, 3.0]]))
    with pytest.raises(ValueError):
        OvercompleteICA(n_sources=0).fit(np.random.default_rng(0).standard_normal((20, 2)))
    with pytest.raises(NotFittedError):
        OvercompleteICA().covariance()
