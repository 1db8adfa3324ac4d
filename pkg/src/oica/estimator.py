"""Scikit-learn style estimator around the two-step recovery."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .cumulants import CumulantPair, sample_cumulants
from .errors import DimensionMismatchError
from .optimize import MinimizeConfig
from .recovery import RecoveryConfig, recover

__all__ = ["OvercompleteICA", "check_data"]


def check_data(X, min_samples: int = 2) -> np.ndarray:
    """Finite 2-D float array with at least ``min_samples`` rows."""
    return check_array(X, dtype=np.float64, ensure_min_samples=min_samples, ensure_all_finite=True)


class OvercompleteICA(BaseEstimator):
    """Estimate an ``I x J`` mixing matrix (``J`` may exceed ``I``) with one Gaussian source.

    Parameters
    ----------
    n_sources : int or "auto"
        Number of sources ``J``.  ``"auto"`` uses the detected rank of the
        fourth cumulant plus one.
    restarts : int
        Random starts for the Gaussian-column search.
    joint : bool
        Search over the column and the coefficients together instead of
        eliminating the coefficients in closed form.
    strict : bool
        Raise on inconsistent cumulants instead of returning a best effort.
    random_state : int

    Attributes
    ----------
    mixing_ : ndarray of shape (n_features, n_sources)
        Unit columns; the last one belongs to the Gaussian source.
    gaussian_column_ : ndarray of shape (n_features,)
    n_sources_ : int
    objective_ : float
        Residual of the covariance fit.
    diagnostics_ : dict
    """

    def __init__(self, n_sources="auto", restarts=10, joint=False, strict=True, random_state=0):
        self.n_sources = n_sources
        self.restarts = restarts
        self.joint = joint
        self.strict = strict
        self.random_state = random_state

    def _config(self) -> RecoveryConfig:
        return RecoveryConfig(
            seed=int(self.random_state or 0),
            profile=not self.joint,
            strict=self.strict,
            minimize=MinimizeConfig(restarts=int(self.restarts)),
        )

    def fit(self, X, y=None):
        X = check_data(X)
        self.n_features_in_ = X.shape[1]
        return self._fit_cumulants(sample_cumulants(X))

    def fit_cumulants(self, cumulants: CumulantPair):
        """Fit from given cumulants (population or sample) instead of data."""
        self.n_features_in_ = cumulants.dim
        return self._fit_cumulants(cumulants)

    def _fit_cumulants(self, cp: CumulantPair):
        if self.n_sources != "auto" and int(self.n_sources) < 1:
            raise ValueError("n_sources must be positive or 'auto'")
        res = recover(cp, self.n_sources, self._config())
        self.mixing_ = res.A_hat.array.copy()
        self.gaussian_column_ = self.mixing_[:, -1].copy()
        self.n_sources_ = self.mixing_.shape[1]
        self.objective_ = float(res.objective)
        self.diagnostics_ = res.diagnostics
        return self

    def covariance(self) -> np.ndarray:
        """Model covariance ``sum_j l_j a_j a_j^T`` from the fitted coefficients."""
        check_is_fitted(self, "mixing_")
        lam = np.asarray(self.diagnostics_["coefficients"])
        return (self.mixing_ * lam) @ self.mixing_.T

    def check_features(self, X) -> np.ndarray:
        check_is_fitted(self, "mixing_")
        X = check_data(X, min_samples=1)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatchError(
                f"X has {X.shape[1]} features, the estimator was fitted with {self.n_features_in_}"
            )
        return X
