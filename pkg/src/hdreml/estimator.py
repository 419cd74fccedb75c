"""Scikit-learn style estimator wrapping the REML variance-component fit.

RemlVarianceEstimator follows the sklearn conventions (get_params /
set_params, fit(X, y) returning self, trailing-underscore fitted
attributes), so it drops into pipelines and model-selection tooling that
expect that surface.  X plays the role of the high-dimensional
random-effect design; fixed-effect covariates ride along as a fit keyword,
with an intercept always included.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import reml
from .errors import DomainError
from .simulate import StandardizedDesign, standardize_columns


class RemlVarianceEstimator(BaseEstimator):
    """REML variance components for y = X beta + (Z/sqrt(p)) alpha + eps.

    Parameters
    ----------
    standardize : bool, default True
        Column-standardize the design before fitting (sample mean 0,
        sample variance 1 with divisor n-1), as the model assumes.
    m_hint : int or None, default None
        Believed number of truly nonzero effects.  When given, the fit also
        reports adjusted_gamma_ = (p/m_hint) * gamma_, the de-sparsified
        estimate of the per-effect variance ratio.
    gamma_cap : float, default 1e6
        Upper end of the variance-ratio search interval.
    rtol : float, default 1e-8
        Relative tolerance of the root solve in gamma.

    Attributes
    ----------
    gamma_ : float
        Estimated variance ratio sigma_alpha^2 / sigma_eps^2.
    sigma_eps_sq_ : float
        Estimated error variance.
    sigma_alpha_sq_ : float
        Estimated per-effect variance, gamma_ * sigma_eps_sq_.
    h2_ : float
        Estimated heritability gamma_ / (1 + gamma_).
    adjusted_gamma_ : float or None
        (p/m_hint) * gamma_ when m_hint was supplied.
    boundary_ : bool
        True when the score equation had no interior root.
    n_iter_ : int
        Score-function evaluations used by the solver.
    spectrum_ : ProjectedSpectrum
        Eigenvalues and rotated coordinates; reusable for diagnostics.
    """

    def __init__(self, standardize=True, m_hint=None, gamma_cap=reml.GAMMA_CAP,
                 rtol=1e-8):
        self.standardize = standardize
        self.m_hint = m_hint
        self.gamma_cap = gamma_cap
        self.rtol = rtol

    def fit(self, X, y, covariates=None):
        """Estimate the variance components from a design and response.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)
            Random-effect design (e.g. genotype codes or a standardized
            matrix).  The model scales it by 1/sqrt(n_features) internally.
        y : array-like of shape (n_samples,)
            Response.
        covariates : array-like of shape (n_samples, n_covariates), optional
            Fixed-effect columns beyond the intercept.
        """
        X, y = check_X_y(X, y, y_numeric=True, dtype=float)
        n = X.shape[0]
        if covariates is not None:
            covariates = check_array(covariates, dtype=float, ensure_2d=False)
            if covariates.ndim == 1:
                covariates = covariates[:, None]
            if covariates.shape[0] != n:
                raise DomainError(
                    f"covariates have {covariates.shape[0]} rows, expected {n}"
                )
            x_design = np.column_stack([np.ones(n), covariates])
        else:
            x_design = np.ones((n, 1))
        z = standardize_columns(X) if self.standardize else np.asarray(X, float)
        design = StandardizedDesign(z=z)
        self.spectrum_ = reml.project(y, x_design, design)
        result = reml.fit(
            self.spectrum_,
            m_hint=self.m_hint,
            gamma_cap=self.gamma_cap,
            rtol=self.rtol,
        )
        self.result_ = result
        self.gamma_ = result.gamma_hat
        self.sigma_eps_sq_ = result.sigma_eps_sq_hat
        self.sigma_alpha_sq_ = result.sigma_alpha_sq_hat
        self.h2_ = result.h2_hat
        self.adjusted_gamma_ = result.adjusted_gamma
        self.boundary_ = result.boundary
        self.n_iter_ = result.iterations
        self.n_features_in_ = X.shape[1]
        return self

    def score_components(self):
        """Fitted (gamma, sigma_eps_sq, h2) triple; requires a prior fit."""
        check_is_fitted(self, "gamma_")
        return self.gamma_, self.sigma_eps_sq_, self.h2_
