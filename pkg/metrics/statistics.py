"""
Objective metrics. All moments are population (1/n) moments, matching the
concordance coefficient in `predictor.losses`.
"""

import numpy as np
from scipy import linalg

from commons.exceptions import DegenerateInputError, NumericError, ShapeError
from predictor.losses import paired_sequences


def pearson_r(x, y):
    x, y = paired_sequences(x, y)
    std_x, std_y = x.std(), y.std()
    if std_x == 0 or std_y == 0:
        raise DegenerateInputError("Pearson correlation is undefined for a constant sequence.")
    covariance = np.mean((x - x.mean()) * (y - y.mean()))
    return float(np.clip(covariance / (std_x * std_y), -1.0, 1.0))


def r_squared(y_true, y_pred):
    y_true, y_pred = paired_sequences(y_true, y_pred)
    ss_tot = np.sum((y_true - y_true.mean()) ** 2)
    if ss_tot == 0:
        raise DegenerateInputError("R^2 is undefined when the ground truth is constant.")
    ss_res = np.sum((y_true - y_pred) ** 2)
    return float(1.0 - ss_res / ss_tot)


def gaussian_fit(samples, eps=1e-6):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ShapeError(f"Need at least 2 samples in an (n, d) matrix, got shape {samples.shape}.")
    if not np.isfinite(samples).all():
        raise NumericError("Feature matrix contains non-finite entries.")
    mu = samples.mean(axis=0)
    sigma = np.atleast_2d(np.cov(samples, rowvar=False, bias=True))
    return mu, sigma + eps * np.eye(sigma.shape[0])


def _psd_sqrt(matrix):
    eigenvalues, eigenvectors = linalg.eigh((matrix + matrix.T) / 2.0)
    return (eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.T


def frechet_distance(X, Y, eps=1e-6):
    """
    ||mu_x - mu_y||^2 + tr(S_x + S_y - 2 (S_x S_y)^{1/2}) between Gaussian fits.

    tr((S_x S_y)^{1/2}) is taken from the symmetric product S_x^{1/2} S_y S_x^{1/2},
    which shares its eigenvalues; eigenvalues are clamped at zero.
    """
    mu_x, sigma_x = gaussian_fit(X, eps)
    mu_y, sigma_y = gaussian_fit(Y, eps)
    if mu_x.shape != mu_y.shape:
        raise ShapeError(f"Feature widths differ: {mu_x.shape[0]} vs {mu_y.shape[0]}.")

    root_x = _psd_sqrt(sigma_x)
    product = root_x @ sigma_y @ root_x
    eigenvalues = linalg.eigh((product + product.T) / 2.0, eigvals_only=True)
    tr_covmean = np.sum(np.sqrt(np.clip(eigenvalues, 0.0, None)))

    diff = mu_x - mu_y
    distance = diff @ diff + np.trace(sigma_x) + np.trace(sigma_y) - 2.0 * tr_covmean
    return float(max(distance, 0.0))
