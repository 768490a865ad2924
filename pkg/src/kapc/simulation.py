"""Simulated four-variable example with a known smallest APC.

Latent Gaussians ``Y1 = W1 + Z1``, ``Y2 = W2 + Z2``, ``Y3 = W1 + W2 + Z3``,
``Y4 = Z4`` (``W ~ N(0, 1)``, ``Z ~ N(0, 0.1^2)``) are observed through
``X1 = exp(Y1)``, ``X2 = -Y2^(1/3)``, ``X3 = logistic(Y3)``, ``X4 = Y4``.
Inverting the marginal maps recovers the ``Y``'s, so the population APC
transforms are rescaled versions of ``log x``, ``-x^3``, ``logit x`` and 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from kapc.exceptions import DataError

NOISE_SD = 0.1
LATENT_COV = np.array(
    [
        [1.01, 0.0, 1.0, 0.0],
        [0.0, 1.01, 1.0, 0.0],
        [1.0, 1.0, 2.01, 0.0],
        [0.0, 0.0, 0.0, 0.01],
    ]
)
# variance of each population transform in the normalized APC
TARGET_VARIANCES = np.array([0.25, 0.25, 0.5, 0.0])


@dataclass
class SimulationTruth:
    population_corr: np.ndarray
    smallest_eigenvalue: float
    eigenvector: np.ndarray
    component_variances: np.ndarray
    variance_shares: np.ndarray


def generate_simulation(n: int, seed=0):
    """Draw ``n`` rows; returns the observed ``X`` and the latent ``Y`` (both ``n x 4``)."""
    if n < 2:
        raise DataError("simulation needs n >= 2")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n, 2))
    Z = NOISE_SD * rng.standard_normal((n, 4))
    Y = np.column_stack([W[:, 0] + Z[:, 0], W[:, 1] + Z[:, 1], W[:, 0] + W[:, 1] + Z[:, 2], Z[:, 3]])
    X = np.column_stack([np.exp(Y[:, 0]), -np.cbrt(Y[:, 1]), expit(Y[:, 2]), Y[:, 3]])
    return X, Y


def population_correlation_eigen() -> SimulationTruth:
    """Smallest eigenpair of the latent correlation matrix (exact covariance)."""
    sd = np.sqrt(np.diag(LATENT_COV))
    corr = LATENT_COV / np.outer(sd, sd)
    vals, vecs = np.linalg.eigh(corr)
    v = vecs[:, 0]
    v = v if v[np.argmax(np.abs(v))] > 0 else -v
    return SimulationTruth(
        population_corr=corr,
        smallest_eigenvalue=float(vals[0]),
        eigenvector=v,
        component_variances=v**2,
        variance_shares=np.diag(LATENT_COV) / np.trace(LATENT_COV),
    )


def _scales():
    # phi_j* = s_j * Y_j with Var = TARGET_VARIANCES and phi_1 + phi_2 + phi_3 ~ noise
    signs = np.array([1.0, 1.0, -1.0, 0.0])
    return signs * np.sqrt(TARGET_VARIANCES / np.diag(LATENT_COV))


def latent_from_observed(X) -> np.ndarray:
    """Invert the marginal maps: ``log x1``, ``-x2^3``, ``logit x3``, ``x4``."""
    X = np.asarray(X, dtype=float)
    return np.column_stack([np.log(X[:, 0]), -X[:, 1] ** 3, logit(X[:, 2]), X[:, 3]])


def true_transforms(X) -> np.ndarray:
    """Population APC transforms evaluated at observed data (``n x 4``)."""
    return latent_from_observed(X) * _scales()


def _fitted_values(model, X, component):
    phi = model.transform(X, component=component)
    comp = model.components[component]
    # put the estimate on the scale sum_j Var(phi_j) = 1 used for the truth
    return phi / np.sqrt(comp.variances.sum())


def estimation_errors(model, n_eval=10000, seed=12345, component=0) -> np.ndarray:
    """``Var[phi_hat_j(X_j) - phi_j*(X_j)]`` on fresh draws, for every variable.

    The fitted component is rescaled to ``sum_j Var(phi_hat_j) = 1`` over the
    training data and its global sign chosen to maximize the summed
    covariance with the truth.
    """
    X, _ = generate_simulation(n_eval, seed)
    est = _fitted_values(model, X, component)
    truth = true_transforms(X)
    cov = np.sum((est - est.mean(axis=0)) * (truth - truth.mean(axis=0)))
    if cov < 0:
        est = -est
    return (est - truth).var(axis=0, ddof=1)


def estimation_error(model, j: int, n_eval=10000, seed=12345, component=0) -> float:
    return float(estimation_errors(model, n_eval, seed, component)[j])
