"""Penalized least squares in an RKHS with an unpenalized null space.

For a centered Gram matrix ``G``, a centered null-space design ``Q`` and a
centered response ``y`` the smoother solves::

    min_{c, d}  (1/n) ||y - (G c + Q d)||^2 + alpha c' G c

whose solution is ``d = (Q' M^-1 Q)^-1 Q' M^-1 y`` and
``c = M^-1 (y - Q d)`` with ``M = G + n alpha I``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from kapc.exceptions import DataError, SolverError
from kapc.kernels import KernelSpec, cross_kernel, null_space_design

DF_KINDS = ("trS", "trS2", "tr2S-S2")


@dataclass
class SmootherFit:
    c: np.ndarray
    d: np.ndarray
    fitted: np.ndarray
    alpha: float


@dataclass
class HatMatrix:
    S: np.ndarray
    alpha: float


def _check_alpha(alpha):
    if not (np.isfinite(alpha) and alpha > 0):
        raise DataError(f"penalty alpha must be positive and finite, got {alpha}")


def gram_eigh(G):
    """Eigenvalues (clipped at 0) and eigenvectors of a centered Gram matrix."""
    G = np.asarray(G, dtype=float)
    try:
        g, U = np.linalg.eigh(0.5 * (G + G.T))
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"eigendecomposition of the Gram matrix failed: {exc}") from exc
    return np.clip(g, 0.0, None), U


class PenalizedSmoother:
    """Factorized smoother for one variable; reusable across responses.

    ``M = G + n alpha I`` is factored through the eigendecomposition
    ``G = U diag(g) U'`` (``g`` clipped at 0), so the smoothing part of the
    hat matrix, ``U diag(g / (g + n alpha)) U'``, has eigenvalues in
    ``[0, 1]`` exactly even when ``n alpha`` is tiny.

    Parameters
    ----------
    G : (n, n) ndarray
        Centered Gram matrix.
    Q : (n, q) ndarray
        Column-centered null-space design (``q`` may be 0).
    alpha : float
        Positive penalty.
    eig : tuple, optional
        Precomputed ``gram_eigh(G)``, reused across penalties.
    """

    def __init__(self, G, Q, alpha, eig=None):
        _check_alpha(alpha)
        self.G = np.asarray(G, dtype=float)
        n = self.G.shape[0]
        self.Q = np.zeros((n, 0)) if Q is None else np.asarray(Q, dtype=float)
        if self.Q.shape[0] != n:
            raise DataError(f"null-space design has {self.Q.shape[0]} rows, Gram matrix {n}")
        self.n = n
        self.alpha = float(alpha)
        g, self._U = gram_eigh(self.G) if eig is None else eig
        self._inv = 1.0 / (g + n * self.alpha)
        self._shrink = g * self._inv
        if self.Q.shape[1]:
            self._MinvQ = self._solve(self.Q)
            QMQ = self.Q.T @ self._MinvQ
            try:
                self._QMQ = cho_factor(0.5 * (QMQ + QMQ.T), lower=True, check_finite=False)
            except LinAlgError as exc:
                raise DataError("null-space columns are collinear (Q' M^-1 Q is singular)") from exc
            cond = np.linalg.cond(QMQ)
            if not np.isfinite(cond) or cond > 1e14:
                raise DataError("null-space columns are collinear (Q' M^-1 Q is singular)")

    def _spectral(self, weights, y):
        Uy = self._U.T @ y
        return self._U @ (weights[:, None] * Uy if Uy.ndim == 2 else weights * Uy)

    def _solve(self, y):
        return self._spectral(self._inv, y)

    def _residual_and_d(self, y):
        y = np.asarray(y, dtype=float)
        y = y - y.mean(axis=0)
        Minv_y = self._solve(y)
        if self.Q.shape[1] == 0:
            return y, Minv_y, np.zeros((0,) + y.shape[1:])
        d = cho_solve(self._QMQ, self.Q.T @ Minv_y, check_finite=False)
        return y - self.Q @ d, Minv_y - self._MinvQ @ d, d

    def coefficients(self, y):
        """Return ``(c, d)`` for the (internally centered) response ``y``."""
        _, c, d = self._residual_and_d(y)
        return c, d

    def coefficients_and_fit(self, y):
        """``(c, d, fitted)`` with ``G c`` taken as ``(y - Q d) - n alpha c``.

        The identity follows from ``(G + n alpha I) c = y - Q d`` and saves
        the products with ``G`` inside iterative solvers.
        """
        r, c, d = self._residual_and_d(y)
        return c, d, r - (self.n * self.alpha) * c + self.Q @ d

    def fit(self, y) -> SmootherFit:
        r, c, d = self._residual_and_d(y)
        # G c = G M^-1 (y - Q d), applied in the eigenbasis for accuracy
        return SmootherFit(c=c, d=d, fitted=self._spectral(self._shrink, r) + self.Q @ d, alpha=self.alpha)

    def hat(self) -> HatMatrix:
        S = self.fit(np.eye(self.n)).fitted
        return HatMatrix(S=0.5 * (S + S.T), alpha=self.alpha)


def fit_penalized_regression(G, Q, y, alpha) -> SmootherFit:
    """Solve the penalized regression of ``y`` on one variable."""
    return PenalizedSmoother(G, Q, alpha).fit(y)


def hat_matrix(G, Q, alpha) -> HatMatrix:
    """Smoother matrix ``S`` mapping responses to centered fitted values."""
    return PenalizedSmoother(G, Q, alpha).hat()


def degrees_of_freedom(S, kind: str = "trS") -> float:
    """Degrees of freedom of a smoother: ``tr S``, ``tr S^2`` or ``tr(2S - S^2)``."""
    S = S.S if isinstance(S, HatMatrix) else np.asarray(S, dtype=float)
    if kind == "trS":
        return float(np.trace(S))
    if kind == "trS2":
        return float(np.sum(S * S.T))
    if kind == "tr2S-S2":
        return float(2.0 * np.trace(S) - np.sum(S * S.T))
    raise DataError(f"unknown degrees-of-freedom kind {kind!r}; expected one of {DF_KINDS}")


def penalized_objective(G, Q, y, alpha, c, d) -> float:
    y = np.asarray(y, dtype=float)
    y = y - y.mean()
    r = y - (G @ c + (Q @ d if Q is not None and Q.shape[1] else 0.0))
    return float(r @ r / len(y) + alpha * c @ G @ c)


def transform_from_kernel(K_new, K_train, beta, Q_new=None, Q_train=None, d=None):
    """Evaluate a fitted transform from kernel values.

    ``K_new`` holds ``k(x_new_r, x_i)`` against the ``n`` training points and
    ``K_train`` the training kernel matrix.  ``Q_new``/``Q_train`` are the
    *uncentered* null-space designs at the new and training points.  The
    result is centered so that it has mean zero over the training points.
    """
    beta = np.asarray(beta, dtype=float)
    hb = beta - beta.mean()
    out = np.asarray(K_new, dtype=float) @ hb - np.mean(K_train @ hb)
    if d is not None and len(d):
        out = out + (Q_new - Q_train.mean(axis=0)) @ np.asarray(d, dtype=float)
    return out


def evaluate_transform(spec: KernelSpec, training_xs, beta, d, x_new):
    """Value of ``sum_i beta_i f_i(x) + sum_l d_l q_l(x)`` minus its training mean.

    ``f_i`` is the kernel section at training point ``i`` minus the average
    section.  Accepts a scalar or an array of new points.
    """
    if not spec.pointwise:
        raise DataError("out-of-sample evaluation is unsupported for precomputed kernels")
    training_xs = np.asarray(training_xs, dtype=float).ravel()
    scalar = np.ndim(x_new) == 0
    x_new = np.atleast_1d(np.asarray(x_new, dtype=float))
    if spec.kind == "sobolev" and spec.lower is None:
        spec = spec.fit_domain(training_xs)
    K_new = cross_kernel(spec, x_new, training_xs)
    K_train = cross_kernel(spec, training_xs, training_xs)
    Qn = Qt = None
    if spec.null_space_dim:
        Qn = null_space_design(spec, x_new)
        Qt = null_space_design(spec, training_xs)
    out = transform_from_kernel(K_new, K_train, beta, Qn, Qt, d)
    return float(out[0]) if scalar else out
