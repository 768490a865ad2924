"""Kernels on the real line, kernel matrices and null-space designs.

Three kernel families are supported:

* ``gaussian``: ``exp(-(x - x')**2 / (2 * bandwidth**2))``, no null space.
* ``sobolev``: the order-``m`` spline kernel on ``[0, 1]`` built from scaled
  Bernoulli polynomials ``k_r = B_r / r!``::

      k1(x, x') = k_m(x) k_m(x') + (-1)**(m-1) k_2m(|x - x'|)

  It reproduces the penalized part of the Sobolev space whose seminorm is
  ``int (f^(m))**2``.  The unpenalized part is spanned by ``x, ..., x**(m-1)``
  (constants are never part of a transform).  Raw inputs are mapped to
  ``[0, 1]`` with the min/max of the training values, stored on the spec.
* ``precomputed``: a user supplied ``n x n`` similarity matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import bernoulli, comb

from kapc.exceptions import DataError

KINDS = ("gaussian", "sobolev", "precomputed")


@dataclass(frozen=True)
class KernelSpec:
    """Description of the kernel used for one variable.

    Parameters
    ----------
    kind : {'gaussian', 'sobolev', 'precomputed'}
    bandwidth : float
        Gaussian bandwidth (ignored otherwise).
    order : int
        Sobolev order ``m`` (ignored otherwise).
    matrix : ndarray, optional
        The full kernel matrix for ``precomputed`` kernels.
    source : str, optional
        Where a precomputed matrix was read from; kept in model documents.
    lower, upper : float, optional
        Training range used to rescale Sobolev inputs onto ``[0, 1]``.
    """

    kind: str
    bandwidth: float = 1.0
    order: int = 2
    matrix: np.ndarray | None = field(default=None, repr=False, compare=False)
    source: str | None = None
    lower: float | None = None
    upper: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "gaussian":
            if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
                raise DataError(f"gaussian bandwidth must be positive, got {self.bandwidth}")
        elif self.kind == "sobolev":
            if int(self.order) != self.order or self.order < 1:
                raise DataError(f"sobolev order must be an integer >= 1, got {self.order}")
            if (self.lower is None) != (self.upper is None):
                raise DataError("sobolev domain needs both lower and upper")
            if self.lower is not None and not self.upper > self.lower:
                raise DataError("sobolev domain must have upper > lower")
        elif self.matrix is None:
            raise DataError("precomputed kernel requires a matrix")

    @classmethod
    def gaussian(cls, bandwidth=1.0):
        return cls("gaussian", bandwidth=float(bandwidth))

    @classmethod
    def sobolev(cls, order=2):
        return cls("sobolev", order=int(order))

    @classmethod
    def precomputed(cls, matrix, source=None):
        from kapc.gram import validate_kernel_matrix

        K = np.asarray(matrix, dtype=float)
        if K.ndim != 2:
            raise DataError("precomputed kernel must be a 2-d matrix")
        K = validate_kernel_matrix(K, K.shape[0])
        return cls("precomputed", matrix=K, source=source)

    @property
    def null_space_dim(self) -> int:
        return self.order - 1 if self.kind == "sobolev" else 0

    @property
    def pointwise(self) -> bool:
        return self.kind != "precomputed"

    def fit_domain(self, xs) -> "KernelSpec":
        """Return a copy whose Sobolev rescaling is fixed to the range of ``xs``."""
        if self.kind != "sobolev":
            return self
        xs = _as_finite_vector(xs)
        lo, hi = float(xs.min()), float(xs.max())
        if not hi > lo:
            raise DataError("sobolev kernel needs a variable with at least two distinct values")
        return replace(self, lower=lo, upper=hi)

    def rescale(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if self.kind != "sobolev":
            return xs
        if self.lower is None:
            raise DataError("sobolev domain not fixed; call fit_domain first")
        return (xs - self.lower) / (self.upper - self.lower)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "gaussian":
            out["bandwidth"] = self.bandwidth
        elif self.kind == "sobolev":
            out.update(order=self.order, lower=self.lower, upper=self.upper)
        else:
            out["source"] = self.source
        return out

    @classmethod
    def from_dict(cls, d: dict, matrix=None) -> "KernelSpec":
        kind = d["kind"]
        if kind == "gaussian":
            return cls.gaussian(d.get("bandwidth", 1.0))
        if kind == "sobolev":
            return cls("sobolev", order=int(d.get("order", 2)), lower=d.get("lower"), upper=d.get("upper"))
        if matrix is None and d.get("source"):
            matrix = read_kernel_csv(d["source"])
        if matrix is None:
            raise DataError("precomputed kernel document carries no matrix and no readable source")
        return cls.precomputed(matrix, source=d.get("source"))


def _as_finite_vector(xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float).ravel()
    if not np.all(np.isfinite(xs)):
        raise DataError("kernel inputs must be finite")
    return xs


@lru_cache(maxsize=None)
def _bernoulli_poly(r: int) -> np.ndarray:
    """Coefficients (highest power first) of ``B_r(x) / r!``."""
    b = bernoulli(r)
    coef = np.array([comb(r, k, exact=True) * b[k] for k in range(r + 1)])
    return coef / math.factorial(r)


def scaled_bernoulli(r: int, x) -> np.ndarray:
    """``B_r(x) / r!`` evaluated elementwise."""
    return np.polyval(_bernoulli_poly(r), x)


def _sobolev(m: int, u, v) -> np.ndarray:
    sign = 1.0 if m % 2 == 1 else -1.0
    return scaled_bernoulli(m, u) * scaled_bernoulli(m, v) + sign * scaled_bernoulli(2 * m, np.abs(u - v))


def eval_kernel(spec: KernelSpec, x: float, xp: float) -> float:
    """Kernel value ``k(x, x')``; Sobolev arguments are on the unit interval."""
    if spec.kind == "gaussian":
        return math.exp(-0.5 * ((x - xp) / spec.bandwidth) ** 2)
    if spec.kind == "sobolev":
        if not (0.0 <= x <= 1.0 and 0.0 <= xp <= 1.0):
            raise DataError("sobolev kernel arguments must lie in [0, 1]")
        return float(_sobolev(spec.order, float(x), float(xp)))
    raise DataError("precomputed kernel has no pointwise form")


def cross_kernel(spec: KernelSpec, xa, xb) -> np.ndarray:
    """Matrix ``[k(a_i, b_l)]`` for raw inputs (Sobolev inputs are rescaled)."""
    if not spec.pointwise:
        raise DataError("precomputed kernel has no pointwise form")
    xa, xb = _as_finite_vector(xa), _as_finite_vector(xb)
    if spec.kind == "gaussian":
        d = (xa[:, None] - xb[None, :]) / spec.bandwidth
        return np.exp(-0.5 * d * d)
    ua, ub = spec.rescale(xa), spec.rescale(xb)
    return _sobolev(spec.order, ua[:, None], ub[None, :])


def kernel_matrix(spec: KernelSpec, xs=None) -> np.ndarray:
    """Symmetric ``n x n`` kernel matrix at the training points.

    For Sobolev kernels without a fixed domain the min/max of ``xs`` is
    used; use :meth:`KernelSpec.fit_domain` to keep it for later evaluation.
    """
    if spec.kind == "precomputed":
        K = spec.matrix
        if xs is not None and len(np.ravel(xs)) != K.shape[0]:
            raise DataError(f"precomputed kernel is {K.shape[0]}x{K.shape[0]} but {len(np.ravel(xs))} rows given")
        return K
    xs = _as_finite_vector(xs)
    if xs.size < 2:
        raise DataError("kernel matrix needs at least two points")
    if spec.kind == "sobolev" and spec.lower is None:
        spec = spec.fit_domain(xs)
    K = cross_kernel(spec, xs, xs)
    return 0.5 * (K + K.T)


def feature_gram_kernel(features) -> np.ndarray:
    """Linear kernel ``H H^T / tr(H H^T)`` of a feature block."""
    H = np.asarray(features, dtype=float)
    if H.ndim == 1:
        H = H[:, None]
    if H.ndim != 2 or H.shape[0] < 2 or H.shape[1] < 1:
        raise DataError("features must be an n x m matrix with n >= 2, m >= 1")
    if not np.all(np.isfinite(H)):
        raise DataError("features must be finite")
    K = H @ H.T
    tr = np.trace(K)
    if not tr > 0:
        raise DataError("degenerate kernel: feature matrix is all zero")
    return K / tr


def null_space_design(spec: KernelSpec, xs) -> np.ndarray:
    """Uncentered monomials ``u, ..., u**(m-1)`` of the rescaled inputs."""
    q = spec.null_space_dim
    xs = _as_finite_vector(xs)
    if q == 0:
        return np.zeros((xs.size, 0))
    u = spec.rescale(xs)
    return np.column_stack([u**k for k in range(1, q + 1)])


def null_space_basis(spec: KernelSpec, xs) -> np.ndarray:
    """Column-centered null-space design ``Q`` (``n x null_space_dim``)."""
    xs = _as_finite_vector(xs)
    q = spec.null_space_dim
    if q == 0:
        return np.zeros((xs.size, 0))
    if spec.lower is None:
        spec = spec.fit_domain(xs)
    if np.unique(xs).size < q + 1:
        raise DataError(
            f"null space of dimension {q} needs at least {q + 1} distinct values, got {np.unique(xs).size}"
        )
    Q = null_space_design(spec, xs)
    return Q - Q.mean(axis=0)


def read_kernel_csv(path) -> np.ndarray:
    """Read a headerless square kernel matrix from CSV."""
    path = Path(path)
    rows = []
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read kernel matrix {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-numeric kernel entry") from exc
    if not rows or any(len(r) != len(rows) for r in rows):
        raise DataError(f"{path}: kernel matrix must be square")
    K = np.array(rows)
    if not np.all(np.isfinite(K)):
        raise DataError(f"{path}: kernel matrix has non-finite entries")
    return K
