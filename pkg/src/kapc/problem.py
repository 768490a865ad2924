"""Per-variable numerics and the containers shared by both solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from kapc.exceptions import DataError
from kapc.gram import center_gram, validate_kernel_matrix
from kapc.kernels import KernelSpec, kernel_matrix, null_space_basis
from kapc.smoother import PenalizedSmoother, gram_eigh


@dataclass
class VariableBlock:
    """One variable prepared for APC estimation.

    ``G`` is the centered Gram matrix, ``Q`` the column-centered null-space
    design and ``alpha`` the penalty.  ``x`` holds the raw training values
    (``None`` for precomputed kernels).
    """

    spec: KernelSpec
    K: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    alpha: float
    x: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.G.shape[0]

    @property
    def q(self) -> int:
        return self.Q.shape[1]

    @cached_property
    def eig(self):
        """Eigendecomposition of ``G``; it does not depend on the penalty."""
        return gram_eigh(self.G)

    @cached_property
    def smoother(self) -> PenalizedSmoother:
        return PenalizedSmoother(self.G, self.Q, self.alpha, eig=self.eig)

    def with_alpha(self, alpha) -> "VariableBlock":
        blk = VariableBlock(self.spec, self.K, self.G, self.Q, float(alpha), self.x)
        blk.eig = self.eig
        return blk


def make_block(spec: KernelSpec, x=None, alpha=1.0) -> VariableBlock:
    """Build the kernel matrix, centered Gram and null-space design of a variable."""
    if spec.kind == "precomputed":
        K = spec.matrix
        if x is not None and len(np.ravel(x)) != K.shape[0]:
            raise DataError(f"precomputed kernel is {K.shape[0]}x{K.shape[0]} but {len(np.ravel(x))} rows given")
        return VariableBlock(spec, K, center_gram(K), np.zeros((K.shape[0], 0)), float(alpha), None)
    if x is None:
        raise DataError(f"{spec.kind} kernel needs data values")
    x = np.asarray(x, dtype=float).ravel()
    spec = spec.fit_domain(x)
    K = kernel_matrix(spec, x)
    return VariableBlock(spec, K, center_gram(K), null_space_basis(spec, x), float(alpha), x)


def block_from_matrix(K, alpha=1.0, source=None) -> VariableBlock:
    K = validate_kernel_matrix(K, np.shape(K)[0])
    return make_block(KernelSpec("precomputed", matrix=K, source=source), None, alpha)


@dataclass
class SolverConfig:
    """Settings for the iterative solver.

    ``tol`` bounds the relative change of the penalized criterion between
    sweeps; ``init`` is ``"random"`` or a list of ``(beta, d)`` pairs.
    """

    tol: float = 1e-9
    max_iter: int = 10000
    seed: int = 0
    n_components: int = 1
    init: str | list = "random"

    def __post_init__(self):
        if not self.tol > 0:
            raise DataError("tol must be positive")
        if self.max_iter < 1:
            raise DataError("max_iter must be at least 1")
        if self.n_components < 1:
            raise DataError("n_components must be at least 1")

    def to_dict(self) -> dict:
        return {"tol": self.tol, "max_iter": self.max_iter, "seed": self.seed, "n_components": self.n_components}


@dataclass
class ApcProblem:
    blocks: list[VariableBlock]
    config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if len(self.blocks) < 2:
            raise DataError("an APC needs at least two variables")
        ns = {b.n for b in self.blocks}
        if len(ns) != 1:
            raise DataError(f"all variables must share the same number of rows, got {sorted(ns)}")
        if any(not b.alpha > 0 for b in self.blocks):
            raise DataError("all penalties must be positive")

    @property
    def p(self) -> int:
        return len(self.blocks)

    @property
    def n(self) -> int:
        return self.blocks[0].n

    @property
    def gamma(self) -> float:
        return (self.p + 1) / 2

    @property
    def alphas(self) -> np.ndarray:
        return np.array([b.alpha for b in self.blocks])


@dataclass
class ApcComponent:
    """One additive principal component, normalized to unit penalized norm."""

    betas: list[np.ndarray]
    ds: list[np.ndarray]
    phis: list[np.ndarray]
    variances: np.ndarray
    penalties: np.ndarray
    eigenvalue: float
    raw_eigenvalue: float
    iterations: int = 0
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def coefficients(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.betas, self.ds))

    @property
    def shares(self) -> np.ndarray:
        """Share of each variable in ``sum_j Var(phi_j)``."""
        return self.variances / self.variances.sum()

    @property
    def p(self) -> int:
        return len(self.betas)


def transform_values(blocks: Sequence[VariableBlock], coefs) -> list[np.ndarray]:
    return [b.G @ beta + b.Q @ d for b, (beta, d) in zip(blocks, coefs)]


def variances_and_penalties(blocks, coefs, phis=None):
    if phis is None:
        phis = transform_values(blocks, coefs)
    n = blocks[0].n
    var = np.array([phi @ phi / n for phi in phis])
    pen = np.array([b.alpha * beta @ b.G @ beta for b, (beta, _) in zip(blocks, coefs)])
    return var, pen


def make_component(blocks, coefs, align_sign=True, **info) -> ApcComponent:
    """Package coefficients as a component (sign fixed so the largest |phi| is positive)."""
    coefs = [(np.array(beta, dtype=float), np.array(d, dtype=float)) for beta, d in coefs]
    phis = transform_values(blocks, coefs)
    if align_sign:
        flat = np.concatenate(phis)
        if flat.size and flat[np.argmax(np.abs(flat))] < 0:
            coefs = [(-beta, -d) for beta, d in coefs]
            phis = [-phi for phi in phis]
    var, pen = variances_and_penalties(blocks, coefs, phis)
    n = blocks[0].n
    total = np.sum(phis, axis=0)
    var_sum = total @ total / n
    return ApcComponent(
        betas=[beta for beta, _ in coefs],
        ds=[d for _, d in coefs],
        phis=phis,
        variances=var,
        penalties=pen,
        eigenvalue=float((var_sum + pen.sum()) / (var.sum() + pen.sum())),
        raw_eigenvalue=float(var_sum / var.sum()) if var.sum() > 0 else float("nan"),
        **info,
    )
