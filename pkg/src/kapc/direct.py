"""Non-iterative APC solvers on the stacked coefficient vector.

In coefficients ``beta = (beta_1, ..., beta_p)`` (no null spaces) the
problem is the generalized eigenproblem::

    [G_i G_j + delta_ij n alpha_i G_i] beta = lambda diag(G_i^2 + n alpha_i G_i) beta

:func:`solve_direct` replaces the diagonal blocks by
``(G_j + n alpha_j / 2 I)^2`` which turns it into an ordinary symmetric
eigenproblem on ``R`` (identity diagonal blocks, ``R_i' R_j`` off the
diagonal, ``R_j = G_j (G_j + n alpha_j / 2 I)^-1``).
:func:`solve_oracle_exact` solves the exact problem after restricting every
block to the numerical range of its Gram matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from kapc.exceptions import DataError, DegenerateError, SolverError
from kapc.problem import ApcComponent, make_component


@dataclass
class DirectSolution:
    components: list[ApcComponent]
    spectrum: np.ndarray
    rank_info: list[int]
    degenerate: bool = False
    diagnostics: dict = field(default_factory=dict)


class _Blocks:
    """Minimal stand-in for VariableBlock when only Gram matrices are known."""

    def __init__(self, G, Q, alpha):
        self.G, self.Q, self.alpha = G, Q, alpha
        self.n = G.shape[0]
        self.q = Q.shape[1]


def _prepare(Gs, alphas, Qs):
    Gs = [np.asarray(G, dtype=float) for G in Gs]
    p = len(Gs)
    if p < 2:
        raise DataError("an APC needs at least two variables")
    n = Gs[0].shape[0]
    if any(G.shape != (n, n) for G in Gs):
        raise DataError("all Gram matrices must be n x n with a common n")
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (p,)).copy()
    if np.any(~(alphas > 0)):
        raise DataError("all penalties must be positive")
    if Qs is None:
        Qs = [np.zeros((n, 0)) for _ in Gs]
    Qs = [np.zeros((n, 0)) if Q is None else np.asarray(Q, dtype=float).reshape(n, -1) for Q in Qs]
    return Gs, alphas, Qs, n, p


def _rank(G, rank_tol):
    ev = np.linalg.eigvalsh(G)
    top = ev[-1]
    return int(np.sum(ev > rank_tol * top)) if top > 0 else 0


def _r_matrix(Gs, alphas, n, p):
    I = np.eye(n)
    Ts = [G + 0.5 * n * a * I for G, a in zip(Gs, alphas)]
    Rs = []
    for G, T in zip(Gs, Ts):
        Rj = np.linalg.solve(T, G)  # T^-1 G == G T^-1, both symmetric
        Rs.append(0.5 * (Rj + Rj.T))
    R = np.eye(n * p)
    for i in range(p):
        for j in range(i + 1, p):
            B = Rs[i].T @ Rs[j]
            R[i * n:(i + 1) * n, j * n:(j + 1) * n] = B
            R[j * n:(j + 1) * n, i * n:(i + 1) * n] = B.T
    return R, Ts


def r_matrix(Gs, alphas) -> np.ndarray:
    """The ``pn x pn`` matrix whose smallest eigenpairs approximate the APCs."""
    Gs, alphas, _, n, p = _prepare(Gs, alphas, None)
    return _r_matrix(Gs, alphas, n, p)[0]


def solve_direct(Gs, alphas, k: int = 1, Qs=None) -> DirectSolution:
    """Approximate APCs from the ``k`` smallest eigenpairs of ``R``."""
    Gs, alphas, Qs, n, p = _prepare(Gs, alphas, Qs)
    if any(Q.shape[1] for Q in Qs):
        raise DataError("the direct solver does not support kernels with a null space; use the power solver")
    if not 1 <= k <= n * p:
        raise DataError(f"k must be between 1 and {n * p}")
    R, Ts = _r_matrix(Gs, alphas, n, p)
    try:
        spectrum, vecs = scipy.linalg.eigh(R)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SolverError(f"eigensolver failed: {exc}") from exc
    ranks = [_rank(G, 1e-10) for G in Gs]
    blocks = [_Blocks(G, Q, a) for G, Q, a in zip(Gs, Qs, alphas)]
    if all(not np.any(G) for G in Gs):
        warnings.warn("all Gram matrices are zero: R is the identity and no component exists", stacklevel=2)
        return DirectSolution([], spectrum, ranks, degenerate=True)

    comps = []
    for idx in range(k):
        v = vecs[:, idx]
        coefs = [(np.linalg.solve(Ts[j], v[j * n:(j + 1) * n]), np.zeros(0)) for j in range(p)]
        norm2 = sum(
            (G @ b) @ (G @ b) / n + a * b @ G @ b for G, a, (b, _) in zip(Gs, alphas, coefs)
        )
        if not norm2 > 0:
            raise DegenerateError("recovered direction has zero penalized norm")
        coefs = [(b / np.sqrt(norm2), d) for b, d in coefs]
        comps.append(make_component(blocks, coefs, diagnostics={"r_eigenvalue": float(spectrum[idx])}))
    return DirectSolution(comps, spectrum, ranks)


def solve_oracle_exact(Gs, alphas, k: int = 1, rank_tol: float = 1e-10, Qs=None) -> DirectSolution:
    """Exact smallest APCs by a dense generalized symmetric-definite eigensolve.

    Each ``G_j`` is replaced by its eigenvectors with eigenvalue above
    ``rank_tol`` times the largest one; ``beta_j = U_j z_j``.  Optional
    null-space designs ``Qs`` are carried as extra unpenalized coordinates.
    """
    Gs, alphas, Qs, n, p = _prepare(Gs, alphas, Qs)
    cols, pen, sizes, bases, ranks = [], [], [], [], []
    for G, Q, a in zip(Gs, Qs, alphas):
        g, U = np.linalg.eigh(G)
        keep = g > rank_tol * g[-1] if g[-1] > 0 else np.zeros_like(g, dtype=bool)
        g, U = g[keep], U[:, keep]
        ranks.append(int(keep.sum()))
        bases.append(U)
        cols.append(np.hstack([U * g, Q]))
        pen.append(np.concatenate([a * g, np.zeros(Q.shape[1])]))
        sizes.append(U.shape[1] + Q.shape[1])
    m = sum(sizes)
    if m == 0:
        raise DegenerateError("all Gram matrices are zero and there is no null space")
    if not 1 <= k <= m:
        raise DataError(f"k must be between 1 and {m}")
    B = np.hstack(cols)
    A = B.T @ B / n + np.diag(np.concatenate(pen))
    C = np.zeros((m, m))
    off = 0
    for Bj, Pj, s in zip(cols, pen, sizes):
        C[off:off + s, off:off + s] = Bj.T @ Bj / n + np.diag(Pj)
        off += s
    try:
        vals, vecs = scipy.linalg.eigh(0.5 * (A + A.T), 0.5 * (C + C.T), subset_by_index=[0, k - 1])
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"generalized eigensolver failed: {exc}") from exc

    blocks = [_Blocks(G, Q, a) for G, Q, a in zip(Gs, Qs, alphas)]
    comps = []
    for idx in range(k):
        theta = vecs[:, idx]
        coefs, off = [], 0
        for U, Q, s in zip(bases, Qs, sizes):
            r = U.shape[1]
            coefs.append((U @ theta[off:off + r], theta[off + r:off + s].copy()))
            off += s
        comps.append(make_component(blocks, coefs))
    return DirectSolution(comps, vals, ranks)


def components_from_blocks(blocks, k=1, exact=False):
    """Convenience wrapper taking :class:`~kapc.problem.VariableBlock` objects."""
    Gs = [b.G for b in blocks]
    alphas = [b.alpha for b in blocks]
    if exact:
        return solve_oracle_exact(Gs, alphas, k, Qs=[b.Q for b in blocks])
    return solve_direct(Gs, alphas, k, Qs=[b.Q for b in blocks])
