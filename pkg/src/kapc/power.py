"""Power algorithm for the smallest kernelized additive principal components.

The APC problem is the eigenproblem of the self-adjoint operator ``S~``
(``[S~ Phi]_i = sum_{j != i} S_ij phi_j + phi_i``) in the star inner
product ``<Phi, Psi> = sum_j Cov(phi_j, psi_j) + alpha_j <phi_j, psi_j>_k``.
Iterating ``gamma I - S~`` with ``gamma = (p + 1) / 2`` turns the bottom of
the spectrum into the dominant end.  Everything is carried out on the
representer coefficients ``(beta_j, d_j)`` with ``phi_j = G_j beta_j + Q_j d_j``.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from kapc.exceptions import DataError, DegenerateError
from kapc.problem import (
    ApcComponent,
    ApcProblem,
    make_component,
    transform_values,
    variances_and_penalties,
)

log = logging.getLogger(__name__)

NEAR_TIE_GAP = 1e-6


def _check_coefs(blocks, coefs):
    if len(coefs) != len(blocks):
        raise DataError(f"expected coefficients for {len(blocks)} variables, got {len(coefs)}")
    for b, (beta, d) in zip(blocks, coefs):
        if np.shape(beta) != (b.n,) or np.shape(d) != (b.q,):
            raise DataError(
                f"coefficient shapes {np.shape(beta)}, {np.shape(d)} do not match ({b.n},), ({b.q},)"
            )


def _as_coefs(x):
    if isinstance(x, ApcComponent):
        return x.coefficients
    return x


def star_inner_product(blocks, a, b) -> float:
    """``sum_j [Cov(phi_a_j, phi_b_j) + alpha_j beta_a_j' G_j beta_b_j]`` over the data."""
    a, b = _as_coefs(a), _as_coefs(b)
    _check_coefs(blocks, a)
    _check_coefs(blocks, b)
    n = blocks[0].n
    total = 0.0
    for blk, (ba, da), (bb, db) in zip(blocks, a, b):
        ga = blk.G @ ba
        fa = ga + blk.Q @ da
        fb = blk.G @ bb + blk.Q @ db
        total += fa @ fb / n + blk.alpha * ga @ bb
    return float(total)


def penalized_rayleigh(blocks, coefs) -> float:
    """``(Var sum phi + sum J) / (sum Var phi + sum J)``."""
    coefs = _as_coefs(coefs)
    _check_coefs(blocks, coefs)
    phis = transform_values(blocks, coefs)
    var, pen = variances_and_penalties(blocks, coefs, phis)
    denom = var.sum() + pen.sum()
    if not denom > 0:
        raise DegenerateError("Rayleigh quotient undefined: zero penalized norm")
    total = np.sum(phis, axis=0)
    return float((total @ total / blocks[0].n + pen.sum()) / denom)


RESYNC_EVERY = 25


def _pair_inner(blocks, ca, pa, cb, pb) -> float:
    # star product from transform values: beta_a' G beta_b = beta_a . (phi_b - Q d_b)
    n = blocks[0].n
    total = 0.0
    for blk, (ba, _), fa, (_, db), fb in zip(blocks, ca, pa, cb, pb):
        total += fa @ fb / n + blk.alpha * ba @ (fb - blk.Q @ db)
    return float(total)


def _criterion(blocks, coefs, phis) -> float:
    total = np.sum(phis, axis=0)
    pen = sum(blk.alpha * beta @ (phi - blk.Q @ d) for blk, (beta, d), phi in zip(blocks, coefs, phis))
    return float(total @ total / blocks[0].n + pen)


def _orthonormalize(blocks, coefs, phis, prior):
    for comp in prior:
        other, ophis = comp.coefficients, comp.phis
        proj = _pair_inner(blocks, coefs, phis, other, ophis)
        coefs = [(beta - proj * ob, d - proj * od) for (beta, d), (ob, od) in zip(coefs, other)]
        phis = [phi - proj * ophi for phi, ophi in zip(phis, ophis)]
    norm2 = _pair_inner(blocks, coefs, phis, coefs, phis)
    if not (np.isfinite(norm2) and norm2 > np.finfo(float).tiny):
        raise DegenerateError("iterate has zero penalized norm; cannot normalize (degenerate start)")
    scale = norm2**-0.5
    return [(scale * beta, scale * d) for beta, d in coefs], [scale * phi for phi in phis]


def _sweep(problem, coefs, phis, prior):
    g1 = problem.gamma - 1.0
    total = np.sum(phis, axis=0)
    new, new_phis = [], []
    for blk, (beta, d), phi in zip(problem.blocks, coefs, phis):
        c, dd, fitted = blk.smoother.coefficients_and_fit(total - phi)
        new.append((g1 * beta - c, g1 * d - dd))
        new_phis.append(g1 * phi - fitted)
    return _orthonormalize(problem.blocks, new, new_phis, prior)


def power_step(problem: ApcProblem, coefs, prior: Sequence[ApcComponent] = ()):
    """One sweep of ``gamma I - S~`` followed by Gram-Schmidt and normalization.

    For each variable ``i`` the sum of the other centered transforms is
    smoothed against variable ``i`` giving ``(c_i, d_i)``; then
    ``beta_i <- (gamma - 1) beta_i - c_i`` and likewise for the null-space
    coefficients.
    """
    coefs = _as_coefs(coefs)
    _check_coefs(problem.blocks, coefs)
    return _sweep(problem, coefs, transform_values(problem.blocks, coefs), prior)[0]


def random_start(problem: ApcProblem, rng: np.random.Generator):
    return [(rng.standard_normal(b.n), rng.standard_normal(b.q)) for b in problem.blocks]


def _run(problem, start, prior):
    cfg, blocks = problem.config, problem.blocks
    coefs, phis = _orthonormalize(blocks, start, transform_values(blocks, start), prior)
    crit = _criterion(blocks, coefs, phis)
    history = [crit]
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        coefs, phis = _sweep(problem, coefs, phis, prior)
        if it % RESYNC_EVERY == 0:
            phis = transform_values(blocks, coefs)
        new = _criterion(blocks, coefs, phis)
        history.append(new)
        if abs(new - crit) / max(crit, 1e-300) < cfg.tol:
            converged = True
            crit = new
            break
        crit = new
    return coefs, crit, it, converged, history


def _gap_estimate(history, gamma, eigenvalue):
    # successive criterion changes shrink by r^2 with r = (gamma - l2) / (gamma - l1)
    steps = np.abs(np.diff(history))
    if steps.size < 3 or steps[-2] <= 0:
        return None
    rate = min(steps[-1] / steps[-2], 1.0)
    return float((gamma - eigenvalue) * (1.0 - np.sqrt(rate)))


def solve_power(problem: ApcProblem, prior: Sequence[ApcComponent] = (), init=None) -> ApcComponent:
    """Smallest APC of ``problem`` that is star-orthogonal to ``prior``.

    ``init`` (or ``problem.config.init``) may supply starting coefficients;
    otherwise a seeded standard-normal start is used.  If ``max_iter`` is
    reached without convergence the run is restarted once from a fresh seed
    and the run with the lower criterion is kept.
    """
    blocks = problem.blocks
    if all(not np.any(b.G) and b.q == 0 for b in blocks):
        raise DegenerateError("degenerate problem: every Gram matrix is zero and there is no null space")
    cfg = problem.config
    k = len(prior)
    if init is None and not isinstance(cfg.init, str) and k == 0:
        init = cfg.init
    if init is not None:
        start = [(np.asarray(b, dtype=float), np.asarray(d, dtype=float)) for b, d in _as_coefs(init)]
        _check_coefs(blocks, start)
    else:
        start = random_start(problem, np.random.default_rng([cfg.seed, k, 0]))

    coefs, crit, iters, converged, history = _run(problem, start, prior)
    restarted = False
    if not converged:
        log.warning("power algorithm did not converge in %d sweeps; restarting once", cfg.max_iter)
        restarted = True
        alt = _run(problem, random_start(problem, np.random.default_rng([cfg.seed, k, 1])), prior)
        iters += alt[2]
        if alt[1] < crit:
            coefs, crit, _, converged, history = alt
    gap = _gap_estimate(history, problem.gamma, crit)
    diagnostics = {
        "criterion_history": history,
        "restarted": restarted,
        "gap_estimate": gap,
        "near_tie": gap is not None and gap < NEAR_TIE_GAP,
    }
    return make_component(blocks, coefs, iterations=iters, converged=converged, diagnostics=diagnostics)


def fit_power(problem: ApcProblem, n_components: int | None = None) -> list[ApcComponent]:
    """The ``n_components`` smallest APCs by successive deflation."""
    k = problem.config.n_components if n_components is None else n_components
    comps: list[ApcComponent] = []
    for _ in range(k):
        comps.append(solve_power(problem, prior=comps))
    return comps
