"""Penalty selection: standardization, degrees of freedom and k-fold CV."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from kapc.exceptions import DataError, SolverError
from kapc.gram import center_gram
from kapc.kernels import cross_kernel, null_space_design
from kapc.problem import ApcProblem, SolverConfig, VariableBlock, make_block
from kapc.power import solve_power
from kapc.smoother import DF_KINDS, PenalizedSmoother, degrees_of_freedom, gram_eigh, transform_from_kernel

log = logging.getLogger(__name__)


@dataclass
class Standardizer:
    """Per-column affine map ``(x - mean) / scale`` (sample sd, ``ddof=1``)."""

    mean: np.ndarray
    scale: np.ndarray

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def inverse_transform(self, Z):
        return np.asarray(Z, dtype=float) * self.scale + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["scale"], dtype=float))


def standardize(data):
    """Center every column and scale it to unit sample variance."""
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise DataError("standardization needs at least two rows")
    mean = X.mean(axis=0)
    scale = X.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(scale > 0))
    if bad.size:
        raise DataError(f"column(s) {bad.tolist()} have zero variance")
    rec = Standardizer(mean, scale)
    return rec.transform(X), rec


def alpha_grid(base=1.5, lo=-29, hi=5) -> np.ndarray:
    """``base**lo, ..., base**hi``; the default has 35 points."""
    if hi < lo:
        raise DataError("grid maximum exponent is below the minimum")
    return float(base) ** np.arange(int(lo), int(hi) + 1, dtype=float)


@dataclass
class CvResult:
    grid: np.ndarray
    cv_scores: np.ndarray
    per_fold: np.ndarray
    selected_alpha: float
    folds: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "grid": self.grid.tolist(),
            "cv_scores": self.cv_scores.tolist(),
            "per_fold": self.per_fold.tolist(),
            "selected_alpha": self.selected_alpha,
            "folds": self.folds,
            "diagnostics": self.diagnostics,
        }


def fold_indices(n: int, folds: int, seed=0) -> list[np.ndarray]:
    """Seeded shuffle cut into ``folds`` contiguous, near-equal parts."""
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def _n_rows(data, specs):
    if data is not None:
        return np.asarray(data).shape[0]
    for s in specs:
        if s.kind == "precomputed":
            return s.matrix.shape[0]
    raise DataError("no data and no precomputed kernel given")


class _FoldSetup:
    """Training blocks and holdout kernel rows for one fold (penalty free)."""

    def __init__(self, data, specs, train, hold):
        self.blocks: list[VariableBlock] = []
        self.evaluators = []
        for j, spec in enumerate(specs):
            if spec.kind == "precomputed":
                K = spec.matrix
                Ktr = K[np.ix_(train, train)]
                blk = VariableBlock(spec, Ktr, center_gram(Ktr), np.zeros((len(train), 0)), 1.0, None)
                self.evaluators.append((K[np.ix_(hold, train)], Ktr, None, None))
            else:
                xtr = data[train, j]
                blk = make_block(spec, xtr, 1.0)
                fitted = blk.spec
                Qn = Qt = None
                if fitted.null_space_dim:
                    Qn = null_space_design(fitted, data[hold, j])
                    Qt = null_space_design(fitted, xtr)
                self.evaluators.append((cross_kernel(fitted, data[hold, j], xtr), blk.K, Qn, Qt))
            self.blocks.append(blk)

    def holdout_transforms(self, comp):
        return np.column_stack(
            [
                transform_from_kernel(Kn, Kt, beta, Qn, Qt, d)
                for (Kn, Kt, Qn, Qt), beta, d in zip(self.evaluators, comp.betas, comp.ds)
            ]
        )


def holdout_ratio(values) -> float:
    """Unpenalized eigenvalue ``Var(sum phi) / sum Var(phi)`` on a sample."""
    values = np.asarray(values, dtype=float)
    denom = values.var(axis=0, ddof=1).sum()
    if not denom > 0:
        return float("nan")
    return float(values.sum(axis=1).var(ddof=1) / denom)


def cross_validate(
    data,
    specs,
    grid=None,
    folds: int = 5,
    seed=0,
    config: SolverConfig | None = None,
    warm_start: bool = False,
) -> CvResult:
    """Choose a common penalty by k-fold cross-validation of the holdout eigenvalue.

    For every grid value and fold the smallest APC is fitted on the training
    rows, its transforms are evaluated at the holdout rows and the
    unpenalized ratio ``Var(sum phi) / sum Var(phi)`` is computed there.
    The penalty minimizing the fold average is selected (ties go to the
    smaller penalty).  With ``warm_start`` the solves of one fold run from
    the largest penalty down, each started from the previous solution.
    """
    specs = list(specs)
    if data is not None:
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != len(specs):
            raise DataError(f"data must be n x {len(specs)}")
    n = _n_rows(data, specs)
    if folds < 2:
        raise DataError("cross-validation needs at least two folds")
    if n < 2 * folds:
        raise DataError(f"{n} rows are too few for {folds} folds")
    grid = alpha_grid() if grid is None else np.asarray(grid, dtype=float).ravel()
    if grid.size == 0 or np.any(~(grid > 0)):
        raise DataError("penalty grid must be non-empty and positive")
    config = config or SolverConfig()
    config = SolverConfig(tol=config.tol, max_iter=config.max_iter, seed=config.seed, n_components=1)

    parts = fold_indices(n, folds, seed)
    per_fold = np.full((folds, grid.size), np.nan)
    unconverged = 0
    order = np.argsort(grid)[::-1]
    for f, hold in enumerate(parts):
        if hold.size < 2:
            raise DataError(f"fold {f} has fewer than two rows")
        train = np.setdiff1d(np.arange(n), hold)
        setup = _FoldSetup(data, specs, train, hold)
        prev = None
        for gi in order:
            blocks = [b.with_alpha(grid[gi]) for b in setup.blocks]
            problem = ApcProblem(blocks, config)
            try:
                comp = solve_power(problem, init=prev if warm_start else None)
            except SolverError as exc:
                log.warning("fold %d, alpha %.3g: %s", f, grid[gi], exc)
                prev = None
                continue
            unconverged += not comp.converged
            prev = comp.coefficients
            per_fold[f, gi] = holdout_ratio(setup.holdout_transforms(comp))
    scores = per_fold.mean(axis=0)
    finite = np.isfinite(scores)
    if not finite.any():
        raise SolverError("no grid value produced a finite cross-validation score")
    best = np.nanmin(scores)
    selected = float(grid[finite & (scores == best)].min())
    return CvResult(
        grid=grid,
        cv_scores=scores,
        per_fold=per_fold,
        selected_alpha=selected,
        folds=folds,
        diagnostics={"variance_denominator": "n_holdout - 1", "unconverged_solves": int(unconverged), "seed": seed},
    )


def df_curve(G, Q, alphas, kind="trS") -> np.ndarray:
    eig = gram_eigh(G)
    return np.array([degrees_of_freedom(PenalizedSmoother(G, Q, a, eig).hat(), kind) for a in alphas])


def calibrate_alpha_for_df(G, Q, target_df, kind="trS", lo=1e-10, hi=1e6, tol=0.01, max_iter=200) -> float:
    """Penalty whose smoother has ``target_df`` degrees of freedom (bisection on ``log alpha``)."""
    if kind not in DF_KINDS:
        raise DataError(f"unknown degrees-of-freedom kind {kind!r}")

    eig = gram_eigh(G)

    def df(a):
        return degrees_of_freedom(PenalizedSmoother(G, Q, a, eig).hat(), kind)

    df_hi, df_lo = df(hi), df(lo)
    if abs(df_hi - target_df) <= tol:
        return float(hi)
    if abs(df_lo - target_df) <= tol:
        return float(lo)
    if not df_hi < target_df < df_lo:
        raise DataError(
            f"target df {target_df} outside achievable range ({df_hi:.4g}, {df_lo:.4g}) for alpha in [{lo:g}, {hi:g}]"
        )
    a, b = np.log(lo), np.log(hi)
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        val = df(np.exp(mid))
        if abs(val - target_df) <= tol:
            return float(np.exp(mid))
        if val > target_df:
            a = mid
        else:
            b = mid
    raise SolverError("bisection for the degrees-of-freedom target did not converge")


def df_preset_target(n: int, p: int) -> float:
    """Per-variable df so that the total ``p * df`` is ``n / 10``."""
    return n / (10.0 * p)
