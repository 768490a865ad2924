"""Fitted APC models: fitting entry point, out-of-sample evaluation, JSON documents."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from kapc.direct import solve_direct
from kapc.exceptions import DataError
from kapc.kernels import KernelSpec
from kapc.problem import ApcComponent, ApcProblem, SolverConfig, make_block
from kapc.power import fit_power
from kapc.selection import Standardizer, standardize
from kapc.smoother import evaluate_transform

FORMAT = "kapc-model"
VERSION = 1


@dataclass
class ApcModel:
    specs: list[KernelSpec]
    alphas: np.ndarray
    components: list[ApcComponent]
    x_raw: np.ndarray | None = None
    scaler: Standardizer | None = None
    names: list[str] | None = None
    solver: str = "power"
    config: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return len(self.specs)

    @property
    def x_train(self):
        if self.x_raw is None:
            return None
        return self.scaler.transform(self.x_raw) if self.scaler is not None else self.x_raw

    def transform(self, X, component: int = 0) -> np.ndarray:
        """Transform values ``phi_j(x_j)`` at new rows of raw data (``m x p``)."""
        if any(not s.pointwise for s in self.specs):
            raise DataError("out-of-sample evaluation is unsupported for precomputed kernels")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.p:
            raise DataError(f"expected {self.p} columns, got {X.shape[1]}")
        Z = self.scaler.transform(X) if self.scaler is not None else X
        comp = self.components[component]
        xt = self.x_train
        return np.column_stack(
            [
                evaluate_transform(spec, xt[:, j], comp.betas[j], comp.ds[j], Z[:, j])
                for j, spec in enumerate(self.specs)
            ]
        )

    def to_dict(self) -> dict:
        names = self.names or [f"x{j + 1}" for j in range(self.p)]
        comps = []
        for c in self.components:
            comps.append(
                {
                    "eigenvalue": c.eigenvalue,
                    "raw_eigenvalue": c.raw_eigenvalue,
                    "variance_shares": c.shares.tolist(),
                    "iterations": c.iterations,
                    "converged": c.converged,
                    "diagnostics": {
                        k: v for k, v in c.diagnostics.items() if k != "criterion_history"
                    },
                    "variables": [
                        {
                            "name": name,
                            "beta": c.betas[j].tolist(),
                            "d": c.ds[j].tolist(),
                            "phi": c.phis[j].tolist(),
                            "variance": float(c.variances[j]),
                            "penalty": float(c.penalties[j]),
                        }
                        for j, name in enumerate(names)
                    ],
                }
            )
        return {
            "format": FORMAT,
            "version": VERSION,
            "config": self.config,
            "solver": self.solver,
            "variables": [
                {"name": name, "kernel": s.to_dict(), "alpha": float(a)}
                for name, s, a in zip(names, self.specs, self.alphas)
            ],
            "standardization": self.scaler.to_dict() if self.scaler is not None else None,
            "training_data": self.x_raw.tolist() if self.x_raw is not None else None,
            "components": comps,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ApcModel":
        if doc.get("format") != FORMAT:
            raise DataError("not a kapc model document")
        specs = [KernelSpec.from_dict(v["kernel"]) for v in doc["variables"]]
        names = [v["name"] for v in doc["variables"]]
        alphas = np.array([v["alpha"] for v in doc["variables"]], dtype=float)
        comps = []
        for c in doc["components"]:
            vs = c["variables"]
            betas = [np.array(v["beta"], dtype=float) for v in vs]
            comps.append(
                ApcComponent(
                    betas=betas,
                    ds=[np.array(v["d"], dtype=float).reshape(-1) for v in vs],
                    phis=[np.array(v["phi"], dtype=float) for v in vs],
                    variances=np.array([v["variance"] for v in vs]),
                    penalties=np.array([v["penalty"] for v in vs]),
                    eigenvalue=c["eigenvalue"],
                    raw_eigenvalue=c["raw_eigenvalue"],
                    iterations=c.get("iterations", 0),
                    converged=c.get("converged", True),
                    diagnostics=c.get("diagnostics", {}),
                )
            )
        scaler = Standardizer.from_dict(doc["standardization"]) if doc.get("standardization") else None
        x_raw = np.array(doc["training_data"], dtype=float) if doc.get("training_data") is not None else None
        return cls(specs, alphas, comps, x_raw, scaler, names, doc.get("solver", "power"), doc.get("config", {}))


def fit_model(
    data,
    specs,
    alphas,
    config: SolverConfig | None = None,
    solver: str = "power",
    standardize_data: bool = False,
    names=None,
    run_config: dict | None = None,
) -> ApcModel:
    """Fit the smallest APCs of ``data`` (``n x p``; columns of precomputed variables are ignored)."""
    specs = list(specs)
    p = len(specs)
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (p,)).copy()
    config = config or SolverConfig()
    x_raw = scaler = None
    Z = None
    if data is not None:
        x_raw = np.asarray(data, dtype=float)
        if x_raw.ndim != 2 or x_raw.shape[1] != p:
            raise DataError(f"data must be an n x {p} matrix")
        if not np.all(np.isfinite(x_raw[:, [s.pointwise for s in specs]])):
            raise DataError("data contains missing or non-finite values")
        Z = x_raw
        if standardize_data:
            Z, scaler = standardize(x_raw)
            Z = scaler.transform(x_raw)
    elif any(s.pointwise for s in specs):
        raise DataError("data required for non-precomputed kernels")
    blocks = [make_block(s, None if not s.pointwise else Z[:, j], a) for j, (s, a) in enumerate(zip(specs, alphas))]
    fitted_specs = [b.spec for b in blocks]
    if solver == "power":
        comps = fit_power(ApcProblem(blocks, config))
    elif solver == "direct":
        sol = solve_direct([b.G for b in blocks], alphas, config.n_components, Qs=[b.Q for b in blocks])
        comps = sol.components
    else:
        raise DataError(f"unknown solver {solver!r}")
    return ApcModel(fitted_specs, alphas, comps, x_raw, scaler, names, solver, run_config or {})
