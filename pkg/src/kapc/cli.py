"""Command line interface: ``kapc fit|cv|simulate|eval|plotdata``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from kapc.exceptions import DataError, KapcError, SolverError
from kapc.kernels import KernelSpec, read_kernel_csv
from kapc.model import ApcModel, fit_model
from kapc.problem import SolverConfig, make_block
from kapc.selection import alpha_grid, calibrate_alpha_for_df, cross_validate, df_preset_target, standardize
from kapc.simulation import generate_simulation, true_transforms

log = logging.getLogger("kapc")

EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 1, 2, 3


class UsageError(KapcError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- I/O helpers


def read_data_csv(path):
    """Header row plus one numeric column per variable; missing values rejected."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{path}: empty file") from None
    header = [h.strip() for h in header]
    rows = []
    for row in reader:
        lineno = reader.line_num
        if not row or all(not v.strip() for v in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(v) for v in row]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric or missing value") from None
        if not all(np.isfinite(vals)):
            raise DataError(f"{path}:{lineno}: missing or non-finite value")
        rows.append(vals)
    if len(rows) < 2:
        raise DataError(f"{path}: need at least two data rows")
    return header, np.array(rows)


def _write_csv(path, header, rows):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else f"{v:.17g}" for v in r])
    _emit(path, out.getvalue())


def _emit(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _write_json(path, doc):
    _emit(path, json.dumps(doc, indent=1) + "\n")


# ------------------------------------------------------------- configuration


def _parse_kernels(args, p_data):
    entries = [e.strip() for e in args.kernel.split(",") if e.strip()]
    matrices = [m.strip() for m in args.matrices.split(",")] if args.matrices else []
    n_pre = sum(e.split(":")[0] == "precomputed" for e in entries)
    if n_pre and len(entries) == 1 and matrices:
        entries = entries * len(matrices)
        n_pre = len(entries)
    if n_pre != len(matrices):
        raise UsageError(f"{n_pre} precomputed kernel(s) but {len(matrices)} matrix file(s)")
    if len(entries) == 1 and p_data:
        entries = entries * p_data
    specs, mats = [], iter(matrices)
    for e in entries:
        kind, _, arg = e.partition(":")
        try:
            if kind == "gaussian":
                specs.append(KernelSpec.gaussian(float(arg) if arg else args.bandwidth))
            elif kind == "sobolev":
                specs.append(KernelSpec.sobolev(int(arg) if arg else args.order))
            elif kind == "precomputed":
                path = next(mats)
                specs.append(KernelSpec.precomputed(read_kernel_csv(path), source=str(path)))
            else:
                raise UsageError(f"unknown kernel {kind!r}")
        except ValueError as exc:
            if isinstance(exc, DataError):
                raise
            raise UsageError(f"bad kernel argument in {e!r}") from None
    if p_data and len(specs) != p_data:
        raise UsageError(f"{len(specs)} kernels given for {p_data} data columns")
    if len(specs) < 2:
        raise UsageError("at least two variables are required")
    return specs


def _load_inputs(args):
    header, X = (None, None)
    if args.data:
        header, X = read_data_csv(args.data)
    specs = _parse_kernels(args, X.shape[1] if X is not None else 0)
    if X is None:
        if any(s.pointwise for s in specs):
            raise UsageError("a data CSV is required unless every kernel is precomputed")
        header = [Path(s.source).stem for s in specs]
    n = X.shape[0] if X is not None else specs[0].matrix.shape[0]
    for s in specs:
        if s.kind == "precomputed" and s.matrix.shape[0] != n:
            raise DataError(f"kernel {s.source} is {s.matrix.shape[0]}x{s.matrix.shape[0]}, expected {n}")
    if args.standardize and any(not s.pointwise for s in specs):
        raise UsageError("--standardize does not apply to precomputed kernels")
    return header, X, specs


def _grid(args):
    if args.grid:
        try:
            return np.array([float(v) for v in args.grid.split(",")])
        except ValueError:
            raise UsageError("--grid must be a comma separated list of numbers") from None
    return alpha_grid(args.grid_base, args.grid_min, args.grid_max)


def _config(args):
    return SolverConfig(tol=args.tol, max_iter=args.max_iter, seed=args.seed, n_components=getattr(args, "components", 1))


def _run_config(args):
    return {k: v for k, v in vars(args).items() if k not in ("func", "log_level")}


def _model_space(X, specs, standardize_flag):
    if X is None or not standardize_flag:
        return X
    Z = X.copy()
    cols = [j for j, s in enumerate(specs) if s.pointwise]
    Z[:, cols], _ = standardize(X[:, cols])
    return Z


# ---------------------------------------------------------------- commands


def cmd_fit(args):
    if args.solver == "direct" and args.kernel and "sobolev" in args.kernel:
        raise UsageError("the direct solver does not support kernels with a null space (sobolev)")
    header, X, specs = _load_inputs(args)
    config = _config(args)
    p = len(specs)
    Z = _model_space(X, specs, args.standardize)
    cv_doc = None
    if args.alpha is not None:
        try:
            alphas = [float(a) for a in args.alpha.split(",")]
        except ValueError:
            raise UsageError("--alpha must be a number or comma separated list") from None
        if len(alphas) not in (1, p):
            raise UsageError(f"--alpha needs 1 or {p} values")
        alphas = np.broadcast_to(alphas, (p,)).copy()
    elif args.df_target is not None:
        n = X.shape[0] if X is not None else specs[0].matrix.shape[0]
        if args.df_target.replace(" ", "") == "n/10":
            target = df_preset_target(n, p)
        else:
            try:
                target = float(args.df_target)
            except ValueError:
                raise UsageError("--df-target must be a number or 'n/10'") from None
        alphas = np.array(
            [calibrate_alpha_for_df(b.G, b.Q, target, args.df_kind) for b in
             (make_block(s, Z[:, j] if s.pointwise else None, 1.0) for j, s in enumerate(specs))]
        )
        log.info("per-variable df target %.4g -> alphas %s", target, alphas)
    else:
        cv = cross_validate(Z, specs, _grid(args), args.folds, args.seed, config)
        cv_doc = cv.to_dict()
        alphas = np.full(p, cv.selected_alpha)
    model = fit_model(X, specs, alphas, config, args.solver, args.standardize, header, _run_config(args))
    for i, c in enumerate(model.components):
        if not c.converged:
            log.warning("component %d did not converge (%d sweeps)", i, c.iterations)
    doc = model.to_dict()
    if cv_doc is not None:
        doc["cross_validation"] = cv_doc
    _write_json(args.output, doc)
    return 0


def cmd_cv(args):
    header, X, specs = _load_inputs(args)
    Z = _model_space(X, specs, args.standardize)
    cv = cross_validate(Z, specs, _grid(args), args.folds, args.seed, _config(args))
    doc = cv.to_dict()
    doc["config"] = _run_config(args)
    doc["variables"] = header
    _write_json(args.output, doc)
    return 0


def cmd_simulate(args):
    X, Y = generate_simulation(args.n, args.seed)
    names = [f"x{j + 1}" for j in range(4)]
    _write_csv(args.output, names, X)
    if args.latent:
        _write_csv(args.latent, [f"y{j + 1}" for j in range(4)], Y)
    if args.truth:
        _write_csv(args.truth, [f"phi{j + 1}" for j in range(4)], true_transforms(X))
    return 0


def _load_model(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    return ApcModel.from_dict(doc)


def cmd_eval(args):
    model = _load_model(args.model)
    header, X = read_data_csv(args.points)
    if len(header) != model.p:
        raise DataError(f"points file has {len(header)} columns, model has {model.p} variables")
    if args.component >= len(model.components):
        raise UsageError(f"model has only {len(model.components)} component(s)")
    values = model.transform(X, component=args.component)
    _write_csv(args.output, model.names, values)
    return 0


def cmd_plotdata(args):
    model = _load_model(args.model)
    if args.component >= len(model.components):
        raise UsageError(f"model has only {len(model.components)} component(s)")
    if model.x_raw is None:
        raise DataError("model has no training data to span")
    rows = []
    for j, name in enumerate(model.names):
        lo, hi = model.x_raw[:, j].min(), model.x_raw[:, j].max()
        grid = np.linspace(lo, hi, args.points)
        pts = np.tile(model.x_raw.mean(axis=0), (args.points, 1))
        pts[:, j] = grid
        phi = model.transform(pts, component=args.component)[:, j]
        rows.extend([name, x, v] for x, v in zip(grid, phi))
    _write_csv(args.output, ["variable", "x", "phi"], rows)
    return 0


# ------------------------------------------------------------------ parser


def _add_common(sp, data_required=True):
    sp.add_argument("data", nargs=None if data_required else "?", help="CSV with a header row, one column per variable")
    sp.add_argument("--kernel", default="gaussian",
                    help="kernel for all variables or a comma list: gaussian[:bw], sobolev[:m], precomputed")
    sp.add_argument("--bandwidth", type=float, default=1.0)
    sp.add_argument("--order", type=int, default=2, help="default Sobolev order")
    sp.add_argument("--matrices", help="comma separated kernel CSV files for precomputed kernels")
    sp.add_argument("--standardize", action="store_true", help="scale variables to mean 0, variance 1 first")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--max-iter", type=int, default=10000)
    sp.add_argument("--output", "-o", default="-")


def _add_grid(sp):
    sp.add_argument("--grid-base", type=float, default=1.5)
    sp.add_argument("--grid-min", type=int, default=-29)
    sp.add_argument("--grid-max", type=int, default=5)
    sp.add_argument("--grid", help="explicit comma separated penalty values")
    sp.add_argument("--folds", type=int, default=5)


def build_parser():
    parser = _Parser(prog="kapc", description="Kernelized additive principal components")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="fit the smallest APCs and write a model document")
    _add_common(fit, data_required=False)
    how = fit.add_mutually_exclusive_group(required=True)
    how.add_argument("--alpha", help="penalty, common or comma list per variable")
    how.add_argument("--df-target", help="per-variable degrees of freedom, or 'n/10' for p*df = n/10")
    how.add_argument("--cv", action="store_true", help="choose a common penalty by cross-validation")
    fit.add_argument("--df-kind", choices=["trS", "trS2", "tr2S-S2"], default="trS")
    fit.add_argument("--solver", choices=["power", "direct"], default="power")
    fit.add_argument("--components", type=int, default=1)
    _add_grid(fit)
    fit.set_defaults(func=cmd_fit)

    cv = sub.add_parser("cv", help="cross-validate a common penalty")
    _add_common(cv, data_required=False)
    _add_grid(cv)
    cv.set_defaults(func=cmd_cv)

    sim = sub.add_parser("simulate", help="draw the four-variable simulated example")
    sim.add_argument("--n", type=int, default=250)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--output", "-o", default="-")
    sim.add_argument("--latent", help="also write the latent Gaussian variables here")
    sim.add_argument("--truth", help="also write the true transform values here")
    sim.set_defaults(func=cmd_simulate)

    ev = sub.add_parser("eval", help="evaluate fitted transforms at new points")
    ev.add_argument("model")
    ev.add_argument("points")
    ev.add_argument("--component", type=int, default=0)
    ev.add_argument("--output", "-o", default="-")
    ev.set_defaults(func=cmd_eval)

    pd = sub.add_parser("plotdata", help="transform curves on a grid spanning each variable")
    pd.add_argument("model")
    pd.add_argument("--component", type=int, default=0)
    pd.add_argument("--points", type=int, default=200)
    pd.add_argument("--output", "-o", default="-")
    pd.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"kapc: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"kapc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"kapc: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"kapc: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
