"""
Command-line front end.

Exit codes: 0 ok, 1 malformed input, 3 pseudo-only linear problem,
4 nonlinear iteration did not converge, 5 torus verification failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import linear, lyapunov_schmidt as ls, vdp
from .errors import (
    ConfigurationError,
    DomainError,
    NonConvergenceError,
    NotSolvableError,
    ShapeError,
    VerificationError,
)
from .schema import ProblemDocument, load_document

logger = logging.getLogger("periodic_bvp")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_PSEUDO = 3
EXIT_NONCONVERGENCE = 4
EXIT_VERIFICATION = 5

_OVERRIDES = {
    "grid_size": "grid_size",
    "mu": "mu",
    "series_terms": "series_terms",
    "eps": "eps",
    "tol": "tol",
    "max_iter": "max_iter",
    "resonance_tol": "resonance_tol",
    "rank_tol": "rank_tol",
    "seed": "seed",
}


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return "%.17g" % value


def write_trajectory_csv(path: Path, traj: linear.Trajectory) -> None:
    n = traj.n_modes
    header = ["t"] + [f"{c}{k}" for k in range(1, n + 1) for c in ("x", "y")]
    lines = [",".join(header)]
    flat = traj.states.reshape(traj.grid.size, -1)
    for t, row in zip(traj.grid, flat):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in row]))
    path.write_text("\n".join(lines) + "\n")


def write_roots_csv(path: Path, pairs) -> None:
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    lines = ["k,c1,c2,r"]
    for k, (c1, c2) in enumerate(pairs, start=1):
        lines.append(",".join([str(k), _fmt(c1), _fmt(c2), _fmt(float(np.hypot(c1, c2)))]))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


# ---------------------------------------------------------------------------
# Input
# ---------------------------------------------------------------------------

def read_document(path: str, args=None) -> ProblemDocument:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        doc = load_document(text)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<document>"
            lines.append(f"{path}: {loc}: {err['msg']}")
        raise InputError("\n".join(lines)) from exc
    if args is not None:
        updates = {}
        for attr, key in _OVERRIDES.items():
            value = getattr(args, attr, None)
            if value is not None:
                updates[key] = value
        if updates:
            settings = doc.settings.model_validate({**doc.settings.model_dump(), **updates})
            doc = doc.model_copy(update={"settings": settings})
    return doc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_solve_linear(input_path: str, out_dir: str, args=None) -> int:
    start = time.perf_counter()
    doc = read_document(input_path, args)
    if doc.kind != "linear":
        raise InputError(f"{input_path}: kind: expected 'linear', got '{doc.kind}'")
    s = doc.settings
    try:
        problem = doc.to_problem()
        c_bar = doc.c_bar_array(problem.n_modes)
        report = linear.solvability_condition(problem, s.grid_size, s.solvability_tol, s.resonance_tol)
    except (ValueError, ConfigurationError) as exc:
        raise InputError(f"{input_path}: {exc}") from exc

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if report.solvable:
        traj = linear.solve_linear(problem, c_bar, s.grid_size, s.solvability_tol, s.resonance_tol)
        residual = 0.0
    else:
        traj, residual = linear.pseudosolve(problem, c_bar, s.grid_size, s.resonance_tol)
    check = linear.verify_trajectory(problem, traj)
    write_trajectory_csv(out / "trajectory.csv", traj)

    series = {}
    try:
        pinv = linear.green_pseudoinverse(problem.op, problem.w, report.g, s.resonance_tol)
        ser = linear.green_series(problem.op, problem.w, report.g, s.mu, s.series_terms,
                                  s.series_terms, s.resonance_tol)
        series = {"mu": s.mu, "terms": s.series_terms,
                  "max_difference": float(np.max(np.abs(ser - pinv))),
                  "tail_bound": linear.series_tail_bound(problem.op, problem.w, s.mu, s.series_terms,
                                                         s.series_terms, s.resonance_tol)}
    except DomainError as exc:
        series = {"error": str(exc)}

    result = {
        "kind": "linear",
        "solvability": report.to_dict(),
        "pseudosolution_residual": residual,
        "trajectory_file": "trajectory.csv",
        "verification": {"ode_residual": check.ode_residual,
                         "boundary_residual": check.boundary_residual},
        "green_series_check": series,
        "timing_seconds": time.perf_counter() - start,
    }
    _write_json(out / "report.json", result)
    return EXIT_OK if report.solvable else EXIT_PSEUDO


def cmd_solve_nonlinear(input_path: str, out_dir: str, args=None) -> int:
    start = time.perf_counter()
    doc = read_document(input_path, args)
    if doc.kind not in ("nonlinear", "vdp"):
        raise InputError(f"{input_path}: kind: expected 'nonlinear' or 'vdp', got '{doc.kind}'")
    s = doc.settings
    try:
        problem = doc.to_problem()
        rhs = doc.to_rhs(problem)
    except (ValueError, ConfigurationError) as exc:
        raise InputError(f"{input_path}: {exc}") from exc

    c_init = doc.c_bar_array(problem.n_modes)
    if doc.kind == "vdp" and not s.skip_newton and doc.c_bar is None:
        c_init = vdp.solve_amplitudes(doc.vdp_config(), seed=s.seed, rank_tol=s.rank_tol)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        root = ls.find_generating_root(problem, rhs, c_init, s.grid_size, s.newton_tol, 50,
                                       s.rank_tol, s.resonance_tol, newton=not s.skip_newton)
    except NotSolvableError as exc:
        raise InputError(f"{input_path}: {exc}") from exc
    except NonConvergenceError as exc:
        _write_json(out / "report.json", {"kind": doc.kind, "stage": "generating_root",
                                          "error": str(exc), "residual_history": exc.history})
        return EXIT_NONCONVERGENCE
    write_roots_csv(out / "roots.csv", root.c0)

    result = {
        "kind": doc.kind,
        "eps": s.eps,
        "generating_root": {"c0": root.c0, "F_residual": root.F_residual,
                            "radii": np.hypot(root.c0[:, 0], root.c0[:, 1])},
        "B0": {"matrix": root.B0, "rank": root.B0_rank,
               "conditions": root.conditions.to_dict()},
        "roots_file": "roots.csv",
    }
    code = EXIT_OK
    try:
        phi, history = ls.ls_iterate(problem, rhs, root, s.eps, s.tol, s.max_iter, s.grid_size,
                                     s.boundary_tol, s.eps0, s.rank_tol, s.resonance_tol)
        result["converged"] = True
    except NonConvergenceError as exc:
        history = exc.history
        phi = history[-1].phi if history else None
        result["converged"] = False
        result["error"] = str(exc)
        code = EXIT_NONCONVERGENCE
    except ValueError as exc:
        raise InputError(f"{input_path}: {exc}") from exc

    _write_json(out / "history.json", [state.summary() for state in history])
    result["history_file"] = "history.json"
    if phi is not None:
        write_trajectory_csv(out / "trajectory.csv", phi)
        result["trajectory_file"] = "trajectory.csv"
        z = rhs(phi.states, phi.grid, s.eps)
        forcing = problem.forcing.evaluate(phi.grid, problem.w) + s.eps * z
        check = linear.verify_trajectory(problem, phi, forcing)
        result["verification"] = {"ode_residual": check.ode_residual,
                                  "boundary_residual": check.boundary_residual}
    result["timing_seconds"] = time.perf_counter() - start
    _write_json(out / "report.json", result)
    return code


def cmd_vdp_torus(n_modes: int, support, out_dir: str, grid_size: int = linear.DEFAULT_GRID_SIZE,
                  tol: float = 1e-10, seed=None, rank_tol: float = 1e-10) -> int:
    try:
        cfg = vdp.VdPConfig(n_modes, support=tuple(support))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        pairs = vdp.solve_amplitudes(cfg, seed=seed, rank_tol=rank_tol)
    except NonConvergenceError as exc:
        _write_json(out / "report.json", {"error": str(exc), "residual_history": exc.history})
        return EXIT_VERIFICATION
    torus = vdp.verify_torus(pairs, tol)
    write_roots_csv(out / "roots.csv", pairs)
    report = {"n_modes": n_modes, "support": list(cfg.support), "torus": torus.to_dict()}
    ok = torus.matches_formula
    try:
        report["cross_check_F"] = vdp.cross_check_F(cfg, pairs, grid_size)
    except VerificationError as exc:
        report["cross_check_F"] = {"error": str(exc), **(exc.report or {})}
        ok = False
    _write_json(out / "report.json", report)
    return EXIT_OK if ok else EXIT_VERIFICATION


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="problem document (JSON)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--grid-size", type=int)
    p.add_argument("--mu", type=float)
    p.add_argument("--series-terms", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--resonance-tol", type=float)
    p.add_argument("--rank-tol", type=float)
    p.add_argument("--seed", type=int)


def _support(text: str):
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad support list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="periodic-bvp", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _solver_flags(sub.add_parser("solve-linear", help="linear periodic problem"))
    _solver_flags(sub.add_parser("solve-nonlinear", help="nonlinear / van der Pol problem"))

    torus = sub.add_parser("vdp-torus", help="van der Pol amplitude roots and torus radius")
    torus.add_argument("--n-modes", type=int, required=True)
    torus.add_argument("--support", type=_support, required=True, help="comma-separated, e.g. 1,2")
    torus.add_argument("--out-dir", required=True)
    torus.add_argument("--grid-size", type=int, default=linear.DEFAULT_GRID_SIZE)
    torus.add_argument("--tol", type=float, default=1e-10)
    torus.add_argument("--rank-tol", type=float, default=1e-10)
    torus.add_argument("--seed", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve-linear":
            return cmd_solve_linear(args.input, args.out_dir, args)
        if args.command == "solve-nonlinear":
            return cmd_solve_nonlinear(args.input, args.out_dir, args)
        return cmd_vdp_torus(args.n_modes, args.support, args.out_dir, args.grid_size,
                             args.tol, args.seed, args.rank_tol)
    except (InputError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
