"""Command-line driver for the rod benchmark.

Writes the per-trial iteration history and the final rod geometry as CSV
files and prints a one-line summary.  Exit status: 0 converged, 1 usage or
problem error, 2 iteration limit or stall.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ManifoldSQPError, SolveFailed
from .manifold import RetractionKind
from .rod import RodConfig, full_nodes, helix_initial, rod_oracle_factory
from .sqp import SolverConfig, composite_step_solve, local_sqp_solve

__all__ = ["RunSpec", "parse_run_spec", "run_and_emit", "main", "HISTORY_HEADER", "SOLUTION_HEADER"]

HISTORY_HEADER = [
    "iter", "nu", "tau", "norm_dn", "norm_dt", "norm_dx", "norm_ds",
    "omega_c", "omega_f", "f", "feasibility", "eta", "accepted",
]
SOLUTION_HEADER = ["s", "y1", "y2", "y3", "v1", "v2", "v3"]

# solver options exposed as flags; the rest keep their SolverConfig defaults
_SOLVER_KEYS = (
    "max_iter", "tol_dx", "tol_feas", "theta_aim", "theta_acc", "rho_ellbow",
    "eta_lo", "eta_hat", "omega_c_init", "omega_f_init", "hybrid_model",
)


class UsageError(Exception):
    pass


@dataclass
class RunSpec:
    rod: RodConfig = field(default_factory=RodConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    mode: str = "composite"
    model_retraction: RetractionKind = RetractionKind.EXPONENTIAL
    update_retraction: RetractionKind = RetractionKind.EXPONENTIAL
    history: str = "history.csv"
    solution: str = "solution.csv"


def _force(text):
    parts = str(text).split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("force needs three comma separated components")
    try:
        return tuple(float(t) for t in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid force {text!r}") from None


def _flag(text):
    if str(text) not in ("0", "1"):
        raise argparse.ArgumentTypeError("expected 0 or 1")
    return str(text) == "1"


def _parser():
    ap = argparse.ArgumentParser(
        prog="manifold-sqp",
        description="Equilibrium of an inextensible elastic rod by composite step SQP on a manifold.",
    )
    ap.add_argument("--nodes", type=int, help="number of grid intervals (default 240)")
    ap.add_argument("--sigma", type=float, help="flexural stiffness (default 1.0)")
    ap.add_argument("--force", type=_force, help="load density g as 'gx,gy,gz' (default 0,0,0)")
    ap.add_argument("--radius", type=float, help="radius of the initial helix (default 0.6)")
    ap.add_argument("--pitch-a", type=float, help="pitch parameter of the initial helix (default 0.5)")
    kinds = [k.value for k in RetractionKind]
    ap.add_argument("--model-retraction", choices=kinds, help="retraction for derivatives")
    ap.add_argument("--update-retraction", choices=kinds, help="retraction for evaluations and updates")
    ap.add_argument("--mode", choices=["composite", "local"], help="globalized or local SQP")
    ap.add_argument("--max-iter", type=int)
    ap.add_argument("--tol-dx", type=float)
    ap.add_argument("--tol-feas", type=float)
    ap.add_argument("--theta-aim", type=float)
    ap.add_argument("--theta-acc", type=float)
    ap.add_argument("--rho-ellbow", type=float)
    ap.add_argument("--eta-lo", type=float)
    ap.add_argument("--eta-hat", type=float)
    ap.add_argument("--omega-c-init", type=float)
    ap.add_argument("--omega-f-init", type=float)
    ap.add_argument("--hybrid-model", type=_flag, help="1 forces the hybrid model")
    ap.add_argument("--history", help="iteration history CSV (default history.csv)")
    ap.add_argument("--solution", help="solution CSV (default solution.csv)")
    ap.add_argument("--config", help="JSON file with the same keys, dashes replaced by underscores")
    return ap


def _read_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must contain a JSON object")
    known = {a.dest for a in _parser()._actions} - {"help", "config"}
    unknown = set(data) - known
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "force" in data:
        try:
            data["force"] = _force(",".join(str(v) for v in data["force"]) if isinstance(data["force"], list) else data["force"])
        except argparse.ArgumentTypeError as exc:
            raise UsageError(str(exc)) from None
    if "hybrid_model" in data:
        data["hybrid_model"] = bool(data["hybrid_model"])
    return data


def parse_run_spec(argv=None) -> RunSpec:
    """Build a :class:`RunSpec` from flags and an optional JSON config file.

    Raises :class:`UsageError` (or ``SystemExit`` from argparse) on bad input.
    """
    args = _parser().parse_args(argv)
    values = _read_config(args.config) if args.config else {}
    values.update({k: v for k, v in vars(args).items() if v is not None and k != "config"})
    try:
        rod = RodConfig(
            n=values.get("nodes", 240),
            sigma=values.get("sigma", 1.0),
            g=values.get("force", (0.0, 0.0, 0.0)),
            radius=values.get("radius", 0.6),
            pitch_a=values.get("pitch_a", 0.5),
        )
        solver = SolverConfig(**{k: values[k] for k in _SOLVER_KEYS if k in values})
        return RunSpec(
            rod=rod,
            solver=solver,
            mode=values.get("mode", "composite"),
            model_retraction=RetractionKind.parse(values.get("model_retraction", "exponential")),
            update_retraction=RetractionKind.parse(values.get("update_retraction", "exponential")),
            history=values.get("history", "history.csv"),
            solution=values.get("solution", "solution.csv"),
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _fmt(x):
    return "%.17g" % (x + 0.0)  # no negative zeros


def write_history(path, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for r in history:
            w.writerow(
                [r.iter] + [_fmt(v) for v in (
                    r.nu, r.tau, r.norm_dn, r.norm_dt, r.norm_dx, r.norm_ds,
                    r.omega_c, r.omega_f, r.f_value, r.feasibility_inf_norm, r.eta,
                )] + [int(r.accepted)]
            )


def write_solution(path, cfg: RodConfig, state):
    Y, V = full_nodes(cfg, state)
    s = np.arange(cfg.n + 1) / cfg.n
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SOLUTION_HEADER)
        for i in range(cfg.n + 1):
            w.writerow([_fmt(s[i])] + [_fmt(t) for t in Y[i]] + [_fmt(t) for t in V[i]])


def run_and_emit(spec: RunSpec) -> int:
    cfg = spec.rod
    factory = rod_oracle_factory(cfg, spec.model_retraction, spec.update_retraction)
    x0 = helix_initial(cfg)
    status = 0
    try:
        if spec.mode == "local":
            result = local_sqp_solve(factory, x0, tol=spec.solver.tol_dx, max_iter=spec.solver.max_iter)
        else:
            result = composite_step_solve(factory, x0, spec.solver)
    except SolveFailed as exc:
        result, status = exc.result, 2
        print(f"not converged: {exc}", file=sys.stderr)
    except ManifoldSQPError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    write_history(spec.history, result.history if result is not None else [])
    if result is None:
        return status
    write_solution(spec.solution, cfg, result.x)
    oracle = factory(result.x)
    if status == 0:
        print(f"converged in {result.iterations} iterations, f={oracle.f0:.12g}, feas={oracle.feasibility():.3g}")
    return status


def main(argv=None) -> int:
    try:
        spec = parse_run_spec(argv)
    except UsageError as exc:
        print(f"manifold-sqp: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 is reserved for solver failures here
        return 0 if exc.code == 0 else 1
    try:
        return run_and_emit(spec)
    except OSError as exc:
        print(f"manifold-sqp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
