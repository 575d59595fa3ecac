"""Command-line interface: idg forward|residual|bilevel|sweep|collision|preprocess."""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, dataio
from .bilevel import PatternSearchConfig, pattern_search
from .errors import IdgError, NoConvergence
from .experiments import (SWEEP_PRESETS, collision_bilevel_config,
                          run_collision_eval, run_sweep)
from .games import ParameterVector
from .metrics import trajectory_error_of
from .residual import diagnose_identifiability, riccati_backward, solve_residual_qp
from .shooting import select_best_olne, solve_olne


def _ensure_out(args) -> str:
    out = args.out or dataio.default_out_dir()
    os.makedirs(out, exist_ok=True)
    return out


def _load_config(args) -> dict:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            return json.load(fh)
    return {}


def cmd_forward(args) -> int:
    out = _ensure_out(args)
    game = dataio.load_game(args.game)
    theta = dataio.load_theta(args.theta)
    sols = solve_olne(game, theta)
    report = {"attempts": [
        {"start": s.start_label, "converged": s.converged,
         "residual": s.shooting_residual, "iterations": s.iterations,
         "psi0": s.psi0.tolist()} for s in sols]}
    conv = [s for s in sols if s.converged]
    if conv:
        best = conv[0]
        dataio.store_trajectory(os.path.join(out, "trajectory.csv"), best.trajectory)
        report["trajectory"] = "trajectory.csv"
    dataio.store_result(os.path.join(out, "forward_report.json"), report)
    if not conv:
        print("forward: no start converged", file=sys.stderr)
        return 1
    print(f"forward: {len(conv)}/{len(sols)} starts converged -> {out}")
    return 0


def cmd_residual(args) -> int:
    out = _ensure_out(args)
    game = dataio.load_game(args.game)
    gt = dataio.load_trajectory(args.gt)
    constraints = dataio.load_constraints(args.constraints)
    assemblies = [riccati_backward(game, gt, i) for i in range(game.N)]
    sol = solve_residual_qp(assemblies, constraints)
    dataio.store_theta(os.path.join(out, "theta_R.json"), sol.theta)
    diags = [diagnose_identifiability(a) for a in assemblies]
    dataio.store_result(os.path.join(out, "residual_report.json"), {
        **sol.summary(),
        "identifiability": [
            {"player": d.player, "rank": d.rank, "full_rank": d.full_rank,
             "block_zero": d.block_zero,
             "singular_values": d.singular_values.tolist()} for d in diags],
    })
    if args.dump_p0:
        for a in assemblies:
            np.savetxt(os.path.join(out, f"P0_player{a.player+1}.csv"),
                       a.P0, delimiter=",", fmt="%.17g")
    print(f"residual: delta_R = {sol.delta_R:.6g} -> {out}")
    return 0


def cmd_bilevel(args) -> int:
    out = _ensure_out(args)
    game = dataio.load_game(args.game)
    gt = dataio.load_trajectory(args.gt)
    cfg = _load_config(args)
    theta0 = ParameterVector([np.asarray(p, float) for p in cfg["theta0"]])
    constraints = None
    if "constraints" in cfg:
        from .residual import ConstraintSpec, PlayerConstraints
        constraints = ConstraintSpec([
            PlayerConstraints([(int(j), float(v)) for j, v in e.get("pins", [])],
                              [(int(j), float(b)) for j, b in e.get("lower_bounds", [])])
            for e in cfg["constraints"]["players"]])
    config = PatternSearchConfig(
        theta0, constraints,
        mesh0=np.asarray(cfg["mesh0"], float) if "mesh0" in cfg else None,
        expansion=cfg.get("expansion", 2.0),
        contraction=cfg.get("contraction", 0.5),
        max_iter=cfg.get("max_iter", 200),
        mesh_tol=cfg.get("mesh_tol", 1e-3),
        parallel_poll=cfg.get("parallel_poll", False))
    sol = pattern_search(game, gt, config)
    dataio.store_theta(os.path.join(out, "theta_T.json"), sol.theta)
    from .experiments import _trace_csv
    with open(os.path.join(out, "bilevel_trace.csv"), "w") as fh:
        fh.write(_trace_csv(sol))
    dataio.store_result(os.path.join(out, "bilevel_report.json"), {
        "delta_T_min": sol.objective, "evaluations": sol.evaluations,
        "inner_failed": sol.inner_failed, "wall_seconds": sol.wall_seconds})
    print(f"bilevel: delta_T_min = {sol.objective:.6g} -> {out}")
    return 0


def cmd_sweep(args) -> int:
    out = _ensure_out(args)
    if args.preset not in SWEEP_PRESETS:
        print(f"unknown preset {args.preset!r}; have {sorted(SWEEP_PRESETS)}",
              file=sys.stderr)
        return 2
    spec = SWEEP_PRESETS[args.preset](seed=args.seed)
    cfg = _load_config(args)
    if "grid" in cfg:
        spec.grid = tuple(cfg["grid"])
    result = run_sweep(spec)
    with open(os.path.join(out, f"{args.preset}_sweep.csv"), "w") as fh:
        fh.write(result.to_csv())
    dataio.store_result(os.path.join(out, f"{args.preset}_result.json"), {
        "preset": args.preset, "seed": args.seed,
        "argmin_delta_R": result.argmin_R, "argmin_delta_T": result.argmin_T,
        "psi0_star": result.psi0_star.tolist(), **result.meta})
    print(f"sweep {args.preset}: argmin dR = {result.argmin_R:.3f}, "
          f"argmin dT = {result.argmin_T:.3f} -> {out}")
    return 0


def cmd_collision(args) -> int:
    out = _ensure_out(args)
    cfg = _load_config(args)
    budget = collision_bilevel_config(
        max_iter=cfg.get("max_iter", 200),
        parallel_poll=cfg.get("parallel_poll", False))
    gt = dataio.load_trajectory(args.gt) if args.gt else None
    report = run_collision_eval(gt=gt, budget=budget)
    artifacts = report.pop("artifacts")
    for name, text in artifacts.items():
        with open(os.path.join(out, name), "w") as fh:
            fh.write(text)
    dataio.store_result(os.path.join(out, "collision_report.json"), report)
    table = report["table"]
    print("collision table:", json.dumps(table, indent=2))
    print(f"-> {out}")
    return 0


def cmd_preprocess(args) -> int:
    out = _ensure_out(args)
    rec = dataio.load_raw_recording(args.raw)
    traj = dataio.differentiate_and_smooth(rec, args.smoothing)
    blocks = [int(b) for b in args.blocks.split(",")] if args.blocks else None
    window = dataio.detect_window(traj, blocks)
    report = {"t_start": window.t_start, "t_end": window.t_end,
              "valid": window.valid, "reason": window.reason}
    if window.valid:
        trimmed = dataio.extract_window(traj, window)
        dataio.store_trajectory(os.path.join(out, "trajectory.csv"), trimmed)
        report["trajectory"] = "trajectory.csv"
        report["final_state"] = trimmed.states[-1].tolist()
    dataio.store_result(os.path.join(out, "window_report.json"), report)
    status = "valid" if window.valid else f"invalid ({window.reason})"
    print(f"preprocess: window [{window.t_start:.3f}, {window.t_end:.3f}] {status} -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idg",
                                description="inverse dynamic games toolkit")
    p.add_argument("--version", action="version", version=f"idg {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with run options")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="output directory (default $IDG_OUT_DIR or ./runs)")

    sp = sub.add_parser("forward", help="solve an equilibrium and dump the trajectory")
    common(sp)
    sp.add_argument("--game", required=True)
    sp.add_argument("--theta", required=True)
    sp.set_defaults(func=cmd_forward)

    sp = sub.add_parser("residual", help="residual identification (Riccati sweep + QP)")
    common(sp)
    sp.add_argument("--game", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--constraints", required=True)
    sp.add_argument("--dump-p0", action="store_true")
    sp.set_defaults(func=cmd_residual)

    sp = sub.add_parser("bilevel", help="pattern-search identification")
    common(sp)
    sp.add_argument("--game", required=True)
    sp.add_argument("--gt", required=True)
    sp.set_defaults(func=cmd_bilevel)

    sp = sub.add_parser("sweep", help="run a named sweep preset")
    common(sp)
    sp.add_argument("--preset", required=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("collision", help="two-robot evaluation (residual vs bi-level)")
    common(sp)
    sp.add_argument("--gt", help="external GT trajectory CSV (default: synthetic)")
    sp.set_defaults(func=cmd_collision)

    sp = sub.add_parser("preprocess", help="smooth, differentiate and trim a recording")
    common(sp)
    sp.add_argument("--raw", required=True)
    sp.add_argument("--smoothing", type=float, default=None)
    sp.add_argument("--blocks", help="comma-separated control block sizes, e.g. 2,2")
    sp.set_defaults(func=cmd_preprocess)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (IdgError, NoConvergence, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
