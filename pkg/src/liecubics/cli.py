"""Command-line entry point: load a scenario, run it, write artifacts."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import report
from .bvp import initial_state, solve_bvp
from .dynamics import COVARIANT, integrate_ivp, trajectory_to_chart
from .errors import (MaxIterationsError, NoConvergenceError,
                     ScenarioParseError, ScenarioValidationError)
from .scenario import Scenario, build, load_scenario_file
from .verification import (OracleSettings, evaluate_cost, from_trajectory,
                           cost_gradient, minimize_discrete_cost, path_gap,
                           perturb_path, unreduced_residual)

MODES = ("integrate", "solve", "verify", "oracle", "all")


def _integrate_mode(scn: Scenario, out: Path, summary: dict) -> None:
    cfg = scn.config
    unknowns = np.zeros((cfg.agents, 2, scn.metric.algebra.dim))
    if cfg.initial is not None:
        for j, a in enumerate(cfg.initial):
            unknowns[j, 0] = a.xi1
            unknowns[j, 1] = a.xi2
    state0 = initial_state(scn.metric, scn.bc, unknowns, cfg.formulation)
    traj = integrate_ivp(scn.metric, scn.graph, scn.potentials, state0,
                         scn.bc.duration, scn.integrator, cfg.formulation,
                         scn.geodesic, cfg.potential.gradient_method)
    # exported jets are always covariant so the column meaning is fixed
    traj = trajectory_to_chart(scn.metric, traj, COVARIANT)
    report.write_trajectory_csv(out / "trajectory_integrate.csv", scn.metric, traj)
    entry = {
        "nodes": traj.node_count,
        "hjk_drift": traj.hjk_drift,
        "min_pairwise_distance": report.min_pairwise_distance(scn.metric, traj),
    }
    if scn.potentials.is_zero(scn.graph):
        from .dynamics import cubic_first_integral

        I = cubic_first_integral(scn.metric, traj)
        entry["first_integral_drift"] = float(np.max(I.max(axis=1) - I.min(axis=1)))
        report.render_first_integral_figure(out / "first_integral.png",
                                            scn.metric, traj)
    report.render_jet_figure(out / "jets_integrate.png", traj)
    summary["integrate"] = entry


def _solve_mode(scn: Scenario, out: Path, summary: dict, seed: int):
    cfg = scn.config
    result = solve_bvp(scn.metric, scn.graph, scn.potentials, scn.bc,
                       scn.shooting, scn.integrator, cfg.formulation,
                       scn.geodesic, cfg.potential.gradient_method, seed=seed)
    traj = trajectory_to_chart(scn.metric, result.trajectory, COVARIANT)
    report.write_trajectory_csv(out / "trajectory.csv", scn.metric, traj)
    report.render_jet_figure(out / "jets.png", traj)
    report.render_distance_figure(out / "distances.png", scn.metric, traj)
    report.render_paths_figure(out / "paths.png", scn.metric, traj)
    alg = scn.metric.algebra
    pos_err = max(
        float(np.linalg.norm(alg.log(alg.compose(
            alg.inverse(traj.poses[j, -1]),
            np.asarray(scn.bc.agents[j].g_end, dtype=float)))))
        for j in range(traj.agent_count))
    vel_err = max(
        float(np.linalg.norm(traj.jets[j, -1, 0] - scn.bc.agents[j].v_end))
        for j in range(traj.agent_count))
    entry = result.report()
    entry["position_error"] = pos_err
    entry["velocity_error"] = vel_err
    entry["min_pairwise_distance"] = report.min_pairwise_distance(scn.metric, traj)
    if scn.potentials.is_zero(scn.graph):
        report.render_first_integral_figure(out / "first_integral.png",
                                            scn.metric, traj)
    summary["solve"] = entry
    return result


def _verify_mode(scn: Scenario, out: Path, summary: dict, solve_result) -> None:
    cfg = scn.config
    traj = solve_result.trajectory
    cost = evaluate_cost(scn.metric, scn.graph, scn.potentials, traj,
                         scn.geodesic)
    fd = cfg.residual_fd_step
    coarse = unreduced_residual(scn.metric, scn.graph, scn.potentials, traj,
                                2.0 * fd, scn.geodesic,
                                cfg.potential.gradient_method)
    fine = unreduced_residual(scn.metric, scn.graph, scn.potentials, traj,
                              fd, scn.geodesic, cfg.potential.gradient_method)
    ratio = coarse.max_norm / fine.max_norm if fine.max_norm > 0 else None
    report.render_residual_figure(out / "residual.png", fine)
    summary["verify"] = {
        "cost": cost,
        "residual_fd_step": fine.fd_step,
        "residual_max": fine.max_norm,
        "residual_max_coarse": coarse.max_norm,
        "residual_order_ratio": ratio,
    }


def _oracle_mode(scn: Scenario, out: Path, summary: dict, solve_result,
                 seed: int) -> None:
    cfg = scn.config
    segments = cfg.oracle["segments"]
    path0 = from_trajectory(solve_result.trajectory, segments)
    _, gnorm0 = cost_gradient(scn.metric, scn.graph, scn.potentials, path0,
                              cfg.oracle["fd_step"], scn.bc, scn.geodesic)
    entry = {"segments": segments, "gradient_norm_at_solution": gnorm0,
             "perturbation": cfg.oracle["perturbation"]}
    if cfg.oracle["perturbation"] > 0.0:
        start = perturb_path(path0, cfg.oracle["perturbation"], seed, scn.metric)
        settings = OracleSettings(
            gradient_tolerance=cfg.oracle["gradient_tolerance"],
            max_iterations=cfg.oracle["max_iterations"],
            fd_step=cfg.oracle["fd_step"])
        try:
            result = minimize_discrete_cost(scn.metric, scn.graph,
                                            scn.potentials, scn.bc, start,
                                            settings, scn.geodesic)
        except MaxIterationsError as exc:
            result = exc.best
        entry["minimized"] = {
            "value": result.value,
            "gradient_norm": result.gradient_norm,
            "iterations": result.iterations,
            "converged": result.converged,
            "node_gap_to_solution": path_gap(scn.metric, result.path, path0,
                                             scn.geodesic),
        }
        report.render_descent_figure(out / "oracle.png", result.history)
    summary["oracle"] = entry


def run(scn: Scenario, mode: str, out_dir, seed=None) -> int:
    """Execute one scenario; writes artifacts and returns an exit status."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    cfg = scn.config
    seed = cfg.seed if seed is None else seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "mode": mode,
        "seed": seed,
        "group": {"kind": cfg.group_kind, "dim": cfg.group_dim},
        "formulation": cfg.formulation,
        "agents": cfg.agents,
    }
    status = 0
    try:
        if mode == "integrate" or (mode == "all" and cfg.initial is not None):
            _integrate_mode(scn, out, summary)
        if mode in ("solve", "verify", "oracle", "all"):
            result = _solve_mode(scn, out, summary, seed)
            if mode in ("verify", "all"):
                _verify_mode(scn, out, summary, result)
            if mode in ("oracle", "all"):
                _oracle_mode(scn, out, summary, result, seed)
    except NoConvergenceError as exc:
        summary["error"] = {
            "type": "NoConvergence",
            "message": str(exc),
            "residual_norm": (None if exc.residual_norm is None
                              else float(exc.residual_norm)),
        }
        status = 2
    report.write_summary(out / "summary.json", summary)
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="liecubics",
        description="Collision-avoiding variational trajectories on Lie groups",
    )
    parser.add_argument("--scenario", required=True, help="scenario file path")
    parser.add_argument("--mode", default="solve", choices=MODES)
    parser.add_argument("--out", default=None,
                        help="output directory (default: scenario output_dir)")
    parser.add_argument("--step", type=float, default=None,
                        help="override integrator step")
    parser.add_argument("--tol", type=float, default=None,
                        help="override shooting tolerance")
    parser.add_argument("--seed", type=int, default=None,
                        help="override multistart/perturbation seed")
    args = parser.parse_args(argv)

    try:
        config = load_scenario_file(args.scenario)
    except (ScenarioParseError, ScenarioValidationError) as exc:
        print(f"error: {args.scenario}: {exc}", file=sys.stderr)
        return 1
    if args.step is not None:
        config = dataclasses.replace(config, integrator_step=args.step)
    if args.tol is not None:
        config = dataclasses.replace(
            config, shooting={**config.shooting, "tolerance": args.tol})
    try:
        scn = build(config)
    except ScenarioValidationError as exc:
        print(f"error: {args.scenario}: {exc}", file=sys.stderr)
        return 1
    out_dir = args.out if args.out is not None else config.output_dir
    status = run(scn, args.mode, out_dir, seed=args.seed)
    if status != 0:
        print(f"run finished with status {status}; see summary.json",
              file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
