"""Command-line front end: run configured experiments and write CSV/JSON results.

Exit codes: 0 success, 1 verification mismatch, 2 invalid configuration,
3 solver failure (diagnostics written), 4 input/output failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from functools import partial
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .channel import solve_channel
from .config import TASKS, as_list, config_digest, validate_config
from .env import ProductEnvironment
from .errors import ConfigError, ContractError
from .monitoring import entropy_bits
from .multitask import optimize_multitask
from .oracle import DiscreteInstance, brute_force_bipartition_2d, brute_force_single
from .single import optimize_cutoffs_single, optimize_rating_scale
from .solution import strict_mlrp_violations
from .sweep import sweep
from .twoagent import optimize_bipartition, optimize_individual

log = logging.getLogger("contractq")

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4
FIGURES = {
    "fig1": ("scale-sweep", "mu", "N_star"),
    "fig4": ("group-index", "mu", "I"),
    "fig5": ("multitask-sweep", "sigma2_1", "R"),
}
ORACLE_RTOL = 1e-3

# per-process memo of mu-independent solves, keyed by config digest
_MEMO: dict = {}


class SolverFailure(Exception):
    """Every requested solve failed; carries the per-point diagnostics."""

    def __init__(self, message, records):
        super().__init__(message)
        self.records = records


# --------------------------------------------------------------------------
# formatting


def fmt(x) -> str:
    """Text form used in CSV cells: 12 significant digits, lists joined by ';'."""
    if isinstance(x, (list, tuple, np.ndarray)):
        return ";".join(fmt(v) for v in x)
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    return str(x)


def rounded(x):
    """JSON-ready copy with floats cut to 12 significant digits."""
    if isinstance(x, dict):
        return {str(k): rounded(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [rounded(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if not math.isfinite(x) else float(format(x, ".12g"))
    return x


def to_csv(records, columns=None) -> str:
    if columns is None:
        columns = []
        for r in records:
            columns.extend(k for k in r if k not in columns and not isinstance(r[k], dict))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def emit_figure_data(records, figure: str, digest: str = "") -> str:
    """Two-column ``x,y`` CSV for a figure, preceded by ``#`` metadata lines."""
    if figure not in FIGURES:
        raise ValueError(f"unknown figure {figure!r}")
    task, xname, yname = FIGURES[figure]
    if any(r.get("task") != task for r in records):
        raise ValueError(f"mismatched record/figure kinds: {figure} needs {task} records")
    pts = [(r["value"], r[yname]) for r in records if r.get("ok")]
    meta = [f"# figure={figure}", f"# config_digest={digest}", f"# x={xname}", f"# y={yname}"]
    if figure == "fig4":
        lo = hi = None
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if (y0 - 1.0) * (y1 - 1.0) <= 0 and y0 != y1:
                lo, hi = x0, x1
                break
        meta.append(f"# crossing_bracket={fmt(lo)},{fmt(hi)}" if lo is not None else "# crossing_bracket=none")
    buf = io.StringIO()
    buf.write("\n".join(meta) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([xname, yname])
    for x, y in pts:
        w.writerow([fmt(x), fmt(y)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# task points (module level so they can run in worker processes)


def _solver_opts(cfg) -> dict:
    s = cfg["solver"]
    return {"n_starts": s.get("n_starts", 16), "seed": s["seed"]}


def _single_fields(sol) -> dict:
    return {
        "N": sol.n_cells,
        "cutoffs": list(sol.partition.cutoffs),
        "masses": sol.masses.tolist(),
        "zvalues": sol.zvalues.tolist(),
        "wages": np.asarray(sol.wages).tolist(),
        "multiplier": float(sol.duals[0].lam[0]),
        "expected_wage": sol.incentive_cost,
        "entropy_bits": entropy_bits(sol.masses),
        "incentive_cost": sol.incentive_cost,
        "monitoring_cost": sol.monitoring_cost,
        "mu": sol.mu,
        "total_cost": sol.total_cost,
    }


def single_point(cfg, c):
    env = cfgmod.build_scalar_env(cfg["model"])
    u = cfgmod.build_utility(cfg["utility"])
    mus = cfgmod.mu_grid(cfg["cost"])
    if len(mus) != 1:
        raise ConfigError("solve-single takes one mu; use scale-sweep for a grid")
    cost = cfgmod.build_cost(cfg["cost"], mus[0])
    N = cfg["solver"].get("N", 2)
    opts = dict(_solver_opts(cfg), method=cfg["solver"].get("method", "auto"))
    if N == "auto":
        n_star, sol = optimize_rating_scale(env, u, c, cost, **opts)
        return {"N_star": n_star, **_single_fields(sol)}
    sol = optimize_cutoffs_single(env, u, c, N, cost, **opts)
    return _single_fields(sol)


def scale_point(cfg, mu):
    env = cfgmod.build_scalar_env(cfg["model"])
    u = cfgmod.build_utility(cfg["utility"])
    c = cfgmod.effort_cost(cfg["model"])
    cost = cfgmod.build_cost(cfg["cost"], mu)
    cache = _MEMO.setdefault(("scale", config_digest(cfg)), {})
    n_star, sol = optimize_rating_scale(env, u, c, cost, cache=cache,
                                        method=cfg["solver"].get("method", "auto"), **_solver_opts(cfg))
    return {"N_star": n_star, **_single_fields(sol)}


def group_point(cfg, mu):
    env2 = cfgmod.build_product(cfg["model"])
    u = cfgmod.build_utility(cfg["utility"])
    costs = cfgmod.agent_costs(cfg["model"])
    Ns = tuple(cfg["solver"].get("N_agents", (2, 2)))
    n_angles = cfg["solver"].get("n_angles", 64)
    cost = cfgmod.build_cost(cfg["cost"], mu)
    if cost.kind == "rating-scale":
        key = ("group", config_digest(cfg))
        if key not in _MEMO:
            base = cost.with_mu(0.0)
            _MEMO[key] = (optimize_bipartition(env2, (u, u), costs, base, n_angles=n_angles),
                          optimize_individual(env2, (u, u), costs, base, Ns, **_solver_opts(cfg)))
        bip, ind = _MEMO[key]
        b = bip.incentive_cost + mu * cost.f(bip.n_cells)
        i = ind.incentive_cost + mu * cost.f(ind.n_cells)
    else:
        bip = optimize_bipartition(env2, (u, u), costs, cost, n_angles=n_angles)
        ind = optimize_individual(env2, (u, u), costs, cost, Ns, **_solver_opts(cfg))
        b, i = bip.total_cost, ind.total_cost
    line = bip.partition
    return {
        "mu": mu,
        "I": b / i,
        "group_total": b,
        "individual_total": i,
        "group_incentive": bip.incentive_cost,
        "individual_incentive": ind.incentive_cost,
        "line_normal": list(line.normal),
        "line_offset": line.offset,
        "line_tag": line.tag,
        "cutoffs_agent1": list(ind.partition.cutoffs1),
        "cutoffs_agent2": list(ind.partition.cutoffs2),
    }


def multitask_point(cfg, sigma2_1):
    env = cfgmod.build_multitask(cfg["model"], sigma2_1)
    u = cfgmod.build_utility(cfg["utility"])
    mus = cfgmod.mu_grid(cfg["cost"])
    if len(mus) != 1:
        raise ConfigError("multitask-sweep takes one mu")
    cost = cfgmod.build_cost(cfg["cost"], mus[0])
    s = cfg["solver"]
    res = optimize_multitask(env, u, cost, s.get("N", 2), n_starts=s.get("n_starts", 8), seed=s["seed"])
    sol = res.solution
    return {
        "sigma2_1": sigma2_1,
        "R": res.R,
        "R_direction": res.R_direction,
        "direction": res.direction.tolist(),
        "multipliers": res.multipliers.tolist(),
        "alignment_angle": res.angle,
        "aligned": sol.diagnostics["aligned"],
        "cutoffs": list(res.partition.cutoffs),
        "masses": sol.masses.tolist(),
        "wages": np.asarray(sol.wages).tolist(),
        "binding": sol.diagnostics.get("binding", []),
        "incentive_cost": sol.incentive_cost,
        "monitoring_cost": sol.monitoring_cost,
        "mu": sol.mu,
        "total_cost": sol.total_cost,
    }


def channel_point(cfg, mu):
    z, p = cfgmod.channel_grid(cfg["model"])
    u = cfgmod.build_utility(cfg["utility"])
    c = cfgmod.effort_cost(cfg["model"])
    s = cfg["solver"]
    K = int(cfg["cost"].get("K", 2))
    sol = solve_channel(z, p, u, c, mu, K, seed=s["seed"], damping=s.get("damping", 0.5),
                        tol=s.get("tolerance", 1e-8), max_iter=s.get("max_iter", 10_000))
    return {
        "mu": mu,
        "categories": int(sol.channel.log_q.shape[0]),
        "masses": sol.channel.pi.tolist(),
        "zvalues": sol.channel.zvalues().tolist(),
        "wages": sol.schedule.wages.tolist(),
        "multiplier": sol.lam,
        "mutual_information_bits": sol.mutual_information_bits,
        "incentive_cost": sol.incentive_cost,
        "monitoring_cost": sol.mutual_information,
        "total_cost": sol.total_cost,
        "iterations": sol.iterations,
        "monotone_ratio": sol.ratio_monotone(),
    }


# --------------------------------------------------------------------------
# tasks


def _run_sweep(task, parameter, grid, point, cfg, jobs):
    rows = sweep(parameter, grid, partial(point, cfg), jobs=jobs)
    for r in rows:
        r["task"] = task
    if not any(r["ok"] for r in rows):
        msg = rows[0]["error"] if len(rows) == 1 else f"{task}: every grid point failed"
        raise SolverFailure(msg, rows)
    return rows


def task_solve_single(cfg, jobs):
    cs = as_list(cfg["model"].get("c", 1.0))
    return _run_sweep("solve-single", "c", cs, single_point, cfg, jobs)


def task_scale_sweep(cfg, jobs):
    if cfg["cost"]["kind"] == "mutual-information":
        raise ConfigError("scale-sweep needs a rating-scale or entropy cost")
    return _run_sweep("scale-sweep", "mu", cfgmod.mu_grid(cfg["cost"]), scale_point, cfg, jobs)


def task_group_index(cfg, jobs):
    return _run_sweep("group-index", "mu", cfgmod.mu_grid(cfg["cost"]), group_point, cfg, jobs)


def task_multitask(cfg, jobs):
    grid = [float(v) for v in as_list(cfg["model"]["sigma2_1"])]
    return _run_sweep("multitask-sweep", "sigma2_1", grid, multitask_point, cfg, jobs)


def task_channel(cfg, jobs):
    if cfg["cost"]["kind"] != "mutual-information":
        raise ConfigError("random-channel needs cost kind mutual-information")
    mus = cfgmod.mu_grid(cfg["cost"])
    if any(m <= 0 for m in mus):
        raise ConfigError("random-channel needs mu > 0")
    return _run_sweep("random-channel", "mu", mus, channel_point, cfg, jobs)


def task_verify(cfg, jobs):
    """Optimizers against exhaustive enumeration on small discretised instances."""
    model = cfg["model"]
    u = cfgmod.build_utility(cfg["utility"])
    c = cfgmod.effort_cost(model)
    mus = cfgmod.mu_grid(cfg["cost"])
    if len(mus) != 1:
        raise ConfigError("verify takes one mu")
    cost = cfgmod.build_cost(cfg["cost"], mus[0])
    atoms = cfgmod.build_atoms(model, int(model.get("atoms", 12)))
    rows = []
    for N in cfg["solver"].get("N_range", [2, 3]):
        orc = brute_force_single(DiscreteInstance(atoms.z, atoms.p, N, u, c, cost))
        sol = optimize_cutoffs_single(atoms, u, c, N, cost, **_solver_opts(cfg))
        gap = abs(sol.total_cost - orc.cost) / abs(orc.cost)
        mlrp = not orc.details["mlrp"]
        rows.append({"task": "verify", "check": "single", "N": N, "oracle_cost": orc.cost,
                     "optimizer_cost": sol.total_cost, "relative_gap": gap, "shape_ok": orc.is_interval,
                     "mlrp_ok": mlrp, "ok": bool(gap <= ORACLE_RTOL and mlrp and orc.is_interval)})
    grid = cfgmod.build_atoms(model, 3)
    env2 = ProductEnvironment((grid, grid))
    orc = brute_force_bipartition_2d(env2, (u, u), (c, c), cost)
    sol = optimize_bipartition(env2, (u, u), (c, c), cost)
    gap = abs(sol.total_cost - orc.cost) / abs(orc.cost)
    mlrp = all(not strict_mlrp_violations(orc.zvalues[:, i], orc.wages[:, i]) for i in range(2))
    if not orc.is_halfplane_consistent:
        log.warning("two-agent oracle winner is not cut by a line")
    rows.append({"task": "verify", "check": "two-agent", "N": 2, "oracle_cost": orc.cost,
                 "optimizer_cost": sol.total_cost, "relative_gap": gap,
                 "shape_ok": orc.is_halfplane_consistent, "mlrp_ok": mlrp, "ok": bool(gap <= ORACLE_RTOL)})
    return rows


TASK_FUNCS = {
    "solve-single": task_solve_single,
    "scale-sweep": task_scale_sweep,
    "group-index": task_group_index,
    "multitask-sweep": task_multitask,
    "random-channel": task_channel,
    "verify": task_verify,
}


# --------------------------------------------------------------------------
# driver


def _write(directory: Path, name: str, text: str):
    directory.mkdir(parents=True, exist_ok=True)
    (directory / name).write_text(text, encoding="utf-8")


def run(config_path, *, task=None, seed=None, jobs=1, output_dir=None, stream=sys.stderr) -> int:
    """Execute one configured experiment; returns the process exit code."""
    try:
        raw = cfgmod.load_config(config_path)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=stream)
        return EXIT_IO
    except ConfigError as exc:
        print(f"error: {exc}", file=stream)
        return EXIT_CONFIG
    try:
        cfg = validate_config(cfgmod.with_overrides(raw, seed=seed, directory=output_dir))
        name = cfg.get("task")
        if task is not None and name is not None and name != task:
            raise ConfigError(f"config task {name!r} does not match subcommand {task!r}")
        name = task or name
        if name is None:
            raise ConfigError("no task given in config or on the command line")
        cfg["task"] = name
    except ConfigError as exc:
        print(f"error: {exc}", file=stream)
        return EXIT_CONFIG

    out = Path(cfg["output"]["directory"])
    digest = config_digest(cfg)
    try:
        records = TASK_FUNCS[name](cfg, max(1, int(jobs)))
    except ConfigError as exc:
        print(f"error: {exc}", file=stream)
        return EXIT_CONFIG
    except (SolverFailure, ContractError) as exc:
        diag = {"task": name, "config_digest": digest, "error": str(exc),
                "error_type": type(exc).__name__}
        for attr in ("certificate", "diagnostics", "records"):
            if getattr(exc, attr, None):
                diag[attr] = getattr(exc, attr)
        try:
            _write(out, "diagnostics.json", json.dumps(rounded(diag), indent=2, sort_keys=True, default=str) + "\n")
        except OSError as io_exc:
            print(f"error: cannot write diagnostics: {io_exc}", file=stream)
            return EXIT_IO
        print(f"error: {exc}", file=stream)
        return EXIT_SOLVER

    try:
        fmt_ = cfg["output"].get("format", "both")
        if fmt_ in ("csv", "both"):
            _write(out, "results.csv", to_csv(records))
        if fmt_ in ("json", "both"):
            doc = {"task": name, "config_digest": digest, "config": cfg, "records": records}
            _write(out, "results.json", json.dumps(rounded(doc), indent=2, sort_keys=True, default=str) + "\n")
        fig = cfg["output"].get("figure")
        if fig:
            _write(out, f"{fig}.csv", emit_figure_data(records, fig, digest))
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=stream)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=stream)
        return EXIT_CONFIG
    if name == "verify" and not all(r["ok"] for r in records):
        print("verification failed", file=stream)
        return EXIT_MISMATCH
    return EXIT_OK


def figure_command(results_path, figure, output=None, stream=sys.stderr) -> int:
    try:
        with open(results_path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read results: {exc}", file=stream)
        return EXIT_IO
    try:
        text = emit_figure_data(doc["records"], figure, doc.get("config_digest", ""))
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=stream)
        return EXIT_CONFIG
    try:
        if output:
            Path(output).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"error: {exc}", file=stream)
        return EXIT_IO
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contractq",
        description="Optimal monitoring and incentive contracts: solvers and experiment runner.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add_common(p):
        p.add_argument("config", help="path to a JSON experiment config")
        p.add_argument("--seed", type=int, help="override the config's solver seed")
        p.add_argument("--jobs", type=int, default=1, help="maximum parallel solves (default 1)")
        p.add_argument("--output-dir", help="override the config's output directory")

    add_common(sub.add_parser("run", help="run the task named in the config"))
    helps = {
        "solve-single": "optimal cutoffs for one agent and one score",
        "scale-sweep": "optimal number of categories over a grid of mu",
        "group-index": "joint versus separate evaluation of two agents over mu",
        "multitask-sweep": "task weighting R over a grid of task-1 noise",
        "random-channel": "cost-minimising random monitoring channel",
        "verify": "check optimizers against exhaustive search",
    }
    for t in TASKS:
        add_common(sub.add_parser(t, help=helps[t]))
    fp = sub.add_parser("figure", help="two-column figure data from a results.json")
    fp.add_argument("results", help="results.json written by a sweep")
    fp.add_argument("figure", choices=sorted(FIGURES))
    fp.add_argument("-o", "--output", help="write here instead of standard output")
    return parser


def main(argv=None) -> int:
    level = os.environ.get("CONTRACTQ_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "figure":
        return figure_command(args.results, args.figure, args.output)
    task = None if args.command == "run" else args.command
    return run(args.config, task=task, seed=args.seed, jobs=args.jobs, output_dir=args.output_dir)


if __name__ == "__main__":
    sys.exit(main())
