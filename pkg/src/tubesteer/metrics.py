"""Run metrics and run-to-run comparison."""

from __future__ import annotations

import math

import numpy as np

from .envelope import assemble_stab_constraints
from .simulate import RunLog

SLACK_ZERO_TOL = 1e-6


def compute_metrics(log: RunLog, config=None) -> dict:
    config = config or log.config
    out = {"scenario": config.name, "mode": config.mode,
           "collision": bool(log.collision),
           "truncated_reason": log.truncated_reason,
           "steps": len(log.rows),
           "sim_time": len(log.rows) * config.grid.T_ss}
    if not log.rows:
        out["min_clearance"] = math.inf
        return out

    ey = log.column("e_y")
    s_d = log.column("s_d")
    out["min_clearance"] = float(log.min_clearance)
    out["max_abs_ey"] = float(np.max(np.abs(ey)))

    if config.obstacles:
        # overshoot: the swing past the centerline once the vehicle has
        # cleared the last obstacle and come back across the path
        s_clear = max(ob.s_end for ob in config.obstacles) + config.params.L
        after = np.where(s_d > s_clear)[0]
        overshoot = float("nan")
        if after.size:
            tail = ey[after[0]:]
            sign0 = np.sign(tail[0]) or 1.0
            crossed = np.where(np.sign(tail) != sign0)[0]
            overshoot = float(np.max(np.abs(tail[crossed[0]:]))) if crossed.size else 0.0
        out["overshoot"] = overshoot
    else:
        out["overshoot"] = 0.0

    stab = assemble_stab_constraints(config.params, config.speed,
                                     mu=config.mu_controller)
    states = np.zeros((len(log.rows), 5))
    states[:, 0] = log.column("ydot_p")
    states[:, 1] = log.column("phidot")
    margins = stab.G[None, :] - states @ stab.E.T
    out["envelope_violation_fraction"] = float(np.mean(np.any(margins < 0.0, axis=1)))

    eps = np.stack([log.column(f"eps_stab_{r}") for r in range(1, 5)], axis=1)
    with np.errstate(invalid="ignore"):
        out["eps_stab_zero_fraction"] = float(
            np.mean(np.all(np.nan_to_num(eps, nan=1.0) < SLACK_ZERO_TOL, axis=1)))
        out["max_eps_coll"] = float(np.nanmax(log.column("eps_coll")))

    out["max_abs_ay"] = float(np.max(np.abs(log.column("ay"))))
    solve = log.column("solve_ms")
    out["solve_ms_p50"] = float(np.percentile(solve, 50))
    out["solve_ms_p95"] = float(np.percentile(solve, 95))
    out["solve_ms_max"] = float(np.max(solve))
    return out


def csv_metrics(header: list[str], data: np.ndarray) -> dict:
    """Metrics computable from a run.csv alone (no scenario context)."""
    col = {name: data[:, i] for i, name in enumerate(header)}
    out = {"steps": int(data.shape[0])}
    if data.shape[0] == 0:
        return out
    out["sim_time"] = float(col["t"][-1] - col["t"][0]) + 0.03
    out["max_abs_ey"] = float(np.max(np.abs(col["e_y"])))
    out["max_abs_ay"] = float(np.max(np.abs(col["ay"])))
    out["final_ey"] = float(col["e_y"][-1])
    with np.errstate(invalid="ignore"):
        out["max_eps_coll"] = float(np.nanmax(col["eps_coll"]))
    solve = col["solve_ms"]
    out["solve_ms_p50"] = float(np.percentile(solve, 50))
    out["solve_ms_p95"] = float(np.percentile(solve, 95))
    out["solve_ms_max"] = float(np.max(solve))
    return out


def compare_metrics(a: dict, b: dict) -> dict:
    """Side-by-side comparison; numeric fields get a delta (b - a)."""
    out = {}
    for key in sorted(set(a) | set(b)):
        va, vb = a.get(key), b.get(key)
        out[f"a.{key}"] = va
        out[f"b.{key}"] = vb
        if isinstance(va, (int, float)) and isinstance(vb, (int, float)) \
                and not isinstance(va, bool) and not isinstance(vb, bool):
            out[f"delta.{key}"] = vb - va
    return out
