"""Closed-loop simulation: controller against the nonlinear plant.

The controller runs every 30 ms on (optionally noisy) measurements; the
steering command is held while the plant integrates with fixed-step RK4.
Pop-up obstacles stay hidden from the controller until their appearance
time but are physical from the start, which is exactly what makes late
detection dangerous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .controller import ControllerConfig, RmpcController
from .dynamics import PlantState, brush_tire_force, rk4_step, slip_angles
from .geometry import obstacle_quad, quad_clearance, vehicle_footprint
from .params import ErrorState, GlobalState
from .path import path_to_global
from .scenario import ScenarioConfig, curve_equilibrium

CSV_COLUMNS = ["t", "x", "y", "phi", "ydot_p", "phidot", "e_phi", "e_y", "s_d",
               "delta", "u_star", "c0", "eps_coll", "eps_stab_1", "eps_stab_2",
               "eps_stab_3", "eps_stab_4", "ey_min_0", "ey_max_0", "h_nc",
               "ay", "solve_ms"]

MAX_CONSECUTIVE_FALLBACKS = 5


@dataclass
class RunLog:
    config: ScenarioConfig
    rows: list = field(default_factory=list)          # dict per controller step
    one_step_models: list = field(default_factory=list)  # (A_d, B_d, L_d, x, u)
    debug: list = field(default_factory=list)
    collision: bool = False
    truncated_reason: str = ""
    min_clearance: float = math.inf

    @property
    def array(self) -> np.ndarray:
        return np.array([[row[c] for c in CSV_COLUMNS] for row in self.rows])

    def column(self, name: str) -> np.ndarray:
        idx = CSV_COLUMNS.index(name)
        return self.array[:, idx] if self.rows else np.zeros(0)

    @property
    def exit_code(self) -> int:
        if self.collision:
            return 2
        if self.truncated_reason:
            return 3
        return 0


def measure(plant: PlantState, params, rng, config: ScenarioConfig) -> ErrorState:
    x = np.array([plant.y_dot + params.p * plant.phi_dot, plant.phi_dot,
                  plant.e_phi, plant.e_y, plant.s_d])
    if config.sensor_noise:
        share = config.sensor_share * config.W.half_widths
        x = x + rng.uniform(-share, share)
    return ErrorState.from_array(x)


def _inject_disturbance(plant: PlantState, rng, config: ScenarioConfig,
                        params) -> PlantState:
    w = rng.uniform(-1.0, 1.0, 5) * config.disturbance_scale * config.W.half_widths
    ydp = plant.y_dot + params.p * plant.phi_dot + w[0]
    phidot = plant.phi_dot + w[1]
    e_phi = plant.e_phi + w[2]
    e_y = plant.e_y + w[3]
    s_d = plant.s_d + w[4]
    x, y, phi = path_to_global(e_y, e_phi, s_d, config.path)
    return PlantState(y_dot=ydp - params.p * phidot, phi_dot=phidot,
                      e_phi=e_phi, e_y=e_y, s_d=s_d, x=x, y=y, phi=phi)


def lateral_acceleration(plant: PlantState, delta: float,
                         config: ScenarioConfig) -> float:
    """Body lateral acceleration (vydot + vx*r) = total tire force / mass."""
    params = config.params
    gs = GlobalState(x_dot=config.speed, y_dot=plant.y_dot, phi_dot=plant.phi_dot)
    af, ar = slip_angles(gs, delta, params)
    Fyf = brush_tire_force(af, params.C_af, config.mu_plant, params.Fz_f) * math.cos(delta)
    Fyr = brush_tire_force(ar, params.C_ar, config.mu_plant, params.Fz_r)
    return (2.0 * Fyf + 2.0 * Fyr) / params.m


def initial_plant_state(config: ScenarioConfig) -> tuple[PlantState, float]:
    x0, y0, phi0 = path_to_global(0.0, 0.0, 0.0, config.path)
    if config.initial_state == "equilibrium":
        y_dot, phi_dot, delta = curve_equilibrium(config)
    else:
        y_dot, phi_dot, delta = 0.0, 0.0, 0.0
    return PlantState(y_dot=y_dot, phi_dot=phi_dot, x=x0, y=y0, phi=phi0), delta


def _clearance(plant: PlantState, config: ScenarioConfig, quads) -> float:
    if not quads:
        return math.inf
    foot = vehicle_footprint(plant.x, plant.y, plant.phi, config.params)
    near = math.inf
    for s_start, s_end, quad in quads:
        if plant.s_d < s_start - 30.0 or plant.s_d > s_end + 30.0:
            continue
        near = min(near, quad_clearance(foot, quad))
    return near


def run_scenario(config: ScenarioConfig, collect_debug: bool = False,
                 collect_models: bool = True) -> RunLog:
    controller = RmpcController(ControllerConfig(
        params=config.params, grid=config.grid, path=config.path,
        road=config.road, obstacles=config.obstacles, x_dot_p=config.speed,
        mu=config.mu_controller, W=config.W, mode=config.mode))

    plant, delta = initial_plant_state(config)
    controller.prev_delta = delta
    rng = np.random.default_rng(config.seed)
    log = RunLog(config=config)
    quads = [(ob.s_start, ob.s_end, obstacle_quad(ob, config.path))
             for ob in config.obstacles]

    T_s = config.grid.T_ss
    n_ticks = int(math.floor(config.duration / T_s))
    substeps = config.substeps_per_tick
    h = config.plant_substep
    fallbacks = 0

    for k in range(n_ticks):
        t = k * T_s
        meas = measure(plant, config.params, rng, config)
        delta, sol, diag = controller.step(meas, t)

        if diag.fallback:
            fallbacks += 1
        else:
            fallbacks = 0

        if collect_models and sol is not None:
            # one-step prediction pieces for disturbance identification
            log.one_step_models.append({
                "k": k, "x": meas.as_array().copy(), "u": sol.u_star,
                "A_d": sol.one_step[0], "B_d": sol.one_step[1],
                "L_d": sol.one_step[2]})
        if collect_debug and sol is not None:
            entry = {"k": k, "tube": sol.tube, "lp_count": diag.lp_count,
                     "kkt": (sol.stat_residual, sol.pfeas_residual,
                             sol.comp_residual),
                     "transitions": sol.transitions}
            if k % 50 == 0:
                entry["qp"] = sol.qp_problem
            log.debug.append(entry)

        ay = lateral_acceleration(plant, delta, config)
        tube = sol.tube if sol is not None else None
        row = {
            "t": t, "x": plant.x, "y": plant.y, "phi": plant.phi,
            "ydot_p": meas.ydot_p, "phidot": meas.phidot, "e_phi": meas.e_phi,
            "e_y": meas.e_y, "s_d": meas.s_d, "delta": delta,
            "u_star": sol.u_star if sol else float("nan"),
            "c0": float(sol.c[0]) if sol else float("nan"),
            "eps_coll": sol.eps_coll if sol else float("nan"),
            "eps_stab_1": float(sol.eps_stab[0]) if sol else float("nan"),
            "eps_stab_2": float(sol.eps_stab[1]) if sol else float("nan"),
            "eps_stab_3": float(sol.eps_stab[2]) if sol else float("nan"),
            "eps_stab_4": float(sol.eps_stab[3]) if sol else float("nan"),
            "ey_min_0": float(tube.final_min[0]) if tube is not None else float("nan"),
            "ey_max_0": float(tube.final_max[0]) if tube is not None else float("nan"),
            "h_nc": float(tube.h_hi[config.grid.N_c]) if tube is not None else float("nan"),
            "ay": ay,
            "solve_ms": (diag.tube_time + diag.qp_time) * 1e3,
        }
        log.rows.append(row)

        if fallbacks >= MAX_CONSECUTIVE_FALLBACKS:
            log.truncated_reason = f"controller failed {fallbacks} steps in a row"
            break

        try:
            for _ in range(substeps):
                plant = rk4_step(plant, delta, config.speed, config.params,
                                 config.mu_plant, config.path.curvature_at, h)
                clear = _clearance(plant, config, quads)
                log.min_clearance = min(log.min_clearance, clear)
                if clear < 0.0:
                    log.collision = True
                    break
        except ValueError as exc:
            log.truncated_reason = f"plant error: {exc}"
            break
        if log.collision:
            break
        if config.plant_disturbance:
            plant = _inject_disturbance(plant, rng, config, config.params)

    return log
