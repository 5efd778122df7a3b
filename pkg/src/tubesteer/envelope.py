"""Stable-handling envelope: linear bounds on (ydot_p, phidot).

Two mechanisms bound the stabilizable states: the rear slip angle is kept
inside the linear tire regime (a coupled lateral-velocity/yaw-rate bound),
and the yaw rate is capped at its steady-state achievable value. Together
the four rows close a polygon around the origin in the phase plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import tire_saturation_angle
from .params import GRAVITY, VehicleParams

ROW_LABELS = ("latvel+", "latvel-", "yaw+", "yaw-")


def yaw_rate_bound(mu: float, x_dot_p: float, params: VehicleParams | None = None,
                   neutral_steer: bool = True) -> float:
    """Maximum steady-state yaw rate, rad/s.

    With the constant-speed, neutral-steer assumption both axles saturate
    together and the bound reduces to mu*g/x_dot_p. The general form takes
    the minimum over the two axles using static axle loads.
    """
    if x_dot_p <= 0.0:
        raise ValueError("x_dot_p must be positive")
    if neutral_steer or params is None:
        return mu * GRAVITY / x_dot_p
    F_f = mu * 2.0 * params.Fz_f
    F_r = mu * 2.0 * params.Fz_r
    front = F_f * (1.0 + params.a / params.b) / (params.m * x_dot_p)
    rear = F_r * (1.0 + params.b / params.a) / (params.m * x_dot_p)
    return min(front, rear)


def lat_vel_rows(params: VehicleParams, x_dot_p: float,
                 mu: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Rows bounding |ydot_p - (p+b)*phidot| <= x_dot_p * alpha_r_sat."""
    mu = params.mu if mu is None else mu
    alpha_sat = tire_saturation_angle(params.C_ar, mu, params.Fz_r)
    bound = x_dot_p * alpha_sat
    E = np.zeros((2, 5))
    E[0, 0], E[0, 1] = 1.0, -(params.p + params.b)
    E[1, 0], E[1, 1] = -1.0, (params.p + params.b)
    return E, np.array([bound, bound])


@dataclass
class StabConstraints:
    """E_stab X <= G_stab with rows ordered [latvel+, latvel-, yaw+, yaw-]."""

    E: np.ndarray  # (4, 5)
    G: np.ndarray  # (4,)

    def margins(self, x: np.ndarray) -> np.ndarray:
        """G - E x; nonnegative inside the envelope."""
        return self.G - self.E @ np.asarray(x, dtype=float)

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(self.margins(x) >= -tol))


def assemble_stab_constraints(params: VehicleParams, x_dot_p: float,
                              mu: float | None = None,
                              neutral_steer: bool = True) -> StabConstraints:
    mu = params.mu if mu is None else mu
    E_lv, G_lv = lat_vel_rows(params, x_dot_p, mu)
    r_max = yaw_rate_bound(mu, x_dot_p, params, neutral_steer=neutral_steer)
    E = np.zeros((4, 5))
    E[:2] = E_lv
    E[2, 1] = 1.0
    E[3, 1] = -1.0
    G = np.concatenate([G_lv, [r_max, r_max]])
    return StabConstraints(E=E, G=G)
