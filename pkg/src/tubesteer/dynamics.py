"""Nonlinear single-track lateral dynamics with a brush tire model.

Shared by the plant simulator (exact slip angles, exact front-force
rotation) and the controller's prediction-model builder (small-angle
forms). All tire functions are per tire; the factor of 2 for an axle
appears in the force balance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import VehicleParams, GlobalState


def tire_saturation_angle(C: float, mu: float, Fz: float) -> float:
    """Slip angle beyond which the brush tire is fully sliding, rad."""
    if C <= 0 or mu <= 0 or Fz <= 0:
        raise ValueError("C, mu, Fz must be positive")
    return math.atan(3.0 * mu * Fz / C)


def brush_tire_force(alpha: float, C: float, mu: float, Fz: float) -> float:
    """Lateral tire force for slip angle ``alpha``, N.

    Piecewise cubic in tan(alpha) below the saturation angle, constant
    -mu*Fz*sgn(alpha) beyond it. Odd, continuous, with zero slope at the
    saturation boundary; |force| <= mu*Fz everywhere.
    """
    if not math.isfinite(alpha):
        raise ValueError("slip angle must be finite")
    if C <= 0 or mu <= 0 or Fz <= 0:
        raise ValueError("C, mu, Fz must be positive")
    theta = 3.0 * mu * Fz / C
    t = math.tan(alpha)
    if abs(t) < theta:
        return -C * t + (C / theta) * abs(t) * t - (C / (3.0 * theta * theta)) * t ** 3
    return -mu * Fz * math.copysign(1.0, alpha)


def brush_tire_slope(alpha: float, C: float, mu: float, Fz: float) -> float:
    """Local cornering stiffness -dF/dalpha at ``alpha``, N/rad.

    Equals C at zero slip and 0 in full saturation.
    """
    theta = 3.0 * mu * Fz / C
    t = math.tan(alpha)
    if abs(t) >= theta:
        return 0.0
    # dF/dt, then chain rule through t = tan(alpha)
    dF_dt = -C + 2.0 * (C / theta) * abs(t) - (C / (theta * theta)) * t * t
    return -dF_dt * (1.0 + t * t)


def inverse_tire_force(F_des: float, C: float, mu: float, Fz: float) -> float:
    """Slip angle producing lateral force ``F_des``, clamped to saturation.

    On the monotone branch the brush cubic inverts in closed form:
    with r = tan(alpha)/theta, the force is -mu*Fz*(1 - (1-r)^3) for
    alpha >= 0, so r = 1 - cbrt(1 + F/(mu*Fz)).
    """
    Fmax = mu * Fz
    if F_des <= -Fmax:
        return tire_saturation_angle(C, mu, Fz)
    if F_des >= Fmax:
        return -tire_saturation_angle(C, mu, Fz)
    theta = 3.0 * mu * Fz / C
    # force is odd with F(alpha>0) <= 0; solve on the matching branch
    sign = -1.0 if F_des > 0.0 else 1.0
    r = 1.0 - (1.0 - abs(F_des) / Fmax) ** (1.0 / 3.0)
    return sign * math.atan(theta * r)


def slip_angles(state: GlobalState, delta: float, params: VehicleParams,
                small_angle: bool = False) -> tuple[float, float]:
    """Front and rear slip angles (alpha_f, alpha_r), rad.

    ``small_angle=True`` gives the linear-in-states form used by the
    controller model; the default exact form is what the plant uses.
    """
    if state.x_dot <= 0.0:
        raise ValueError("x_dot must be positive")
    num_f = state.y_dot + params.a * state.phi_dot
    num_r = state.y_dot - params.b * state.phi_dot
    if small_angle:
        return num_f / state.x_dot - delta, num_r / state.x_dot
    return math.atan(num_f / state.x_dot) - delta, math.atan(num_r / state.x_dot)


def cp_lateral_velocity(y_dot: float, phi_dot: float, p: float) -> float:
    """Lateral velocity at the center of percussion: y_dot + p*phi_dot."""
    return y_dot + p * phi_dot


@dataclass
class PlantState:
    """Full simulator state: body velocities, path errors, global pose."""

    y_dot: float = 0.0
    phi_dot: float = 0.0
    e_phi: float = 0.0
    e_y: float = 0.0
    s_d: float = 0.0
    x: float = 0.0
    y: float = 0.0
    phi: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.y_dot, self.phi_dot, self.e_phi, self.e_y,
                         self.s_d, self.x, self.y, self.phi])

    @classmethod
    def from_array(cls, v) -> "PlantState":
        return cls(*np.asarray(v, dtype=float).tolist())


def plant_derivative(state: PlantState, delta: float, x_dot: float,
                     params: VehicleParams, mu_actual: float,
                     curvature_fn, rear_force_extra: float = 0.0) -> np.ndarray:
    """Time derivative of the full plant state.

    Nonlinear force balance and path-error kinematics with exact slip
    angles and exact front-force rotation through the steering angle.
    Longitudinal speed is held constant (no drive/brake model).
    ``rear_force_extra`` adds a per-tire rear force perturbation, used for
    sensitivity checks and disturbance studies.
    """
    if x_dot <= 0.0:
        raise ValueError("x_dot must be positive")
    kappa = curvature_fn(state.s_d)
    denom = 1.0 - kappa * state.e_y
    if denom <= 0.0:
        raise ValueError("path frame singular: 1 - kappa*e_y <= 0")

    gs = GlobalState(x_dot=x_dot, y_dot=state.y_dot, phi_dot=state.phi_dot)
    alpha_f, alpha_r = slip_angles(gs, delta, params)
    F_cf = brush_tire_force(alpha_f, params.C_af, mu_actual, params.Fz_f)
    F_yr = brush_tire_force(alpha_r, params.C_ar, mu_actual, params.Fz_r) + rear_force_extra
    # front force rotated into the body frame; no longitudinal tire force
    F_yf = F_cf * math.cos(delta)

    y_ddot = -x_dot * state.phi_dot + (2.0 * F_yf + 2.0 * F_yr) / params.m
    phi_ddot = (2.0 * params.a * F_yf - 2.0 * params.b * F_yr) / params.Iz

    c, s = math.cos(state.e_phi), math.sin(state.e_phi)
    s_d_dot = (x_dot * c - state.y_dot * s) / denom
    e_phi_dot = state.phi_dot - kappa * s_d_dot
    e_y_dot = state.y_dot * c + x_dot * s

    x_g_dot = x_dot * math.cos(state.phi) - state.y_dot * math.sin(state.phi)
    y_g_dot = x_dot * math.sin(state.phi) + state.y_dot * math.cos(state.phi)

    return np.array([y_ddot, phi_ddot, e_phi_dot, e_y_dot, s_d_dot,
                     x_g_dot, y_g_dot, state.phi_dot])


def rk4_step(state: PlantState, delta: float, x_dot: float, params: VehicleParams,
             mu_actual: float, curvature_fn, h: float) -> PlantState:
    """One fixed-step RK4 integration step of the plant."""
    x0 = state.as_array()

    def f(v):
        return plant_derivative(PlantState.from_array(v), delta, x_dot,
                                params, mu_actual, curvature_fn)

    k1 = f(x0)
    k2 = f(x0 + 0.5 * h * k1)
    k3 = f(x0 + 0.5 * h * k2)
    k4 = f(x0 + h * k3)
    return PlantState.from_array(x0 + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
