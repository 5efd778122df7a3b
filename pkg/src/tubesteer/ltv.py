"""Per-step linear time-varying prediction models.

Each controller execution rebuilds one model per prediction step: the
rear tire is re-linearized around slip angles predicted by the previous
optimization (successive linearization), the path-frame data is frozen at
the previous step's predicted values, and the resulting continuous
affine system xdot = A x + B u + L is discretized exactly with a
zero-order hold via the matrix exponential.

State order: X = [ydot_p, phidot, e_phi, e_y, s_d]; the input u is the
per-tire front lateral force.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .dynamics import brush_tire_force, brush_tire_slope
from .params import ErrorState, TimeGrid, VehicleParams

NX = 5
N_STAB = 4  # [ydot_p, phidot, e_phi, e_y]; s_d is the uncontrollable tail


@dataclass(frozen=True)
class RearTireLinearization:
    alpha_bar: float  # linearization slip angle, rad
    F_bar: float      # force at alpha_bar, N
    C_bar: float      # local cornering stiffness -dF/dalpha, N/rad


@dataclass
class FrameData:
    """Frozen path-frame quantities for one prediction step."""

    e_phi: float
    e_y: float
    s_d: float


@dataclass
class StepModel:
    A: np.ndarray
    B: np.ndarray
    L: np.ndarray
    A_d: np.ndarray
    B_d: np.ndarray
    L_d: np.ndarray
    dt: float
    linearization: RearTireLinearization
    frame: FrameData


def linearize_rear_tire(alpha_bar: float, params: VehicleParams) -> RearTireLinearization:
    F_bar = brush_tire_force(alpha_bar, params.C_ar, params.mu, params.Fz_r)
    C_bar = brush_tire_slope(alpha_bar, params.C_ar, params.mu, params.Fz_r)
    return RearTireLinearization(alpha_bar=alpha_bar, F_bar=F_bar, C_bar=C_bar)


def build_continuous_matrices(lin: RearTireLinearization, frame: FrameData,
                              x_dot_p: float, params: VehicleParams,
                              kappa_fn) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Continuous (A, B, L) around the frozen frame and tire linearization.

    The yaw-rate row carries the local cornering stiffness C_bar; the
    distance row uses the frozen heading/lateral errors, and its affine
    term is the plain forward speed.
    """
    kappa = kappa_fn(frame.s_d)
    denom = 1.0 - kappa * frame.e_y
    if denom <= 0.0:
        raise ValueError("path frame singular: 1 - kappa*e_y <= 0")
    m, Iz, a, b, p = params.m, params.Iz, params.a, params.b, params.p

    A = np.zeros((NX, NX))
    A[0, 1] = -x_dot_p
    A[1, 0] = 2.0 * b * lin.C_bar / (Iz * x_dot_p)
    A[1, 1] = -2.0 * b * (b + p) * lin.C_bar / (Iz * x_dot_p)
    A[2, 1] = 1.0
    A[3, 0] = 1.0
    A[3, 1] = -p
    A[3, 2] = x_dot_p
    A[4, 0] = -frame.e_phi / denom
    A[4, 1] = p * frame.e_phi / denom

    B = np.zeros((NX, 1))
    B[0, 0] = 2.0 / m + 2.0 * a / (m * b)
    B[1, 0] = 2.0 * a / Iz

    L = np.zeros((NX, 1))
    L[1, 0] = -2.0 * b * lin.F_bar / Iz - (2.0 * b * lin.C_bar / Iz) * lin.alpha_bar
    L[2, 0] = -x_dot_p * kappa
    L[4, 0] = x_dot_p
    return A, B, L


def discretize_zoh(A: np.ndarray, B: np.ndarray, L: np.ndarray,
                   dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization of xdot = A x + B u + L.

    Exponentiates the augmented block matrix [[A, B, L], [0, 0, 0]] * dt;
    the top blocks are (A_d, B_d, L_d).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n = A.shape[0]
    nu = B.shape[1]
    M = np.zeros((n + nu + 1, n + nu + 1))
    M[:n, :n] = A
    M[:n, n:n + nu] = B
    M[:n, n + nu:] = L
    E = expm(M * dt)
    return E[:n, :n], E[:n, n:n + nu], E[:n, n + nu:]


def predict_slip_sequence(previous_slips: np.ndarray | None,
                          measured_alpha_r: float, grid: TimeGrid) -> np.ndarray:
    """Rear slip angles to linearize around, one per prediction step.

    Warm: shift the previous step's predicted slips by one controller
    period and hold the last value. Cold: every step uses the measured
    rear slip angle.
    """
    if previous_slips is None:
        return np.full(grid.N_p, measured_alpha_r)
    prev = np.asarray(previous_slips, dtype=float)
    if prev.shape[0] != grid.N_p:
        raise ValueError("previous slip sequence has wrong length")
    return np.concatenate([prev[1:], prev[-1:]])


def rear_slip_from_state(x: np.ndarray, x_dot_p: float, params: VehicleParams) -> float:
    """Small-angle rear slip from an error-state vector at CP quantities."""
    ydot = x[0] - params.p * x[1]  # back to CG lateral velocity
    return (ydot - params.b * x[1]) / x_dot_p


def shift_frames(previous_states: np.ndarray | None, measurement: ErrorState,
                 grid: TimeGrid) -> list[FrameData]:
    """Frozen frame data per model step, shifted from the previous solution.

    ``previous_states`` is the (N_p+1, 5) nominal trajectory of the last
    solve. Model step i freezes the frame at what was predicted for the
    same wall-clock time, i.e. previous state i+2, holding the last
    available value for the tail. Cold start holds the measurement.
    """
    if previous_states is None:
        f = FrameData(measurement.e_phi, measurement.e_y, measurement.s_d)
        return [f] * grid.N_p
    prev = np.asarray(previous_states, dtype=float)
    frames = []
    for i in range(grid.N_p):
        j = min(i + 2, prev.shape[0] - 1)
        frames.append(FrameData(prev[j, 2], prev[j, 3], prev[j, 4]))
    return frames


def build_prediction_models(measurement: ErrorState, previous_states: np.ndarray | None,
                            previous_slips: np.ndarray | None, x_dot_p: float,
                            params: VehicleParams, grid: TimeGrid,
                            kappa_fn) -> list[StepModel]:
    """Full model pipeline: slips -> linearizations -> frames -> ZOH models."""
    measured_alpha = rear_slip_from_state(measurement.as_array(), x_dot_p, params)
    slips = predict_slip_sequence(previous_slips, measured_alpha, grid)
    frames = shift_frames(previous_states, measurement, grid)
    models = []
    for i in range(grid.N_p):
        lin = linearize_rear_tire(float(slips[i]), params)
        A, B, L = build_continuous_matrices(lin, frames[i], x_dot_p, params, kappa_fn)
        A_d, B_d, L_d = discretize_zoh(A, B, L, grid.dt(i))
        models.append(StepModel(A=A, B=B, L=L, A_d=A_d, B_d=B_d, L_d=L_d,
                                dt=grid.dt(i), linearization=lin, frame=frames[i]))
    return models
