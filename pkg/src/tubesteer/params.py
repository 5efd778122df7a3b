"""Vehicle parameters and the fixed prediction time grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GRAVITY = 9.81  # m/s^2


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of the single-track vehicle.

    All tire quantities (cornering stiffness, normal load) are per tire;
    the factor of 2 for the two tires on an axle lives in the dynamics.
    ``p`` is the distance from the CG to the center of percussion,
    p = Iz / (m * b), the point where rear-tire force effects on lateral
    acceleration cancel.
    """

    m: float = 1260.0        # mass, kg
    Iz: float = 1343.1       # yaw inertia, kg m^2
    a: float = 1.04          # CG to front axle, m
    b: float = 1.56          # CG to rear axle, m
    wd: float = 1.695        # vehicle width, m
    C_af: float = 51650.0    # front cornering stiffness, N/rad (per tire)
    C_ar: float = 38160.0    # rear cornering stiffness, N/rad (per tire)
    Fz_f: float = 2704.4     # front normal load, N (per tire)
    Fz_r: float = 2704.4     # rear normal load, N (per tire)
    mu: float = 0.55         # tire-road friction coefficient

    def __post_init__(self):
        for name in ("m", "Iz", "a", "b", "wd", "C_af", "C_ar", "Fz_f", "Fz_r", "mu"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    @property
    def L(self) -> float:
        """Wheelbase, m."""
        return self.a + self.b

    @property
    def p(self) -> float:
        """CG-to-center-of-percussion distance, m."""
        return self.Iz / (self.m * self.b)

    def with_mu(self, mu: float) -> "VehicleParams":
        from dataclasses import replace

        return replace(self, mu=mu)


@dataclass(frozen=True)
class TimeGrid:
    """Variable-step prediction grid: N_ss short steps then N_ls long ones.

    The controller executes every T_ss seconds; only the first N_c steps
    carry free inputs.
    """

    T_ss: float = 0.03
    T_ls: float = 0.2
    N_ss: int = 27
    N_ls: int = 6
    N_c: int = 10

    def __post_init__(self):
        if self.N_c > self.N_ss:
            raise ValueError("control horizon must fit inside the short-step region")
        if self.T_ss <= 0 or self.T_ls <= 0:
            raise ValueError("step sizes must be positive")

    @property
    def N_p(self) -> int:
        return self.N_ss + self.N_ls

    def dt(self, i: int) -> float:
        """Duration of prediction step i (0-based)."""
        return self.T_ss if i < self.N_ss else self.T_ls

    @property
    def durations(self) -> np.ndarray:
        return np.array([self.dt(i) for i in range(self.N_p)])

    @property
    def horizon(self) -> float:
        """Total predicted duration, s."""
        return self.N_ss * self.T_ss + self.N_ls * self.T_ls


@dataclass
class ErrorState:
    """Controller state X = [ydot_p, phidot, e_phi, e_y, s_d]."""

    ydot_p: float = 0.0   # lateral velocity at CP, m/s
    phidot: float = 0.0   # yaw rate, rad/s
    e_phi: float = 0.0    # heading error, rad
    e_y: float = 0.0      # lateral error, m (left positive)
    s_d: float = 0.0      # distance along the path, m

    def as_array(self) -> np.ndarray:
        return np.array([self.ydot_p, self.phidot, self.e_phi, self.e_y, self.s_d])

    @classmethod
    def from_array(cls, x) -> "ErrorState":
        x = np.asarray(x, dtype=float)
        return cls(*x.tolist())


@dataclass
class GlobalState:
    """World-frame vehicle state. x_dot > 0 (forward motion) is assumed."""

    x: float = 0.0        # global position, m
    y: float = 0.0
    phi: float = 0.0      # heading, rad
    y_dot: float = 0.0    # body lateral velocity at CG, m/s
    x_dot: float = 18.0   # body longitudinal velocity, m/s
    phi_dot: float = 0.0  # yaw rate, rad/s
