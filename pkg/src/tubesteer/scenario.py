"""Scenario configuration: INI-style files describing one closed-loop run."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import inverse_tire_force
from .params import TimeGrid, VehicleParams
from .path import PathSegment, ReferencePath, RoadBounds
from .tube import DisturbanceSet, Obstacle


class ConfigError(ValueError):
    """Malformed or inconsistent scenario file."""


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    speed: float = 18.0               # x_dot_p, m/s
    mu_controller: float = 0.55
    mu_plant: float = 0.55
    mode: str = "rmpc"
    duration: float = 10.0            # s
    plant_substep: float = 0.001      # s
    seed: int = 1
    initial_state: str = "equilibrium"   # or "centerline"
    path: ReferencePath = field(default_factory=lambda: ReferencePath(
        [PathSegment(500.0, 0.0)]))
    road: RoadBounds = field(default_factory=lambda: RoadBounds(
        left=[5.4], right=[-1.8]))
    obstacles: list[Obstacle] = field(default_factory=list)
    W: DisturbanceSet = field(default_factory=DisturbanceSet)
    plant_disturbance: bool = False
    disturbance_scale: float = 1.0
    sensor_noise: bool = False
    sensor_share: float = 0.2
    grid: TimeGrid = field(default_factory=TimeGrid)
    params: VehicleParams = field(default_factory=VehicleParams)

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        if self.mode not in ("rmpc", "dmpc"):
            raise ConfigError("mode must be rmpc or dmpc")
        n = round(self.grid.T_ss / self.plant_substep)
        if n < 1 or abs(n * self.plant_substep - self.grid.T_ss) > 1e-12:
            raise ConfigError("plant substep must divide the controller period")

    @property
    def substeps_per_tick(self) -> int:
        return round(self.grid.T_ss / self.plant_substep)


def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def parse_scenario(text: str, name: str = "scenario") -> ScenarioConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse scenario: {exc}") from exc

    try:
        sc = cp["scenario"] if cp.has_section("scenario") else {}
        kwargs = {}
        kwargs["name"] = sc.get("name", name)
        for key in ("speed", "mu_controller", "mu_plant", "duration",
                    "plant_substep", "disturbance_scale", "sensor_share"):
            if key in sc:
                kwargs[key] = float(sc[key])
        if "mode" in sc:
            kwargs["mode"] = sc["mode"].strip().lower()
        if "seed" in sc:
            kwargs["seed"] = int(sc["seed"])
        if "initial_state" in sc:
            kwargs["initial_state"] = sc["initial_state"].strip().lower()
        for key in ("plant_disturbance", "sensor_noise"):
            if key in sc:
                kwargs[key] = sc[key].strip().lower() in ("on", "true", "1", "yes")

        if cp.has_section("path"):
            anchor = _parse_floats(cp["path"].get("anchor", "0 0 0"))
            segs = []
            for pair in cp["path"].get("segments", "500 0").split(";"):
                vals = _parse_floats(pair)
                if len(vals) != 2:
                    raise ConfigError(f"bad path segment: {pair!r}")
                segs.append(PathSegment(vals[0], vals[1]))
            kwargs["path"] = ReferencePath(segs, x0=anchor[0], y0=anchor[1],
                                           phi0=anchor[2])

        if cp.has_section("road"):
            left = _parse_floats(cp["road"].get("left", "5.4"))
            right = _parse_floats(cp["road"].get("right", "-1.8"))
            breaks = _parse_floats(cp["road"].get("breaks", ""))
            kwargs["road"] = RoadBounds(left=left, right=right, breaks=breaks)

        obstacles = []
        for section in cp.sections():
            if not section.startswith("obstacle"):
                continue
            ob = cp[section]
            obstacles.append(Obstacle(
                s_start=float(ob["s_start"]), s_end=float(ob["s_end"]),
                ey_near=float(ob.get("ey_near", "-1.0")),
                ey_far=float(ob.get("ey_far", "1.0")),
                appear_time=float(ob.get("appear_time", "0.0"))))
        kwargs["obstacles"] = obstacles

        if cp.has_section("disturbance"):
            dz = cp["disturbance"]
            if "w" in dz:
                w = np.array(_parse_floats(dz["w"]))
                kwargs["W"] = DisturbanceSet(w)
        return ScenarioConfig(**kwargs)
    except ConfigError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc


def load_scenario(fname) -> ScenarioConfig:
    with open(fname, "r") as fh:
        text = fh.read()
    import os

    return parse_scenario(text, name=os.path.splitext(os.path.basename(fname))[0])


def disturbance_fragment(W: DisturbanceSet) -> str:
    """Reusable scenario-file fragment carrying an identified bound."""
    vals = " ".join(repr(float(v)) for v in W.half_widths)
    return f"[disturbance]\nw = {vals}\n"


def curve_equilibrium(config: ScenarioConfig):
    """Steady cornering state on the path at s_d = 0.

    Solves the constant-speed force balance on the initial curvature:
    yaw rate follows the arc, lateral forces split by the moment balance,
    slip angles invert the plant-side tire curves, and the steering angle
    closes the front-axle kinematics (few fixed-point rounds for the
    cos(delta) rotation).
    """
    p = config.params
    mu = config.mu_plant
    xd = config.speed
    kappa = config.path.curvature_at(0.0)
    phidot = kappa * xd
    F_total = p.m * xd * xd * kappa / 2.0      # per-side sum F_yf + F_yr
    F_yf = F_total * p.b / p.L
    F_yr = F_total * p.a / p.L
    alpha_r = inverse_tire_force(F_yr, p.C_ar, mu, p.Fz_r)
    y_dot = xd * math.tan(alpha_r) + p.b * phidot
    delta = 0.0
    for _ in range(5):
        F_cf = F_yf / math.cos(delta)
        alpha_f = inverse_tire_force(F_cf, p.C_af, mu, p.Fz_f)
        delta = math.atan((y_dot + p.a * phidot) / xd) - alpha_f
    return y_dot, phidot, delta
