"""Obstacle-free corridor construction, discretization, robust tightening.

The corridor around the reference path combines road edges with obstacle
edges (left pass only), becomes a per-prediction-step interval on the
lateral error by sampling at the predicted path distances, shrinks by the
worst-case disturbance reachable error (tightening), and finally by the
heading-dependent effective half-width of the vehicle.

Tightening propagates the closed-loop error recursion e+ = Phi e + w with
w in an axis-aligned box. Sets are exact zonotopes, so each support value
is a weighted L1 norm; a counter tracks these maximizations one-for-one
with the linear programs they replace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import VehicleParams
from .path import RoadBounds

EY_INDEX = 3  # position of e_y in the state vector

DEFAULT_W = np.array([0.2, 0.14, 0.0175, 0.025, 0.025])


@dataclass
class Obstacle:
    s_start: float
    s_end: float
    ey_near: float   # edge closer to the road's right side
    ey_far: float    # edge the vehicle passes on (left pass)
    appear_time: float = 0.0
    stretched: bool = False

    def __post_init__(self):
        if self.s_end <= self.s_start:
            raise ValueError("obstacle needs s_start < s_end")
        if self.ey_far < self.ey_near:
            raise ValueError("obstacle needs ey_near <= ey_far")


@dataclass(frozen=True)
class DisturbanceSet:
    """Axis-aligned bound |w| <= half_widths on the one-step additive error."""

    half_widths: np.ndarray = field(default_factory=lambda: DEFAULT_W.copy())

    def __post_init__(self):
        hw = np.asarray(self.half_widths, dtype=float)
        if hw.shape != (5,) or np.any(hw < 0.0):
            raise ValueError("disturbance set needs 5 nonnegative half-widths")
        object.__setattr__(self, "half_widths", hw)

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.half_widths == 0.0))

    def scaled(self, s: float) -> "DisturbanceSet":
        return DisturbanceSet(self.half_widths * s)


@dataclass
class TubeBounds:
    """Per-step lateral-error intervals through the tightening pipeline."""

    raw_min: np.ndarray
    raw_max: np.ndarray
    h_lo: np.ndarray          # tightening applied to the lower edge
    h_hi: np.ndarray          # tightening applied to the upper edge
    width_margin: np.ndarray  # effective half-width correction per step
    final_min: np.ndarray
    final_max: np.ndarray
    infeasible: np.ndarray    # bool per step
    lp_count: int = 0


def stretch_obstacles(obstacles: list[Obstacle], speed: float,
                      sample_distances: np.ndarray,
                      sample_dts: np.ndarray) -> list[Obstacle]:
    """Grow obstacle spans by speed * dt_local on each side.

    dt_local is the largest grid step among the sampling gaps that touch
    the obstacle, so the discretized corridor can never step over it.
    Obstacles beyond the sampled horizon use the final (long) step.
    """
    s = np.asarray(sample_distances, dtype=float)
    dts = np.asarray(sample_dts, dtype=float)
    out = []
    for ob in obstacles:
        dt_local = dts[-1]
        hits = [dts[j] for j in range(len(s) - 1)
                if s[j + 1] >= ob.s_start and s[j] <= ob.s_end]
        if hits:
            dt_local = max(hits)
        elif ob.s_end < s[0]:
            dt_local = dts[0]
        grow = speed * dt_local
        out.append(Obstacle(ob.s_start - grow, ob.s_end + grow,
                            ob.ey_near, ob.ey_far, ob.appear_time, stretched=True))
    return out


def merge_obstacles(obstacles: list[Obstacle]) -> list[Obstacle]:
    """Union overlapping spans; merged lateral extent covers both."""
    if not obstacles:
        return []
    obs = sorted(obstacles, key=lambda o: o.s_start)
    merged = [obs[0]]
    for ob in obs[1:]:
        last = merged[-1]
        if ob.s_start <= last.s_end:
            merged[-1] = Obstacle(last.s_start, max(last.s_end, ob.s_end),
                                  min(last.ey_near, ob.ey_near),
                                  max(last.ey_far, ob.ey_far),
                                  min(last.appear_time, ob.appear_time),
                                  stretched=last.stretched or ob.stretched)
        else:
            merged.append(ob)
    return merged


@dataclass
class Corridor:
    """Piecewise-constant admissible interval of e_y over path distance."""

    road: RoadBounds
    obstacles: list[Obstacle]
    vehicle_width: float

    def interval_at(self, s_d: float) -> tuple[float, float, bool]:
        """(lo, hi, infeasible) of the left-pass corridor at s_d."""
        lo, hi = self.road.at(s_d)
        for ob in self.obstacles:
            if ob.s_start <= s_d <= ob.s_end:
                lo = max(lo, ob.ey_far)
        infeasible = (hi - lo) < self.vehicle_width
        return lo, hi, infeasible


def build_active_constraints(obstacles: list[Obstacle], road: RoadBounds,
                             vehicle_width: float) -> Corridor:
    """Left-pass corridor from merged (already stretched) obstacles."""
    return Corridor(road=road, obstacles=merge_obstacles(obstacles),
                    vehicle_width=vehicle_width)


def discretize_tube(corridor: Corridor,
                    s_d_predictions: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample the corridor at each predicted path distance (q = 2 per step)."""
    n = len(s_d_predictions)
    lo = np.empty(n)
    hi = np.empty(n)
    bad = np.zeros(n, dtype=bool)
    for i, s in enumerate(s_d_predictions):
        lo[i], hi[i], bad[i] = corridor.interval_at(float(s))
    return lo, hi, bad


def error_transition(models, gains) -> list[np.ndarray]:
    """Closed-loop transition Phi_i = A_d + B_d K for each model step."""
    if len(gains) != len(models):
        raise ValueError("one gain per model required")
    out = []
    for mdl, K in zip(models, gains):
        K = np.asarray(K, dtype=float).reshape(1, -1)
        if K.shape[1] != mdl.A_d.shape[0]:
            raise ValueError("gain does not match the state dimension")
        out.append(mdl.A_d + mdl.B_d @ K)
    return out


class _Zonotope:
    """Linear images of disturbance boxes accumulated over steps."""

    def __init__(self):
        self.generators: list[np.ndarray] = []  # each (5, 5)

    def propagate(self, Phi: np.ndarray):
        self.generators = [Phi @ G for G in self.generators]

    def add_box(self):
        self.generators.append(np.eye(5))

    def support(self, row: np.ndarray, half_widths: np.ndarray) -> float:
        return float(sum(np.abs(row @ G) @ half_widths for G in self.generators))


def tighten_bounds(raw_lo: np.ndarray, raw_hi: np.ndarray,
                   transitions: list[np.ndarray], W: DisturbanceSet,
                   N_c: int, freeze_tail: bool = True) -> tuple[np.ndarray, np.ndarray, int]:
    """Per-step tightening margins (h_lo, h_hi) and the maximization count.

    h_i for step i is the worst-case e_y reach of the disturbance-driven
    closed-loop error over i steps, computed exactly through zonotope
    support functions. With a frozen tail, h is computed through N_c and
    held; otherwise through the whole horizon. The counter increments once
    per support-function maximization, matching the linear programs an
    LP-based implementation would solve: q*(1 + 2*N) = 4N+2 for q = 2.
    """
    n_steps = len(raw_lo)          # N_p + 1 intervals, index 0 = current state
    N_full = n_steps - 1
    depth = min(N_c, N_full) if freeze_tail else N_full
    hw = W.half_widths
    rows = {"hi": np.zeros(5), "lo": np.zeros(5)}
    rows["hi"][EY_INDEX] = 1.0    # e_y <= raw_hi
    rows["lo"][EY_INDEX] = -1.0   # -e_y <= -raw_lo
    h = {"hi": np.zeros(n_steps), "lo": np.zeros(n_steps)}
    count = 0
    for key, row in rows.items():
        zono = _Zonotope()
        count += 1                # support of the (empty) initial error set
        for i in range(1, depth + 1):
            zono.propagate(transitions[i - 1])
            count += 1
            prop = zono.support(row, hw)
            count += 1
            fresh = float(np.abs(row) @ hw)
            h[key][i] = prop + fresh
            zono.add_box()
        h[key][depth + 1:] = h[key][depth]
    return h["lo"], h["hi"], count


def effective_half_width(e_phi: float, params: VehicleParams) -> float:
    """Heading-dependent half-width of the footprint along the path normal.

    Interpolates between half the vehicle width at zero heading error and
    the CG-to-front-axle distance at 90 degrees.
    """
    return (params.wd / 2.0) * abs(math.cos(e_phi)) + params.a * abs(math.sin(e_phi))


def convexify_width(tight_lo: np.ndarray, tight_hi: np.ndarray,
                    e_phi_prev: np.ndarray, params: VehicleParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Final intervals after the footprint correction; degenerate steps flagged."""
    margin = np.array([effective_half_width(float(e), params) for e in e_phi_prev])
    lo = tight_lo + margin
    hi = tight_hi - margin
    bad = lo > hi
    if np.any(bad):
        mid = 0.5 * (lo[bad] + hi[bad])
        lo[bad] = mid
        hi[bad] = mid
    return lo, hi, margin


def build_tube(road: RoadBounds, obstacles: list[Obstacle], speed: float,
               sample_distances: np.ndarray, sample_dts: np.ndarray,
               e_phi_prev: np.ndarray, transitions: list[np.ndarray],
               W: DisturbanceSet, N_c: int, params: VehicleParams,
               freeze_tail: bool = True) -> TubeBounds:
    """Full corridor pipeline for one controller step."""
    stretched = stretch_obstacles(obstacles, speed, sample_distances, sample_dts)
    corridor = build_active_constraints(stretched, road, params.wd)
    raw_lo, raw_hi, raw_bad = discretize_tube(corridor, sample_distances)
    h_lo, h_hi, count = tighten_bounds(raw_lo, raw_hi, transitions, W, N_c,
                                       freeze_tail=freeze_tail)
    # where a bound sits on the nominal side of the path, tightening may
    # move it at most to the centerline (G >= h >= 0); bounds already past
    # the centerline (obstacle spans) take the full margin and rely on the
    # collapse handling below
    G_hi = raw_hi
    G_lo = -raw_lo
    h_hi_c = np.where(G_hi >= 0.0, np.minimum(h_hi, G_hi), h_hi)
    h_lo_c = np.where(G_lo >= 0.0, np.minimum(h_lo, G_lo), h_lo)
    tight_lo = raw_lo + h_lo_c
    tight_hi = raw_hi - h_hi_c
    tbad = tight_lo > tight_hi
    if np.any(tbad):
        mid = 0.5 * (tight_lo[tbad] + tight_hi[tbad])
        tight_lo[tbad] = mid
        tight_hi[tbad] = mid
    final_lo, final_hi, margin = convexify_width(tight_lo, tight_hi, e_phi_prev, params)
    infeasible = raw_bad | tbad | ((tight_hi - tight_lo) < 2.0 * margin)
    return TubeBounds(raw_min=raw_lo, raw_max=raw_hi, h_lo=h_lo_c, h_hi=h_hi_c,
                      width_margin=margin, final_min=final_lo, final_max=final_hi,
                      infeasible=infeasible, lp_count=count)
