"""Arc-length parameterized reference paths and path-frame conversions.

Paths are chains of straight and constant-curvature segments. Curvature
is carried as 1/m (positive curving left); heading integrates curvature
analytically per segment, so pose evaluation and closest-point projection
are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@dataclass(frozen=True)
class PathSegment:
    length: float
    kappa: float  # 1/m, piecewise constant

    def __post_init__(self):
        if self.length <= 0.0:
            raise ValueError("segment length must be positive")


@dataclass
class ReferencePath:
    """Piecewise straight/arc path anchored at a global pose at s_d = 0."""

    segments: list[PathSegment]
    x0: float = 0.0
    y0: float = 0.0
    phi0: float = 0.0

    def __post_init__(self):
        if not self.segments:
            raise ValueError("path needs at least one segment")
        # accumulated (s, x, y, phi) at segment starts
        starts = [(0.0, self.x0, self.y0, self.phi0)]
        for seg in self.segments:
            s, x, y, phi = starts[-1]
            x2, y2, phi2 = _advance(x, y, phi, seg.kappa, seg.length)
            starts.append((s + seg.length, x2, y2, phi2))
        self._starts = starts

    @property
    def length(self) -> float:
        return self._starts[-1][0]

    def curvature_at(self, s_d: float) -> float:
        """Segment curvature at path distance s_d, clamped at the ends."""
        idx = self._segment_index(s_d)
        return self.segments[idx].kappa

    def pose_at(self, s_d: float) -> tuple[float, float, float]:
        """Centerline pose (x, y, phi_d) at path distance s_d (clamped)."""
        s_d = min(max(s_d, 0.0), self.length)
        idx = self._segment_index(s_d)
        s0, x, y, phi = self._starts[idx]
        return _advance(x, y, phi, self.segments[idx].kappa, s_d - s0)

    def _segment_index(self, s_d: float) -> int:
        if s_d <= 0.0:
            return 0
        if s_d >= self.length:
            return len(self.segments) - 1
        lo, hi = 0, len(self.segments) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self._starts[mid + 1][0] <= s_d:
                lo = mid + 1
            else:
                hi = mid
        return lo


def _advance(x: float, y: float, phi: float, kappa: float,
             ds: float) -> tuple[float, float, float]:
    if abs(kappa) < 1e-12:
        return x + ds * math.cos(phi), y + ds * math.sin(phi), phi
    phi2 = phi + kappa * ds
    x2 = x + (math.sin(phi2) - math.sin(phi)) / kappa
    y2 = y - (math.cos(phi2) - math.cos(phi)) / kappa
    return x2, y2, phi2


def path_to_global(e_y: float, e_phi: float, s_d: float,
                   path: ReferencePath) -> tuple[float, float, float]:
    """Pose (x, y, phi) of a point offset e_y left of the path at s_d."""
    cx, cy, cphi = path.pose_at(s_d)
    nx, ny = -math.sin(cphi), math.cos(cphi)  # left normal
    return cx + e_y * nx, cy + e_y * ny, wrap_angle(cphi + e_phi)


def global_to_path_errors(x: float, y: float, phi: float,
                          path: ReferencePath) -> tuple[float, float, float]:
    """Project a global pose onto the path: (e_y, e_phi, s_d).

    e_y is the signed lateral offset (left of the path positive), s_d the
    arc length of the closest centerline point. Raises if the projection
    is ambiguous (point at or beyond an arc's center).
    """
    best = None
    s_acc = 0.0
    for i, seg in enumerate(path.segments):
        s0, x0, y0, phi0 = path._starts[i]
        cand = _project_segment(x, y, x0, y0, phi0, seg.kappa, seg.length)
        if cand is not None:
            dist, s_local = cand
            if best is None or dist < best[0]:
                best = (dist, s0 + s_local)
        s_acc += seg.length
    if best is None:
        raise ValueError("projection onto path failed")
    s_d = best[1]
    kappa = path.curvature_at(s_d)
    if abs(kappa) > 0.0 and best[0] >= 1.0 / abs(kappa) - 1e-12:
        raise ValueError("projection ambiguous: point too far from a curved path")
    cx, cy, cphi = path.pose_at(s_d)
    nx, ny = -math.sin(cphi), math.cos(cphi)
    e_y = (x - cx) * nx + (y - cy) * ny
    e_phi = wrap_angle(phi - cphi)
    return e_y, e_phi, s_d


def _project_segment(px, py, x0, y0, phi0, kappa, length):
    """Distance and local arc length of the closest point on one segment."""
    if abs(kappa) < 1e-12:
        tx, ty = math.cos(phi0), math.sin(phi0)
        s_local = (px - x0) * tx + (py - y0) * ty
        s_local = min(max(s_local, 0.0), length)
        cx, cy = x0 + s_local * tx, y0 + s_local * ty
        return math.hypot(px - cx, py - cy), s_local
    # circle center is 1/kappa along the left normal
    r = 1.0 / kappa
    nx, ny = -math.sin(phi0), math.cos(phi0)
    ccx, ccy = x0 + r * nx, y0 + r * ny
    dx, dy = px - ccx, py - ccy
    d = math.hypot(dx, dy)
    if d < 1e-12:
        return None  # at the arc center: ambiguous
    # angle of the point around the center, measured from the segment start
    ang_start = math.atan2(y0 - ccy, x0 - ccx)
    ang_pt = math.atan2(dy, dx)
    sweep = kappa * length  # signed total angle of the arc
    rel = wrap_angle(ang_pt - ang_start)
    # progress along the arc in [0, length] if the wrapped angle lies inside
    if sweep >= 0.0:
        s_local = rel / kappa if 0.0 <= rel <= sweep else None
    else:
        s_local = rel / kappa if sweep <= rel <= 0.0 else None
    if s_local is None:
        # clamp to nearer endpoint
        ex, ey, _ = _advance(x0, y0, phi0, kappa, length)
        d0 = math.hypot(px - x0, py - y0)
        d1 = math.hypot(px - ex, py - ey)
        return (d0, 0.0) if d0 <= d1 else (d1, length)
    cxp, cyp, _ = _advance(x0, y0, phi0, kappa, s_local)
    return math.hypot(px - cxp, py - cyp), s_local


@dataclass
class RoadBounds:
    """Lateral corridor [right, left] as piecewise-constant functions of s_d.

    ``breaks`` are the s_d values where the bounds change; section i applies
    on [breaks[i], breaks[i+1]). A single (left, right) pair with no breaks
    describes a uniform road.
    """

    left: list[float]
    right: list[float]
    breaks: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.left) != len(self.right):
            raise ValueError("left/right section counts differ")
        if len(self.breaks) != len(self.left) - 1:
            raise ValueError("need one more section than breaks")
        for lo, hi in zip(self.right, self.left):
            if hi <= lo:
                raise ValueError("road right bound must lie below left bound")

    def at(self, s_d: float) -> tuple[float, float]:
        """(e_y_right, e_y_left) at path distance s_d."""
        idx = 0
        for bk in self.breaks:
            if s_d >= bk:
                idx += 1
            else:
                break
        return self.right[idx], self.left[idx]
