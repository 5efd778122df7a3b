"""Convex-quad collision geometry for footprint/obstacle clearance."""

from __future__ import annotations

import math

import numpy as np

from .params import VehicleParams
from .path import ReferencePath, path_to_global
from .tube import Obstacle


def vehicle_footprint(x: float, y: float, phi: float,
                      params: VehicleParams) -> np.ndarray:
    """Oriented rectangle corners, CCW: length a forward / b back of the CG."""
    c, s = math.cos(phi), math.sin(phi)
    half_w = params.wd / 2.0
    body = np.array([[params.a, -half_w], [params.a, half_w],
                     [-params.b, half_w], [-params.b, -half_w]])
    R = np.array([[c, -s], [s, c]])
    return body @ R.T + np.array([x, y])


def obstacle_quad(ob: Obstacle, path: ReferencePath) -> np.ndarray:
    """Obstacle rectangle mapped from path coordinates to the global frame."""
    corners = [(ob.s_start, ob.ey_near), (ob.s_start, ob.ey_far),
               (ob.s_end, ob.ey_far), (ob.s_end, ob.ey_near)]
    pts = [path_to_global(ey, 0.0, s, path)[:2] for s, ey in corners]
    return np.array(pts)


def _axes(poly: np.ndarray) -> np.ndarray:
    edges = np.roll(poly, -1, axis=0) - poly
    normals = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
    lengths = np.linalg.norm(normals, axis=1)
    return normals / lengths[:, None]


def _segment_distance(p1, p2, q1, q2) -> float:
    """Minimum distance between two 2D segments."""
    def point_seg(p, a, b):
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
        return float(np.linalg.norm(p - (a + t * ab)))

    d1 = (p2 - p1, q1 - p1, q2 - p1)
    # segment intersection check via orientations
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-15 else (1 if v > 0 else -1)

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return 0.0
    return min(point_seg(q1, p1, p2), point_seg(q2, p1, p2),
               point_seg(p1, q1, q2), point_seg(p2, q1, q2))


def quad_clearance(A: np.ndarray, B: np.ndarray) -> float:
    """Signed clearance between two convex quads.

    Positive separation distance, 0 when touching, negative penetration
    depth (from the separating-axis gaps) when overlapping.
    """
    axes = np.vstack([_axes(A), _axes(B)])
    max_gap = -math.inf
    for ax in axes:
        pa = A @ ax
        pb = B @ ax
        gap = max(pb.min() - pa.max(), pa.min() - pb.max())
        max_gap = max(max_gap, gap)
    if max_gap >= 0.0:
        # separated: SAT gap underestimates at corners, use exact distance
        best = math.inf
        for i in range(4):
            for j in range(4):
                best = min(best, _segment_distance(A[i], A[(i + 1) % 4],
                                                   B[j], B[(j + 1) % 4]))
        return best
    return max_gap
