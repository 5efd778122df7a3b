import math

import numpy as np
import pytest

from tubesteer.geometry import obstacle_quad, quad_clearance, vehicle_footprint
from tubesteer.params import VehicleParams
from tubesteer.path import PathSegment, ReferencePath
from tubesteer.tube import Obstacle

PARAMS = VehicleParams()


def square(cx, cy, half=1.0, angle=0.0):
    c, s = math.cos(angle), math.sin(angle)
    base = np.array([[-half, -half], [half, -half], [half, half], [-half, half]])
    R = np.array([[c, -s], [s, c]])
    return base @ R.T + np.array([cx, cy])


class TestQuadClearance:
    def test_separated_distance(self):
        a = square(0.0, 0.0)
        b = square(5.0, 0.0)
        assert quad_clearance(a, b) == pytest.approx(3.0, abs=1e-12)

    def test_touching(self):
        a = square(0.0, 0.0)
        b = square(2.0, 0.0)
        assert quad_clearance(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_overlap_negative(self):
        a = square(0.0, 0.0)
        b = square(1.5, 0.0)
        assert quad_clearance(a, b) == pytest.approx(-0.5, abs=1e-12)

    def test_corner_to_corner_diagonal(self):
        a = square(0.0, 0.0)
        b = square(3.0, 3.0)
        # nearest points are the corners (1,1) and (2,2)
        assert quad_clearance(a, b) == pytest.approx(math.sqrt(2.0), abs=1e-12)

    def test_rotated_separation(self):
        a = square(0.0, 0.0)
        b = square(3.0, 0.0, angle=math.pi / 4)
        expect = 3.0 - 1.0 - math.sqrt(2.0)
        assert quad_clearance(a, b) == pytest.approx(expect, abs=1e-12)


class TestFootprint:
    def test_dimensions(self):
        quad = vehicle_footprint(0.0, 0.0, 0.0, PARAMS)
        xs, ys = quad[:, 0], quad[:, 1]
        assert xs.max() == pytest.approx(PARAMS.a)
        assert xs.min() == pytest.approx(-PARAMS.b)
        assert ys.max() == pytest.approx(PARAMS.wd / 2)

    def test_rotation(self):
        quad = vehicle_footprint(0.0, 0.0, math.pi / 2, PARAMS)
        assert quad[:, 1].max() == pytest.approx(PARAMS.a)
        assert quad[:, 0].max() == pytest.approx(PARAMS.wd / 2)


class TestObstacleQuad:
    def test_straight_path_rectangle(self):
        path = ReferencePath([PathSegment(100.0, 0.0)])
        ob = Obstacle(10.0, 14.0, -1.0, 1.0)
        quad = obstacle_quad(ob, path)
        np.testing.assert_allclose(sorted(quad[:, 0]), [10, 10, 14, 14])
        np.testing.assert_allclose(sorted(quad[:, 1]), [-1, -1, 1, 1])

    def test_grazing_clearance_zero(self):
        path = ReferencePath([PathSegment(100.0, 0.0)])
        ob = Obstacle(10.0, 14.0, -1.0, 1.0)
        quad = obstacle_quad(ob, path)
        # vehicle side exactly on the obstacle edge
        foot = vehicle_footprint(12.0, 1.0 + PARAMS.wd / 2, 0.0, PARAMS)
        assert quad_clearance(foot, quad) == pytest.approx(0.0, abs=1e-12)
