# test_oracles.py: closed-form cross, Wulff and disk-family evolutions
import math

import numpy as np
import pytest

from anisotropy import Euclidean, PNorm, WeightedL1
from errors import OracleError
from grid_fields import GridDomain, shape
from oracles import (
    BallOracle,
    CrossOracle,
    DiskFamilyOracle,
    OracleSolution,
    SquareL1Oracle,
    WulffOracle,
    calibration_check,
    calibration_divergence,
    calibration_field,
    cross_arrival,
    cross_set,
    disk_constant,
    disk_family_arrival,
    disk_family_generate,
    disk_radius_bound,
    make_oracle,
    polygon_area,
    shrinking_ball,
)


def _random_cross_points(rng, n, L=2.0):
    pts = rng.uniform(-L, L, (2, 4 * n))
    inside = np.min(np.abs(pts), axis=0) <= 1.0
    return pts[:, inside][:, :n]


class TestCross:
    @pytest.mark.parametrize("t, area", [(0.0, 12.0), (0.5, 8.0), (1.0, 4.0), (1.25, 2.0), (2.0, 0.0)])
    def test_areas(self, t, area):
        assert polygon_area(cross_set(t)) == pytest.approx(area)
        assert CrossOracle().volume(t) == pytest.approx(area)

    def test_extinct_polygon_is_empty(self):
        assert cross_set(1.6).shape == (0, 2)

    def test_polygon_is_counter_clockwise(self):
        v = cross_set(0.25)
        x, y = v[:, 0], v[:, 1]
        signed = 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
        assert signed > 0

    @pytest.mark.parametrize(
        "point, value", [((0.0, 0.0), 1.5), ((1.5, 0.0), 0.5), ((0.0, -1.8), 0.2), ((0.0, 1.5), 0.5), ((1.9, 1.9), 0.0), ((0.5, 0.5), 1.375), ((1.5, 1.5), 0.0), ((3.0, 0.0), 0.0)]
    )
    def test_arrival(self, point, value):
        assert float(cross_arrival(np.array(point))) == pytest.approx(value)

    def test_arrival_matches_membership(self, rng):
        oracle = CrossOracle(2.0)
        x = _random_cross_points(rng, 500)
        u = oracle.arrival(x)
        for t in (0.3, 0.9, 1.2, 1.45):
            inside = oracle.contains(x, t)
            # closed sets: u >= t exactly on E(t)
            assert np.array_equal(inside, u >= t - 1e-12)

    def test_perimeter_and_energy(self):
        oracle = CrossOracle(2.0)
        assert oracle.perimeter(0.0) == pytest.approx(16.0)
        assert oracle.extinction_time == pytest.approx(1.5)
        assert oracle.bv_energy() == pytest.approx(12.0 + 8.0 / 3.0)
        assert OracleSolution.bv_energy(oracle) == pytest.approx(oracle.bv_energy(), rel=1e-8)

    def test_rasterize_matches_shape(self):
        dom = GridDomain.square(2.5, 80)
        assert CrossOracle(2.0).rasterize(dom, 0.0) == shape("cross", dom, L=2.0)

    def test_invalid(self):
        with pytest.raises(OracleError):
            CrossOracle(0.5)
        with pytest.raises(OracleError):
            CrossOracle().volume(-1.0)


class TestCalibration:
    def test_field_examples(self):
        z = calibration_field(np.array([[0.5, 1.5, 0.5], [0.5, 0.5, -1.8]]))
        assert np.allclose(z.T, [[0.5, 0.5], [1.0, 0.5], [0.5, -1.0]])
        assert np.allclose(calibration_divergence(np.array([[0.5, 1.5], [0.5, 0.5]])), [2.0, 1.0])

    def test_named_points(self):
        pts = np.array([[0.0, 0.0], [0.5, 0.5], [1.5, 0.5], [0.5, 1.9], [-1.9, -0.9]]).T
        report = calibration_check(pts)
        assert report.passed
        assert report.samples == 5
        assert report.details["max_dual"] <= 1.0
        assert report.details["flux_error"] <= 1e-8

    def test_random_points(self, rng):
        report = calibration_check(_random_cross_points(rng, 1000))
        assert report.passed
        assert report.worst_margin >= 0.0
        assert report.details["divergence_error"] <= 1e-6

    def test_points_outside(self):
        with pytest.raises(OracleError):
            calibration_check(np.array([1.5, 1.5]))


class TestWulff:
    def test_shrinking_ball(self):
        assert shrinking_ball(1.0, 0.375) == pytest.approx(0.5)
        assert shrinking_ball(1.0, 3.0) == 0.0
        assert shrinking_ball(1.0, 0.125, dim=3) == pytest.approx(math.sqrt(0.5))
        with pytest.raises(OracleError):
            shrinking_ball(1.0, -0.1)

    def test_ball_oracle(self):
        oracle = BallOracle(1.0)
        assert oracle.radius(0.375) == pytest.approx(0.5)
        assert oracle.extinction_time == pytest.approx(0.5)
        assert oracle.arrival(np.array([0.0, 0.0])) == pytest.approx(0.5)
        assert oracle.bv_energy() == pytest.approx(2 * math.pi / 3)
        assert not oracle.contains(np.zeros(2), 0.6)

    def test_square_oracle(self):
        oracle = SquareL1Oracle(1.0)
        assert oracle.perimeter(0.0) == pytest.approx(8.0)
        assert oracle.volume(0.0) == pytest.approx(4.0)
        assert polygon_area(oracle.polygon(0.375)) == pytest.approx(1.0)

    @pytest.mark.parametrize("phi", [Euclidean(2), WeightedL1(2, [1.0, 2.0]), PNorm(2, 3.0), Euclidean(3)])
    def test_energy_matches_quadrature(self, phi):
        oracle = WulffOracle(phi, 0.8)
        assert oracle.bv_energy() == pytest.approx(OracleSolution.bv_energy(oracle), rel=1e-6)

    def test_pnorm_volume_by_quadrature(self):
        # phi° is the l_(3/2) norm: its unit ball sits between the l1 diamond and the disk
        vol = WulffOracle(PNorm(2, 3.0), 1.0).unit_volume
        assert 2.0 < vol < math.pi

    def test_invalid(self):
        with pytest.raises(OracleError):
            BallOracle(0.0)


class TestDiskFamily:
    def test_single_disk(self):
        oracle = DiskFamilyOracle([[0.0, 0.0]], [1.0])
        assert oracle.arrival(np.array([0.0, 0.0])) == pytest.approx(0.5)
        assert oracle.extinction_time == pytest.approx(0.5)
        assert oracle.bv_energy() == pytest.approx(2 * math.pi / 3)
        assert oracle.arrival(np.array([0.5, 0.0])) == pytest.approx(3 / 8)

    def test_two_disks(self):
        centers, radii = [[-0.5, 0.0], [0.5, 0.0]], [0.4, 0.2]
        x = np.array([[-0.5, 0.5, 0.0], [0.0, 0.0, 0.0]])
        assert np.allclose(disk_family_arrival(x, centers, radii), [0.08, 0.02, 0.0])
        oracle = DiskFamilyOracle(centers, radii)
        assert oracle.volume(0.0) == pytest.approx(math.pi * 0.2)
        # the small disk is gone at t = 0.02
        assert oracle.perimeter(0.05) == pytest.approx(2 * math.pi * math.sqrt(0.06))
        assert not oracle.contains(np.array([0.5, 0.0]), 0.05)

    def test_overlap(self):
        with pytest.raises(OracleError):
            DiskFamilyOracle([[0.0, 0.0], [0.5, 0.0]], [0.3, 0.3])

    def test_constants(self):
        assert disk_constant(0.25) == pytest.approx(18 / (math.pi - 2))
        assert disk_constant(10.0) == pytest.approx(43.5)
        assert disk_radius_bound(0, 1.0, 0.25) == 0.0
        assert disk_radius_bound(2, 0.0, 0.25) == 0.0
        bound = disk_radius_bound(1, 0.6, 0.25)
        assert bound == pytest.approx(0.25 * 0.25 * 0.36 / (2 * math.pi * disk_constant(0.25)))
        assert disk_radius_bound(1, 20.0, 1e6) == pytest.approx(20.0 / 6)

    def test_generate(self):
        centers, radii, delta = disk_family_generate(6, seed=3)
        again = disk_family_generate(6, seed=3)
        assert np.array_equal(centers, again[0]) and np.array_equal(radii, again[1])
        assert delta == 0.25
        assert len(radii) == 6 and np.all(radii > 0)
        assert np.all(np.hypot(centers[:, 0], centers[:, 1]) + radii < 1.0)
        DiskFamilyOracle(centers, radii)

    def test_generate_invalid(self):
        with pytest.raises(OracleError):
            disk_family_generate(0)
        with pytest.raises(OracleError):
            disk_family_generate(50, max_draws=3)


class TestMakeOracle:
    def test_kinds(self):
        assert isinstance(make_oracle("cross", L=3.0), CrossOracle)
        assert make_oracle("ball", R0=0.5).R0 == 0.5
        assert isinstance(make_oracle("square"), SquareL1Oracle)
        assert isinstance(make_oracle("wulff", phi=Euclidean(2)), WulffOracle)
        assert make_oracle("disk-family", centers=[[0, 0]], radii=[0.5]).describe()["radii"] == [0.5]

    def test_unknown(self):
        with pytest.raises(OracleError):
            make_oracle("heart")
