import numpy as np
import pytest

from echopath.errors import (
    DimensionError,
    GeometryError,
    InfiniteCnrError,
    InsufficientDataError,
)
from echopath.metrics import (
    bland_altman,
    cnr,
    contour_volume,
    dice,
    ejection_fraction,
    rasterize_contour,
)


def circle_contour(radius_px, center=(100, 100), n=720):
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.column_stack([
        center[0] + radius_px * np.cos(ang),
        center[1] + radius_px * np.sin(ang),
    ])


def ellipse_contour(a_px, b_px, center=(150, 150), n=720):
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.column_stack([
        center[0] + a_px * np.cos(ang),
        center[1] + b_px * np.sin(ang),
    ])


class TestDice:
    def test_identical(self):
        m = np.zeros((10, 10), bool)
        m[2:6, 3:8] = True
        assert dice(m, m) == 1.0

    def test_disjoint(self):
        a = np.zeros((10, 10), bool)
        b = np.zeros((10, 10), bool)
        a[0, 0] = True
        b[5, 5] = True
        assert dice(a, b) == 0.0

    def test_subset(self):
        a = np.zeros((30, 30), bool)
        b = np.zeros((30, 30), bool)
        a.flat[:200] = True
        b.flat[:100] = True
        assert dice(a, b) == pytest.approx(2 * 100 / 300)

    def test_both_empty(self):
        m = np.zeros((5, 5), bool)
        assert dice(m, m) == 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(60)
        for _ in range(20):
            a = rng.uniform(size=(12, 12)) > 0.5
            b = rng.uniform(size=(12, 12)) > 0.5
            assert dice(a, b) == dice(b, a)

    def test_grid_mismatch(self):
        with pytest.raises(DimensionError):
            dice(np.zeros((4, 4), bool), np.zeros((5, 5), bool))


class TestCnr:
    def test_direct_value(self):
        a = np.sqrt(50.0)
        img = np.array([50 - a, 50 + a, 150 - 10, 150 + 10])
        cav = np.array([True, True, False, False])
        myo = ~cav
        # means 50 and 150; variances 50 and 100
        assert cnr(img, cav, myo) == pytest.approx(100 / np.sqrt(150), abs=1e-12)

    def test_example_ten(self):
        a = np.sqrt(50.0)
        img = np.array([50 - a, 50 + a, 150 - a, 150 + a])
        cav = np.array([True, True, False, False])
        assert cnr(img, cav, ~cav) == pytest.approx(10.0, abs=1e-12)

    def test_equal_means_zero(self):
        img = np.array([1.0, 3.0, 1.0, 3.0])
        cav = np.array([True, True, False, False])
        assert cnr(img, cav, ~cav) == 0.0

    def test_zero_variance_error(self):
        img = np.array([1.0, 1.0, 2.0, 2.0])
        cav = np.array([True, True, False, False])
        with pytest.raises(InfiniteCnrError):
            cnr(img, cav, ~cav)

    def test_affine_invariance(self):
        rng = np.random.default_rng(61)
        img = rng.uniform(0, 1, (40, 40))
        cav = np.zeros((40, 40), bool)
        myo = np.zeros((40, 40), bool)
        cav[:20] = True
        myo[20:] = True
        base = cnr(img, cav, myo)
        scaled = cnr(3.7 * img + 11.0, cav, myo)
        assert scaled == pytest.approx(base, rel=1e-9)


class TestEjectionFraction:
    def test_half(self):
        assert ejection_fraction(100, 50) == 50.0

    def test_zero_stroke(self):
        assert ejection_fraction(80, 80) == 0.0

    def test_dilated_cohort_scale(self):
        assert ejection_fraction(178.75, 117.75) == pytest.approx(34.1, abs=0.05)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            ejection_fraction(0, 10)


class TestBlandAltman:
    def test_simple_pairs(self):
        bias, lo, hi = bland_altman([(10, 12), (20, 18)])
        assert bias == pytest.approx(0.0)
        assert hi == pytest.approx(1.96 * np.sqrt(8.0), abs=1e-9)
        assert hi == pytest.approx(5.544, abs=1e-3)
        assert lo == pytest.approx(-hi)

    def test_identical_pairs(self):
        bias, lo, hi = bland_altman([(5, 5), (7, 7), (9, 9)])
        assert (bias, lo, hi) == (0.0, 0.0, 0.0)

    def test_single_pair_error(self):
        with pytest.raises(InsufficientDataError):
            bland_altman([(1, 2)])

    def test_antisymmetry(self):
        rng = np.random.default_rng(62)
        pairs = rng.uniform(50, 150, (10, 2))
        b1, lo1, hi1 = bland_altman(pairs)
        b2, lo2, hi2 = bland_altman(pairs[:, ::-1])
        assert b2 == pytest.approx(-b1)
        assert lo2 == pytest.approx(-hi1)
        assert hi2 == pytest.approx(-lo1)


class TestContourVolume:
    def test_sphere_identity(self):
        # radius 20 mm at 0.5 mm/px -> 40 px; disks of a circle sum to a sphere
        pts = circle_contour(40.0)
        v = contour_volume(pts, 0.5)
        want = 4.0 / 3.0 * np.pi * 20.0**3 / 1000.0
        assert v == pytest.approx(want, rel=0.01)

    def test_prolate_spheroid_identity(self):
        pts = ellipse_contour(80.0, 40.0)  # 40 x 20 mm at 0.5 mm/px
        v = contour_volume(pts, 0.5)
        want = 4.0 / 3.0 * np.pi * 40.0 * 20.0**2 / 1000.0
        assert v == pytest.approx(want, rel=0.01)

    def test_unit_invariance(self):
        pts = circle_contour(40.0)
        v1 = contour_volume(pts, 0.5)
        v2 = contour_volume(pts * 2.0 - np.array([100, 100]), 0.25)
        assert v2 == pytest.approx(v1, rel=1e-6)

    def test_scale_law(self):
        pts = ellipse_contour(60.0, 30.0)
        v1 = contour_volume(pts, 0.5)
        center = np.array([150.0, 150.0])
        v2 = contour_volume(center + 1.3 * (pts - center), 0.5)
        assert v2 == pytest.approx(v1 * 1.3**3, rel=0.01)

    def test_explicit_axis(self):
        pts = ellipse_contour(80.0, 40.0)
        v = contour_volume(pts, 0.5, axis=((70.0, 150.0), (230.0, 150.0)))
        want = 4.0 / 3.0 * np.pi * 40.0 * 20.0**2 / 1000.0
        assert v == pytest.approx(want, rel=0.01)

    def test_self_intersection_rejected(self):
        bowtie = np.array([[0, 0], [10, 10], [10, 0], [0, 10]], dtype=float)
        with pytest.raises(GeometryError):
            contour_volume(bowtie, 0.5)

    def test_too_few_points(self):
        with pytest.raises(GeometryError):
            contour_volume(np.array([[0, 0], [1, 1]]), 0.5)


class TestRasterize:
    def test_boundary_pixels_included(self):
        pts = np.array([[2, 2], [8, 2], [8, 8], [2, 8]], dtype=float)
        mask = rasterize_contour(pts, (12, 12))
        assert mask[2, 2] and mask[2, 8] and mask[8, 8]
        assert mask[5, 5]
        assert not mask[0, 0]

    def test_area_close_to_polygon(self):
        pts = circle_contour(30.0, center=(50, 50))
        mask = rasterize_contour(pts, (101, 101))
        # boundary-inclusive fill adds roughly half the perimeter ring
        assert mask.sum() == pytest.approx(np.pi * 30**2, rel=0.05)
