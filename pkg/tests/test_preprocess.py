import json

import numpy as np
import pytest

from echopath.errors import (
    DegenerateContrastError,
    DimensionError,
    InvalidCenterError,
    InvalidUIPError,
)
from echopath.preprocess import (
    FrameUIPs,
    ScanSequence,
    UIPSet,
    ace_levels,
    apply_ace,
    fast_median_unit,
    load_sequence,
    load_uips,
    median_filter,
    polar_angle,
    unwrap_polar,
)


def make_uips(apex, mv_left, mv_right):
    apex = np.asarray(apex, float)
    mv_left = np.asarray(mv_left, float)
    mv_right = np.asarray(mv_right, float)
    return FrameUIPs(apex, mv_left, mv_right, (apex + mv_left + mv_right) / 3.0)


class TestApplyAce:
    def line_frame(self):
        # vertical MV-apex line from (5,5) to (5,85): 81 integer samples.
        # 80 samples at 78.5 plus one at 200 give mean 80 and max 200,
        # so I1 = 40 and I2 = 200.
        frame = np.full((100, 100), 78.5)
        frame[5:86, 5] = 78.5
        frame[45, 5] = 200.0
        frame[0, 0] = 40.0
        frame[0, 1] = 200.0
        frame[0, 2] = 120.0
        return frame, make_uips((5, 5), (0, 85), (10, 85))

    def test_reference_levels(self):
        frame, uips = self.line_frame()
        i1, i2 = ace_levels(frame, uips)
        assert i1 == pytest.approx(40.0, abs=1e-9)
        assert i2 == pytest.approx(200.0, abs=1e-9)

    def test_endpoint_mappings(self):
        frame, uips = self.line_frame()
        out = apply_ace(frame, uips)
        assert out[0, 0] == pytest.approx(0.0, abs=1e-12)   # raw 40 -> 0
        assert out[0, 1] == pytest.approx(1.0, abs=1e-12)   # raw 200 -> 1
        assert out[0, 2] == pytest.approx(0.5, abs=1e-12)   # raw 120 -> 0.5

    def test_monotone(self):
        frame, uips = self.line_frame()
        rng = np.random.default_rng(1)
        a = rng.uniform(0, 255, 200)
        b = a + rng.uniform(0, 50, 200)
        frame_a = frame.copy()
        frame_a[50, 10:60] = np.sort(a)[:50]
        out = apply_ace(frame_a, uips)
        row = out[50, 10:60]
        assert np.all(np.diff(row) >= 0)

    def test_clamped_range(self):
        frame, uips = self.line_frame()
        out = apply_ace(frame, uips)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_degenerate_line(self):
        frame = np.zeros((50, 50))
        uips = make_uips((25, 25), (20, 25), (30, 25))  # midpoint == apex
        with pytest.raises(InvalidUIPError):
            apply_ace(frame, uips)

    def test_flat_line_degenerate_contrast(self):
        frame = np.zeros((50, 50))  # I1 = I2 = 0 along the line
        uips = make_uips((10, 10), (5, 40), (15, 40))
        with pytest.raises(DegenerateContrastError):
            apply_ace(frame, uips)


class TestMedianFilter:
    def test_constant_identity(self):
        frame = np.full((20, 20), 7.0)
        assert np.array_equal(median_filter(frame), frame)

    def test_isolated_bright_pixel_removed(self):
        frame = np.zeros((20, 20))
        frame[10, 10] = 255.0
        out = median_filter(frame)
        assert out[10, 10] == 0.0

    def test_checkerboard_against_bruteforce(self):
        frame = np.indices((20, 20)).sum(axis=0) % 2 * 255.0
        out = median_filter(frame, 11)
        padded = np.pad(frame, 5, mode="edge")
        for i in range(20):
            for j in range(20):
                window = padded[i:i + 11, j:j + 11]
                assert out[i, j] == np.median(window)

    def test_range_preserved(self):
        rng = np.random.default_rng(2)
        frame = rng.uniform(3.0, 9.0, (24, 24))
        out = median_filter(frame)
        assert out.min() >= 3.0 and out.max() <= 9.0

    def test_too_small(self):
        with pytest.raises(DimensionError):
            median_filter(np.zeros((5, 5)), 11)

    def test_fast_path_matches_exact(self):
        rng = np.random.default_rng(3)
        frame = rng.uniform(0, 1, (32, 32))
        exact = median_filter(frame)
        fast = fast_median_unit(frame)
        assert np.abs(exact - fast).max() <= 1.0 / 1023 + 1e-12


class TestPolarAngle:
    def test_three_four_five(self):
        assert polar_angle(4, 3) == pytest.approx(53.13010235, abs=1e-6)

    def test_negative_x_axis(self):
        assert polar_angle(0, -3) == pytest.approx(180.0, abs=1e-12)

    def test_positive_y_axis(self):
        assert polar_angle(1, 0) == pytest.approx(90.0, abs=1e-12)

    def test_origin_zero(self):
        assert polar_angle(0, 0) == 0.0

    def test_matches_closed_form_off_axis(self):
        # arctan(y/x) + 90 * sign(y) * (1 - sign(x)) off the axes
        rng = np.random.default_rng(4)
        for _ in range(500):
            x = rng.uniform(-10, 10)
            y = rng.uniform(-10, 10)
            if abs(x) < 1e-3 or abs(y) < 1e-3:
                continue
            closed = np.degrees(np.arctan(y / x)) + 90.0 * np.sign(y) * (1 - np.sign(x))
            assert polar_angle(y, x) == pytest.approx(closed, abs=1e-9)


class TestUnwrapPolar:
    def test_axis_samples(self):
        frame = np.zeros((41, 41))
        frame[20, 25] = 100.0  # (x_c + 5, y_c)
        frame[25, 20] = 50.0   # (x_c, y_c + 5)
        polar = unwrap_polar(frame, (20, 20))
        assert polar.grid[5, 0] == pytest.approx(100.0)
        assert polar.grid[5, 90] == pytest.approx(50.0)

    def test_concentric_rings_constant_rows(self):
        h = w = 101
        ys, xs = np.indices((h, w))
        r = np.hypot(xs - 50, ys - 50)
        frame = 100.0 + 50.0 * np.cos(r / 4.0)
        polar = unwrap_polar(frame, (50, 50))
        for rb in range(5, polar.n_r, 7):
            expected = 100.0 + 50.0 * np.cos(rb / 4.0)
            assert np.abs(polar.grid[rb] - expected).max() <= 1.0

    def test_round_trip_positions(self):
        polar = unwrap_polar(np.zeros((61, 61)), (30.0, 30.0))
        rng = np.random.default_rng(5)
        for _ in range(200):
            rb = rng.integers(0, polar.n_r)
            tb = rng.integers(0, polar.n_theta)
            ang = np.deg2rad(tb * polar.theta_resolution)
            x = 30.0 + rb * np.cos(ang)
            y = 30.0 + rb * np.sin(ang)
            r_back = np.hypot(x - 30.0, y - 30.0)
            t_back = np.degrees(np.arctan2(y - 30.0, x - 30.0)) % 360.0
            assert abs(r_back - rb) <= 0.5
            if rb > 0:
                dt = (t_back - tb * polar.theta_resolution + 180) % 360 - 180
                assert abs(dt * np.pi / 180 * rb) <= 0.5

    def test_center_outside(self):
        with pytest.raises(InvalidCenterError):
            unwrap_polar(np.zeros((20, 20)), (30, 5))

    def test_grid_shape(self):
        polar = unwrap_polar(np.zeros((41, 81)), (40, 20))
        assert polar.n_theta == 360
        assert polar.n_r == 21  # min distance to an edge is 20


class TestScanSequence:
    def test_invariants(self):
        with pytest.raises(ValueError):
            ScanSequence(frames=np.zeros((1, 8, 8)), pixel_spacing=0.0, frame_interval=0.03)
        with pytest.raises(ValueError):
            ScanSequence(frames=np.zeros((1, 8, 8)), pixel_spacing=0.5, frame_interval=0.0)
        seq = ScanSequence(frames=np.zeros((3, 8, 9)), pixel_spacing=0.5, frame_interval=0.03)
        assert seq.n_frames == 3 and seq.height == 8 and seq.width == 9


class TestUIPSet:
    def test_collinear_rejected(self):
        with pytest.raises(InvalidUIPError):
            UIPSet.from_points((0, 0), (5, 5), (10, 10))

    def test_center_is_centroid(self):
        uips = UIPSet.from_points((0, 0), (6, 0), (0, 6))
        assert np.allclose(uips.lv_center[0], (2.0, 2.0))

    def test_coincident_rejected(self):
        with pytest.raises(InvalidUIPError):
            UIPSet.from_points((1, 1), (1, 1), (5, 9))


class TestLoading:
    def test_round_trip(self, tmp_path):
        from PIL import Image

        rng = np.random.default_rng(6)
        frames = rng.integers(0, 255, (3, 16, 16)).astype(np.uint8)
        for t in range(3):
            Image.fromarray(frames[t], mode="L").save(tmp_path / f"f_{t:03d}.pgm")
        (tmp_path / "metadata.json").write_text(
            json.dumps({"pixel_spacing_mm": 0.4, "frame_interval_s": 0.05})
        )
        seq = load_sequence(tmp_path)
        assert seq.n_frames == 3
        assert np.array_equal(seq.frames[1], frames[1].astype(float))
        assert seq.pixel_spacing == 0.4

        (tmp_path / "uips.json").write_text(
            json.dumps({"apex": [8, 2], "mv_left": [4, 12], "mv_right": [12, 12]})
        )
        uips = load_uips(tmp_path / "uips.json")
        assert np.allclose(uips.entry(0).apex, (8, 2))

    def test_missing_metadata(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_sequence(tmp_path)
