"""Scan loading, contrast enhancement, median filtering, and polar unwrapping."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import (
    DegenerateContrastError,
    DimensionError,
    InvalidCenterError,
    InvalidUIPError,
)


@dataclass
class ScanSequence:
    """Time-ordered grayscale frames with physical scaling.

    frames: (T, H, W) float array; raw scans are 0..255, contrast-enhanced
    frames are 0..1. pixel_spacing is mm per pixel (isotropic),
    frame_interval is seconds per frame.
    """

    frames: np.ndarray
    pixel_spacing: float
    frame_interval: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim == 2:
            self.frames = self.frames[None]
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise DimensionError("frames must be a (T, H, W) stack with T >= 1")
        if self.pixel_spacing <= 0:
            raise ValueError("pixel_spacing must be > 0")
        if self.frame_interval <= 0:
            raise ValueError("frame_interval must be > 0")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


class FrameUIPs(NamedTuple):
    """One frame's user-input points, pixel coordinates (x, y)."""

    apex: np.ndarray
    mv_left: np.ndarray
    mv_right: np.ndarray
    center: np.ndarray


def _triangle_area(a, b, c) -> float:
    return 0.5 * abs(
        (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
    )


@dataclass
class UIPSet:
    """Per-frame apex and mitral-annulus points with their centroid."""

    apex: np.ndarray      # (T, 2) pixel (x, y)
    mv_left: np.ndarray   # (T, 2)
    mv_right: np.ndarray  # (T, 2)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.apex = np.atleast_2d(np.asarray(self.apex, dtype=np.float64))
        self.mv_left = np.atleast_2d(np.asarray(self.mv_left, dtype=np.float64))
        self.mv_right = np.atleast_2d(np.asarray(self.mv_right, dtype=np.float64))
        if not (self.apex.shape == self.mv_left.shape == self.mv_right.shape):
            raise InvalidUIPError("point arrays must have identical shapes")
        for t in range(self.apex.shape[0]):
            if _triangle_area(self.apex[t], self.mv_left[t], self.mv_right[t]) <= 1e-9:
                raise InvalidUIPError(
                    f"frame {t}: points are collinear or coincident"
                )

    @property
    def n_frames(self) -> int:
        return self.apex.shape[0]

    @property
    def lv_center(self) -> np.ndarray:
        return (self.apex + self.mv_left + self.mv_right) / 3.0

    def entry(self, t: int) -> FrameUIPs:
        return FrameUIPs(
            apex=self.apex[t],
            mv_left=self.mv_left[t],
            mv_right=self.mv_right[t],
            center=self.lv_center[t],
        )

    @classmethod
    def from_points(cls, apex, mv_left, mv_right) -> "UIPSet":
        return cls(apex=[apex], mv_left=[mv_left], mv_right=[mv_right])


@dataclass
class PolarImage:
    """Intensity resampled on an (r, theta) grid centered on the LV center.

    grid[r_bin, theta_bin]; radii in pixels at r_resolution per bin, angles
    at theta_resolution degrees per bin with bin k centered on
    k * theta_resolution.
    """

    grid: np.ndarray
    r_resolution: float
    theta_resolution: float
    origin: tuple

    def __post_init__(self):
        n_bins = self.grid.shape[1]
        if abs(n_bins * self.theta_resolution - 360.0) > 1e-6:
            raise ValueError("theta bins must tile 360 degrees")
        if not np.all(np.isfinite(self.grid)):
            raise ValueError("polar intensities must be finite")

    @property
    def n_r(self) -> int:
        return self.grid.shape[0]

    @property
    def n_theta(self) -> int:
        return self.grid.shape[1]

    def theta_deg(self, bins) -> np.ndarray:
        return np.asarray(bins) * self.theta_resolution

    def sample(self, r, theta_deg):
        """Bilinear lookup at polar coordinates, wrapping theta."""
        r = np.asarray(r, dtype=np.float64)
        tb = np.asarray(theta_deg, dtype=np.float64) / self.theta_resolution
        rb = np.clip(r / self.r_resolution, 0.0, self.n_r - 1.0)
        return ndimage.map_coordinates(
            self.grid, [rb, tb % self.n_theta], order=1, mode="grid-wrap"
        )


def bilinear_sample(frame: np.ndarray, xs, ys) -> np.ndarray:
    """Bilinear interpolation of frame values at (x, y) pixel positions."""
    return ndimage.map_coordinates(
        np.asarray(frame, dtype=np.float64),
        [np.asarray(ys, dtype=np.float64), np.asarray(xs, dtype=np.float64)],
        order=1,
        mode="nearest",
    )


def ace_levels(frame: np.ndarray, uips: FrameUIPs) -> tuple:
    """Contrast reference levels (I1, I2) from the MV-apex line.

    The line runs from the apex to the midpoint of the two mitral-annulus
    points; I1 is one half of its mean intensity and I2 its maximum, both
    sampled bilinearly at one-pixel steps.
    """
    frame = np.asarray(frame, dtype=np.float64)
    apex = np.asarray(uips.apex, dtype=np.float64)
    mid = (np.asarray(uips.mv_left) + np.asarray(uips.mv_right)) / 2.0
    length = float(np.hypot(*(apex - mid)))
    if length < 1e-9:
        raise InvalidUIPError("apex coincides with the mitral-annulus midpoint")
    h, w = frame.shape
    for p in (apex, mid):
        if not (0 <= p[0] <= w - 1 and 0 <= p[1] <= h - 1):
            raise InvalidUIPError("MV-apex line endpoint outside the frame")
    n = int(math.ceil(length)) + 1
    ts = np.linspace(0.0, 1.0, n)
    xs = apex[0] + ts * (mid[0] - apex[0])
    ys = apex[1] + ts * (mid[1] - apex[1])
    line = bilinear_sample(frame, xs, ys)
    i1 = 0.5 * float(line.mean())
    i2 = float(line.max())
    if i2 <= i1:
        raise DegenerateContrastError(f"I2={i2:.4g} <= I1={i1:.4g} along MV-apex line")
    return i1, i2


def apply_ace(frame: np.ndarray, uips: FrameUIPs) -> np.ndarray:
    """Adaptive contrast enhancement from the MV-apex line statistics.

    Output is (frame - I1) / (I2 - I1) clamped to [0, 1] with I1 and I2
    from ace_levels.
    """
    frame = np.asarray(frame, dtype=np.float64)
    i1, i2 = ace_levels(frame, uips)
    return np.clip((frame - i1) / (i2 - i1), 0.0, 1.0)


def median_filter(frame: np.ndarray, size: int = 11) -> np.ndarray:
    """Square median filter with edge replication."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[0] < size or frame.shape[1] < size:
        raise DimensionError(
            f"frame {frame.shape} smaller than {size}x{size} kernel"
        )
    return ndimage.median_filter(frame, size=size, mode="nearest")


def fast_median_unit(frame: np.ndarray, size: int = 11) -> np.ndarray:
    """Histogram-based median of a [0, 1] image on a 10-bit grid.

    Same edge-replication semantics as median_filter; values are quantized
    to 1/1023 steps, which is far below the speckle noise floor. Used on
    the pipeline hot path.
    """
    from skimage.filters import rank

    if frame.shape[0] < size or frame.shape[1] < size:
        raise DimensionError(
            f"frame {frame.shape} smaller than {size}x{size} kernel"
        )
    q = np.clip(np.asarray(frame, dtype=np.float64) * 1023.0, 0.0, 1023.0)
    q = q.astype(np.uint16)
    pad = size // 2
    padded = np.pad(q, pad, mode="edge")
    med = rank.median(padded, np.ones((size, size), dtype=bool))
    return med[pad:-pad, pad:-pad].astype(np.float64) / 1023.0


def polar_angle(y_o, x_o):
    """Two-argument arctangent in degrees, range (-180, 180]; (0, 0) -> 0."""
    return np.degrees(np.arctan2(y_o, x_o))


def unwrap_polar(
    frame: np.ndarray,
    center,
    theta_res: float = 1.0,
    r_res: float = 1.0,
) -> PolarImage:
    """Resample a frame onto polar rays about the LV center.

    Radii run from 0 to the largest circle fully inside the frame in steps
    of r_res pixels; angles sample every theta_res degrees (bin centers at
    k * theta_res). Bilinear interpolation throughout.
    """
    frame = np.asarray(frame, dtype=np.float64)
    h, w = frame.shape
    x_c, y_c = float(center[0]), float(center[1])
    if not (0 <= x_c <= w - 1 and 0 <= y_c <= h - 1):
        raise InvalidCenterError(f"center {center} outside frame {w}x{h}")
    r_max = min(x_c, w - 1 - x_c, y_c, h - 1 - y_c)
    n_r = int(math.floor(r_max / r_res)) + 1
    n_theta = int(round(360.0 / theta_res))
    radii = np.arange(n_r) * r_res
    thetas = np.deg2rad(np.arange(n_theta) * theta_res)
    xs = x_c + radii[:, None] * np.cos(thetas)[None, :]
    ys = y_c + radii[:, None] * np.sin(thetas)[None, :]
    grid = ndimage.map_coordinates(frame, [ys, xs], order=1, mode="nearest")
    return PolarImage(
        grid=grid, r_resolution=r_res, theta_resolution=theta_res, origin=(x_c, y_c)
    )


def load_sequence(scan_dir) -> ScanSequence:
    """Read a directory of PGM/PNG frames plus metadata.json."""
    scan_dir = Path(scan_dir)
    meta_path = scan_dir / "metadata.json"
    if not meta_path.is_file():
        raise FileNotFoundError(f"metadata file not found: {meta_path}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    paths = sorted(
        p for p in scan_dir.iterdir() if p.suffix.lower() in (".pgm", ".png")
    )
    if not paths:
        raise FileNotFoundError(f"no PGM/PNG frames in {scan_dir}")
    frames = []
    for p in paths:
        img = Image.open(p)
        if img.mode not in ("L", "I", "I;16"):
            img = img.convert("L")
        frames.append(np.asarray(img, dtype=np.float64))
    return ScanSequence(
        frames=np.stack(frames),
        pixel_spacing=float(meta["pixel_spacing_mm"]),
        frame_interval=float(meta["frame_interval_s"]),
    )


def load_uips(path) -> UIPSet:
    """Read frame-0 apex / mv_left / mv_right pixel pairs from JSON."""
    with open(path) as fh:
        data = json.load(fh)
    try:
        return UIPSet.from_points(data["apex"], data["mv_left"], data["mv_right"])
    except KeyError as exc:
        raise InvalidUIPError(f"uip file missing key: {exc}") from exc
