"""Volumes, Dice overlap, CNR, ejection fraction, and Bland-Altman stats."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from shapely.geometry import Polygon
from skimage.draw import polygon as sk_polygon
from skimage.draw import polygon_perimeter

from .errors import (
    DimensionError,
    GeometryError,
    InfiniteCnrError,
    InsufficientDataError,
)


@dataclass
class MetricReport:
    dice: float | None = None
    cnr: float | None = None
    edv: float | None = None
    esv: float | None = None
    ef: float | None = None
    bland_altman: tuple | None = None

    def to_dict(self) -> dict:
        return {
            "dice": self.dice,
            "cnr": self.cnr,
            "edv_ml": self.edv,
            "esv_ml": self.esv,
            "ef_percent": self.ef,
            "bland_altman": list(self.bland_altman) if self.bland_altman else None,
        }


def dice(mask_test: np.ndarray, mask_ref: np.ndarray) -> float:
    """Dice similarity 2|A^B| / (|A|+|B|); two empty masks score 1."""
    a = np.asarray(mask_test, dtype=bool)
    b = np.asarray(mask_ref, dtype=bool)
    if a.shape != b.shape:
        raise DimensionError(f"mask grids differ: {a.shape} vs {b.shape}")
    sa, sb = int(a.sum()), int(b.sum())
    if sa + sb == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / (sa + sb)


def cnr(image: np.ndarray, cavity_mask: np.ndarray, myocardium_mask: np.ndarray) -> float:
    """Contrast-to-noise ratio between two regions (population variances)."""
    img = np.asarray(image, dtype=np.float64)
    cav = img[np.asarray(cavity_mask, dtype=bool)]
    myo = img[np.asarray(myocardium_mask, dtype=bool)]
    if cav.size == 0 or myo.size == 0:
        raise ValueError("both masks must be nonempty")
    var_sum = cav.var() + myo.var()
    if var_sum == 0:
        raise InfiniteCnrError("both region variances are zero")
    return float(abs(cav.mean() - myo.mean()) / np.sqrt(var_sum))


def ejection_fraction(edv: float, esv: float) -> float:
    """Ejection fraction in percent."""
    if edv <= 0:
        raise ValueError("EDV must be positive")
    return 100.0 * (edv - esv) / edv


def bland_altman(pairs) -> tuple:
    """(bias, loa_low, loa_high) of paired measurements, 1.96 sample SDs."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise InsufficientDataError("need at least 2 (a, b) pairs")
    d = arr[:, 0] - arr[:, 1]
    bias = float(d.mean())
    sd = float(d.std(ddof=1))
    return bias, bias - 1.96 * sd, bias + 1.96 * sd


def contour_volume(
    points_px: np.ndarray,
    pixel_spacing: float,
    axis: tuple | None = None,
    n_disks: int = 100,
) -> float:
    """Single-plane method-of-disks volume of a closed contour, in mL.

    Disks are erected perpendicular to the long axis (apex to annulus
    midpoint when given, else the contour's longest diameter); each disk's
    diameter is the contour width at that station.
    """
    pts = np.asarray(points_px, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise GeometryError("contour needs at least 3 points")
    if not Polygon(pts).is_valid:
        raise GeometryError("contour is self-intersecting")

    if axis is None:
        base, apex = _longest_diameter(pts)
    else:
        base = np.asarray(axis[0], dtype=np.float64)
        apex = np.asarray(axis[1], dtype=np.float64)
    axis_vec = apex - base
    axis_len = np.hypot(*axis_vec)
    if axis_len <= 0:
        raise GeometryError("degenerate long axis")
    u_hat = axis_vec / axis_len
    v_hat = np.array([-u_hat[1], u_hat[0]])

    rel = pts - base
    u = rel @ u_hat
    v = rel @ v_hat
    u_lo, u_hi = float(u.min()), float(u.max())
    dh = (u_hi - u_lo) / n_disks
    stations = u_lo + (np.arange(n_disks) + 0.5) * dh

    u_next = np.roll(u, -1)
    v_next = np.roll(v, -1)
    du = u_next - u

    volume_px3 = 0.0
    for s in stations:
        t_num = s - u
        crossing = ((u <= s) & (u_next > s)) | ((u_next <= s) & (u > s))
        idx = np.flatnonzero(crossing)
        if idx.size < 2:
            continue
        t = t_num[idx] / du[idx]
        vs = v[idx] + t * (v_next[idx] - v[idx])
        width = vs.max() - vs.min()
        volume_px3 += (np.pi / 4.0) * width * width * dh
    return volume_px3 * pixel_spacing**3 / 1000.0


def _longest_diameter(pts: np.ndarray):
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    i, j = np.unravel_index(np.argmax(d2), d2.shape)
    return pts[i], pts[j]


def rasterize_contour(points_px: np.ndarray, shape, include_boundary: bool = True) -> np.ndarray:
    """Filled pixel mask of a closed contour, boundary pixels included."""
    pts = np.asarray(points_px, dtype=np.float64)
    mask = np.zeros(shape, dtype=bool)
    rr, cc = sk_polygon(pts[:, 1], pts[:, 0], shape=shape)
    mask[rr, cc] = True
    if include_boundary:
        rr, cc = polygon_perimeter(pts[:, 1], pts[:, 0], shape=shape, clip=True)
        mask[rr, cc] = True
    return mask
