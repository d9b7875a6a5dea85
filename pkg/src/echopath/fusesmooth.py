"""Fusing the per-DL paths into one boundary and smoothing it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import PipelineParams
from .pathfind import half_geometry
from .preprocess import FrameUIPs, PolarImage

DEG2RAD = math.pi / 180.0


@dataclass
class Boundary:
    """Closed LV contour as r(theta) samples along the annulus-apex-annulus arc.

    theta_bins walks the arc from one mitral point through the apex to the
    other; consecutive bins differ by one step. The annulus gap is closed by
    the implicit straight segment between the first and last sample.
    """

    theta_bins: np.ndarray
    r: np.ndarray
    origin: tuple          # (x_c, y_c) of the polar grid
    theta_res: float = 1.0
    frame_index: int = 0
    closed: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta_bins = np.asarray(self.theta_bins, dtype=np.int32)
        self.r = np.asarray(self.r, dtype=np.float64)
        if self.theta_bins.size != self.r.size:
            raise ValueError("theta_bins and r must be parallel")
        if self.theta_bins.size and not np.all(np.isfinite(self.r)):
            raise ValueError("boundary radii must be finite")

    @property
    def n_samples(self) -> int:
        return self.r.size

    def theta_deg(self) -> np.ndarray:
        return self.theta_bins * self.theta_res

    def cartesian(self) -> np.ndarray:
        """(N, 2) pixel coordinates of the samples, arc order."""
        ang = self.theta_deg() * DEG2RAD
        x = self.origin[0] + self.r * np.cos(ang)
        y = self.origin[1] + self.r * np.sin(ang)
        return np.column_stack([x, y])

    def copy_with(self, r=None, meta=None) -> "Boundary":
        return Boundary(
            theta_bins=self.theta_bins.copy(),
            r=self.r.copy() if r is None else np.asarray(r, dtype=np.float64),
            origin=self.origin,
            theta_res=self.theta_res,
            frame_index=self.frame_index,
            closed=self.closed,
            meta=dict(self.meta if meta is None else meta),
        )


def boundary_arc(uips: FrameUIPs, n_bins: int, theta_res: float) -> np.ndarray:
    """Theta bins from mv_left through the apex to mv_right, in arc order."""
    apex_bin, left_bin, right_bin, dir_left, _ = half_geometry(uips, n_bins, theta_res)
    step = -dir_left  # walk from mv_left toward the apex
    length = ((right_bin - left_bin) * step) % n_bins
    return (left_bin + step * np.arange(length + 1)) % n_bins


def mqrbf_fuse(
    paths,
    arc_bins: np.ndarray,
    origin,
    theta_res: float = 1.0,
    params: PipelineParams | None = None,
    frame_index: int = 0,
) -> Boundary:
    """Weighted multiquadric RBF regression of all path nodes onto the arc.

    Every node of every path contributes one (theta, r) observation weighted
    by its path's mean normalized prominence. Centers sit at every
    rbf_center_spacing-th arc position; the kernel is
    sqrt(1 + (d/c)^2) with c = rbf_shape_factor * spacing, solved as
    ridge-regularized weighted least squares. A singular system falls back
    to a weighted moving average (flagged in the metadata).
    """
    params = params or PipelineParams()
    arc_bins = np.asarray(arc_bins, dtype=np.int64)
    L = arc_bins.size - 1
    u_of_bin = np.full(int(arc_bins.max()) + 1, -1, dtype=np.int64)
    u_of_bin[arc_bins] = np.arange(L + 1)

    us, rs, ws = [], [], []
    for p in paths:
        u = u_of_bin[np.asarray(p.theta_bins, dtype=np.int64)]
        if np.any(u < 0):
            raise ValueError("path node off the boundary arc")
        us.append(u.astype(np.float64))
        rs.append(np.asarray(p.r, dtype=np.float64))
        ws.append(np.full(u.size, float(p.mean_prominence)))
    u = np.concatenate(us)
    r = np.concatenate(rs)
    w = np.concatenate(ws)
    if w.sum() <= 0:
        w = np.ones_like(w)
    w = w / w.mean()

    spacing = max(1, int(params.rbf_center_spacing))
    centers = np.unique(np.append(np.arange(0, L + 1, spacing), L)).astype(np.float64)
    c = params.rbf_shape_factor * spacing
    u_eval = np.arange(L + 1, dtype=np.float64)

    meta = {"fusion": "mqrbf", "n_paths": len(paths)}
    try:
        phi = np.sqrt(1.0 + ((u[:, None] - centers[None, :]) / c) ** 2)
        aw = phi * w[:, None]
        gram = phi.T @ aw + params.rbf_ridge * np.eye(centers.size)
        rhs = aw.T @ r
        coef = np.linalg.solve(gram, rhs)
        phi_eval = np.sqrt(1.0 + ((u_eval[:, None] - centers[None, :]) / c) ** 2)
        r_fit = phi_eval @ coef
    except np.linalg.LinAlgError:
        r_fit = _weighted_moving_average(u, r, w, u_eval, spacing)
        meta["fusion"] = "moving-average-fallback"

    r_fit = np.maximum(r_fit, 1e-3)
    return Boundary(
        theta_bins=arc_bins,
        r=r_fit,
        origin=tuple(origin),
        theta_res=theta_res,
        frame_index=frame_index,
        meta=meta,
    )


def _weighted_moving_average(u, r, w, u_eval, halfwidth):
    out = np.full(u_eval.size, np.nan)
    for k, ue in enumerate(u_eval):
        m = np.abs(u - ue) <= halfwidth
        if np.any(m) and w[m].sum() > 0:
            out[k] = np.average(r[m], weights=w[m])
    bad = np.isnan(out)
    if np.any(bad):
        good = np.flatnonzero(~bad)
        if good.size == 0:
            raise ValueError("no data for fusion fallback")
        out[bad] = np.interp(np.flatnonzero(bad), good, out[good])
    return out


def boundary_angles(boundary: Boundary) -> np.ndarray:
    """Absolute turning angle (degrees) at each interior sample."""
    pts = boundary.cartesian()
    if pts.shape[0] < 3:
        raise ValueError("need at least 3 samples for turning angles")
    v1 = pts[1:-1] - pts[:-2]
    v2 = pts[2:] - pts[1:-1]
    cross = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]
    dot = (v1 * v2).sum(axis=1)
    return np.abs(np.degrees(np.arctan2(cross, dot)))


def _angle_peak_samples(angles: np.ndarray, threshold: float) -> np.ndarray:
    """Boundary sample indices whose turning angle peaks above threshold."""
    n = angles.size
    peaks = []
    for j in range(n):
        if angles[j] <= threshold:
            continue
        if (j == 0 or angles[j] >= angles[j - 1]) and (
            j == n - 1 or angles[j] >= angles[j + 1]
        ):
            peaks.append(j + 1)  # angle j sits at boundary sample j+1
    return np.asarray(peaks, dtype=np.intp)


def gradient_smooth(
    boundary: Boundary,
    polar: PolarImage,
    params: PipelineParams | None = None,
) -> Boundary:
    """Remove non-physical oscillations around turning-angle peaks.

    For each angle peak, the surrounding segment (bounded by neighboring
    peaks or the 8%-of-boundary cap) is re-drawn as a quadratic through the
    segment endpoints and a radially displaced control point; candidates
    spanning +/-10% of the control radius are scored on normalized
    pathlength, angle-peak count, max |dr/dtheta|, and (negated) mean image
    intensity, and the best one replaces the segment. The full pass runs
    smooth_iterations times.
    """
    params = params or PipelineParams()
    thr = params.angle_peak_threshold_deg
    r_orig = boundary.r.copy()
    work = boundary.copy_with()
    n = work.n_samples
    if n < 5:
        return work

    max_len = max(5, int(round(params.smooth_segment_cap * n)))
    hw = (max_len - 1) // 2
    theta_deg = work.theta_deg()
    ang_rad = theta_deg * DEG2RAD
    cos_t, sin_t = np.cos(ang_rad), np.sin(ang_rad)

    for _ in range(params.smooth_iterations):
        angles = boundary_angles(work)
        peaks = _angle_peak_samples(angles, thr)
        if peaks.size == 0:
            break
        for k, p in enumerate(peaks):
            prev_p = peaks[k - 1] if k > 0 else 0
            next_p = peaks[k + 1] if k + 1 < peaks.size else n - 1
            lo = max(p - hw, prev_p + 1, 1)
            hi = min(p + hw, next_p - 1, n - 2)
            if not (lo < p < hi):
                continue
            work.r = _smooth_segment(
                work.r, r_orig, p, lo, hi, cos_t, sin_t, theta_deg,
                work.origin, polar, thr, params,
            )
    work.meta["gradient_smoothed"] = True
    return work


def _smooth_segment(r, r_orig, p, lo, hi, cos_t, sin_t, theta_deg, origin,
                    polar, thr, params):
    n_off = params.smooth_n_offsets
    deltas = np.linspace(-1.0, 1.0, n_off) * params.smooth_offset_frac * r[p]
    us = np.arange(lo, hi + 1, dtype=np.float64)
    u3 = np.array([lo, p, hi], dtype=np.float64)

    wlo, whi = max(lo - 1, 0), min(hi + 1, r.size - 1)
    seg_cos = cos_t[wlo:whi + 1]
    seg_sin = sin_t[wlo:whi + 1]

    cand_r = np.empty((n_off, hi - lo + 1))
    for i, d in enumerate(deltas):
        r3 = np.array([r[lo], r[p] + d, r[hi]])
        # Lagrange quadratic through the three control points
        l0 = (us - u3[1]) * (us - u3[2]) / ((u3[0] - u3[1]) * (u3[0] - u3[2]))
        l1 = (us - u3[0]) * (us - u3[2]) / ((u3[1] - u3[0]) * (u3[1] - u3[2]))
        l2 = (us - u3[0]) * (us - u3[1]) / ((u3[2] - u3[0]) * (u3[2] - u3[1]))
        rq = r3[0] * l0 + r3[1] * l1 + r3[2] * l2
        lo_lim = r_orig[lo:hi + 1] * (1.0 - params.smooth_offset_frac)
        hi_lim = r_orig[lo:hi + 1] * (1.0 + params.smooth_offset_frac)
        cand_r[i] = np.clip(rq, lo_lim, hi_lim)

    lengths = np.empty(n_off)
    peak_counts = np.empty(n_off)
    max_deriv = np.empty(n_off)
    mean_int = np.empty(n_off)
    for i in range(n_off):
        r_win = r[wlo:whi + 1].copy()
        r_win[lo - wlo:hi - wlo + 1] = cand_r[i]
        x = origin[0] + r_win * seg_cos
        y = origin[1] + r_win * seg_sin
        seg = np.column_stack([x, y])
        d = np.diff(seg, axis=0)
        lengths[i] = np.hypot(d[:, 0], d[:, 1]).sum()
        if seg.shape[0] >= 3:
            v1, v2 = d[:-1], d[1:]
            cr = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]
            dt = (v1 * v2).sum(axis=1)
            a = np.abs(np.degrees(np.arctan2(cr, dt)))
            peak_counts[i] = int((a > thr).sum())
        else:
            peak_counts[i] = 0
        max_deriv[i] = np.abs(np.diff(r_win)).max()
        mean_int[i] = polar.sample(cand_r[i], theta_deg[lo:hi + 1]).mean()

    def norm(v):
        span = v.max() - v.min()
        return (v - v.min()) / span if span > 0 else np.zeros_like(v)

    score = norm(lengths) + norm(peak_counts) + norm(max_deriv) + norm(-mean_int)
    best = int(np.argmin(score))
    out = r.copy()
    out[lo:hi + 1] = cand_r[best]
    return out


def temporal_median_smooth(boundaries, window: int = 5):
    """Median-filter r(theta, t) over a centered frame window.

    The window shrinks at the sequence ends; bins a frame does not cover
    are ignored via NaN handling, so arcs may drift between frames.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    if not boundaries:
        return []
    n_frames = len(boundaries)
    n_bins = int(round(360.0 / boundaries[0].theta_res))
    grid = np.full((n_frames, n_bins), np.nan)
    for t, b in enumerate(boundaries):
        grid[t, b.theta_bins] = b.r
    half = window // 2
    out = []
    for t, b in enumerate(boundaries):
        sl = grid[max(0, t - half):t + half + 1, b.theta_bins]
        med = np.nanmedian(sl, axis=0)
        med = np.where(np.isnan(med), b.r, med)
        nb = b.copy_with(r=med)
        nb.meta["temporal_smoothed"] = True
        out.append(nb)
    return out
