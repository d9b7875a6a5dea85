"""Volume-based boundary correction: band detection, relative boundary
position, correction schedule, and power-six rescaling."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateBandError, FlatVolumeError
from .fusesmooth import Boundary
from .params import PipelineParams
from .preprocess import PolarImage

DEG2RAD = math.pi / 180.0

# Daubechies 4-tap orthonormal filter pair
_SQ3 = math.sqrt(3.0)
_D4_H = np.array([1.0 + _SQ3, 3.0 + _SQ3, 3.0 - _SQ3, 1.0 - _SQ3]) / (4.0 * math.sqrt(2.0))
_D4_G = np.array([_D4_H[3], -_D4_H[2], _D4_H[1], -_D4_H[0]])


@dataclass
class BoundaryBand:
    """Inner and outer intensity boundaries bracketing the LV contour."""

    inner: np.ndarray   # r_i per boundary sample, pixels
    outer: np.ndarray   # r_o per boundary sample, pixels
    capped: np.ndarray | None = None  # bool per sample: search hit the field edge
    frame_index: int = 0

    def __post_init__(self):
        self.inner = np.asarray(self.inner, dtype=np.float64)
        self.outer = np.asarray(self.outer, dtype=np.float64)
        if self.capped is None:
            self.capped = np.zeros(self.inner.shape, dtype=bool)
        if np.any(self.inner > self.outer + 1e-9):
            raise DegenerateBandError("inner boundary outside outer boundary")

    def area(self, boundary: Boundary) -> float:
        """Pixel area between the outer and inner closed contours."""
        return _polygon_area(boundary, self.outer) - _polygon_area(boundary, self.inner)


def _polygon_area(boundary: Boundary, radii: np.ndarray) -> float:
    ang = boundary.theta_deg() * DEG2RAD
    x = boundary.origin[0] + radii * np.cos(ang)
    y = boundary.origin[1] + radii * np.sin(ang)
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def find_band(
    boundary: Boundary,
    polar: PolarImage,
    params: PipelineParams | None = None,
) -> BoundaryBand:
    """Locate the inner and outer intensity boundaries along local normals.

    Walking outward from each boundary sample in 1 px steps, the outer
    boundary is the first point whose intensity drops below
    outer_intensity_frac of the sample's own intensity. Walking inward, the
    inner boundary is the deeper of the first local intensity minimum and
    the first point below inner_intensity_frac of the sample intensity.
    Searches stop at the polar field edge (flagged per sample).
    """
    params = params or PipelineParams()
    pts = boundary.cartesian()
    n = pts.shape[0]
    origin = np.asarray(boundary.origin, dtype=np.float64)

    # local normals from central-difference tangents, oriented outward
    tang = np.empty_like(pts)
    tang[1:-1] = pts[2:] - pts[:-2]
    tang[0] = pts[1] - pts[0]
    tang[-1] = pts[-1] - pts[-2]
    norms = np.column_stack([-tang[:, 1], tang[:, 0]])
    nlen = np.hypot(norms[:, 0], norms[:, 1])
    nlen[nlen == 0] = 1.0
    norms /= nlen[:, None]
    outward = ((pts - origin) * norms).sum(axis=1) < 0
    norms[outward] *= -1.0

    field_r = (polar.n_r - 1) * polar.r_resolution
    max_steps = int(field_r) + 2
    ks = np.arange(0, max_steps, dtype=np.float64)

    # sample intensity along every normal in both directions at once
    def ray(sign):
        qx = pts[:, 0:1] + sign * ks[None, :] * norms[:, 0:1]
        qy = pts[:, 1:2] + sign * ks[None, :] * norms[:, 1:2]
        rr = np.hypot(qx - origin[0], qy - origin[1])
        th = np.degrees(np.arctan2(qy - origin[1], qx - origin[0]))
        inside = rr <= field_r
        vals = polar.sample(np.clip(rr, 0, field_r), th)
        return rr, vals, inside

    r_out, v_out, in_out = ray(+1.0)
    r_in, v_in, in_in = ray(-1.0)
    i_b = v_out[:, 0]

    inner = np.empty(n)
    outer = np.empty(n)
    capped = np.zeros(n, dtype=bool)

    for j in range(n):
        # outward: first sample under the outer threshold, inside the field
        limit = int(np.argmin(in_out[j])) if not in_out[j].all() else max_steps
        limit = max(limit, 1)
        below = np.flatnonzero(v_out[j, 1:limit] < params.outer_intensity_frac * i_b[j])
        if below.size:
            outer[j] = r_out[j, below[0] + 1]
        else:
            outer[j] = r_out[j, limit - 1]
            capped[j] = True

        # inward: stop where the ray would cross the center
        rin = r_in[j]
        kmax = int(np.argmax(np.diff(rin) >= 0)) if np.any(np.diff(rin) >= 0) else rin.size - 1
        kmax = max(kmax, 1)
        v = v_in[j, : kmax + 1]
        k_min = None
        for k in range(1, v.size - 1):
            if v[k] < v[k - 1] and v[k] <= v[k + 1]:
                k_min = k
                break
        below = np.flatnonzero(v[1:] < params.inner_intensity_frac * i_b[j])
        k_thr = below[0] + 1 if below.size else None
        picks = [k for k in (k_min, k_thr) if k is not None]
        if picks:
            inner[j] = rin[max(picks)]
        else:
            inner[j] = rin[kmax]
            capped[j] = True

    inner = np.minimum(inner, outer)
    return BoundaryBand(
        inner=inner, outer=outer, capped=capped, frame_index=boundary.frame_index
    )


def wavelet_filter(seq) -> np.ndarray:
    """Low-pass a 1-D sequence via a single-level periodized D4 transform.

    Detail coefficients are zeroed and the signal reconstructed; the output
    mean is pinned to the input mean so the DC content is conserved exactly
    (odd lengths are handled by wrap-padding one sample).
    """
    x = np.asarray(seq, dtype=np.float64)
    n = x.size
    if n < 8:
        warnings.warn("wavelet_filter: fewer than 8 samples, returning input")
        return x.copy()
    padded = n % 2 == 1
    xe = np.append(x, x[-1]) if padded else x
    m = xe.size
    approx = np.zeros(m // 2)
    for k in range(4):
        approx += _D4_H[k] * xe[(2 * np.arange(m // 2) + k) % m]
    recon = np.zeros(m)
    for k in range(4):
        recon[(2 * np.arange(m // 2) + k) % m] += _D4_H[k] * approx
    out = recon[:n]
    out += x.mean() - out.mean()
    return out


def rbp(r_b, r_i, r_o):
    """Relative boundary position (r_b - r_i) / (r_o - r_i); may leave [0, 1]."""
    r_b = np.asarray(r_b, dtype=np.float64)
    r_i = np.asarray(r_i, dtype=np.float64)
    r_o = np.asarray(r_o, dtype=np.float64)
    if np.any(r_o <= r_i):
        raise DegenerateBandError("outer boundary must lie outside inner boundary")
    out = (r_b - r_i) / (r_o - r_i)
    return float(out) if out.ndim == 0 else out


def rbp_inverse(p, r_i, r_o):
    """Radius at a given relative boundary position."""
    return r_i + np.asarray(p, dtype=np.float64) * (r_o - r_i)


@dataclass
class MRBPSchedule:
    """Per-frame corrected boundary-position targets."""

    raw: np.ndarray          # raw mean RBP per frame
    cmrbp_init: np.ndarray   # volume-interpolated targets
    cmrbp_bv: np.ndarray     # per-beat re-anchored targets
    cmrbp_io: np.ndarray     # band-area adjusted targets (used for scaling)
    ed_anchor: float = 0.47
    es_anchor: float = 0.27
    meta: dict = field(default_factory=dict)


def build_schedule(
    raw_volumes,
    beats,
    band_areas,
    raw_mrbp,
    params: PipelineParams | None = None,
) -> MRBPSchedule:
    """Derive the per-frame corrected-MRBP targets.

    cmrbp_init interpolates the volume curve between the across-beat mean
    ESV (-> es anchor) and mean EDV (-> ed anchor), clamped to the anchor
    range. cmrbp_bv repeats the interpolation per beat with that beat's own
    extrema. cmrbp_io pulls cmrbp_bv back toward the raw MRBP in frames
    whose inner/outer band area exceeds the median, clamped to [0, 1].
    """
    params = params or PipelineParams()
    v = np.asarray(raw_volumes, dtype=np.float64)
    areas = np.asarray(band_areas, dtype=np.float64)
    raw_mrbp = np.asarray(raw_mrbp, dtype=np.float64)
    if not beats:
        raise ValueError("at least one beat is required")
    ed_a, es_a = params.cmrbp_ed, params.cmrbp_es

    v_ed = float(np.mean([v[ed] for ed, _ in beats]))
    v_es = float(np.mean([v[es] for _, es in beats]))
    if abs(v_ed - v_es) < 1e-12:
        raise FlatVolumeError("mean EDV equals mean ESV")

    def interp(vol, lo, hi):
        return es_a + (vol - lo) * (ed_a - es_a) / (hi - lo)

    cmrbp_init = np.clip(interp(v, v_es, v_ed), min(es_a, ed_a), max(es_a, ed_a))

    cmrbp_bv = np.empty_like(v)
    ed_frames = [ed for ed, _ in beats]
    bounds = ed_frames[1:] + [v.size]
    start = 0
    flat_beats = []
    for k, (ed, es) in enumerate(beats):
        stop = bounds[k]
        lo, hi = float(v[es]), float(v[ed])
        if abs(hi - lo) < 1e-12:
            cmrbp_bv[start:stop] = cmrbp_init[start:stop]
            flat_beats.append(k)
        else:
            cmrbp_bv[start:stop] = np.clip(
                interp(v[start:stop], lo, hi), min(es_a, ed_a), max(es_a, ed_a)
            )
        start = stop

    med_area = float(np.median(areas))
    ratio = np.where(areas > 0, med_area / np.where(areas > 0, areas, 1.0), 1.0)
    cmrbp_io = np.clip(raw_mrbp + (cmrbp_bv - raw_mrbp) * ratio, 0.0, 1.0)

    return MRBPSchedule(
        raw=raw_mrbp,
        cmrbp_init=cmrbp_init,
        cmrbp_bv=cmrbp_bv,
        cmrbp_io=cmrbp_io,
        ed_anchor=ed_a,
        es_anchor=es_a,
        meta={"flat_beats": flat_beats, "mean_edv": v_ed, "mean_esv": v_es},
    )


def power_pull(values, target: float, exponent: float = 6.0,
               tol: float = 1e-9, max_iter: int = 200) -> np.ndarray:
    """Pull values toward a target until their mean equals it.

    Each pass moves every value toward the target by a fraction
    lambda * (|dev|/max_dev)**exponent of its own distance, so the farthest
    values are corrected most and no value ever crosses the target. lambda
    is solved for an exact mean when that keeps all fractions <= 1;
    otherwise the extremes collapse onto the target first and the pass
    repeats. A final uniform micro-shift pins the mean exactly.
    """
    p = np.asarray(values, dtype=np.float64).copy()
    for _ in range(max_iter):
        gap = target - p.mean()
        if abs(gap) <= tol:
            return p
        g = target - p
        dev = np.abs(g)
        m = dev.max()
        if m == 0:
            return p
        w = (dev / m) ** exponent
        denom = float(np.mean(w * g))
        lam = gap / denom if denom != 0 and gap / denom > 0 else 1.0
        p = p + min(lam, 1.0) * w * g
    return p + (target - p.mean())


def apply_power6(
    boundary: Boundary,
    band: BoundaryBand,
    target: float,
    params: PipelineParams | None = None,
) -> Boundary:
    """Rescale a boundary so its mean RBP equals the target.

    Movement fractions are the normalized deviations from the target raised
    to the sixth power, so the points farthest from the target move most;
    a boundary already on target is returned unchanged.
    """
    params = params or PipelineParams()
    p = rbp(boundary.r, band.inner, band.outer)
    if np.abs(p - target).max() <= 0:
        out = boundary.copy_with()
        out.meta["volume_corrected"] = True
        return out
    p_new = power_pull(p, float(target), params.power_exponent)
    r_new = rbp_inverse(p_new, band.inner, band.outer)
    out = boundary.copy_with(r=r_new)
    out.meta["volume_corrected"] = True
    out.meta["cmrbp_target"] = float(target)
    return out
