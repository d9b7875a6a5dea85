"""Multi-frame orchestration: point tracking, start-frame selection,
initialized sweeps with the rerun rule, beats, and volume correction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from skimage.feature import match_template

from . import pathfind
from .errors import (
    EchoPathError,
    FlatVolumeError,
    FrameFailureError,
    StartSelectionError,
)
from .fusesmooth import (
    Boundary,
    boundary_arc,
    gradient_smooth,
    mqrbf_fuse,
    temporal_median_smooth,
)
from .metrics import contour_volume
from .nodegraph import build_nodes, restrict_to_window
from .params import PipelineParams
from .nodegraph import circumradius
from .preprocess import (
    FrameUIPs,
    ScanSequence,
    UIPSet,
    ace_levels,
    fast_median_unit,
    unwrap_polar,
)
from .volumecorrect import apply_power6, build_schedule, find_band, rbp, wavelet_filter


@dataclass
class FrameResult:
    """Per-frame segmentation output kept for downstream correction."""

    boundary: Boundary
    polar: object
    node_count: int
    pre_prune_count: int
    flags: dict = field(default_factory=dict)
    paths: dict | None = None
    graph: object | None = None


@dataclass
class SegmentationResult:
    """Whole-sequence output: contours, volumes, beats, and provenance."""

    boundaries: list
    smoothed_boundaries: list
    volume_curve: np.ndarray
    raw_volume_curve: np.ndarray
    beats: list
    edv: np.ndarray
    esv: np.ndarray
    ef: np.ndarray
    uips: UIPSet
    provenance: dict
    debug: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return len(self.boundaries)


def _ncc_shift(prev_frame, curr_frame, center, window, margin, min_corr):
    """Integer displacement of a window by normalized cross-correlation."""
    h, w = prev_frame.shape
    cx, cy = int(round(center[0])), int(round(center[1]))
    half = window // 2
    # keep the search box (template +/- margin) fully inside the frame so
    # every offset up to the margin stays reachable near the borders
    tx0, tx1 = max(margin, cx - half), min(w - margin, cx + half)
    ty0, ty1 = max(margin, cy - half), min(h - margin, cy + half)
    if tx1 - tx0 < 8 or ty1 - ty0 < 8:
        tx0, tx1 = max(0, cx - half), min(w, cx + half)
        ty0, ty1 = max(0, cy - half), min(h, cy + half)
        if tx1 - tx0 < 8 or ty1 - ty0 < 8:
            return (0, 0), 0.0
    sx0, sx1 = max(0, tx0 - margin), min(w, tx1 + margin)
    sy0, sy1 = max(0, ty0 - margin), min(h, ty1 + margin)
    template = prev_frame[ty0:ty1, tx0:tx1]
    search = curr_frame[sy0:sy1, sx0:sx1]
    if template.std() == 0 or search.std() == 0:
        return (0, 0), 0.0
    corr = match_template(search, template)
    if not np.all(np.isfinite(corr)):
        return (0, 0), 0.0
    py, px = np.unravel_index(int(np.argmax(corr)), corr.shape)
    peak = float(corr[py, px])
    if peak < min_corr:
        return (0, 0), peak
    return (sx0 + px - tx0, sy0 + py - ty0), peak


def track_uips(seq: ScanSequence, initial: UIPSet, params: PipelineParams | None = None) -> UIPSet:
    """Track the three input points frame to frame by cross-correlation.

    A track_window_px square window centered on the previous position
    (clipped at the borders) is matched against the next frame; the
    integer-pixel correlation peak moves the point. A peak below
    track_min_corr carries the position over with a warning.
    """
    params = params or PipelineParams()
    entry = initial.entry(0)
    h, w = seq.frames[0].shape
    for name, p in (("apex", entry.apex), ("mv_left", entry.mv_left), ("mv_right", entry.mv_right)):
        if not (1 <= p[0] <= w - 2 and 1 <= p[1] <= h - 2):
            raise ValueError(f"{name} point must be at least 1 px inside frame 0")

    T = seq.n_frames
    pts = {
        "apex": np.tile(np.asarray(entry.apex, float), (T, 1)),
        "mv_left": np.tile(np.asarray(entry.mv_left, float), (T, 1)),
        "mv_right": np.tile(np.asarray(entry.mv_right, float), (T, 1)),
    }
    warnings_list = []
    for t in range(1, T):
        for name in pts:
            prev = pts[name][t - 1]
            (dx, dy), peak = _ncc_shift(
                seq.frames[t - 1],
                seq.frames[t],
                prev,
                params.track_window_px,
                params.track_search_margin_px,
                params.track_min_corr,
            )
            if peak < params.track_min_corr:
                warnings_list.append(
                    f"frame {t}: {name} correlation {peak:.2f} below threshold, carried over"
                )
                pts[name][t] = prev
            else:
                pts[name][t] = prev + np.array([dx, dy], dtype=float)
    return UIPSet(
        apex=pts["apex"],
        mv_left=pts["mv_left"],
        mv_right=pts["mv_right"],
        warnings=warnings_list,
    )


def expected_boundary(previous: Boundary, uips_prev: FrameUIPs, uips_curr: FrameUIPs) -> Boundary:
    """Previous boundary shifted by the mean radial displacement of the points.

    All radii are measured from the current frame's LV center.
    """
    center = np.asarray(uips_curr.center, dtype=np.float64)
    shift = 0.0
    for prev_p, curr_p in (
        (uips_prev.apex, uips_curr.apex),
        (uips_prev.mv_left, uips_curr.mv_left),
        (uips_prev.mv_right, uips_curr.mv_right),
    ):
        r_prev = np.hypot(*(np.asarray(prev_p, float) - center))
        r_curr = np.hypot(*(np.asarray(curr_p, float) - center))
        shift += (r_curr - r_prev) / 3.0
    out = previous.copy_with(r=np.maximum(previous.r + shift, 1.0))
    out.origin = tuple(center)
    out.meta["expected_shift"] = float(shift)
    return out


def segment_frame(
    frame: np.ndarray,
    uips: FrameUIPs,
    params: PipelineParams | None = None,
    frame_index: int = 0,
    expected: Boundary | None = None,
    keep_debug: bool = False,
) -> FrameResult:
    """Segment a single frame, optionally initialized by an expected boundary."""
    params = params or PipelineParams()
    polar = _prepare_polar(frame, uips, params)
    graph = build_nodes(polar, uips, params)
    pre_prune = graph.pre_prune_count
    flags = {"initialized": expected is not None}

    arc = boundary_arc(uips, polar.n_theta, params.theta_res_deg)
    if expected is not None:
        apex_bin = pathfind.half_geometry(uips, polar.n_theta, params.theta_res_deg)[0]
        pos = int(np.flatnonzero(arc == apex_bin)[0])
        halves = [arc[: pos + 1], arc[pos:]]
        graph = restrict_to_window(graph, expected, params.init_window_tol, halves=halves)

    paths = pathfind.dl_sweep(graph, uips, params)
    all_paths = paths["left"] + paths["right"]
    fused = mqrbf_fuse(
        all_paths, arc, polar.origin, params.theta_res_deg, params, frame_index
    )
    smoothed = gradient_smooth(fused, polar, params)
    smoothed.frame_index = frame_index
    if any(p.meta.get("anchor_relaxed") for p in all_paths):
        flags["anchor_relaxed"] = True
    return FrameResult(
        boundary=smoothed,
        polar=polar,
        node_count=graph.n_nodes,
        pre_prune_count=pre_prune,
        flags=flags,
        paths=paths if keep_debug else None,
        graph=graph if keep_debug else None,
    )


def select_start_frame(seq: ScanSequence, uips: UIPSet, params: PipelineParams | None = None):
    """Pick the start frame whose boundary is closest to the median boundary.

    Candidates are the first start_frame_window frames (scans are gated to
    begin at diastole); the per-pixel temporal median image contributes a
    boundary to the median but cannot itself win.
    """
    params = params or PipelineParams()
    n_cand = min(params.start_frame_window, seq.n_frames)
    candidates = {}
    for k in range(n_cand):
        try:
            candidates[k] = segment_frame(seq.frames[k], uips.entry(k), params, frame_index=k)
        except EchoPathError:
            continue
    if not candidates:
        raise StartSelectionError("all candidate start frames failed to segment")

    boundaries = {k: fr.boundary for k, fr in candidates.items()}
    median_boundary = None
    if seq.n_frames > 1:
        try:
            median_img = np.median(seq.frames, axis=0)
            median_boundary = segment_frame(
                median_img, uips.entry(0), params, frame_index=0
            ).boundary
        except EchoPathError:
            median_boundary = None

    stack = list(boundaries.values()) + ([median_boundary] if median_boundary else [])
    common = set(stack[0].theta_bins.tolist())
    for b in stack[1:]:
        common &= set(b.theta_bins.tolist())
    common = np.array(sorted(common), dtype=np.int64)
    if common.size == 0:
        start = min(candidates)
        return start, {"candidates": sorted(candidates), "scores": {}, "frame_result": candidates[start]}

    rs = []
    for b in stack:
        lookup = np.full(int(b.theta_bins.max()) + 1, np.nan)
        lookup[b.theta_bins] = b.r
        rs.append(lookup[common])
    r_med = np.median(np.vstack(rs), axis=0)

    scores = {}
    for idx, k in enumerate(boundaries):
        scores[k] = float(np.mean(np.abs(rs[idx] - r_med)))
    start = min(scores, key=lambda k: (scores[k], k))
    return start, {
        "candidates": sorted(candidates),
        "scores": scores,
        "frame_result": candidates[start],
    }


def detect_beats(volume_curve, smooth_window: int = 5) -> list:
    """(ED frame, ES frame) pairs from extrema of the smoothed volume curve.

    Frame 0 counts as an ED candidate and the last frame as an ES
    candidate; a monotone curve yields no beats.
    """
    v = np.asarray(volume_curve, dtype=np.float64)
    if v.size < 3:
        return []
    half = max(1, smooth_window // 2)
    vs = np.array([v[max(0, i - half): i + half + 1].mean() for i in range(v.size)])

    def interior_extrema(x):
        d = np.diff(x)
        nz = np.flatnonzero(d)
        if nz.size < 2:
            return []
        s = np.sign(d[nz])
        turn = np.flatnonzero((s[:-1] > 0) & (s[1:] < 0))
        return [int((nz[i] + 1 + nz[i + 1]) // 2) for i in turn]

    interior_eds = interior_extrema(vs)
    eds = list(interior_eds)
    if vs[0] >= vs[1]:
        eds = [0] + [e for e in eds if e != 0]
    interior_ess = interior_extrema(-vs)
    ess = list(interior_ess)
    if vs[-1] <= vs[-2]:
        ess = ess + [v.size - 1]

    beats = []
    eds_sorted = sorted(set(eds))
    ess_sorted = sorted(set(ess))
    endpoint_only = not interior_eds and not interior_ess
    for i, ed in enumerate(eds_sorted):
        next_ed = eds_sorted[i + 1] if i + 1 < len(eds_sorted) else v.size
        es_options = [e for e in ess_sorted if ed < e < next_ed]
        if not es_options:
            continue
        es = es_options[0]
        # a monotone curve has only the two endpoint candidates: no beat
        if endpoint_only and ed == 0 and es == v.size - 1:
            continue
        beats.append((ed, es))
    return beats


def _temporal_median_series(bins_list, values_list, n_bins, window):
    grid = np.full((len(bins_list), n_bins), np.nan)
    for t, (bins, vals) in enumerate(zip(bins_list, values_list)):
        grid[t, bins] = vals
    half = window // 2
    out = []
    for t, (bins, vals) in enumerate(zip(bins_list, values_list)):
        sl = grid[max(0, t - half): t + half + 1, bins]
        med = np.nanmedian(sl, axis=0)
        out.append(np.where(np.isnan(med), vals, med))
    return out


def boundary_volume_ml(boundary: Boundary, uips: FrameUIPs, pixel_spacing: float,
                       n_disks: int = 100) -> float:
    """Method-of-disks volume of a boundary about its apex/annulus axis."""
    base_mid = (np.asarray(uips.mv_left, float) + np.asarray(uips.mv_right, float)) / 2.0
    return contour_volume(
        boundary.cartesian(),
        pixel_spacing,
        axis=(base_mid, np.asarray(uips.apex, float)),
        n_disks=n_disks,
    )


def segment_sequence(
    seq: ScanSequence,
    uips_initial: UIPSet,
    params: PipelineParams | None = None,
    keep_debug: bool = False,
    direction_order: tuple = ("forward", "backward"),
) -> SegmentationResult:
    """Segment every frame of a sequence and derive volumes and beats.

    The start frame is segmented uninitialized; the rest are processed
    outward in both temporal directions, each initialized by the expected
    boundary from its already-segmented neighbor. A frame whose initialized
    boundary changes by more than the rerun threshold (or whose initialized
    run fails) is rerun uninitialized; a frame failing both ways is
    interpolated from its temporal neighbors and flagged.
    """
    params = params or PipelineParams()
    T = seq.n_frames
    uips = track_uips(seq, uips_initial, params) if T > 1 else UIPSet(
        apex=uips_initial.apex[:1],
        mv_left=uips_initial.mv_left[:1],
        mv_right=uips_initial.mv_right[:1],
    )

    start, start_info = select_start_frame(seq, uips, params)
    results: dict[int, FrameResult | None] = {start: start_info["frame_result"]}
    rerun_flags: dict[int, bool] = {}
    missing: list[int] = []

    chains = []
    for direction in direction_order:
        if direction == "forward":
            chains.append(list(range(start + 1, T)))
        else:
            chains.append(list(range(start - 1, -1, -1)))

    for chain in chains:
        last_good = start
        for t in chain:
            prev_fr = results.get(last_good)
            frame_res = None
            if prev_fr is not None:
                expected = expected_boundary(
                    prev_fr.boundary, uips.entry(last_good), uips.entry(t)
                )
                try:
                    frame_res = segment_frame(
                        seq.frames[t], uips.entry(t), params,
                        frame_index=t, expected=expected, keep_debug=keep_debug,
                    )
                    change = _boundary_change(frame_res.boundary, prev_fr.boundary)
                    if change > params.rerun_threshold:
                        rerun_flags[t] = True
                        frame_res = None
                except EchoPathError:
                    frame_res = None
            if frame_res is None:
                try:
                    frame_res = segment_frame(
                        seq.frames[t], uips.entry(t), params,
                        frame_index=t, keep_debug=keep_debug,
                    )
                except EchoPathError:
                    frame_res = None
            if frame_res is None:
                missing.append(t)
                results[t] = None
            else:
                results[t] = frame_res
                last_good = t

    if all(results.get(t) is None for t in range(T)):
        raise FrameFailureError("no frame could be segmented")

    boundaries = _fill_missing(results, uips, T)
    smoothed = temporal_median_smooth(boundaries, params.temporal_window)
    for t, b in enumerate(smoothed):
        b.frame_index = t

    raw_volumes = np.array([
        boundary_volume_ml(smoothed[t], uips.entry(t), seq.pixel_spacing, params.n_disks)
        for t in range(T)
    ])
    beats = detect_beats(raw_volumes, params.beat_smooth_window) if T >= 3 else []

    corrected = smoothed
    corrected_volumes = raw_volumes
    schedule = None
    bands = None
    band_areas = None
    correction_flag = "applied"
    if beats:
        try:
            corrected, schedule, bands, band_areas = _volume_correction(
                seq, smoothed, results, raw_volumes, beats, uips, params
            )
            corrected_volumes = np.array([
                boundary_volume_ml(corrected[t], uips.entry(t), seq.pixel_spacing, params.n_disks)
                for t in range(T)
            ])
        except FlatVolumeError:
            correction_flag = "skipped-flat-volume"
    else:
        correction_flag = "skipped-no-beats"

    edv, esv, ef, valid_beats = [], [], [], []
    for ed, es in beats:
        v_ed, v_es = float(corrected_volumes[ed]), float(corrected_volumes[es])
        if v_ed > v_es > 0:
            valid_beats.append((ed, es))
            edv.append(v_ed)
            esv.append(v_es)
            ef.append(100.0 * (v_ed - v_es) / v_ed)

    provenance = {
        "start_frame": start,
        "start_scores": start_info.get("scores", {}),
        "rerun_frames": sorted(rerun_flags),
        "missing_frames": sorted(missing),
        "correction": correction_flag,
        "tracking_warnings": uips.warnings,
        "params": params.to_dict(),
        "backend": pathfind.BACKEND,
        "node_counts": {t: results[t].node_count for t in results if results[t]},
    }
    debug = {
        "schedule": schedule,
        "band_areas": band_areas,
        "frame_results": results if keep_debug else None,
        "bands": bands if keep_debug else None,
    }
    return SegmentationResult(
        boundaries=corrected,
        smoothed_boundaries=smoothed,
        volume_curve=corrected_volumes,
        raw_volume_curve=raw_volumes,
        beats=valid_beats,
        edv=np.asarray(edv),
        esv=np.asarray(esv),
        ef=np.asarray(ef),
        uips=uips,
        provenance=provenance,
        debug=debug,
    )


def _boundary_change(new: Boundary, prev: Boundary) -> float:
    """Mean relative radial change over the bins both boundaries cover."""
    lookup = np.full(max(int(new.theta_bins.max()), int(prev.theta_bins.max())) + 1, np.nan)
    lookup[prev.theta_bins] = prev.r
    prev_r = lookup[new.theta_bins]
    ok = np.isfinite(prev_r) & (prev_r > 0)
    if not np.any(ok):
        return 0.0
    return float(np.mean(np.abs(new.r[ok] - prev_r[ok]) / prev_r[ok]))


def _fill_missing(results: dict, uips: UIPSet, T: int) -> list:
    """Linear interpolation of missing frames from their nearest neighbors."""
    boundaries: list = [None] * T
    for t in range(T):
        fr = results.get(t)
        if fr is not None:
            boundaries[t] = fr.boundary
    good = [t for t in range(T) if boundaries[t] is not None]
    for t in range(T):
        if boundaries[t] is not None:
            continue
        before = max((g for g in good if g < t), default=None)
        after = min((g for g in good if g > t), default=None)
        if before is None:
            src = boundaries[after].copy_with()
        elif after is None:
            src = boundaries[before].copy_with()
        else:
            b0, b1 = boundaries[before], boundaries[after]
            w = (t - before) / (after - before)
            lookup = np.full(
                max(int(b0.theta_bins.max()), int(b1.theta_bins.max())) + 1, np.nan
            )
            lookup[b1.theta_bins] = b1.r
            r1 = lookup[b0.theta_bins]
            r = np.where(np.isfinite(r1), (1 - w) * b0.r + w * r1, b0.r)
            src = b0.copy_with(r=r)
        src.frame_index = t
        src.origin = tuple(uips.entry(t).center)
        src.meta["interpolated"] = True
        boundaries[t] = src
    return boundaries


def _volume_correction(seq, smoothed, results, raw_volumes, beats, uips, params):
    """Band detection, filtering, schedule, and power-weighted rescaling."""
    T = len(smoothed)
    bands = []
    for t in range(T):
        fr = results.get(t)
        polar = fr.polar if fr is not None else None
        if polar is None:
            polar = _polar_for_frame(seq.frames[t], uips.entry(t), params)
        bands.append(find_band(smoothed[t], polar, params))

    # a running median along theta stands in for gradient smoothing of the
    # band contours: it removes isolated deep-walk outliers without being
    # pulled toward bright ridges
    inner_f = [wavelet_filter(_theta_median(b.inner, 7)) for b in bands]
    outer_f = [wavelet_filter(_theta_median(b.outer, 7)) for b in bands]
    n_bins = int(round(360.0 / params.theta_res_deg))
    bins_list = [b.theta_bins for b in smoothed]
    inner_f = _temporal_median_series(bins_list, inner_f, n_bins, params.temporal_window)
    outer_f = _temporal_median_series(bins_list, outer_f, n_bins, params.temporal_window)

    mrbp_raw = np.empty(T)
    areas = np.empty(T)
    for t, band in enumerate(bands):
        band.inner = np.minimum(inner_f[t], outer_f[t] - 0.5)
        band.outer = np.maximum(outer_f[t], band.inner + 0.5)
        mrbp_raw[t] = float(np.mean(rbp(smoothed[t].r, band.inner, band.outer)))
        areas[t] = band.area(smoothed[t])

    schedule = build_schedule(raw_volumes, beats, areas, mrbp_raw, params)
    corrected = [
        apply_power6(smoothed[t], bands[t], float(schedule.cmrbp_io[t]), params)
        for t in range(T)
    ]
    for t, b in enumerate(corrected):
        b.frame_index = t
    return corrected, schedule, bands, areas


def _theta_median(values: np.ndarray, window: int) -> np.ndarray:
    from scipy import ndimage

    return ndimage.median_filter(np.asarray(values, float), size=window, mode="nearest")


def _prepare_polar(frame, uips, params):
    """Contrast-enhance, median-filter, and unwrap one frame.

    The frame is cropped to the square covering the node radial cap before
    filtering; the polar origin is reported in full-frame coordinates.
    """
    frame = np.asarray(frame, dtype=np.float64)
    h, w = frame.shape
    cx, cy = float(uips.center[0]), float(uips.center[1])

    r_need = params.radial_cap_factor * circumradius(
        uips.apex, uips.mv_left, uips.mv_right
    )
    half = int(math.ceil(r_need)) + params.median_size + 4
    x0, x1 = max(0, int(cx) - half), min(w, int(cx) + half + 1)
    y0, y1 = max(0, int(cy) - half), min(h, int(cy) + half + 1)
    crop = frame[y0:y1, x0:x1]

    if params.apply_contrast:
        i1, i2 = ace_levels(frame, uips)
        crop = np.clip((crop - i1) / (i2 - i1), 0.0, 1.0)
    else:
        span = crop.max() - crop.min()
        crop = (crop - crop.min()) / span if span > 0 else np.zeros_like(crop)
    filtered = fast_median_unit(crop, params.median_size)
    polar = unwrap_polar(filtered, (cx - x0, cy - y0), params.theta_res_deg)
    polar.origin = (cx, cy)
    return polar


def _polar_for_frame(frame, uips_entry, params):
    return _prepare_polar(frame, uips_entry, params)
