"""Sparse node network built from radial intensity peaks of the polar image."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGraphError, WindowTooTightError
from .preprocess import FrameUIPs, PolarImage


def detect_peaks(column) -> np.ndarray:
    """Indices of strict interior local maxima along a 1-D profile.

    Plateaus contribute their center sample (floor of the midpoint);
    endpoints are never peaks.
    """
    x = np.asarray(column, dtype=np.float64)
    if x.size < 3:
        raise ValueError("profile must have at least 3 samples")
    d = np.diff(x)
    nz = np.flatnonzero(d)
    if nz.size < 2:
        return np.empty(0, dtype=np.intp)
    s = np.sign(d[nz])
    turn = np.flatnonzero((s[:-1] > 0) & (s[1:] < 0))
    left = nz[turn] + 1
    right = nz[turn + 1]
    return (left + right) // 2


def prominence(column, peak_index: int) -> float:
    """Peak height above the maximum-valued of its two flanking minima.

    Each flank extends from the peak until a strictly higher sample or the
    profile end; the prominence is the peak value minus the larger of the
    two flank minima.
    """
    x = np.asarray(column, dtype=np.float64)
    if peak_index not in detect_peaks(x):
        raise ValueError(f"index {peak_index} is not a detected peak")
    return float(_prominences(x, np.asarray([peak_index]))[0])


def _prominences(x: np.ndarray, peaks: np.ndarray) -> np.ndarray:
    out = np.empty(peaks.size, dtype=np.float64)
    for k, p in enumerate(peaks):
        v = x[p]
        higher_left = np.flatnonzero(x[:p] > v)
        lo = higher_left[-1] + 1 if higher_left.size else 0
        higher_right = np.flatnonzero(x[p + 1:] > v)
        hi = p + 1 + higher_right[0] if higher_right.size else x.size
        left_min = x[lo:p].min()
        right_min = x[p + 1:hi].min()
        out[k] = v - max(left_min, right_min)
    return out


def circumradius(a, b, c) -> float:
    """Circumradius of the triangle through three points."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    la = np.hypot(*(b - c))
    lb = np.hypot(*(a - c))
    lc = np.hypot(*(a - b))
    area = 0.5 * abs(
        (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
    )
    if area <= 1e-12:
        raise ValueError("degenerate triangle has no circumcircle")
    return la * lb * lc / (4.0 * area)


@dataclass
class NodeGraph:
    """Peak-derived nodes with costs, grouped by theta bin.

    Arrays are parallel and sorted by (theta_bin, r). ids are stable across
    window restriction. cost is the inverse of normalized prominence plus
    normalized intensity; normalization means are frozen at construction.
    """

    theta_bins: np.ndarray   # int, bin index per node
    r: np.ndarray            # pixels
    intensity: np.ndarray
    prominence: np.ndarray
    prom_norm: np.ndarray
    int_norm: np.ndarray
    cost: np.ndarray
    ids: np.ndarray          # stable node ids
    n_theta_bins: int
    theta_res: float
    radial_cap: float
    radial_window: np.ndarray | None = None  # (n_theta_bins, 2) [r_min, r_max]
    pre_prune_count: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.theta_bins.size

    def theta_deg(self) -> np.ndarray:
        return self.theta_bins * self.theta_res


def build_nodes(polar: PolarImage, uips: FrameUIPs, params=None) -> NodeGraph:
    """Detect radial peaks, score them, and prune high-cost nodes.

    Peaks beyond radial_cap_factor times the circumradius of the UIP
    triangle are excluded before normalization. Node cost is
    1 / (prom/mean_prom + int/mean_int); nodes costing more than
    prune_factor times the mean cost are discarded (normalizations are not
    recomputed afterwards).
    """
    from .params import PipelineParams

    params = params or PipelineParams()
    origin = np.asarray(polar.origin, dtype=np.float64)
    r_uip = circumradius(uips.apex, uips.mv_left, uips.mv_right)
    cap = params.radial_cap_factor * r_uip

    bins_list, r_list, int_list, prom_list = [], [], [], []
    for b in range(polar.n_theta):
        col = polar.grid[:, b]
        if col.size < 3:
            continue
        peaks = detect_peaks(col)
        if peaks.size == 0:
            continue
        radii = peaks * polar.r_resolution
        keep = radii <= cap
        peaks = peaks[keep]
        if peaks.size == 0:
            continue
        proms = _prominences(col, peaks)
        bins_list.append(np.full(peaks.size, b, dtype=np.int32))
        r_list.append(radii[keep])
        int_list.append(col[peaks])
        prom_list.append(proms)

    if not bins_list:
        raise EmptyGraphError("no intensity peaks found in the polar image")

    theta_bins = np.concatenate(bins_list)
    r = np.concatenate(r_list)
    intensity = np.concatenate(int_list)
    prom = np.concatenate(prom_list)

    prom_norm = prom / prom.mean()
    int_norm = intensity / intensity.mean() if intensity.mean() > 0 else intensity
    cost = 1.0 / (prom_norm + int_norm)
    pre_prune = cost.size

    keep = cost <= params.prune_factor * cost.mean()
    ids = np.arange(pre_prune, dtype=np.int32)[keep]
    window = np.tile(np.array([0.0, cap]), (polar.n_theta, 1))
    return NodeGraph(
        theta_bins=theta_bins[keep],
        r=r[keep],
        intensity=intensity[keep],
        prominence=prom[keep],
        prom_norm=prom_norm[keep],
        int_norm=int_norm[keep],
        cost=cost[keep],
        ids=ids,
        n_theta_bins=polar.n_theta,
        theta_res=polar.theta_resolution,
        radial_cap=cap,
        radial_window=window,
        pre_prune_count=pre_prune,
        meta={"uip_circumradius": r_uip, "origin": tuple(origin)},
    )


def neighbors(graph: NodeGraph, node_index: int, dl: float, direction: int = 1) -> np.ndarray:
    """Indices of forward neighbors of a node under a theta-distance limit.

    Forward means strictly ahead in the sweep direction by at most dl
    degrees. If that window is empty, the nearest occupied theta ahead
    supplies the neighbors so every node keeps at least one forward
    neighbor when any node lies ahead.
    """
    tb = graph.theta_bins
    steps = ((tb - tb[node_index]) * direction) % graph.n_theta_bins
    dl_bins = int(round(dl / graph.theta_res))
    ahead = steps > 0
    in_window = ahead & (steps <= dl_bins)
    if np.any(in_window):
        return np.flatnonzero(in_window)
    if not np.any(ahead):
        return np.empty(0, dtype=np.intp)
    nearest = steps[ahead].min()
    return np.flatnonzero(steps == nearest)


def restrict_to_window(
    graph: NodeGraph,
    expected,
    tolerance: float,
    halves=None,
) -> NodeGraph:
    """Keep only nodes radially near an expected boundary.

    expected is a Boundary giving r per theta bin; a node at bin b survives
    iff |r - r_expected(b)| <= tolerance * r_expected(b). Costs and
    normalizations are not recomputed. If halves (sequences of theta bins)
    are given and any of them loses all nodes, the window is too tight.
    """
    r_exp = np.full(graph.n_theta_bins, np.nan)
    r_exp[np.asarray(expected.theta_bins, dtype=np.intp)] = expected.r
    exp_at_node = r_exp[graph.theta_bins]
    keep = np.isfinite(exp_at_node) & (
        np.abs(graph.r - exp_at_node) <= tolerance * exp_at_node
    )

    window = np.full((graph.n_theta_bins, 2), np.nan)
    ok = np.isfinite(r_exp)
    window[ok, 0] = r_exp[ok] * (1.0 - tolerance)
    window[ok, 1] = r_exp[ok] * (1.0 + tolerance)

    sub = NodeGraph(
        theta_bins=graph.theta_bins[keep],
        r=graph.r[keep],
        intensity=graph.intensity[keep],
        prominence=graph.prominence[keep],
        prom_norm=graph.prom_norm[keep],
        int_norm=graph.int_norm[keep],
        cost=graph.cost[keep],
        ids=graph.ids[keep],
        n_theta_bins=graph.n_theta_bins,
        theta_res=graph.theta_res,
        radial_cap=graph.radial_cap,
        radial_window=window,
        pre_prune_count=graph.pre_prune_count,
        meta=dict(graph.meta, initialized=True),
    )
    if halves is not None:
        present = set(sub.theta_bins.tolist())
        for bins in halves:
            if not any(int(b) in present for b in np.asarray(bins).ravel()):
                raise WindowTooTightError(
                    "initialization window left a boundary half without nodes"
                )
    if sub.n_nodes == 0:
        raise WindowTooTightError("initialization window removed every node")
    return sub
