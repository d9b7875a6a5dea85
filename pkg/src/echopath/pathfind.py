"""Iterative shortest-path extraction over the node network.

The relaxation loop is the hot kernel of the whole pipeline; a compiled
extension provides it when available and a pure-Python implementation is
selected at import time otherwise (or when ECHOPATH_BACKEND=python is set).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import AnchorNodeError, HalfFailureError, NoPathError
from .nodegraph import NodeGraph
from .params import CostParams, PipelineParams
from .preprocess import FrameUIPs, polar_angle

if os.environ.get("ECHOPATH_BACKEND", "").lower() == "python":
    from . import _dijkstra_py as _kernel

    BACKEND = "python"
else:
    try:
        from . import _dijkstra_cy as _kernel

        BACKEND = "cython"
    except ImportError:
        from . import _dijkstra_py as _kernel

        BACKEND = "python"

RAD2DEG = 180.0 / math.pi
DEG2RAD = math.pi / 180.0


def cost_dist(r_o: float, r_n: float, dtheta_deg: float) -> float:
    """Chord length in pixels between two polar nodes (law of cosines)."""
    csq = r_n * r_n + r_o * r_o - 2.0 * r_n * r_o * math.cos(dtheta_deg * DEG2RAD)
    return math.sqrt(csq) if csq > 0.0 else 0.0


def cost_angle(dr_bins: float, dtheta_bins: float, angle_factor: float = 0.1) -> float:
    """Deviation of a step from the pure-angular direction, in degrees.

    Evaluated on grid-unit displacements; a step along theta scores 0 and a
    purely radial step scores angle_factor * 90.
    """
    if dr_bins == 0.0 and dtheta_bins == 0.0:
        return 0.0
    return angle_factor * abs(90.0 - math.atan2(dtheta_bins, dr_bins) * RAD2DEG)


def td_update(td_current: float, nc: float, c_angle: float, c_dist: float,
              params: CostParams | None = None) -> float:
    """One tentative-distance accumulation step."""
    params = params or CostParams()
    return td_current + params.alpha * nc + params.gamma * c_angle + c_dist ** params.beta


@dataclass
class PathResult:
    """One shortest path through a boundary half."""

    node_ids: np.ndarray      # stable graph ids, start to end
    node_indices: np.ndarray  # positions in the graph arrays
    theta_bins: np.ndarray
    r: np.ndarray
    total_cost: float
    mean_prominence: float
    dl: float
    half: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.node_ids.size


class HalfView:
    """Node arrays of one boundary half, sorted by sweep step.

    The sweep runs from the apex bin toward an end bin in the given
    direction (+1 counterclockwise bins, -1 clockwise); step = angular
    distance from the apex bin.
    """

    def __init__(self, graph: NodeGraph, apex_bin: int, end_bin: int, direction: int):
        nb = graph.n_theta_bins
        self.graph = graph
        self.apex_bin = int(apex_bin) % nb
        self.end_bin = int(end_bin) % nb
        self.direction = direction
        self.n_steps = ((self.end_bin - self.apex_bin) * direction) % nb

        steps_all = ((graph.theta_bins.astype(np.int64) - self.apex_bin) * direction) % nb
        mask = steps_all <= self.n_steps
        sel = np.flatnonzero(mask)
        order = np.lexsort((graph.ids[sel], steps_all[sel]))
        sel = sel[order]

        self.node_sel = sel                       # graph indices, half order
        self.steps = steps_all[sel].astype(np.int32)
        self.r = graph.r[sel].astype(np.float64)
        self.nc = graph.cost[sel].astype(np.float64)
        self.gids = graph.ids[sel].astype(np.int32)

        counts = np.bincount(self.steps, minlength=self.n_steps + 1)
        self.col_start = np.concatenate(
            ([0], np.cumsum(counts))
        ).astype(np.int32)

        next_occ = np.full(self.n_steps + 2, -1, dtype=np.int32)
        for s in range(self.n_steps, -1, -1):
            next_occ[s] = s if counts[s] > 0 else next_occ[s + 1]
        self.next_occ = next_occ

        self.cos_table = np.cos(
            np.arange(self.n_steps + 1, dtype=np.float64)
            * graph.theta_res * DEG2RAD
        )

    def run(self, sources, targets, dl_bins, params: CostParams):
        return _kernel.dijkstra_half(
            self.steps,
            self.r,
            self.nc,
            self.gids,
            self.col_start,
            self.next_occ,
            int(self.n_steps),
            np.asarray(sources, dtype=np.int32),
            np.asarray(targets, dtype=np.int32),
            int(dl_bins),
            float(params.alpha),
            float(params.beta),
            float(params.gamma),
            float(params.angle_factor),
            self.cos_table,
        )

    def extract_path(self, best, dist, parent, dl, params) -> PathResult:
        chain = []
        u = best
        while u >= 0:
            chain.append(u)
            u = int(parent[u])
        chain.reverse()
        local = np.asarray(chain, dtype=np.intp)
        sel = self.node_sel[local]
        graph = self.graph
        return PathResult(
            node_ids=graph.ids[sel],
            node_indices=sel,
            theta_bins=graph.theta_bins[sel],
            r=graph.r[sel],
            total_cost=float(dist[best]),
            mean_prominence=float(graph.prom_norm[sel].mean()),
            dl=dl,
        )


def shortest_path(graph: NodeGraph, start_id: int, end_id: int, dl: float,
                  params: CostParams | None = None, direction: int = 1) -> PathResult:
    """Minimum tentative-distance path between two nodes of the graph.

    The start node's theta must lie strictly before the end node's in the
    sweep direction; ties during extraction break on the lower node id.
    """
    params = params or CostParams()
    i_start = int(np.flatnonzero(graph.ids == start_id)[0])
    i_end = int(np.flatnonzero(graph.ids == end_id)[0])
    nb = graph.n_theta_bins
    arc = ((graph.theta_bins[i_end] - graph.theta_bins[i_start]) * direction) % nb
    if arc == 0:
        raise NoPathError("start and end share the same theta")
    half = HalfView(graph, graph.theta_bins[i_start], graph.theta_bins[i_end], direction)
    src = np.flatnonzero(half.node_sel == i_start)
    tgt = np.flatnonzero(half.node_sel == i_end)
    dl_bins = max(1, int(round(dl / graph.theta_res)))
    best, dist, parent = half.run(src, tgt, dl_bins, params)
    if best < 0:
        raise NoPathError(f"node {end_id} unreachable from {start_id} at DL={dl}")
    return half.extract_path(best, dist, parent, dl, params)


def _anchor_candidates(half: HalfView, at_end: bool, anchor_r: float,
                       radial_tol: float, theta_tol_bins: int):
    """Local indices of candidate anchor nodes near one end of the half.

    Searches the anchor theta bin first, widening the window one bin at a
    time; within a window, nodes within radial_tol pixels of the anchor
    radius qualify. If the widened window holds nodes but none within
    tolerance, the radially closest node is used (flagged as relaxed).
    """
    steps = half.steps
    n_steps = half.n_steps
    relaxed = False
    for w in range(theta_tol_bins + 1):
        if at_end:
            in_win = steps >= n_steps - w
        else:
            in_win = steps <= w
        idx = np.flatnonzero(in_win)
        if idx.size == 0:
            continue
        dr = np.abs(half.r[idx] - anchor_r)
        ok = idx[dr <= radial_tol]
        if ok.size:
            return ok, relaxed
    idx = np.flatnonzero(
        (steps >= n_steps - theta_tol_bins) if at_end else (steps <= theta_tol_bins)
    )
    if idx.size == 0:
        raise AnchorNodeError(
            "no nodes near the %s anchor" % ("annulus" if at_end else "apex")
        )
    closest = idx[np.argmin(np.abs(half.r[idx] - anchor_r))]
    return np.asarray([closest]), True


def segment_half(graph: NodeGraph, uips: FrameUIPs, which: str, dl: float,
                 params: PipelineParams | None = None,
                 half_view: HalfView | None = None) -> PathResult:
    """Shortest path of one boundary half, apex to one annulus point.

    A virtual source feeds every apex-theta candidate within the radial
    tolerance of the apex radius at zero cost, and a virtual sink collects
    the mitral candidates likewise; the realized node path is returned.
    """
    params = params or PipelineParams()
    half = half_view or make_half_view(graph, uips, which)
    center = np.asarray(uips.center, dtype=np.float64)
    apex_r = float(np.hypot(*(np.asarray(uips.apex) - center)))
    mv_point = uips.mv_left if which == "left" else uips.mv_right
    mv_r = float(np.hypot(*(np.asarray(mv_point) - center)))

    src, src_relaxed = _anchor_candidates(
        half, False, apex_r, params.anchor_radial_tol_px, params.anchor_theta_tol_bins
    )
    tgt, tgt_relaxed = _anchor_candidates(
        half, True, mv_r, params.anchor_radial_tol_px, params.anchor_theta_tol_bins
    )
    dl_bins = max(1, int(round(dl / graph.theta_res)))
    best, dist, parent = half.run(src, tgt, dl_bins, params.cost)
    if best < 0:
        raise NoPathError(f"{which} half unreachable at DL={dl}")
    path = half.extract_path(best, dist, parent, dl, params.cost)
    path.half = which
    path.meta["anchor_relaxed"] = src_relaxed or tgt_relaxed
    return path


def make_half_view(graph: NodeGraph, uips: FrameUIPs, which: str) -> HalfView:
    apex_bin, left_bin, right_bin, dir_left, dir_right = half_geometry(
        uips, graph.n_theta_bins, graph.theta_res
    )
    if which == "left":
        return HalfView(graph, apex_bin, left_bin, dir_left)
    return HalfView(graph, apex_bin, right_bin, dir_right)


def half_geometry(uips: FrameUIPs, n_bins: int, theta_res: float):
    """Theta bins of the three anchors and the sweep direction per half.

    Each half sweeps from the apex bin to one annulus bin along the arc
    that avoids the other annulus point, so the two halves tile the
    boundary through the apex.
    """
    center = np.asarray(uips.center, dtype=np.float64)

    def to_bin(p):
        ang = polar_angle(p[1] - center[1], p[0] - center[0]) % 360.0
        return int(round(ang / theta_res)) % n_bins

    apex_bin = to_bin(uips.apex)
    left_bin = to_bin(uips.mv_left)
    right_bin = to_bin(uips.mv_right)

    ccw_to_left = (left_bin - apex_bin) % n_bins
    ccw_to_right = (right_bin - apex_bin) % n_bins
    # walk toward mv_left along the arc not containing mv_right
    dir_left = 1 if ccw_to_left < ccw_to_right else -1
    dir_right = -dir_left
    return apex_bin, left_bin, right_bin, dir_left, dir_right


def dl_sweep(graph: NodeGraph, uips: FrameUIPs,
             params: PipelineParams | None = None) -> dict:
    """Run every theta-distance limit on both halves.

    A single failed DL is dropped; a half with no surviving DL raises.
    Returns {"left": [PathResult...], "right": [...]}.
    """
    params = params or PipelineParams()
    out = {}
    for which in ("left", "right"):
        half = make_half_view(graph, uips, which)
        results, failures = [], []
        for dl in params.cost.dl_set:
            try:
                results.append(
                    segment_half(graph, uips, which, dl, params, half_view=half)
                )
            except (NoPathError, AnchorNodeError) as exc:
                failures.append((dl, str(exc)))
        if not results:
            raise HalfFailureError(
                f"{which} half failed at every DL: {failures}"
            )
        out[which] = results
    return out
