"""Tunable parameters for the segmentation pipeline.

Defaults follow the published operating point: cost weights alpha=15,
gamma=0.2, exponent beta=1.75, theta-distance limits 2..14 degrees in
steps of 2, 11x11 median filter, 25% initialization window, 10% rerun
threshold, and boundary-position anchors 0.47 (diastole) / 0.27 (systole).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field


@dataclass(frozen=True)
class CostParams:
    """Weights of the tentative-distance update."""

    alpha: float = 15.0          # node-cost weight
    beta: float = 1.75           # path-distance exponent
    gamma: float = 0.2           # angle-cost weight
    angle_factor: float = 0.1    # fixed factor inside the angle cost
    dl_set: tuple = (2, 4, 6, 8, 10, 12, 14)  # degrees

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not self.dl_set or list(self.dl_set) != sorted(self.dl_set):
            raise ValueError("dl_set must be nonempty and ascending")


@dataclass(frozen=True)
class PipelineParams:
    """Everything the pipeline needs beyond the cost weights."""

    cost: CostParams = field(default_factory=CostParams)

    # preprocessing
    median_size: int = 11
    theta_res_deg: float = 1.0
    apply_contrast: bool = True

    # node selection
    radial_cap_factor: float = 1.5
    prune_factor: float = 1.25

    # path anchoring
    anchor_radial_tol_px: float = 10.0
    anchor_theta_tol_bins: int = 4

    # sequence control
    init_window_tol: float = 0.25
    rerun_threshold: float = 0.10
    max_reruns: int = 1
    start_frame_window: int = 5

    # point tracking
    track_window_px: int = 256
    track_search_margin_px: int = 32
    track_min_corr: float = 0.2

    # boundary fusion
    rbf_center_spacing: int = 4
    rbf_shape_factor: float = 2.0
    rbf_ridge: float = 1e-8

    # gradient-based smoothing
    angle_peak_threshold_deg: float = 25.0
    smooth_iterations: int = 2
    smooth_segment_cap: float = 0.08
    smooth_n_offsets: int = 15
    smooth_offset_frac: float = 0.10

    # temporal smoothing
    temporal_window: int = 5

    # volume-based correction
    outer_intensity_frac: float = 0.67
    inner_intensity_frac: float = 0.25
    cmrbp_ed: float = 0.47
    cmrbp_es: float = 0.27
    power_exponent: float = 6.0

    # volumes and beats
    n_disks: int = 100
    beat_smooth_window: int = 5

    def with_overrides(self, overrides: dict) -> "PipelineParams":
        """Return a copy with the given flat-key overrides applied.

        Cost weights may be given nested under "cost" or flat (e.g. "alpha").
        """
        cost_fields = {f.name for f in dataclasses.fields(CostParams)}
        own_fields = {f.name for f in dataclasses.fields(PipelineParams)}
        cost_kw, own_kw = {}, {}
        for key, value in overrides.items():
            if key == "cost":
                cost_kw.update(value)
            elif key in cost_fields:
                cost_kw[key] = value
            elif key in own_fields:
                own_kw[key] = value
            else:
                raise KeyError(f"unknown parameter: {key}")
        if "dl_set" in cost_kw:
            cost_kw["dl_set"] = tuple(cost_kw["dl_set"])
        cost = dataclasses.replace(self.cost, **cost_kw) if cost_kw else self.cost
        return dataclasses.replace(self, cost=cost, **own_kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["cost"]["dl_set"] = list(self.cost.dl_set)
        return d

    @classmethod
    def from_json(cls, path) -> "PipelineParams":
        with open(path) as fh:
            return cls().with_overrides(json.load(fh))
