"""Synthetic B-mode-like phantom with analytic ground truth.

The cavity is a bullet (cylinder capped by a hemisphere) whose dimensions
scale sinusoidally about a fixed apex through the cardiac cycle; the
myocardium is a bright band of constant thickness around it. Gaussian
noise is calibrated iteratively so the measured contrast-to-noise ratio
over the true region masks hits the requested target.
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EchoPathError, HarnessError, PhantomSpecError
from .metrics import cnr as measure_cnr
from .metrics import dice as dice_score
from .metrics import rasterize_contour
from .params import PipelineParams
from .preprocess import ScanSequence, UIPSet


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry, contrast, and cycle parameters of the synthetic scan."""

    cavity_radius_mm: float = 30.0     # cylinder/hemisphere radius at end diastole
    cavity_length_mm: float = 82.0     # apex to annulus plane at end diastole
    wall_mm: float = 7.5               # myocardium thickness at end diastole
    target_cnr: float = 5.0
    dropout: tuple | None = None       # (theta_lo_deg, theta_hi_deg, attenuation)
    cycle_fraction: float = 0.6        # (EDV - ESV) / EDV
    period_frames: int = 24
    n_frames: int = 24
    image_size: tuple = (384, 352)     # (H, W) pixels
    pixel_spacing: float = 0.4         # mm per pixel
    frame_interval: float = 0.033
    seed: int = 0
    background_level: float = 0.18
    speckle_cell_mm: float = 2.0   # noise correlation length; 0 = per-pixel
    wall_rise_frac: float = 0.25   # endocardial intensity ramp, fraction of wall
    wall_fall_frac: float = 0.45   # epicardial decay starts here, fraction of wall
    conserve_wall_area: bool = True  # myocardial ring keeps its cross-section area
    cavity_haze_frac: float = 0.2    # clutter brightness toward the cavity center
    cavity_haze_depth_mm: float = 8.0

    def __post_init__(self):
        if self.target_cnr <= 0:
            raise PhantomSpecError("target_cnr must be > 0")
        if self.dropout is not None and not (0.0 <= self.dropout[2] <= 1.0):
            raise PhantomSpecError("dropout attenuation must be in [0, 1]")
        if not (0.0 <= self.cycle_fraction < 1.0):
            raise PhantomSpecError("cycle_fraction must be in [0, 1)")
        if self.cavity_length_mm <= self.cavity_radius_mm:
            raise PhantomSpecError("cavity length must exceed its radius")
        h_mm, w_mm = (
            self.image_size[0] * self.pixel_spacing,
            self.image_size[1] * self.pixel_spacing,
        )
        margin = 2.0
        if (
            self.apex_y_mm - self.wall_mm < margin
            or self.apex_y_mm + self.cavity_length_mm + margin > h_mm
            or self.center_x_mm - self.cavity_radius_mm - self.wall_mm < margin
            or self.center_x_mm + self.cavity_radius_mm + self.wall_mm + margin > w_mm
        ):
            raise PhantomSpecError("cavity geometry does not fit the image")

    @property
    def center_x_mm(self) -> float:
        return self.image_size[1] * self.pixel_spacing / 2.0

    @property
    def apex_y_mm(self) -> float:
        return (self.image_size[0] * self.pixel_spacing - self.cavity_length_mm) / 2.0

    def volume_ml(self, scale: float = 1.0) -> float:
        """Analytic cavity volume (cylinder + hemispherical cap)."""
        a = self.cavity_radius_mm * scale
        h = (self.cavity_length_mm - self.cavity_radius_mm) * scale
        return (math.pi * a * a * h + (2.0 / 3.0) * math.pi * a**3) / 1000.0

    def epi_volume_ml(self, scale: float = 1.0) -> float:
        a = self.cavity_radius_mm * scale + self.wall_at(scale)
        h = (self.cavity_length_mm - self.cavity_radius_mm) * scale
        return (math.pi * a * a * h + (2.0 / 3.0) * math.pi * a**3) / 1000.0

    def wall_at(self, scale: float) -> float:
        """Wall thickness at a cavity scale; the ring conserves area."""
        if not self.conserve_wall_area:
            return self.wall_mm
        r0 = self.cavity_radius_mm
        r = r0 * scale
        return math.sqrt(r * r + (r0 + self.wall_mm) ** 2 - r0 * r0) - r

    def scales(self) -> np.ndarray:
        t = np.arange(self.n_frames)
        v_frac = 1.0 - self.cycle_fraction * (
            1.0 - np.cos(2.0 * np.pi * t / self.period_frames)
        ) / 2.0
        return v_frac ** (1.0 / 3.0)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["image_size"] = list(self.image_size)
        if self.dropout is not None:
            d["dropout"] = list(self.dropout)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        d = dict(d)
        if "image_size" in d:
            d["image_size"] = tuple(d["image_size"])
        if d.get("dropout") is not None:
            d["dropout"] = tuple(d["dropout"])
        return cls(**d)


@dataclass
class GroundTruth:
    """Analytic contours, volumes, and input points of a phantom."""

    endo_px: list
    epi_px: list
    volumes_ml: np.ndarray
    epi_volumes_ml: np.ndarray
    uips: UIPSet
    scales: np.ndarray
    spec: PhantomSpec
    cnr_cavity_mask: np.ndarray
    cnr_myo_mask: np.ndarray
    measured_cnr: float = 0.0
    meta: dict = field(default_factory=dict)

    def cavity_mask(self, frame: int) -> np.ndarray:
        d, below_base = _depth_field(self.spec, float(self.scales[frame]))
        return (d < 0.0) & below_base

    def band_width_px(self) -> float:
        return self.spec.wall_mm / self.spec.pixel_spacing


def _depth_field(spec: PhantomSpec, scale: float):
    """Signed distance (mm) outward from the endocardium, plus base mask."""
    h, w = spec.image_size
    sp = spec.pixel_spacing
    ys = (np.arange(h) * sp)[:, None]
    xs = (np.arange(w) * sp)[None, :]
    x0 = spec.center_x_mm
    a = spec.cavity_radius_mm * scale
    junction = spec.apex_y_mm + a
    base = spec.apex_y_mm + spec.cavity_length_mm * scale

    side = np.abs(xs - x0) - a
    cap = np.hypot(xs - x0, ys - junction) - a
    d = np.where(ys >= junction, side, cap)
    return d, (ys <= base) + np.zeros(d.shape, dtype=bool)


def _bullet_contour(spec: PhantomSpec, scale: float, offset_mm: float) -> np.ndarray:
    """Polyline (px) of the bullet outline, annulus-left to annulus-right."""
    sp = spec.pixel_spacing
    x0 = spec.center_x_mm
    a = spec.cavity_radius_mm * scale + offset_mm
    junction = spec.apex_y_mm + spec.cavity_radius_mm * scale
    base = spec.apex_y_mm + spec.cavity_length_mm * scale

    n_side = max(2, int(round((base - junction) / sp)))
    left = np.column_stack([
        np.full(n_side, x0 - a),
        np.linspace(base, junction, n_side),
    ])
    ang = np.deg2rad(np.linspace(180.0, 360.0, 181))
    arc = np.column_stack([x0 + a * np.cos(ang), junction + a * np.sin(ang)])
    right = np.column_stack([
        np.full(n_side, x0 + a),
        np.linspace(junction, base, n_side),
    ])
    pts_mm = np.vstack([left, arc[1:-1], right])
    return pts_mm / sp


def _render_structure(spec: PhantomSpec, scale: float, amplitude: float,
                      with_dropout: bool = True) -> np.ndarray:
    d, below_base = _depth_field(spec, scale)
    wall = spec.wall_at(scale)
    rise = max(spec.wall_rise_frac * wall, 1e-6)
    fall_start = spec.wall_fall_frac * wall
    fall = max(wall - fall_start, 1e-6)
    w = np.clip(d / rise, 0.0, 1.0) * np.clip((wall - d) / fall, 0.0, 1.0)
    band = w * ((d >= 0) & (d <= wall) & below_base)
    if spec.cavity_haze_frac > 0:
        haze = np.clip(-d / spec.cavity_haze_depth_mm, 0.0, 1.0)
        band = band + spec.cavity_haze_frac * haze * ((d < 0) & below_base)

    if with_dropout and spec.dropout is not None:
        lo, hi, atten = spec.dropout
        h, wpx = spec.image_size
        sp = spec.pixel_spacing
        ys = (np.arange(h) * sp)[:, None]
        xs = (np.arange(wpx) * sp)[None, :]
        cy = spec.apex_y_mm + spec.cavity_length_mm * scale / 2.0
        theta = np.degrees(np.arctan2(ys - cy, xs - spec.center_x_mm)) % 360.0
        in_sector = (theta - lo) % 360.0 <= (hi - lo) % 360.0
        band = np.where(in_sector, band * atten, band)

    return spec.background_level + amplitude * band


def _speckle_noise(spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance noise field with a finite correlation length.

    Drawn on a grid of speckle_cell_mm cells and bilinearly upsampled, so
    the texture scale tracks physical resolution rather than pixel count.
    """
    from scipy import ndimage

    h, w = spec.image_size
    cell_px = spec.speckle_cell_mm / spec.pixel_spacing
    if cell_px <= 1.0:
        return rng.standard_normal((h, w))
    ch = int(math.ceil(h / cell_px)) + 2
    cw = int(math.ceil(w / cell_px)) + 2
    coarse = rng.standard_normal((ch, cw))
    ys = np.arange(h) / cell_px
    xs = np.arange(w) / cell_px
    return ndimage.map_coordinates(
        coarse, np.meshgrid(ys, xs, indexing="ij"), order=1, mode="nearest"
    )


def _core_masks(spec: PhantomSpec):
    d, below_base = _depth_field(spec, 1.0)
    margin = max(2.0 * spec.pixel_spacing, spec.wall_rise_frac * spec.wall_mm + spec.pixel_spacing)
    base = spec.apex_y_mm + spec.cavity_length_mm
    ys = (np.arange(spec.image_size[0]) * spec.pixel_spacing)[:, None]
    clear_of_base = (ys <= base - margin) + np.zeros(d.shape, dtype=bool)
    cavity = (d <= -margin) & clear_of_base
    lo = spec.wall_rise_frac * spec.wall_mm + spec.pixel_spacing
    hi = spec.wall_fall_frac * spec.wall_mm - spec.pixel_spacing
    if hi <= lo:
        lo, hi = margin, spec.wall_mm - margin
    myo = (d >= lo) & (d <= hi) & clear_of_base
    if not cavity.any() or not myo.any():
        raise PhantomSpecError("wall too thin for CNR calibration masks")
    return cavity, myo


def generate_phantom(spec: PhantomSpec):
    """Render the scan sequence and its ground truth.

    Noise sigma is calibrated on frame 0 so the measured CNR over the true
    region masks lands within 0.2 of the target; an unreachable target
    raises.
    """
    scales = spec.scales()
    cavity_core, myo_core = _core_masks(spec)

    amplitude = min(0.62, spec.target_cnr * math.sqrt(2.0) * 0.115)
    sigma = amplitude / (spec.target_cnr * math.sqrt(2.0))
    # calibrate on the dropout-free render: the CNR contract describes the
    # unattenuated wall, dropout is a defect applied on top
    struct0_clean = _render_structure(spec, float(scales[0]), amplitude, with_dropout=False)
    struct0 = _render_structure(spec, float(scales[0]), amplitude)

    measured = None
    for _ in range(8):
        rng = np.random.default_rng(spec.seed)
        frame0 = np.clip(struct0_clean + sigma * _speckle_noise(spec, rng), 0.0, 1.0)
        measured = measure_cnr(frame0, cavity_core, myo_core)
        if abs(measured - spec.target_cnr) <= 0.05:
            break
        sigma *= measured / spec.target_cnr
    if measured is None or abs(measured - spec.target_cnr) > 0.2:
        raise PhantomSpecError(
            f"target CNR {spec.target_cnr} unreachable (measured {measured:.3f})"
        )

    rng = np.random.default_rng(spec.seed)
    frames = np.empty((spec.n_frames, *spec.image_size))
    for t in range(spec.n_frames):
        struct = (
            struct0
            if t == 0 or scales[t] == scales[0]
            else _render_structure(spec, float(scales[t]), amplitude)
        )
        frames[t] = np.clip(struct + sigma * _speckle_noise(spec, rng), 0.0, 1.0)

    seq = ScanSequence(
        frames=frames,
        pixel_spacing=spec.pixel_spacing,
        frame_interval=spec.frame_interval,
    )

    sp = spec.pixel_spacing
    x0 = spec.center_x_mm
    crest_mm = 0.5 * (spec.wall_rise_frac + spec.wall_fall_frac) * spec.wall_mm
    apex, mvl, mvr = [], [], []
    endo, epi = [], []
    for t in range(spec.n_frames):
        s = float(scales[t])
        a = spec.cavity_radius_mm * s
        base = spec.apex_y_mm + spec.cavity_length_mm * s
        apex.append([x0 / sp, (spec.apex_y_mm - crest_mm) / sp])
        mvl.append([(x0 - a) / sp, base / sp])
        mvr.append([(x0 + a) / sp, base / sp])
        endo.append(_bullet_contour(spec, s, 0.0))
        epi.append(_bullet_contour(spec, s, spec.wall_at(s)))

    truth = GroundTruth(
        endo_px=endo,
        epi_px=epi,
        volumes_ml=np.array([spec.volume_ml(float(s)) for s in scales]),
        epi_volumes_ml=np.array([spec.epi_volume_ml(float(s)) for s in scales]),
        uips=UIPSet(apex=apex, mv_left=mvl, mv_right=mvr),
        scales=scales,
        spec=spec,
        cnr_cavity_mask=cavity_core,
        cnr_myo_mask=myo_core,
        measured_cnr=float(measured),
        meta={"sigma": sigma, "amplitude": amplitude},
    )
    return seq, truth


def perturb_uips(truth: GroundTruth, magnitude: float, seed: int) -> UIPSet:
    """Frame-0 input points displaced uniformly within a disk.

    The disk radius is magnitude times the local endocardium-epicardium
    distance (the wall thickness).
    """
    if magnitude < 0:
        raise ValueError("magnitude must be >= 0")
    rng = np.random.default_rng(seed)
    radius = magnitude * truth.band_width_px()
    entry = truth.uips.entry(0)
    for _ in range(16):
        pts = []
        for p in (entry.apex, entry.mv_left, entry.mv_right):
            rho = radius * math.sqrt(rng.uniform())
            ang = rng.uniform(0.0, 2.0 * math.pi)
            pts.append([p[0] + rho * math.cos(ang), p[1] + rho * math.sin(ang)])
        try:
            return UIPSet.from_points(*pts)
        except Exception:
            continue
    raise PhantomSpecError("could not draw non-collinear perturbed points")


@dataclass
class MonteCarloResult:
    mean_dice: float
    std_dice: float
    records: list

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.records if r.get("error"))


def _run_trial(seq, truth, trial, trial_seed, magnitude, params):
    from .sequence import segment_sequence

    record = {"trial": trial, "seed": int(trial_seed)}
    try:
        uips = perturb_uips(truth, magnitude, int(trial_seed))
        result = segment_sequence(seq, uips, params)
        ed = int(np.argmax(truth.volumes_ml))
        es = int(np.argmin(truth.volumes_ml))
        shape = seq.frames[0].shape
        scores = {}
        for label, t in (("ed", ed), ("es", es)):
            mask = rasterize_contour(result.boundaries[t].cartesian(), shape)
            scores[label] = dice_score(mask, truth.cavity_mask(t))
        record["dice_ed"] = scores["ed"]
        record["dice_es"] = scores["es"]
        record["dice"] = 0.5 * (scores["ed"] + scores["es"])
        record["ef_percent"] = (
            float(np.mean(result.ef)) if len(result.ef) else None
        )
        record["error"] = None
    except EchoPathError as exc:
        record["error"] = f"{type(exc).__name__}: {exc}"
    return record


_WORKER_CACHE: dict = {}


def _pool_trial(args):
    spec_json, trial, trial_seed, magnitude, params_dict = args
    if spec_json not in _WORKER_CACHE:
        spec = PhantomSpec.from_dict(json.loads(spec_json))
        _WORKER_CACHE[spec_json] = generate_phantom(spec)
    seq, truth = _WORKER_CACHE[spec_json]
    params = PipelineParams().with_overrides(params_dict)
    return _run_trial(seq, truth, trial, trial_seed, magnitude, params)


def run_monte_carlo(
    spec: PhantomSpec,
    trials: int,
    magnitude: float,
    params: PipelineParams | None = None,
    jobs: int = 1,
    seed: int | None = None,
    max_failure_frac: float = 0.2,
) -> MonteCarloResult:
    """Repeat segmentation under perturbed input points and score Dice.

    One phantom is generated; each trial perturbs the frame-0 input points
    (seeded from the master seed), segments the sequence, and scores Dice
    against the true cavity at end diastole and end systole. Individual
    trial failures are recorded; more than max_failure_frac failures raise.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    params = params or PipelineParams()
    master = spec.seed + 1 if seed is None else seed
    trial_seeds = [
        int(ss.generate_state(1)[0])
        for ss in np.random.SeedSequence(master).spawn(trials)
    ]

    if jobs > 1:
        spec_json = json.dumps(spec.to_dict(), sort_keys=True)
        args = [
            (spec_json, i, trial_seeds[i], magnitude, params.to_dict())
            for i in range(trials)
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_pool_trial, args))
    else:
        seq, truth = generate_phantom(spec)
        records = [
            _run_trial(seq, truth, i, trial_seeds[i], magnitude, params)
            for i in range(trials)
        ]

    n_failed = sum(1 for r in records if r.get("error"))
    if n_failed > max_failure_frac * trials:
        raise HarnessError(f"{n_failed}/{trials} Monte-Carlo trials failed")
    scores = np.array([r["dice"] for r in records if not r.get("error")])
    mean = float(scores.mean()) if scores.size else float("nan")
    std = float(scores.std(ddof=1)) if scores.size > 1 else 0.0
    return MonteCarloResult(mean_dice=mean, std_dice=std, records=records)


def cnr_sweep(
    base_spec: PhantomSpec,
    cnrs,
    trials: int,
    magnitude: float,
    params: PipelineParams | None = None,
    jobs: int = 1,
) -> list:
    """Monte-Carlo Dice at each CNR; rows of (cnr, mean_dice, std_dice)."""
    rows = []
    for c in cnrs:
        spec = dataclasses.replace(base_spec, target_cnr=float(c))
        res = run_monte_carlo(spec, trials, magnitude, params=params, jobs=jobs)
        rows.append((float(c), res.mean_dice, res.std_dice))
    return rows
