"""Command-line entry points: segment, evaluate, phantom, serve."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__, pathfind
from .errors import EchoPathError
from .metrics import bland_altman, dice, rasterize_contour
from .params import PipelineParams
from .phantom import PhantomSpec, cnr_sweep, generate_phantom, run_monte_carlo
from .preprocess import load_sequence, load_uips
from .sequence import segment_sequence

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_FAILURE = 2


def mc_params(overrides: dict | None = None) -> PipelineParams:
    """Pipeline parameters scaled for the synthetic phantom.

    The published 256 px tracking window is wider than the whole phantom
    LV; a 96 px window keeps the correlation local to each landmark.
    """
    base = {"track_window_px": 96, "track_search_margin_px": 16}
    if overrides:
        base.update(overrides)
    return PipelineParams().with_overrides(base)


def _load_params(path, overrides_json=None) -> PipelineParams:
    params = PipelineParams()
    if path:
        params = PipelineParams.from_json(path)
    if overrides_json:
        params = params.with_overrides(json.loads(overrides_json))
    return params


def _write_boundaries_csv(path, boundaries):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "theta_deg", "r_px", "x_px", "y_px"])
        for b in boundaries:
            pts = b.cartesian()
            for theta, r, (x, y) in zip(b.theta_deg(), b.r, pts):
                w.writerow([
                    b.frame_index,
                    f"{theta:.3f}",
                    f"{r:.6f}",
                    f"{x:.6f}",
                    f"{y:.6f}",
                ])


def _write_volumes_csv(path, volumes, frame_interval):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "time_s", "volume_ml"])
        for t, v in enumerate(volumes):
            w.writerow([t, f"{t * frame_interval:.6f}", f"{v:.6f}"])


def result_payload(result, seq) -> dict:
    """JSON-ready summary of a segmentation result."""
    return {
        "n_frames": result.n_frames,
        "pixel_spacing_mm": seq.pixel_spacing,
        "frame_interval_s": seq.frame_interval,
        "volume_curve_ml": [round(float(v), 6) for v in result.volume_curve],
        "raw_volume_curve_ml": [round(float(v), 6) for v in result.raw_volume_curve],
        "beats": [[int(ed), int(es)] for ed, es in result.beats],
        "edv_ml": [round(float(v), 6) for v in result.edv],
        "esv_ml": [round(float(v), 6) for v in result.esv],
        "ef_percent": [round(float(v), 6) for v in result.ef],
        "boundaries": [
            {
                "frame": b.frame_index,
                "theta_deg": [round(float(t), 3) for t in b.theta_deg()],
                "r_px": [round(float(r), 4) for r in b.r],
                "x_px": [round(float(x), 4) for x in b.cartesian()[:, 0]],
                "y_px": [round(float(y), 4) for y in b.cartesian()[:, 1]],
            }
            for b in result.boundaries
        ],
        "provenance": result.provenance,
    }


def cmd_segment(args) -> int:
    scan_dir = Path(args.scan_dir)
    uip_path = Path(args.uips)
    out_dir = Path(args.out)
    if not scan_dir.is_dir():
        print(f"error: scan directory not found: {scan_dir}", file=sys.stderr)
        return EXIT_VALIDATION
    if not uip_path.is_file():
        print(f"error: uip file not found: {uip_path}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        seq = load_sequence(scan_dir)
        uips = load_uips(uip_path)
        params = _load_params(args.params, args.set)
    except (EchoPathError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        result = segment_sequence(seq, uips, params, keep_debug=args.dump_nodes or args.dump_paths)
    except EchoPathError as exc:
        print(f"segmentation failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_boundaries_csv(out_dir / "boundaries.csv", result.boundaries)
    _write_volumes_csv(out_dir / "volumes.csv", result.volume_curve, seq.frame_interval)
    metrics = {
        "beats": [[int(ed), int(es)] for ed, es in result.beats],
        "edv_ml": [float(v) for v in result.edv],
        "esv_ml": [float(v) for v in result.esv],
        "ef_percent": [float(v) for v in result.ef],
        "volume_curve_ml": [float(v) for v in result.volume_curve],
        "raw_volume_curve_ml": [float(v) for v in result.raw_volume_curve],
    }
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True))
    manifest = {
        "tool": "echopath",
        "version": __version__,
        "backend": pathfind.BACKEND,
        "inputs": {"scan_dir": str(scan_dir), "uips": str(uip_path)},
        "params": params.to_dict(),
        "seed": args.seed,
        "numpy": np.__version__,
        "provenance": result.provenance,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    if args.dump_nodes:
        _dump_nodes(out_dir / "nodes.csv", result)
    if args.dump_paths:
        _dump_paths(out_dir / "paths.csv", result)
    if args.dump_correction:
        _dump_correction(out_dir / "correction.csv", result)
    return EXIT_OK


def _dump_nodes(path, result):
    frames = result.debug.get("frame_results") or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "theta_deg", "r_px", "intensity", "prominence", "cost"])
        for t in sorted(frames):
            fr = frames[t]
            if fr is None or fr.graph is None:
                continue
            g = fr.graph
            for i in range(g.n_nodes):
                w.writerow([
                    t,
                    f"{g.theta_bins[i] * g.theta_res:.3f}",
                    f"{g.r[i]:.4f}",
                    f"{g.intensity[i]:.6f}",
                    f"{g.prominence[i]:.6f}",
                    f"{g.cost[i]:.6f}",
                ])


def _dump_paths(path, result):
    frames = result.debug.get("frame_results") or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "half", "dl_deg", "theta_deg", "r_px"])
        for t in sorted(frames):
            fr = frames[t]
            if fr is None or fr.paths is None:
                continue
            for half, paths in fr.paths.items():
                for p in paths:
                    for tb, r in zip(p.theta_bins, p.r):
                        w.writerow([t, half, p.dl, f"{float(tb):.3f}", f"{r:.4f}"])


def _dump_correction(path, result):
    sch = result.debug.get("schedule")
    areas = result.debug.get("band_areas")
    if sch is None:
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "raw_mrbp", "cmrbp_init", "cmrbp_bv", "cmrbp_io", "band_area_px2"])
        for t in range(len(sch.raw)):
            w.writerow([
                t,
                f"{sch.raw[t]:.6f}",
                f"{sch.cmrbp_init[t]:.6f}",
                f"{sch.cmrbp_bv[t]:.6f}",
                f"{sch.cmrbp_io[t]:.6f}",
                f"{areas[t]:.2f}" if areas is not None else "",
            ])


def cmd_evaluate(args) -> int:
    result_dir = Path(args.result_dir)
    truth_path = Path(args.truth)
    if not result_dir.is_dir() or not (result_dir / "boundaries.csv").is_file():
        print(f"error: result directory invalid: {result_dir}", file=sys.stderr)
        return EXIT_VALIDATION
    if not truth_path.is_file():
        print(f"error: truth file not found: {truth_path}", file=sys.stderr)
        return EXIT_VALIDATION
    truth = json.loads(truth_path.read_text())
    boundaries = _read_boundaries_csv(result_dir / "boundaries.csv")
    volumes = _read_volumes_csv(result_dir / "volumes.csv")

    frames = truth["frames"]
    if len(frames) != len(boundaries):
        print(
            f"error: frame count mismatch (truth {len(frames)}, result {len(boundaries)})",
            file=sys.stderr,
        )
        return EXIT_VALIDATION

    shape = tuple(truth["image_size"])
    rows = []
    for t, fr in enumerate(frames):
        endo = np.asarray(fr["endo_px"])
        mask_truth = rasterize_contour(endo, shape)
        mask_result = rasterize_contour(boundaries[t], shape)
        rows.append({
            "frame": t,
            "dice": dice(mask_result, mask_truth),
            "volume_ml": volumes[t],
            "truth_volume_ml": fr["volume_ml"],
        })

    pairs = [(r["volume_ml"], r["truth_volume_ml"]) for r in rows]
    ba = bland_altman(pairs) if len(pairs) >= 2 else None
    summary = {
        "mean_dice": float(np.mean([r["dice"] for r in rows])),
        "per_frame": rows,
        "bland_altman_ml": list(ba) if ba else None,
        "volume_bias_ml": ba[0] if ba else None,
    }
    out_dir = Path(args.out) if args.out else result_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "evaluation.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    with open(out_dir / "evaluation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "dice", "volume_ml", "truth_volume_ml"])
        for r in rows:
            w.writerow([r["frame"], f"{r['dice']:.6f}", f"{r['volume_ml']:.4f}", f"{r['truth_volume_ml']:.4f}"])
    print(json.dumps({"mean_dice": summary["mean_dice"], "bland_altman_ml": summary["bland_altman_ml"]}))
    return EXIT_OK


def _read_boundaries_csv(path):
    frames: dict[int, list] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            frames.setdefault(int(row["frame"]), []).append(
                (float(row["x_px"]), float(row["y_px"]))
            )
    return [np.asarray(frames[t]) for t in sorted(frames)]


def _read_volumes_csv(path):
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[int(row["frame"])] = float(row["volume_ml"])
    return [out[t] for t in sorted(out)]


def _spec_from_args(args) -> PhantomSpec:
    spec = PhantomSpec()
    if args.spec:
        spec = PhantomSpec.from_dict(json.loads(Path(args.spec).read_text()))
    updates = {}
    if getattr(args, "cnr", None) is not None:
        updates["target_cnr"] = args.cnr
    if getattr(args, "frames", None) is not None:
        updates["n_frames"] = args.frames
        updates["period_frames"] = args.frames
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    return dataclasses.replace(spec, **updates) if updates else spec


def cmd_phantom_generate(args) -> int:
    out_dir = Path(args.out)
    try:
        spec = _spec_from_args(args)
        seq, truth = generate_phantom(spec)
    except (EchoPathError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir.mkdir(parents=True, exist_ok=True)
    for t in range(seq.n_frames):
        img = Image.fromarray(np.round(seq.frames[t] * 255).astype(np.uint8), mode="L")
        img.save(out_dir / f"frame_{t:04d}.pgm")
    (out_dir / "metadata.json").write_text(json.dumps({
        "pixel_spacing_mm": seq.pixel_spacing,
        "frame_interval_s": seq.frame_interval,
    }, indent=2))
    entry = truth.uips.entry(0)
    (out_dir / "uips.json").write_text(json.dumps({
        "apex": [float(v) for v in entry.apex],
        "mv_left": [float(v) for v in entry.mv_left],
        "mv_right": [float(v) for v in entry.mv_right],
    }, indent=2))
    truth_doc = {
        "spec": spec.to_dict(),
        "image_size": list(spec.image_size),
        "measured_cnr": truth.measured_cnr,
        "frames": [
            {
                "endo_px": np.round(truth.endo_px[t], 4).tolist(),
                "epi_px": np.round(truth.epi_px[t], 4).tolist(),
                "volume_ml": float(truth.volumes_ml[t]),
                "epi_volume_ml": float(truth.epi_volumes_ml[t]),
                "uips": {
                    "apex": [float(v) for v in truth.uips.entry(t).apex],
                    "mv_left": [float(v) for v in truth.uips.entry(t).mv_left],
                    "mv_right": [float(v) for v in truth.uips.entry(t).mv_right],
                },
            }
            for t in range(seq.n_frames)
        ],
    }
    (out_dir / "truth.json").write_text(json.dumps(truth_doc))
    print(f"wrote {seq.n_frames} frames to {out_dir} (measured CNR {truth.measured_cnr:.2f})")
    return EXIT_OK


def cmd_phantom_mc(args) -> int:
    try:
        spec = _spec_from_args(args)
        params = mc_params(json.loads(args.set) if args.set else None)
    except (EchoPathError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out = Path(args.out) if args.out else None
    try:
        if args.cnr_sweep:
            cnrs = [float(c) for c in args.cnr_sweep.split(",")]
            rows = cnr_sweep(spec, cnrs, args.trials, args.magnitude,
                             params=params, jobs=args.jobs)
            if out:
                with open(out, "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["cnr", "mean_dice", "std_dice"])
                    for c, m, sd in rows:
                        w.writerow([c, f"{m:.6f}", f"{sd:.6f}"])
            for c, m, sd in rows:
                print(f"cnr={c:g} mean_dice={m:.4f} std_dice={sd:.4f}")
        else:
            res = run_monte_carlo(spec, args.trials, args.magnitude,
                                  params=params, jobs=args.jobs, seed=args.seed)
            if out:
                with open(out, "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["trial", "seed", "dice_ed", "dice_es", "dice", "ef_percent", "error"])
                    for r in res.records:
                        w.writerow([
                            r["trial"], r["seed"],
                            r.get("dice_ed", ""), r.get("dice_es", ""),
                            r.get("dice", ""), r.get("ef_percent", ""),
                            r.get("error") or "",
                        ])
            print(f"trials={args.trials} mean_dice={res.mean_dice:.4f} "
                  f"std_dice={res.std_dice:.4f} failed={res.n_failed}")
    except EchoPathError as exc:
        print(f"monte-carlo failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(scan_root=args.scan_root)
    port = args.port or int(os.environ.get("ECHOPATH_PORT", "8710"))
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="echopath",
                                 description="Unsupervised LV segmentation of B-mode echo scans")
    ap.add_argument("--version", action="version", version=f"echopath {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("segment", help="segment a scan directory")
    sp.add_argument("scan_dir")
    sp.add_argument("--uips", required=True, help="JSON file with apex/mv_left/mv_right")
    sp.add_argument("--out", required=True)
    sp.add_argument("--params", help="JSON parameter override file")
    sp.add_argument("--set", help="inline JSON parameter overrides")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--dump-nodes", action="store_true")
    sp.add_argument("--dump-paths", action="store_true")
    sp.add_argument("--dump-correction", action="store_true")
    sp.set_defaults(func=cmd_segment)

    ev = sub.add_parser("evaluate", help="score a result against ground truth")
    ev.add_argument("result_dir")
    ev.add_argument("--truth", required=True)
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_evaluate)

    ph = sub.add_parser("phantom", help="synthetic phantom tools")
    phsub = ph.add_subparsers(dest="phantom_command", required=True)

    pg = phsub.add_parser("generate", help="write a phantom scan directory")
    pg.add_argument("out")
    pg.add_argument("--spec", help="phantom spec JSON file")
    pg.add_argument("--cnr", type=float)
    pg.add_argument("--frames", type=int)
    pg.add_argument("--seed", type=int)
    pg.set_defaults(func=cmd_phantom_generate)

    pm = phsub.add_parser("mc", help="Monte-Carlo input-point perturbation")
    pm.add_argument("--spec", help="phantom spec JSON file")
    pm.add_argument("--cnr", type=float)
    pm.add_argument("--frames", type=int)
    pm.add_argument("--trials", type=int, default=100)
    pm.add_argument("--magnitude", type=float, default=0.5)
    pm.add_argument("--jobs", type=int, default=1)
    pm.add_argument("--seed", type=int)
    pm.add_argument("--cnr-sweep", help="comma-separated CNR list")
    pm.add_argument("--out", help="CSV output path")
    pm.add_argument("--set", help="inline JSON parameter overrides")
    pm.set_defaults(func=cmd_phantom_mc)

    sv = sub.add_parser("serve", help="run the local annotation/review service")
    sv.add_argument("--port", type=int)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--scan-root", default=".", help="directory whose subdirectories are scans")
    sv.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
