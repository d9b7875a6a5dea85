"""Local HTTP service backing the annotation / review UI.

Single-tenant and loopback-oriented: scans are subdirectories of a root
directory, input points are posted per sequence, and one segmentation job
per sequence runs at a time on a background thread.
"""

from __future__ import annotations

import io
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel
from PIL import Image

from .cli import result_payload
from .errors import EchoPathError
from .params import PipelineParams
from .preprocess import UIPSet, load_sequence
from .sequence import segment_sequence


class UIPPayload(BaseModel):
    apex: tuple[float, float]
    mv_left: tuple[float, float]
    mv_right: tuple[float, float]


class JobRequest(BaseModel):
    sequence_id: str
    params: dict | None = None


class ServiceState:
    def __init__(self, scan_root: str):
        self.scan_root = Path(scan_root)
        self.sequences: dict[str, Path] = {}
        self.cache: dict[str, object] = {}
        self.uips: dict[str, UIPSet] = {}
        self.jobs: dict[str, dict] = {}
        self.running: set[str] = set()
        self.lock = threading.Lock()
        self.job_counter = 0
        self.discover()

    def discover(self):
        if not self.scan_root.is_dir():
            return
        for child in sorted(self.scan_root.iterdir()):
            if child.is_dir() and (child / "metadata.json").is_file():
                self.sequences[child.name] = child

    def sequence(self, seq_id: str):
        if seq_id not in self.sequences:
            raise HTTPException(status_code=404, detail="unknown sequence")
        if seq_id not in self.cache:
            self.cache[seq_id] = load_sequence(self.sequences[seq_id])
        return self.cache[seq_id]


def create_app(scan_root: str = ".") -> FastAPI:
    app = FastAPI(title="echopath", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    state = ServiceState(scan_root)
    app.state.service = state

    @app.get("/sequences")
    def list_sequences():
        out = []
        for seq_id in sorted(state.sequences):
            seq = state.sequence(seq_id)
            out.append({
                "id": seq_id,
                "n_frames": seq.n_frames,
                "width": seq.width,
                "height": seq.height,
                "pixel_spacing_mm": seq.pixel_spacing,
                "frame_interval_s": seq.frame_interval,
                "has_uips": seq_id in state.uips,
            })
        return out

    @app.get("/sequences/{seq_id}/frames/{k}")
    def get_frame(seq_id: str, k: int):
        seq = state.sequence(seq_id)
        if not (0 <= k < seq.n_frames):
            raise HTTPException(status_code=404, detail="frame out of range")
        frame = seq.frames[k]
        if frame.max() <= 1.0:
            frame = frame * 255.0
        img = Image.fromarray(np.clip(frame, 0, 255).astype(np.uint8), mode="L")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/sequences/{seq_id}/uips")
    def post_uips(seq_id: str, payload: UIPPayload):
        state.sequence(seq_id)
        try:
            uips = UIPSet.from_points(payload.apex, payload.mv_left, payload.mv_right)
        except EchoPathError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        state.uips[seq_id] = uips
        return {"ok": True}

    @app.post("/jobs", status_code=202)
    def start_job(req: JobRequest):
        seq = state.sequence(req.sequence_id)
        if req.sequence_id not in state.uips:
            raise HTTPException(status_code=400, detail="no input points posted")
        with state.lock:
            if req.sequence_id in state.running:
                raise HTTPException(
                    status_code=409, detail="job already running for this sequence"
                )
            state.job_counter += 1
            job_id = f"job-{state.job_counter}"
            state.running.add(req.sequence_id)
            state.jobs[job_id] = {
                "id": job_id,
                "sequence_id": req.sequence_id,
                "status": "queued",
                "error": None,
                "result": None,
            }

        params = PipelineParams()
        if req.params:
            try:
                params = params.with_overrides(req.params)
            except (KeyError, TypeError, ValueError) as exc:
                with state.lock:
                    state.running.discard(req.sequence_id)
                    del state.jobs[job_id]
                raise HTTPException(status_code=400, detail=f"bad params: {exc}") from exc

        def run():
            job = state.jobs[job_id]
            job["status"] = "running"
            try:
                result = segment_sequence(seq, state.uips[req.sequence_id], params)
                job["result"] = result_payload(result, seq)
                job["status"] = "done"
            except EchoPathError as exc:
                job["error"] = f"{type(exc).__name__}: {exc}"
                job["status"] = "failed"
            finally:
                with state.lock:
                    state.running.discard(req.sequence_id)

        threading.Thread(target=run, daemon=True).start()
        return {"job_id": job_id}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job")
        return {
            "id": job["id"],
            "sequence_id": job["sequence_id"],
            "status": job["status"],
            "error": job["error"],
        }

    @app.get("/jobs/{job_id}/result")
    def job_result(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job")
        if job["status"] != "done":
            raise HTTPException(status_code=404, detail=f"job is {job['status']}")
        return JSONResponse(content=job["result"])

    ui_dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui_dist.is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dist, html=True), name="ui")

    return app
