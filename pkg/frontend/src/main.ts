/** Application wiring: sequence picker, point placement, run/poll, review. */

import { ApiClient, ResultPayload, SequenceInfo, ServiceError } from "./api";
import { chartLayout, drawChart, xToFrame } from "./chart";
import { drawOverlay, fitView } from "./overlay";
import {
  AnnotationState,
  canRun,
  collinear,
  allPlaced,
  hitTest,
  initialState,
  movePoint,
  placePoint,
  PointLabel,
} from "./state";

const api = new ApiClient("");

let state: AnnotationState = initialState();
let zoom = 1;
let result: ResultPayload | null = null;
let resultText: string | null = null;
let dragging: PointLabel | null = null;
let hoverFrame: number | null = null;
const frameCache = new Map<string, HTMLImageElement>();

const el = {
  sequences: document.getElementById("sequences") as HTMLSelectElement,
  canvas: document.getElementById("view") as HTMLCanvasElement,
  chart: document.getElementById("chart") as HTMLCanvasElement,
  scrubber: document.getElementById("scrubber") as HTMLInputElement,
  frameLabel: document.getElementById("frame-label") as HTMLSpanElement,
  run: document.getElementById("run") as HTMLButtonElement,
  status: document.getElementById("status") as HTMLSpanElement,
  validation: document.getElementById("validation") as HTMLSpanElement,
  readout: document.getElementById("readout") as HTMLDivElement,
  exportBtn: document.getElementById("export") as HTMLButtonElement,
  zoomBtn: document.getElementById("zoom") as HTMLButtonElement,
  resetBtn: document.getElementById("reset-points") as HTMLButtonElement,
  banner: document.getElementById("banner") as HTMLDivElement,
};

function view() {
  return fitView(state.imageWidth, state.imageHeight, el.canvas.width, el.canvas.height, zoom);
}

function currentBoundary() {
  if (!result) return null;
  return result.boundaries[state.frameIndex] ?? null;
}

function frameImage(): HTMLImageElement | null {
  if (!state.sequenceId) return null;
  const url = api.frameUrl(state.sequenceId, state.frameIndex);
  let img = frameCache.get(url);
  if (!img) {
    img = new Image();
    img.src = url;
    img.onload = render;
    frameCache.set(url, img);
  }
  return img.complete ? img : null;
}

function render() {
  const ctx = el.canvas.getContext("2d");
  if (ctx) drawOverlay(ctx, frameImage(), state, view(), currentBoundary());
  const chartCtx = el.chart.getContext("2d");
  if (chartCtx && result) {
    drawChart(chartCtx, result, state.frameIndex, hoverFrame);
  }
  el.frameLabel.textContent = `${state.frameIndex + 1} / ${state.nFrames}`;
  el.run.disabled = !canRun(state);
  el.exportBtn.disabled = resultText === null;
  el.validation.textContent = collinear(state.points)
    ? "points are collinear: pick a triangle"
    : "";
  el.status.textContent = state.jobStatus === "idle" ? "" : state.jobStatus;
  renderReadout();
}

function renderReadout() {
  if (!result) {
    el.readout.textContent = "";
    return;
  }
  const rows = result.beats.map((beat, i) => {
    const [ed, es] = beat;
    return (
      `beat ${i + 1}: EDV ${result!.edv_ml[i]?.toFixed(1)} mL (f${ed}), ` +
      `ESV ${result!.esv_ml[i]?.toFixed(1)} mL (f${es}), ` +
      `EF ${result!.ef_percent[i]?.toFixed(1)}%`
    );
  });
  el.readout.textContent = rows.join("\n") || "no beats detected";
}

function setBanner(message: string | null) {
  el.banner.textContent = message ?? "";
  el.banner.style.display = message ? "block" : "none";
}

async function loadSequences() {
  try {
    const seqs = await api.listSequences();
    setBanner(null);
    el.sequences.innerHTML = "";
    for (const s of seqs) {
      const opt = document.createElement("option");
      opt.value = s.id;
      opt.textContent = `${s.id} (${s.n_frames} frames)`;
      el.sequences.appendChild(opt);
    }
    if (seqs.length) selectSequence(seqs[0]);
  } catch (err) {
    setBanner(`service unreachable: ${err}. retrying in 3s`);
    setTimeout(loadSequences, 3000);
  }
}

function selectSequence(info: SequenceInfo) {
  state = {
    ...initialState(),
    sequenceId: info.id,
    nFrames: info.n_frames,
    imageWidth: info.width,
    imageHeight: info.height,
  };
  result = null;
  resultText = null;
  el.scrubber.max = String(info.n_frames - 1);
  el.scrubber.value = "0";
  render();
}

async function runSegmentation() {
  if (!canRun(state) || !state.sequenceId) return;
  const { apex, mv_left, mv_right } = state.points;
  state = { ...state, jobStatus: "queued", jobError: null };
  render();
  try {
    await api.postUips(state.sequenceId, {
      apex: [apex!.x, apex!.y],
      mv_left: [mv_left!.x, mv_left!.y],
      mv_right: [mv_right!.x, mv_right!.y],
    });
    const jobId = await api.startJob(state.sequenceId);
    state = { ...state, jobId };
    const final = await api.pollJob(jobId, (info) => {
      state = { ...state, jobStatus: info.status };
      render();
    });
    if (final.status === "done") {
      resultText = await api.jobResultText(jobId);
      result = JSON.parse(resultText) as ResultPayload;
      state = { ...state, jobStatus: "done" };
    } else {
      state = { ...state, jobStatus: "failed", jobError: final.error };
      setBanner(`job failed: ${final.error}`);
    }
  } catch (err) {
    if (err instanceof ServiceError && err.status === 409) {
      // a job is already running for this sequence; leave it be
      state = { ...state, jobStatus: "running" };
    } else {
      state = { ...state, jobStatus: "failed", jobError: String(err) };
      setBanner(`request failed: ${err}`);
    }
  }
  render();
}

function exportResult() {
  if (resultText === null) return;
  const blob = new Blob([resultText], { type: "application/json" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = `${state.sequenceId}-result.json`;
  a.click();
  URL.revokeObjectURL(a.href);
}

function canvasPos(ev: MouseEvent) {
  const rect = el.canvas.getBoundingClientRect();
  return { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
}

function wire() {
  el.sequences.addEventListener("change", async () => {
    const seqs = await api.listSequences();
    const info = seqs.find((s) => s.id === el.sequences.value);
    if (info) selectSequence(info);
  });

  el.canvas.addEventListener("mousedown", (ev) => {
    const pos = canvasPos(ev);
    const hit = hitTest(state, pos, view());
    if (hit) {
      dragging = hit;
    } else {
      state = placePoint(state, pos, view());
      render();
    }
  });
  el.canvas.addEventListener("mousemove", (ev) => {
    if (!dragging) return;
    state = movePoint(state, dragging, canvasPos(ev), view());
    render();
  });
  window.addEventListener("mouseup", () => {
    dragging = null;
  });

  el.scrubber.addEventListener("input", () => {
    state = { ...state, frameIndex: Number(el.scrubber.value) };
    render();
  });

  el.chart.addEventListener("mousemove", (ev) => {
    if (!result) return;
    const rect = el.chart.getBoundingClientRect();
    const layout = chartLayout(el.chart.width, el.chart.height, result.volume_curve_ml);
    hoverFrame = xToFrame(layout, ev.clientX - rect.left);
    render();
  });
  el.chart.addEventListener("mouseleave", () => {
    hoverFrame = null;
    render();
  });
  el.chart.addEventListener("click", () => {
    if (hoverFrame !== null) {
      state = { ...state, frameIndex: hoverFrame };
      el.scrubber.value = String(hoverFrame);
      render();
    }
  });

  el.run.addEventListener("click", runSegmentation);
  el.exportBtn.addEventListener("click", exportResult);
  el.zoomBtn.addEventListener("click", () => {
    zoom = zoom === 1 ? 2 : 1;
    el.zoomBtn.textContent = zoom === 1 ? "zoom 2x" : "fit";
    render();
  });
  el.resetBtn.addEventListener("click", () => {
    state = { ...state, points: {}, activeLabel: "apex" };
    render();
  });
}

wire();
loadSequences();
