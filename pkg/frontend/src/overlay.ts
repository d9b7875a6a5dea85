/** Canvas rendering of the frame, boundary polyline, and placed points. */

import { BoundaryPayload } from "./api";
import { AnnotationState, LABEL_ORDER, imageToDisplay, ViewTransform } from "./state";

const POINT_COLORS: Record<string, string> = {
  apex: "#ffd24a",
  mv_left: "#6ec6ff",
  mv_right: "#ff8a65",
};

export function fitView(
  imageW: number,
  imageH: number,
  canvasW: number,
  canvasH: number,
  zoom = 1,
): ViewTransform {
  const scale = Math.min(canvasW / imageW, canvasH / imageH) * zoom;
  return {
    scale,
    offsetX: (canvasW - imageW * scale) / 2,
    offsetY: (canvasH - imageH * scale) / 2,
  };
}

export function drawOverlay(
  ctx: CanvasRenderingContext2D,
  frame: CanvasImageSource | null,
  state: AnnotationState,
  view: ViewTransform,
  boundary: BoundaryPayload | null,
): void {
  const { canvas } = ctx;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (frame) {
    ctx.imageSmoothingEnabled = true;
    ctx.drawImage(
      frame,
      view.offsetX,
      view.offsetY,
      state.imageWidth * view.scale,
      state.imageHeight * view.scale,
    );
  }

  if (boundary && boundary.x_px.length > 1) {
    ctx.beginPath();
    for (let i = 0; i < boundary.x_px.length; i++) {
      const p = imageToDisplay({ x: boundary.x_px[i], y: boundary.y_px[i] }, view);
      if (i === 0) ctx.moveTo(p.x, p.y);
      else ctx.lineTo(p.x, p.y);
    }
    ctx.closePath();
    ctx.strokeStyle = "#4caf50";
    ctx.lineWidth = 2;
    ctx.stroke();
  }

  for (const label of LABEL_ORDER) {
    const p = state.points[label];
    if (!p) continue;
    const d = imageToDisplay(p, view);
    ctx.beginPath();
    ctx.arc(d.x, d.y, 5, 0, Math.PI * 2);
    ctx.fillStyle = POINT_COLORS[label];
    ctx.fill();
    ctx.strokeStyle = "#222";
    ctx.lineWidth = 1;
    ctx.stroke();
    ctx.fillStyle = "#fff";
    ctx.font = "11px sans-serif";
    ctx.fillText(label, d.x + 7, d.y - 7);
  }
}
