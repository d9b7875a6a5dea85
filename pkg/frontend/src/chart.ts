/** Volume-vs-frame chart with ED/ES markers, drawn on a canvas. */

import { ResultPayload } from "./api";

export interface ChartLayout {
  left: number;
  top: number;
  width: number;
  height: number;
  vMin: number;
  vMax: number;
  nFrames: number;
}

export function chartLayout(
  canvasW: number,
  canvasH: number,
  volumes: number[],
): ChartLayout {
  const vMax = Math.max(...volumes) * 1.05;
  const vMin = Math.min(0, Math.min(...volumes));
  return {
    left: 42,
    top: 10,
    width: canvasW - 52,
    height: canvasH - 34,
    vMin,
    vMax,
    nFrames: volumes.length,
  };
}

export function frameToX(layout: ChartLayout, frame: number): number {
  const denom = Math.max(layout.nFrames - 1, 1);
  return layout.left + (frame / denom) * layout.width;
}

export function volumeToY(layout: ChartLayout, v: number): number {
  const span = layout.vMax - layout.vMin || 1;
  return layout.top + (1 - (v - layout.vMin) / span) * layout.height;
}

export function xToFrame(layout: ChartLayout, x: number): number {
  const denom = layout.width || 1;
  const f = Math.round(((x - layout.left) / denom) * (layout.nFrames - 1));
  return Math.min(Math.max(f, 0), layout.nFrames - 1);
}

export function drawChart(
  ctx: CanvasRenderingContext2D,
  result: ResultPayload,
  currentFrame: number,
  hoverFrame: number | null,
): ChartLayout {
  const { canvas } = ctx;
  const volumes = result.volume_curve_ml;
  const layout = chartLayout(canvas.width, canvas.height, volumes);
  ctx.clearRect(0, 0, canvas.width, canvas.height);

  ctx.strokeStyle = "#888";
  ctx.lineWidth = 1;
  ctx.strokeRect(layout.left, layout.top, layout.width, layout.height);
  ctx.fillStyle = "#aaa";
  ctx.font = "10px sans-serif";
  ctx.fillText(`${layout.vMax.toFixed(0)} mL`, 2, layout.top + 8);
  ctx.fillText(`${layout.vMin.toFixed(0)}`, 2, layout.top + layout.height);

  ctx.beginPath();
  volumes.forEach((v, i) => {
    const x = frameToX(layout, i);
    const y = volumeToY(layout, v);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.strokeStyle = "#4caf50";
  ctx.lineWidth = 2;
  ctx.stroke();

  for (const [ed, es] of result.beats) {
    for (const [frame, color, label] of [
      [ed, "#ffd24a", "ED"],
      [es, "#6ec6ff", "ES"],
    ] as [number, string, string][]) {
      const x = frameToX(layout, frame);
      const y = volumeToY(layout, volumes[frame]);
      ctx.beginPath();
      ctx.arc(x, y, 4, 0, Math.PI * 2);
      ctx.fillStyle = color;
      ctx.fill();
      ctx.fillText(label, x - 6, y - 8);
    }
  }

  const cx = frameToX(layout, currentFrame);
  ctx.strokeStyle = "#e57373";
  ctx.setLineDash([4, 3]);
  ctx.beginPath();
  ctx.moveTo(cx, layout.top);
  ctx.lineTo(cx, layout.top + layout.height);
  ctx.stroke();
  ctx.setLineDash([]);

  if (hoverFrame !== null && hoverFrame >= 0 && hoverFrame < volumes.length) {
    const x = frameToX(layout, hoverFrame);
    const y = volumeToY(layout, volumes[hoverFrame]);
    ctx.fillStyle = "#fff";
    ctx.fillRect(x + 6, y - 22, 96, 16);
    ctx.fillStyle = "#111";
    ctx.fillText(
      `f${hoverFrame}: ${volumes[hoverFrame].toFixed(1)} mL`,
      x + 9,
      y - 10,
    );
  }
  return layout;
}
