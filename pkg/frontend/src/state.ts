/**
 * Annotation state machine: three labelled points placed on a frame,
 * collinearity validation, and display<->image coordinate mapping.
 */

export type PointLabel = "apex" | "mv_left" | "mv_right";

export interface Point {
  x: number;
  y: number;
}

export interface ViewTransform {
  /** displayed pixels per image pixel */
  scale: number;
  offsetX: number;
  offsetY: number;
}

export type JobStatus = "idle" | "queued" | "running" | "done" | "failed";

export interface AnnotationState {
  sequenceId: string | null;
  frameIndex: number;
  nFrames: number;
  imageWidth: number;
  imageHeight: number;
  points: Partial<Record<PointLabel, Point>>;
  activeLabel: PointLabel | null;
  jobId: string | null;
  jobStatus: JobStatus;
  jobError: string | null;
}

export const LABEL_ORDER: PointLabel[] = ["apex", "mv_left", "mv_right"];

export function initialState(): AnnotationState {
  return {
    sequenceId: null,
    frameIndex: 0,
    nFrames: 0,
    imageWidth: 0,
    imageHeight: 0,
    points: {},
    activeLabel: "apex",
    jobId: null,
    jobStatus: "idle",
    jobError: null,
  };
}

export function nextLabel(points: Partial<Record<PointLabel, Point>>): PointLabel | null {
  for (const label of LABEL_ORDER) {
    if (!points[label]) return label;
  }
  return null;
}

export function displayToImage(pos: Point, view: ViewTransform): Point {
  return {
    x: (pos.x - view.offsetX) / view.scale,
    y: (pos.y - view.offsetY) / view.scale,
  };
}

export function imageToDisplay(pos: Point, view: ViewTransform): Point {
  return {
    x: pos.x * view.scale + view.offsetX,
    y: pos.y * view.scale + view.offsetY,
  };
}

export function triangleArea(a: Point, b: Point, c: Point): number {
  return Math.abs((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)) / 2;
}

export function collinear(points: Partial<Record<PointLabel, Point>>): boolean {
  const { apex, mv_left, mv_right } = points;
  if (!apex || !mv_left || !mv_right) return false;
  return triangleArea(apex, mv_left, mv_right) <= 1e-6;
}

export function allPlaced(points: Partial<Record<PointLabel, Point>>): boolean {
  return LABEL_ORDER.every((label) => !!points[label]);
}

export function canRun(state: AnnotationState): boolean {
  return (
    state.sequenceId !== null &&
    allPlaced(state.points) &&
    !collinear(state.points) &&
    state.jobStatus !== "queued" &&
    state.jobStatus !== "running"
  );
}

/**
 * Register a click in display coordinates: stores the image-space point
 * under the active label and advances apex -> mv_left -> mv_right.
 * Clicks outside the image region are ignored.
 */
export function placePoint(
  state: AnnotationState,
  displayPos: Point,
  view: ViewTransform,
): AnnotationState {
  const img = displayToImage(displayPos, view);
  if (img.x < 0 || img.y < 0 || img.x > state.imageWidth - 1 || img.y > state.imageHeight - 1) {
    return state;
  }
  const label = state.activeLabel ?? nextLabel(state.points);
  if (!label) return state;
  const points = { ...state.points, [label]: img };
  return { ...state, points, activeLabel: nextLabel(points) };
}

/** Move an already-placed point (drag); the run gate is unaffected. */
export function movePoint(
  state: AnnotationState,
  label: PointLabel,
  displayPos: Point,
  view: ViewTransform,
): AnnotationState {
  if (!state.points[label]) return state;
  const img = displayToImage(displayPos, view);
  return { ...state, points: { ...state.points, [label]: img } };
}

/** Placed point within a pick radius of a display position, if any. */
export function hitTest(
  state: AnnotationState,
  displayPos: Point,
  view: ViewTransform,
  radiusPx = 8,
): PointLabel | null {
  for (const label of LABEL_ORDER) {
    const p = state.points[label];
    if (!p) continue;
    const d = imageToDisplay(p, view);
    if (Math.hypot(d.x - displayPos.x, d.y - displayPos.y) <= radiusPx) {
      return label;
    }
  }
  return null;
}
