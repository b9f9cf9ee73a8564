import { CANT_SOLVE, OPTION_SETS, SEMANTIC_KINDS, type Task } from "./schemas.js";

export interface CropRect {
  left: number;
  top: number;
  right: number;
  bottom: number;
}

/** Crop region around the target box with a context margin on every side
 *  (default 50% of the box dimension), clamped to the image. */
export function cropForTask(
  task: Task,
  imageWidth: number,
  imageHeight: number,
  margin = 0.5,
): CropRect | null {
  if (!task.bbox) return null;
  const [l, t, r, b] = task.bbox;
  const mx = margin * (r - l);
  const my = margin * (b - t);
  return {
    left: Math.max(0, l - mx),
    top: Math.max(0, t - my),
    right: Math.min(imageWidth, r + mx),
    bottom: Math.min(imageHeight, b + my),
  };
}

export function isSemantic(task: Task): boolean {
  return SEMANTIC_KINDS.includes(task.kind);
}

/** Option buttons for a semantic task. Always the fixed set for the kind;
 *  the server-provided list must agree or the task is malformed. */
export function optionsForTask(task: Task): readonly string[] {
  const expected = OPTION_SETS[task.kind];
  if (!expected) {
    throw new Error(`task kind ${task.kind} has no option set`);
  }
  if (
    task.options.length !== expected.length ||
    !expected.every((o, i) => task.options[i] === o)
  ) {
    throw new Error(`option set mismatch for ${task.kind}: ${task.options.join("|")}`);
  }
  return expected;
}

export function questionForTask(task: Task): string {
  switch (task.kind) {
    case "is_pedestrian":
      return "Is the highlighted object a walking pedestrian?";
    case "is_human":
      return "Is the highlighted object a human?";
    case "activity":
      return "What is the highlighted person doing?";
    case "direct_box":
      return "Draw a box around every pedestrian not yet boxed.";
    case "keypoint":
      return "Click once on every pedestrian.";
    case "keypoint_box":
      return "Draw a box around the highlighted pedestrian.";
  }
}

export type DrawnBox = [number, number, number, number];

/** A drawn box is valid only with positive width and height. */
export function validateDrawnBox(box: DrawnBox): boolean {
  const [l, t, r, b] = box;
  return Number.isFinite(l) && Number.isFinite(t) && Number.isFinite(r) &&
    Number.isFinite(b) && l < r && t < b;
}

export function validateAnswer(task: Task, answer: unknown): boolean {
  if (isSemantic(task)) {
    return typeof answer === "string" && OPTION_SETS[task.kind]!.includes(answer);
  }
  if (!Array.isArray(answer)) return false;
  if (task.kind === "keypoint") {
    return answer.every((p) => Array.isArray(p) && p.length === 2 &&
      p.every((v) => typeof v === "number" && Number.isFinite(v)));
  }
  return answer.every((b) => Array.isArray(b) && b.length === 4 &&
    validateDrawnBox(b as DrawnBox));
}

/** Wall-clock timer for duration_ms; clock injectable for tests. */
export class TaskTimer {
  private startedAt: number;

  constructor(private readonly now: () => number = () => Date.now()) {
    this.startedAt = this.now();
  }

  restart(): void {
    this.startedAt = this.now();
  }

  elapsedMs(): number {
    // the service requires a strictly positive duration
    return Math.max(1, this.now() - this.startedAt);
  }
}

export { CANT_SOLVE };
