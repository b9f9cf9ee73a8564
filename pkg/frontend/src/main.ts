import { ApiClient, ApiError } from "./api.js";
import type { Task } from "./schemas.js";
import {
  TaskTimer,
  cropForTask,
  isSemantic,
  optionsForTask,
  questionForTask,
  validateAnswer,
  type DrawnBox,
} from "./taskView.js";

const client = new ApiClient("");
const annotatorId =
  localStorage.getItem("annotator_id") ??
  (() => {
    const id = `web-${Math.random().toString(36).slice(2, 10)}`;
    localStorage.setItem("annotator_id", id);
    return id;
  })();

const el = {
  question: document.getElementById("question")!,
  canvas: document.getElementById("scene") as HTMLCanvasElement,
  options: document.getElementById("options")!,
  status: document.getElementById("status")!,
  submit: document.getElementById("submit") as HTMLButtonElement,
  undo: document.getElementById("undo") as HTMLButtonElement,
  annotator: document.getElementById("annotator")!,
};
el.annotator.textContent = annotatorId;

let current: Task | null = null;
let timer = new TaskTimer();
let drawn: DrawnBox[] = [];
let points: [number, number][] = [];
let dragStart: [number, number] | null = null;
let view = { offsetX: 0, offsetY: 0, scale: 1 };
let image: HTMLImageElement | null = null;

function setStatus(text: string) {
  el.status.textContent = text;
}

async function loadNext() {
  el.options.innerHTML = "";
  drawn = [];
  points = [];
  current = await client.nextTask(annotatorId);
  if (!current) {
    el.question.textContent = "No tasks available. Thank you!";
    el.submit.disabled = true;
    return;
  }
  el.question.textContent = questionForTask(current);
  timer = new TaskTimer();
  await renderScene();
  if (isSemantic(current)) {
    el.submit.hidden = true;
    el.undo.hidden = true;
    for (const option of optionsForTask(current)) {
      const button = document.createElement("button");
      button.textContent = option;
      button.onclick = () => submit(option);
      el.options.appendChild(button);
    }
  } else {
    el.submit.hidden = false;
    el.undo.hidden = false;
    el.submit.disabled = false;
  }
}

async function renderScene() {
  if (!current) return;
  image = new Image();
  const loaded = new Promise<boolean>((resolve) => {
    image!.onload = () => resolve(true);
    image!.onerror = () => resolve(false);
  });
  image.src = client.imageUrl(current.image_id);
  const ok = await loaded;
  const ctx = el.canvas.getContext("2d")!;
  ctx.clearRect(0, 0, el.canvas.width, el.canvas.height);
  if (!ok || !image.naturalWidth) {
    image = null;
    setStatus(`image ${current.image_id} unavailable; coordinates still recorded`);
  }
  const iw = image?.naturalWidth ?? 1242;
  const ih = image?.naturalHeight ?? 375;
  const crop = cropForTask(current, iw, ih) ?? { left: 0, top: 0, right: iw, bottom: ih };
  const cw = crop.right - crop.left;
  const ch = crop.bottom - crop.top;
  view.scale = Math.min(el.canvas.width / cw, el.canvas.height / ch);
  view.offsetX = crop.left;
  view.offsetY = crop.top;
  if (image) {
    ctx.drawImage(image, crop.left, crop.top, cw, ch, 0, 0, cw * view.scale, ch * view.scale);
  }
  if (current.bbox) {
    const [l, t, r, b] = current.bbox;
    ctx.strokeStyle = "#ffd166";
    ctx.lineWidth = 2;
    ctx.strokeRect(...toCanvas(l, t), (r - l) * view.scale, (b - t) * view.scale);
  }
  for (const [l, t, r, b] of drawn) {
    ctx.strokeStyle = "#06d6a0";
    ctx.lineWidth = 2;
    ctx.strokeRect(...toCanvas(l, t), (r - l) * view.scale, (b - t) * view.scale);
  }
  for (const [x, y] of points) {
    const [cx, cy] = toCanvas(x, y);
    ctx.fillStyle = "#06d6a0";
    ctx.beginPath();
    ctx.arc(cx, cy, 4, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function toCanvas(x: number, y: number): [number, number] {
  return [(x - view.offsetX) * view.scale, (y - view.offsetY) * view.scale];
}

function toImage(cx: number, cy: number): [number, number] {
  return [cx / view.scale + view.offsetX, cy / view.scale + view.offsetY];
}

el.canvas.addEventListener("mousedown", (e) => {
  if (!current || isSemantic(current)) return;
  const rect = el.canvas.getBoundingClientRect();
  const p = toImage(e.clientX - rect.left, e.clientY - rect.top);
  if (current.kind === "keypoint") {
    points.push(p);
    void renderScene();
  } else {
    dragStart = p;
  }
});

el.canvas.addEventListener("mouseup", (e) => {
  if (!current || !dragStart) return;
  const rect = el.canvas.getBoundingClientRect();
  const [x2, y2] = toImage(e.clientX - rect.left, e.clientY - rect.top);
  const box: DrawnBox = [
    Math.min(dragStart[0], x2),
    Math.min(dragStart[1], y2),
    Math.max(dragStart[0], x2),
    Math.max(dragStart[1], y2),
  ];
  dragStart = null;
  // degenerate drags (clicks) are ignored rather than submitted
  if (box[2] - box[0] >= 2 && box[3] - box[1] >= 2) {
    drawn.push(box);
    void renderScene();
  }
});

el.undo.onclick = () => {
  if (current?.kind === "keypoint") points.pop();
  else drawn.pop();
  void renderScene();
};

el.submit.onclick = () => {
  if (!current) return;
  void submit(current.kind === "keypoint" ? points : drawn);
};

async function submit(answer: unknown) {
  if (!current) return;
  if (!validateAnswer(current, answer)) {
    setStatus("answer invalid: boxes need positive width and height");
    return;
  }
  try {
    const ack = await client.submit(current.task_id, annotatorId, answer, timer.elapsedMs());
    setStatus(ack.duplicate ? "already recorded" : "recorded");
  } catch (err) {
    if (err instanceof ApiError) {
      setStatus(`rejected (${err.status}): ${err.detail}`);
      return;
    }
    throw err;
  }
  await loadNext();
}

void loadNext();
