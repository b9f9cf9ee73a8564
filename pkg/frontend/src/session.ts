import { ApiClient } from "./api.js";
import type { Task } from "./schemas.js";
import { TaskTimer, optionsForTask, validateAnswer } from "./taskView.js";

export type AnswerPolicy = (task: Task) => unknown;

export interface SessionResult {
  answered: number;
  duplicates: number;
  taskIds: string[];
}

/** Default scripted policy: first option for semantic tasks, a copy of the
 *  highlighted box for drawing tasks, its center for keypoint tasks. */
export const defaultPolicy: AnswerPolicy = (task) => {
  if (task.options.length > 0) return optionsForTask(task)[0];
  const [l, t, r, b] = task.bbox ?? [0, 0, 10, 10];
  if (task.kind === "keypoint") return [[(l + r) / 2, (t + b) / 2]];
  return [[l, t, r, b]];
};

/** Pull tasks for one annotator and answer them until done or `maxTasks`.
 *  Every submission is answered through the validated client, so each
 *  acknowledged answer is durable on the service side. */
export async function runSession(
  client: ApiClient,
  annotatorId: string,
  maxTasks: number,
  policy: AnswerPolicy = defaultPolicy,
  now?: () => number,
): Promise<SessionResult> {
  const result: SessionResult = { answered: 0, duplicates: 0, taskIds: [] };
  while (result.answered < maxTasks) {
    const task = await client.nextTask(annotatorId);
    if (task === null) break;
    const timer = new TaskTimer(now);
    const answer = policy(task);
    if (!validateAnswer(task, answer)) {
      throw new Error(`policy produced an invalid answer for ${task.task_id}`);
    }
    const ack = await client.submit(task.task_id, annotatorId, answer, timer.elapsedMs());
    if (ack.duplicate) {
      result.duplicates += 1;
    } else {
      result.answered += 1;
      result.taskIds.push(task.task_id);
    }
  }
  return result;
}
