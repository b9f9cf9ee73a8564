import { z } from "zod";

/** Answer-option sets per semantic task kind; must match the service exactly. */
export const CANT_SOLVE = "Can't See/Can't Solve";

export const OPTION_SETS: Record<string, readonly string[]> = {
  is_pedestrian: ["Yes", "No", CANT_SOLVE],
  is_human: ["Yes", "No", CANT_SOLVE],
  activity: [
    "Walking/Running/Standing",
    "Riding/Driving a vehicle",
    "Sitting/Lying down",
    "Other activity",
    CANT_SOLVE,
  ],
};

export const SEMANTIC_KINDS = Object.keys(OPTION_SETS);
export const BOX_KINDS = ["direct_box", "keypoint_box"];
export const TaskKind = z.enum([
  "direct_box",
  "keypoint",
  "keypoint_box",
  "is_pedestrian",
  "is_human",
  "activity",
]);

const BBoxSchema = z
  .tuple([z.number(), z.number(), z.number(), z.number()])
  .refine(([l, t, r, b]) => l < r && t < b, {
    message: "box must satisfy left < right and top < bottom",
  });

export const TaskSchema = z.object({
  task_id: z.string().min(1),
  kind: TaskKind,
  image_id: z.string().min(1),
  bbox: BBoxSchema.nullable(),
  options: z.array(z.string()),
  payload: z.record(z.string(), z.unknown()),
});

export const NextTaskResponseSchema = z.object({
  task: TaskSchema.nullable(),
});

export const SubmitBodySchema = z.object({
  task_id: z.string().min(1),
  annotator_id: z.string().min(1),
  answer: z.union([z.string(), z.array(BBoxSchema), z.array(z.tuple([z.number(), z.number()]))]),
  duration_ms: z.number().positive(),
});

export const SubmitAckSchema = z.object({
  status: z.literal("ok"),
  duplicate: z.boolean(),
});

export const ProgressSchema = z.object({
  tasks: z.number().int().nonnegative(),
  complete: z.number().int().nonnegative(),
  responses: z.number().int().nonnegative(),
  per_task: z.record(
    z.string(),
    z.object({
      answered: z.number().int().nonnegative(),
      needed: z.number().int().positive(),
      leased: z.number().int().nonnegative(),
    }),
  ),
});

export const ExportSchema = z.object({
  responses: z.array(
    z.object({
      task_id: z.string(),
      annotator_id: z.string(),
      answer: z.unknown(),
      duration: z.number().positive(),
      timestamp: z.number(),
    }),
  ),
});

export type Task = z.infer<typeof TaskSchema>;
export type SubmitBody = z.infer<typeof SubmitBodySchema>;
export type SubmitAck = z.infer<typeof SubmitAckSchema>;
export type Progress = z.infer<typeof ProgressSchema>;
export type ExportPayload = z.infer<typeof ExportSchema>;
