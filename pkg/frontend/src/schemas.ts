/**
 * Client-side validation mirroring the invariants the services enforce, so a
 * draft the console accepts is never rejected by the server for schema
 * reasons.
 */

import { z } from "zod";

export const processStepSchema = z
  .object({
    title: z.string().min(1, "title must be non-empty"),
    description: z.string().optional(),
    required_data: z.array(z.string()).optional(),
    produces: z.array(z.string()).optional(),
    source: z.enum(["profile", "tool", "internal"]).optional(),
    binding: z.record(z.unknown()).optional(),
    for_each: z.string().optional(),
    item_outputs: z.array(z.string()).optional(),
    keep_if: z.string().optional(),
    keep_value: z.string().optional(),
  })
  .refine((step) => !step.keep_if || step.for_each, {
    message: "keep_if requires for_each",
  })
  .refine((step) => !step.for_each || (step.produces ?? []).length > 0, {
    message: "for_each steps must declare produces",
  });

export const methodologyDraftSchema = z
  .object({
    methodology_id: z.string().min(1),
    intent: z.string().min(1, "intent must be non-empty"),
    description: z.string(),
    process_steps: z.array(processStepSchema).min(1, "process_steps must be non-empty"),
    decision_points: z
      .array(
        z.object({
          after_step: z.number().int().min(0),
          logic: z.string(),
          condition: z.string().optional(),
        }),
      )
      .default([]),
    rules: z.array(z.string()).default([]),
    exceptions: z
      .array(z.object({ trigger: z.string(), handling: z.string() }))
      .default([]),
    suggestions: z.array(z.string()).default([]),
    references: z
      .array(z.object({ name: z.string(), content_ref: z.string() }))
      .default([]),
    intent_keywords: z.array(z.string()).default([]),
    version: z.number().int().min(0),
  })
  .refine(
    (doc) => doc.decision_points.every((dp) => dp.after_step < doc.process_steps.length),
    { message: "decision_points: after_step out of range" },
  );

const PARAM_TYPES = ["string", "number", "boolean", "list", "object"] as const;

const paramSchema = z.object({
  name: z.string().min(1, "parameter name must be non-empty"),
  type: z.enum(PARAM_TYPES),
  required: z.boolean().optional(),
  description: z.string().optional(),
});

function uniqueNames(params: { name: string }[]): boolean {
  return new Set(params.map((p) => p.name)).size === params.length;
}

export const registrationDraftSchema = z.object({
  tool_id: z.string().min(1, "tool_id must be non-empty"),
  name: z.string().min(1),
  description: z.string(),
  tags: z.array(z.string()).default([]),
  endpoint: z
    .string()
    .refine(
      (url) => /^(https?|inproc):\/\/[^\s/]+/.test(url),
      "endpoint is not a valid URL",
    ),
  params: z.array(paramSchema).refine(uniqueNames, "duplicate parameter name"),
  output_schema: z.array(paramSchema).refine(uniqueNames, "duplicate parameter name"),
});

export type MethodologyDraft = z.infer<typeof methodologyDraftSchema>;
export type RegistrationDraft = z.infer<typeof registrationDraftSchema>;

export interface ValidationOutcome {
  ok: boolean;
  problems: string[];
}

export function validateMethodologyDraft(draft: unknown): ValidationOutcome {
  const parsed = methodologyDraftSchema.safeParse(draft);
  if (parsed.success) return { ok: true, problems: [] };
  return {
    ok: false,
    problems: parsed.error.issues.map(
      (issue) => `${issue.path.join(".") || "$"}: ${issue.message}`,
    ),
  };
}

export function validateRegistrationDraft(draft: unknown): ValidationOutcome {
  const parsed = registrationDraftSchema.safeParse(draft);
  if (parsed.success) return { ok: true, problems: [] };
  return {
    ok: false,
    problems: parsed.error.issues.map(
      (issue) => `${issue.path.join(".") || "$"}: ${issue.message}`,
    ),
  };
}
