/**
 * Mirrors of the service wire schemas. The console never invents fields that
 * the services do not serve.
 */

export type TaskStatus = "completed" | "failed" | "needs_tool";

export interface TaskResult {
  task_id: string;
  status: TaskStatus;
  summary: string;
  payload: Record<string, unknown>;
  trace_ref: string;
}

export interface PendingMarker {
  status: "pending";
}

export type TaskPoll = TaskResult | PendingMarker;

export function isPending(poll: TaskPoll): poll is PendingMarker {
  return poll.status === "pending";
}

export interface ProcessStep {
  title: string;
  description?: string;
  required_data?: string[];
  produces?: string[];
  source?: "profile" | "tool" | "internal";
  binding?: Record<string, unknown>;
  for_each?: string;
  item_outputs?: string[];
  keep_if?: string;
  keep_value?: string;
}

export interface DecisionPoint {
  after_step: number;
  logic: string;
  condition?: string;
}

export interface Methodology {
  methodology_id: string;
  intent: string;
  description: string;
  process_steps: ProcessStep[];
  decision_points: DecisionPoint[];
  rules: string[];
  exceptions: { trigger: string; handling: string }[];
  suggestions: string[];
  references: { name: string; content_ref: string }[];
  intent_keywords: string[];
  version: number;
  updated_by: string;
  updated_at: string;
}

export type ParamType = "string" | "number" | "boolean" | "list" | "object";

export interface ToolParam {
  name: string;
  type: ParamType;
  required?: boolean;
  description?: string;
}

export interface ToolDescriptor {
  tool_id: string;
  name: string;
  description: string;
  tags: string[];
  endpoint: string;
  params: ToolParam[];
  output_schema: ToolParam[];
  broker_id?: string;
  state?: "available" | "suspect" | "unavailable";
  last_heartbeat_at?: number;
  registered_at?: number;
  version?: number;
}

export interface ManagedService {
  descriptor: ToolDescriptor;
  health_probe: string;
  last_probe_ok: boolean;
  registered: boolean;
}

export type StepOutcome = "pending" | "succeeded" | "failed" | "skipped" | "no_tool";

export interface StepState {
  step_index: number;
  step_ref: string;
  title: string;
  kind: "execute" | "branch" | "loop";
  attempt: number;
  outcome: StepOutcome;
  tool_used: string | null;
  inputs: Record<string, unknown>;
  outputs: Record<string, unknown>;
  error: string | null;
}

export interface WorkflowInstance {
  instance_id: string;
  task: {
    task_id: string;
    intent: string;
    entities: Record<string, string>;
    raw_text: string;
  };
  plan: { plan_id: string; steps: { step_id: string; title: string }[] } | null;
  status: "planning" | "running" | "completed" | "failed" | "needs_tool";
  step_states: StepState[];
  created_at: string | null;
  finished_at: string | null;
  error: string | null;
}

export interface ApiError {
  error_code: string;
  message: string;
}
