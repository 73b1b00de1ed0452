/**
 * Workflow trace viewer: the step timeline of one instance, with outcomes,
 * the tool each step used, and the context keys each step wrote.
 */

import { getInstance } from "../api";
import { escapeHtml } from "../dom";
import type { StepState, WorkflowInstance } from "../types";

export interface TraceState {
  instance: WorkflowInstance | null;
  error: string | null;
}

export function newTrace(): TraceState {
  return { instance: null, error: null };
}

export async function openTrace(instanceId: string): Promise<TraceState> {
  try {
    return { instance: await getInstance(instanceId), error: null };
  } catch (err) {
    return {
      instance: null,
      error: err instanceof Error ? err.message : String(err),
    };
  }
}

/** Top-level plan steps only; loop-body expansions are indented separately. */
export function topLevelStates(instance: WorkflowInstance): StepState[] {
  return instance.step_states.filter((s) => !s.step_ref.includes("/"));
}

export function contextDelta(state: StepState): string {
  const keys = Object.keys(state.outputs);
  if (keys.length === 0) return "";
  return keys
    .sort()
    .map((k) => `+${k}`)
    .join(" ");
}

function outcomeBadge(state: StepState): string {
  return `<span class="outcome ${state.outcome}">${state.outcome}</span>`;
}

export function renderTimelineRow(state: StepState, nested: boolean): string {
  const tool = state.tool_used
    ? ` <span class="tool">via ${escapeHtml(state.tool_used)}</span>`
    : "";
  const delta = contextDelta(state);
  const deltaHtml = delta ? ` <span class="delta">${escapeHtml(delta)}</span>` : "";
  const error = state.error
    ? ` <span class="error">${escapeHtml(state.error)}</span>`
    : "";
  return (
    `<li class="${nested ? "nested" : "top"}">` +
    `<code>${escapeHtml(state.step_ref)}</code> ` +
    `${escapeHtml(state.title)} ${outcomeBadge(state)}${tool}${deltaHtml}${error}</li>`
  );
}

export function renderTimeline(instance: WorkflowInstance): string {
  const rows = instance.step_states
    .map((state) => renderTimelineRow(state, state.step_ref.includes("/")))
    .join("");
  return `<ol class="timeline">${rows}</ol>`;
}

export function renderTrace(state: TraceState): string {
  if (state.error) {
    return `<div class="trace"><div class="banner error">${escapeHtml(state.error)}</div></div>`;
  }
  if (!state.instance) {
    return `<div class="trace"><p>No instance loaded.</p></div>`;
  }
  const instance = state.instance;
  return (
    `<div class="trace">` +
    `<h2>${escapeHtml(instance.instance_id)} <span class="status ${instance.status}">${instance.status}</span></h2>` +
    `<p class="query">${escapeHtml(instance.task.raw_text)}</p>` +
    renderTimeline(instance) +
    `</div>`
  );
}
