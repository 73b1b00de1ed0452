/**
 * Expert methodology editor: shows the stored record, validates drafts with
 * the same invariants the service enforces, and inserts process steps at a
 * chosen position (the scenario-2 flow). Version conflicts render inline.
 */

import { getMethodology, insertStep } from "../api";
import { ApiCallError } from "../api";
import { escapeHtml, renderList } from "../dom";
import { processStepSchema } from "../schemas";
import type { Methodology, ProcessStep } from "../types";

export interface EditorState {
  methodology: Methodology | null;
  expertId: string;
  problems: string[];
  notice: string | null;
}

export function newEditor(expertId: string): EditorState {
  return { methodology: null, expertId, problems: [], notice: null };
}

export async function loadMethodology(
  state: EditorState,
  methodologyId: string,
): Promise<EditorState> {
  try {
    const methodology = await getMethodology(methodologyId);
    return { ...state, methodology, problems: [], notice: null };
  } catch (err) {
    return {
      ...state,
      problems: [err instanceof Error ? err.message : String(err)],
    };
  }
}

export function validateStepDraft(step: unknown): string[] {
  const parsed = processStepSchema.safeParse(step);
  if (parsed.success) return [];
  return parsed.error.issues.map(
    (issue) => `${issue.path.join(".") || "step"}: ${issue.message}`,
  );
}

export async function insertStepDraft(
  state: EditorState,
  position: number,
  step: ProcessStep,
): Promise<EditorState> {
  if (state.methodology === null) {
    return { ...state, problems: ["load a methodology first"] };
  }
  const problems = validateStepDraft(step);
  if (position < 0 || position > state.methodology.process_steps.length) {
    problems.push(
      `position ${position} not in [0, ${state.methodology.process_steps.length}]`,
    );
  }
  if (problems.length > 0) {
    return { ...state, problems };
  }
  try {
    const version = await insertStep(
      state.methodology.methodology_id,
      position,
      step,
      state.expertId,
    );
    const refreshed = await getMethodology(state.methodology.methodology_id);
    return {
      ...state,
      methodology: refreshed,
      problems: [],
      notice: `Saved version ${version}.`,
    };
  } catch (err) {
    if (err instanceof ApiCallError && err.errorCode === "version_conflict") {
      return {
        ...state,
        problems: [`Version conflict: ${err.message}. Reload and retry.`],
      };
    }
    return {
      ...state,
      problems: [err instanceof Error ? err.message : String(err)],
    };
  }
}

export function renderSteps(methodology: Methodology): string {
  const rows = methodology.process_steps
    .map(
      (step, index) =>
        `<li><span class="idx">${index + 1}.</span> ${escapeHtml(step.title)}` +
        (step.for_each
          ? ` <em class="loop">(per item of ${escapeHtml(step.for_each)})</em>`
          : "") +
        `</li>`,
    )
    .join("");
  return `<ol class="steps">${rows}</ol>`;
}

export function renderEditor(state: EditorState): string {
  const problems = renderList(state.problems, "problems");
  const notice = state.notice
    ? `<div class="notice">${escapeHtml(state.notice)}</div>`
    : "";
  if (state.methodology === null) {
    return `<div class="editor">${problems}<p>No methodology loaded.</p></div>`;
  }
  const doc = state.methodology;
  return (
    `<div class="editor">` +
    `<h2>${escapeHtml(doc.methodology_id)} <span class="version">v${doc.version}</span></h2>` +
    `<p class="intent">intent: ${escapeHtml(doc.intent)}</p>` +
    `<p>${escapeHtml(doc.description)}</p>` +
    renderSteps(doc) +
    renderList(doc.rules, "rules") +
    notice +
    problems +
    `</div>`
  );
}
