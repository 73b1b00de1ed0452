/**
 * Tool-provider registration form: drafts validate client-side with the same
 * invariants the registry enforces, then go through the broker's add +
 * register flow (registration stays provider-initiated). The registry
 * listing shows what discovery can currently see.
 */

import { addService, listTools, registerService } from "../api";
import { escapeHtml, renderList } from "../dom";
import { validateRegistrationDraft, type RegistrationDraft } from "../schemas";
import type { ToolDescriptor } from "../types";

export interface RegistrationState {
  draft: RegistrationDraft;
  problems: string[];
  notice: string | null;
  tools: ToolDescriptor[];
}

export function emptyDraft(): RegistrationDraft {
  return {
    tool_id: "",
    name: "",
    description: "",
    tags: [],
    endpoint: "",
    params: [],
    output_schema: [],
  };
}

export function newRegistration(): RegistrationState {
  return { draft: emptyDraft(), problems: [], notice: null, tools: [] };
}

export async function refreshTools(state: RegistrationState): Promise<RegistrationState> {
  try {
    return { ...state, tools: await listTools() };
  } catch (err) {
    return {
      ...state,
      problems: [err instanceof Error ? err.message : String(err)],
    };
  }
}

export async function submitRegistration(
  state: RegistrationState,
  healthProbe: string,
): Promise<RegistrationState> {
  const { ok, problems } = validateRegistrationDraft(state.draft);
  if (!ok) {
    return { ...state, problems, notice: null };
  }
  try {
    const descriptor: ToolDescriptor = { ...state.draft };
    await addService(descriptor, healthProbe);
    await registerService(descriptor.tool_id);
    const refreshed = await refreshTools({ ...state, problems: [], notice: null });
    return {
      ...refreshed,
      notice: `Registered ${descriptor.tool_id}; it is now discoverable.`,
    };
  } catch (err) {
    return {
      ...state,
      notice: null,
      problems: [err instanceof Error ? err.message : String(err)],
    };
  }
}

export function renderToolListing(tools: ToolDescriptor[]): string {
  if (tools.length === 0) {
    return `<p class="empty">No tools registered.</p>`;
  }
  const rows = tools
    .map(
      (tool) =>
        `<tr><td>${escapeHtml(tool.tool_id)}</td>` +
        `<td>${escapeHtml(tool.state ?? "?")}</td>` +
        `<td>${escapeHtml(tool.description)}</td></tr>`,
    )
    .join("");
  return (
    `<table class="tools"><thead><tr><th>tool</th><th>state</th><th>description</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>`
  );
}

export function renderRegistration(state: RegistrationState): string {
  const problems = renderList(state.problems, "problems");
  const notice = state.notice
    ? `<div class="notice">${escapeHtml(state.notice)}</div>`
    : "";
  return (
    `<div class="registration">` +
    notice +
    problems +
    renderToolListing(state.tools) +
    `</div>`
  );
}
