/**
 * End-user chat: submit a request, poll for the result, render the answer.
 * A needs_tool result gets a prominent banner naming the unmet step, linking
 * to the registration form.
 */

import { submitRequest } from "../api";
import { escapeHtml } from "../dom";
import { pollTask } from "../polling";
import type { TaskResult } from "../types";

export interface ChatMessage {
  role: "user" | "agent";
  text: string;
  result?: TaskResult;
}

export interface ChatThread {
  userId: string;
  messages: ChatMessage[];
  busy: boolean;
  error: string | null;
}

export function newThread(userId: string): ChatThread {
  return { userId, messages: [], busy: false, error: null };
}

/** Local validation: blank input never reaches the service. */
export function validateInput(text: string): string | null {
  if (!text.trim()) {
    return "Please enter a request.";
  }
  return null;
}

export async function chatSubmit(
  thread: ChatThread,
  text: string,
  pollIntervalMs = 1000,
): Promise<ChatThread> {
  const problem = validateInput(text);
  if (problem) {
    return { ...thread, error: problem };
  }
  const submitted: ChatThread = {
    ...thread,
    busy: true,
    error: null,
    messages: [...thread.messages, { role: "user", text }],
  };
  try {
    const taskId = await submitRequest(thread.userId, text);
    const result = await pollTask(taskId, { intervalMs: pollIntervalMs });
    return {
      ...submitted,
      busy: false,
      messages: [
        ...submitted.messages,
        { role: "agent", text: result.summary, result },
      ],
    };
  } catch (err) {
    return {
      ...submitted,
      busy: false,
      error: err instanceof Error ? err.message : String(err),
    };
  }
}

interface CityRecord {
  name: string;
  distance_km?: number;
}

function renderCities(payload: Record<string, unknown>): string {
  const cities = payload["candidate_cities"];
  if (!Array.isArray(cities) || cities.length === 0) return "";
  const rows = (cities as CityRecord[])
    .map((city) => {
      const distance =
        city.distance_km !== undefined ? ` (${city.distance_km} km)` : "";
      return `<li>${escapeHtml(city.name)}${escapeHtml(distance)}</li>`;
    })
    .join("");
  return `<ul class="cities">${rows}</ul>`;
}

function unmetStepDescription(result: TaskResult): string {
  const unmet = result.payload["unmet_steps"];
  if (Array.isArray(unmet) && unmet.length > 0) {
    const first = unmet[0] as { description?: string; title?: string };
    return first.description ?? first.title ?? "unknown step";
  }
  return "unknown step";
}

export function renderNeedsToolBanner(result: TaskResult): string {
  const step = unmetStepDescription(result);
  return (
    `<div class="banner needs-tool">No suitable tool is registered for: ` +
    `<strong>${escapeHtml(step)}</strong> ` +
    `<a href="#registration">Register a tool service</a></div>`
  );
}

export function renderMessage(message: ChatMessage): string {
  const base = `<div class="msg ${message.role}">${escapeHtml(message.text)}</div>`;
  if (message.role !== "agent" || !message.result) return base;
  if (message.result.status === "needs_tool") {
    return base + renderNeedsToolBanner(message.result);
  }
  if (message.result.status === "failed") {
    return base + `<div class="banner failed">The request failed.</div>`;
  }
  return base + renderCities(message.result.payload);
}

export function renderThread(thread: ChatThread): string {
  const messages = thread.messages.map(renderMessage).join("");
  const error = thread.error
    ? `<div class="banner error">${escapeHtml(thread.error)}</div>`
    : "";
  const busy = thread.busy ? `<div class="busy">Working…</div>` : "";
  return `<div class="chat">${messages}${busy}${error}</div>`;
}
