/**
 * Browser bootstrap: wires the four views into the page. All state lives in
 * the services; reloading reconstructs every view from GET endpoints.
 */

import { configureUrls } from "./config";
import * as chat from "./views/chat";
import * as methodology from "./views/methodology";
import * as registration from "./views/registration";
import * as trace from "./views/trace";

const DEFAULT_USER = "u-demo";
const DEFAULT_EXPERT = "expert-demo";
const DEFAULT_METHODOLOGY = "travel-city-recommendation";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

export async function start(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const host = params.get("host");
  if (host) {
    configureUrls({
      reception: `${host}:8040`,
      workflow: `${host}:8041`,
      methodology: `${host}:8043`,
      registry: `${host}:8044`,
      broker: `${host}:8045`,
    });
  }

  let thread = chat.newThread(DEFAULT_USER);
  let editor = methodology.newEditor(DEFAULT_EXPERT);
  let reg = registration.newRegistration();

  const chatView = byId<HTMLDivElement>("chat-view");
  const chatInput = byId<HTMLInputElement>("chat-input");
  const chatSend = byId<HTMLButtonElement>("chat-send");
  const editorView = byId<HTMLDivElement>("methodology-view");
  const stepJson = byId<HTMLTextAreaElement>("step-json");
  const stepPosition = byId<HTMLInputElement>("step-position");
  const stepInsert = byId<HTMLButtonElement>("step-insert");
  const regView = byId<HTMLDivElement>("registration-view");
  const regJson = byId<HTMLTextAreaElement>("registration-json");
  const regProbe = byId<HTMLInputElement>("registration-probe");
  const regSubmit = byId<HTMLButtonElement>("registration-submit");
  const traceView = byId<HTMLDivElement>("trace-view");
  const traceId = byId<HTMLInputElement>("trace-id");
  const traceOpen = byId<HTMLButtonElement>("trace-open");

  const redraw = () => {
    chatView.innerHTML = chat.renderThread(thread);
    editorView.innerHTML = methodology.renderEditor(editor);
    regView.innerHTML = registration.renderRegistration(reg);
  };

  chatSend.addEventListener("click", async () => {
    const text = chatInput.value;
    thread = await chat.chatSubmit(thread, text);
    if (!thread.error) chatInput.value = "";
    redraw();
    const last = thread.messages[thread.messages.length - 1];
    if (last?.result?.trace_ref) traceId.value = last.result.trace_ref;
  });

  stepInsert.addEventListener("click", async () => {
    try {
      const step = JSON.parse(stepJson.value);
      editor = await methodology.insertStepDraft(
        editor,
        Number(stepPosition.value),
        step,
      );
    } catch (err) {
      editor = { ...editor, problems: [`step JSON: ${err}`] };
    }
    redraw();
  });

  regSubmit.addEventListener("click", async () => {
    try {
      reg = { ...reg, draft: JSON.parse(regJson.value) };
      reg = await registration.submitRegistration(reg, regProbe.value);
    } catch (err) {
      reg = { ...reg, problems: [`descriptor JSON: ${err}`] };
    }
    redraw();
  });

  traceOpen.addEventListener("click", async () => {
    const state = await trace.openTrace(traceId.value.trim());
    traceView.innerHTML = trace.renderTrace(state);
  });

  editor = await methodology.loadMethodology(editor, DEFAULT_METHODOLOGY);
  reg = await registration.refreshTools(reg);
  redraw();
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  void start();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", () => void start());
}
