import { afterEach, describe, expect, it, vi } from "vitest";

import { validateRegistrationDraft } from "../src/schemas";
import {
  emptyDraft,
  newRegistration,
  renderRegistration,
  renderToolListing,
  submitRegistration,
} from "../src/views/registration";
import { installFetchStub } from "./helpers";

afterEach(() => vi.unstubAllGlobals());

const WEATHER_DRAFT = {
  tool_id: "weather-query",
  name: "Weather Query Service",
  description:
    "Query the weather forecast for a city over a date range, counting days with adverse conditions during the period",
  tags: ["weather", "forecast", "adverse", "climate"],
  endpoint: "http://127.0.0.1:8052",
  params: [
    { name: "city", type: "string" as const, required: true },
    { name: "date_from", type: "string" as const, required: true },
    { name: "date_to", type: "string" as const, required: true },
  ],
  output_schema: [
    { name: "days", type: "list" as const, required: true },
    { name: "adverse_days", type: "number" as const, required: true },
  ],
};

describe("registration form", () => {
  it("performs the scenario-3 registration through the broker", async () => {
    const registered: string[] = [];
    installFetchStub([
      {
        method: "POST",
        path: /\/services$/,
        reply: (body) => {
          const { descriptor, health_probe } = body as {
            descriptor: typeof WEATHER_DRAFT;
            health_probe: string;
          };
          expect(descriptor.tool_id).toBe("weather-query");
          expect(health_probe).toContain("/health");
          return {
            json: {
              descriptor,
              health_probe,
              last_probe_ok: true,
              registered: false,
            },
          };
        },
      },
      {
        method: "POST",
        path: /\/services\/weather-query\/register$/,
        reply: () => {
          registered.push("weather-query");
          return { json: { tool_id: "weather-query" } };
        },
      },
      {
        method: "GET",
        path: /\/tools$/,
        reply: () => ({
          json: registered.map((toolId) => ({
            ...WEATHER_DRAFT,
            tool_id: toolId,
            state: "available",
          })),
        }),
      },
    ]);

    let state = { ...newRegistration(), draft: WEATHER_DRAFT };
    state = await submitRegistration(state, "http://127.0.0.1:8052/health");

    expect(registered).toEqual(["weather-query"]);
    expect(state.problems).toEqual([]);
    expect(state.notice).toContain("weather-query");
    const html = renderRegistration(state);
    expect(html).toContain("weather-query");
    expect(html).toContain("available");
  });

  it("blocks invalid drafts before any request", async () => {
    const { calls } = installFetchStub([]);
    let state = newRegistration();
    state = {
      ...state,
      draft: {
        ...emptyDraft(),
        tool_id: "x",
        name: "X",
        endpoint: "not a url",
        params: [
          { name: "city", type: "string" },
          { name: "city", type: "string" },
        ],
      },
    };
    state = await submitRegistration(state, "http://probe");
    expect(state.problems.some((p) => p.includes("endpoint"))).toBe(true);
    expect(state.problems.some((p) => p.includes("duplicate parameter"))).toBe(true);
    expect(calls).toHaveLength(0);
  });

  it("surfaces broker rejections", async () => {
    installFetchStub([
      {
        method: "POST",
        path: /\/services$/,
        reply: () => ({
          status: 400,
          json: { error_code: "validation_error", message: "tool 'weather-query' already managed" },
        }),
      },
    ]);
    let state = { ...newRegistration(), draft: WEATHER_DRAFT };
    state = await submitRegistration(state, "http://probe");
    expect(state.problems[0]).toContain("already managed");
  });

  it("renders an empty listing hint", () => {
    expect(renderToolListing([])).toContain("No tools registered");
  });
});

describe("draft validation mirrors registry invariants", () => {
  it("accepts the weather draft", () => {
    expect(validateRegistrationDraft(WEATHER_DRAFT).ok).toBe(true);
  });

  it("requires a tool id and valid endpoint", () => {
    const outcome = validateRegistrationDraft({ ...WEATHER_DRAFT, tool_id: "", endpoint: "nope" });
    expect(outcome.ok).toBe(false);
    expect(outcome.problems.length).toBeGreaterThanOrEqual(2);
  });

  it("rejects unknown param types", () => {
    const outcome = validateRegistrationDraft({
      ...WEATHER_DRAFT,
      params: [{ name: "city", type: "uuid" }],
    });
    expect(outcome.ok).toBe(false);
  });
});
