/** Scripted fetch stub: routes matched in order, JSON in and out. */

import { vi } from "vitest";

export interface Route {
  method: string;
  path: RegExp | string;
  reply: (body: unknown, url: string) => { status?: number; json: unknown };
}

export function installFetchStub(routes: Route[]): { calls: string[] } {
  const calls: string[] = [];
  const stub = vi.fn(async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const method = (init?.method ?? "GET").toUpperCase();
    calls.push(`${method} ${url}`);
    for (const route of routes) {
      const matches =
        typeof route.path === "string" ? url.includes(route.path) : route.path.test(url);
      if (route.method === method && matches) {
        const body = init?.body ? JSON.parse(String(init.body)) : undefined;
        const { status = 200, json } = route.reply(body, url);
        return new Response(JSON.stringify(json), {
          status,
          headers: { "Content-Type": "application/json" },
        });
      }
    }
    return new Response(
      JSON.stringify({ error_code: "not_found", message: `no stub for ${method} ${url}` }),
      { status: 404 },
    );
  });
  vi.stubGlobal("fetch", stub);
  return { calls };
}

export const SCENARIO1_RESULT = {
  task_id: "task-000000000001",
  status: "completed",
  summary:
    "candidate_cities: C1, C2, C3; attractions: Riverside Park, Science Discovery Museum, Old Town Night Market",
  payload: {
    candidate_cities: [
      { name: "C1", distance_km: 50 },
      { name: "C2", distance_km: 80 },
      { name: "C3", distance_km: 120 },
    ],
    attractions: [
      { name: "Riverside Park", family_friendly: true },
      { name: "Science Discovery Museum", family_friendly: true },
      { name: "Old Town Night Market", family_friendly: false },
    ],
  },
  trace_ref: "inst-000000000001",
};

export const NEEDS_TOOL_RESULT = {
  task_id: "task-000000000002",
  status: "needs_tool",
  summary:
    "No suitable tool is registered for step: Excluding cities with adverse weather during the travel period",
  payload: {
    unmet_steps: [
      {
        step_id: "s4.call",
        title: "Excluding cities with adverse weather during the travel period",
        description:
          "Excluding cities with adverse weather during the travel period",
      },
    ],
  },
  trace_ref: "inst-000000000002",
};

export const TRAVEL_METHODOLOGY = {
  methodology_id: "travel-city-recommendation",
  intent: "travel_recommendation",
  description: "Recommend destination cities for a short family trip",
  process_steps: [
    { title: "Query the user's home address", produces: ["home_address"], source: "profile" },
    { title: "Find candidate cities near the home address", produces: ["candidate_cities"] },
    {
      title: "Look up family-friendly attractions in the nearest candidate city",
      produces: ["attractions"],
    },
  ],
  decision_points: [],
  rules: [],
  exceptions: [],
  suggestions: [],
  references: [],
  intent_keywords: ["travel", "cities", "vacation"],
  version: 1,
  updated_by: "expert-demo",
  updated_at: "2026-01-01T00:00:00Z",
};

export const WEATHER_STEP = {
  title: "Excluding cities with adverse weather during the travel period",
  description: "Excluding cities with adverse weather during the travel period",
  required_data: ["candidate_cities"],
  produces: ["candidate_cities"],
  source: "tool" as const,
  for_each: "candidate_cities",
  item_outputs: ["days", "adverse_days"],
  keep_if: "adverse_days = 0",
  keep_value: "{context.item}",
  binding: {
    city: "{context.item.name}",
    date_from: "2026-07-01",
    date_to: "2026-07-03",
  },
};
