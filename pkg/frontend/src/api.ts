/**
 * Typed fetch clients for the documented service endpoints. Service errors
 * ({error_code, message}) surface as ApiCallError so views can render them
 * verbatim.
 */

import { serviceUrls } from "./config";
import type {
  ManagedService,
  Methodology,
  ProcessStep,
  TaskPoll,
  ToolDescriptor,
  WorkflowInstance,
} from "./types";

export class ApiCallError extends Error {
  constructor(
    public readonly errorCode: string,
    message: string,
    public readonly status: number,
  ) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!response.ok) {
    let code = "http_error";
    let message = `HTTP ${response.status}`;
    try {
      const body = (await response.json()) as { error_code?: string; message?: string };
      code = body.error_code ?? code;
      message = body.message ?? message;
    } catch {
      // non-JSON error body; keep defaults
    }
    throw new ApiCallError(code, message, response.status);
  }
  return (await response.json()) as T;
}

// -- reception ---------------------------------------------------------------

export async function submitRequest(userId: string, text: string): Promise<string> {
  const doc = await request<{ task_id: string }>(`${serviceUrls().reception}/requests`, {
    method: "POST",
    body: JSON.stringify({ user_id: userId, text }),
  });
  return doc.task_id;
}

export async function getTask(taskId: string): Promise<TaskPoll> {
  return request<TaskPoll>(`${serviceUrls().reception}/tasks/${taskId}`);
}

// -- methodology ---------------------------------------------------------------

export async function getMethodology(methodologyId: string): Promise<Methodology> {
  return request<Methodology>(
    `${serviceUrls().methodology}/methodologies/${methodologyId}`,
  );
}

export async function listMethodologies(): Promise<Methodology[]> {
  return request<Methodology[]>(`${serviceUrls().methodology}/methodologies`);
}

export async function insertStep(
  methodologyId: string,
  position: number,
  step: ProcessStep,
  expertId: string,
): Promise<number> {
  const doc = await request<{ version: number }>(
    `${serviceUrls().methodology}/methodologies/${methodologyId}/steps`,
    {
      method: "POST",
      body: JSON.stringify({ position, step, expert_id: expertId }),
    },
  );
  return doc.version;
}

// -- registry / broker -----------------------------------------------------------

export async function listTools(): Promise<ToolDescriptor[]> {
  return request<ToolDescriptor[]>(`${serviceUrls().registry}/tools`);
}

export async function addService(
  descriptor: ToolDescriptor,
  healthProbe: string,
): Promise<ManagedService> {
  return request<ManagedService>(`${serviceUrls().broker}/services`, {
    method: "POST",
    body: JSON.stringify({ descriptor, health_probe: healthProbe }),
  });
}

export async function registerService(toolId: string): Promise<string> {
  const doc = await request<{ tool_id: string }>(
    `${serviceUrls().broker}/services/${toolId}/register`,
    { method: "POST" },
  );
  return doc.tool_id;
}

export async function listServices(): Promise<ManagedService[]> {
  return request<ManagedService[]>(`${serviceUrls().broker}/services`);
}

// -- workflow --------------------------------------------------------------------

export async function getInstance(instanceId: string): Promise<WorkflowInstance> {
  return request<WorkflowInstance>(`${serviceUrls().workflow}/instances/${instanceId}`);
}
