/** Poll the reception task endpoint until the result is terminal. */

import { getTask } from "./api";
import { isPending, type TaskResult } from "./types";

export interface PollOptions {
  intervalMs?: number;
  maxAttempts?: number;
  onPending?: (attempt: number) => void;
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

export async function pollTask(
  taskId: string,
  options: PollOptions = {},
): Promise<TaskResult> {
  const intervalMs = options.intervalMs ?? 1000;
  const maxAttempts = options.maxAttempts ?? 60;
  for (let attempt = 1; attempt <= maxAttempts; attempt += 1) {
    const poll = await getTask(taskId);
    if (!isPending(poll)) {
      return poll;
    }
    options.onPending?.(attempt);
    await sleep(intervalMs);
  }
  throw new Error(`task ${taskId} still pending after ${maxAttempts} polls`);
}
