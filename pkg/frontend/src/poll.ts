/**
 * Polling helper for slow strategy queries (202 + poll token).
 *
 * LLM round trips can take tens of seconds, so the poll interval is a
 * second with jitter; the caller can cancel through an AbortSignal.
 */

import type { ApiClient } from './api.js';
import type { AnnotationTask } from './types.js';

export interface PollOptions {
  intervalMs?: number;
  jitterMs?: number;
  maxAttempts?: number;
  signal?: AbortSignal;
  sleep?: (ms: number) => Promise<void>;
  /** Called before each wait with the elapsed milliseconds so far. */
  onWaiting?: (elapsedMs: number) => void;
}

function defaultSleep(ms: number): Promise<void> {
  return new Promise(resolve => setTimeout(resolve, ms));
}

export async function waitForTask(
  client: ApiClient,
  sessionId: string,
  pollToken: string,
  options: PollOptions = {},
): Promise<AnnotationTask> {
  const intervalMs = options.intervalMs ?? 1000;
  const jitterMs = options.jitterMs ?? 250;
  const maxAttempts = options.maxAttempts ?? 600;
  const sleep = options.sleep ?? defaultSleep;
  const started = Date.now();

  let token = pollToken;
  for (let attempt = 0; attempt < maxAttempts; attempt++) {
    if (options.signal?.aborted) {
      throw new DOMException('Polling aborted', 'AbortError');
    }
    const outcome = await client.pollNextBatch(sessionId, token);
    if (outcome.kind === 'task') {
      return outcome.task;
    }
    token = outcome.pollToken;
    options.onWaiting?.(Date.now() - started);
    await sleep(intervalMs + Math.random() * jitterMs);
  }
  throw new Error(`strategy query still pending after ${maxAttempts} polls`);
}
