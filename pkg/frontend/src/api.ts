/**
 * API client for the annotation service.
 *
 * Every mutating call carries an Idempotency-Key so a retry after a lost
 * response never duplicates labels; transient network failures are retried
 * with the same key. Error bodies carry machine-readable codes which are
 * surfaced on ApiError.
 */

import type {
  AnnotationTask,
  HistoryPayload,
  NextBatchOutcome,
  PendingBatch,
  SessionSummary,
  SubmitResult,
} from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    detail: string,
  ) {
    super(detail);
    this.name = 'ApiError';
  }
}

export interface ClientConfig {
  baseUrl: string;
  token: string;
  fetchFn?: FetchLike;
  /** Transient-retry attempts for network failures (default 3). */
  retries?: number;
  /** Base backoff in ms between transient retries (default 300). */
  backoffMs?: number;
  /** Sleep hook, injectable for tests. */
  sleep?: (ms: number) => Promise<void>;
}

function defaultSleep(ms: number): Promise<void> {
  return new Promise(resolve => setTimeout(resolve, ms));
}

let keyCounter = 0;

export function freshIdempotencyKey(prefix: string): string {
  keyCounter += 1;
  return `${prefix}-${Date.now().toString(36)}-${keyCounter}`;
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly token: string;
  private readonly fetchFn: FetchLike;
  private readonly retries: number;
  private readonly backoffMs: number;
  private readonly sleep: (ms: number) => Promise<void>;

  constructor(config: ClientConfig) {
    this.baseUrl = config.baseUrl.replace(/\/+$/, '');
    this.token = config.token;
    this.fetchFn = config.fetchFn ?? ((url, init) => fetch(url, init));
    this.retries = config.retries ?? 3;
    this.backoffMs = config.backoffMs ?? 300;
    this.sleep = config.sleep ?? defaultSleep;
  }

  private async request<T>(
    path: string,
    init: RequestInit = {},
    idempotencyKey?: string,
  ): Promise<{ status: number; body: T }> {
    const headers: Record<string, string> = {
      Authorization: `Bearer ${this.token}`,
      ...(init.body ? { 'Content-Type': 'application/json' } : {}),
      ...(idempotencyKey ? { 'Idempotency-Key': idempotencyKey } : {}),
    };
    let lastError: unknown;
    for (let attempt = 0; attempt <= this.retries; attempt++) {
      let response: Response;
      try {
        response = await this.fetchFn(`${this.baseUrl}${path}`, {
          ...init,
          headers,
        });
      } catch (err) {
        // Network failure: safe to retry because the idempotency key pins
        // the server-side effect to a single application.
        lastError = err;
        if (attempt < this.retries) {
          await this.sleep(this.backoffMs * 2 ** attempt);
          continue;
        }
        throw err;
      }
      if (!response.ok && response.status !== 202) {
        let code = 'http_error';
        let detail = `HTTP ${response.status}`;
        try {
          const body = (await response.json()) as {
            detail?: { code?: string; detail?: string } | string;
          };
          if (typeof body.detail === 'object' && body.detail) {
            code = body.detail.code ?? code;
            detail = body.detail.detail ?? detail;
          } else if (typeof body.detail === 'string') {
            detail = body.detail;
          }
        } catch {
          /* non-JSON error body */
        }
        throw new ApiError(response.status, code, detail);
      }
      const body = (await response.json()) as T;
      return { status: response.status, body };
    }
    throw lastError;
  }

  async createSession(body: Record<string, unknown>): Promise<SessionSummary> {
    const { body: summary } = await this.request<SessionSummary>(
      '/sessions',
      { method: 'POST', body: JSON.stringify(body) },
      freshIdempotencyKey('create'),
    );
    return summary;
  }

  async getSession(sessionId: string): Promise<SessionSummary> {
    const { body } = await this.request<SessionSummary>(`/sessions/${sessionId}`);
    return body;
  }

  async nextBatch(sessionId: string): Promise<NextBatchOutcome> {
    const { status, body } = await this.request<AnnotationTask | PendingBatch>(
      `/sessions/${sessionId}/next-batch`,
      { method: 'POST' },
      freshIdempotencyKey('batch'),
    );
    if (status === 202) {
      return { kind: 'pending', pollToken: (body as PendingBatch).poll_token };
    }
    return { kind: 'task', task: body as AnnotationTask };
  }

  async pollNextBatch(
    sessionId: string,
    pollToken: string,
  ): Promise<NextBatchOutcome> {
    const { status, body } = await this.request<AnnotationTask | PendingBatch>(
      `/sessions/${sessionId}/next-batch/${pollToken}`,
    );
    if (status === 202) {
      return { kind: 'pending', pollToken: (body as PendingBatch).poll_token };
    }
    return { kind: 'task', task: body as AnnotationTask };
  }

  async submitLabels(
    sessionId: string,
    labels: Record<string, string>,
    idempotencyKey?: string,
  ): Promise<SubmitResult> {
    const { body } = await this.request<SubmitResult>(
      `/sessions/${sessionId}/labels`,
      { method: 'POST', body: JSON.stringify({ labels }) },
      idempotencyKey ?? freshIdempotencyKey('labels'),
    );
    return body;
  }

  async history(sessionId: string): Promise<HistoryPayload> {
    const { body } = await this.request<HistoryPayload>(
      `/sessions/${sessionId}/history`,
    );
    return body;
  }

  async exportLabels(sessionId: string): Promise<string> {
    const response = await this.fetchFn(
      `${this.baseUrl}/sessions/${sessionId}/export`,
      { headers: { Authorization: `Bearer ${this.token}` } },
    );
    if (!response.ok) {
      throw new ApiError(response.status, 'export_failed', 'export failed');
    }
    return response.text();
  }
}
