/**
 * Session view-model: one batch at a time, server as source of truth.
 *
 * The controller never fabricates labels: the only way a label reaches
 * `selections` is an explicit setLabel call from the UI (or a
 * server-acknowledged partial submission echoed back in the task payload).
 */

import { ApiClient, ApiError, freshIdempotencyKey } from './api.js';
import { waitForTask } from './poll.js';
import type { AnnotationTask, HistoryPayload, SessionSummary } from './types.js';

export type ControllerState =
  | 'idle'
  | 'loading'
  | 'ready'
  | 'waiting'
  | 'task_open'
  | 'submitting'
  | 'complete'
  | 'error';

export interface ControllerEvents {
  onChange?: (controller: SessionController) => void;
}

export class SessionController {
  state: ControllerState = 'idle';
  summary: SessionSummary | null = null;
  task: AnnotationTask | null = null;
  history: HistoryPayload | null = null;
  selections = new Map<number, string>();
  lastError: { code: string; detail: string } | null = null;
  waitingMs = 0;

  constructor(
    private readonly client: ApiClient,
    readonly sessionId: string,
    private readonly events: ControllerEvents = {},
    private readonly pollOptions: { intervalMs?: number; sleep?: (ms: number) => Promise<void> } = {},
  ) {}

  private emit(): void {
    this.events.onChange?.(this);
  }

  private setState(state: ControllerState): void {
    this.state = state;
    this.emit();
  }

  private fail(err: unknown): void {
    if (err instanceof ApiError) {
      this.lastError = { code: err.code, detail: err.message };
    } else {
      this.lastError = { code: 'network', detail: String(err) };
    }
    this.setState('error');
  }

  get allLabeled(): boolean {
    if (!this.task) return false;
    return this.task.items.every(item => this.selections.has(item.index));
  }

  get labeledInTask(): number {
    if (!this.task) return 0;
    return this.task.items.filter(item => this.selections.has(item.index)).length;
  }

  setLabel(index: number, label: string): void {
    if (!this.task || this.task.status === 'complete') return;
    if (!this.task.label_space.includes(label)) return;
    if (!this.task.items.some(item => item.index === index)) return;
    this.selections.set(index, label);
    this.emit();
  }

  private adoptTask(task: AnnotationTask): void {
    this.task = task;
    this.selections = new Map(
      Object.entries(task.labeled).map(([index, label]) => [Number(index), label]),
    );
    this.setState('task_open');
  }

  async connect(): Promise<void> {
    this.setState('loading');
    try {
      this.summary = await this.client.getSession(this.sessionId);
      await this.refreshHistory();
      if (this.summary.status === 'complete') {
        this.setState('complete');
        return;
      }
      if (this.summary.status === 'task_open') {
        // Recover the open task after a reload: the poll endpoint returns it
        // for any unknown token once the draft is persisted.
        const outcome = await this.client.pollNextBatch(this.sessionId, 'recover');
        if (outcome.kind === 'task') {
          this.adoptTask(outcome.task);
          return;
        }
      }
      this.setState('ready');
    } catch (err) {
      this.fail(err);
    }
  }

  async refreshHistory(): Promise<void> {
    this.history = await this.client.history(this.sessionId);
    if (this.summary) {
      this.summary = await this.client.getSession(this.sessionId);
    }
    this.emit();
  }

  async fetchNextBatch(): Promise<void> {
    this.setState('waiting');
    this.waitingMs = 0;
    try {
      const outcome = await this.client.nextBatch(this.sessionId);
      if (outcome.kind === 'task') {
        this.adoptTask(outcome.task);
        return;
      }
      const task = await waitForTask(this.client, this.sessionId, outcome.pollToken, {
        ...this.pollOptions,
        onWaiting: elapsed => {
          this.waitingMs = elapsed;
          this.emit();
        },
      });
      this.adoptTask(task);
    } catch (err) {
      if (err instanceof ApiError && err.status === 410) {
        await this.refreshHistory().catch(() => undefined);
        this.setState('complete');
        return;
      }
      if (err instanceof ApiError && err.status === 409) {
        const outcome = await this.client
          .pollNextBatch(this.sessionId, 'recover')
          .catch(() => null);
        if (outcome && outcome.kind === 'task') {
          this.adoptTask(outcome.task);
          return;
        }
      }
      this.fail(err);
    }
  }

  /** Submit every current selection; with partial=false all items must be labeled. */
  async submit(partial = false): Promise<void> {
    if (!this.task) return;
    if (!partial && !this.allLabeled) {
      this.lastError = {
        code: 'incomplete',
        detail: 'label every item or choose partial submit',
      };
      this.emit();
      return;
    }
    if (this.selections.size === 0) return;
    this.setState('submitting');
    const labels: Record<string, string> = {};
    for (const [index, label] of this.selections) {
      labels[String(index)] = label;
    }
    // One key for the whole submit: retries after network faults replay
    // instead of double-applying.
    const key = freshIdempotencyKey(`submit-${this.sessionId}-${this.task.iteration}`);
    try {
      const result = await this.client.submitLabels(this.sessionId, labels, key);
      if (result.status === 'complete') {
        this.task = null;
        this.selections = new Map();
        await this.refreshHistory();
        if (result.session_status === 'complete') {
          this.setState('complete');
        } else {
          this.setState('ready');
        }
      } else {
        if (this.task) {
          this.task = { ...this.task, status: 'partially_labeled' };
        }
        this.setState('task_open');
      }
    } catch (err) {
      this.fail(err);
    }
  }

  /** The loop's unit of work: submit the full label set, then advance. */
  async submitAndAdvance(): Promise<void> {
    await this.submit(false);
    if (this.state === 'ready') {
      await this.fetchNextBatch();
    }
  }

  async downloadExport(): Promise<string> {
    return this.client.exportLabels(this.sessionId);
  }
}
