/** Payload types for the annotation service HTTP API. */

export interface SessionSummary {
  session_id: string;
  status: 'awaiting_iteration' | 'task_open' | 'complete';
  strategy: { id: string; params: Record<string, unknown> };
  budget: number;
  labeled_count: number;
  iteration_count: number;
  label_space: string[];
  task_name: string;
  config_name: string;
  config_fingerprint: string;
}

export interface TaskItem {
  index: number;
  text: string;
  text_pair: string | null;
}

export interface AnnotationTask {
  session_id: string;
  iteration: number;
  items: TaskItem[];
  label_space: string[];
  status: 'open' | 'partially_labeled' | 'complete';
  selection_status: string;
  diagnostics: string[];
  labeled: Record<string, string>;
}

export interface PendingBatch {
  poll_token: string;
  session_id: string;
}

export interface SubmitResult {
  session_id: string;
  status: 'complete' | 'partially_labeled';
  labeled_count: number;
  budget?: number;
  session_status?: string;
  missing?: number[];
}

export interface IterationEntry {
  iteration_number: number;
  strategy_id: string;
  presented_indices: number[];
  selection: {
    indices: number[];
    requested_count: number;
    status: string;
    diagnostics: string[];
  };
  response_text: string | null;
}

export interface HistoryPayload {
  session_id: string;
  budget: number;
  labeled_count: number;
  history: Record<string, unknown>;
  structural: {
    labeled: Record<string, string>;
    iterations: IterationEntry[];
  };
}

export type NextBatchOutcome =
  | { kind: 'task'; task: AnnotationTask }
  | { kind: 'pending'; pollToken: string };
