/**
 * DOM rendering: one-batch-at-a-time layout with a budget bar, label pickers,
 * and a history timeline. Rendering is a pure function of controller state.
 */

import type { SessionController } from './controller.js';
import type { AnnotationTask, HistoryPayload, SessionSummary } from './types.js';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderSummary(summary: SessionSummary): HTMLElement {
  const box = el('header', 'session-summary');
  box.append(
    el('h1', 'task-name', summary.task_name),
    el('span', 'strategy', `strategy: ${summary.strategy.id}`),
    el('span', 'config', `prompt config: ${summary.config_name}`),
  );
  const budget = el('div', 'budget');
  const used = el('span', 'budget-used',
    `${summary.labeled_count} / ${summary.budget} labeled`);
  const bar = el('div', 'budget-bar');
  const fill = el('div', 'budget-bar-fill');
  fill.style.width = `${Math.min(100, (100 * summary.labeled_count) / summary.budget)}%`;
  bar.append(fill);
  budget.append(used, bar);
  box.append(budget);
  return box;
}

export function renderTask(
  task: AnnotationTask,
  selections: Map<number, string>,
  onSelect: (index: number, label: string) => void,
): HTMLElement {
  const section = el('section', 'task');
  const readOnly = task.status === 'complete';
  section.append(el('h2', undefined,
    `Iteration ${task.iteration} — ${task.items.length} instances`));
  if (task.diagnostics.length > 0) {
    section.append(el('p', 'diagnostics',
      `selection ${task.selection_status}: ${task.diagnostics.join('; ')}`));
  }
  const list = el('ul', 'items');
  for (const item of task.items) {
    const row = el('li', 'item');
    row.dataset.index = String(item.index);
    const text = el('div', 'item-text');
    text.append(el('span', 'item-index', `Index ${item.index}`));
    text.append(el('span', 'item-body', item.text));
    if (item.text_pair !== null && item.text_pair !== undefined) {
      text.append(el('span', 'pair-separator', '|||'));
      text.append(el('span', 'item-pair', item.text_pair));
    }
    row.append(text);
    const picker = el('div', 'label-picker');
    picker.setAttribute('role', 'radiogroup');
    for (const label of task.label_space) {
      const wrapper = el('label', 'label-option');
      const input = el('input') as HTMLInputElement;
      input.type = 'radio';
      input.name = `item-${item.index}`;
      input.value = label;
      input.checked = selections.get(item.index) === label;
      input.disabled = readOnly;
      input.addEventListener('change', () => onSelect(item.index, label));
      wrapper.append(input, document.createTextNode(label));
      picker.append(wrapper);
    }
    row.append(picker);
    list.append(row);
  }
  section.append(list);
  if (readOnly) {
    section.append(el('p', 'read-only-note', 'This task is already complete.'));
  }
  return section;
}

export function renderHistory(history: HistoryPayload): HTMLElement {
  const section = el('section', 'history');
  section.append(el('h2', undefined, 'Past iterations'));
  const list = el('ol', 'timeline');
  for (const entry of history.structural.iterations) {
    const row = el('li', 'timeline-entry');
    const repairs = entry.selection.diagnostics.length
      ? ` (${entry.selection.diagnostics.join('; ')})`
      : '';
    row.textContent =
      `#${entry.iteration_number} ${entry.strategy_id}: selected ` +
      `${entry.selection.indices.length} of ${entry.presented_indices.length} ` +
      `presented — ${entry.selection.status}${repairs}`;
    list.append(row);
  }
  section.append(list);
  const labeled = el('details', 'labeled-set');
  labeled.append(el('summary', undefined,
    `Labeled so far (${Object.keys(history.structural.labeled).length})`));
  const labels = el('ul');
  for (const [index, label] of Object.entries(history.structural.labeled)) {
    labels.append(el('li', undefined, `Index ${index}: ${label}`));
  }
  labeled.append(labels);
  section.append(labeled);
  return section;
}

function renderSpinner(controller: SessionController): HTMLElement {
  const spinner = el('div', 'spinner');
  const seconds = (controller.waitingMs / 1000).toFixed(0);
  spinner.append(
    el('div', 'spinner-dot'),
    el('span', undefined,
      `querying the selection strategy… ${seconds}s elapsed`),
  );
  return spinner;
}

function renderComplete(controller: SessionController): HTMLElement {
  const done = el('section', 'complete');
  done.append(el('h2', undefined, 'Budget reached'));
  done.append(el('p', undefined,
    'Every queried instance is labeled. Export the labeled set below.'));
  const button = el('button', 'export-button', 'Download labeled set');
  button.addEventListener('click', async () => {
    const text = await controller.downloadExport();
    const blob = new Blob([text], { type: 'application/x-ndjson' });
    const link = el('a') as HTMLAnchorElement;
    link.href = URL.createObjectURL(blob);
    link.download = `${controller.sessionId}-labels.jsonl`;
    link.click();
    URL.revokeObjectURL(link.href);
  });
  done.append(button);
  return done;
}

export function renderApp(root: HTMLElement, controller: SessionController): void {
  root.textContent = '';
  const app = el('div', `app state-${controller.state}`);
  if (controller.summary) {
    app.append(renderSummary(controller.summary));
  }
  if (controller.lastError && controller.state === 'error') {
    const banner = el('div', 'error-banner',
      `${controller.lastError.code}: ${controller.lastError.detail}`);
    const retry = el('button', 'retry-button', 'Retry');
    retry.addEventListener('click', () => void controller.connect());
    banner.append(retry);
    app.append(banner);
  }
  switch (controller.state) {
    case 'loading':
      app.append(el('p', 'loading', 'loading session…'));
      break;
    case 'waiting':
      app.append(renderSpinner(controller));
      break;
    case 'ready': {
      const next = el('button', 'next-batch-button', 'Query next batch');
      next.addEventListener('click', () => void controller.fetchNextBatch());
      app.append(next);
      break;
    }
    case 'task_open':
    case 'submitting': {
      if (controller.task) {
        app.append(
          renderTask(controller.task, controller.selections, (index, label) =>
            controller.setLabel(index, label)),
        );
        const actions = el('div', 'actions');
        const submit = el('button', 'submit-button',
          'Submit labels and fetch next batch') as HTMLButtonElement;
        submit.disabled = !controller.allLabeled || controller.state === 'submitting';
        submit.addEventListener('click', () => void controller.submitAndAdvance());
        const partial = el('button', 'partial-button',
          'Submit partial progress') as HTMLButtonElement;
        partial.disabled =
          controller.labeledInTask === 0 ||
          controller.allLabeled ||
          controller.state === 'submitting';
        partial.addEventListener('click', () => void controller.submit(true));
        actions.append(submit, partial);
        app.append(actions);
      }
      break;
    }
    case 'complete':
      app.append(renderComplete(controller));
      break;
    default:
      break;
  }
  if (controller.history) {
    app.append(renderHistory(controller.history));
  }
  root.append(app);
}
