/** Entry point: settings screen (base URL + token + session id), then the loop. */

import { ApiClient } from './api.js';
import { SessionController } from './controller.js';
import { renderApp } from './view.js';

const SETTINGS_KEY = 'labelloop-annotator-settings';

interface Settings {
  baseUrl: string;
  token: string;
  sessionId: string;
}

function loadSettings(): Settings {
  try {
    const raw = localStorage.getItem(SETTINGS_KEY);
    if (raw) return JSON.parse(raw) as Settings;
  } catch {
    /* fresh start */
  }
  return { baseUrl: 'http://127.0.0.1:8722', token: '', sessionId: '' };
}

function renderSettings(root: HTMLElement, onConnect: (settings: Settings) => void): void {
  const settings = loadSettings();
  root.textContent = '';
  const form = document.createElement('form');
  form.className = 'settings';
  form.innerHTML = `
    <h1>labelloop annotator</h1>
    <label>Service URL <input name="baseUrl" value="${settings.baseUrl}"></label>
    <label>Token <input name="token" type="password" value="${settings.token}"></label>
    <label>Session id <input name="sessionId" value="${settings.sessionId}"></label>
    <button type="submit">Connect</button>
  `;
  form.addEventListener('submit', event => {
    event.preventDefault();
    const data = new FormData(form);
    const next: Settings = {
      baseUrl: String(data.get('baseUrl') ?? ''),
      token: String(data.get('token') ?? ''),
      sessionId: String(data.get('sessionId') ?? ''),
    };
    localStorage.setItem(SETTINGS_KEY, JSON.stringify(next));
    onConnect(next);
  });
  root.append(form);
}

export function boot(root: HTMLElement): void {
  renderSettings(root, settings => {
    const client = new ApiClient({ baseUrl: settings.baseUrl, token: settings.token });
    const controller = new SessionController(client, settings.sessionId, {
      onChange: current => renderApp(root, current),
    });
    void controller.connect();
  });
}

if (typeof document !== 'undefined') {
  const root = document.getElementById('app');
  if (root) boot(root);
}
