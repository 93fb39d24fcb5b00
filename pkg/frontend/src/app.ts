// Wires the API client, view state, and DOM together. The factory takes the
// document and its collaborators as arguments so tests can drive a complete
// app instance inside a DOM sandbox against a real or stubbed server.

import { ApiClient, ApiError } from "./api.js";
import type { SystemName } from "./api.js";
import {
  ChatView,
  confirmationVisible,
  emptyView,
  inputEnabled,
  pendingBanner,
  sessionStarted,
  stateLoaded,
  turnCompleted,
  turnFailed,
  turnStarted,
} from "./state.js";
import { renderMessages, renderTrace } from "./render.js";

export const SESSION_STORAGE_KEY = "tasktree.session.id";
export const CONFIRM_YES_TEXT = "Yes, that sounds good.";
export const CONFIRM_NO_TEXT = "No thanks.";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export interface ChatApp {
  boot(): Promise<void>;
  startSession(): Promise<void>;
  send(text: string): Promise<void>;
  confirmYes(): Promise<void>;
  confirmNo(): Promise<void>;
  toggleTrace(): Promise<void>;
  getView(): ChatView;
}

function requireElement<T extends HTMLElement>(doc: Document, id: string): T {
  const node = doc.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  return String(err);
}

export function createChatApp(doc: Document, client: ApiClient, storage: StorageLike): ChatApp {
  const systemSelect = requireElement<HTMLSelectElement>(doc, "system-select");
  const newSessionButton = requireElement<HTMLButtonElement>(doc, "new-session");
  const sessionLabel = requireElement<HTMLElement>(doc, "session-label");
  const messagesBox = requireElement<HTMLElement>(doc, "messages");
  const pendingBox = requireElement<HTMLElement>(doc, "pending-banner");
  const confirmBar = requireElement<HTMLElement>(doc, "confirm-bar");
  const confirmYesButton = requireElement<HTMLButtonElement>(doc, "confirm-yes");
  const confirmNoButton = requireElement<HTMLButtonElement>(doc, "confirm-no");
  const errorBox = requireElement<HTMLElement>(doc, "error-bar");
  const composer = requireElement<HTMLFormElement>(doc, "composer");
  const input = requireElement<HTMLInputElement>(doc, "message-input");
  const sendButton = requireElement<HTMLButtonElement>(doc, "send-button");
  const traceToggle = requireElement<HTMLButtonElement>(doc, "trace-toggle");
  const tracePanel = requireElement<HTMLElement>(doc, "trace-panel");

  let view: ChatView = emptyView();
  let traceOpen = false;

  function paint(): void {
    renderMessages(messagesBox, view);
    sessionLabel.textContent = view.sessionId
      ? `session ${view.sessionId} · ${view.system}`
      : "no session yet";

    const banner = pendingBanner(view);
    pendingBox.hidden = banner === null;
    pendingBox.textContent =
      banner === "confirmation"
        ? "The robot proposed a task and is waiting for your confirmation."
        : banner === "clarification"
          ? "The robot asked a question — more detail will move things along."
          : "";

    confirmBar.hidden = !confirmationVisible(view);
    errorBox.hidden = view.error === null;
    errorBox.textContent = view.error ?? "";

    const enabled = inputEnabled(view);
    input.disabled = !enabled;
    sendButton.disabled = !enabled;
    newSessionButton.disabled = view.inFlight;
    systemSelect.value = view.system;
  }

  async function refreshTrace(): Promise<void> {
    if (!traceOpen) return;
    if (!view.sessionId) {
      tracePanel.textContent = "No session.";
      return;
    }
    try {
      const traces = await client.getTrace(view.sessionId);
      renderTrace(tracePanel, traces);
    } catch (err) {
      tracePanel.textContent = `Trace unavailable: ${describeError(err)}`;
    }
  }

  async function boot(): Promise<void> {
    const stored = storage.getItem(SESSION_STORAGE_KEY);
    if (stored) {
      try {
        const state = await client.getState(stored);
        view = stateLoaded(view, state);
      } catch {
        storage.removeItem(SESSION_STORAGE_KEY);
      }
    }
    paint();
    await refreshTrace();
  }

  async function startSession(): Promise<void> {
    if (view.inFlight) return;
    const system = (systemSelect.value || "bt_action") as SystemName;
    try {
      const handle = await client.createSession(system);
      view = sessionStarted(view, handle.id, handle.system);
      storage.setItem(SESSION_STORAGE_KEY, handle.id);
      input.value = "";
    } catch (err) {
      view = { ...view, error: describeError(err) };
    }
    paint();
    await refreshTrace();
  }

  async function send(text: string): Promise<void> {
    const trimmed = text.trim();
    if (!trimmed || !inputEnabled(view) || !view.sessionId) return;
    const sessionId = view.sessionId;
    view = turnStarted(view);
    paint();
    try {
      const reply = await client.postMessage(sessionId, trimmed);
      view = turnCompleted(view, trimmed, reply);
      input.value = "";
    } catch (err) {
      view = turnFailed(view, describeError(err));
    }
    paint();
    await refreshTrace();
  }

  async function toggleTrace(): Promise<void> {
    traceOpen = !traceOpen;
    tracePanel.hidden = !traceOpen;
    traceToggle.textContent = traceOpen ? "Hide tree activity" : "Show tree activity";
    await refreshTrace();
  }

  composer.addEventListener("submit", (event) => {
    event.preventDefault();
    void send(input.value);
  });
  newSessionButton.addEventListener("click", () => void startSession());
  confirmYesButton.addEventListener("click", () => void send(CONFIRM_YES_TEXT));
  confirmNoButton.addEventListener("click", () => void send(CONFIRM_NO_TEXT));
  traceToggle.addEventListener("click", () => void toggleTrace());

  paint();
  tracePanel.hidden = true;

  return {
    boot,
    startSession,
    send,
    confirmYes: () => send(CONFIRM_YES_TEXT),
    confirmNo: () => send(CONFIRM_NO_TEXT),
    toggleTrace,
    getView: () => view,
  };
}
