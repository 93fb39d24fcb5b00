// DOM rendering. Each render_* function builds elements from wire data; the
// top-level renderMessages/renderTrace functions repaint whole containers so
// the DOM is always a pure function of the current ChatView.

import type { SequenceWire, StepWire, TickTraceWire } from "./api.js";
import type { ChatView, ViewMessage } from "./state.js";

const KIND_LABELS: Record<string, string> = {
  acknowledgment: "executing",
  clarification_question: "needs detail",
  confirmation_request: "confirm?",
  infeasibility_explanation: "can't do that",
  fallback: "reply",
};

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

function humanize(name: string): string {
  return name.replace(/_/g, " ");
}

export function renderStepCard(step: StepWire, index: number): HTMLElement {
  const card = el("div", "step-card");
  card.appendChild(el("span", "step-number", String(index + 1)));
  card.appendChild(el("span", "step-action", humanize(step.action)));
  const args = el("span", "step-args");
  for (const [name, value] of Object.entries(step.args)) {
    const arg = el("span", "step-arg");
    arg.appendChild(el("span", "step-arg-name", humanize(name)));
    arg.appendChild(el("span", "step-arg-value", String(value)));
    args.appendChild(arg);
  }
  card.appendChild(args);
  return card;
}

export function renderSequenceCard(sequence: SequenceWire): HTMLElement {
  const panel = el("div", "sequence-card");
  panel.appendChild(el("div", "sequence-title", humanize(sequence.task_name)));
  const steps = el("div", "sequence-steps");
  sequence.steps.forEach((step, index) => steps.appendChild(renderStepCard(step, index)));
  panel.appendChild(steps);
  return panel;
}

export function renderCandidateChips(candidates: string[]): HTMLElement {
  const row = el("div", "candidate-row");
  for (const name of candidates) {
    row.appendChild(el("span", "candidate-chip", name));
  }
  return row;
}

export function renderMessage(message: ViewMessage): HTMLElement {
  const item = el("div", `message message-${message.role}`);
  item.dataset.role = message.role;
  item.dataset.turn = String(message.turnIndex);

  const header = el("div", "message-header");
  header.appendChild(el("span", "message-role", message.role === "user" ? "you" : "robot"));
  if (message.kind) {
    const badge = el("span", `kind-badge kind-${message.kind}`, KIND_LABELS[message.kind] ?? message.kind);
    badge.dataset.kind = message.kind;
    header.appendChild(badge);
  }
  item.appendChild(header);
  item.appendChild(el("div", "message-text", message.text));

  const sequence = message.attachments?.sequence;
  if (sequence) item.appendChild(renderSequenceCard(sequence));
  const candidates = message.attachments?.candidates;
  if (candidates && candidates.length > 0) item.appendChild(renderCandidateChips(candidates));
  return item;
}

export function renderMessages(container: HTMLElement, view: ChatView): void {
  container.replaceChildren(...view.messages.map(renderMessage));
  container.scrollTop = container.scrollHeight;
}

export function renderTrace(container: HTMLElement, traces: TickTraceWire[]): void {
  container.replaceChildren();
  traces.forEach((trace, turn) => {
    const section = el("div", "trace-turn");
    section.appendChild(el("div", "trace-turn-header", `turn ${turn}`));
    if (trace.length === 0) {
      section.appendChild(el("div", "trace-row trace-empty", "(no tree tick this turn)"));
    }
    for (const event of trace) {
      const row = el("div", `trace-row trace-${event.status.toLowerCase()}`);
      row.appendChild(el("span", "trace-order", String(event.order)));
      row.appendChild(el("span", "trace-node", event.node));
      row.appendChild(el("span", "trace-status", event.status));
      section.appendChild(row);
    }
    container.appendChild(section);
  });
}
