import { describe, expect, it } from "vitest";

import type { SequenceWire, TickTraceWire } from "../src/api.js";
import {
  renderCandidateChips,
  renderMessage,
  renderMessages,
  renderSequenceCard,
  renderStepCard,
  renderTrace,
} from "../src/render.js";
import { emptyView, sessionStarted, turnCompleted, turnStarted } from "../src/state.js";
import type { ViewMessage } from "../src/state.js";

const SEQUENCE: SequenceWire = {
  task_name: "bacon and egg sandwich",
  steps: [
    { action: "fetch_ingredient", args: { ingredient: "bread", quantity: 2 } },
    { action: "toast_bread", args: { ingredient: "bread" } },
    { action: "serve", args: {} },
  ],
};

function robotMessage(overrides: Partial<ViewMessage> = {}): ViewMessage {
  return {
    role: "robot",
    text: "Does this sound good to you?",
    kind: "confirmation_request",
    attachments: { sequence: SEQUENCE },
    turnIndex: 0,
    ...overrides,
  };
}

describe("step cards", () => {
  it("renders structured rows instead of raw JSON", () => {
    const card = renderStepCard(SEQUENCE.steps[0]!, 0);
    expect(card.querySelector(".step-number")?.textContent).toBe("1");
    expect(card.querySelector(".step-action")?.textContent).toBe("fetch ingredient");
    const argNames = [...card.querySelectorAll(".step-arg-name")].map((n) => n.textContent);
    const argValues = [...card.querySelectorAll(".step-arg-value")].map((n) => n.textContent);
    expect(argNames).toEqual(["ingredient", "quantity"]);
    expect(argValues).toEqual(["bread", "2"]);
    expect(card.textContent).not.toContain("{");
    expect(card.textContent).not.toContain('"');
  });

  it("numbers the steps in order under the task title", () => {
    const panel = renderSequenceCard(SEQUENCE);
    expect(panel.querySelector(".sequence-title")?.textContent).toBe("bacon and egg sandwich");
    const numbers = [...panel.querySelectorAll(".step-number")].map((n) => n.textContent);
    expect(numbers).toEqual(["1", "2", "3"]);
    const actions = [...panel.querySelectorAll(".step-action")].map((n) => n.textContent);
    expect(actions).toEqual(["fetch ingredient", "toast bread", "serve"]);
  });
});

describe("message rendering", () => {
  it("tags robot messages with a kind badge", () => {
    const node = renderMessage(robotMessage());
    const badge = node.querySelector(".kind-badge");
    expect(badge).not.toBeNull();
    expect((badge as HTMLElement).dataset.kind).toBe("confirmation_request");
    expect(node.dataset.role).toBe("robot");
  });

  it("leaves user messages unbadged", () => {
    const node = renderMessage({
      role: "user",
      text: "hello",
      kind: null,
      attachments: null,
      turnIndex: 0,
    });
    expect(node.querySelector(".kind-badge")).toBeNull();
    expect(node.querySelector(".message-text")?.textContent).toBe("hello");
  });

  it("attaches a sequence card when the reply carries steps", () => {
    const node = renderMessage(robotMessage());
    expect(node.querySelectorAll(".sequence-card")).toHaveLength(1);
    expect(node.querySelectorAll(".step-card")).toHaveLength(3);
    expect(node.textContent).not.toContain("task_name");
  });

  it("renders candidate names as chips", () => {
    const row = renderCandidateChips(["bacon and egg sandwich", "peanut butter and jelly sandwich"]);
    const chips = [...row.querySelectorAll(".candidate-chip")].map((n) => n.textContent);
    expect(chips).toEqual(["bacon and egg sandwich", "peanut butter and jelly sandwich"]);
  });

  it("paints the whole transcript in view order", () => {
    let view = sessionStarted(emptyView(), "s-1", "bt_action");
    view = turnCompleted(turnStarted(view), "first", {
      reply: "answer one",
      kind: "fallback",
      attachments: null,
      turn_index: 0,
    });
    view = turnCompleted(turnStarted(view), "second", {
      reply: "answer two",
      kind: "fallback",
      attachments: null,
      turn_index: 1,
    });
    const container = document.createElement("div");
    renderMessages(container, view);
    const rows = [...container.querySelectorAll(".message")].map((node) => [
      (node as HTMLElement).dataset.role,
      node.querySelector(".message-text")?.textContent,
    ]);
    expect(rows).toEqual([
      ["user", "first"],
      ["robot", "answer one"],
      ["user", "second"],
      ["robot", "answer two"],
    ]);
  });
});

describe("trace panel", () => {
  it("groups events by turn with a placeholder for tickless turns", () => {
    const traces: TickTraceWire[] = [
      [
        { node: "root", order: 0, status: "Success" },
        { node: "ambiguous-check", order: 1, status: "Failure" },
      ],
      [],
    ];
    const container = document.createElement("div");
    renderTrace(container, traces);
    const headers = [...container.querySelectorAll(".trace-turn-header")].map(
      (n) => n.textContent,
    );
    expect(headers).toEqual(["turn 0", "turn 1"]);
    const nodes = [...container.querySelectorAll(".trace-node")].map((n) => n.textContent);
    expect(nodes).toEqual(["root", "ambiguous-check"]);
    expect(container.querySelectorAll(".trace-empty")).toHaveLength(1);
    expect(container.querySelector(".trace-failure .trace-status")?.textContent).toBe("Failure");
  });
});
