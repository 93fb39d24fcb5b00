// View state and its transitions. Everything here is pure: the state is
// derived solely from server responses, so replaying the same wire payloads
// (including a get_state snapshot after reload) always rebuilds the same view.

import type {
  AttachmentsWire,
  MessageWire,
  ReplyKind,
  ReplyWire,
  SessionStateWire,
  SystemName,
} from "./api.js";

export interface ViewMessage {
  role: "user" | "robot";
  text: string;
  kind: ReplyKind | null;
  attachments: AttachmentsWire | null;
  turnIndex: number;
}

export interface ChatView {
  sessionId: string | null;
  system: SystemName;
  messages: ViewMessage[];
  inFlight: boolean;
  error: string | null;
}

export function emptyView(system: SystemName = "bt_action"): ChatView {
  return { sessionId: null, system, messages: [], inFlight: false, error: null };
}

export function sessionStarted(view: ChatView, id: string, system: SystemName): ChatView {
  return { ...emptyView(system), sessionId: id };
}

export function turnStarted(view: ChatView): ChatView {
  return { ...view, inFlight: true, error: null };
}

/** A completed exchange: the server accepted `text` and answered `reply`. */
export function turnCompleted(view: ChatView, text: string, reply: ReplyWire): ChatView {
  const user: ViewMessage = {
    role: "user",
    text,
    kind: null,
    attachments: null,
    turnIndex: reply.turn_index,
  };
  const robot: ViewMessage = {
    role: "robot",
    text: reply.reply,
    kind: reply.kind,
    attachments: reply.attachments,
    turnIndex: reply.turn_index,
  };
  return { ...view, inFlight: false, messages: [...view.messages, user, robot] };
}

/** A failed turn leaves the transcript untouched: the server logged nothing. */
export function turnFailed(view: ChatView, message: string): ChatView {
  return { ...view, inFlight: false, error: message };
}

/** Rebuild the whole view from a get_state snapshot (page reload). */
export function stateLoaded(view: ChatView, state: SessionStateWire): ChatView {
  const messages = state.messages.map(
    (wire: MessageWire): ViewMessage => ({
      role: wire.role,
      text: wire.text,
      kind: wire.kind ?? null,
      attachments: wire.attachments ?? null,
      turnIndex: wire.turn_index,
    }),
  );
  return {
    sessionId: state.id,
    system: state.system,
    messages,
    inFlight: false,
    error: null,
  };
}

export function lastRobotMessage(view: ChatView): ViewMessage | null {
  for (let i = view.messages.length - 1; i >= 0; i--) {
    const message = view.messages[i];
    if (message && message.role === "robot") return message;
  }
  return null;
}

/** Confirmation controls are visible iff the last reply asks to confirm. */
export function confirmationVisible(view: ChatView): boolean {
  if (view.inFlight) return false;
  return lastRobotMessage(view)?.kind === "confirmation_request";
}

export type Banner = "clarification" | "confirmation" | null;

/** The pending banner above the input, derived from the last reply kind. */
export function pendingBanner(view: ChatView): Banner {
  const last = lastRobotMessage(view);
  if (last?.kind === "confirmation_request") return "confirmation";
  if (last?.kind === "clarification_question") return "clarification";
  return null;
}

/** The input accepts text only when a session exists and no turn is running. */
export function inputEnabled(view: ChatView): boolean {
  return view.sessionId !== null && !view.inFlight;
}
