// Typed client for the session service. Every call returns the parsed wire
// payload or throws ApiError carrying the server's error envelope, so the
// view layer can show codes like turn_in_progress without string-matching.

export type SystemName = "bt_action" | "baseline";

export type ReplyKind =
  | "acknowledgment"
  | "clarification_question"
  | "confirmation_request"
  | "infeasibility_explanation"
  | "fallback";

export interface StepWire {
  action: string;
  args: Record<string, string | number>;
}

export interface SequenceWire {
  task_name: string;
  steps: StepWire[];
}

export interface AttachmentsWire {
  sequence?: SequenceWire;
  candidates?: string[];
}

export interface SessionHandleWire {
  id: string;
  system: SystemName;
  created_at: number;
}

export interface ReplyWire {
  reply: string;
  kind: ReplyKind;
  attachments: AttachmentsWire | null;
  turn_index: number;
}

export interface MessageWire {
  role: "user" | "robot";
  text: string;
  kind?: ReplyKind;
  attachments?: AttachmentsWire | null;
  turn_index: number;
}

export interface ExecutedWire {
  task_name: string;
  steps: StepWire[];
  provenance: string;
}

export interface SessionStateWire {
  id: string;
  system: SystemName;
  created_at: number;
  turn_count: number;
  pending: "none" | "awaiting_clarification" | "awaiting_confirmation";
  executed: ExecutedWire[];
  messages: MessageWire[];
}

export interface TraceEventWire {
  node: string;
  order: number;
  status: "Success" | "Failure";
}

export type TickTraceWire = TraceEventWire[];

export class ApiError extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(url, init);
  } catch (cause) {
    throw new ApiError("unreachable", `cannot reach the service at ${url}`, 0);
  }
  const body = await response.json().catch(() => null);
  if (!response.ok) {
    const envelope = body?.error;
    throw new ApiError(
      envelope?.code ?? "unknown",
      envelope?.message ?? `request failed with status ${response.status}`,
      response.status,
    );
  }
  return body as T;
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  createSession(system: SystemName): Promise<SessionHandleWire> {
    return request(`${this.base}/v1/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ system }),
    });
  }

  postMessage(sessionId: string, text: string): Promise<ReplyWire> {
    return request(`${this.base}/v1/sessions/${encodeURIComponent(sessionId)}/messages`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }

  getTrace(sessionId: string): Promise<TickTraceWire[]> {
    return request(`${this.base}/v1/sessions/${encodeURIComponent(sessionId)}/trace`);
  }

  getState(sessionId: string): Promise<SessionStateWire> {
    return request(`${this.base}/v1/sessions/${encodeURIComponent(sessionId)}`);
  }
}
