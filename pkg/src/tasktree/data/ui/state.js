// View state and its transitions. Everything here is pure: the state is
// derived solely from server responses, so replaying the same wire payloads
// (including a get_state snapshot after reload) always rebuilds the same view.
export function emptyView(system = "bt_action") {
    return { sessionId: null, system, messages: [], inFlight: false, error: null };
}
export function sessionStarted(view, id, system) {
    return { ...emptyView(system), sessionId: id };
}
export function turnStarted(view) {
    return { ...view, inFlight: true, error: null };
}
/** A completed exchange: the server accepted `text` and answered `reply`. */
export function turnCompleted(view, text, reply) {
    const user = {
        role: "user",
        text,
        kind: null,
        attachments: null,
        turnIndex: reply.turn_index,
    };
    const robot = {
        role: "robot",
        text: reply.reply,
        kind: reply.kind,
        attachments: reply.attachments,
        turnIndex: reply.turn_index,
    };
    return { ...view, inFlight: false, messages: [...view.messages, user, robot] };
}
/** A failed turn leaves the transcript untouched: the server logged nothing. */
export function turnFailed(view, message) {
    return { ...view, inFlight: false, error: message };
}
/** Rebuild the whole view from a get_state snapshot (page reload). */
export function stateLoaded(view, state) {
    const messages = state.messages.map((wire) => ({
        role: wire.role,
        text: wire.text,
        kind: wire.kind ?? null,
        attachments: wire.attachments ?? null,
        turnIndex: wire.turn_index,
    }));
    return {
        sessionId: state.id,
        system: state.system,
        messages,
        inFlight: false,
        error: null,
    };
}
export function lastRobotMessage(view) {
    for (let i = view.messages.length - 1; i >= 0; i--) {
        const message = view.messages[i];
        if (message && message.role === "robot")
            return message;
    }
    return null;
}
/** Confirmation controls are visible iff the last reply asks to confirm. */
export function confirmationVisible(view) {
    if (view.inFlight)
        return false;
    return lastRobotMessage(view)?.kind === "confirmation_request";
}
/** The pending banner above the input, derived from the last reply kind. */
export function pendingBanner(view) {
    const last = lastRobotMessage(view);
    if (last?.kind === "confirmation_request")
        return "confirmation";
    if (last?.kind === "clarification_question")
        return "clarification";
    return null;
}
/** The input accepts text only when a session exists and no turn is running. */
export function inputEnabled(view) {
    return view.sessionId !== null && !view.inFlight;
}
