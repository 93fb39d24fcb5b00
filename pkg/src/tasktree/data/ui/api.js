// Typed client for the session service. Every call returns the parsed wire
// payload or throws ApiError carrying the server's error envelope, so the
// view layer can show codes like turn_in_progress without string-matching.
export class ApiError extends Error {
    constructor(code, message, status) {
        super(message);
        this.code = code;
        this.status = status;
        this.name = "ApiError";
    }
}
async function request(url, init) {
    let response;
    try {
        response = await fetch(url, init);
    }
    catch (cause) {
        throw new ApiError("unreachable", `cannot reach the service at ${url}`, 0);
    }
    const body = await response.json().catch(() => null);
    if (!response.ok) {
        const envelope = body?.error;
        throw new ApiError(envelope?.code ?? "unknown", envelope?.message ?? `request failed with status ${response.status}`, response.status);
    }
    return body;
}
export class ApiClient {
    constructor(base = "") {
        this.base = base;
    }
    createSession(system) {
        return request(`${this.base}/v1/sessions`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ system }),
        });
    }
    postMessage(sessionId, text) {
        return request(`${this.base}/v1/sessions/${encodeURIComponent(sessionId)}/messages`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ text }),
        });
    }
    getTrace(sessionId) {
        return request(`${this.base}/v1/sessions/${encodeURIComponent(sessionId)}/trace`);
    }
    getState(sessionId) {
        return request(`${this.base}/v1/sessions/${encodeURIComponent(sessionId)}`);
    }
}
