"""HTTP session service.

Hosts both systems behind one JSON API:

    POST /v1/sessions                 {"system": "bt_action"|"baseline"} -> 201 handle
    POST /v1/sessions/{id}/messages   {"text": ...} -> reply for the turn
    GET  /v1/sessions/{id}/trace      -> one tick trace per completed turn
    GET  /v1/sessions/{id}            -> session summary for view reconstruction

Replies are synchronous; a session processes one turn at a time, and a
message posted while another is in flight is refused with 409. All errors
use the envelope {"error": {"code": ..., "message": ...}}. The bundled web
chat is served from /ui by the same process.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Optional, Union

from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, RedirectResponse
from fastapi.staticfiles import StaticFiles

from .baseline import BaselineSession, baseline_turn
from .config import AppConfig, load_config, packaged_data_dir
from .evaluation import SYSTEMS, build_canonical_backend, default_cases_path, load_cases
from .gateway import LlmBackend, PromptLibrary, make_backend
from .orchestrator import RobotReply, Session, run_turn


class ServiceError(Exception):
    """An API error carrying the HTTP status and the wire error code."""

    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class SessionEntry:
    """One hosted session plus the service-side view log: the reply kinds and
    attachments per message, which the sessions themselves do not retain, so
    clients can rebuild their view from GET /v1/sessions/{id} alone."""

    session: Union[Session, BaselineSession]
    system: str
    created_at: float
    lock: threading.Lock = field(default_factory=threading.Lock)
    messages: list[dict] = field(default_factory=list)


class SessionRegistry:
    def __init__(self) -> None:
        self._entries: dict[str, SessionEntry] = {}
        self._guard = threading.Lock()

    def add(self, entry: SessionEntry) -> None:
        with self._guard:
            self._entries[entry.session.id] = entry

    def get(self, session_id: str) -> SessionEntry:
        with self._guard:
            entry = self._entries.get(session_id)
        if entry is None:
            raise ServiceError(404, "not_found", f"no session with id {session_id!r}")
        return entry


def _default_backend(config: AppConfig) -> LlmBackend:
    """The configured backend; a scripted configuration gets the canonical
    rule table built from the shipped case dataset so demos work offline."""
    if config.backend.kind == "scripted":
        cases = load_cases(default_cases_path())
        return build_canonical_backend("bt_action", cases, config)
    return make_backend(config.backend)


def create_app(
    config: Optional[AppConfig] = None,
    backend: Optional[LlmBackend] = None,
    prompts: Optional[PromptLibrary] = None,
) -> FastAPI:
    config = config or load_config()
    backend = backend or _default_backend(config)

    app = FastAPI(title="tasktree session service", docs_url=None, redoc_url=None)
    registry = SessionRegistry()
    app.state.registry = registry

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(
            status_code=400,
            content={"error": {"code": "bad_request", "message": "malformed request body"}},
        )

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: Optional[dict] = Body(default=None)) -> dict:
        body = body or {}
        system = body.get("system", "bt_action")
        if system not in SYSTEMS:
            raise ServiceError(
                400, "invalid_system", f"system must be one of {list(SYSTEMS)}, got {system!r}"
            )
        if system == "bt_action":
            session: Union[Session, BaselineSession] = Session(config, backend, prompts=prompts)
        else:
            session = BaselineSession(config, backend, prompts=prompts)
        entry = SessionEntry(session=session, system=system, created_at=time.time())
        registry.add(entry)
        return {"id": session.id, "system": system, "created_at": entry.created_at}

    @app.post("/v1/sessions/{session_id}/messages")
    def post_message(session_id: str, body: Optional[dict] = Body(default=None)) -> dict:
        entry = registry.get(session_id)
        body = body or {}
        text = body.get("text")
        if not isinstance(text, str) or not text.strip():
            raise ServiceError(400, "empty_text", "field 'text' must be a non-empty string")
        if not entry.lock.acquire(blocking=False):
            raise ServiceError(
                409, "turn_in_progress", "another turn is already being processed"
            )
        try:
            if entry.system == "bt_action":
                reply: RobotReply = run_turn(entry.session, text)
            else:
                reply = baseline_turn(entry.session, text)
            exchange_index = entry.session.turn_count - 1
            entry.messages.append(
                {"role": "user", "text": text, "turn_index": exchange_index}
            )
            record = {
                "role": "robot",
                "text": reply.text,
                "kind": reply.kind.value,
                "attachments": reply.attachments_wire(),
                "turn_index": exchange_index,
            }
            entry.messages.append(record)
        finally:
            entry.lock.release()
        return {
            "reply": reply.text,
            "kind": reply.kind.value,
            "attachments": reply.attachments_wire(),
            "turn_index": exchange_index,
        }

    @app.get("/v1/sessions/{session_id}/trace")
    def get_trace(session_id: str) -> list:
        entry = registry.get(session_id)
        return [trace.to_wire() for trace in entry.session.traces]

    @app.get("/v1/sessions/{session_id}")
    def get_state(session_id: str) -> dict:
        entry = registry.get(session_id)
        session = entry.session
        return {
            "id": session.id,
            "system": entry.system,
            "created_at": entry.created_at,
            "turn_count": session.turn_count,
            "pending": session.pending.value,
            "executed": [
                {
                    "task_name": item.sequence.task_name,
                    "steps": [step.to_wire() for step in item.sequence.steps],
                    "provenance": item.provenance,
                }
                for item in session.executed
            ],
            "messages": list(entry.messages),
        }

    ui_dir = packaged_data_dir() / "ui"
    if ui_dir.is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

        @app.get("/", include_in_schema=False)
        def root() -> RedirectResponse:
            return RedirectResponse(url="/ui/")

    return app
