"""Single-prompt comparison system.

One static context prompt (actions, inventory, known tasks, and the four
handling rules) is loaded as the system message; every turn sends the full
conversation and returns the raw completion as the reply. There is no tree,
no classification, and no validation — any JSON found in a completion is
extracted for the log only.
"""

from __future__ import annotations

import json
import logging
import uuid
from typing import Optional

from .bt import TickTrace
from .config import AppConfig
from .domain import ConversationHistory, Role, TaskLibrary
from .gateway import (
    ChatMessage,
    CountingBackend,
    LlmBackend,
    LlmGatewayError,
    PromptLibrary,
    complete,
    encode_catalog,
    encode_inventory,
    encode_task_library,
)
from .guards import default_prompts, extract_json_block
from .orchestrator import RETRY_FALLBACK_TEXT, PendingKind, ReplyKind, RobotReply

logger = logging.getLogger(__name__)

_ROLE_TO_CHAT = {Role.USER: "user", Role.ROBOT: "assistant"}


def build_system_context(config: AppConfig, prompts: Optional[PromptLibrary] = None) -> str:
    """The static system prompt: the same serialized actions, inventory, and
    task library the tree system embeds, followed by the four handling rules."""
    prompts = prompts or default_prompts()
    return prompts.get("baseline").render(
        catalog=encode_catalog(config.catalog),
        inventory=encode_inventory(config.inventory),
        library=encode_task_library(config.library),
        quantity_limit=config.inventory.quantity_limit,
    )


class BaselineSession:
    """One baseline conversation. Mirrors the tree Session's surface (history,
    traces, executed, pending) so the service can host either system, but the
    baseline never executes anything and has no tree to tick."""

    def __init__(
        self,
        config: AppConfig,
        backend: LlmBackend,
        session_id: Optional[str] = None,
        prompts: Optional[PromptLibrary] = None,
    ) -> None:
        self.id = session_id or uuid.uuid4().hex
        self.config = config
        self.backend = CountingBackend(backend)
        self.prompts = prompts or default_prompts()
        self.history = ConversationHistory()
        self.session_library: TaskLibrary = config.library
        self.pending: PendingKind = PendingKind.NONE
        self.executed: list = []
        self.traces: list[TickTrace] = []
        self.system_context = build_system_context(config, self.prompts)

    @property
    def turn_count(self) -> int:
        """Completed exchanges (user message + robot reply)."""
        return len(self.history) // 2


def baseline_turn(session: BaselineSession, u: str) -> RobotReply:
    """One exchange: system prompt + full history + the new message, exactly
    one completion call, and the raw completion as the reply text."""
    if not u or not u.strip():
        raise ValueError("user utterance must be non-empty")

    session.history.append(Role.USER, u)
    session.backend.reset()
    messages = [ChatMessage(role="system", content=session.system_context)]
    for utterance in session.history:
        messages.append(
            ChatMessage(role=_ROLE_TO_CHAT[utterance.role], content=utterance.text)
        )
    try:
        text = complete(session.backend, messages)
        block = extract_json_block(text)
        if block is not None:
            # surfaced for the evaluation harness; deliberately not validated
            logger.info("baseline json %s", block)
        reply = RobotReply(text=text, kind=ReplyKind.FALLBACK)
    except LlmGatewayError:
        reply = RobotReply(text=RETRY_FALLBACK_TEXT, kind=ReplyKind.FALLBACK)

    session.traces.append(TickTrace(events=[]))
    session.history.append(Role.ROBOT, reply.text)
    return reply
