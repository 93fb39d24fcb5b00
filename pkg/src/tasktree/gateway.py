"""Prompt rendering and chat-completion execution.

Prompt templates live in external text files with $-style placeholders (so
JSON examples inside templates need no escaping). Completions run against
either a remote HTTP chat endpoint or a deterministic scripted backend whose
rule table makes tests reproducible.
"""

from __future__ import annotations

import json
import os
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Protocol, Sequence

import httpx

from .config import BackendSettings
from .domain import ActionCatalog, ConversationHistory, Inventory, TaskLibrary


class PromptError(Exception):
    """Template missing, malformed, or rendered without a required binding."""


class LlmGatewayError(Exception):
    """Base for completion failures the orchestrator maps to fallback replies."""


class GatewayTimeout(LlmGatewayError):
    pass


class GatewayTransportError(LlmGatewayError):
    pass


class GatewayPayloadError(LlmGatewayError):
    pass


VALID_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in VALID_ROLES:
            raise ValueError(f"bad role {self.role!r}")
        if not self.content:
            raise ValueError("message content must be non-empty")


def _placeholders(body: str) -> frozenset[str]:
    template = string.Template(body)
    names: set[str] = set()
    for match in template.pattern.finditer(body):
        name = match.group("named") or match.group("braced")
        if name:
            names.add(name)
        elif match.group("invalid") is not None:
            raise PromptError(f"invalid $-placeholder near: {body[match.start():match.start()+20]!r}")
    return frozenset(names)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    @property
    def required_placeholders(self) -> frozenset[str]:
        return _placeholders(self.body)

    def render(self, **bindings) -> str:
        try:
            return string.Template(self.body).substitute(
                {k: str(v) for k, v in bindings.items()}
            )
        except KeyError as exc:
            raise PromptError(
                f"template {self.name!r} missing binding for {exc.args[0]!r}"
            ) from exc
        except ValueError as exc:
            raise PromptError(f"template {self.name!r} malformed: {exc}") from exc


class PromptLibrary:
    """All templates from one directory, keyed by file stem."""

    def __init__(self, templates: Mapping[str, PromptTemplate]) -> None:
        self._templates = dict(templates)

    @classmethod
    def load(cls, directory: Path) -> "PromptLibrary":
        directory = Path(directory)
        if not directory.is_dir():
            raise PromptError(f"prompt directory {directory} does not exist")
        templates = {}
        for path in sorted(directory.glob("*.txt")):
            templates[path.stem] = PromptTemplate(name=path.stem, body=path.read_text())
        if not templates:
            raise PromptError(f"prompt directory {directory} holds no templates")
        return cls(templates)

    def get(self, name: str) -> PromptTemplate:
        try:
            return self._templates[name]
        except KeyError:
            raise PromptError(f"no prompt template named {name!r}") from None

    def names(self) -> list[str]:
        return sorted(self._templates)


# --- encoders -------------------------------------------------------------

USER_BLOCK_HEADER = "USER INSTRUCTION:\n<<<\n"
USER_BLOCK_FOOTER = "\n>>>"


def render_user_embedding(u: str) -> str:
    """Wrap the instruction in a labeled block, preserving its text verbatim."""
    if not u.strip():
        raise ValueError("instruction is empty")
    return f"{USER_BLOCK_HEADER}{u}{USER_BLOCK_FOOTER}"


def extract_user_instruction(block: str) -> str:
    """Inverse of render_user_embedding (round-trip oracle for tests)."""
    start = block.index(USER_BLOCK_HEADER) + len(USER_BLOCK_HEADER)
    end = block.rindex(USER_BLOCK_FOOTER)
    return block[start:end]


def encode_history(history: ConversationHistory) -> str:
    """One line per utterance: 'turn_index. ROLE: text', in order."""
    if len(history) == 0:
        return "HISTORY (empty)"
    lines = [
        f"{u.turn_index}. {u.role.value.upper()}: {' '.join(u.text.splitlines())}"
        for u in history
    ]
    return "HISTORY:\n" + "\n".join(lines)


def encode_task_library(library: TaskLibrary) -> str:
    """Task menu: each entry is the task name plus one wire-JSON line per step."""
    lines = ["KNOWN TASKS:"]
    for task in library:
        lines.append(f"- {task.task_name}:")
        for step in task.steps:
            lines.append("    " + json.dumps(step.to_wire(), sort_keys=True))
    return "\n".join(lines)


def encode_catalog(catalog: ActionCatalog) -> str:
    lines = []
    for spec in catalog.specs.values():
        params = ", ".join(f"{p}: {k.value}" for p, k in spec.params)
        suffix = f" - {spec.description}" if spec.description else ""
        lines.append(f"- {spec.name}({params}){suffix}")
    return "\n".join(lines)


def encode_inventory(inventory: Inventory) -> str:
    return ", ".join(inventory.names())


def parse_bool(completion: str) -> Optional[bool]:
    """Strict True/False reading; anything else is None (caller picks the
    conservative branch)."""
    token = completion.strip().strip('"').strip("'").rstrip(".!").strip().lower()
    if token == "true":
        return True
    if token == "false":
        return False
    return None


# --- backends ---------------------------------------------------------------


class LlmBackend(Protocol):
    def complete(self, messages: Sequence[ChatMessage]) -> str: ...


def _require_messages(messages: Sequence[ChatMessage]) -> None:
    if not messages:
        raise ValueError("messages must be non-empty")


@dataclass(frozen=True)
class ScriptRule:
    """Fires when every `contains` fragment appears in the rendered prompt."""

    contains: tuple[str, ...]
    response: str
    label: str = ""


class ScriptedBackend:
    """Deterministic rule-table backend: first matching rule wins, and a
    mandatory catch-all answers everything else. Keeps a call counter and a
    prompt log so tests can assert call counts and prompt content."""

    def __init__(self, rules: Sequence[ScriptRule], catch_all: str) -> None:
        if not catch_all:
            raise ValueError("scripted backend requires a catch-all response")
        self.rules = list(rules)
        self.catch_all = catch_all
        self.calls = 0
        self.prompts: list[str] = []

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        _require_messages(messages)
        self.calls += 1
        text = "\n".join(m.content for m in messages)
        self.prompts.append(text)
        for rule in self.rules:
            if all(fragment in text for fragment in rule.contains):
                return rule.response
        return self.catch_all


class RemoteBackend:
    """HTTP chat-completions client: POST {model, messages}, read the first
    choice's message content. Bounded retries on transient transport failures;
    the API key comes from the environment, never from config files."""

    def __init__(self, settings: BackendSettings, client: Optional[httpx.Client] = None) -> None:
        if settings.kind != "remote":
            raise ValueError("RemoteBackend requires backend.kind 'remote'")
        self.settings = settings
        self._client = client if client is not None else httpx.Client()
        self.calls = 0

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        _require_messages(messages)
        self.calls += 1
        payload = {
            "model": self.settings.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": 0,
        }
        headers = {}
        api_key = os.environ.get(self.settings.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        last_error: LlmGatewayError = GatewayTransportError("no attempt made")
        for _ in range(self.settings.retries + 1):
            try:
                response = self._client.post(
                    self.settings.endpoint,
                    json=payload,
                    headers=headers,
                    timeout=self.settings.timeout_s,
                )
            except httpx.TimeoutException as exc:
                last_error = GatewayTimeout(str(exc))
                continue
            except httpx.TransportError as exc:
                last_error = GatewayTransportError(str(exc))
                continue
            if response.status_code >= 500:
                last_error = GatewayTransportError(f"server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise GatewayPayloadError(f"unexpected status {response.status_code}")
            try:
                data = response.json()
                content = data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise GatewayPayloadError(f"malformed completion payload: {exc}") from exc
            if not isinstance(content, str):
                raise GatewayPayloadError("completion content is not text")
            return content
        raise last_error


class CountingBackend:
    """Pass-through wrapper that counts calls and gateway failures, so the
    orchestrator can tell a total backend outage apart from individual checks
    resolving conservatively."""

    def __init__(self, inner: LlmBackend) -> None:
        self.inner = inner
        self.calls = 0
        self.failures = 0

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        self.calls += 1
        try:
            return self.inner.complete(messages)
        except LlmGatewayError:
            self.failures += 1
            raise

    def reset(self) -> None:
        self.calls = 0
        self.failures = 0


def complete(backend: LlmBackend, messages: Sequence[ChatMessage]) -> str:
    """Execute one chat completion; validates the message list first."""
    _require_messages(messages)
    return backend.complete(messages)


def make_backend(settings: BackendSettings) -> LlmBackend:
    """Instantiate the configured backend kind (scripted config gets an empty
    rule table whose catch-all admits nothing useful — callers that need the
    canonical scripted rules build them from the case dataset instead)."""
    if settings.kind == "remote":
        return RemoteBackend(settings)
    return ScriptedBackend(rules=(), catch_all="I am not sure.")
