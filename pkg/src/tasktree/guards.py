"""The four guard mechanisms that harden the pipeline against hallucinated or
mis-mapped LLM output: candidate-set matching over the task menu, mapping
confirmation, structural validation of generated sequences, and the safety /
feasibility check.

Structural validation never trusts the LLM: accepted sequences are re-checked
step by step against the catalog and inventory.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from .config import packaged_data_dir
from .domain import (
    ActionCall,
    ActionCatalog,
    ConversationHistory,
    Diagnostic,
    DiagnosticKind,
    Inventory,
    TaskLibrary,
    TaskSequence,
    ValidationReport,
    validate_action_call,
)
from .gateway import (
    ChatMessage,
    LlmBackend,
    LlmGatewayError,
    PromptLibrary,
    complete,
    encode_catalog,
    encode_history,
    encode_inventory,
    encode_task_library,
    parse_bool,
    render_user_embedding,
)


@lru_cache(maxsize=1)
def default_prompts() -> PromptLibrary:
    return PromptLibrary.load(packaged_data_dir() / "prompts")


@dataclass(frozen=True)
class CandidateSet:
    """Task names the model deems plausible for the request; always a subset
    of the library by construction."""

    tasks: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.tasks)) != len(self.tasks):
            raise ValueError("candidate set must not contain duplicates")

    def __len__(self) -> int:
        return len(self.tasks)


@dataclass(frozen=True)
class SafetyVerdict:
    feasible: bool
    reason: str = ""

    def __post_init__(self) -> None:
        if not self.feasible and not self.reason.strip():
            raise ValueError("infeasible verdict requires a reason")


def _option_letter(index: int) -> str:
    letters = ""
    index += 1
    while index:
        index, rem = divmod(index - 1, 26)
        letters = chr(ord("A") + rem) + letters
    return letters


def render_candidate_menu(library: TaskLibrary) -> tuple[str, dict[str, str]]:
    """Lettered multiple-choice menu over the library, plus the letter→task map."""
    lines = []
    mapping: dict[str, str] = {}
    for i, task in enumerate(library):
        letter = _option_letter(i)
        mapping[letter] = task.task_name
        lines.append(f"{letter}. {task.task_name}")
    return "\n".join(lines), mapping


def _parse_option_letters(completion: str, mapping: dict[str, str]) -> list[str]:
    text = completion.strip().upper()
    if not text:
        return []
    tokens = re.split(r"[\s,;.]+", text)
    if "NONE" in tokens:
        return []
    picked: list[str] = []
    for token in tokens:
        if token in mapping and mapping[token] not in picked:
            picked.append(mapping[token])
    return picked


def knowno(
    u: str,
    library: TaskLibrary,
    backend: LlmBackend,
    history: Optional[ConversationHistory] = None,
    prompts: Optional[PromptLibrary] = None,
) -> CandidateSet:
    """Multiple-choice candidate matching over the task menu.

    The completion's option letters are parsed back into task names; anything
    unparseable, out of range, or duplicated is dropped, so the result is a
    guaranteed subset of the library whatever the model said.
    """
    prompts = prompts or default_prompts()
    menu, mapping = render_candidate_menu(library)
    prompt = prompts.get("candidate_match").render(
        menu=menu,
        history=encode_history(history or ConversationHistory()),
        instruction=render_user_embedding(u),
    )
    try:
        raw = complete(backend, [ChatMessage(role="user", content=prompt)])
    except LlmGatewayError:
        return CandidateSet(tasks=())
    return CandidateSet(tasks=tuple(_parse_option_letters(raw, mapping)))


def check_mapping(
    u: str,
    history: ConversationHistory,
    task: TaskSequence,
    backend: LlmBackend,
    prompts: Optional[PromptLibrary] = None,
) -> bool:
    """Does the single candidate task really satisfy the request as stored?

    Anything other than a clean 'True' — including backend failure — answers
    False: re-examining a request is cheap, executing the wrong task is not.
    """
    prompts = prompts or default_prompts()
    task_text = f"- {task.task_name}:\n" + "\n".join(
        "    " + json.dumps(step.to_wire(), sort_keys=True) for step in task.steps
    )
    prompt = prompts.get("mapping_check").render(
        task=task_text,
        history=encode_history(history),
        instruction=render_user_embedding(u),
    )
    try:
        raw = complete(backend, [ChatMessage(role="user", content=prompt)])
    except LlmGatewayError:
        return False
    return parse_bool(raw) is True


_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL | re.IGNORECASE)


def _balanced_span(text: str, start: int) -> Optional[str]:
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def extract_json_block(text: str) -> Optional[str]:
    """First fenced code block if any, else the first braced span that parses
    as JSON (falling back to the first balanced span so malformed-but-braced
    output still reaches the parse diagnostics)."""
    fenced = _FENCE_RE.search(text)
    if fenced:
        return fenced.group(1).strip()
    first_balanced: Optional[str] = None
    pos = text.find("{")
    while pos != -1:
        span = _balanced_span(text, pos)
        if span is not None:
            if first_balanced is None:
                first_balanced = span
            try:
                json.loads(span)
                return span
            except json.JSONDecodeError:
                pass
        pos = text.find("{", pos + 1)
    return first_balanced


def _parse_diag(detail: str) -> ValidationReport:
    return ValidationReport(diagnostics=(Diagnostic(DiagnosticKind.PARSE, detail),))


def check_new_seq(
    raw: str, catalog: ActionCatalog, inventory: Inventory
) -> tuple[ValidationReport, Optional[TaskSequence]]:
    """Parse and structurally validate a generated sequence completion.

    Never raises: every problem becomes a diagnostic. Only a report with zero
    diagnostics carries a TaskSequence.
    """
    payload = None
    for source in (raw, extract_json_block(raw)):
        if source is None:
            continue
        try:
            payload = json.loads(source)
            break
        except json.JSONDecodeError:
            payload = None
    if payload is None:
        return _parse_diag("completion is not valid JSON"), None
    if not isinstance(payload, dict):
        return _parse_diag("completion JSON is not an object"), None

    task_name = payload.get("task_name")
    if not isinstance(task_name, str) or not task_name.strip():
        return _parse_diag("missing or empty task_name"), None
    steps_raw = payload.get("steps")
    if not isinstance(steps_raw, list):
        return _parse_diag("missing steps array"), None
    if not steps_raw:
        return (
            ValidationReport(
                diagnostics=(Diagnostic(DiagnosticKind.EMPTY, "sequence has no steps"),)
            ),
            None,
        )

    diagnostics: list[Diagnostic] = []
    steps: list[ActionCall] = []
    for i, step_raw in enumerate(steps_raw):
        if not isinstance(step_raw, dict) or not isinstance(step_raw.get("action"), str):
            diagnostics.append(
                Diagnostic(DiagnosticKind.PARSE, f"step {i} is not an action object")
            )
            continue
        args_raw = step_raw.get("args", {})
        if not isinstance(args_raw, dict):
            diagnostics.append(Diagnostic(DiagnosticKind.PARSE, f"step {i} args is not a map"))
            continue
        call = ActionCall(action=step_raw["action"], args=args_raw)
        steps.append(call)
        report = validate_action_call(call, catalog, inventory)
        for diag in report.diagnostics:
            diagnostics.append(Diagnostic(diag.kind, f"step {i}: {diag.detail}"))

    report = ValidationReport(diagnostics=tuple(diagnostics))
    if not report.valid:
        return report, None
    return report, TaskSequence(task_name=task_name.strip(), steps=tuple(steps))


def run_safety_check(
    u: str,
    history: ConversationHistory,
    inventory: Inventory,
    backend: LlmBackend,
    catalog: Optional[ActionCatalog] = None,
    prompts: Optional[PromptLibrary] = None,
) -> SafetyVerdict:
    """LLM feasibility judgment over the encoded capabilities and inventory.

    The completion must start with FEASIBLE or INFEASIBLE; anything else —
    including backend failure — resolves to infeasible, the conservative side.
    """
    prompts = prompts or default_prompts()
    catalog_text = encode_catalog(catalog) if catalog is not None else "- (food preparation actions only)"
    prompt = prompts.get("safety_check").render(
        catalog=catalog_text,
        inventory=encode_inventory(inventory),
        quantity_limit=inventory.quantity_limit,
        history=encode_history(history),
        instruction=render_user_embedding(u),
    )
    try:
        raw = complete(backend, [ChatMessage(role="user", content=prompt)])
    except LlmGatewayError as exc:
        return SafetyVerdict(feasible=False, reason=f"the safety check could not be completed ({exc})")

    text = raw.strip()
    upper = text.upper()
    if upper.startswith("FEASIBLE"):
        return SafetyVerdict(feasible=True)
    if upper.startswith("INFEASIBLE"):
        _, _, tail = text.partition(":")
        reason = tail.strip() or "the request is not feasible"
        return SafetyVerdict(feasible=False, reason=reason)
    return SafetyVerdict(
        feasible=False, reason="the request could not be verified as feasible"
    )
