"""Stepwise binary classification of user instructions into
Clear / Ambiguous / Modification / Infeasible.

The checks run in a fixed order — ambiguity, known-task match, feasibility —
and the first one that fires decides the verdict; Modification is the
residual. Each check resolves backend failures on its own conservative side,
so classification always produces exactly one verdict.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .domain import (
    ActionCatalog,
    Classification,
    ConversationHistory,
    Inventory,
    TaskLibrary,
    Verdict,
)
from .gateway import (
    ChatMessage,
    LlmBackend,
    LlmGatewayError,
    PromptLibrary,
    complete,
    encode_history,
    encode_task_library,
    parse_bool,
    render_user_embedding,
)
from .guards import default_prompts, knowno, run_safety_check


@dataclass(frozen=True)
class ConditionOutcome:
    name: str
    answer: bool
    raw_completion: str


def _boolean_check(
    name: str,
    template_name: str,
    conservative: bool,
    backend: LlmBackend,
    prompts: PromptLibrary,
    **bindings,
) -> ConditionOutcome:
    prompt = prompts.get(template_name).render(**bindings)
    try:
        raw = complete(backend, [ChatMessage(role="user", content=prompt)])
    except LlmGatewayError as exc:
        return ConditionOutcome(name=name, answer=conservative, raw_completion=f"<gateway error: {exc}>")
    parsed = parse_bool(raw)
    answer = conservative if parsed is None else parsed
    return ConditionOutcome(name=name, answer=answer, raw_completion=raw)


def check_ambiguous(
    u: str,
    history: ConversationHistory,
    backend: LlmBackend,
    library: Optional[TaskLibrary] = None,
    prompts: Optional[PromptLibrary] = None,
) -> ConditionOutcome:
    """Is the request too vague to act on? Unparseable or failed completions
    count as ambiguous — asking a follow-up is the safe wrong answer."""
    prompts = prompts or default_prompts()
    return _boolean_check(
        "ambiguous",
        "ambiguity_check",
        conservative=True,
        backend=backend,
        prompts=prompts,
        library=encode_task_library(library if library is not None else TaskLibrary(tasks=())),
        history=encode_history(history),
        instruction=render_user_embedding(u),
    )


def check_known_match(
    u: str,
    history: ConversationHistory,
    library: TaskLibrary,
    backend: LlmBackend,
    prompts: Optional[PromptLibrary] = None,
) -> ConditionOutcome:
    """Does the request map directly onto a stored task? Failures answer False
    (a wrong True would trigger execution)."""
    if len(library) == 0:
        return ConditionOutcome(name="known", answer=False, raw_completion="<empty library>")
    prompts = prompts or default_prompts()
    return _boolean_check(
        "known",
        "known_check",
        conservative=False,
        backend=backend,
        prompts=prompts,
        library=encode_task_library(library),
        history=encode_history(history),
        instruction=render_user_embedding(u),
    )


def interpret_confirmation(
    history: ConversationHistory,
    reply: str,
    backend: LlmBackend,
    prompts: Optional[PromptLibrary] = None,
) -> ConditionOutcome:
    """Did the user agree to the proposed task? Unclear means no."""
    prompts = prompts or default_prompts()
    return _boolean_check(
        "confirmation",
        "yes_no",
        conservative=False,
        backend=backend,
        prompts=prompts,
        history=encode_history(history),
        instruction=render_user_embedding(reply),
    )


def classify(
    u: str,
    history: ConversationHistory,
    library: TaskLibrary,
    inventory: Inventory,
    backend: LlmBackend,
    catalog: Optional[ActionCatalog] = None,
    prompts: Optional[PromptLibrary] = None,
) -> Classification:
    """First-true-wins cascade over the binary checks.

    Clear requires the candidate-set guard to confirm exactly one library
    match; zero or several candidates demote the verdict to Ambiguous so the
    follow-up subtree can sort it out.
    """
    prompts = prompts or default_prompts()
    if check_ambiguous(u, history, backend, library=library, prompts=prompts).answer:
        return Classification(Verdict.AMBIGUOUS)
    if check_known_match(u, history, library, backend, prompts=prompts).answer:
        candidates = knowno(u, library, backend, history=history, prompts=prompts)
        if len(candidates) == 1:
            return Classification(Verdict.CLEAR, matched_task=candidates.tasks[0])
        return Classification(Verdict.AMBIGUOUS)
    verdict = run_safety_check(u, history, inventory, backend, catalog=catalog, prompts=prompts)
    if not verdict.feasible:
        return Classification(Verdict.INFEASIBLE)
    return Classification(Verdict.MODIFICATION)
