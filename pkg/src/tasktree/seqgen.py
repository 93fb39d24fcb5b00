"""Sequence synthesis for Modification requests: prompt the model with the
instruction, the conversation so far, and the full task menu, and hand the raw
completion to the structural validator.

Generation itself is one attempt per turn and is never trusted — guards check
everything it produces.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Optional

from .domain import (
    ActionCatalog,
    ConversationHistory,
    Inventory,
    TaskLibrary,
    TaskSequence,
    normalize_name,
)
from .gateway import (
    ChatMessage,
    LlmBackend,
    PromptLibrary,
    complete,
    encode_catalog,
    encode_history,
    encode_inventory,
    encode_task_library,
    render_user_embedding,
)
from .guards import default_prompts


@dataclass(frozen=True)
class GenerationRequest:
    """Inputs for one synthesis attempt; only built for Modification turns."""

    instruction: str
    history: ConversationHistory
    library: TaskLibrary


def generate_sequence(
    req: GenerationRequest,
    backend: LlmBackend,
    catalog: ActionCatalog,
    inventory: Inventory,
    prompts: Optional[PromptLibrary] = None,
) -> str:
    """One completion over instruction ⊕ history ⊕ task menu.

    Returns the raw completion text; validation is check_new_seq's job.
    Backend errors propagate — the tree maps them to the restate fallback.
    """
    prompts = prompts or default_prompts()
    prompt = prompts.get("generate_sequence").render(
        catalog=encode_catalog(catalog),
        inventory=encode_inventory(inventory),
        quantity_limit=inventory.quantity_limit,
        library=encode_task_library(req.library),
        history=encode_history(req.history),
        instruction=render_user_embedding(req.instruction),
    )
    return complete(backend, [ChatMessage(role="user", content=prompt)])


_STOPWORDS = frozenset(
    """a an and but can could do for get give have i it like make me my no of on
    please some the to want without would you your double triple extra more less
    amount add remove hold""".split()
)


def name_generated_task(
    seq: TaskSequence,
    instruction: str,
    taken: Iterable[str] = (),
    start: int = 1,
) -> str:
    """Deterministic display name for a generated task: first content word of
    the instruction plus a modification counter, bumped until unique."""
    words = re.findall(r"[a-z]+", instruction.lower())
    base = next((w for w in words if len(w) > 1 and w not in _STOPWORDS), "task")
    taken_normalized = {normalize_name(name) for name in taken}
    counter = max(start, 1)
    while True:
        candidate = f"{base} (modified #{counter})"
        if normalize_name(candidate) not in taken_normalized:
            return candidate
        counter += 1
