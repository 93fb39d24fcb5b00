"""Session orchestration: assembles the full decision tree, runs one tick per
user turn, manages clarification/confirmation state, and keeps the history,
executed log, and per-turn traces.

Flow per user turn: append the utterance, then either resolve a pending
confirmation or tick the tree from the root on a fresh blackboard. Exactly one
robot reply comes back and is appended to the history before returning.
"""

from __future__ import annotations

import json
import logging
import uuid
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache, partial
from typing import Callable, Optional

from .bt import Blackboard, NodeStatus, TickTrace, TreeSpec, build_tree, tick
from .classifier import check_ambiguous, check_known_match, interpret_confirmation
from .config import AppConfig, packaged_data_dir
from .domain import (
    ActionCatalog,
    ConversationHistory,
    Inventory,
    Role,
    TaskLibrary,
    TaskSequence,
    ValidationReport,
    Verdict,
    lookup_task,
)
from .gateway import (
    ChatMessage,
    CountingBackend,
    LlmBackend,
    LlmGatewayError,
    PromptLibrary,
    complete,
    encode_history,
    encode_task_library,
    render_user_embedding,
)
from .guards import (
    CandidateSet,
    SafetyVerdict,
    check_mapping,
    check_new_seq,
    default_prompts,
    knowno,
    run_safety_check,
)
from .seqgen import GenerationRequest, generate_sequence, name_generated_task

logger = logging.getLogger(__name__)


class ReplyKind(str, Enum):
    ACKNOWLEDGMENT = "acknowledgment"
    CLARIFICATION_QUESTION = "clarification_question"
    CONFIRMATION_REQUEST = "confirmation_request"
    INFEASIBILITY_EXPLANATION = "infeasibility_explanation"
    FALLBACK = "fallback"


class PendingKind(str, Enum):
    NONE = "none"
    AWAITING_CLARIFICATION = "awaiting_clarification"
    AWAITING_CONFIRMATION = "awaiting_confirmation"


@dataclass(frozen=True)
class RobotReply:
    text: str
    kind: ReplyKind
    sequence: Optional[TaskSequence] = None
    candidates: Optional[CandidateSet] = None

    def __post_init__(self) -> None:
        if self.kind is ReplyKind.CONFIRMATION_REQUEST and self.sequence is None:
            raise ValueError("confirmation request must carry the proposed sequence")
        if self.candidates is not None and self.kind is not ReplyKind.CLARIFICATION_QUESTION:
            raise ValueError("candidate sets only accompany clarification questions")

    def attachments_wire(self) -> Optional[dict]:
        if self.sequence is not None:
            return {"sequence": self.sequence.to_wire()}
        if self.candidates is not None:
            return {"candidates": list(self.candidates.tasks)}
        return None


@dataclass(frozen=True)
class ExecutedEntry:
    sequence: TaskSequence
    provenance: str  # "known" | "generated_confirmed"

    def __post_init__(self) -> None:
        if self.provenance not in ("known", "generated_confirmed"):
            raise ValueError(f"bad provenance {self.provenance!r}")


BOARD_SCHEMA: dict[str, type] = {
    "instruction": str,
    "history": ConversationHistory,
    "library": TaskLibrary,
    "inventory": Inventory,
    "catalog": ActionCatalog,
    "verdict": Verdict,
    "candidates": CandidateSet,
    "matched_task": TaskSequence,
    "generated_raw": str,
    "generated_sequence": TaskSequence,
    "validation": ValidationReport,
    "safety": SafetyVerdict,
    "reply": RobotReply,
    "terminate": bool,
}


@lru_cache(maxsize=1)
def tree_description() -> dict:
    return json.loads((packaged_data_dir() / "tree.json").read_text())


RETRY_FALLBACK_TEXT = (
    "I'm having trouble reaching my language model right now. Please try again in a moment."
)
TERMINAL_FALLBACK_TEXT = (
    "We don't seem to be getting anywhere. Please start a new request and I'll try again."
)
RESTATE_FALLBACK_TEXT = (
    "I'm sorry, I couldn't put together a valid plan for that. "
    "Could you restate your instructions in a clearer way?"
)
DECLINE_FALLBACK_TEXT = (
    "Okay, I won't make that. Could you restate your instructions in a clearer way?"
)


class Session:
    """One conversation: history, growable task library, pending state,
    executed log, and the tree bound to this session's backend."""

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
        self.pending_sequence: Optional[TaskSequence] = None
        self.pending_instruction: str = ""
        self.executed: list[ExecutedEntry] = []
        self.fallback_streak = 0
        self.generated_count = 0
        self.traces: list[TickTrace] = []
        self.tree: TreeSpec = build_tree(tree_description(), _registry(self))

    @property
    def turn_count(self) -> int:
        """Completed exchanges (user message + robot reply)."""
        return len(self.history) // 2


# --- leaf implementations ----------------------------------------------------
# Conditions write the verdict; actions write the reply. Every leaf reads its
# inputs from the blackboard and talks to the session's counting backend.


def _ambiguous_check(session: Session, board: Blackboard) -> bool:
    outcome = check_ambiguous(
        board.get("instruction"),
        board.get("history"),
        session.backend,
        library=board.get("library"),
        prompts=session.prompts,
    )
    if outcome.answer:
        board.set("verdict", Verdict.AMBIGUOUS)
    return outcome.answer


def _ask_followup(session: Session, board: Blackboard) -> None:
    question = make_followup_question(
        board.get("history"), board.get("library"), session.backend, prompts=session.prompts
    )
    board.set("reply", RobotReply(text=question, kind=ReplyKind.CLARIFICATION_QUESTION))


def _known_check(session: Session, board: Blackboard) -> bool:
    return check_known_match(
        board.get("instruction"),
        board.get("history"),
        board.get("library"),
        session.backend,
        prompts=session.prompts,
    ).answer


def _map_candidates(session: Session, board: Blackboard) -> None:
    candidates = knowno(
        board.get("instruction"),
        board.get("library"),
        session.backend,
        history=board.get("history"),
        prompts=session.prompts,
    )
    board.set("candidates", candidates)


def _single_candidate(session: Session, board: Blackboard) -> bool:
    candidates = board.get("candidates")
    if len(candidates) != 1:
        return False
    task = lookup_task(candidates.tasks[0], board.get("library"))
    if task is None:
        return False
    board.set("matched_task", task)
    board.set("verdict", Verdict.CLEAR)
    return True


def _mapping_check(session: Session, board: Blackboard) -> bool:
    ok = check_mapping(
        board.get("instruction"),
        board.get("history"),
        board.get("matched_task"),
        session.backend,
        prompts=session.prompts,
    )
    if not ok:
        # unique candidate that does not satisfy the request: reclassify this
        # very tick as a modification and let that subtree take over
        board.set("verdict", Verdict.MODIFICATION)
    return ok


def _announce_execution(session: Session, board: Blackboard) -> None:
    task = board.get("matched_task")
    text = _acknowledgment_text(session, task.task_name, board.get("history"))
    _execute(session, task, provenance="known")
    board.set("reply", RobotReply(text=text, kind=ReplyKind.ACKNOWLEDGMENT, sequence=task))


def _multiple_candidates(session: Session, board: Blackboard) -> bool:
    if len(board.get("candidates")) > 1:
        board.set("verdict", Verdict.AMBIGUOUS)
        return True
    return False


def _list_candidate_options(session: Session, board: Blackboard) -> None:
    candidates = board.get("candidates")
    names = " or ".join(candidates.tasks)
    text = (
        f"There are multiple options that might fit your request: {names}. "
        "Which one would you like?"
    )
    board.set(
        "reply",
        RobotReply(text=text, kind=ReplyKind.CLARIFICATION_QUESTION, candidates=candidates),
    )


def _no_candidate(session: Session, board: Blackboard) -> bool:
    if len(board.get("candidates")) == 0:
        board.set("verdict", Verdict.AMBIGUOUS)
        return True
    return False


def _safety_check(session: Session, board: Blackboard) -> bool:
    if board.has("verdict") and board.get("verdict") is Verdict.MODIFICATION:
        # the mapping check already rerouted this tick; feasibility is implied
        # by the near-match, so no further model call is made
        return True
    verdict = run_safety_check(
        board.get("instruction"),
        board.get("history"),
        board.get("inventory"),
        session.backend,
        catalog=board.get("catalog"),
        prompts=session.prompts,
    )
    board.set("safety", verdict)
    if verdict.feasible:
        board.set("verdict", Verdict.MODIFICATION)
        return True
    board.set("verdict", Verdict.INFEASIBLE)
    return False


def _generate_sequence(session: Session, board: Blackboard) -> None:
    request = GenerationRequest(
        instruction=board.get("instruction"),
        history=board.get("history"),
        library=board.get("library"),
    )
    raw = generate_sequence(
        request,
        session.backend,
        board.get("catalog"),
        board.get("inventory"),
        prompts=session.prompts,
    )
    board.set("generated_raw", raw)


def _sequence_valid(session: Session, board: Blackboard) -> bool:
    report, sequence = check_new_seq(
        board.get("generated_raw"), board.get("catalog"), board.get("inventory")
    )
    board.set("validation", report)
    if sequence is None:
        return False
    board.set("generated_sequence", sequence)
    return True


def _summarize_for_confirmation(session: Session, board: Blackboard) -> None:
    sequence = board.get("generated_sequence")
    text = summarize_for_confirmation(
        sequence,
        session.backend,
        history=board.get("history"),
        prompts=session.prompts,
        session=session,
    )
    board.set(
        "reply",
        RobotReply(text=text, kind=ReplyKind.CONFIRMATION_REQUEST, sequence=sequence),
    )


def _restate_fallback(session: Session, board: Blackboard) -> None:
    board.set("reply", RobotReply(text=RESTATE_FALLBACK_TEXT, kind=ReplyKind.FALLBACK))


def _explain_infeasible(session: Session, board: Blackboard) -> None:
    reason = (
        board.get("safety").reason
        if board.has("safety")
        else "the request is beyond what the robot can do"
    )
    text = explain_infeasible(
        board.get("instruction"),
        board.get("catalog"),
        board.get("inventory"),
        session.backend,
        reason=reason,
        history=board.get("history"),
        prompts=session.prompts,
    )
    board.set("reply", RobotReply(text=text, kind=ReplyKind.INFEASIBILITY_EXPLANATION))


def _registry(session: Session) -> dict[str, Callable]:
    leaves = {
        "ambiguous-check": _ambiguous_check,
        "ask-followup": _ask_followup,
        "known-check": _known_check,
        "map-candidates": _map_candidates,
        "single-candidate": _single_candidate,
        "mapping-check": _mapping_check,
        "announce-execution": _announce_execution,
        "multiple-candidates": _multiple_candidates,
        "list-candidate-options": _list_candidate_options,
        "no-candidate": _no_candidate,
        "demoted-followup": _ask_followup,
        "safety-check": _safety_check,
        "generate-sequence": _generate_sequence,
        "sequence-valid": _sequence_valid,
        "summarize-for-confirmation": _summarize_for_confirmation,
        "restate-fallback": _restate_fallback,
        "explain-infeasible": _explain_infeasible,
    }
    return {name: partial(fn, session) for name, fn in leaves.items()}


# --- reply text producers -----------------------------------------------------


def make_followup_question(
    history: ConversationHistory,
    library: TaskLibrary,
    backend: LlmBackend,
    prompts: Optional[PromptLibrary] = None,
) -> str:
    """Clarification question grounded in history and the known tasks; a
    backend failure falls back to a static question listing the task names."""
    prompts = prompts or default_prompts()
    prompt = prompts.get("followup_question").render(
        library=encode_task_library(library), history=encode_history(history)
    )
    try:
        return complete(backend, [ChatMessage(role="user", content=prompt)])
    except LlmGatewayError:
        names = library.names()
        if names:
            menu = ", ".join(names[:-1]) + (" or " + names[-1] if len(names) > 1 else names[0])
            return f"Could you tell me more about what you'd like? I can make {menu}."
        return "Could you tell me more about what you'd like?"


def _mechanical_summary(sequence: TaskSequence) -> str:
    steps = "; ".join(
        step.action + "(" + ", ".join(f"{k}={v}" for k, v in step.args.items()) + ")"
        for step in sequence.steps
    )
    return f"Here is the plan for {sequence.task_name}: {steps}. Does this sound good to you?"


def summarize_for_confirmation(
    sequence: TaskSequence,
    backend: LlmBackend,
    history: Optional[ConversationHistory] = None,
    prompts: Optional[PromptLibrary] = None,
    session: Optional[Session] = None,
) -> str:
    """Natural-language summary of the proposed sequence ending in a
    confirmation question; also arms the session's confirmation state."""
    prompts = prompts or default_prompts()
    sequence_text = f"- {sequence.task_name}:\n" + "\n".join(
        "    " + json.dumps(step.to_wire(), sort_keys=True) for step in sequence.steps
    )
    prompt = prompts.get("summarize_sequence").render(
        sequence=sequence_text,
        history=encode_history(history if history is not None else ConversationHistory()),
    )
    try:
        text = complete(backend, [ChatMessage(role="user", content=prompt)])
    except LlmGatewayError:
        text = _mechanical_summary(sequence)
    if session is not None:
        session.pending = PendingKind.AWAITING_CONFIRMATION
        session.pending_sequence = sequence
    return text


def explain_infeasible(
    u: str,
    catalog: ActionCatalog,
    inventory: Inventory,
    backend: LlmBackend,
    reason: str = "the request is beyond what the robot can do",
    history: Optional[ConversationHistory] = None,
    prompts: Optional[PromptLibrary] = None,
) -> str:
    """Explanation for an infeasible request, grounded in the safety reason;
    static template on backend failure."""
    prompts = prompts or default_prompts()
    prompt = prompts.get("explain_infeasible").render(
        reason=reason,
        history=encode_history(history if history is not None else ConversationHistory()),
        instruction=render_user_embedding(u),
    )
    try:
        return complete(backend, [ChatMessage(role="user", content=prompt)])
    except LlmGatewayError:
        return f"I'm sorry, but I can't do that: {reason}."


def _acknowledgment_text(session: Session, task_name: str, history: ConversationHistory) -> str:
    prompt = session.prompts.get("acknowledge_execution").render(
        task_name=task_name, history=encode_history(history)
    )
    try:
        return complete(session.backend, [ChatMessage(role="user", content=prompt)])
    except LlmGatewayError:
        return f"I'll get started on the task for a {task_name}."


def _execute(session: Session, sequence: TaskSequence, provenance: str) -> None:
    """Execution in this artifact is an executed-log append plus the wire-form
    JSON on the log channel; there is no actuator."""
    session.executed.append(ExecutedEntry(sequence=sequence, provenance=provenance))
    logger.info("execute %s", json.dumps(sequence.to_wire(), sort_keys=True))


# --- turn driving ---------------------------------------------------------------


def handle_confirmation(
    session: Session, reply_text: str, backend: Optional[LlmBackend] = None
) -> RobotReply:
    """Resolve a pending confirmation: agreement executes and stores the task
    under a fresh name; anything else clears the proposal and asks the user to
    restate. History updates are run_turn's job."""
    if session.pending is not PendingKind.AWAITING_CONFIRMATION or session.pending_sequence is None:
        raise ValueError("no confirmation pending")
    backend = backend or session.backend
    sequence = session.pending_sequence
    outcome = interpret_confirmation(session.history, reply_text, backend, prompts=session.prompts)
    session.pending = PendingKind.NONE
    session.pending_sequence = None
    if outcome.answer:
        taken = list(session.session_library.names()) + [
            entry.sequence.task_name for entry in session.executed
        ]
        name = name_generated_task(
            sequence,
            session.pending_instruction or sequence.task_name,
            taken=taken,
            start=session.generated_count + 1,
        )
        named = TaskSequence(task_name=name, steps=sequence.steps)
        session.generated_count += 1
        session.session_library = session.session_library.with_task(named)
        _execute(session, named, provenance="generated_confirmed")
        text = _acknowledgment_text(session, name, session.history)
        session.pending_instruction = ""
        return RobotReply(text=text, kind=ReplyKind.ACKNOWLEDGMENT, sequence=named)
    session.pending_instruction = ""
    return RobotReply(text=DECLINE_FALLBACK_TEXT, kind=ReplyKind.FALLBACK)


def run_turn(session: Session, u: str) -> RobotReply:
    """Process one user turn end to end; exactly one user and one robot
    utterance are appended to the history."""
    if not u or not u.strip():
        raise ValueError("user utterance must be non-empty")

    if session.fallback_streak >= session.config.max_fallback_turns:
        session.history.append(Role.USER, u)
        session.fallback_streak = 0
        session.pending = PendingKind.NONE
        session.pending_sequence = None
        session.traces.append(TickTrace(events=[]))
        reply = RobotReply(text=TERMINAL_FALLBACK_TEXT, kind=ReplyKind.FALLBACK)
        session.history.append(Role.ROBOT, reply.text)
        return reply

    session.history.append(Role.USER, u)
    session.backend.reset()

    if session.pending is PendingKind.AWAITING_CONFIRMATION:
        reply = handle_confirmation(session, u)
        session.traces.append(TickTrace(events=[]))
    else:
        pending_before = (session.pending, session.pending_sequence, session.pending_instruction)
        board = Blackboard(BOARD_SCHEMA)
        board.set("instruction", u)
        board.set("history", session.history)
        board.set("library", session.session_library)
        board.set("inventory", session.config.inventory)
        board.set("catalog", session.config.catalog)
        status, trace = tick(session.tree, board)
        session.traces.append(trace)
        if (
            session.backend.calls > 0
            and session.backend.failures == session.backend.calls
        ):
            # every model call this turn failed: total outage — ask to retry
            # and leave the session exactly as it was before the turn
            session.pending, session.pending_sequence, session.pending_instruction = pending_before
            reply = RobotReply(text=RETRY_FALLBACK_TEXT, kind=ReplyKind.FALLBACK)
            session.history.append(Role.ROBOT, reply.text)
            return reply
        if board.has("reply"):
            reply = board.get("reply")
        else:
            reply = RobotReply(text=RETRY_FALLBACK_TEXT, kind=ReplyKind.FALLBACK)
        if reply.kind is ReplyKind.CLARIFICATION_QUESTION:
            session.pending = PendingKind.AWAITING_CLARIFICATION
        elif reply.kind is ReplyKind.CONFIRMATION_REQUEST:
            session.pending_instruction = u
        elif session.pending is PendingKind.AWAITING_CLARIFICATION:
            session.pending = PendingKind.NONE

    if reply.kind in (ReplyKind.CLARIFICATION_QUESTION, ReplyKind.FALLBACK):
        session.fallback_streak += 1
    else:
        session.fallback_streak = 0

    session.history.append(Role.ROBOT, reply.text)
    return reply
