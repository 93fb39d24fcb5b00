"""Case-suite evaluation.

Loads the case dataset, replays each case through either system (tree or
baseline) under a backend, scores the observed behavior against the gold
labels, runs the six-way error-taxonomy detectors, and emits human or JSON
reports with turn counts and timings.

The canonical scripted backends built here answer every prompt of every case
from the gold labels, so a full canonical run is an oracle-consistency check
of the pipeline, not a claim about live model accuracy.
"""

from __future__ import annotations

import json
import re
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Union

from .baseline import BaselineSession, baseline_turn
from .config import AppConfig, packaged_data_dir
from .domain import TaskSequence, Verdict, normalize_name
from .gateway import LlmBackend, PromptLibrary, ScriptRule, ScriptedBackend
from .guards import check_new_seq, extract_json_block, render_candidate_menu
from .orchestrator import ExecutedEntry, ReplyKind, Session, run_turn


class EvalError(Exception):
    """Raised for unusable case files or unusable suite invocations."""


PROVENANCE_LABELS = ("canonical-example", "authored-extension")
SYSTEMS = ("bt_action", "baseline")


# --- case records -------------------------------------------------------------


@dataclass(frozen=True)
class CaseRecord:
    """One evaluation case: an instruction, its gold category, and the data
    needed to both replay it (scripted followups) and score it (gold task or
    gold sequence, expected infeasibility reason, candidate routing)."""

    id: str
    category: Verdict
    instruction: str
    expected_behavior: str
    provenance: str
    scripted_followups: tuple[str, ...] = ()
    gold_task: Optional[str] = None
    gold_sequence: Optional[TaskSequence] = None
    candidate_tasks: tuple[str, ...] = ()
    near_task: Optional[str] = None
    infeasible_reason: Optional[str] = None


def default_cases_path() -> Path:
    return packaged_data_dir() / "cases.json"


def _require_str(record: dict, key: str, where: str) -> str:
    value = record.get(key)
    if not isinstance(value, str) or not value.strip():
        raise EvalError(f"{where}: field {key!r} must be a non-empty string")
    return value


def _optional_str_list(record: dict, key: str, where: str) -> tuple[str, ...]:
    value = record.get(key, [])
    if not isinstance(value, list) or any(not isinstance(v, str) or not v.strip() for v in value):
        raise EvalError(f"{where}: field {key!r} must be a list of non-empty strings")
    return tuple(value)


def load_cases(path: Union[str, Path]) -> list[CaseRecord]:
    """Parse and validate the case dataset; every violation names the case."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise EvalError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, list):
        raise EvalError(f"{path}: top level must be a JSON array of cases")
    if not data:
        raise EvalError(f"{path}: case file contains no cases")

    cases: list[CaseRecord] = []
    seen_ids: set[str] = set()
    for index, record in enumerate(data):
        where = f"{path}: case #{index}"
        if not isinstance(record, dict):
            raise EvalError(f"{where}: each case must be a JSON object")
        case_id = _require_str(record, "id", where)
        where = f"{path}: case {case_id!r}"
        if case_id in seen_ids:
            raise EvalError(f"{where}: duplicate case id {case_id!r}")
        seen_ids.add(case_id)

        category_raw = _require_str(record, "category", where)
        try:
            category = Verdict(category_raw)
        except ValueError:
            raise EvalError(
                f"{where}: unknown category {category_raw!r}; expected one of "
                f"{[v.value for v in Verdict]}"
            ) from None
        instruction = _require_str(record, "instruction", where)
        expected_behavior = _require_str(record, "expected_behavior", where)
        provenance = _require_str(record, "provenance", where)
        if provenance not in PROVENANCE_LABELS:
            raise EvalError(f"{where}: provenance must be one of {PROVENANCE_LABELS}")

        followups = _optional_str_list(record, "scripted_followups", where)
        candidate_tasks = _optional_str_list(record, "candidate_tasks", where)
        gold_task = record.get("gold_task")
        if gold_task is not None and (not isinstance(gold_task, str) or not gold_task.strip()):
            raise EvalError(f"{where}: gold_task must be a non-empty string when present")
        near_task = record.get("near_task")
        if near_task is not None and (not isinstance(near_task, str) or not near_task.strip()):
            raise EvalError(f"{where}: near_task must be a non-empty string when present")
        infeasible_reason = record.get("infeasible_reason")
        if infeasible_reason is not None and not isinstance(infeasible_reason, str):
            raise EvalError(f"{where}: infeasible_reason must be a string when present")

        gold_sequence = None
        if record.get("gold_sequence") is not None:
            try:
                gold_sequence = TaskSequence.from_wire(record["gold_sequence"])
            except (TypeError, ValueError, KeyError) as exc:
                raise EvalError(f"{where}: bad gold_sequence: {exc}") from exc

        if category is Verdict.CLEAR and gold_task is None:
            raise EvalError(f"{where}: Clear cases must carry gold_task")
        if category is Verdict.AMBIGUOUS and followups and gold_task is None:
            raise EvalError(f"{where}: Ambiguous cases with followups must carry gold_task")
        if category is Verdict.MODIFICATION and gold_sequence is None:
            raise EvalError(f"{where}: Modification cases must carry gold_sequence")
        if category is Verdict.INFEASIBLE and infeasible_reason is None:
            raise EvalError(f"{where}: Infeasible cases must carry infeasible_reason")
        if candidate_tasks and category is not Verdict.AMBIGUOUS:
            raise EvalError(f"{where}: candidate_tasks is only valid on Ambiguous cases")
        if near_task and category is not Verdict.MODIFICATION:
            raise EvalError(f"{where}: near_task is only valid on Modification cases")

        cases.append(
            CaseRecord(
                id=case_id,
                category=category,
                instruction=instruction,
                expected_behavior=expected_behavior,
                provenance=provenance,
                scripted_followups=followups,
                gold_task=gold_task,
                gold_sequence=gold_sequence,
                candidate_tasks=candidate_tasks,
                near_task=near_task,
                infeasible_reason=infeasible_reason,
            )
        )
    return cases


# --- canonical scripted backends ----------------------------------------------


def _block(u: str) -> str:
    """The delimited embedding of the current turn's instruction; matching on
    it keys a rule to one specific turn, never to a history mention."""
    return f"<<<\n{u}\n>>>"


def _letter_map(config: AppConfig) -> dict[str, str]:
    _, by_letter = render_candidate_menu(config.library)
    return {normalize_name(name): letter for letter, name in by_letter.items()}


def _task_menu_text(config: AppConfig) -> str:
    names = config.library.names()
    if len(names) == 1:
        return names[0]
    return ", ".join(names[:-1]) + f" or {names[-1]}"


def _letter_for(task: Optional[str], letters: dict[str, str], case_id: str) -> str:
    if task is None or normalize_name(task) not in letters:
        raise EvalError(f"case {case_id!r}: task {task!r} is not in the configured library")
    return letters[normalize_name(task)]


def _bt_case_rules(case: CaseRecord, letters: dict[str, str]) -> list[ScriptRule]:
    u = case.instruction
    rules: list[ScriptRule] = []
    if case.category is Verdict.CLEAR:
        rules += [
            ScriptRule(("AMBIGUITY CHECK", _block(u)), "False"),
            ScriptRule(("KNOWN TASK CHECK", _block(u)), "True"),
            ScriptRule(("CANDIDATE TASKS", _block(u)), _letter_for(case.gold_task, letters, case.id)),
            ScriptRule(("MAPPING CHECK", _block(u)), "True"),
        ]
    elif case.category is Verdict.AMBIGUOUS:
        if case.candidate_tasks:
            options = ", ".join(_letter_for(t, letters, case.id) for t in case.candidate_tasks)
            rules += [
                ScriptRule(("AMBIGUITY CHECK", _block(u)), "False"),
                ScriptRule(("KNOWN TASK CHECK", _block(u)), "True"),
                ScriptRule(("CANDIDATE TASKS", _block(u)), options),
            ]
        else:
            rules.append(ScriptRule(("AMBIGUITY CHECK", _block(u)), "True"))
        for followup in case.scripted_followups:
            rules += [
                ScriptRule(("AMBIGUITY CHECK", _block(followup)), "False"),
                ScriptRule(("KNOWN TASK CHECK", _block(followup)), "True"),
                ScriptRule(
                    ("CANDIDATE TASKS", _block(followup)),
                    _letter_for(case.gold_task, letters, case.id),
                ),
                ScriptRule(("MAPPING CHECK", _block(followup)), "True"),
            ]
    elif case.category is Verdict.MODIFICATION:
        rules.append(ScriptRule(("AMBIGUITY CHECK", _block(u)), "False"))
        if case.near_task:
            rules += [
                ScriptRule(("KNOWN TASK CHECK", _block(u)), "True"),
                ScriptRule(("CANDIDATE TASKS", _block(u)), _letter_for(case.near_task, letters, case.id)),
                ScriptRule(("MAPPING CHECK", _block(u)), "False"),
            ]
        else:
            rules += [
                ScriptRule(("KNOWN TASK CHECK", _block(u)), "False"),
                ScriptRule(("SAFETY CHECK", _block(u)), "FEASIBLE"),
            ]
        rules.append(
            ScriptRule(
                ("SEQUENCE GENERATION", _block(u)),
                json.dumps(case.gold_sequence.to_wire()),
            )
        )
        # Only the case's scripted agreement texts count as a yes; the
        # history encoding never uses the <<< >>> markers, so these keys
        # match the confirmation reply itself, not an echo of it.
        rules += [
            ScriptRule(("YES/NO INTERPRETATION", _block(followup)), "True")
            for followup in case.scripted_followups
        ]
    else:  # Infeasible
        rules += [
            ScriptRule(("AMBIGUITY CHECK", _block(u)), "False"),
            ScriptRule(("KNOWN TASK CHECK", _block(u)), "False"),
            ScriptRule(("SAFETY CHECK", _block(u)), f"INFEASIBLE: {case.infeasible_reason}"),
            ScriptRule(
                ("INFEASIBILITY EXPLANATION", _block(u)),
                f"I'm sorry, but I can't do that: {case.infeasible_reason}.",
            ),
        ]
    return rules


def _baseline_case_rules(case: CaseRecord, menu: str) -> list[ScriptRule]:
    # rules for later turns come first: a followup's text appears in the
    # joined messages only once that turn happens, while the instruction also
    # shows up in every later turn's history
    u = case.instruction
    if case.category is Verdict.CLEAR:
        return [
            ScriptRule(
                ("KITCHEN ASSISTANT", u),
                f"Great choice! I'll get started on the {case.gold_task} right away.",
            )
        ]
    if case.category is Verdict.AMBIGUOUS:
        rules = [
            ScriptRule(
                ("KITCHEN ASSISTANT", followup),
                f"Great choice! I'll get started on the {case.gold_task} right away.",
            )
            for followup in case.scripted_followups
        ]
        rules.append(
            ScriptRule(
                ("KITCHEN ASSISTANT", u),
                f"I can make {menu}. Could you be more specific about which one you'd like?",
            )
        )
        return rules
    if case.category is Verdict.MODIFICATION:
        rules = [
            ScriptRule(("KITCHEN ASSISTANT", followup), "Great, I'll get started right away.")
            for followup in case.scripted_followups
        ]
        wire = json.dumps(case.gold_sequence.to_wire(), indent=2)
        rules.append(
            ScriptRule(
                ("KITCHEN ASSISTANT", u),
                f"Here is the adapted plan:\n```json\n{wire}\n```\nDoes this sound good to you?",
            )
        )
        return rules
    return [
        ScriptRule(
            ("KITCHEN ASSISTANT", u),
            f"I'm sorry, but I can't do that — {case.infeasible_reason}.",
        )
    ]


def build_canonical_backend(
    system: str, cases: list[CaseRecord], config: AppConfig
) -> ScriptedBackend:
    """A scripted backend answering every prompt of every case from the gold
    labels. Replaying the suite against it checks the pipeline, not a model."""
    if system not in SYSTEMS:
        raise ValueError(f"unknown system {system!r}; expected one of {SYSTEMS}")
    menu = _task_menu_text(config)
    rules: list[ScriptRule] = []
    if system == "bt_action":
        letters = _letter_map(config)
        for case in cases:
            rules.extend(_bt_case_rules(case, letters))
        rules += [
            ScriptRule(
                ("FOLLOW-UP QUESTION",),
                f"I can make {menu}. Would you like one of those, or do you have "
                "something else in mind?",
            ),
            ScriptRule(
                ("CONFIRMATION SUMMARY",),
                "I've put together the adjusted steps for your request. "
                "Does this sound good to you?",
            ),
            ScriptRule(("YES/NO INTERPRETATION",), "False"),
        ]
        rules += [
            ScriptRule(
                ("EXECUTION ACKNOWLEDGMENT", f"known task: {name}"),
                f"I'll get started on the task for a {name}.",
            )
            for name in config.library.names()
        ]
        rules.append(
            ScriptRule(("EXECUTION ACKNOWLEDGMENT",), "I'll get started on the task right away.")
        )
        return ScriptedBackend(rules=rules, catch_all="I am not sure.")

    for case in cases:
        rules.extend(_baseline_case_rules(case, menu))
    return ScriptedBackend(rules=rules, catch_all="Okay.")


# --- transcripts ----------------------------------------------------------------


@dataclass(frozen=True)
class TurnRecord:
    """One exchange as seen by the harness."""

    user_text: str
    reply_text: str
    reply_kind: str
    executed_delta: tuple[ExecutedEntry, ...] = ()
    json_block: Optional[str] = None
    calls: int = 0
    elapsed_s: float = 0.0


@dataclass(frozen=True)
class EvalTranscript:
    """A whole replayed case: the turns plus the session's final task names
    (needed to score texts that legitimately mention learned tasks)."""

    system: str
    case_id: str
    turns: tuple[TurnRecord, ...]
    final_library_names: tuple[str, ...]
    observed_category: Optional[str]


_KIND_TO_CATEGORY = {
    ReplyKind.ACKNOWLEDGMENT.value: Verdict.CLEAR.value,
    ReplyKind.CLARIFICATION_QUESTION.value: Verdict.AMBIGUOUS.value,
    ReplyKind.CONFIRMATION_REQUEST.value: Verdict.MODIFICATION.value,
    ReplyKind.INFEASIBILITY_EXPLANATION.value: Verdict.INFEASIBLE.value,
}


def _observe_category(system: str, turns: list[TurnRecord]) -> Optional[str]:
    """The category the tree system expressed on the first turn, read off the
    reply kind; the baseline never reports one."""
    if system != "bt_action" or not turns:
        return None
    return _KIND_TO_CATEGORY.get(turns[0].reply_kind)


# --- error taxonomy -------------------------------------------------------------


class TaxonomyKind(str, Enum):
    LIE_HALLUCINATION = "lie_hallucination"
    FAULTY_JSON = "faulty_json"
    FALSE_EXECUTION = "false_execution"
    UNNECESSARY_JSON = "unnecessary_json"
    PRESUMPTIVE_EXECUTION = "presumptive_execution"
    MISCLASSIFICATION = "misclassification"


@dataclass(frozen=True)
class TaxonomyError:
    kind: TaxonomyKind
    evidence: str

    def to_wire(self) -> dict:
        return {"kind": self.kind.value, "evidence": self.evidence}


_COMMENCEMENT_MARKERS = (
    "get started",
    "getting started",
    "i'll start",
    "i will start",
    "commence",
    "right away",
    "coming right up",
    "underway",
)

_NEGATION_MARKERS = (
    "can't",
    "cannot",
    "unable",
    "not able",
    "don't have",
    "do not have",
    "not available",
    "sorry",
    "lack",
    "won't",
    "will not",
)

# Foods a kitchen model might plausibly offer that this kitchen does not
# stock. The hallucination check is lexical: in-domain names are masked out
# of the reply first, then any remaining term from this list counts as an
# offer of something unavailable. Approximate by design.
_OUT_OF_DOMAIN_FOODS = (
    "goat cheese",
    "orange juice",
    "ice cream",
    "omelette",
    "omelet",
    "cheddar",
    "mozzarella",
    "parmesan",
    "cheese",
    "butter",
    "sausage",
    "salami",
    "bagel",
    "croissant",
    "waffles",
    "waffle",
    "yogurt",
    "oatmeal",
    "porridge",
    "cereal",
    "muffin",
    "donut",
    "doughnut",
    "steak",
    "salmon",
    "tuna",
    "avocado",
    "tomato",
    "onion",
    "garlic",
    "mushroom",
    "chocolate",
    "honey",
    "cream",
    "milk",
    "coffee",
    "banana",
    "apple",
    "strawberries",
    "strawberry",
)


def _has_commencement(text: str) -> bool:
    lowered = text.lower()
    return any(marker in lowered for marker in _COMMENCEMENT_MARKERS)


def _has_negation(text: str) -> bool:
    lowered = text.lower()
    return any(marker in lowered for marker in _NEGATION_MARKERS)


def _mask_terms(text: str, terms: list[str]) -> str:
    masked = text.lower()
    for term in sorted(terms, key=len, reverse=True):
        masked = re.sub(rf"\b{re.escape(term.lower())}\b", " ", masked)
    return masked


def _hallucinated_terms(text: str, in_domain: list[str]) -> list[str]:
    masked = _mask_terms(text, in_domain)
    hits = []
    for term in sorted(_OUT_OF_DOMAIN_FOODS, key=len, reverse=True):
        if re.search(rf"\b{re.escape(term)}\b", masked):
            hits.append(term)
            masked = re.sub(rf"\b{re.escape(term)}\b", " ", masked)
    return hits


def detect_taxonomy_errors(
    transcript: EvalTranscript, case: CaseRecord, config: AppConfig
) -> list[TaxonomyError]:
    """Automated scoring of the six error kinds over one replayed case.

    The JSON checks run over JSON found in reply text; the execution checks
    run over the session's executed log (tree system) or, for the baseline's
    presumptive-execution check, over commencement phrasing, since the
    baseline has no executed log. The hallucination check is a lexical
    cross-reference against the inventory and task names.
    """
    errors: list[TaxonomyError] = []
    gold = case.category.value

    for index, turn in enumerate(transcript.turns):
        if turn.json_block is None:
            continue
        report, sequence = check_new_seq(turn.json_block, config.catalog, config.inventory)
        if sequence is None:
            first = report.diagnostics[0].detail if report.diagnostics else "invalid"
            errors.append(
                TaxonomyError(
                    TaxonomyKind.FAULTY_JSON,
                    f"turn {index}: emitted JSON fails validation: {first}",
                )
            )
        if gold != Verdict.MODIFICATION.value:
            errors.append(
                TaxonomyError(
                    TaxonomyKind.UNNECESSARY_JSON,
                    f"turn {index}: JSON emitted on a {gold} case",
                )
            )

    if transcript.system == "bt_action" and transcript.observed_category != gold:
        observed = transcript.observed_category or "no classification"
        errors.append(
            TaxonomyError(
                TaxonomyKind.MISCLASSIFICATION,
                f"first turn expressed {observed}, expected {gold}",
            )
        )

    executions = [
        (index, entry)
        for index, turn in enumerate(transcript.turns)
        for entry in turn.executed_delta
    ]
    if gold == Verdict.INFEASIBLE.value:
        for index, entry in executions:
            errors.append(
                TaxonomyError(
                    TaxonomyKind.FALSE_EXECUTION,
                    f"turn {index}: executed {entry.sequence.task_name!r} on an infeasible request",
                )
            )
    elif gold == Verdict.MODIFICATION.value and case.gold_sequence is not None:
        for index, entry in executions:
            if entry.sequence.steps != case.gold_sequence.steps:
                errors.append(
                    TaxonomyError(
                        TaxonomyKind.FALSE_EXECUTION,
                        f"turn {index}: executed steps differ from the expected adapted sequence",
                    )
                )
    elif case.gold_task is not None:
        for index, entry in executions:
            if normalize_name(entry.sequence.task_name) != normalize_name(case.gold_task):
                errors.append(
                    TaxonomyError(
                        TaxonomyKind.FALSE_EXECUTION,
                        f"turn {index}: executed {entry.sequence.task_name!r}, "
                        f"expected {case.gold_task!r}",
                    )
                )

    if gold == Verdict.AMBIGUOUS.value:
        clarified = False
        for index, turn in enumerate(transcript.turns):
            if not clarified:
                if transcript.system == "bt_action":
                    presumed = bool(turn.executed_delta)
                else:
                    presumed = turn.json_block is not None or _has_commencement(turn.reply_text)
                if presumed:
                    errors.append(
                        TaxonomyError(
                            TaxonomyKind.PRESUMPTIVE_EXECUTION,
                            f"turn {index}: acted on the ambiguous request before any clarification",
                        )
                    )
                    break
            if turn.reply_kind == ReplyKind.CLARIFICATION_QUESTION.value or (
                transcript.system == "baseline" and "?" in turn.reply_text
            ):
                clarified = True

    in_domain = (
        list(transcript.final_library_names)
        + list(config.inventory.names())
        + list(config.catalog.names())
        + [name.replace("_", " ") for name in config.catalog.names()]
    )
    for index, turn in enumerate(transcript.turns):
        if turn.reply_kind == ReplyKind.INFEASIBILITY_EXPLANATION.value:
            continue
        if _has_negation(turn.reply_text):
            continue
        for term in _hallucinated_terms(turn.reply_text, in_domain):
            errors.append(
                TaxonomyError(
                    TaxonomyKind.LIE_HALLUCINATION,
                    f"turn {index}: offers {term!r}, which is not available here",
                )
            )
    return errors


# --- replay and scoring ----------------------------------------------------------


@dataclass(frozen=True)
class CaseResult:
    case_id: str
    category: str
    provenance: str
    passed: bool
    observed_category: Optional[str]
    errors: tuple[TaxonomyError, ...]
    turn_count: int
    turn_elapsed_s: tuple[float, ...]
    turn_calls: tuple[int, ...]
    started_at: float
    finished_at: float
    note: str = ""
    transcript: Optional[EvalTranscript] = None

    def to_wire(self) -> dict:
        return {
            "id": self.case_id,
            "category": self.category,
            "provenance": self.provenance,
            "passed": self.passed,
            "observed_category": self.observed_category,
            "errors": [error.to_wire() for error in self.errors],
            "turn_count": self.turn_count,
            "turn_elapsed_s": list(self.turn_elapsed_s),
            "turn_calls": list(self.turn_calls),
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "note": self.note,
        }


@dataclass(frozen=True)
class RunReport:
    system: str
    results: tuple[CaseResult, ...]
    started_at: float
    finished_at: float

    @property
    def total(self) -> int:
        return len(self.results)

    @property
    def passed_count(self) -> int:
        return sum(1 for result in self.results if result.passed)

    def by_category(self) -> dict[str, tuple[int, int]]:
        table: dict[str, tuple[int, int]] = {}
        for verdict in Verdict:
            rows = [r for r in self.results if r.category == verdict.value]
            if rows:
                table[verdict.value] = (sum(1 for r in rows if r.passed), len(rows))
        return table

    def taxonomy_histogram(self) -> dict[str, int]:
        histogram = {kind.value: 0 for kind in TaxonomyKind}
        for result in self.results:
            for error in result.errors:
                histogram[error.kind.value] += 1
        return histogram

    def to_wire(self) -> dict:
        return {
            "schema_version": 1,
            "system": self.system,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "total": self.total,
            "passed": self.passed_count,
            "by_category": {
                category: {"passed": passed, "total": total}
                for category, (passed, total) in self.by_category().items()
            },
            "taxonomy": self.taxonomy_histogram(),
            "cases": [result.to_wire() for result in self.results],
        }


def _replay_case(
    system: str,
    case: CaseRecord,
    backend: LlmBackend,
    config: AppConfig,
    prompts: Optional[PromptLibrary],
) -> tuple[EvalTranscript, list[TurnRecord]]:
    if system == "bt_action":
        session = Session(config, backend, prompts=prompts)
        step: Callable = run_turn
    else:
        session = BaselineSession(config, backend, prompts=prompts)
        step = baseline_turn

    turns: list[TurnRecord] = []
    followups = deque(case.scripted_followups)
    user_text = case.instruction
    while True:
        executed_before = len(session.executed)
        turn_start = time.monotonic()
        reply = step(session, user_text)
        elapsed = time.monotonic() - turn_start
        turns.append(
            TurnRecord(
                user_text=user_text,
                reply_text=reply.text,
                reply_kind=reply.kind.value,
                executed_delta=tuple(session.executed[executed_before:]),
                json_block=extract_json_block(reply.text),
                calls=session.backend.calls,
                elapsed_s=elapsed,
            )
        )
        if not followups:
            break
        if system == "bt_action" and reply.kind not in (
            ReplyKind.CLARIFICATION_QUESTION,
            ReplyKind.CONFIRMATION_REQUEST,
        ):
            break
        user_text = followups.popleft()

    transcript = EvalTranscript(
        system=system,
        case_id=case.id,
        turns=tuple(turns),
        final_library_names=tuple(session.session_library.names()),
        observed_category=_observe_category(system, turns),
    )
    return transcript, turns


def _bt_case_passed(case: CaseRecord, transcript: EvalTranscript) -> bool:
    if transcript.observed_category != case.category.value:
        return False
    executions = [entry for turn in transcript.turns for entry in turn.executed_delta]
    if case.category is Verdict.CLEAR:
        return (
            len(executions) == 1
            and executions[0].provenance == "known"
            and normalize_name(executions[0].sequence.task_name) == normalize_name(case.gold_task)
        )
    if case.category is Verdict.AMBIGUOUS:
        if transcript.turns[0].executed_delta:
            return False
        if case.gold_task is None:
            return not executions
        return (
            len(executions) == 1
            and normalize_name(executions[0].sequence.task_name) == normalize_name(case.gold_task)
        )
    if case.category is Verdict.MODIFICATION:
        return (
            len(executions) == 1
            and executions[0].provenance == "generated_confirmed"
            and executions[0].sequence.steps == case.gold_sequence.steps
        )
    return not executions


def _baseline_case_passed(
    case: CaseRecord, transcript: EvalTranscript, config: AppConfig
) -> bool:
    first = transcript.turns[0]
    last = transcript.turns[-1]
    if case.category is Verdict.CLEAR:
        return _has_commencement(first.reply_text) and first.json_block is None
    if case.category is Verdict.AMBIGUOUS:
        asked = (
            "?" in first.reply_text
            and not _has_commencement(first.reply_text)
            and first.json_block is None
        )
        if case.scripted_followups:
            return asked and len(transcript.turns) > 1 and _has_commencement(last.reply_text)
        return asked
    if case.category is Verdict.MODIFICATION:
        if first.json_block is None or "?" not in first.reply_text:
            return False
        _, sequence = check_new_seq(first.json_block, config.catalog, config.inventory)
        return sequence is not None
    return (
        first.json_block is None
        and not _has_commencement(first.reply_text)
        and _has_negation(first.reply_text)
    )


def run_suite(
    system: str,
    cases: list[CaseRecord],
    backend: LlmBackend,
    config: AppConfig,
    prompts: Optional[PromptLibrary] = None,
) -> RunReport:
    """Replay every case through a fresh session; a case failure never aborts
    the suite."""
    if system not in SYSTEMS:
        raise ValueError(f"unknown system {system!r}; expected one of {SYSTEMS}")
    if not cases:
        raise EvalError("cannot run an empty case suite")

    suite_started = time.time()
    results: list[CaseResult] = []
    for case in cases:
        case_started = time.time()
        try:
            transcript, turns = _replay_case(system, case, backend, config, prompts)
            errors = tuple(detect_taxonomy_errors(transcript, case, config))
            if errors:
                passed = False
            elif system == "bt_action":
                passed = _bt_case_passed(case, transcript)
            else:
                passed = _baseline_case_passed(case, transcript, config)
            results.append(
                CaseResult(
                    case_id=case.id,
                    category=case.category.value,
                    provenance=case.provenance,
                    passed=passed,
                    observed_category=transcript.observed_category,
                    errors=errors,
                    turn_count=len(turns),
                    turn_elapsed_s=tuple(turn.elapsed_s for turn in turns),
                    turn_calls=tuple(turn.calls for turn in turns),
                    started_at=case_started,
                    finished_at=time.time(),
                    transcript=transcript,
                )
            )
        except Exception as exc:  # the suite must survive any single case
            results.append(
                CaseResult(
                    case_id=case.id,
                    category=case.category.value,
                    provenance=case.provenance,
                    passed=False,
                    observed_category=None,
                    errors=(),
                    turn_count=0,
                    turn_elapsed_s=(),
                    turn_calls=(),
                    started_at=case_started,
                    finished_at=time.time(),
                    note=f"harness error: {exc!r}",
                )
            )
    return RunReport(
        system=system,
        results=tuple(results),
        started_at=suite_started,
        finished_at=time.time(),
    )


# --- reporting -------------------------------------------------------------------


def emit_report(report: RunReport, format: str = "human") -> str:
    if format == "json":
        return json.dumps(report.to_wire(), indent=2, sort_keys=True) + "\n"
    if format != "human":
        raise ValueError(f"unknown report format {format!r}; expected 'human' or 'json'")

    lines = [f"evaluation report — system: {report.system}"]
    for result in report.results:
        status = "PASS" if result.passed else "FAIL"
        line = (
            f"  [{status}] {result.case_id:<10} {result.category:<13} "
            f"turns={result.turn_count}"
        )
        if result.note:
            line += f"  ({result.note})"
        lines.append(line)
        for error in result.errors:
            lines.append(f"           - {error.kind.value}: {error.evidence}")
    lines.append("category results:")
    for category, (passed, total) in report.by_category().items():
        lines.append(f"  {category:<13} {passed}/{total}")
    lines.append("error taxonomy:")
    for kind, count in report.taxonomy_histogram().items():
        lines.append(f"  {kind:<22} {count}")
    elapsed = report.finished_at - report.started_at
    lines.append(f"{report.passed_count}/{report.total} cases passed in {elapsed:.2f}s")
    return "\n".join(lines) + "\n"


# --- golden tick traces ------------------------------------------------------
# The four canonical-example cases each exercise one branch of the tree; their
# first-turn traces are frozen to a checked-in file so any change to tree
# shape, tick order, or leaf routing shows up as a byte-level diff.


def default_golden_path() -> Path:
    return packaged_data_dir() / "golden_traces.json"


def golden_trace_document(cases: list[CaseRecord], config: AppConfig) -> dict:
    """First-turn tick trace of every canonical-example case, keyed by id."""
    backend = build_canonical_backend("bt_action", cases, config)
    document: dict[str, list] = {}
    for case in cases:
        if case.provenance != "canonical-example":
            continue
        session = Session(config, backend)
        run_turn(session, case.instruction)
        document[case.id] = session.traces[0].to_wire()
    return document


def render_golden_document(document: dict) -> str:
    """The canonical byte representation used for both blessing and comparing."""
    return json.dumps(document, indent=2, sort_keys=True) + "\n"
