"""Shared vocabulary of the kitchen assistant: actions, tasks, ingredients,
utterances, classifications, and the pure validation logic over them.

Everything here is an immutable value; mutation happens by constructing new
values. The conversation history is the one session-owned container and is
append-only.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping, Optional, Sequence

ArgValue = str | int

DEFAULT_QUANTITY_LIMIT = 10


def normalize_name(name: str) -> str:
    """Lowercase and collapse surrounding/inner whitespace (LLM casing is unstable)."""
    return " ".join(name.strip().lower().split())


class ParamKind(str, Enum):
    INGREDIENT = "ingredient"
    QUANTITY = "quantity"
    FREE_TEXT = "free_text"


class Verdict(str, Enum):
    CLEAR = "Clear"
    AMBIGUOUS = "Ambiguous"
    MODIFICATION = "Modification"
    INFEASIBLE = "Infeasible"


class Role(str, Enum):
    USER = "user"
    ROBOT = "robot"


class DiagnosticKind(str, Enum):
    PARSE = "parse"
    UNKNOWN_ACTION = "unknown_action"
    UNKNOWN_INGREDIENT = "unknown_ingredient"
    BAD_QUANTITY = "bad_quantity"
    ARG_MISMATCH = "arg_mismatch"
    EMPTY = "empty"


@dataclass(frozen=True)
class Diagnostic:
    kind: DiagnosticKind
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.diagnostics

    def kinds(self) -> list[DiagnosticKind]:
        return [d.kind for d in self.diagnostics]


@dataclass(frozen=True)
class ActionSpec:
    """One callable robot action: a name plus its typed parameter list."""

    name: str
    params: tuple[tuple[str, ParamKind], ...]
    description: str = ""

    def __post_init__(self) -> None:
        names = [p for p, _ in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate param name in action {self.name!r}")

    def param_names(self) -> list[str]:
        return [p for p, _ in self.params]


@dataclass(frozen=True)
class ActionCatalog:
    """The full set of valid robot actions, looked up by normalized name."""

    specs: Mapping[str, ActionSpec]

    def __post_init__(self) -> None:
        if not self.specs:
            raise ValueError("action catalog must not be empty")

    @classmethod
    def from_specs(cls, specs: Sequence[ActionSpec]) -> "ActionCatalog":
        table: dict[str, ActionSpec] = {}
        for spec in specs:
            key = normalize_name(spec.name)
            if key in table:
                raise ValueError(f"duplicate action name {spec.name!r}")
            table[key] = spec
        return cls(specs=table)

    def get(self, name: str) -> Optional[ActionSpec]:
        return self.specs.get(normalize_name(name))

    def names(self) -> list[str]:
        return list(self.specs)


@dataclass(frozen=True)
class ActionCall:
    action: str
    args: Mapping[str, ArgValue] = field(default_factory=dict)

    def to_wire(self) -> dict:
        return {"action": self.action, "args": dict(self.args)}


@dataclass(frozen=True)
class TaskSequence:
    """An ordered recipe of action calls, executed step by step."""

    task_name: str
    steps: tuple[ActionCall, ...]

    def to_wire(self) -> dict:
        return {"task_name": self.task_name, "steps": [s.to_wire() for s in self.steps]}

    @classmethod
    def from_wire(cls, payload: Mapping) -> "TaskSequence":
        steps = tuple(
            ActionCall(action=s["action"], args=dict(s.get("args", {})))
            for s in payload["steps"]
        )
        return cls(task_name=payload["task_name"], steps=steps)


@dataclass(frozen=True)
class TaskLibrary:
    """Tasks the robot already knows how to execute."""

    tasks: tuple[TaskSequence, ...]

    def __post_init__(self) -> None:
        names = [normalize_name(t.task_name) for t in self.tasks]
        if len(set(names)) != len(names):
            raise ValueError("task names must be unique within a library")

    def names(self) -> list[str]:
        return [t.task_name for t in self.tasks]

    def get(self, name: str) -> Optional[TaskSequence]:
        wanted = normalize_name(name)
        for task in self.tasks:
            if normalize_name(task.task_name) == wanted:
                return task
        return None

    def with_task(self, task: TaskSequence) -> "TaskLibrary":
        return TaskLibrary(tasks=self.tasks + (task,))

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self) -> Iterator[TaskSequence]:
        return iter(self.tasks)


@dataclass(frozen=True)
class Inventory:
    """Available ingredient names plus the per-step quantity bound."""

    ingredients: frozenset[str]
    quantity_limit: int = DEFAULT_QUANTITY_LIMIT

    def __post_init__(self) -> None:
        if self.quantity_limit < 1:
            raise ValueError("quantity_limit must be >= 1")
        normalized = frozenset(normalize_name(i) for i in self.ingredients)
        object.__setattr__(self, "ingredients", normalized)

    def has(self, name: str) -> bool:
        return normalize_name(name) in self.ingredients

    def names(self) -> list[str]:
        return sorted(self.ingredients)


@dataclass(frozen=True)
class Utterance:
    role: Role
    text: str
    turn_index: int
    timestamp: float

    def __post_init__(self) -> None:
        if self.turn_index < 0:
            raise ValueError("turn_index must be non-negative")


class ConversationHistory:
    """Append-only, role-tagged exchange record. Earlier utterances never change."""

    def __init__(self, utterances: Sequence[Utterance] = ()) -> None:
        self._utterances: list[Utterance] = []
        for utt in utterances:
            self._append(utt)

    def _append(self, utt: Utterance) -> None:
        if self._utterances and utt.turn_index <= self._utterances[-1].turn_index:
            raise ValueError("turn_index must be strictly increasing")
        self._utterances.append(utt)

    def append(self, role: Role, text: str, timestamp: Optional[float] = None) -> Utterance:
        next_index = self._utterances[-1].turn_index + 1 if self._utterances else 0
        utt = Utterance(
            role=role,
            text=text,
            turn_index=next_index,
            timestamp=time.time() if timestamp is None else timestamp,
        )
        self._utterances.append(utt)
        return utt

    @property
    def utterances(self) -> tuple[Utterance, ...]:
        return tuple(self._utterances)

    def __len__(self) -> int:
        return len(self._utterances)

    def __iter__(self) -> Iterator[Utterance]:
        return iter(self._utterances)


@dataclass(frozen=True)
class Classification:
    verdict: Verdict
    matched_task: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.verdict is Verdict.CLEAR) != (self.matched_task is not None):
            raise ValueError("matched_task is present iff the verdict is Clear")


def validate_action_call(
    call: ActionCall, catalog: ActionCatalog, inventory: Inventory
) -> ValidationReport:
    """Check one action call against the catalog and inventory.

    Never raises for bad calls; every violation becomes a diagnostic, emitted
    in a fixed order: action, args, ingredient, quantity.
    """
    spec = catalog.get(call.action)
    if spec is None:
        return ValidationReport(
            diagnostics=(
                Diagnostic(DiagnosticKind.UNKNOWN_ACTION, f"unknown action {call.action!r}"),
            )
        )

    diagnostics: list[Diagnostic] = []
    expected = spec.param_names()
    got = list(call.args)
    for missing in (p for p in expected if p not in call.args):
        diagnostics.append(
            Diagnostic(DiagnosticKind.ARG_MISMATCH, f"{spec.name}: missing arg {missing!r}")
        )
    for extra in (a for a in got if a not in expected):
        diagnostics.append(
            Diagnostic(DiagnosticKind.ARG_MISMATCH, f"{spec.name}: unexpected arg {extra!r}")
        )

    for param_name, kind in spec.params:
        if param_name not in call.args:
            continue
        value = call.args[param_name]
        if kind is ParamKind.INGREDIENT:
            if not isinstance(value, str):
                diagnostics.append(
                    Diagnostic(
                        DiagnosticKind.UNKNOWN_INGREDIENT,
                        f"{spec.name}.{param_name}: ingredient must be text, got {value!r}",
                    )
                )
            elif not inventory.has(value):
                diagnostics.append(
                    Diagnostic(
                        DiagnosticKind.UNKNOWN_INGREDIENT,
                        f"{spec.name}.{param_name}: unknown ingredient {value!r}",
                    )
                )
        elif kind is ParamKind.QUANTITY:
            if isinstance(value, bool) or not isinstance(value, int):
                diagnostics.append(
                    Diagnostic(
                        DiagnosticKind.BAD_QUANTITY,
                        f"{spec.name}.{param_name}: quantity must be an integer, got {value!r}",
                    )
                )
            elif value < 1:
                diagnostics.append(
                    Diagnostic(
                        DiagnosticKind.BAD_QUANTITY,
                        f"{spec.name}.{param_name}: quantity must be positive, got {value}",
                    )
                )
            elif value > inventory.quantity_limit:
                diagnostics.append(
                    Diagnostic(
                        DiagnosticKind.BAD_QUANTITY,
                        f"{spec.name}.{param_name}: quantity {value} exceeds limit "
                        f"{inventory.quantity_limit}",
                    )
                )
        else:
            if not isinstance(value, str):
                diagnostics.append(
                    Diagnostic(
                        DiagnosticKind.ARG_MISMATCH,
                        f"{spec.name}.{param_name}: free-text arg must be text, got {value!r}",
                    )
                )

    return ValidationReport(diagnostics=tuple(diagnostics))


def lookup_task(name: str, library: TaskLibrary) -> Optional[TaskSequence]:
    """Exact-match lookup after case/whitespace normalization; empty name never matches."""
    if not name.strip():
        return None
    return library.get(name)


def validate_library(catalog: ActionCatalog, library: TaskLibrary, inventory: Inventory) -> list[str]:
    """Library self-consistency: every step of every task must validate cleanly.

    Returns human-readable problem strings; empty means consistent.
    """
    problems: list[str] = []
    for task in library:
        if not task.steps:
            problems.append(f"task {task.task_name!r}: empty step list")
        for i, step in enumerate(task.steps):
            report = validate_action_call(step, catalog, inventory)
            for diag in report.diagnostics:
                problems.append(f"task {task.task_name!r} step {i}: {diag.detail}")
    return problems
