"""Generic behavior-tree interpreter: node kinds, tick semantics, a typed
blackboard, and per-tick trace recording.

The engine knows nothing about language models or kitchens. All state flows
through the blackboard; the engine itself is stateless between ticks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping, Optional, Sequence as Seq, Union


class NodeStatus(str, Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"
    RUNNING = "Running"


class TreeError(Exception):
    """Structural problem in a tree description."""


class BlackboardMiss(KeyError):
    """Read of a key that no node has written this tick."""


class Blackboard:
    """Typed key/value store shared by the nodes of one tick.

    The schema fixes which keys exist and which type each may hold; writes
    outside the schema or with a wrong type are programming errors and raise
    immediately. Reads of absent keys raise BlackboardMiss — there are no
    silent defaults.
    """

    def __init__(self, schema: Mapping[str, type | tuple[type, ...]]) -> None:
        if not schema:
            raise ValueError("blackboard schema must not be empty")
        self._schema = dict(schema)
        self._entries: dict[str, Any] = {}

    def set(self, key: str, value: Any) -> None:
        if key not in self._schema:
            raise KeyError(f"key {key!r} not in blackboard schema")
        expected = self._schema[key]
        if not isinstance(value, expected):
            raise TypeError(
                f"blackboard key {key!r} expects {expected}, got {type(value).__name__}"
            )
        self._entries[key] = value

    def get(self, key: str) -> Any:
        if key not in self._entries:
            raise BlackboardMiss(key)
        return self._entries[key]

    def has(self, key: str) -> bool:
        return key in self._entries

    def snapshot(self) -> dict[str, Any]:
        return dict(self._entries)


@dataclass(frozen=True)
class Condition:
    name: str
    predicate: Callable[[Blackboard], bool]


@dataclass(frozen=True)
class Action:
    name: str
    effect: Callable[[Blackboard], Optional[NodeStatus]]


@dataclass(frozen=True)
class Selector:
    name: str
    children: tuple["Node", ...]


@dataclass(frozen=True)
class Sequence:
    name: str
    children: tuple["Node", ...]


Node = Union[Condition, Action, Selector, Sequence]


@dataclass(frozen=True)
class TraceEvent:
    node: str
    order: int
    status: NodeStatus
    error: Optional[str] = None


@dataclass
class TickTrace:
    events: list[TraceEvent] = field(default_factory=list)

    def to_wire(self) -> list[dict]:
        return [
            {"node": e.node, "order": e.order, "status": e.status.value}
            for e in self.events
        ]

    def visited(self) -> list[str]:
        return [e.node for e in self.events]

    def status_of(self, node: str) -> NodeStatus:
        for e in self.events:
            if e.node == node:
                return e.status
        raise KeyError(node)


def _walk(node: Node):
    yield node
    if isinstance(node, (Selector, Sequence)):
        for child in node.children:
            yield from _walk(child)


@dataclass(frozen=True)
class TreeSpec:
    root: Node

    def __post_init__(self) -> None:
        names: set[str] = set()
        has_leaf = False
        for node in _walk(self.root):
            if node.name in names:
                raise TreeError(f"duplicate node name {node.name!r}")
            names.add(node.name)
            if isinstance(node, (Selector, Sequence)):
                if not node.children:
                    raise TreeError(f"empty composite {node.name!r}")
            else:
                has_leaf = True
        if not has_leaf:
            raise TreeError("tree has no leaves")

    def node_names(self) -> list[str]:
        return [n.name for n in _walk(self.root)]


def tick(tree: TreeSpec, board: Blackboard) -> tuple[NodeStatus, TickTrace]:
    """One depth-first, left-to-right pass from the root.

    Selector returns its first child Success (short-circuit); Sequence returns
    its first child Failure. A leaf that raises becomes Failure with the error
    kept on the trace event (the wire form carries only node/order/status).
    """
    events: list[TraceEvent] = []
    counter = 0

    def visit(node: Node) -> NodeStatus:
        nonlocal counter
        order = counter
        counter += 1
        error: Optional[str] = None

        if isinstance(node, Condition):
            try:
                status = NodeStatus.SUCCESS if node.predicate(board) else NodeStatus.FAILURE
            except Exception as exc:  # noqa: BLE001 - leaf faults degrade, never abort
                status = NodeStatus.FAILURE
                error = f"{type(exc).__name__}: {exc}"
        elif isinstance(node, Action):
            try:
                result = node.effect(board)
                status = NodeStatus.SUCCESS if result is None else result
            except Exception as exc:  # noqa: BLE001
                status = NodeStatus.FAILURE
                error = f"{type(exc).__name__}: {exc}"
        elif isinstance(node, Selector):
            status = NodeStatus.FAILURE
            for child in node.children:
                child_status = visit(child)
                if child_status in (NodeStatus.SUCCESS, NodeStatus.RUNNING):
                    status = child_status
                    break
        else:  # Sequence
            status = NodeStatus.SUCCESS
            for child in node.children:
                child_status = visit(child)
                if child_status in (NodeStatus.FAILURE, NodeStatus.RUNNING):
                    status = child_status
                    break

        events.append(TraceEvent(node=node.name, order=order, status=status, error=error))
        return status

    root_status = visit(tree.root)
    events.sort(key=lambda e: e.order)
    return root_status, TickTrace(events=events)


LeafRegistry = Mapping[str, Callable]


def build_tree(description: Mapping, registry: LeafRegistry) -> TreeSpec:
    """Construct a validated TreeSpec from a declarative description.

    The description is nested objects: {"kind", "name", "children"} for
    composites, {"kind", "name"} for leaves whose callable is looked up in the
    registry by node name (or an explicit "ref").
    """

    def parse(desc: Mapping) -> Node:
        try:
            kind = desc["kind"]
            name = desc["name"]
        except (KeyError, TypeError) as exc:
            raise TreeError(f"node description missing kind/name: {desc!r}") from exc
        if kind in ("selector", "sequence"):
            children = tuple(parse(child) for child in desc.get("children", []))
            return (Selector if kind == "selector" else Sequence)(name=name, children=children)
        if kind in ("condition", "action"):
            ref = desc.get("ref", name)
            if ref not in registry:
                raise TreeError(f"no callable registered for leaf {ref!r}")
            fn = registry[ref]
            return Condition(name=name, predicate=fn) if kind == "condition" else Action(
                name=name, effect=fn
            )
        raise TreeError(f"unknown node kind {kind!r}")

    return TreeSpec(root=parse(description))


def walk(tree: TreeSpec) -> list[Node]:
    return list(_walk(tree.root))
