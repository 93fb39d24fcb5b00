"""Configuration loading: one JSON document describes the catalog, task library,
inventory, prompt directory, backend settings, and service options.

Relative paths inside a config file resolve against the file's own directory,
so the bundled default config finds its sibling prompts/ directory wherever the
package is installed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

from .domain import (
    ActionCatalog,
    ActionSpec,
    Inventory,
    ParamKind,
    TaskLibrary,
    TaskSequence,
    validate_library,
)


class ConfigError(Exception):
    """Raised when a configuration document is malformed."""


@dataclass(frozen=True)
class BackendSettings:
    kind: str
    endpoint: Optional[str] = None
    model: Optional[str] = None
    timeout_s: float = 30.0
    retries: int = 2
    api_key_env: str = "TASKTREE_API_KEY"

    def __post_init__(self) -> None:
        if self.kind not in ("scripted", "remote"):
            raise ConfigError(f"backend.kind must be 'scripted' or 'remote', got {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ConfigError("backend.kind 'remote' requires backend.endpoint")
        if self.retries < 0:
            raise ConfigError("backend.retries must be >= 0")
        if self.timeout_s <= 0:
            raise ConfigError("backend.timeout_s must be positive")


@dataclass(frozen=True)
class AppConfig:
    catalog: ActionCatalog
    library: TaskLibrary
    inventory: Inventory
    prompts_dir: Path
    backend: BackendSettings
    max_fallback_turns: int
    bind: str


def packaged_data_dir() -> Path:
    """Directory holding the bundled config, prompts, cases, and golden traces."""
    return Path(str(resources.files("tasktree").joinpath("data")))


def default_config_path() -> Path:
    return packaged_data_dir() / "config.json"


def _parse_catalog(raw: list) -> ActionCatalog:
    specs = []
    for entry in raw:
        try:
            params = tuple((p[0], ParamKind(p[1])) for p in entry.get("params", []))
            specs.append(
                ActionSpec(
                    name=entry["name"],
                    params=params,
                    description=entry.get("description", ""),
                )
            )
        except (KeyError, ValueError, IndexError, TypeError) as exc:
            raise ConfigError(f"bad catalog entry {entry!r}: {exc}") from exc
    try:
        return ActionCatalog.from_specs(specs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_library(raw: list) -> TaskLibrary:
    try:
        tasks = tuple(TaskSequence.from_wire(entry) for entry in raw)
        return TaskLibrary(tasks=tasks)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad library: {exc}") from exc


def load_config(path: Optional[Path] = None) -> AppConfig:
    """Load and structurally validate a config document.

    Raises ConfigError on unreadable/malformed documents or a library that is
    inconsistent with its own catalog and inventory.
    """
    config_path = Path(path) if path is not None else default_config_path()
    try:
        raw = json.loads(config_path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {config_path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, Mapping):
        raise ConfigError("config document must be a JSON object")

    for key in ("catalog", "library", "inventory"):
        if key not in raw:
            raise ConfigError(f"config missing required key {key!r}")

    catalog = _parse_catalog(raw["catalog"])
    library = _parse_library(raw["library"])
    quantity_limit = raw.get("quantity_limit", 10)
    if not isinstance(quantity_limit, int) or quantity_limit < 1:
        raise ConfigError(f"quantity_limit must be a positive integer, got {quantity_limit!r}")
    inventory = Inventory(
        ingredients=frozenset(raw["inventory"]), quantity_limit=quantity_limit
    )

    problems = validate_library(catalog, library, inventory)
    if problems:
        raise ConfigError("library inconsistent with catalog/inventory: " + "; ".join(problems))

    prompts_dir = Path(raw.get("prompts_dir", "prompts"))
    if not prompts_dir.is_absolute():
        prompts_dir = config_path.parent / prompts_dir

    backend_raw = raw.get("backend", {})
    if not isinstance(backend_raw, Mapping):
        raise ConfigError("backend must be an object")
    try:
        backend = BackendSettings(
            kind=backend_raw.get("kind", "scripted"),
            endpoint=backend_raw.get("endpoint"),
            model=backend_raw.get("model"),
            timeout_s=backend_raw.get("timeout_s", 30),
            retries=backend_raw.get("retries", 2),
            api_key_env=backend_raw.get("api_key_env", "TASKTREE_API_KEY"),
        )
    except TypeError as exc:
        raise ConfigError(f"bad backend settings: {exc}") from exc

    max_fallback_turns = raw.get("max_fallback_turns", 10)
    if not isinstance(max_fallback_turns, int) or max_fallback_turns < 1:
        raise ConfigError("max_fallback_turns must be a positive integer")

    bind = raw.get("bind", "127.0.0.1:8080")
    if not isinstance(bind, str) or ":" not in bind:
        raise ConfigError("bind must be a 'host:port' string")

    return AppConfig(
        catalog=catalog,
        library=library,
        inventory=inventory,
        prompts_dir=prompts_dir,
        backend=backend,
        max_fallback_turns=max_fallback_turns,
        bind=bind,
    )
