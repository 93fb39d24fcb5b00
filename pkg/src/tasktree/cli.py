"""Operator command line.

    tasktree chat         interactive REPL against an in-process session
    tasktree eval         replay the case suite and print the report
    tasktree validate     load a config document and print diagnostics
    tasktree trace-bless  regenerate the golden tick traces
    tasktree serve        run the HTTP session service

Exit codes: 0 success, 1 case failures, 2 configuration or usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional

from .baseline import BaselineSession, baseline_turn
from .config import AppConfig, ConfigError, default_config_path, load_config
from .evaluation import (
    SYSTEMS,
    CaseRecord,
    EvalError,
    build_canonical_backend,
    default_cases_path,
    default_golden_path,
    emit_report,
    golden_trace_document,
    load_cases,
    render_golden_document,
    run_suite,
)
from .gateway import LlmBackend, make_backend
from .orchestrator import PendingKind, Session, run_turn


def _resolve_backend(
    system: str, config: AppConfig, override: Optional[str], cases: list[CaseRecord]
) -> LlmBackend:
    """The backend a command should talk to: the configured one unless a
    --backend flag overrides its kind. Scripted means the canonical rule
    table built from the case dataset, so everything works offline."""
    kind = override or config.backend.kind
    if kind == "scripted":
        return build_canonical_backend(system, cases, config)
    settings = config.backend
    if settings.kind != kind:
        settings = dataclasses.replace(settings, kind=kind)
    return make_backend(settings)


def cmd_chat(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    cases = load_cases(args.cases or default_cases_path())
    backend = _resolve_backend(args.system, config, args.backend, cases)
    if args.system == "bt_action":
        session = Session(config, backend)
    else:
        session = BaselineSession(config, backend)
    print(f"session {session.id} ({args.system}); /quit to leave")
    while True:
        if session.pending is PendingKind.AWAITING_CONFIRMATION:
            prompt = "confirm (yes/no)> "
        else:
            prompt = "you> "
        try:
            line = input(prompt)
        except EOFError:
            print()
            return 0
        line = line.strip()
        if not line:
            continue
        if line in ("/quit", "/exit"):
            return 0
        if args.system == "bt_action":
            reply = run_turn(session, line)
        else:
            reply = baseline_turn(session, line)
        print(f"robot> {reply.text}")
        if args.verbose and session.traces and session.traces[-1].events:
            for event in session.traces[-1].events:
                print(f"  tick {event.order:>2} {event.status.value:<7} {event.node}")


def cmd_eval(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    cases = load_cases(args.cases or default_cases_path())
    systems = list(SYSTEMS) if args.system == "both" else [args.system]
    reports = []
    for system in systems:
        backend = _resolve_backend(system, config, args.backend, cases)
        reports.append(run_suite(system, cases, backend, config))
    if args.format == "json":
        combined = {report.system: report.to_wire() for report in reports}
        sys.stdout.write(json.dumps(combined, indent=2, sort_keys=True) + "\n")
    else:
        for report in reports:
            sys.stdout.write(emit_report(report, "human"))
    return 0 if all(r.passed_count == r.total for r in reports) else 1


def cmd_validate(args: argparse.Namespace) -> int:
    path = Path(args.config) if args.config else default_config_path()
    config = load_config(path)
    print(f"config {path}: OK")
    print(
        f"  {len(config.catalog.names())} actions, {len(config.library)} tasks, "
        f"{len(config.inventory.names())} ingredients, quantity limit "
        f"{config.inventory.quantity_limit}"
    )
    print(f"  backend: {config.backend.kind}; prompts: {config.prompts_dir}")
    print("0 diagnostics")
    return 0


def cmd_trace_bless(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    cases = load_cases(args.cases or default_cases_path())
    document = golden_trace_document(cases, config)
    out = Path(args.out) if args.out else default_golden_path()
    out.write_text(render_golden_document(document), encoding="utf-8")
    print(f"wrote {len(document)} golden traces to {out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        import uvicorn
    except ImportError:
        print(
            "the serve command needs uvicorn; install the 'serve' extra",
            file=sys.stderr,
        )
        return 2
    from .service import create_app

    config = load_config(args.config)
    host, _, port = config.bind.rpartition(":")
    app = create_app(config=config)
    uvicorn.run(app, host=host, port=int(port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tasktree", description="kitchen-assistant dialogue systems and tooling"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser, *, system: bool, cases: bool) -> None:
        sub.add_argument("--config", help="config document (default: bundled)")
        if system:
            sub.add_argument(
                "--backend",
                choices=("scripted", "remote"),
                help="override the configured backend kind",
            )
        if cases:
            sub.add_argument("--cases", help="case dataset (default: bundled)")

    chat = commands.add_parser("chat", help="interactive session in the terminal")
    chat.add_argument("--system", choices=SYSTEMS, default="bt_action")
    chat.add_argument("--verbose", action="store_true", help="print per-turn tick traces")
    common(chat, system=True, cases=True)
    chat.set_defaults(func=cmd_chat)

    ev = commands.add_parser("eval", help="replay the case suite and report")
    ev.add_argument("--system", choices=SYSTEMS + ("both",), default="bt_action")
    ev.add_argument("--format", choices=("human", "json"), default="human")
    common(ev, system=True, cases=True)
    ev.set_defaults(func=cmd_eval)

    validate = commands.add_parser("validate", help="check a config document")
    common(validate, system=False, cases=False)
    validate.set_defaults(func=cmd_validate)

    bless = commands.add_parser(
        "trace-bless", help="regenerate golden traces from the canonical backend"
    )
    bless.add_argument("--out", help="output file (default: bundled golden_traces.json)")
    common(bless, system=False, cases=True)
    bless.set_defaults(func=cmd_trace_bless)

    serve = commands.add_parser("serve", help="run the HTTP session service")
    common(serve, system=False, cases=False)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, EvalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print(file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
