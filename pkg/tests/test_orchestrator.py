from __future__ import annotations

import dataclasses
import json

import pytest

from tasktree.bt import NodeStatus
from tasktree.domain import Role, TaskSequence, Verdict
from tasktree.gateway import ChatMessage, GatewayTransportError, ScriptRule, ScriptedBackend
from tasktree.guards import CandidateSet
from tasktree.orchestrator import (
    DECLINE_FALLBACK_TEXT,
    RESTATE_FALLBACK_TEXT,
    RETRY_FALLBACK_TEXT,
    TERMINAL_FALLBACK_TEXT,
    PendingKind,
    ReplyKind,
    RobotReply,
    Session,
    run_turn,
)

BACON = "bacon and egg sandwich"
PANCAKES = "pancakes with maple syrup and berries"
PBJ = "peanut butter and jelly sandwich"

U_CLEAR = "Can I get the bacon and egg sandwich?"
U_AMBIGUOUS = "I am hungry, can I have something to eat?"
U_MODIFY = "Make me pancakes but without the berries and double the amount of maple syrup."
U_INFEASIBLE = "Please repaint the kitchen walls."

CLEAR_PATH = [
    "root",
    "ambiguous-subtree",
    "ambiguous-check",
    "clear-subtree",
    "known-check",
    "map-candidates",
    "candidate-routing",
    "unique-candidate",
    "single-candidate",
    "mapping-check",
    "announce-execution",
]
AMBIGUOUS_PATH = ["root", "ambiguous-subtree", "ambiguous-check", "ask-followup"]
MODIFICATION_PATH = [
    "root",
    "ambiguous-subtree",
    "ambiguous-check",
    "clear-subtree",
    "known-check",
    "modification-subtree",
    "safety-check",
    "generation-routing",
    "generate-and-confirm",
    "generate-sequence",
    "sequence-valid",
    "summarize-for-confirmation",
]
INFEASIBLE_PATH = [
    "root",
    "ambiguous-subtree",
    "ambiguous-check",
    "clear-subtree",
    "known-check",
    "modification-subtree",
    "safety-check",
    "infeasible-subtree",
    "explain-infeasible",
]


def block(u: str) -> str:
    """The embedded-instruction delimiter: matches only the turn whose current
    instruction is u, never a history line mentioning the same words."""
    return f"<<<\n{u}\n>>>"


def modified_pancakes_wire(cfg) -> dict:
    base = cfg.library.get(PANCAKES)
    steps = []
    for step in base.steps:
        args = dict(step.args)
        if args.get("ingredient") == "berries":
            continue
        if args.get("ingredient") == "maple syrup":
            args["quantity"] = args["quantity"] * 2
        steps.append({"action": step.action, "args": args})
    return {"task_name": "pancakes without berries, double syrup", "steps": steps}


def make_session(cfg, rules, catch_all="I am not sure."):
    inner = ScriptedBackend(rules=rules, catch_all=catch_all)
    session = Session(cfg, inner)
    return session, inner


def clear_rules():
    return [
        ScriptRule(("AMBIGUITY CHECK", block(U_CLEAR)), "False"),
        ScriptRule(("KNOWN TASK CHECK", block(U_CLEAR)), "True"),
        ScriptRule(("CANDIDATE TASKS", block(U_CLEAR)), "A"),
        ScriptRule(("MAPPING CHECK", block(U_CLEAR)), "True"),
        ScriptRule(
            ("EXECUTION ACKNOWLEDGMENT", f"known task: {BACON}"),
            f"I'll get started on the task for a {BACON}.",
        ),
    ]


class TestClearPath:
    def test_full_acknowledgment_turn(self, cfg):
        session, inner = make_session(cfg, clear_rules())
        reply = run_turn(session, U_CLEAR)

        assert reply.kind is ReplyKind.ACKNOWLEDGMENT
        assert reply.text == f"I'll get started on the task for a {BACON}."
        assert reply.sequence is not None and reply.sequence.task_name == BACON
        assert [e.sequence.task_name for e in session.executed] == [BACON]
        assert session.executed[0].provenance == "known"
        assert session.pending is PendingKind.NONE
        assert session.fallback_streak == 0
        assert session.turn_count == 1

    def test_trace_shape(self, cfg):
        session, _ = make_session(cfg, clear_rules())
        run_turn(session, U_CLEAR)
        trace = session.traces[0]
        assert trace.visited() == CLEAR_PATH
        assert trace.status_of("root") is NodeStatus.SUCCESS
        assert trace.status_of("ambiguous-check") is NodeStatus.FAILURE
        assert trace.status_of("ambiguous-subtree") is NodeStatus.FAILURE
        for node in CLEAR_PATH[3:]:
            assert trace.status_of(node) is NodeStatus.SUCCESS

    def test_history_grows_by_one_exchange(self, cfg):
        session, _ = make_session(cfg, clear_rules())
        run_turn(session, U_CLEAR)
        utterances = list(session.history)
        assert [u.role for u in utterances] == [Role.USER, Role.ROBOT]
        assert utterances[0].text == U_CLEAR
        assert [u.turn_index for u in utterances] == [0, 1]


class TestAmbiguousPath:
    QUESTION = (
        f"Would you like a {BACON} or {PANCAKES}? Or do you have something else in mind?"
    )

    def rules(self):
        u2 = "The pancakes, please."
        return [
            ScriptRule(("AMBIGUITY CHECK", block(U_AMBIGUOUS)), "True"),
            ScriptRule(("FOLLOW-UP QUESTION",), self.QUESTION),
            ScriptRule(("AMBIGUITY CHECK", block(u2)), "False"),
            ScriptRule(("KNOWN TASK CHECK", block(u2)), "True"),
            ScriptRule(("CANDIDATE TASKS", block(u2)), "B"),
            ScriptRule(("MAPPING CHECK", block(u2)), "True"),
            ScriptRule(
                ("EXECUTION ACKNOWLEDGMENT", f"known task: {PANCAKES}"),
                f"I'll get started on the task for a {PANCAKES}.",
            ),
        ]

    def test_followup_question_turn(self, cfg):
        session, _ = make_session(cfg, self.rules())
        reply = run_turn(session, U_AMBIGUOUS)
        assert reply.kind is ReplyKind.CLARIFICATION_QUESTION
        assert reply.text == self.QUESTION
        assert reply.sequence is None and reply.candidates is None
        assert session.pending is PendingKind.AWAITING_CLARIFICATION
        assert session.fallback_streak == 1
        assert session.traces[0].visited() == AMBIGUOUS_PATH
        assert session.executed == []

    def test_clarified_answer_resolves_to_known_task(self, cfg):
        session, _ = make_session(cfg, self.rules())
        run_turn(session, U_AMBIGUOUS)
        reply = run_turn(session, "The pancakes, please.")
        assert reply.kind is ReplyKind.ACKNOWLEDGMENT
        assert reply.sequence.task_name == PANCAKES
        assert session.pending is PendingKind.NONE
        assert session.fallback_streak == 0
        assert session.turn_count == 2
        assert len(session.traces) == 2
        assert session.traces[1].visited() == CLEAR_PATH

    def test_followup_prompt_sees_updated_history(self, cfg):
        session, inner = make_session(cfg, self.rules())
        run_turn(session, U_AMBIGUOUS)
        followups = [p for p in inner.prompts if p.startswith("FOLLOW-UP QUESTION")]
        assert len(followups) == 1
        assert U_AMBIGUOUS in followups[0]


class TestModificationPath:
    def rules(self, cfg):
        wire = modified_pancakes_wire(cfg)
        summary = (
            "I'll make pancakes with double the maple syrup and no berries. "
            "Does this sound good to you?"
        )
        return [
            ScriptRule(("AMBIGUITY CHECK", block(U_MODIFY)), "False"),
            ScriptRule(("KNOWN TASK CHECK", block(U_MODIFY)), "False"),
            ScriptRule(("SAFETY CHECK", block(U_MODIFY)), "FEASIBLE"),
            ScriptRule(("SEQUENCE GENERATION", block(U_MODIFY)), json.dumps(wire)),
            ScriptRule(("CONFIRMATION SUMMARY",), summary),
            ScriptRule(("YES/NO INTERPRETATION", "Yes, that sounds good."), "True"),
            ScriptRule(("YES/NO INTERPRETATION", "No, I changed my mind."), "False"),
            ScriptRule(
                ("EXECUTION ACKNOWLEDGMENT", "known task: pancakes (modified #1)"),
                "I'll get started on the task for a pancakes (modified #1).",
            ),
            ScriptRule(
                ("AMBIGUITY CHECK", block("Can I get the pancakes (modified #1)?")), "False"
            ),
            ScriptRule(
                ("KNOWN TASK CHECK", block("Can I get the pancakes (modified #1)?")), "True"
            ),
            ScriptRule(
                ("CANDIDATE TASKS", block("Can I get the pancakes (modified #1)?")), "D"
            ),
            ScriptRule(
                ("MAPPING CHECK", block("Can I get the pancakes (modified #1)?")), "True"
            ),
        ]

    def test_generation_turn_requests_confirmation(self, cfg):
        session, _ = make_session(cfg, self.rules(cfg))
        reply = run_turn(session, U_MODIFY)
        assert reply.kind is ReplyKind.CONFIRMATION_REQUEST
        assert reply.text.endswith("Does this sound good to you?")
        assert reply.sequence == TaskSequence.from_wire(modified_pancakes_wire(cfg))
        assert session.pending is PendingKind.AWAITING_CONFIRMATION
        assert session.pending_sequence == reply.sequence
        assert session.pending_instruction == U_MODIFY
        assert session.executed == []
        assert session.fallback_streak == 0
        assert session.traces[0].visited() == MODIFICATION_PATH

    def test_confirmation_yes_executes_and_learns(self, cfg):
        session, _ = make_session(cfg, self.rules(cfg))
        run_turn(session, U_MODIFY)
        reply = run_turn(session, "Yes, that sounds good.")
        assert reply.kind is ReplyKind.ACKNOWLEDGMENT
        assert reply.sequence.task_name == "pancakes (modified #1)"
        assert [e.provenance for e in session.executed] == ["generated_confirmed"]
        assert session.executed[0].sequence.task_name == "pancakes (modified #1)"
        # the confirmed task joins this session's library under its new name
        assert "pancakes (modified #1)" in session.session_library.names()
        assert len(session.session_library) == 4
        assert session.pending is PendingKind.NONE
        assert session.pending_sequence is None
        # a confirmation turn resolves without ticking the tree
        assert session.traces[1].events == []
        assert session.turn_count == 2

    def test_confirmed_task_is_rerequestable(self, cfg):
        session, _ = make_session(cfg, self.rules(cfg))
        run_turn(session, U_MODIFY)
        run_turn(session, "Yes, that sounds good.")
        reply = run_turn(session, "Can I get the pancakes (modified #1)?")
        assert reply.kind is ReplyKind.ACKNOWLEDGMENT
        assert reply.sequence.task_name == "pancakes (modified #1)"
        assert [e.provenance for e in session.executed] == ["generated_confirmed", "known"]
        assert session.traces[2].visited() == CLEAR_PATH

    def test_confirmation_no_declines_without_executing(self, cfg):
        session, _ = make_session(cfg, self.rules(cfg))
        run_turn(session, U_MODIFY)
        reply = run_turn(session, "No, I changed my mind.")
        assert reply.kind is ReplyKind.FALLBACK
        assert reply.text == DECLINE_FALLBACK_TEXT
        assert session.executed == []
        assert len(session.session_library) == 3
        assert session.pending is PendingKind.NONE
        assert session.pending_sequence is None
        assert session.fallback_streak == 1

    def test_unclear_confirmation_treated_as_decline(self, cfg):
        # the catch-all answers the yes/no prompt with something unparseable
        session, _ = make_session(cfg, self.rules(cfg))
        run_turn(session, U_MODIFY)
        reply = run_turn(session, "Hmm, the weather is nice today.")
        assert reply.kind is ReplyKind.FALLBACK
        assert reply.text == DECLINE_FALLBACK_TEXT
        assert session.executed == []

    def test_base_library_never_mutated(self, cfg):
        session, _ = make_session(cfg, self.rules(cfg))
        run_turn(session, U_MODIFY)
        run_turn(session, "Yes, that sounds good.")
        assert len(cfg.library) == 3
        assert "pancakes (modified #1)" not in cfg.library.names()


class TestInfeasiblePath:
    REASON = "repainting walls needs tools and capabilities the robot does not have"
    EXPLANATION = (
        "I'm sorry, but I can't repaint the kitchen walls: I lack the necessary "
        "tools and my actions are limited to preparing food."
    )

    def rules(self):
        return [
            ScriptRule(("AMBIGUITY CHECK", block(U_INFEASIBLE)), "False"),
            ScriptRule(("KNOWN TASK CHECK", block(U_INFEASIBLE)), "False"),
            ScriptRule(("SAFETY CHECK", block(U_INFEASIBLE)), f"INFEASIBLE: {self.REASON}"),
            ScriptRule(("INFEASIBILITY EXPLANATION", block(U_INFEASIBLE)), self.EXPLANATION),
        ]

    def test_infeasible_turn(self, cfg):
        session, inner = make_session(cfg, self.rules())
        reply = run_turn(session, U_INFEASIBLE)
        assert reply.kind is ReplyKind.INFEASIBILITY_EXPLANATION
        assert reply.text == self.EXPLANATION
        assert session.executed == []
        assert session.pending is PendingKind.NONE
        assert session.fallback_streak == 0
        trace = session.traces[0]
        assert trace.visited() == INFEASIBLE_PATH
        # all three guarding conditions fail on this path
        for node in ("ambiguous-check", "known-check", "safety-check"):
            assert trace.status_of(node) is NodeStatus.FAILURE
        # the explanation prompt carries the safety reason through
        explanation_prompts = [
            p for p in inner.prompts if p.startswith("INFEASIBILITY EXPLANATION")
        ]
        assert len(explanation_prompts) == 1
        assert self.REASON in explanation_prompts[0]


class TestCandidateRouting:
    def test_multiple_candidates_listed_verbatim_without_llm(self, cfg):
        u = "Can you make me a sandwich?"
        rules = [
            ScriptRule(("AMBIGUITY CHECK", block(u)), "False"),
            ScriptRule(("KNOWN TASK CHECK", block(u)), "True"),
            ScriptRule(("CANDIDATE TASKS", block(u)), "A, C"),
        ]
        session, inner = make_session(cfg, rules)
        reply = run_turn(session, u)
        assert reply.kind is ReplyKind.CLARIFICATION_QUESTION
        assert reply.text == (
            f"There are multiple options that might fit your request: {BACON} or {PBJ}. "
            "Which one would you like?"
        )
        assert reply.candidates == CandidateSet(tasks=(BACON, PBJ))
        assert session.pending is PendingKind.AWAITING_CLARIFICATION
        # the option list is produced verbatim from the candidate set, no model call
        assert not any(p.startswith("FOLLOW-UP QUESTION") for p in inner.prompts)
        trace = session.traces[0]
        assert trace.visited() == [
            "root",
            "ambiguous-subtree",
            "ambiguous-check",
            "clear-subtree",
            "known-check",
            "map-candidates",
            "candidate-routing",
            "unique-candidate",
            "single-candidate",
            "several-candidates",
            "multiple-candidates",
            "list-candidate-options",
        ]

    def test_zero_candidates_demoted_to_clarification(self, cfg):
        u = "Give me the usual."
        question = f"Could you tell me which dish you mean? I can make {BACON}, {PANCAKES} or {PBJ}."
        rules = [
            ScriptRule(("AMBIGUITY CHECK", block(u)), "False"),
            ScriptRule(("KNOWN TASK CHECK", block(u)), "True"),
            ScriptRule(("CANDIDATE TASKS", block(u)), "NONE"),
            ScriptRule(("FOLLOW-UP QUESTION",), question),
        ]
        session, _ = make_session(cfg, rules)
        reply = run_turn(session, u)
        assert reply.kind is ReplyKind.CLARIFICATION_QUESTION
        assert reply.text == question
        assert reply.candidates is None
        assert session.pending is PendingKind.AWAITING_CLARIFICATION
        trace = session.traces[0]
        assert trace.visited()[-3:] == ["no-candidates", "no-candidate", "demoted-followup"]


class TestMappingRejectReroute:
    U = "Can I get the bacon and egg sandwich but with three eggs?"

    def rules(self, cfg):
        base = cfg.library.get(BACON)
        steps = []
        for step in base.steps:
            args = dict(step.args)
            if args.get("ingredient") == "egg" and "quantity" in args:
                args["quantity"] = 3
            steps.append({"action": step.action, "args": args})
        wire = {"task_name": "bacon and egg sandwich with three eggs", "steps": steps}
        return [
            ScriptRule(("AMBIGUITY CHECK", block(self.U)), "False"),
            ScriptRule(("KNOWN TASK CHECK", block(self.U)), "True"),
            ScriptRule(("CANDIDATE TASKS", block(self.U)), "A"),
            ScriptRule(("MAPPING CHECK", block(self.U)), "False"),
            ScriptRule(("SEQUENCE GENERATION", block(self.U)), json.dumps(wire)),
            ScriptRule(
                ("CONFIRMATION SUMMARY",),
                "I'll make the sandwich with three eggs instead of one. Does this sound good to you?",
            ),
        ]

    def test_rejected_mapping_reroutes_same_tick(self, cfg):
        session, inner = make_session(cfg, self.rules(cfg))
        reply = run_turn(session, self.U)
        assert reply.kind is ReplyKind.CONFIRMATION_REQUEST
        assert reply.sequence.task_name == "bacon and egg sandwich with three eggs"
        trace = session.traces[0]
        assert trace.visited() == [
            "root",
            "ambiguous-subtree",
            "ambiguous-check",
            "clear-subtree",
            "known-check",
            "map-candidates",
            "candidate-routing",
            "unique-candidate",
            "single-candidate",
            "mapping-check",
            "several-candidates",
            "multiple-candidates",
            "no-candidates",
            "no-candidate",
            "modification-subtree",
            "safety-check",
            "generation-routing",
            "generate-and-confirm",
            "generate-sequence",
            "sequence-valid",
            "summarize-for-confirmation",
        ]
        assert trace.status_of("mapping-check") is NodeStatus.FAILURE
        assert trace.status_of("safety-check") is NodeStatus.SUCCESS
        # the near-match already implies feasibility: no safety prompt is sent
        assert not any(p.startswith("SAFETY CHECK") for p in inner.prompts)
        assert session.executed == []
        assert session.pending is PendingKind.AWAITING_CONFIRMATION


class TestGenerationFailures:
    def base_rules(self, gen_response):
        return [
            ScriptRule(("AMBIGUITY CHECK", block(U_MODIFY)), "False"),
            ScriptRule(("KNOWN TASK CHECK", block(U_MODIFY)), "False"),
            ScriptRule(("SAFETY CHECK", block(U_MODIFY)), "FEASIBLE"),
            ScriptRule(("SEQUENCE GENERATION", block(U_MODIFY)), gen_response),
        ]

    def test_unparseable_generation_falls_back_to_restate(self, cfg):
        session, inner = make_session(
            cfg, self.base_rules("I would fetch the batter and skip the berries.")
        )
        reply = run_turn(session, U_MODIFY)
        assert reply.kind is ReplyKind.FALLBACK
        assert reply.text == RESTATE_FALLBACK_TEXT
        # one generation attempt only: no silent model retry
        assert sum(p.startswith("SEQUENCE GENERATION") for p in inner.prompts) == 1
        assert session.pending is PendingKind.NONE
        assert session.fallback_streak == 1
        trace = session.traces[0]
        assert trace.visited()[-3:] == ["generate-sequence", "sequence-valid", "restate-fallback"]
        assert trace.status_of("sequence-valid") is NodeStatus.FAILURE

    def test_invalid_sequence_falls_back_to_restate(self, cfg):
        bad = json.dumps(
            {"task_name": "impossible", "steps": [{"action": "levitate", "args": {}}]}
        )
        session, _ = make_session(cfg, self.base_rules(bad))
        reply = run_turn(session, U_MODIFY)
        assert reply.text == RESTATE_FALLBACK_TEXT
        assert session.executed == []
        assert session.pending is PendingKind.NONE

    def test_generation_backend_error_falls_back_to_restate(self, cfg):
        class SelectiveFailBackend:
            def __init__(self, inner):
                self.inner = inner

            def complete(self, messages):
                joined = "\n".join(m.content for m in messages)
                if "SEQUENCE GENERATION" in joined:
                    raise GatewayTransportError("injected generation failure")
                return self.inner.complete(messages)

        inner = ScriptedBackend(rules=self.base_rules("unused"), catch_all="I am not sure.")
        session = Session(cfg, SelectiveFailBackend(inner))
        reply = run_turn(session, U_MODIFY)
        assert reply.kind is ReplyKind.FALLBACK
        assert reply.text == RESTATE_FALLBACK_TEXT
        trace = session.traces[0]
        failed = [e for e in trace.events if e.node == "generate-sequence"]
        assert len(failed) == 1
        assert failed[0].status is NodeStatus.FAILURE
        assert failed[0].error is not None


class TestOutage:
    def test_total_outage_asks_to_retry_and_preserves_state(self, cfg, failing_backend):
        session = Session(cfg, failing_backend)
        reply = run_turn(session, U_CLEAR)
        assert reply.kind is ReplyKind.FALLBACK
        assert reply.text == RETRY_FALLBACK_TEXT
        assert session.pending is PendingKind.NONE
        assert session.executed == []
        assert session.turn_count == 1
        assert len(session.traces) == 1

    def test_total_outage_restores_pending_clarification(self, cfg):
        class ToggleBackend:
            def __init__(self, inner):
                self.inner = inner
                self.down = False

            def complete(self, messages):
                if self.down:
                    raise GatewayTransportError("backend down")
                return self.inner.complete(messages)

        inner = ScriptedBackend(
            rules=[
                ScriptRule(("AMBIGUITY CHECK", block(U_AMBIGUOUS)), "True"),
                ScriptRule(("FOLLOW-UP QUESTION",), "Which dish would you like?"),
            ],
            catch_all="I am not sure.",
        )
        toggle = ToggleBackend(inner)
        session = Session(cfg, toggle)
        run_turn(session, U_AMBIGUOUS)
        assert session.pending is PendingKind.AWAITING_CLARIFICATION
        streak_before = session.fallback_streak

        toggle.down = True
        reply = run_turn(session, "The pancakes, please.")
        assert reply.text == RETRY_FALLBACK_TEXT
        # session state is exactly as before the failed turn, except history
        assert session.pending is PendingKind.AWAITING_CLARIFICATION
        assert session.fallback_streak == streak_before
        assert session.turn_count == 2
        assert len(session.traces) == 2

        # once the backend recovers the stored clarification still resolves
        toggle.down = False
        inner.rules = list(inner.rules) + [
            ScriptRule(("AMBIGUITY CHECK", block("The pancakes, please.")), "False"),
            ScriptRule(("KNOWN TASK CHECK", block("The pancakes, please.")), "True"),
            ScriptRule(("CANDIDATE TASKS", block("The pancakes, please.")), "B"),
            ScriptRule(("MAPPING CHECK", block("The pancakes, please.")), "True"),
        ]
        reply = run_turn(session, "The pancakes, please.")
        assert reply.kind is ReplyKind.ACKNOWLEDGMENT
        assert reply.sequence.task_name == PANCAKES


class TestTerminalFallback:
    def test_consecutive_clarifications_hit_the_cap(self, cfg):
        small = dataclasses.replace(cfg, max_fallback_turns=3)
        rules = [
            ScriptRule(("AMBIGUITY CHECK",), "True"),
            ScriptRule(("FOLLOW-UP QUESTION",), "Which dish would you like?"),
        ]
        session, inner = make_session(small, rules)
        for _ in range(3):
            reply = run_turn(session, "hmm, not sure")
            assert reply.kind is ReplyKind.CLARIFICATION_QUESTION
        assert session.fallback_streak == 3

        prompts_before = len(inner.prompts)
        reply = run_turn(session, "hmm, not sure")
        assert reply.kind is ReplyKind.FALLBACK
        assert reply.text == TERMINAL_FALLBACK_TEXT
        # the terminal turn neither ticks the tree nor calls the model
        assert len(inner.prompts) == prompts_before
        assert session.traces[-1].events == []
        assert session.fallback_streak == 0
        assert session.pending is PendingKind.NONE

        # the session is usable again afterwards
        reply = run_turn(session, "hmm, not sure")
        assert reply.kind is ReplyKind.CLARIFICATION_QUESTION
        assert session.fallback_streak == 1

    def test_successful_turns_reset_the_streak(self, cfg):
        small = dataclasses.replace(cfg, max_fallback_turns=2)
        rules = [
            ScriptRule(("AMBIGUITY CHECK", block("hmm, not sure")), "True"),
            ScriptRule(("FOLLOW-UP QUESTION",), "Which dish would you like?"),
        ] + clear_rules()
        session, _ = make_session(small, rules)
        run_turn(session, "hmm, not sure")
        assert session.fallback_streak == 1
        run_turn(session, U_CLEAR)
        assert session.fallback_streak == 0
        run_turn(session, "hmm, not sure")
        run_turn(session, "hmm, not sure")
        reply = run_turn(session, "hmm, not sure")
        assert reply.text == TERMINAL_FALLBACK_TEXT


class TestTurnInvariants:
    def test_blank_utterance_rejected(self, cfg):
        session, _ = make_session(cfg, [])
        with pytest.raises(ValueError):
            run_turn(session, "")
        with pytest.raises(ValueError):
            run_turn(session, "   \n")
        assert session.turn_count == 0

    def test_history_and_traces_stay_aligned(self, cfg):
        session, _ = make_session(cfg, clear_rules())
        inputs = [U_CLEAR, "something odd", U_CLEAR]
        for i, u in enumerate(inputs, start=1):
            run_turn(session, u)
            assert session.turn_count == i
            assert len(session.traces) == i
            roles = [utt.role for utt in session.history]
            assert roles == [Role.USER, Role.ROBOT] * i
            indices = [utt.turn_index for utt in session.history]
            assert indices == list(range(2 * i))

    def test_unknown_request_with_catchall_backend_is_safe(self, cfg):
        # catch-all "I am not sure." is unparseable for every boolean check, so
        # the conservative cascade lands on a clarification, never an execution
        session, _ = make_session(cfg, [])
        reply = run_turn(session, "Do something surprising.")
        assert reply.kind is ReplyKind.CLARIFICATION_QUESTION
        assert session.executed == []


class TestRobotReply:
    def test_confirmation_requires_sequence(self):
        with pytest.raises(ValueError):
            RobotReply(text="ok?", kind=ReplyKind.CONFIRMATION_REQUEST)

    def test_candidates_only_on_clarification(self, cfg):
        candidates = CandidateSet(tasks=(BACON, PBJ))
        with pytest.raises(ValueError):
            RobotReply(text="done", kind=ReplyKind.ACKNOWLEDGMENT, candidates=candidates)

    def test_attachment_wire_shapes(self, cfg):
        seq = cfg.library.get(BACON)
        confirm = RobotReply(
            text="ok?", kind=ReplyKind.CONFIRMATION_REQUEST, sequence=seq
        )
        assert confirm.attachments_wire() == {"sequence": seq.to_wire()}
        listing = RobotReply(
            text="which?",
            kind=ReplyKind.CLARIFICATION_QUESTION,
            candidates=CandidateSet(tasks=(BACON,)),
        )
        assert listing.attachments_wire() == {"candidates": [BACON]}
        plain = RobotReply(text="hello", kind=ReplyKind.FALLBACK)
        assert plain.attachments_wire() is None


class TestVerdictBookkeeping:
    def test_clear_and_infeasible_verdicts_on_board_traces(self, cfg):
        # the verdict enum is spelled exactly like the category names
        assert Verdict.CLEAR.value == "Clear"
        assert Verdict.AMBIGUOUS.value == "Ambiguous"
        assert Verdict.MODIFICATION.value == "Modification"
        assert Verdict.INFEASIBLE.value == "Infeasible"
