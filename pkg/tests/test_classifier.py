from __future__ import annotations

import pytest

from tasktree.classifier import (
    check_ambiguous,
    check_known_match,
    classify,
    interpret_confirmation,
)
from tasktree.domain import ConversationHistory, Role, TaskLibrary, Verdict
from tasktree.gateway import ScriptRule, ScriptedBackend

H = ConversationHistory


def scripted(*rules: ScriptRule, catch_all: str = "I am not sure.") -> ScriptedBackend:
    return ScriptedBackend(rules=list(rules), catch_all=catch_all)


AMB_TRUE = ScriptRule(contains=("AMBIGUITY CHECK", "I am hungry"), response="True")
AMB_FALSE_SANDWICH = ScriptRule(
    contains=("AMBIGUITY CHECK", "Can I get the bacon and egg sandwich?"), response="False"
)
KNOWN_TRUE_SANDWICH = ScriptRule(
    contains=("KNOWN TASK CHECK", "Can I get the bacon and egg sandwich?"), response="True"
)
PICK_SANDWICH = ScriptRule(
    contains=("CANDIDATE TASKS", "Can I get the bacon and egg sandwich?"), response="A"
)


def test_ambiguous_instruction(cfg):
    outcome = check_ambiguous(
        "I am hungry, can I have something to eat?", H(), scripted(AMB_TRUE), library=cfg.library
    )
    assert outcome.answer is True
    assert outcome.raw_completion == "True"


def test_clear_instruction_not_ambiguous(cfg):
    outcome = check_ambiguous(
        "Can I get the bacon and egg sandwich?",
        H(),
        scripted(AMB_FALSE_SANDWICH),
        library=cfg.library,
    )
    assert outcome.answer is False


def test_history_can_flip_ambiguity(cfg):
    # after the user answers the follow-up, the scripted rule keyed on the
    # history content says the request is no longer ambiguous
    history = H()
    history.append(Role.USER, "I am hungry, can I have something to eat?", timestamp=1.0)
    history.append(Role.ROBOT, "Would you like pancakes or a sandwich?", timestamp=2.0)
    backend = scripted(
        ScriptRule(
            contains=("AMBIGUITY CHECK", "Would you like pancakes or a sandwich?"),
            response="False",
        ),
        AMB_TRUE,
    )
    outcome = check_ambiguous("The pancakes, please.", history, backend, library=cfg.library)
    assert outcome.answer is False


def test_ambiguity_conservative_on_garbage_and_outage(cfg, failing_backend):
    garbled = check_ambiguous("x", H(), scripted(catch_all="maybe"), library=cfg.library)
    assert garbled.answer is True
    outage = check_ambiguous("x", H(), failing_backend, library=cfg.library)
    assert outage.answer is True
    assert "gateway error" in outage.raw_completion


def test_known_match_true_and_false(cfg):
    known = check_known_match(
        "Can I get the bacon and egg sandwich?", H(), cfg.library, scripted(KNOWN_TRUE_SANDWICH)
    )
    assert known.answer is True
    unknown = check_known_match(
        "Make me pancakes but without the berries and double the amount of maple syrup.",
        H(),
        cfg.library,
        scripted(ScriptRule(contains=("KNOWN TASK CHECK",), response="False")),
    )
    assert unknown.answer is False


def test_known_match_empty_library_short_circuits(cfg):
    backend = scripted(catch_all="True")
    outcome = check_known_match("anything", H(), TaskLibrary(tasks=()), backend)
    assert outcome.answer is False
    assert backend.calls == 0


def test_known_match_conservative_paths(cfg, failing_backend):
    assert (
        check_known_match("x", H(), cfg.library, scripted(catch_all="dunno")).answer is False
    )
    assert check_known_match("x", H(), cfg.library, failing_backend).answer is False


def test_interpret_confirmation(cfg, failing_backend):
    yes = scripted(ScriptRule(contains=("YES/NO", "yes please"), response="True"))
    assert interpret_confirmation(H(), "yes please", yes).answer is True
    assert interpret_confirmation(H(), "hmm", scripted(catch_all="eh")).answer is False
    assert interpret_confirmation(H(), "yes", failing_backend).answer is False


# --- classify cascade -----------------------------------------------------------


def test_classify_clear(cfg):
    backend = scripted(AMB_FALSE_SANDWICH, KNOWN_TRUE_SANDWICH, PICK_SANDWICH)
    result = classify(
        "Can I get the bacon and egg sandwich?",
        H(),
        cfg.library,
        cfg.inventory,
        backend,
        catalog=cfg.catalog,
    )
    assert result.verdict is Verdict.CLEAR
    assert result.matched_task == "bacon and egg sandwich"


def test_classify_ambiguous_short_circuits(cfg):
    # first-true-wins: nothing after the ambiguity check runs
    backend = scripted(ScriptRule(contains=("AMBIGUITY CHECK",), response="True"))
    result = classify("anything at all", H(), cfg.library, cfg.inventory, backend)
    assert result.verdict is Verdict.AMBIGUOUS
    assert backend.calls == 1


def test_classify_infeasible(cfg):
    backend = scripted(
        ScriptRule(contains=("AMBIGUITY CHECK",), response="False"),
        ScriptRule(contains=("KNOWN TASK CHECK",), response="False"),
        ScriptRule(
            contains=("SAFETY CHECK", "repaint"),
            response="INFEASIBLE: painting is beyond the robot's capabilities",
        ),
    )
    result = classify(
        "Please repaint the kitchen walls.", H(), cfg.library, cfg.inventory, backend
    )
    assert result.verdict is Verdict.INFEASIBLE
    assert result.matched_task is None


def test_classify_modification_residual(cfg):
    backend = scripted(
        ScriptRule(contains=("AMBIGUITY CHECK",), response="False"),
        ScriptRule(contains=("KNOWN TASK CHECK",), response="False"),
        ScriptRule(contains=("SAFETY CHECK",), response="FEASIBLE"),
    )
    result = classify(
        "Make me pancakes but without the berries and double the amount of maple syrup.",
        H(),
        cfg.library,
        cfg.inventory,
        backend,
    )
    assert result.verdict is Verdict.MODIFICATION


def test_classify_multi_candidate_demotes_to_ambiguous(cfg):
    backend = scripted(
        ScriptRule(contains=("AMBIGUITY CHECK",), response="False"),
        ScriptRule(contains=("KNOWN TASK CHECK",), response="True"),
        ScriptRule(contains=("CANDIDATE TASKS",), response="A, C"),
    )
    result = classify("Can you make me a sandwich?", H(), cfg.library, cfg.inventory, backend)
    assert result.verdict is Verdict.AMBIGUOUS


def test_classify_zero_candidates_demotes_to_ambiguous(cfg):
    backend = scripted(
        ScriptRule(contains=("AMBIGUITY CHECK",), response="False"),
        ScriptRule(contains=("KNOWN TASK CHECK",), response="True"),
        ScriptRule(contains=("CANDIDATE TASKS",), response="NONE"),
    )
    result = classify("something odd", H(), cfg.library, cfg.inventory, backend)
    assert result.verdict is Verdict.AMBIGUOUS


def test_classify_check_order(cfg):
    # the ambiguity prompt always precedes known-check, which precedes safety
    backend = scripted(
        ScriptRule(contains=("AMBIGUITY CHECK",), response="False"),
        ScriptRule(contains=("KNOWN TASK CHECK",), response="False"),
        ScriptRule(contains=("SAFETY CHECK",), response="FEASIBLE"),
    )
    classify("modify something", H(), cfg.library, cfg.inventory, backend)
    markers = []
    for prompt in backend.prompts:
        markers.append(prompt.splitlines()[0])
    assert markers == ["AMBIGUITY CHECK", "KNOWN TASK CHECK", "SAFETY CHECK"]


def test_classify_total_outage_resolves_ambiguous(cfg, failing_backend):
    # every check fails → the first (ambiguity) resolves conservatively
    result = classify("anything", H(), cfg.library, cfg.inventory, failing_backend)
    assert result.verdict is Verdict.AMBIGUOUS
    assert failing_backend.calls == 1


def test_classify_is_deterministic(cfg):
    backend_rules = (
        ScriptRule(contains=("AMBIGUITY CHECK",), response="False"),
        ScriptRule(contains=("KNOWN TASK CHECK",), response="False"),
        ScriptRule(contains=("SAFETY CHECK",), response="FEASIBLE"),
    )
    results = {
        classify("same input", H(), cfg.library, cfg.inventory, scripted(*backend_rules)).verdict
        for _ in range(3)
    }
    assert results == {Verdict.MODIFICATION}
