from __future__ import annotations

import pytest

from qplanner.actor import ActorModel, HashingFeaturizer
from qplanner.envs import TaskSample
from qplanner.executor import ScriptedExecutor
from qplanner.mdp import TaskKind

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def actor():
    return ActorModel(HashingFeaturizer(64))


@pytest.fixture
def re_sample():
    return TaskSample(
        sample_id="re-1",
        kind=TaskKind.RE_TRIPLE,
        context="Maria was born in Lisbon.",
        question_or_schema="birthplace",
        candidates=("subject", "object"),
        ground_truth={"subject": "Maria", "object": "Lisbon"},
    )


@pytest.fixture
def re_oracle():
    """Executor that extracts the right argument for the RE fixture."""
    return ScriptedExecutor.from_dict({
        "rules": [
            {"kind": "re_triple", "pattern": "extract subject", "response": "Answer: Maria"},
            {"kind": "re_triple", "pattern": "extract object", "response": "Answer: Lisbon"},
        ]
    })
