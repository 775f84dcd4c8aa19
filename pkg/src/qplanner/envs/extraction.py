"""Slot-filling extraction: relation triples (subject/object) and event roles."""

from __future__ import annotations

from qplanner.envs.base import Environment, StepOutcome, TaskSample, parse_or_none
from qplanner.errors import ParseFailure
from qplanner.mdp import StateRecord, SubtaskAction, TaskKind
from qplanner.text import exact_match, parse_answer

RE_SLOTS = ("subject", "object")
ACTION_PREFIX = "extract "


def parse_argument(text: str) -> str:
    ans = parse_answer(text)
    if not ans:
        raise ParseFailure("no argument after Answer:")
    return ans


def slot_of(action: SubtaskAction) -> str:
    s = action.surface
    return s[len(ACTION_PREFIX):] if s.startswith(ACTION_PREFIX) else s


class SlotEnvironment(Environment):
    kind = TaskKind.RE_TRIPLE

    def requirements(self, sample: TaskSample) -> str:
        return ('Output exactly one entity span copied from the context, on a final line '
                'starting with "Answer:".')

    def action_surfaces(self, sample: TaskSample) -> list[str]:
        return [ACTION_PREFIX + slot for slot in sample.candidates]

    def task_definition(self, sample: TaskSample) -> str:
        return f"Relation triple extraction. Relation type: {sample.question_or_schema}"

    def apply_step(self, state: StateRecord, action: SubtaskAction, executor_text: str,
                   sample: TaskSample, final: bool = False) -> StepOutcome:
        arg = parse_or_none(parse_argument, executor_text)
        entry = (slot_of(action), arg or "")
        return StepOutcome(state.advance(entry), action, executor_text, entry, arg is None)

    def final_result(self, state: StateRecord, sample: TaskSample) -> dict[str, str]:
        return {k: v for k, v in state.intermediate_results if v}

    def _correct(self, slot: str, arg: str, sample: TaskSample) -> bool:
        gold = sample.ground_truth.get(slot)
        return bool(arg) and gold is not None and exact_match(arg, gold)

    def step_reward(self, outcome: StepOutcome, sample: TaskSample) -> float:
        slot, arg = outcome.parsed_result
        return float(self._correct(slot, arg, sample))

    def episode_reward(self, state: StateRecord, sample: TaskSample) -> float:
        pred = dict(state.intermediate_results)
        return float(all(self._correct(slot, pred.get(slot, ""), sample)
                         for slot in sample.candidates))


class EventEnvironment(SlotEnvironment):
    kind = TaskKind.EE_EVENT

    def task_definition(self, sample: TaskSample) -> str:
        roles = ", ".join(sample.candidates)
        return f"Event extraction. Event type: {sample.question_or_schema}. Roles: {roles}"
