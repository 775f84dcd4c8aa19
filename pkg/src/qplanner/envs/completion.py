"""Sentence-level text completion.

* S2P (sentence to paragraph): each candidate sentence is appended to the
  completed text; no executor is involved.
* SFB (fill in the blanks): the actor picks a sentence and the executor
  picks which ``[blank]`` it fills.
"""

from __future__ import annotations

import re

from qplanner.envs.base import Environment, StepOutcome, TaskSample, parse_or_none
from qplanner.errors import ParseFailure
from qplanner.mdp import StateRecord, SubtaskAction, TaskKind
from qplanner.text import canonical, exact_match, parse_answer

BLANK = "[blank]"
_INT = re.compile(r"\d+")


def joiner(language: str) -> str:
    return "" if language == "zh" else " "


def completed_text(state: StateRecord, language: str = "en") -> str:
    return joiner(language).join(v for k, v in state.intermediate_results if k == "sentence")


class S2PEnvironment(Environment):
    kind = TaskKind.STC_S2P
    uses_executor = False

    def task_definition(self, sample: TaskSample) -> str:
        return "Sentence ordering. Append the candidate sentences one by one to form a coherent paragraph."

    def original_text(self, sample: TaskSample) -> str:
        return ""

    def requirements(self, sample: TaskSample) -> str:
        return ""

    def apply_step(self, state: StateRecord, action: SubtaskAction, executor_text: str,
                   sample: TaskSample, final: bool = False) -> StepOutcome:
        entry = ("sentence", action.surface)
        return StepOutcome(state.advance(entry), action, executor_text, entry)

    def final_result(self, state: StateRecord, sample: TaskSample) -> list[str]:
        return [v for k, v in state.intermediate_results if k == "sentence"]

    def step_reward(self, outcome: StepOutcome, sample: TaskSample) -> float:
        done = self.final_result(outcome.new_state, sample)
        gold = sample.ground_truth["order"]
        return float(len(done) <= len(gold)
                     and all(canonical(a) == canonical(b) for a, b in zip(done, gold)))


def count_blanks(blanked: str) -> int:
    return blanked.count(BLANK)


def render_blanks(blanked: str, filled: dict[int, str]) -> str:
    """Number every ``[blank]`` from 1; filled ones are replaced by their sentence."""
    parts = blanked.split(BLANK)
    out = [parts[0]]
    for i, tail in enumerate(parts[1:], start=1):
        out.append(filled.get(i, f"[blank {i}]"))
        out.append(tail)
    return "".join(out)


class SFBEnvironment(Environment):
    kind = TaskKind.STC_SFB

    def task_definition(self, sample: TaskSample) -> str:
        return "Sentence cloze. Fill each candidate sentence into the blank where it belongs."

    def original_text(self, sample: TaskSample) -> str:
        return render_blanks(sample.context, {})

    def requirements(self, sample: TaskSample) -> str:
        return ('Choose the unfilled blank that fits the sentence and give its number on a final '
                'line starting with "Answer:".')

    def prompt_context(self, state: StateRecord, sample: TaskSample) -> str:
        return render_blanks(sample.context, self.final_result(state, sample))

    def parse_blank(self, text: str, state: StateRecord, sample: TaskSample) -> int:
        payload = parse_answer(text)
        m = _INT.search(payload if payload is not None else text)
        if not m:
            raise ParseFailure("no blank number in executor output")
        idx = int(m.group(0))
        if not 1 <= idx <= count_blanks(sample.context):
            raise ParseFailure(f"blank {idx} does not exist")
        if idx in self.final_result(state, sample):
            raise ParseFailure(f"blank {idx} is already filled")
        return idx

    def apply_step(self, state: StateRecord, action: SubtaskAction, executor_text: str,
                   sample: TaskSample, final: bool = False) -> StepOutcome:
        idx = parse_or_none(lambda t: self.parse_blank(t, state, sample), executor_text)
        entry = ("unplaced", action.surface) if idx is None else (f"blank {idx}", action.surface)
        return StepOutcome(state.advance(entry), action, executor_text, entry, idx is None)

    def final_result(self, state: StateRecord, sample: TaskSample) -> dict[int, str]:
        return {int(k.split()[1]): v for k, v in state.intermediate_results if k.startswith("blank ")}

    def step_reward(self, outcome: StepOutcome, sample: TaskSample) -> float:
        key, sentence = outcome.parsed_result
        if not key.startswith("blank "):
            return 0.0
        gold = sample.ground_truth["blanks"].get(int(key.split()[1]))
        return float(gold is not None and exact_match(sentence, gold))
