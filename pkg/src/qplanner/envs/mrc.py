"""Machine reading comprehension: choose the order in which sentences are read.

Each context sentence is one action. The executor reads one sentence per
step and only answers the question at the last step.
"""

from __future__ import annotations

import re
import string

from qplanner.envs.base import Environment, StepOutcome, TaskSample, parse_or_none
from qplanner.errors import ParseFailure
from qplanner.mdp import StateRecord, SubtaskAction, TaskKind
from qplanner.text import exact_match, parse_answer

_LETTER = re.compile(r"^\W*([A-Za-z])\b")


def parse_extractive(text: str) -> str:
    ans = parse_answer(text)
    if not ans:
        raise ParseFailure("no Answer: line")
    return ans


def parse_option_letter(text: str, n_options: int = 26) -> str:
    ans = parse_answer(text)
    m = _LETTER.match(ans or "")
    if not m:
        raise ParseFailure("no option letter after Answer:")
    letter = m.group(1).upper()
    if string.ascii_uppercase.index(letter) >= n_options:
        raise ParseFailure(f"option {letter} out of range")
    return letter


def _render_options(options) -> str:
    return " ".join(f"{string.ascii_uppercase[i]}. {o}" for i, o in enumerate(options))


class MRCEnvironment(Environment):
    kind = TaskKind.MRC_EXTRACTIVE

    def question(self, sample: TaskSample) -> str:
        options = sample.meta.get("options")
        if options:
            return f"{sample.question_or_schema} Options: {_render_options(options)}"
        return sample.question_or_schema

    def task_definition(self, sample: TaskSample) -> str:
        return f"Reading comprehension. Question: {self.question(sample)}"

    def original_text(self, sample: TaskSample) -> str:
        # The context arrives one sentence per step, so it is not repeated here.
        return ""

    def requirements(self, sample: TaskSample) -> str:
        return 'Answer with a span copied from the context, on a final line starting with "Answer:".'

    def template_key(self, final: bool) -> str:
        return f"{self.kind.value}.final" if final else self.kind.value

    def _parse(self, text: str, sample: TaskSample) -> str:
        return parse_extractive(text)

    def apply_step(self, state: StateRecord, action: SubtaskAction, executor_text: str,
                   sample: TaskSample, final: bool = False) -> StepOutcome:
        entries = [("read", action.surface)]
        parsed = None
        failed = False
        if final:
            answer = parse_or_none(lambda t: self._parse(t, sample), executor_text)
            failed = answer is None
            parsed = ("answer", answer or "")
            entries.append(parsed)
        return StepOutcome(state.advance(*entries), action, executor_text, parsed, failed)

    def final_result(self, state: StateRecord, sample: TaskSample) -> str:
        for key, value in reversed(state.intermediate_results):
            if key == "answer":
                return value
        return ""

    def is_correct(self, answer: str, sample: TaskSample) -> bool:
        if not answer:
            return False
        return exact_match(answer, sample.ground_truth["answer"],
                           lowercase=sample.language == "en")

    def episode_reward(self, state: StateRecord, sample: TaskSample) -> float:
        return float(self.is_correct(self.final_result(state, sample), sample))


class MultiChoiceMRCEnvironment(MRCEnvironment):
    kind = TaskKind.MRC_MULTICHOICE

    def requirements(self, sample: TaskSample) -> str:
        return 'Answer with the option letter only, on a final line starting with "Answer:".'

    def _parse(self, text: str, sample: TaskSample) -> str:
        return parse_option_letter(text, len(sample.meta.get("options", ())) or 26)

    def is_correct(self, answer: str, sample: TaskSample) -> bool:
        return bool(answer) and answer.upper() == sample.ground_truth["answer_letter"].upper()
