"""Task samples, reward modes and the environment protocol shared by all tasks."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Tuple

from qplanner.errors import EmptyCandidates, ParseFailure
from qplanner.mdp import (
    ActionSpace,
    Entry,
    EpisodeTrace,
    StateRecord,
    SubtaskAction,
    TaskKind,
    Transition,
    is_terminal,
    remove_action,
)
from qplanner.envs.templates import load_templates, render

log = logging.getLogger(__name__)

Executor = Callable[..., str]
Chooser = Callable[[StateRecord, ActionSpace], SubtaskAction]


class RewardMode(str, enum.Enum):
    STEPWISE = "stepwise"
    EPISODIC = "episodic"
    BOTH = "both"


DEFAULT_REWARD_MODE = {
    TaskKind.MRC_EXTRACTIVE: RewardMode.EPISODIC,
    TaskKind.MRC_MULTICHOICE: RewardMode.EPISODIC,
    TaskKind.RE_TRIPLE: RewardMode.BOTH,
    TaskKind.EE_EVENT: RewardMode.BOTH,
    TaskKind.STC_S2P: RewardMode.STEPWISE,
    TaskKind.STC_SFB: RewardMode.STEPWISE,
    TaskKind.SYNTHETIC: RewardMode.STEPWISE,
}


@dataclass(frozen=True)
class TaskSample:
    """One labeled instance.

    ``ground_truth`` by kind: ``{"answer"}`` (extractive MRC),
    ``{"answer_letter"}`` (multichoice MRC, options in ``meta["options"]``),
    slot -> argument (RE/EE), ``{"order": [sentence, ...]}`` (S2P),
    ``{"blanks": {index: sentence}}`` (SFB), ``{"order": [action_id, ...]}``
    (synthetic).
    """

    sample_id: str
    kind: TaskKind
    context: str
    question_or_schema: str
    candidates: Tuple[str, ...]
    ground_truth: Mapping[str, Any]
    language: str = "en"
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))
        object.__setattr__(self, "candidates", tuple(self.candidates))


@dataclass(frozen=True)
class StepOutcome:
    new_state: StateRecord
    action: SubtaskAction
    executor_raw: str
    parsed_result: Optional[Entry]
    parse_failed: bool = False
    reward: Optional[float] = None


class Environment:
    """Stateless transformer over immutable states for one task kind.

    Subclasses fill in the task-specific pieces: how candidates become
    actions, how executor text is parsed into the state, and the reward.
    """

    kind: TaskKind
    uses_executor = True

    def __init__(self, templates: Optional[Mapping[str, str]] = None,
                 reward_mode: Optional[RewardMode] = None):
        self.templates = templates if templates is not None else load_templates()
        self.reward_mode = RewardMode(reward_mode) if reward_mode else DEFAULT_REWARD_MODE[self.kind]

    # -- task-specific hooks ---------------------------------------------
    def task_definition(self, sample: TaskSample) -> str:
        raise NotImplementedError

    def original_text(self, sample: TaskSample) -> str:
        return sample.context

    def requirements(self, sample: TaskSample) -> str:
        return 'Put the result on a final line starting with "Answer:".'

    def action_surfaces(self, sample: TaskSample) -> list[str]:
        return list(sample.candidates)

    def question(self, sample: TaskSample) -> str:
        return sample.question_or_schema

    def prompt_context(self, state: StateRecord, sample: TaskSample) -> str:
        return state.original_text

    def template_key(self, final: bool) -> str:
        return self.kind.value

    def apply_step(self, state: StateRecord, action: SubtaskAction, executor_text: str,
                   sample: TaskSample, final: bool = False) -> StepOutcome:
        raise NotImplementedError

    def step_reward(self, outcome: StepOutcome, sample: TaskSample) -> float:
        return 0.0

    def episode_reward(self, state: StateRecord, sample: TaskSample) -> float:
        return 0.0

    def final_result(self, state: StateRecord, sample: TaskSample):
        raise NotImplementedError

    # -- shared machinery ---------------------------------------------------
    def init_instance(self, sample: TaskSample) -> tuple[StateRecord, ActionSpace]:
        surfaces = self.action_surfaces(sample)
        if not surfaces:
            raise EmptyCandidates(f"sample {sample.sample_id} has no candidates")
        state = StateRecord(
            task_definition=self.task_definition(sample),
            original_text=self.original_text(sample),
            requirements=self.requirements(sample),
        )
        return state, ActionSpace.from_surfaces(surfaces)

    def build_prompt(self, state: StateRecord, action: SubtaskAction, sample: TaskSample,
                     final: bool = False) -> str:
        return render(
            self.templates,
            self.template_key(final),
            self.kind,
            task=state.task_definition,
            context=self.prompt_context(state, sample),
            results=state.results_text(),
            requirements=state.requirements,
            action=action.surface,
            question=self.question(sample),
        )

    def reward(self, outcome: StepOutcome, sample: TaskSample, step_index: int,
               terminal: bool, mode: Optional[RewardMode] = None) -> float:
        mode = RewardMode(mode) if mode else self.reward_mode
        r = 0.0
        if mode in (RewardMode.STEPWISE, RewardMode.BOTH):
            r += self.step_reward(outcome, sample)
        if terminal and mode in (RewardMode.EPISODIC, RewardMode.BOTH):
            r += self.episode_reward(outcome.new_state, sample)
        return r

    def step(self, sample: TaskSample, state: StateRecord, space: ActionSpace,
             action: SubtaskAction, executor: Optional[Executor]) -> tuple[StepOutcome, ActionSpace]:
        """Execute one action: prompt, executor call, state update, reward."""
        next_space = remove_action(space, action)
        final = is_terminal(next_space)
        text = ""
        if self.uses_executor:
            if executor is None:
                raise ValueError(f"{self.kind} environment needs an executor")
            text = executor(self.build_prompt(state, action, sample, final), self.kind)
        outcome = self.apply_step(state, action, text, sample, final)
        r = self.reward(outcome, sample, state.step_index, final)
        return _with_reward(outcome, r), next_space


def _with_reward(outcome: StepOutcome, r: float) -> StepOutcome:
    return StepOutcome(outcome.new_state, outcome.action, outcome.executor_raw,
                       outcome.parsed_result, outcome.parse_failed, r)


def parse_or_none(parse: Callable[[str], Any], text: str):
    """Run ``parse``; a ParseFailure becomes None so the episode can go on."""
    try:
        return parse(text)
    except ParseFailure as exc:
        log.debug("unparseable executor output: %s", exc)
        return None


def rollout(env: Environment, sample: TaskSample, executor: Optional[Executor],
            choose: Chooser) -> tuple[EpisodeTrace, StateRecord]:
    """Run one full episode, choosing actions with ``choose(state, space)``."""
    state, space = env.init_instance(sample)
    transitions = []
    while not is_terminal(space):
        action = choose(state, space)
        outcome, next_space = env.step(sample, state, space, action, executor)
        transitions.append(
            Transition(state, action, outcome.reward, outcome.new_state, next_space,
                       is_terminal(next_space))
        )
        state, space = outcome.new_state, next_space
    return EpisodeTrace(sample.sample_id, tuple(transitions)), state
