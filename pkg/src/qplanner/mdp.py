"""MDP vocabulary shared by every environment.

States, actions and transitions are immutable; "mutation" always returns a
new value, so they can be shared freely between the rollout loop, the replay
buffer and evaluation workers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Tuple

from qplanner.errors import ActionNotInSpace

FIELD_SEPARATOR = " | "
ENTRY_SEPARATOR = "; "
START, SEP, END = "<start>", "<sep>", "<end>"


class TaskKind(str, enum.Enum):
    MRC_EXTRACTIVE = "mrc_extractive"
    MRC_MULTICHOICE = "mrc_multichoice"
    RE_TRIPLE = "re_triple"
    EE_EVENT = "ee_event"
    STC_S2P = "stc_s2p"
    STC_SFB = "stc_sfb"
    SYNTHETIC = "synthetic"

    def __str__(self) -> str:
        return self.value


Entry = Tuple[str, str]


@dataclass(frozen=True)
class StateRecord:
    task_definition: str = ""
    original_text: str = ""
    intermediate_results: Tuple[Entry, ...] = ()
    requirements: str = ""
    step_index: int = 0

    def advance(self, *entries: Entry) -> "StateRecord":
        """Next state after one executed action, with ``entries`` appended."""
        return replace(
            self,
            intermediate_results=self.intermediate_results + tuple(entries),
            step_index=self.step_index + 1,
        )

    def results_text(self) -> str:
        return ENTRY_SEPARATOR.join(f"{k}: {v}" for k, v in self.intermediate_results)


@dataclass(frozen=True)
class SubtaskAction:
    action_id: int
    surface: str


@dataclass(frozen=True)
class ActionSpace:
    remaining: Tuple[SubtaskAction, ...]
    initial_size: int = -1

    def __post_init__(self):
        ids = [a.action_id for a in self.remaining]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate action ids in action space")
        if self.initial_size < 0:
            object.__setattr__(self, "initial_size", len(self.remaining))

    @classmethod
    def from_surfaces(cls, surfaces) -> "ActionSpace":
        return cls(tuple(SubtaskAction(i, s) for i, s in enumerate(surfaces)))

    def __len__(self) -> int:
        return len(self.remaining)

    def __iter__(self):
        return iter(self.remaining)

    def __contains__(self, action) -> bool:
        return action in self.remaining


@dataclass(frozen=True)
class Transition:
    state: StateRecord
    action: SubtaskAction
    reward: float
    next_state: StateRecord
    next_actions: ActionSpace
    terminal: bool

    def __post_init__(self):
        if self.terminal != is_terminal(self.next_actions):
            raise ValueError("terminal flag must match an empty next action space")


@dataclass(frozen=True)
class EpisodeTrace:
    sample_id: str
    transitions: Tuple[Transition, ...] = field(default_factory=tuple)

    @property
    def total_return(self) -> float:
        return float(sum(t.reward for t in self.transitions))

    @property
    def actions(self) -> Tuple[SubtaskAction, ...]:
        return tuple(t.action for t in self.transitions)

    def __len__(self) -> int:
        return len(self.transitions)


def _segment(label: str, value: str) -> str:
    return f"{label} {value}" if value else label


def flatten_state(state: StateRecord) -> str:
    return FIELD_SEPARATOR.join(
        [
            _segment("task:", state.task_definition),
            _segment("context:", state.original_text),
            _segment("results:", state.results_text()),
            _segment("requirements:", state.requirements),
        ]
    )


def build_scoring_sequence(action: SubtaskAction, state: StateRecord) -> str:
    """Text the actor scores for choosing ``action`` in ``state``."""
    return f"{START} {action.surface} {SEP} {flatten_state(state)} {END}"


def remove_action(space: ActionSpace, action: SubtaskAction) -> ActionSpace:
    if action not in space.remaining:
        raise ActionNotInSpace(f"action {action.action_id} is not in the remaining space")
    return ActionSpace(
        tuple(a for a in space.remaining if a != action), space.initial_size
    )


def is_terminal(space: ActionSpace) -> bool:
    return not space.remaining
