"""Q-learning planner that orders the subtasks an LLM executor works through."""

from qplanner.mdp import (
    ActionSpace,
    EpisodeTrace,
    StateRecord,
    SubtaskAction,
    TaskKind,
    Transition,
    build_scoring_sequence,
    flatten_state,
    is_terminal,
    remove_action,
)

__version__ = "0.1.0"

__all__ = [
    "ActionSpace",
    "EpisodeTrace",
    "StateRecord",
    "SubtaskAction",
    "TaskKind",
    "Transition",
    "build_scoring_sequence",
    "flatten_state",
    "is_terminal",
    "remove_action",
]
