from qplanner.envs.base import (
    DEFAULT_REWARD_MODE,
    Environment,
    RewardMode,
    StepOutcome,
    TaskSample,
    rollout,
)
from qplanner.envs.completion import S2PEnvironment, SFBEnvironment, completed_text
from qplanner.envs.extraction import EventEnvironment, SlotEnvironment
from qplanner.envs.mrc import MRCEnvironment, MultiChoiceMRCEnvironment
from qplanner.envs.synthetic import SyntheticEnvironment, gen_synthetic
from qplanner.envs.templates import load_templates
from qplanner.mdp import TaskKind

ENVIRONMENTS = {
    TaskKind.MRC_EXTRACTIVE: MRCEnvironment,
    TaskKind.MRC_MULTICHOICE: MultiChoiceMRCEnvironment,
    TaskKind.RE_TRIPLE: SlotEnvironment,
    TaskKind.EE_EVENT: EventEnvironment,
    TaskKind.STC_S2P: S2PEnvironment,
    TaskKind.STC_SFB: SFBEnvironment,
    TaskKind.SYNTHETIC: SyntheticEnvironment,
}


def make_env(kind, templates=None, reward_mode=None) -> Environment:
    return ENVIRONMENTS[TaskKind(kind)](templates, reward_mode)


__all__ = [
    "DEFAULT_REWARD_MODE",
    "ENVIRONMENTS",
    "Environment",
    "RewardMode",
    "StepOutcome",
    "TaskSample",
    "completed_text",
    "gen_synthetic",
    "load_templates",
    "make_env",
    "rollout",
]
