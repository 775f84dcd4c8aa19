"""Synthetic ordering task with a known optimal plan.

Every candidate sentence carries an ordinal cue ("first", "second", ...)
matching its position in a hidden permutation. Following the permutation
earns the maximum stepwise return ``k``; any deviation earns nothing from
that step on. Useful for checking that training actually learns.
"""

from __future__ import annotations

import numpy as np

from qplanner.envs.base import Environment, StepOutcome, TaskSample
from qplanner.mdp import StateRecord, SubtaskAction, TaskKind

ORDINALS = ("first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth")
FILLER = (
    "river", "lamp", "garden", "window", "paper", "stone", "cloud", "market",
    "bridge", "candle", "forest", "mirror", "harbor", "ladder", "meadow", "pencil",
    "castle", "violin", "desert", "anchor", "basket", "copper", "feather", "island",
)


def gen_synthetic(k: int, n_samples: int, seed: int = 0, prefix: str = "syn") -> list[TaskSample]:
    if not 2 <= k <= len(ORDINALS):
        raise ValueError(f"k must lie in [2, {len(ORDINALS)}]")
    rng = np.random.default_rng(seed)
    samples = []
    for n in range(n_samples):
        order = [int(i) for i in rng.permutation(k)]
        position = {aid: pos for pos, aid in enumerate(order)}
        candidates = []
        for aid in range(k):
            a, b, c = rng.choice(len(FILLER), size=3, replace=False)
            candidates.append(f"{FILLER[a]} {FILLER[b]} happens {ORDINALS[position[aid]]} near the {FILLER[c]}")
        samples.append(TaskSample(
            sample_id=f"{prefix}-{seed}-{n}",
            kind=TaskKind.SYNTHETIC,
            context="",
            question_or_schema="Carry out the events in their natural order.",
            candidates=tuple(candidates),
            ground_truth={"order": order},
        ))
    return samples


class SyntheticEnvironment(Environment):
    kind = TaskKind.SYNTHETIC

    def task_definition(self, sample: TaskSample) -> str:
        return sample.question_or_schema

    def original_text(self, sample: TaskSample) -> str:
        return sample.context

    def apply_step(self, state: StateRecord, action: SubtaskAction, executor_text: str,
                   sample: TaskSample, final: bool = False) -> StepOutcome:
        entry = ("done", action.surface)
        return StepOutcome(state.advance(entry), action, executor_text, entry)

    def final_result(self, state: StateRecord, sample: TaskSample) -> list[int]:
        index = {s: i for i, s in enumerate(sample.candidates)}
        return [index[v] for k, v in state.intermediate_results if k == "done"]

    def step_reward(self, outcome: StepOutcome, sample: TaskSample) -> float:
        chosen = self.final_result(outcome.new_state, sample)
        return float(chosen == list(sample.ground_truth["order"][:len(chosen)]))

    def episode_reward(self, state: StateRecord, sample: TaskSample) -> float:
        return float(self.final_result(state, sample) == list(sample.ground_truth["order"]))
