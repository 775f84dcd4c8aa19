"""Deep Q-learning for the actor's linear head.

Episodes are rolled out against an environment with epsilon-greedy action
selection; transitions go into a FIFO replay buffer, and every stored
transition triggers one minibatch gradient step on the squared TD error.
The target head is refreshed from the online head every ``target_sync``
learn steps.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Generic, Iterator, Optional, Sequence, TypeVar

import numpy as np

from qplanner.actor import (
    ActorModel,
    QHead,
    _argmax_lowest_id,
    batch_gradient,
    provider_from_descriptor,
    select_epsilon_greedy,
    sgd_update,
)
from qplanner.envs.base import Environment, TaskSample, rollout
from qplanner.errors import BufferTooSmall, DimensionMismatch, EmptyDataset, ExecutorError
from qplanner.mdp import Transition

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "qplanner-checkpoint"
CHECKPOINT_VERSION = 1

T = TypeVar("T")


class ReplayBuffer(Generic[T]):
    """Fixed-capacity ring; once full, the oldest item is overwritten."""

    def __init__(self, capacity: int = 5000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list[T] = []
        self._cursor = 0

    def push(self, item: T) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._cursor] = item
        self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, n: int, rng: np.random.Generator) -> list[T]:
        """``n`` items drawn uniformly with replacement."""
        if not self._items:
            raise BufferTooSmall("cannot sample from an empty buffer")
        idx = rng.integers(len(self._items), size=n)
        return [self._items[i] for i in idx]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[T]:
        # Oldest first.
        if len(self._items) < self.capacity:
            return iter(list(self._items))
        return iter(self._items[self._cursor:] + self._items[:self._cursor])


@dataclass
class EpsilonSchedule:
    initial: float = 0.9
    decay: float = 0.95
    period: int = 100
    floor: float = 0.02
    step: int = 0

    def value(self, t: Optional[int] = None) -> float:
        t = self.step if t is None else t
        return max(self.floor, self.initial * self.decay ** (t // self.period))

    def advance(self) -> float:
        """Epsilon for the current step, then move to the next step."""
        eps = self.value()
        self.step += 1
        return eps


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    gamma: float = 0.5
    target_sync: int = 20
    lr: float = 0.01
    min_fill: Optional[int] = None
    seed: int = 0
    buffer_capacity: int = 5000
    episodes_per_epoch: Optional[int] = None
    double_q: bool = False
    epsilon_initial: float = 0.9
    epsilon_decay: float = 0.95
    epsilon_period: int = 100
    epsilon_floor: float = 0.02

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.target_sync) < 1:
            raise ValueError("epochs, batch_size and target_sync must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    @property
    def fill_threshold(self) -> int:
        return self.batch_size if self.min_fill is None else self.min_fill

    def schedule(self) -> EpsilonSchedule:
        return EpsilonSchedule(self.epsilon_initial, self.epsilon_decay,
                               self.epsilon_period, self.epsilon_floor)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**data)


@dataclass
class EpochRecord:
    epoch: int
    episodes: int
    skipped: int
    mean_loss: Optional[float]
    mean_return: Optional[float]
    epsilon_start: float
    epsilon_end: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    learn_steps: int = 0
    env_steps: int = 0
    wall_time: float = 0.0

    @property
    def epsilon_trace(self) -> list[float]:
        return [e.epsilon_end for e in self.epochs]

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "epochs": [asdict(e) for e in self.epochs],
            "epsilon_trace": self.epsilon_trace,
            "learn_steps": self.learn_steps,
            "env_steps": self.env_steps,
        }
        if include_timing:
            d["wall_time"] = self.wall_time
        return d


@dataclass(frozen=True)
class Experience:
    """A transition plus the frozen embeddings learning needs from it."""

    transition: Transition
    h: np.ndarray
    next_h: np.ndarray

    @classmethod
    def build(cls, transition: Transition, actor: ActorModel) -> "Experience":
        h = actor.features(transition.state, [transition.action])[0]
        next_h = actor.features(transition.next_state, transition.next_actions.remaining)
        return cls(transition, h, next_h)


def sample_instance(train_sets: Sequence[Sequence[TaskSample]], rng: np.random.Generator) -> TaskSample:
    """Pick a set with probability 1/T, then a sample uniformly inside it."""
    if not train_sets or any(len(s) == 0 for s in train_sets):
        raise EmptyDataset("every training set must be non-empty")
    chosen = train_sets[int(rng.integers(len(train_sets)))]
    return chosen[int(rng.integers(len(chosen)))]


def _bootstrap(actor: ActorModel, next_h: np.ndarray, actions, double_q: bool) -> float:
    if double_q:
        best = _argmax_lowest_id(actions, actor.head(next_h))
        row = next(i for i, a in enumerate(actions) if a == best)
        return float(actor.target_head(next_h[row]))
    return float(actor.target_head(next_h).max())


def td_target(transition: Transition, actor: ActorModel, gamma: float, double_q: bool = False) -> float:
    if transition.terminal:
        return float(transition.reward)
    actions = transition.next_actions.remaining
    next_h = actor.features(transition.next_state, actions)
    return float(transition.reward) + gamma * _bootstrap(actor, next_h, actions, double_q)


def batch_targets(batch: Sequence[Experience], actor: ActorModel, gamma: float,
                  double_q: bool = False) -> np.ndarray:
    """``td_target`` for each experience, reusing the stored embeddings."""
    y = np.empty(len(batch))
    for j, exp in enumerate(batch):
        t = exp.transition
        y[j] = t.reward
        if not t.terminal:
            y[j] += gamma * _bootstrap(actor, exp.next_h, t.next_actions.remaining, double_q)
    return y


def learn_step(buffer: ReplayBuffer, actor: ActorModel, config: TrainConfig,
               rng: np.random.Generator) -> float:
    """One minibatch gradient step on the mean squared TD error; returns the loss."""
    if len(buffer) < max(1, config.fill_threshold):
        raise BufferTooSmall(f"buffer holds {len(buffer)} transitions, need {config.fill_threshold}")
    batch = buffer.sample(config.batch_size, rng)
    y = batch_targets(batch, actor, config.gamma, config.double_q)
    H = np.stack([exp.h for exp in batch])
    gW, gb, loss = batch_gradient(actor.head, H, y)
    actor.head = sgd_update(actor.head, gW, gb, config.lr)
    actor.learn_steps += 1
    return loss


def sync_target(actor: ActorModel, learn_steps: int, k: int) -> bool:
    if learn_steps % k == 0:
        actor.target_head = QHead(actor.head.W.copy(), actor.head.b)
        return True
    return False


class Trainer:
    def __init__(self, env: Environment, executor, actor: ActorModel, config: TrainConfig):
        self.env = env
        self.executor = executor
        self.actor = actor
        self.config = config
        self.buffer: ReplayBuffer[Experience] = ReplayBuffer(config.buffer_capacity)
        self.schedule = config.schedule()
        self.rng = np.random.default_rng(config.seed)
        self.env_steps = 0

    def _choose(self, state, space):
        eps = self.schedule.advance()
        self.env_steps += 1
        return select_epsilon_greedy(self.actor, state, space, eps, self.rng)

    def run_episode(self, sample: TaskSample) -> tuple[Optional[float], list[float]]:
        """Roll out one episode, then store and learn from its transitions.

        Returns (episode return, learn-step losses); the return is None when
        the executor failed and the episode was dropped.
        """
        try:
            trace, _ = rollout(self.env, sample, self.executor, self._choose)
        except ExecutorError as exc:
            log.warning("skipping episode for sample %s: %s", sample.sample_id, exc)
            return None, []
        losses = []
        for t in trace.transitions:
            self.buffer.push(Experience.build(t, self.actor))
            if len(self.buffer) >= self.config.fill_threshold:
                losses.append(learn_step(self.buffer, self.actor, self.config, self.rng))
                sync_target(self.actor, self.actor.learn_steps, self.config.target_sync)
        return trace.total_return, losses

    def train(self, train_sets: Sequence[Sequence[TaskSample]]) -> TrainReport:
        report = TrainReport()
        started = time.perf_counter()
        per_epoch = self.config.episodes_per_epoch or sum(len(s) for s in train_sets)
        for epoch in range(self.config.epochs):
            eps_start = self.schedule.value()
            returns, losses, skipped = [], [], 0
            for _ in range(per_epoch):
                ret, ls = self.run_episode(sample_instance(train_sets, self.rng))
                if ret is None:
                    skipped += 1
                    continue
                returns.append(ret)
                losses.extend(ls)
            report.epochs.append(EpochRecord(
                epoch=epoch,
                episodes=len(returns),
                skipped=skipped,
                mean_loss=float(np.mean(losses)) if losses else None,
                mean_return=float(np.mean(returns)) if returns else None,
                epsilon_start=eps_start,
                epsilon_end=self.schedule.value(),
            ))
            log.info("epoch %d: return %.3f loss %s eps %.4f", epoch,
                     report.epochs[-1].mean_return or 0.0, report.epochs[-1].mean_loss,
                     self.schedule.value())
        report.learn_steps = self.actor.learn_steps
        report.env_steps = self.env_steps
        report.wall_time = time.perf_counter() - started
        return report

    def checkpoint(self) -> dict:
        return make_checkpoint(self.actor, self.env.kind, self.config.seed,
                               self.env_steps, self.schedule)


def run_training(train_sets, env: Environment, executor, actor: ActorModel,
                 config: TrainConfig) -> tuple[dict, TrainReport]:
    trainer = Trainer(env, executor, actor, config)
    report = trainer.train(train_sets)
    return trainer.checkpoint(), report


def make_checkpoint(actor: ActorModel, kind, seed: int, env_steps: int,
                    schedule: Optional[EpsilonSchedule] = None) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": str(kind),
        "dimension": actor.dimension,
        "W": actor.head.W.tolist(),
        "b": actor.head.b,
        "target_W": actor.target_head.W.tolist(),
        "target_b": actor.target_head.b,
        "learn_steps": actor.learn_steps,
        "env_steps": env_steps,
        "epsilon": asdict(schedule) if schedule else None,
        "seed": seed,
        "provider": actor.provider.describe(),
    }


def save_checkpoint(ckpt: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(ckpt, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path, provider=None) -> tuple[ActorModel, dict]:
    ckpt: dict[str, Any] = json.loads(Path(path).read_text(encoding="utf-8"))
    if ckpt.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a qplanner checkpoint")
    if ckpt.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {ckpt.get('version')}")
    d = int(ckpt["dimension"])
    if len(ckpt["W"]) != d or len(ckpt["target_W"]) != d:
        raise DimensionMismatch("checkpoint head does not match its recorded dimension")
    provider = provider or provider_from_descriptor(ckpt["provider"])
    if provider.dimension != d:
        raise DimensionMismatch(f"provider dimension {provider.dimension} != checkpoint {d}")
    actor = ActorModel(provider, QHead(np.array(ckpt["W"]), ckpt["b"]),
                       QHead(np.array(ckpt["target_W"]), ckpt["target_b"]))
    actor.learn_steps = int(ckpt.get("learn_steps", 0))
    return actor, ckpt
