"""Task metrics, baseline policies and policy evaluation."""

from __future__ import annotations

import csv
import itertools
import json
import logging
from dataclasses import asdict, dataclass, field
from math import comb
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from qplanner.actor import ActorModel, select_greedy
from qplanner.envs.base import Environment, TaskSample, rollout
from qplanner.errors import LengthMismatch, NotAPermutation, PlannerError
from qplanner.mdp import ActionSpace, StateRecord, SubtaskAction, TaskKind
from qplanner.text import canonical, exact_match

log = logging.getLogger(__name__)


def _aligned(a: Sequence, b: Sequence) -> None:
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} predictions vs {len(b)} references")


# -- metrics ------------------------------------------------------------------

def slot_f1(predictions: Sequence[Mapping[str, str]], golds: Sequence[Mapping[str, str]]):
    """Exact-match slot precision, recall and F1 (zero denominators give 0)."""
    _aligned(predictions, golds)
    tp = fp = fn = 0
    for pred, gold in zip(predictions, golds):
        pred = {k: v for k, v in pred.items() if v}
        for slot, arg in pred.items():
            if slot in gold and exact_match(arg, gold[slot]):
                tp += 1
            else:
                fp += 1
        fn += sum(1 for slot, arg in gold.items()
                  if not (slot in pred and exact_match(pred[slot], arg)))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    # Count form of the harmonic mean; avoids compounding rounding from p and r.
    f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    return p, r, f1


def cac(final_texts: Sequence[str], gold_texts: Sequence[str]) -> float:
    _aligned(final_texts, gold_texts)
    if not gold_texts:
        return 0.0
    return sum(canonical(a) == canonical(b) for a, b in zip(final_texts, gold_texts)) / len(gold_texts)


def concordant_pairs(predicted: Sequence, gold: Sequence) -> int:
    if len(predicted) != len(gold) or sorted(map(repr, predicted)) != sorted(map(repr, gold)):
        raise NotAPermutation("predicted order is not a permutation of the gold order")
    if len(set(map(repr, gold))) != len(gold):
        raise NotAPermutation("gold order contains duplicates")
    rank = {repr(x): i for i, x in enumerate(gold)}
    r = [rank[repr(x)] for x in predicted]
    return sum(1 for i, j in itertools.combinations(range(len(r)), 2) if r[i] < r[j])


def soc(predicted_orders: Sequence[Sequence], gold_orders: Sequence[Sequence]) -> float:
    """Mean over samples of the fraction of item pairs kept in gold order."""
    _aligned(predicted_orders, gold_orders)
    if not gold_orders:
        return 0.0
    total = 0.0
    for pred, gold in zip(predicted_orders, gold_orders):
        n = len(gold)
        if n < 2:
            raise NotAPermutation("sentence order accuracy needs at least two items")
        total += concordant_pairs(pred, gold) / comb(n, 2)
    return total / len(gold_orders)


def bac(filled: Sequence[Mapping[int, str]], golds: Sequence[Mapping[int, str]]) -> float:
    """Micro-averaged share of blanks holding their gold sentence."""
    _aligned(filled, golds)
    correct = total = 0
    for f, g in zip(filled, golds):
        total += len(g)
        correct += sum(1 for k, s in g.items() if k in f and exact_match(f[k], s))
    return correct / total if total else 0.0


# -- policies -----------------------------------------------------------------

class LearnedPolicy:
    name = "learned"

    def __init__(self, actor: ActorModel):
        self.actor = actor

    def __call__(self, state: StateRecord, space: ActionSpace) -> SubtaskAction:
        return select_greedy(self.actor, state, space)


class RandomPolicy:
    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def __call__(self, state: StateRecord, space: ActionSpace) -> SubtaskAction:
        return space.remaining[int(self.rng.integers(len(space.remaining)))]


class FixedSequencePolicy:
    """Same order for every instance.

    Without ``order`` actions run in enumeration order (lowest id first).
    ``order`` lists action surfaces by priority; unlisted surfaces go last.
    """

    name = "fixed"

    def __init__(self, order: Optional[Sequence[str]] = None):
        self.priority = {s: i for i, s in enumerate(order or ())}

    def __call__(self, state: StateRecord, space: ActionSpace) -> SubtaskAction:
        return min(space.remaining,
                   key=lambda a: (self.priority.get(a.surface, len(self.priority)), a.action_id))


# -- evaluation -----------------------------------------------------------------

@dataclass(frozen=True)
class ComplexityFilter:
    name: str
    min_candidates: Optional[int] = None
    min_triples: Optional[int] = None

    def keep(self, sample: TaskSample) -> bool:
        if self.min_candidates is not None and len(sample.candidates) < self.min_candidates:
            return False
        if self.min_triples is not None and int(sample.meta.get("triples_in_context", 0)) < self.min_triples:
            return False
        return True

    def describe(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


FILTER_PRESETS = {
    "mrc_complex": ComplexityFilter("mrc_complex", min_candidates=6),
    "hacred_complex": ComplexityFilter("hacred_complex", min_triples=11),
    "nyt10_complex": ComplexityFilter("nyt10_complex", min_triples=4),
    "duee_complex": ComplexityFilter("duee_complex", min_candidates=5),
}


@dataclass
class MetricsReport:
    kind: str
    n_samples: int
    n_failed: int = 0
    accuracy: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None
    cac: Optional[float] = None
    soc: Optional[float] = None
    bac: Optional[float] = None
    zero_denominator: bool = False
    filter: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def metrics(self) -> dict[str, float]:
        names = ("accuracy", "precision", "recall", "f1", "cac", "soc", "bac")
        return {n: getattr(self, n) for n in names if getattr(self, n) is not None}

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}


def evaluate_policy(policy, dataset: Sequence[TaskSample], env: Environment, executor,
                    complexity: Optional[ComplexityFilter] = None,
                    metadata: Optional[dict] = None) -> MetricsReport:
    """Solve every sample with ``policy`` and score the final results.

    A sample whose episode raises is scored as wrong and counted in
    ``n_failed``.
    """
    samples = [s for s in dataset if complexity is None or complexity.keep(s)]
    finals: list[Optional[Any]] = []
    failed = 0
    for sample in samples:
        try:
            _, state = rollout(env, sample, executor, policy)
            finals.append(env.final_result(state, sample))
        except PlannerError as exc:
            log.warning("sample %s failed: %s", sample.sample_id, exc)
            finals.append(None)
            failed += 1
    report = MetricsReport(kind=str(env.kind), n_samples=len(samples), n_failed=failed,
                           filter=complexity.describe() if complexity else {},
                           metadata=dict(metadata or {}))
    if samples:
        _score(report, env, samples, finals)
    return report


def _score(report: MetricsReport, env: Environment, samples, finals) -> None:
    kind = env.kind
    if kind in (TaskKind.MRC_EXTRACTIVE, TaskKind.MRC_MULTICHOICE):
        report.accuracy = float(np.mean([f is not None and env.is_correct(f, s)
                                         for f, s in zip(finals, samples)]))
    elif kind in (TaskKind.RE_TRIPLE, TaskKind.EE_EVENT):
        preds = [f or {} for f in finals]
        golds = [dict(s.ground_truth) for s in samples]
        report.precision, report.recall, report.f1 = slot_f1(preds, golds)
        n_pred = sum(len([v for v in p.values() if v]) for p in preds)
        report.zero_denominator = n_pred == 0
    elif kind in (TaskKind.STC_S2P, TaskKind.SYNTHETIC):
        golds = [list(s.ground_truth["order"]) for s in samples]
        preds = [f if f is not None else [] for f in finals]
        report.cac = float(np.mean([p == g if kind is TaskKind.SYNTHETIC
                                    else [canonical(x) for x in p] == [canonical(x) for x in g]
                                    for p, g in zip(preds, golds)]))
        scored = [(p, g) for p, g in zip(preds, golds) if len(g) >= 2 and len(p) == len(g)]
        if scored:
            # Failed samples contribute zero concordant pairs.
            total = soc([p for p, _ in scored], [g for _, g in scored]) * len(scored)
            report.soc = total / len(golds)
    elif kind is TaskKind.STC_SFB:
        filled = [f or {} for f in finals]
        golds = [dict(s.ground_truth["blanks"]) for s in samples]
        report.bac = bac(filled, golds)
        report.cac = float(np.mean([
            len(f) == len(g) and all(k in f and exact_match(f[k], v) for k, v in g.items())
            for f, g in zip(filled, golds)
        ]))


def write_report_json(report: MetricsReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n",
                          encoding="utf-8")


def write_report_csv(reports: Sequence[MetricsReport], path: str | Path) -> None:
    columns = ["kind", "n_samples", "n_failed", "filter", "accuracy", "precision", "recall",
               "f1", "cac", "soc", "bac"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for r in reports:
            row = {c: getattr(r, c) for c in columns if c != "filter"}
            row["filter"] = r.filter.get("name", "")
            writer.writerow({k: "" if v is None else v for k, v in row.items()})
