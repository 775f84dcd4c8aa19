"""Dataset ingestion (line-delimited JSON) and run configuration files."""

from __future__ import annotations

import json
import os
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from qplanner.envs.base import RewardMode, TaskSample
from qplanner.envs.completion import count_blanks
from qplanner.envs.extraction import RE_SLOTS
from qplanner.errors import ConfigError, SchemaError, TooShortContext
from qplanner.executor import ExecutorConfig, RemoteExecutor, ScriptedExecutor
from qplanner.mdp import TaskKind
from qplanner.text import split_sentences
from qplanner.trainer import TrainConfig

MIN_MRC_SENTENCES = 3
_CJK = re.compile(r"[㐀-䶿一-鿿]")

REQUIRED_FIELDS = {
    TaskKind.MRC_EXTRACTIVE: ("id", "context", "question", "answer"),
    TaskKind.MRC_MULTICHOICE: ("id", "context", "question", "options", "answer_letter"),
    TaskKind.RE_TRIPLE: ("id", "context", "relation", "subject", "object"),
    TaskKind.EE_EVENT: ("id", "context", "event_type", "roles"),
    TaskKind.STC_S2P: ("id", "sentences_gold_order"),
    TaskKind.STC_SFB: ("id", "blanked_context", "blanks", "candidates"),
    TaskKind.SYNTHETIC: ("id", "candidates", "order"),
}


@dataclass
class DatasetFile:
    path: Path
    kind: TaskKind
    language: str
    records: list[TaskSample]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def detect_language(text: str) -> str:
    return "zh" if _CJK.search(text) else "en"


def _str(rec: dict, key: str, line: int) -> str:
    v = rec[key]
    if not isinstance(v, str) or not v.strip():
        raise SchemaError(line, f"field {key!r} must be a non-empty string")
    return v


def _str_list(rec: dict, key: str, line: int) -> list[str]:
    v = rec[key]
    if not isinstance(v, list) or not v or not all(isinstance(x, str) and x.strip() for x in v):
        raise SchemaError(line, f"field {key!r} must be a non-empty list of strings")
    return v


def _shuffled(items: list[str], sample_id: str) -> list[str]:
    rng = np.random.default_rng(zlib.crc32(sample_id.encode("utf-8")))
    return [items[i] for i in rng.permutation(len(items))]


def record_to_sample(rec: dict, kind: TaskKind, line: int = 0) -> TaskSample:
    """Validate one JSON record against the schema for ``kind``."""
    kind = TaskKind(kind)
    if not isinstance(rec, dict):
        raise SchemaError(line, "record must be a JSON object")
    missing = [k for k in REQUIRED_FIELDS[kind] if k not in rec]
    if missing:
        raise SchemaError(line, f"missing fields {missing}")
    sid = str(rec["id"])
    meta: dict[str, Any] = {}
    if "triples_in_context" in rec:
        meta["triples_in_context"] = int(rec["triples_in_context"])

    if kind in (TaskKind.MRC_EXTRACTIVE, TaskKind.MRC_MULTICHOICE):
        context = _str(rec, "context", line)
        sentences = split_sentences(context)
        if len(sentences) < MIN_MRC_SENTENCES:
            raise TooShortContext(line, f"context has {len(sentences)} sentences, need {MIN_MRC_SENTENCES}")
        if kind is TaskKind.MRC_EXTRACTIVE:
            truth = {"answer": _str(rec, "answer", line)}
        else:
            options = _str_list(rec, "options", line)
            letter = _str(rec, "answer_letter", line).strip().upper()
            if len(letter) != 1 or not "A" <= letter < chr(ord("A") + len(options)):
                raise SchemaError(line, f"answer_letter {letter!r} does not name an option")
            truth = {"answer_letter": letter}
            meta["options"] = list(options)
        return TaskSample(sid, kind, context, _str(rec, "question", line), tuple(sentences), truth,
                          rec.get("language") or detect_language(context), meta)

    if kind is TaskKind.RE_TRIPLE:
        context = _str(rec, "context", line)
        truth = {slot: _str(rec, slot, line) for slot in RE_SLOTS}
        return TaskSample(sid, kind, context, _str(rec, "relation", line), RE_SLOTS, truth,
                          rec.get("language") or detect_language(context), meta)

    if kind is TaskKind.EE_EVENT:
        context = _str(rec, "context", line)
        roles = rec["roles"]
        if not isinstance(roles, list) or not roles:
            raise SchemaError(line, "roles must be a non-empty list")
        truth: dict[str, str] = {}
        for r in roles:
            if not isinstance(r, dict) or "role" not in r or "argument" not in r:
                raise SchemaError(line, "each role needs 'role' and 'argument'")
            if r["role"] in truth:
                raise SchemaError(line, f"duplicate role {r['role']!r}")
            truth[_str(r, "role", line)] = _str(r, "argument", line)
        return TaskSample(sid, kind, context, _str(rec, "event_type", line), tuple(truth), truth,
                          rec.get("language") or detect_language(context), meta)

    if kind is TaskKind.STC_S2P:
        gold = _str_list(rec, "sentences_gold_order", line)
        if len(set(gold)) != len(gold):
            raise SchemaError(line, "duplicate sentences in gold order")
        cands = rec.get("candidates") or _shuffled(gold, sid)
        if sorted(cands) != sorted(gold):
            raise SchemaError(line, "candidates must be a permutation of the gold sentences")
        return TaskSample(sid, kind, "", "", tuple(cands), {"order": list(gold)},
                          rec.get("language") or detect_language("".join(gold)), meta)

    if kind is TaskKind.STC_SFB:
        blanked = _str(rec, "blanked_context", line)
        cands = _str_list(rec, "candidates", line)
        try:
            blanks = {int(k): v for k, v in rec["blanks"].items()}
        except (AttributeError, ValueError):
            raise SchemaError(line, "blanks must map blank numbers to sentences") from None
        n = count_blanks(blanked)
        if sorted(blanks) != list(range(1, n + 1)):
            raise SchemaError(line, f"blanks must be numbered 1..{n} to match the [blank] markers")
        if sorted(cands) != sorted(blanks.values()) or len(set(cands)) != len(cands):
            raise SchemaError(line, "candidates must be exactly the blank sentences")
        return TaskSample(sid, kind, blanked, "", tuple(cands), {"blanks": blanks},
                          rec.get("language") or detect_language(blanked), meta)

    cands = _str_list(rec, "candidates", line)
    order = rec["order"]
    if sorted(order) != list(range(len(cands))):
        raise SchemaError(line, "order must be a permutation of candidate indices")
    if len(set(cands)) != len(cands):
        raise SchemaError(line, "duplicate candidates")
    return TaskSample(sid, kind, rec.get("context", ""),
                      rec.get("instruction", "Carry out the events in their natural order."),
                      tuple(cands), {"order": [int(i) for i in order]},
                      rec.get("language", "en"), meta)


def sample_to_record(sample: TaskSample) -> dict:
    kind = sample.kind
    rec: dict[str, Any] = {"id": sample.sample_id, "language": sample.language}
    if "triples_in_context" in sample.meta:
        rec["triples_in_context"] = sample.meta["triples_in_context"]
    gt = sample.ground_truth
    if kind in (TaskKind.MRC_EXTRACTIVE, TaskKind.MRC_MULTICHOICE):
        rec.update(context=sample.context, question=sample.question_or_schema)
        if kind is TaskKind.MRC_EXTRACTIVE:
            rec["answer"] = gt["answer"]
        else:
            rec.update(options=list(sample.meta["options"]), answer_letter=gt["answer_letter"])
    elif kind is TaskKind.RE_TRIPLE:
        rec.update(context=sample.context, relation=sample.question_or_schema, **dict(gt))
    elif kind is TaskKind.EE_EVENT:
        rec.update(context=sample.context, event_type=sample.question_or_schema,
                   roles=[{"role": r, "argument": gt[r]} for r in sample.candidates])
    elif kind is TaskKind.STC_S2P:
        rec.update(sentences_gold_order=list(gt["order"]), candidates=list(sample.candidates))
    elif kind is TaskKind.STC_SFB:
        rec.update(blanked_context=sample.context, candidates=list(sample.candidates),
                   blanks={str(k): v for k, v in sorted(gt["blanks"].items())})
    else:
        rec.update(context=sample.context, instruction=sample.question_or_schema,
                   candidates=list(sample.candidates), order=list(gt["order"]))
    return rec


def ingest(path: str | Path, kind, skip_short: bool = False) -> DatasetFile:
    """Read a JSONL dataset of one task kind.

    With ``skip_short`` MRC contexts under three sentences are dropped
    instead of raising :class:`TooShortContext`.
    """
    kind = TaskKind(kind)
    path = Path(path)
    samples, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SchemaError(line_no, f"invalid JSON: {exc.msg}") from None
            try:
                sample = record_to_sample(rec, kind, line_no)
            except TooShortContext:
                if skip_short:
                    continue
                raise
            except (TypeError, KeyError, AttributeError) as exc:
                raise SchemaError(line_no, f"malformed record: {exc}") from None
            if sample.sample_id in seen:
                raise SchemaError(line_no, f"duplicate sample id {sample.sample_id!r}")
            seen.add(sample.sample_id)
            samples.append(sample)
    languages = {s.language for s in samples}
    language = languages.pop() if len(languages) == 1 else ("mixed" if languages else "en")
    return DatasetFile(path, kind, language, samples)


def write_dataset(samples, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(sample_to_record(s), ensure_ascii=False, sort_keys=True) + "\n")


# -- configuration --------------------------------------------------------------

_ENV_VAR = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def interpolate_env(value):
    """Replace ``${NAME}`` in every string with the environment variable's value."""
    if isinstance(value, str):
        def sub(m):
            if m.group(1) not in os.environ:
                raise ConfigError(f"environment variable {m.group(1)} is not set")
            return os.environ[m.group(1)]
        return _ENV_VAR.sub(sub, value)
    if isinstance(value, list):
        return [interpolate_env(v) for v in value]
    if isinstance(value, dict):
        return {k: interpolate_env(v) for k, v in value.items()}
    return value


def make_executor(spec: Optional[dict]):
    spec = dict(spec or {"kind": "scripted"})
    kind = spec.pop("kind", "scripted")
    if kind == "scripted":
        return ScriptedExecutor.from_dict(spec)
    if kind == "remote":
        return RemoteExecutor(ExecutorConfig(**spec))
    raise ConfigError(f"unknown executor kind {kind!r}")


@dataclass
class RunConfig:
    kind: TaskKind
    train: TrainConfig
    executor: dict = field(default_factory=lambda: {"kind": "scripted"})
    provider: dict = field(default_factory=lambda: {"kind": "hashing", "dimension": 256})
    templates: Optional[Path] = None
    datasets: list[Path] = field(default_factory=list)
    synthetic: Optional[dict] = None
    reward_mode: Optional[RewardMode] = None
    output_dir: Optional[Path] = None
    seed: int = 0


def load_run_config(path: str | Path) -> RunConfig:
    """Load a JSON run config; relative paths resolve against its directory."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    raw = interpolate_env(raw)
    base = path.parent

    def resolve(p):
        q = Path(p)
        return q if q.is_absolute() else base / q

    seed = int(raw.get("seed", 0))
    train = dict(raw.get("train", {}))
    train.setdefault("seed", seed)
    try:
        train_cfg = TrainConfig.from_dict(train)
        kind = TaskKind(raw["kind"])
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    datasets = [resolve(p) for p in raw.get("datasets", [])]
    templates = resolve(raw["templates"]) if raw.get("templates") else None
    for p in datasets + ([templates] if templates else []):
        if not p.exists():
            raise ConfigError(f"referenced path does not exist: {p}")
    if not datasets and not raw.get("synthetic"):
        raise ConfigError("config needs 'datasets' or a 'synthetic' generator block")
    return RunConfig(
        kind=kind,
        train=train_cfg,
        executor=raw.get("executor", {"kind": "scripted"}),
        provider=raw.get("provider", {"kind": "hashing", "dimension": 256}),
        templates=templates,
        datasets=datasets,
        synthetic=raw.get("synthetic"),
        reward_mode=RewardMode(raw["reward_mode"]) if raw.get("reward_mode") else None,
        output_dir=resolve(raw["output_dir"]) if raw.get("output_dir") else None,
        seed=seed,
    )
