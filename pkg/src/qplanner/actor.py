"""Actor model: a frozen text embedder followed by a trainable linear Q-head."""

from __future__ import annotations

import os
import re
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import httpx
import numpy as np

from qplanner.errors import DimensionMismatch, EmbeddingTransport, EmptyActionSpace
from qplanner.mdp import ActionSpace, StateRecord, SubtaskAction, build_scoring_sequence

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MIX = 0x9E3779B97F4A7C15
# CJK ideographs are tokens on their own; everything else splits on non-word chars.
_TOKEN = re.compile(r"[㐀-䶿一-鿿豈-﫿]|[^\W_]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@lru_cache(maxsize=1 << 16)
def hash64(token: str) -> int:
    """FNV-1a over UTF-8 bytes, then a multiplicative (Fibonacci) mix."""
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return (h * _MIX) & _MASK64


class HashingFeaturizer:
    kind = "hashing"

    def __init__(self, dimension: int = 256, token_index: Optional[Callable[[str], int]] = None):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self._index = token_index or (lambda tok: (hash64(tok) >> 32) % dimension)

    def embed(self, text: str) -> np.ndarray:
        v = np.zeros(self.dimension)
        for tok in tokenize(text):
            v[self._index(tok)] += 1.0
        norm = np.linalg.norm(v)
        if norm > 0:
            v /= norm
        return v

    def describe(self) -> dict:
        return {"kind": self.kind, "dimension": self.dimension}


class RemoteEmbeddingProvider:
    """Embedding endpoint speaking ``{model, input: [text]} -> data[0].embedding``.

    Pooling (first token for encoders, last for decoders) is the server's job.
    """

    kind = "remote"

    def __init__(
        self,
        endpoint_url: str,
        model_name: str,
        dimension: int,
        api_key_ref: Optional[str] = None,
        timeout: float = 30.0,
        client: Optional[httpx.Client] = None,
    ):
        self.endpoint_url = endpoint_url
        self.model_name = model_name
        self.dimension = dimension
        self.api_key_ref = api_key_ref
        self._client = client or httpx.Client(timeout=timeout)

    def embed(self, text: str) -> np.ndarray:
        key = os.environ.get(self.api_key_ref) if self.api_key_ref else None
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        try:
            resp = self._client.post(
                self.endpoint_url,
                json={"model": self.model_name, "input": [text]},
                headers=headers,
            )
            resp.raise_for_status()
            vec = resp.json()["data"][0]["embedding"]
        except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
            raise EmbeddingTransport(f"embedding request failed: {exc}") from exc
        v = np.asarray(vec, dtype=float)
        if v.shape != (self.dimension,):
            raise DimensionMismatch(
                f"endpoint returned {v.shape} embedding, expected ({self.dimension},)"
            )
        if not np.all(np.isfinite(v)):
            raise EmbeddingTransport("endpoint returned non-finite embedding components")
        return v

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "dimension": self.dimension,
            "endpoint_url": self.endpoint_url,
            "model_name": self.model_name,
            "api_key_ref": self.api_key_ref,
        }


def provider_from_descriptor(desc: dict):
    kind = desc.get("kind", "hashing")
    if kind == "hashing":
        return HashingFeaturizer(int(desc.get("dimension", 256)))
    if kind == "remote":
        return RemoteEmbeddingProvider(
            desc["endpoint_url"],
            desc["model_name"],
            int(desc["dimension"]),
            desc.get("api_key_ref"),
        )
    raise ValueError(f"unknown embedding provider kind {kind!r}")


class EmbeddingCache:
    """Bounded LRU keyed by exact sequence text."""

    def __init__(self, provider, maxsize: int = 10_000):
        self.provider = provider
        self.maxsize = maxsize
        self._store: OrderedDict[str, np.ndarray] = OrderedDict()
        self.hits = self.misses = 0

    @property
    def dimension(self) -> int:
        return self.provider.dimension

    def embed(self, text: str) -> np.ndarray:
        v = self._store.get(text)
        if v is not None:
            self._store.move_to_end(text)
            self.hits += 1
            return v
        self.misses += 1
        v = np.asarray(self.provider.embed(text), dtype=float)
        if v.shape != (self.dimension,):
            raise DimensionMismatch(f"provider returned shape {v.shape}")
        v.flags.writeable = False
        self._store[text] = v
        if len(self._store) > self.maxsize:
            self._store.popitem(last=False)
        return v

    def __len__(self) -> int:
        return len(self._store)


@dataclass(frozen=True)
class QHead:
    W: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        w = np.array(self.W, dtype=float)
        if w.ndim != 1:
            raise ValueError("W must be a vector")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.b)):
            raise ValueError("head parameters must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "W", w)
        object.__setattr__(self, "b", float(self.b))

    @classmethod
    def zeros(cls, dimension: int) -> "QHead":
        return cls(np.zeros(dimension), 0.0)

    @property
    def dimension(self) -> int:
        return self.W.shape[0]

    def __call__(self, h: np.ndarray) -> np.ndarray:
        return h @ self.W + self.b


class ActorModel:
    """Embedding provider plus an online head and its delayed target copy."""

    def __init__(self, provider, head: Optional[QHead] = None, target_head: Optional[QHead] = None,
                 cache_size: int = 10_000):
        self.embedder = EmbeddingCache(provider, cache_size)
        d = provider.dimension
        self.head = head if head is not None else QHead.zeros(d)
        self.target_head = target_head if target_head is not None else self.head
        self.learn_steps = 0
        if self.head.dimension != d or self.target_head.dimension != d:
            raise DimensionMismatch(
                f"head dimension {self.head.dimension} does not match provider dimension {d}"
            )

    @property
    def provider(self):
        return self.embedder.provider

    @property
    def dimension(self) -> int:
        return self.embedder.dimension

    def features(self, state: StateRecord, actions: Sequence[SubtaskAction]) -> np.ndarray:
        """Embedding matrix with one row per candidate action."""
        if not actions:
            return np.zeros((0, self.dimension))
        return np.stack([embed(self.embedder, build_scoring_sequence(a, state)) for a in actions])

    def select_head(self, which: str) -> QHead:
        if which == "online":
            return self.head
        if which == "target":
            return self.target_head
        raise ValueError(f"unknown head {which!r}")


def embed(provider, text: str) -> np.ndarray:
    if text is None:
        raise TypeError("text must not be None")
    return provider.embed(text)


def q_value(actor: ActorModel, state: StateRecord, action: SubtaskAction, which: str = "online") -> float:
    h = embed(actor.embedder, build_scoring_sequence(action, state))
    return float(actor.select_head(which)(h))


def q_values(actor: ActorModel, state: StateRecord, actions: Sequence[SubtaskAction],
             which: str = "online") -> np.ndarray:
    return actor.select_head(which)(actor.features(state, actions))


def _argmax_lowest_id(actions: Sequence[SubtaskAction], qs: np.ndarray) -> SubtaskAction:
    best = qs.max()
    return min((a for a, q in zip(actions, qs) if q == best), key=lambda a: a.action_id)


def select_greedy(actor: ActorModel, state: StateRecord, space: ActionSpace) -> SubtaskAction:
    if not space.remaining:
        raise EmptyActionSpace("cannot select from an empty action space")
    actions = space.remaining
    if len(actions) == 1:
        return actions[0]
    return _argmax_lowest_id(actions, q_values(actor, state, actions))


def select_epsilon_greedy(actor: ActorModel, state: StateRecord, space: ActionSpace,
                          epsilon: float, rng: np.random.Generator) -> SubtaskAction:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if not space.remaining:
        raise EmptyActionSpace("cannot select from an empty action space")
    if rng.random() <= 1.0 - epsilon:
        return select_greedy(actor, state, space)
    return space.remaining[int(rng.integers(len(space.remaining)))]


def head_gradient(head: QHead, h: np.ndarray, y: float):
    """Gradient of the squared TD error ``(y - q)**2`` for a single example."""
    err = y - float(head(h))
    return -2.0 * err * np.asarray(h, dtype=float), -2.0 * err, err * err


def batch_gradient(head: QHead, H: np.ndarray, y: np.ndarray):
    """Mean of :func:`head_gradient` over the rows of ``H``."""
    err = y - head(H)
    n = len(y)
    return -2.0 * (err @ H) / n, float(-2.0 * err.mean()), float((err * err).mean())


def sgd_update(head: QHead, gW: np.ndarray, gb: float, lr: float) -> QHead:
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    return QHead(head.W - lr * np.asarray(gW), head.b - lr * gb)
