"""Joint text + unit vocabulary and the unit-row embedding initialisation."""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError

PAD, BOS, EOS, SEP, UNK = "<pad>", "<s>", "</s>", "<sep>", "<unk>"
SPECIALS = (PAD, BOS, EOS, SEP, UNK)


def unit_token(i: int) -> str:
    return f"<u_{i}>"


@dataclass(frozen=True)
class Vocabulary:
    """IDs: specials first, then text tokens, then ``unit_token_count`` units."""

    text_tokens: tuple
    unit_token_count: int

    def __post_init__(self):
        object.__setattr__(self, "text_tokens", tuple(self.text_tokens))
        tokens = list(SPECIALS) + list(self.text_tokens) + [
            unit_token(i) for i in range(self.unit_token_count)]
        index = {t: i for i, t in enumerate(tokens)}
        if len(index) != len(tokens):
            raise InvalidInputError("vocabulary contains duplicate tokens")
        object.__setattr__(self, "_tokens", tuple(tokens))
        object.__setattr__(self, "_index", index)

    pad_id = 0
    bos_id = 1
    eos_id = 2
    sep_id = 3
    unk_id = 4

    @property
    def special_tokens(self) -> dict:
        return {t: i for i, t in enumerate(SPECIALS)}

    @property
    def total_size(self) -> int:
        return len(self._tokens)

    def __len__(self):
        return len(self._tokens)

    @property
    def text_offset(self) -> int:
        return len(SPECIALS)

    @property
    def unit_offset(self) -> int:
        return len(SPECIALS) + len(self.text_tokens)

    def text_ids(self) -> np.ndarray:
        return np.arange(self.text_offset, self.unit_offset)

    def unit_ids(self) -> np.ndarray:
        return np.arange(self.unit_offset, self.total_size)

    def token_id(self, token: str) -> int:
        return self._index.get(token, self.unk_id)

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    def unit_id(self, unit: int) -> int:
        if not 0 <= unit < self.unit_token_count:
            raise InvalidInputError(f"unit {unit} outside [0, {self.unit_token_count})")
        return self.unit_offset + int(unit)

    def is_unit_id(self, idx: int) -> bool:
        return self.unit_offset <= idx < self.total_size

    def unit_of(self, idx: int) -> int:
        return int(idx) - self.unit_offset

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._tokens[i] for i in ids]

    def to_json(self) -> dict:
        return {"tokens": list(self._tokens), "special_tokens": self.special_tokens,
                "unit_token_count": self.unit_token_count}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        tokens = obj["tokens"]
        k = int(obj["unit_token_count"])
        text = tokens[len(SPECIALS):len(tokens) - k]
        vocab = cls(tuple(text), k)
        if list(vocab._tokens) != list(tokens):
            raise InvalidInputError("vocabulary JSON is not in canonical layout")
        return vocab

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def build_vocabulary(text_corpus: Iterable[str], unit_count: int) -> Vocabulary:
    """Whitespace types ordered by descending frequency, ties lexicographic."""
    if unit_count < 1:
        raise InvalidInputError("unit_count must be >= 1")
    counts: Counter = Counter()
    for line in text_corpus:
        counts.update(line.split())
    reserved = set(SPECIALS) | {unit_token(i) for i in range(unit_count)}
    ordered = sorted((t for t in counts if t not in reserved), key=lambda t: (-counts[t], t))
    return Vocabulary(tuple(ordered), unit_count)


def init_unit_embeddings(table: np.ndarray, vocab: Vocabulary, seed: int) -> np.ndarray:
    """Overwrite every unit row with a copy of a uniformly drawn text row.

    Draws are with replacement, so any ``K`` works with any text vocabulary.
    """
    if table.shape[0] != vocab.total_size:
        raise InvalidInputError(
            f"table has {table.shape[0]} rows, vocabulary has {vocab.total_size}")
    text = vocab.text_ids()
    if text.size == 0:
        raise InvalidInputError("no text-token rows to sample from")
    rng = np.random.default_rng(seed)
    picks = text[rng.integers(0, text.size, size=vocab.unit_token_count)]
    out = table.copy()
    out[vocab.unit_ids()] = table[picks]
    return out


def encode_pair(question: Sequence, passage: Sequence, vocab: Vocabulary, max_len: int,
                units: bool = False) -> list[int]:
    """``[BOS] Q [SEP] P [EOS]``; the passage tail is dropped first when too long.

    With ``units=True`` the inputs are unit IDs rather than text tokens.
    """
    if max_len < 4:
        raise InvalidInputError("max_len must be >= 4")
    if units:
        q = [vocab.unit_id(int(u)) for u in question]
        p = [vocab.unit_id(int(u)) for u in passage]
    else:
        q = [vocab.token_id(t) for t in question]
        p = [vocab.token_id(t) for t in passage]
    room = max_len - 3
    if len(q) > room:
        # only reachable when the question alone overflows
        q = q[:room]
    p = p[:room - len(q)]
    return [vocab.bos_id, *q, vocab.sep_id, *p, vocab.eos_id]
