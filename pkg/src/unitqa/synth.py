"""Deterministic generator of small "spoken" QA corpora.

Every word has a fixed phoneme spelling, every phoneme a prototype feature
vector; a word is voiced by emitting each of its phonemes for 2-4 frames with
Gaussian jitter.  Phonemes fall into three disjoint classes (onset, nucleus,
coda) and every spelling is ``onset [nucleus] coda``, so neighbouring phonemes
are never identical, not even across word boundaries, and a phoneme stream can
be cut back into words at each onset.

Passages are random content words with a few marker words, each marker
followed by a fixed-length span.  Extractive questions ask for the span after
a marker; abstractive questions ask for its first and last word joined by a
connector word that never occurs in passages.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .codec import FrameFeatures
from .errors import InvalidInputError

EXTRACTIVE = "extractive"
ABSTRACTIVE = "abstractive"
CONNECTOR = "and"
EXTRACTIVE_QUESTION = ("what", "follows")
ABSTRACTIVE_QUESTION = ("what", "brackets")


@dataclass(frozen=True)
class GeneratorSpec:
    phoneme_count: int = 40
    feature_dim: int = 16
    prototype_separation: float = 6.0
    jitter_sigma: float = 0.3
    n_words: int = 120
    n_markers: int = 8
    markers_per_passage: int = 2
    span_len: int = 3
    tokens_per_passage: tuple = (30, 80)
    duration_range: tuple = (2, 4)
    n_pretrain: int = 2000
    pretrain_abstractive_fraction: float = 0.5
    n_train: int = 2000
    n_dev: int = 200
    n_test: int = 200
    n_abstractive_test: int = 200
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens_per_passage", tuple(self.tokens_per_passage))
        object.__setattr__(self, "duration_range", tuple(self.duration_range))
        if self.phoneme_count < 6:
            raise InvalidInputError("need at least 6 phonemes (two per class)")
        lo, hi = self.duration_range
        if lo < 2 or hi < lo:
            raise InvalidInputError("duration range must satisfy 2 <= d_min <= d_max")
        lo, hi = self.tokens_per_passage
        if lo < self.markers_per_passage * (self.span_len + 1) or hi < lo:
            raise InvalidInputError("passages too short for their marked spans")
        if self.span_len < 2:
            raise InvalidInputError("span_len must be >= 2 so abstractive answers are non-contiguous")
        if self.markers_per_passage > self.n_markers or self.markers_per_passage < 1:
            raise InvalidInputError("markers_per_passage must lie in [1, n_markers]")
        if self.jitter_sigma < 0 or self.prototype_separation <= 0:
            raise InvalidInputError("jitter must be >= 0 and separation > 0")
        if not 0.0 <= self.pretrain_abstractive_fraction <= 1.0:
            raise InvalidInputError("pretrain_abstractive_fraction must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "GeneratorSpec":
        return cls(**obj)


@dataclass
class GoldMap:
    """Word <-> phoneme spelling table plus the phoneme prototypes."""

    spellings: dict
    prototypes: np.ndarray
    onsets: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self._reverse = {tuple(v): k for k, v in self.spellings.items()}
        if len(self._reverse) != len(self.spellings):
            raise InvalidInputError("spellings are not unique")

    def phonemes(self, tokens) -> list[int]:
        out = []
        for tok in tokens:
            if tok not in self.spellings:
                raise InvalidInputError(f"unknown token {tok!r}")
            out.extend(self.spellings[tok])
        return out

    def words(self, phonemes) -> list[str]:
        """Cut a phoneme stream at onsets and spell each chunk back.

        Chunks with no matching word come back as ``<unk>``.
        """
        chunks, cur = [], []
        for ph in phonemes:
            if ph in self.onsets and cur:
                chunks.append(cur)
                cur = []
            cur.append(int(ph))
        if cur:
            chunks.append(cur)
        return [self._reverse.get(tuple(c), "<unk>") for c in chunks]

    def to_json(self) -> dict:
        return {"spellings": {k: list(v) for k, v in self.spellings.items()},
                "prototypes": self.prototypes.tolist(), "onsets": sorted(self.onsets)}

    @classmethod
    def from_json(cls, obj: dict) -> "GoldMap":
        return cls({k: tuple(v) for k, v in obj["spellings"].items()},
                   np.asarray(obj["prototypes"], dtype=np.float64), frozenset(obj["onsets"]))


@dataclass
class SpokenExample:
    """One QA item; features and span are absent for text-only items."""

    id: str
    kind: str
    question: list
    passage: list
    answer: list
    answer_token_span: tuple | None = None
    question_features: FrameFeatures | None = None
    passage_features: FrameFeatures | None = None
    question_phonemes: list | None = None
    passage_phonemes: list | None = None
    answer_span_frames: tuple | None = None


@dataclass
class Corpus:
    spec: GeneratorSpec
    goldmap: GoldMap
    text_pretrain: list
    unit_train: list
    unit_dev: list
    unit_test: list
    unit_abstractive_test: list

    def splits(self) -> dict:
        return {"text_pretrain": self.text_pretrain, "unit_train": self.unit_train,
                "unit_dev": self.unit_dev, "unit_test": self.unit_test,
                "unit_abstractive_test": self.unit_abstractive_test}


def vocabulary_words(spec: GeneratorSpec) -> tuple[list, list, list]:
    content = [f"w{i:03d}" for i in range(spec.n_words)]
    markers = [f"m{i}" for i in range(spec.n_markers)]
    function = sorted(set(EXTRACTIVE_QUESTION) | set(ABSTRACTIVE_QUESTION) | {CONNECTOR})
    return content, markers, function


def make_prototypes(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    """Random directions rescaled so the closest pair sits at the separation."""
    protos = rng.normal(size=(spec.phoneme_count, spec.feature_dim))
    diff = protos[:, None, :] - protos[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    np.fill_diagonal(dist, np.inf)
    return protos * (spec.prototype_separation / dist.min())


def make_goldmap(spec: GeneratorSpec, rng: np.random.Generator) -> GoldMap:
    p = spec.phoneme_count
    third = p // 3
    onsets = list(range(third))
    nuclei = list(range(third, 2 * third))
    codas = list(range(2 * third, p))
    content, markers, function = vocabulary_words(spec)
    words = function + markers + content
    capacity = len(onsets) * len(codas) * (1 + len(nuclei))
    if len(words) > capacity:
        raise InvalidInputError(f"{len(words)} words exceed {capacity} distinct spellings")
    used = set()
    spellings = {}
    for w in words:
        while True:
            o = onsets[rng.integers(len(onsets))]
            c = codas[rng.integers(len(codas))]
            if rng.random() < 0.5:
                spelling = (o, c)
            else:
                spelling = (o, nuclei[rng.integers(len(nuclei))], c)
            if spelling not in used:
                break
        used.add(spelling)
        spellings[w] = spelling
    return GoldMap(spellings, make_prototypes(spec, rng), frozenset(onsets))


def generate_features(tokens, spec: GeneratorSpec, goldmap: GoldMap, rng: np.random.Generator):
    """Frames for a token sequence plus each token's ``[start, end)`` frame span."""
    frames = []
    phones = []
    spans = []
    pos = 0
    lo, hi = spec.duration_range
    for tok in tokens:
        start = pos
        for ph in goldmap.phonemes([tok]):
            d = int(rng.integers(lo, hi + 1))
            frames.append(np.repeat(goldmap.prototypes[ph][None], d, axis=0))
            phones.extend([ph] * d)
            pos += d
        spans.append((start, pos))
    if frames:
        mat = np.concatenate(frames, axis=0)
        mat = mat + rng.normal(0.0, spec.jitter_sigma, size=mat.shape) if spec.jitter_sigma else mat
    else:
        mat = np.zeros((0, spec.feature_dim))
    return FrameFeatures(mat), spans, phones


def _passage(spec: GeneratorSpec, rng, content, markers):
    """Random passage with marked spans; returns tokens, chosen marker, span start."""
    lo, hi = spec.tokens_per_passage
    n = int(rng.integers(lo, hi + 1))
    chosen = rng.choice(len(markers), size=spec.markers_per_passage, replace=False)
    block = spec.span_len + 1
    free = n - block * spec.markers_per_passage
    cuts = np.sort(rng.integers(0, free + 1, size=spec.markers_per_passage))
    tokens = []
    starts = []
    filler = [content[i] for i in rng.integers(0, len(content), size=free)]
    prev = 0
    for m_idx, cut in zip(chosen, cuts):
        tokens.extend(filler[prev:cut])
        prev = cut
        tokens.append(markers[m_idx])
        starts.append(len(tokens))
        tokens.extend(content[i] for i in rng.integers(0, len(content), size=spec.span_len))
    tokens.extend(filler[prev:])
    pick = int(rng.integers(spec.markers_per_passage))
    return tokens, markers[chosen[pick]], starts[pick]


def make_example(idx: str, kind: str, spec: GeneratorSpec, rng, words) -> SpokenExample:
    content, markers, _ = words
    passage, marker, start = _passage(spec, rng, content, markers)
    span = passage[start:start + spec.span_len]
    if kind == EXTRACTIVE:
        question = [*EXTRACTIVE_QUESTION, marker]
        answer = list(span)
    else:
        question = [*ABSTRACTIVE_QUESTION, marker]
        answer = [span[0], CONNECTOR, span[-1]]
    return SpokenExample(idx, kind, question, passage, answer,
                         answer_token_span=(start, start + spec.span_len))


def voice(example: SpokenExample, spec: GeneratorSpec, goldmap: GoldMap, rng) -> SpokenExample:
    qf, _, qph = generate_features(example.question, spec, goldmap, rng)
    pf, spans, pph = generate_features(example.passage, spec, goldmap, rng)
    s, e = example.answer_token_span
    example.question_features = qf
    example.passage_features = pf
    example.question_phonemes = qph
    example.passage_phonemes = pph
    example.answer_span_frames = (spans[s][0], spans[e - 1][1])
    return example


def is_contiguous_in(needle, haystack) -> bool:
    n = len(needle)
    return any(list(haystack[i:i + n]) == list(needle) for i in range(len(haystack) - n + 1))


def generate_corpus(spec: GeneratorSpec) -> Corpus:
    """All splits from one seed; each split draws from its own child stream."""
    root = np.random.SeedSequence(spec.seed)
    map_seq, pre_seq, train_seq, dev_seq, test_seq, abs_seq = root.spawn(6)
    goldmap = make_goldmap(spec, np.random.default_rng(map_seq))
    words = vocabulary_words(spec)
    seen: set = set()

    def build(name, n, seq, kinds, spoken):
        rng = np.random.default_rng(seq)
        out = []
        while len(out) < n:
            ex = make_example(f"{name}-{len(out):05d}", kinds(rng), spec, rng, words)
            key = (tuple(ex.question), tuple(ex.passage))
            if key in seen:
                continue
            seen.add(key)
            out.append(voice(ex, spec, goldmap, rng) if spoken else ex)
        return out

    frac = spec.pretrain_abstractive_fraction
    pretrain = build("tqa", spec.n_pretrain, pre_seq,
                     lambda r: ABSTRACTIVE if r.random() < frac else EXTRACTIVE, False)
    train = build("train", spec.n_train, train_seq, lambda r: EXTRACTIVE, True)
    dev = build("dev", spec.n_dev, dev_seq, lambda r: EXTRACTIVE, True)
    test = build("test", spec.n_test, test_seq, lambda r: EXTRACTIVE, True)
    abstractive = build("abs", spec.n_abstractive_test, abs_seq, lambda r: ABSTRACTIVE, True)
    return Corpus(spec, goldmap, pretrain, train, dev, test, abstractive)


def goldmap_json(goldmap: GoldMap) -> str:
    return json.dumps(goldmap.to_json(), sort_keys=True)
