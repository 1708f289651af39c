"""Two-stage training (text QA, then unit QA) and end-to-end unit inference."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .codec import (Codebook, DurationModel, FrameFeatures, UnitSequence, assign_units,
                    rle_decode, rle_encode)
from .errors import InvalidInputError, InvalidStateError
from .model.config import DecodeConfig
from .model.decode import beam_decode, greedy_decode
from .model.optim import AdamW, make_batch, train_step
from .model.transformer import Seq2SeqModel
from .vocab import Vocabulary, encode_pair, init_unit_embeddings

log = logging.getLogger(__name__)

PRETRAIN_TQA = "pretrain_tqa"
FINETUNE_UNIT = "finetune_unit"

_STAGE_DEFAULTS = {
    PRETRAIN_TQA: {"epochs": 13, "lr": 5e-4, "weight_decay": 0.01},
    FINETUNE_UNIT: {"epochs": 25, "lr": 3e-4, "weight_decay": 1e-3},
}


@dataclass(frozen=True)
class TextQAExample:
    id: str
    question: tuple
    passage: tuple
    answer: tuple
    kind: str = "extractive"

    def __post_init__(self):
        for name in ("question", "passage", "answer"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.question or not self.passage:
            raise InvalidInputError(f"{self.id}: question and passage must be non-empty")
        if self.kind not in ("extractive", "abstractive"):
            raise InvalidInputError(f"{self.id}: unknown kind {self.kind!r}")
        if self.kind == "extractive":
            n = len(self.answer)
            if not any(self.passage[i:i + n] == self.answer
                       for i in range(len(self.passage) - n + 1)):
                raise InvalidInputError(f"{self.id}: extractive answer is not a passage span")


@dataclass(frozen=True)
class UnitQAExample:
    id: str
    question: UnitSequence
    passage: UnitSequence
    answer: UnitSequence | None = None
    span: tuple | None = None
    kind: str = "extractive"


@dataclass(frozen=True)
class TrainSpec:
    """Optimisation settings for one stage.

    ``epoch_scale`` shrinks the epoch count for desk-scale runs while the
    stage defaults stay at their full values.
    """

    stage: str
    epochs: int
    lr: float
    weight_decay: float
    batch_size: int = 16
    seed: int = 0
    epoch_scale: float = 1.0
    warmup_steps: int = 0

    def __post_init__(self):
        if self.stage not in _STAGE_DEFAULTS:
            raise InvalidInputError(f"unknown stage {self.stage!r}")
        if self.epochs < 1 or self.lr <= 0 or self.batch_size < 1 or self.epoch_scale <= 0:
            raise InvalidInputError("epochs, lr, batch_size and epoch_scale must be positive")
        if self.weight_decay < 0:
            raise InvalidInputError("weight_decay must be >= 0")

    @classmethod
    def for_stage(cls, stage: str, **overrides) -> "TrainSpec":
        if stage not in _STAGE_DEFAULTS:
            raise InvalidInputError(f"unknown stage {stage!r}")
        return cls(stage=stage, **{**_STAGE_DEFAULTS[stage], **overrides})

    @property
    def effective_epochs(self) -> int:
        return max(1, int(round(self.epochs * self.epoch_scale)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainSpec":
        stage = obj["stage"]
        return cls.for_stage(stage, **{k: v for k, v in obj.items() if k != "stage"})


@dataclass
class TrainResult:
    model: Seq2SeqModel
    epoch_losses: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)


# ---------------------------------------------------------------- tensors


def text_pair(example: TextQAExample, vocab: Vocabulary, max_len: int):
    enc = encode_pair(example.question, example.passage, vocab, max_len)
    tgt = [vocab.token_id(t) for t in example.answer] + [vocab.eos_id]
    return enc, tgt


def unit_pair(example: UnitQAExample, vocab: Vocabulary, max_len: int):
    if example.answer is None:
        raise InvalidInputError(f"{example.id}: no answer units to train on")
    enc = encode_pair(example.question.units, example.passage.units, vocab, max_len, units=True)
    tgt = [vocab.unit_id(u) for u in example.answer.units] + [vocab.eos_id]
    return enc, tgt


def bucket_batches(pairs, batch_size: int) -> list:
    """Sort by encoder length (stable) and cut into fixed-size batches."""
    order = sorted(range(len(pairs)), key=lambda i: (len(pairs[i][0]), i))
    return [[pairs[i] for i in order[s:s + batch_size]] for s in range(0, len(order), batch_size)]


def fit(model: Seq2SeqModel, pairs, spec: TrainSpec, pad_id: int = 0, bos_id: int = 1,
        log_every: int = 0) -> TrainResult:
    """Teacher-forced AdamW training; batch order reshuffled per epoch from ``spec.seed``."""
    if not pairs:
        raise InvalidInputError("training set is empty")
    batches = [make_batch(b, pad_id, bos_id) for b in bucket_batches(pairs, spec.batch_size)]
    opt = AdamW()
    rng = np.random.default_rng(spec.seed)
    result = TrainResult(model)
    step = 0
    for epoch in range(spec.effective_epochs):
        total = 0.0
        for b in rng.permutation(len(batches)):
            lr = spec.lr * min(1.0, (step + 1) / spec.warmup_steps) if spec.warmup_steps else spec.lr
            _, value = train_step(model, batches[b], lr, spec.weight_decay,
                                  seed=int(rng.integers(2**31)), optimizer=opt)
            result.step_losses.append(value)
            total += value
            step += 1
        result.epoch_losses.append(total / len(batches))
        if log_every and (epoch + 1) % log_every == 0:
            log.info("%s epoch %d/%d loss %.4f", spec.stage, epoch + 1,
                     spec.effective_epochs, result.epoch_losses[-1])
    return result


# ---------------------------------------------------------------- stages


def pretrain_tqa(model: Seq2SeqModel, dataset: Sequence[TextQAExample], spec: TrainSpec,
                 vocab: Vocabulary, log_every: int = 0) -> TrainResult:
    """Teach ``encode_pair(Q_t, P_t) -> A_t EOS`` on text QA."""
    if spec.stage != PRETRAIN_TQA:
        raise InvalidInputError(f"expected a {PRETRAIN_TQA} spec, got {spec.stage}")
    if not dataset:
        raise InvalidInputError("text QA dataset is empty")
    pairs = [text_pair(ex, vocab, model.config.max_len) for ex in dataset]
    result = fit(model, pairs, spec, vocab.pad_id, vocab.bos_id, log_every)
    model.mark_stage(PRETRAIN_TQA)
    return result


def prepare_unit_model(model: Seq2SeqModel, vocab: Vocabulary, seed: int) -> Seq2SeqModel:
    """Copy of ``model`` whose unit-token rows are resampled from its text rows."""
    if vocab.unit_token_count < 1 or model.config.vocab_size != vocab.total_size:
        raise InvalidStateError("model vocabulary does not contain the unit tokens")
    out = model.copy()
    out.params["embed"] = init_unit_embeddings(out.params["embed"], vocab, seed)
    return out


def finetune_unit(model: Seq2SeqModel, dataset: Sequence[UnitQAExample], spec: TrainSpec,
                  vocab: Vocabulary, log_every: int = 0) -> TrainResult:
    """Full fine-tune on unit QA; every parameter, text rows included, stays trainable."""
    if spec.stage != FINETUNE_UNIT:
        raise InvalidInputError(f"expected a {FINETUNE_UNIT} spec, got {spec.stage}")
    if vocab.unit_token_count < 1 or model.config.vocab_size != vocab.total_size:
        raise InvalidStateError("model vocabulary lacks unit tokens; extend it before fine-tuning")
    if not dataset:
        raise InvalidInputError("unit QA dataset is empty")
    pairs = [unit_pair(ex, vocab, model.config.max_len) for ex in dataset]
    result = fit(model, pairs, spec, vocab.pad_id, vocab.bos_id, log_every)
    model.mark_stage(FINETUNE_UNIT)
    return result


# ---------------------------------------------------------------- labels


def convert_extractive_to_unit_labels(example: UnitQAExample, passage_raw: Sequence[int]) -> UnitQAExample:
    """Replace a frame span label by the run-length-encoded units inside it."""
    if example.span is None:
        raise InvalidInputError(f"{example.id}: no answer span")
    start, end = (int(v) for v in example.span)
    if not 0 <= start < end <= len(passage_raw):
        raise InvalidInputError(
            f"{example.id}: span [{start}, {end}) invalid for {len(passage_raw)} passage frames")
    return replace(example, answer=rle_encode(list(passage_raw[start:end])))


def quantize(features: FrameFeatures, codebook: Codebook) -> tuple[list, UnitSequence]:
    raw = assign_units(features, codebook).tolist()
    return raw, rle_encode(raw, codebook.k)


# ---------------------------------------------------------------- inference


@dataclass(frozen=True)
class UnitAnswer:
    """Decoded answer: deduplicated units with predicted durations, and the
    frame-level stream a vocoder would consume."""

    units: UnitSequence
    raw_units: tuple
    empty: bool


def decode_ids(model: Seq2SeqModel, enc_ids, config: DecodeConfig, vocab: Vocabulary) -> list:
    if config.beam_size == 1:
        return greedy_decode(model, enc_ids, config.max_new_tokens, vocab.bos_id, vocab.eos_id)
    return beam_decode(model, enc_ids, config, vocab.bos_id, vocab.eos_id)


def answer_from_ids(ids, vocab: Vocabulary, duration_model: DurationModel) -> UnitAnswer:
    units = [vocab.unit_of(i) for i in ids if vocab.is_unit_id(i)]
    seq = duration_model.expand(units)
    return UnitAnswer(seq, tuple(rle_decode(seq)), empty=len(seq) == 0)


def infer_unit_ids(model, question: UnitSequence, passage: UnitSequence, vocab: Vocabulary,
                   config: DecodeConfig) -> list:
    enc = encode_pair(question.units, passage.units, vocab, model.config.max_len, units=True)
    return decode_ids(model, enc, config, vocab)


def infer_answer(model: Seq2SeqModel, question_features: FrameFeatures,
                 passage_features: FrameFeatures, codebook: Codebook,
                 duration_model: DurationModel, vocab: Vocabulary,
                 decode_config: DecodeConfig = DecodeConfig()) -> UnitAnswer:
    """Features in, re-duplicated answer units out."""
    _, q = quantize(question_features, codebook)
    _, p = quantize(passage_features, codebook)
    ids = infer_unit_ids(model, q, p, vocab, decode_config)
    return answer_from_ids(ids, vocab, duration_model)


def infer_text(model: Seq2SeqModel, question, passage, vocab: Vocabulary,
               decode_config: DecodeConfig = DecodeConfig()) -> list[str]:
    enc = encode_pair(question, passage, vocab, model.config.max_len)
    ids = decode_ids(model, enc, decode_config, vocab)
    return [vocab.token(i) for i in ids if vocab.text_offset <= i < vocab.unit_offset]


def predict_text_answers(model: Seq2SeqModel, examples: Sequence[TextQAExample], vocab: Vocabulary,
                         decode_config: DecodeConfig = DecodeConfig()) -> dict:
    """``id -> answer string`` for text QA."""
    return {ex.id: " ".join(infer_text(model, ex.question, ex.passage, vocab, decode_config))
            for ex in examples}


def predict_unit_answers(model: Seq2SeqModel, examples: Sequence[UnitQAExample], vocab: Vocabulary,
                         transcriber, decode_config: DecodeConfig = DecodeConfig()) -> dict:
    """``id -> transcript`` of each decoded unit answer.

    ``transcriber`` maps unit IDs to text; it stands in for running ASR on
    synthesised answer speech.
    """
    out = {}
    for ex in examples:
        ids = infer_unit_ids(model, ex.question, ex.passage, vocab, decode_config)
        out[ex.id] = transcriber.text([vocab.unit_of(i) for i in ids if vocab.is_unit_id(i)])
    return out


# ---------------------------------------------------------------- manifests


def manifest_record(example_id: str, kind: str, question_text, passage_text, answer_text,
                    question: UnitSequence | None = None, passage: UnitSequence | None = None,
                    span: tuple | None = None, **extra) -> dict:
    rec = {"id": example_id, "kind": kind, "question_text": " ".join(question_text),
           "passage_text": " ".join(passage_text), "answer_text": " ".join(answer_text)}
    if question is not None:
        rec["question_units"] = list(question.units)
        rec["question_durations"] = list(question.durations)
    if passage is not None:
        rec["passage_units"] = list(passage.units)
        rec["passage_durations"] = list(passage.durations)
    if span is not None:
        rec["answer_span_frames"] = [int(span[0]), int(span[1])]
    rec.update(extra)
    return rec


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def text_example_from_record(rec: dict) -> TextQAExample:
    return TextQAExample(rec["id"], rec["question_text"].split(), rec["passage_text"].split(),
                         rec["answer_text"].split(), rec["kind"])


def unit_example_from_record(rec: dict) -> UnitQAExample:
    q = UnitSequence(rec["question_units"], rec["question_durations"])
    p = UnitSequence(rec["passage_units"], rec["passage_durations"])
    ans = None
    if "answer_units" in rec:
        ans = UnitSequence(rec["answer_units"], rec["answer_durations"])
    span = tuple(rec["answer_span_frames"]) if rec.get("answer_span_frames") else None
    return UnitQAExample(rec["id"], q, p, ans, span, rec["kind"])
