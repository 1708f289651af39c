"""Transcript corruption at a controlled word error rate, and the sweep that
compares a cascade (transcript -> text QA) arm against the end-to-end unit arm.

Corruption applies one random edit at a time (substitution, insertion or
deletion drawn from ``op_mix``) and re-measures the word-level edit distance
after each, stopping the moment it reaches the target count.  A single edit
moves the distance by at most one, so the target is hit exactly whenever the
available operations allow it.  Over a corpus the per-transcript targets are
assigned by error diffusion, so the corpus WER lands within one edit of the
requested level.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from . import kernels
from .errors import InvalidInputError, InvalidStateError
from .metrics import EvalReport, evaluate_dataset
from .model.config import DecodeConfig
from .pipeline import PRETRAIN_TQA, TextQAExample, predict_text_answers

SUBSTITUTE, INSERT, DELETE = 0, 1, 2
DEFAULT_LEVELS = (0.0, 0.1, 0.2, 0.3, 0.4)


class CorruptionWarning(UserWarning):
    """The requested WER could not be reached with the allowed operations."""


@dataclass(frozen=True)
class CorruptionSpec:
    target_wer: float
    op_mix: tuple = (0.6, 0.2, 0.2)
    seed: int = 0
    tolerance: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "op_mix", tuple(float(v) for v in self.op_mix))
        if not 0.0 <= self.target_wer <= 1.0:
            raise InvalidInputError("target_wer must lie in [0, 1]")
        if len(self.op_mix) != 3 or min(self.op_mix) < 0 or not math.isclose(sum(self.op_mix), 1.0):
            raise InvalidInputError("op_mix must be three non-negative proportions summing to 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CorruptionResult:
    tokens: list
    edits: int
    target_edits: int
    reference_length: int

    @property
    def measured_wer(self) -> float:
        return self.edits / self.reference_length if self.reference_length else 0.0

    @property
    def reached(self) -> bool:
        return self.edits == self.target_edits


def _distance(ref_ids: np.ndarray, hyp: list, index: dict) -> int:
    hyp_ids = np.fromiter((index.setdefault(t, len(index)) for t in hyp), dtype=np.int64,
                          count=len(hyp))
    return kernels.edit_distance(ref_ids, hyp_ids)


def _corrupt(tokens: Sequence[str], target_edits: int, spec: CorruptionSpec, vocabulary: Sequence[str],
             rng: np.random.Generator) -> CorruptionResult:
    ref = list(tokens)
    index: dict = {}
    ref_ids = np.fromiter((index.setdefault(t, len(index)) for t in ref), dtype=np.int64,
                          count=len(ref))
    hyp = list(ref)
    # original tokens not yet substituted or deleted
    untouched = list(range(len(hyp)))
    origin = list(range(len(hyp)))
    mix = np.asarray(spec.op_mix)
    edits = 0
    budget = 4 * target_edits + 8
    while edits != target_edits and budget > 0:
        budget -= 1
        allowed = mix.copy()
        if not untouched:
            allowed[SUBSTITUTE] = allowed[DELETE] = 0.0
        if len(vocabulary) < 2:
            allowed[SUBSTITUTE] = 0.0
        if allowed.sum() <= 0:
            break
        op = int(rng.choice(3, p=allowed / allowed.sum()))
        if op == INSERT:
            at = int(rng.integers(len(hyp) + 1))
            hyp.insert(at, vocabulary[int(rng.integers(len(vocabulary)))])
            origin.insert(at, -1)
        else:
            pick = int(rng.integers(len(untouched)))
            orig = untouched.pop(pick)
            at = origin.index(orig)
            if op == DELETE:
                del hyp[at]
                del origin[at]
            else:
                choices = [v for v in vocabulary if v != hyp[at]]
                hyp[at] = choices[int(rng.integers(len(choices)))]
                origin[at] = -1
        edits = _distance(ref_ids, hyp, index)
    return CorruptionResult(hyp, edits, target_edits, len(ref))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def corrupt_transcript(tokens: Sequence[str], spec: CorruptionSpec,
                       vocabulary: Sequence[str] | None = None) -> list:
    """Corrupted copy of ``tokens`` with WER as close to the target as reachable.

    ``vocabulary`` supplies substitution and insertion tokens (default: the
    distinct input tokens).  Emits a ``CorruptionWarning`` when the result
    misses the target by more than the tolerance.
    """
    result = corrupt_transcript_detailed(tokens, spec, vocabulary)
    return result.tokens


def corrupt_transcript_detailed(tokens: Sequence[str], spec: CorruptionSpec,
                                vocabulary: Sequence[str] | None = None) -> CorruptionResult:
    if not tokens:
        raise InvalidInputError("cannot corrupt an empty transcript")
    vocab = sorted(set(vocabulary if vocabulary is not None else tokens))
    rng = np.random.default_rng(spec.seed)
    target = _round_half_up(spec.target_wer * len(tokens))
    result = _corrupt(tokens, target, spec, vocab, rng)
    if abs(result.measured_wer - spec.target_wer) > spec.tolerance:
        warnings.warn(f"requested WER {spec.target_wer:.3f}, reached {result.measured_wer:.3f}",
                      CorruptionWarning, stacklevel=2)
    return result


def corrupt_corpus(transcripts: Sequence[Sequence[str]], spec: CorruptionSpec,
                   vocabulary: Sequence[str]) -> tuple[list, float]:
    """Corrupt every transcript; returns the outputs and the pooled WER.

    Each transcript's edit target is the rounded running total
    ``target_wer * (tokens so far)`` minus edits already assigned.
    """
    vocab = sorted(set(vocabulary))
    rng = np.random.default_rng(spec.seed)
    out, edits, length, assigned = [], 0, 0, 0
    for tokens in transcripts:
        if not tokens:
            raise InvalidInputError("cannot corrupt an empty transcript")
        length += len(tokens)
        target = min(max(_round_half_up(spec.target_wer * length) - assigned, 0), 4 * len(tokens))
        res = _corrupt(tokens, target, spec, vocab, rng)
        assigned += target
        edits += res.edits
        out.append(res.tokens)
    measured = edits / length if length else 0.0
    if abs(measured - spec.target_wer) > spec.tolerance:
        warnings.warn(f"requested WER {spec.target_wer:.3f}, reached {measured:.3f}",
                      CorruptionWarning, stacklevel=2)
    return out, measured


# ---------------------------------------------------------------- arms


def cascade_predictions(text_model, dataset: Sequence[TextQAExample], corruption: CorruptionSpec,
                        vocab, decode_config: DecodeConfig = DecodeConfig()) -> tuple[dict, float]:
    """Corrupt questions and passages, then answer with the text model.

    Returns ``id -> answer string`` and the measured corpus WER.
    """
    if PRETRAIN_TQA not in text_model.stages:
        raise InvalidStateError("cascade arm needs a text model trained on text QA")
    if not dataset:
        raise InvalidInputError("dataset is empty")
    text_vocab = [vocab.token(i) for i in vocab.text_ids()]
    transcripts = [t for ex in dataset for t in (ex.question, ex.passage)]
    corrupted, measured = corrupt_corpus(transcripts, corruption, text_vocab)
    # kind is irrelevant past this point; abstractive skips the span check
    noisy = [TextQAExample(ex.id, corrupted[2 * i] or ("<unk>",), corrupted[2 * i + 1] or ("<unk>",),
                           ex.answer, "abstractive")
             for i, ex in enumerate(dataset)]
    return predict_text_answers(text_model, noisy, vocab, decode_config), measured


def run_cascade_arm(text_model, dataset: Sequence[TextQAExample], corruption: CorruptionSpec,
                    vocab, decode_config: DecodeConfig = DecodeConfig(),
                    dataset_name: str = "cascade") -> tuple[EvalReport, float]:
    """Cascade F1/EM under ``corruption`` plus the measured corpus WER."""
    preds, measured = cascade_predictions(text_model, dataset, corruption, vocab, decode_config)
    golds = {ex.id: " ".join(ex.answer) for ex in dataset}
    return evaluate_dataset(preds, golds, "extractive", dataset_name), measured


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    tolerance: float = 0.02

    COLUMNS = ("level_requested", "level_measured", "cascade_f1", "e2e_f1")

    @property
    def spearman(self) -> float | None:
        levels = [r["level_requested"] for r in self.rows]
        scores = [r["cascade_f1"] for r in self.rows]
        if len(self.rows) < 2 or len(set(scores)) < 2:
            return None
        return float(spearmanr(levels, scores).statistic)

    @property
    def within_tolerance(self) -> bool:
        return all(abs(r["level_measured"] - r["level_requested"]) <= self.tolerance + 1e-12
                   for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: row[k] for k in self.COLUMNS})
        return buf.getvalue()

    def summary(self) -> dict:
        drop = self.rows[0]["cascade_f1"] - self.rows[-1]["cascade_f1"] if self.rows else None
        return {"rows": self.rows, "spearman": self.spearman, "cascade_drop": drop,
                "within_tolerance": self.within_tolerance, "tolerance": self.tolerance}

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2)


def wer_sweep(text_model, e2e_report: EvalReport, dataset: Sequence[TextQAExample], vocab,
              levels: Sequence[float] = DEFAULT_LEVELS, decode_config: DecodeConfig = DecodeConfig(),
              op_mix=(0.6, 0.2, 0.2), seed: int = 0) -> SweepResult:
    """Cascade F1 at each WER level next to the end-to-end F1.

    The end-to-end arm never reads transcripts, so its report is computed
    once by the caller and its F1 repeated on every row.
    """
    levels = [float(v) for v in levels]
    if not levels:
        raise InvalidInputError("no WER levels given")
    if levels != sorted(levels):
        raise InvalidInputError("levels must be sorted ascending")
    result = SweepResult()
    for level in levels:
        spec = CorruptionSpec(level, op_mix, seed)
        report, measured = run_cascade_arm(text_model, dataset, spec, vocab, decode_config)
        result.rows.append({"level_requested": level, "level_measured": measured,
                            "cascade_f1": report.f1, "e2e_f1": e2e_report.f1})
    return result
