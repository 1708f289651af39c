"""Answer scoring: token F1 / exact match for extractive QA, BLEU-1 / ROUGE-L
for abstractive QA, word error rate for transcripts.

F1 and EM use SQuAD-style normalisation (lowercase, strip punctuation, drop
the articles a/an/the).  BLEU-1, ROUGE-L and WER only lowercase and strip
punctuation, so articles count as words there.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
import string
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .errors import InvalidInputError

_ARTICLES = re.compile(r"\b(a|an|the)\b", re.UNICODE)
_PUNCT = str.maketrans("", "", string.punctuation)


def normalize_text(s: str) -> list[str]:
    s = s.lower().translate(_PUNCT)
    return _ARTICLES.sub(" ", s).split()


def plain_tokens(s) -> list[str]:
    """Lowercased, punctuation-free whitespace tokens; token lists pass through."""
    if isinstance(s, str):
        return s.lower().translate(_PUNCT).split()
    return list(s)


def _f_measure(overlap: int, n_pred: int, n_gold: int) -> float:
    if n_pred == 0 and n_gold == 0:
        return 1.0
    if n_pred == 0 or n_gold == 0 or overlap == 0:
        return 0.0
    p = overlap / n_pred
    r = overlap / n_gold
    return 2 * p * r / (p + r)


def token_f1(pred: str, gold: str) -> float:
    p, g = normalize_text(pred), normalize_text(gold)
    overlap = sum((Counter(p) & Counter(g)).values())
    return _f_measure(overlap, len(p), len(g))


def exact_match(pred: str, gold: str) -> int:
    return int(normalize_text(pred) == normalize_text(gold))


def bleu1(pred: str, gold: str) -> float:
    p, g = plain_tokens(pred), plain_tokens(gold)
    if not p:
        return 0.0
    clipped = sum((Counter(p) & Counter(g)).values())
    bp = math.exp(min(0.0, 1.0 - len(g) / len(p)))
    return bp * clipped / len(p)


def _as_ids(a: Sequence[str], b: Sequence[str]):
    index: dict = {}
    ia = np.fromiter((index.setdefault(t, len(index)) for t in a), dtype=np.int64, count=len(a))
    ib = np.fromiter((index.setdefault(t, len(index)) for t in b), dtype=np.int64, count=len(b))
    return ia, ib


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    ia, ib = _as_ids(a, b)
    return kernels.lcs_length(ia, ib)


def edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    ir, ih = _as_ids(ref, hyp)
    return kernels.edit_distance(ir, ih)


def rouge_l(pred: str, gold: str) -> float:
    p, g = plain_tokens(pred), plain_tokens(gold)
    return _f_measure(lcs_length(p, g), len(p), len(g))


def wer(ref, hyp) -> float:
    """Word-level Levenshtein distance over the reference length (may exceed 1)."""
    r, h = plain_tokens(ref), plain_tokens(hyp)
    if not r:
        raise InvalidInputError("reference is empty")
    return edit_distance(r, h) / len(r)


# ---------------------------------------------------------------- reports

EXTRACTIVE_METRICS = ("f1", "em")
ABSTRACTIVE_METRICS = ("bleu1", "rouge_l")
_SCORERS = {"f1": token_f1, "em": exact_match, "bleu1": bleu1, "rouge_l": rouge_l}
CSV_COLUMNS = ("dataset", "n_examples", "f1", "em", "bleu1", "rouge_l", "wer")


@dataclass
class EvalReport:
    dataset_name: str
    n_examples: int
    f1: float | None = None
    em: float | None = None
    bleu1: float | None = None
    rouge_l: float | None = None
    wer: float | None = None
    rows: list = field(default_factory=list)

    def summary(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k != "rows"}

    def to_json(self, with_rows: bool = False) -> str:
        obj = asdict(self) if with_rows else self.summary()
        return json.dumps(obj, sort_keys=True, indent=2)

    def csv_row(self) -> dict:
        s = self.summary()
        return {"dataset": s["dataset_name"], **{c: s[c] for c in CSV_COLUMNS[1:]}}

    def rows_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.rows)


def reports_csv(reports: Sequence[EvalReport], extra: Sequence[dict] | None = None) -> str:
    """CSV with the fixed metric column order; ``extra`` adds leading columns per row."""
    buf = io.StringIO()
    lead = list(extra[0]) if extra else []
    writer = csv.DictWriter(buf, fieldnames=lead + list(CSV_COLUMNS), lineterminator="\n")
    writer.writeheader()
    for i, rep in enumerate(reports):
        row = {k: ("" if v is None else v) for k, v in rep.csv_row().items()}
        if extra:
            row = {**extra[i], **row}
        writer.writerow(row)
    return buf.getvalue()


def evaluate_dataset(predictions: Mapping[str, str], golds: Mapping[str, str], mode: str,
                     dataset_name: str = "dataset") -> EvalReport:
    """Mean per-example scores x 100: F1/EM when extractive, BLEU-1/ROUGE-L when abstractive."""
    if mode == "extractive":
        metrics = EXTRACTIVE_METRICS
    elif mode == "abstractive":
        metrics = ABSTRACTIVE_METRICS
    else:
        raise InvalidInputError(f"unknown mode {mode!r}")
    if set(predictions) != set(golds):
        missing = sorted(set(golds) - set(predictions))[:5]
        extra = sorted(set(predictions) - set(golds))[:5]
        raise InvalidInputError(f"prediction/gold ids differ (missing {missing}, unexpected {extra})")
    if not golds:
        raise InvalidInputError("nothing to evaluate")
    rows = []
    for ex_id in sorted(golds):
        row = {"id": ex_id, "prediction": predictions[ex_id], "gold": golds[ex_id]}
        for m in metrics:
            row[m] = float(_SCORERS[m](predictions[ex_id], golds[ex_id]))
        rows.append(row)
    agg = {m: 100.0 * math.fsum(r[m] for r in rows) / len(rows) for m in metrics}
    return EvalReport(dataset_name, len(rows), rows=rows, **agg)
