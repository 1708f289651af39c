import json
import math

import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from unitqa import kernels
from unitqa.errors import InvalidInputError
from unitqa.metrics import (bleu1, edit_distance, evaluate_dataset, exact_match, lcs_length,
                            normalize_text, reports_csv, rouge_l, token_f1, wer)

from oracles import (bleu1_oracle, edit_matrix, em_oracle, f1_oracle, lcs_matrix,
                     rouge_l_oracle, wer_oracle)

TABLE4_PRED = "live the life of any"
TABLE4_GOLD = "To live the life of a normal member of the British ruling class."

WORDS = ["a", "an", "the", "cat", "Dog", "dog.", "x", "y", "z", "run", "ran", "!", "b", "c"]


def random_pairs(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        a = " ".join(rng.choice(WORDS, size=int(rng.integers(0, 12))))
        b = " ".join(rng.choice(WORDS, size=int(rng.integers(1, 12))))
        out.append((a, b))
    return out


def test_normalize_examples():
    assert normalize_text("The Cat!") == ["cat"]
    assert normalize_text("") == []
    assert normalize_text("A man, a plan") == ["man", "plan"]


def test_f1_hand_examples():
    assert token_f1("the cat sat", "the cat sat") == 1.0
    # the worked overlap-1 / P=R=1/2 case, with tokens that survive normalisation
    assert token_f1("x y", "y z") == 0.5
    # literally "a b" vs "b c": "a" is an article, so pred is ["b"] and F1 = 2/3
    assert token_f1("a b", "b c") == pytest.approx(2 / 3, abs=1e-12)
    assert token_f1("", "") == 1.0
    assert token_f1("", "cat") == 0.0 and token_f1("cat", "") == 0.0


def test_f1_table4_golden():
    assert token_f1(TABLE4_PRED, TABLE4_GOLD) == pytest.approx(f1_oracle(TABLE4_PRED, TABLE4_GOLD), abs=1e-12)
    # frozen: overlap {live, life, of} = 3, P = 3/4, R = 3/10
    assert token_f1(TABLE4_PRED, TABLE4_GOLD) == pytest.approx(3 / 7, abs=1e-12)
    assert exact_match(TABLE4_PRED, TABLE4_GOLD) == 0


def test_em_examples():
    assert exact_match("The cat", "cat") == 1
    assert exact_match("cat", "dog") == 0
    assert exact_match("cat, dog!", "cat dog") == 1


def test_bleu1_examples():
    assert bleu1("the cat", "the cat") == 1.0
    assert bleu1("a a a", "a b") == pytest.approx(1 / 3, abs=1e-12)
    assert bleu1("cat", "cat dog") < 0.5
    assert bleu1("", "cat") == 0.0
    assert bleu1("x", "y") == 0.0


def test_rouge_examples():
    assert rouge_l("a b c", "a b c") == 1.0
    assert rouge_l("a c", "a b c") == pytest.approx(0.8, abs=1e-12)


def test_wer_examples():
    assert wer("a b c", "a b c") == 0.0
    assert wer("a b c", "a x c") == pytest.approx(1 / 3, abs=1e-12)
    assert wer("a b c", "") == 1.0
    assert wer("a", "x y z") == 3.0
    with pytest.raises(InvalidInputError):
        wer("", "x")
    with pytest.raises(InvalidInputError):
        wer("!!", "x")


def test_metrics_match_oracles_on_random_pairs():
    for pred, gold in random_pairs(200, 0):
        assert abs(token_f1(pred, gold) - f1_oracle(pred, gold)) <= 1e-9
        assert exact_match(pred, gold) == em_oracle(pred, gold)
        assert abs(bleu1(pred, gold) - bleu1_oracle(pred, gold)) <= 1e-9
        assert abs(rouge_l(pred, gold) - rouge_l_oracle(pred, gold)) <= 1e-9
        if gold.strip(" !"):
            assert abs(wer(gold, pred) - wer_oracle(gold, pred)) <= 1e-9


@pytest.mark.parametrize("impl", sorted(kernels.IMPLEMENTATIONS))
def test_dp_kernels_match_matrix_oracles(impl, monkeypatch):
    k = kernels.IMPLEMENTATIONS[impl]
    rng = np.random.default_rng(3)
    for _ in range(200):
        a = rng.integers(0, 4, size=int(rng.integers(0, 15)))
        b = rng.integers(0, 4, size=int(rng.integers(0, 15)))
        assert k["lcs_length"](a, b) == lcs_matrix(a.tolist(), b.tolist())
        assert k["edit_distance"](a, b) == edit_matrix(a.tolist(), b.tolist())


@given(st.lists(st.sampled_from("abcde"), max_size=20), st.lists(st.sampled_from("abcde"), max_size=20))
def test_lcs_and_edit_properties(a, b):
    lcs = lcs_length(a, b)
    assert lcs == lcs_matrix(a, b)
    assert lcs <= min(len(a), len(b))
    d = edit_distance(a, b)
    assert d == edit_distance(b, a)
    assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))


@given(st.lists(st.sampled_from(["cat", "dog", "x", "y"]), min_size=1, max_size=10))
def test_self_scores(tokens):
    s = " ".join(tokens)
    assert token_f1(s, s) == exact_match(s, s) == bleu1(s, s) == rouge_l(s, s) == 1
    assert wer(s, s) == 0.0


@given(st.text(max_size=30), st.text(max_size=30))
def test_scores_bounded(pred, gold):
    for fn in (token_f1, bleu1, rouge_l):
        assert 0.0 <= fn(pred, gold) <= 1.0


def test_evaluate_dataset_identical():
    golds = {"a": "the cat sat", "b": "dog"}
    rep = evaluate_dataset(dict(golds), golds, "extractive")
    assert rep.f1 == rep.em == 100.0
    assert rep.bleu1 is None and rep.rouge_l is None
    rep = evaluate_dataset(dict(golds), golds, "abstractive")
    assert rep.bleu1 == rep.rouge_l == 100.0 and rep.f1 is None


def test_evaluate_dataset_aggregate_is_mean():
    pairs = random_pairs(50, 1)
    preds = {f"e{i}": p for i, (p, _) in enumerate(pairs)}
    golds = {f"e{i}": g for i, (_, g) in enumerate(pairs)}
    rep = evaluate_dataset(preds, golds, "extractive", "rand")
    mean = 100.0 * math.fsum(f1_oracle(preds[k], golds[k]) for k in golds) / len(golds)
    assert abs(rep.f1 - mean) <= 1e-9
    assert rep.n_examples == 50 and len(rep.rows) == 50
    rep = evaluate_dataset(preds, golds, "abstractive")
    mean = 100.0 * math.fsum(rouge_l_oracle(preds[k], golds[k]) for k in golds) / len(golds)
    assert abs(rep.rouge_l - mean) <= 1e-9


def test_evaluate_dataset_errors():
    with pytest.raises(InvalidInputError):
        evaluate_dataset({"a": "x"}, {"b": "x"}, "extractive")
    with pytest.raises(InvalidInputError):
        evaluate_dataset({"a": "x"}, {"a": "x"}, "generative")
    with pytest.raises(InvalidInputError):
        evaluate_dataset({}, {}, "extractive")


def test_report_serialisation():
    rep = evaluate_dataset({"a": "cat"}, {"a": "cat"}, "extractive", "dev")
    obj = json.loads(rep.to_json())
    assert obj["f1"] == 100.0 and obj["bleu1"] is None and "rows" not in obj
    assert json.loads(rep.rows_jsonl())["id"] == "a"
    csv = reports_csv([rep], extra=[{"arm": "tqa"}])
    header, row = csv.strip().split("\n")
    assert header == "arm,dataset,n_examples,f1,em,bleu1,rouge_l,wer"
    assert row == "tqa,dev,1,100.0,100.0,,,"
