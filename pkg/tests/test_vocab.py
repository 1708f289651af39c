import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from unitqa.errors import InvalidInputError
from unitqa.vocab import (SPECIALS, Vocabulary, build_vocabulary, encode_pair,
                          init_unit_embeddings, unit_token)


def test_build_order_example():
    vocab = build_vocabulary(["a b", "b"], 2)
    assert vocab.decode(range(len(vocab))) == [*SPECIALS, "b", "a", "<u_0>", "<u_1>"]
    assert (vocab.pad_id, vocab.bos_id, vocab.eos_id, vocab.sep_id, vocab.unk_id) == (0, 1, 2, 3, 4)


def test_hundred_units_and_determinism():
    corpus = ["the cat sat", "a dog ran", "the end"]
    a = build_vocabulary(corpus, 100)
    assert len(a.unit_ids()) == 100 and a.token(int(a.unit_ids()[-1])) == unit_token(99)
    assert build_vocabulary(corpus, 100) == a and a.digest() == build_vocabulary(corpus, 100).digest()


def test_build_errors():
    with pytest.raises(InvalidInputError):
        build_vocabulary(["x"], 0)


def test_specials_in_corpus_are_not_duplicated():
    vocab = build_vocabulary(["<s> x <u_0>"], 1)
    assert vocab.text_tokens == ("x",)


def test_json_roundtrip():
    vocab = build_vocabulary(["x y y"], 3)
    back = Vocabulary.from_json(vocab.to_json())
    assert back == vocab and back.to_json()["special_tokens"]["<sep>"] == 3


def test_unit_id_range():
    vocab = build_vocabulary(["x"], 3)
    assert vocab.unit_of(vocab.unit_id(2)) == 2 and vocab.is_unit_id(vocab.unit_id(0))
    with pytest.raises(InvalidInputError):
        vocab.unit_id(3)


def test_unit_rows_copied_from_text_rows():
    vocab = build_vocabulary(["a b c d e"], 50)
    table = np.random.default_rng(0).normal(size=(len(vocab), 8))
    out = init_unit_embeddings(table, vocab, seed=1)
    text_rows = {tuple(r) for r in table[vocab.text_ids()]}
    assert all(tuple(r) in text_rows for r in out[vocab.unit_ids()])
    assert np.array_equal(out[:vocab.unit_offset], table[:vocab.unit_offset])
    assert np.array_equal(out, init_unit_embeddings(table, vocab, seed=1))


def test_single_text_row_fills_every_unit():
    vocab = build_vocabulary(["z"], 5)
    table = np.random.default_rng(0).normal(size=(len(vocab), 4))
    out = init_unit_embeddings(table, vocab, seed=3)
    assert np.all(out[vocab.unit_ids()] == table[vocab.token_id("z")])


def test_no_text_rows():
    vocab = Vocabulary((), 3)
    with pytest.raises(InvalidInputError):
        init_unit_embeddings(np.zeros((len(vocab), 2)), vocab, 0)


def test_encode_pair_layout_and_truncation():
    vocab = build_vocabulary(["a b c d"], 4)
    assert encode_pair(["a"], ["b"], vocab, 16) == [1, vocab.token_id("a"), 3, vocab.token_id("b"), 2]
    ids = encode_pair(["a", "b"], ["c"] * 20, vocab, 10)
    assert len(ids) == 10 and ids[1:4] == [vocab.token_id("a"), vocab.token_id("b"), 3]
    assert encode_pair(["zzz"], ["a"], vocab, 8)[1] == vocab.unk_id
    with pytest.raises(InvalidInputError):
        encode_pair(["a"], ["b"], vocab, 3)


@given(st.lists(st.integers(0, 19), min_size=1, max_size=10),
       st.lists(st.integers(0, 19), min_size=1, max_size=60), st.integers(4, 40))
def test_unit_mode_decode_recovers_input(q, p, max_len):
    vocab = build_vocabulary(["x"], 20)
    ids = encode_pair(q, p, vocab, max_len, units=True)
    assert len(ids) <= max_len
    toks = vocab.decode(ids)
    sep = toks.index("<sep>")
    q_back = [vocab.unit_of(i) for i in ids[1:sep]]
    p_back = [vocab.unit_of(i) for i in ids[sep + 1:-1]]
    assert q_back == q[:len(q_back)] and p_back == p[:len(p_back)]
    if len(q) + len(p) + 3 <= max_len:
        assert q_back == q and p_back == p
