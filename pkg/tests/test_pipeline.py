import numpy as np
import pytest

from unitqa.codec import DurationModel, rle_decode, rle_encode
from unitqa.errors import InvalidInputError, InvalidStateError
from unitqa.model.config import DecodeConfig, ModelConfig
from unitqa.model.transformer import Seq2SeqModel
from unitqa.pipeline import (FINETUNE_UNIT, PRETRAIN_TQA, TextQAExample, TrainSpec, UnitQAExample,
                             answer_from_ids, bucket_batches, convert_extractive_to_unit_labels,
                             finetune_unit, infer_text, infer_unit_ids, manifest_record,
                             prepare_unit_model, pretrain_tqa, read_jsonl, text_example_from_record,
                             unit_example_from_record, write_jsonl)
from unitqa.vocab import build_vocabulary


def _model(vocab, seed=0):
    cfg = ModelConfig(vocab_size=len(vocab), d_model=32, n_heads=2, ffn_dim=64, max_len=64)
    return Seq2SeqModel.initialize(cfg, seed)


def test_stage_defaults_echo_paper_values():
    pre = TrainSpec.for_stage(PRETRAIN_TQA)
    assert (pre.epochs, pre.lr, pre.weight_decay) == (13, 5e-4, 0.01)
    fine = TrainSpec.for_stage(FINETUNE_UNIT)
    assert (fine.epochs, fine.lr, fine.weight_decay) == (25, 3e-4, 1e-3)
    assert TrainSpec.for_stage(PRETRAIN_TQA, epoch_scale=0.1).effective_epochs == 1
    assert TrainSpec.from_dict(fine.to_dict()) == fine
    with pytest.raises(InvalidInputError):
        TrainSpec.for_stage("nope")
    with pytest.raises(InvalidInputError):
        TrainSpec.for_stage(PRETRAIN_TQA, lr=0.0)


def test_text_example_invariants():
    TextQAExample("a", ["q"], ["x", "y", "z"], ["y", "z"])
    with pytest.raises(InvalidInputError):
        TextQAExample("b", ["q"], ["x", "y", "z"], ["z", "y"])
    TextQAExample("c", ["q"], ["x", "y", "z"], ["z", "y"], "abstractive")
    with pytest.raises(InvalidInputError):
        TextQAExample("d", [], ["x"], ["x"])


def test_overfit_one_text_example():
    ex = TextQAExample("e", ["what", "follows", "m"], ["p", "m", "x", "y", "q"], ["x", "y"])
    vocab = build_vocabulary([" ".join(ex.question + ex.passage)], 3)
    model = _model(vocab)
    spec = TrainSpec.for_stage(PRETRAIN_TQA, epochs=200, lr=3e-3, batch_size=1)
    res = pretrain_tqa(model, [ex], spec, vocab)
    assert res.epoch_losses[-1] < 0.05 < res.epoch_losses[0]
    assert model.stages == (PRETRAIN_TQA,)
    dc = DecodeConfig(beam_size=1, max_new_tokens=5)
    assert infer_text(model, ex.question, ex.passage, vocab, dc) == ["x", "y"]


def test_pretrain_errors():
    vocab = build_vocabulary(["a"], 1)
    model = _model(vocab)
    with pytest.raises(InvalidInputError):
        pretrain_tqa(model, [], TrainSpec.for_stage(PRETRAIN_TQA), vocab)
    with pytest.raises(InvalidInputError):
        pretrain_tqa(model, [TextQAExample("a", ["a"], ["a"], ["a"])],
                     TrainSpec.for_stage(FINETUNE_UNIT), vocab)


def test_label_conversion_examples():
    ex = UnitQAExample("u", rle_encode([0]), rle_encode([1, 1, 2, 2, 2, 3]), span=(2, 5))
    out = convert_extractive_to_unit_labels(ex, [1, 1, 2, 2, 2, 3])
    assert out.answer.units == (2,) and out.answer.durations == (3,)
    whole = convert_extractive_to_unit_labels(
        UnitQAExample("w", rle_encode([0]), rle_encode([1, 1, 2]), span=(0, 3)), [1, 1, 2])
    assert whole.answer == whole.passage
    for span in [(3, 2), (0, 9), (-1, 2)]:
        with pytest.raises(InvalidInputError):
            convert_extractive_to_unit_labels(UnitQAExample("x", ex.question, ex.passage, span=span),
                                              [1, 1, 2, 2, 2, 3])


def test_label_conversion_random_slices():
    rng = np.random.default_rng(0)
    for _ in range(200):
        raw = rng.integers(0, 4, size=int(rng.integers(2, 40))).tolist()
        s = int(rng.integers(0, len(raw) - 1))
        e = int(rng.integers(s + 1, len(raw) + 1))
        ex = UnitQAExample("r", rle_encode([0]), rle_encode(raw), span=(s, e))
        assert rle_decode(convert_extractive_to_unit_labels(ex, raw).answer) == raw[s:e]


def test_finetune_requires_unit_tokens():
    vocab = build_vocabulary(["a"], 2)
    cfg = ModelConfig(vocab_size=len(vocab) - 1, d_model=8, n_heads=2, ffn_dim=8)
    with pytest.raises(InvalidStateError):
        finetune_unit(Seq2SeqModel.initialize(cfg), [], TrainSpec.for_stage(FINETUNE_UNIT), vocab)
    with pytest.raises(InvalidStateError):
        prepare_unit_model(Seq2SeqModel.initialize(cfg), vocab, 0)


def test_overfit_one_unit_example_without_pretraining():
    raw = [3, 3, 5, 5, 5, 1, 1, 7, 7, 2, 2, 2]
    ex = convert_extractive_to_unit_labels(
        UnitQAExample("u", rle_encode([4, 4, 6]), rle_encode(raw), span=(2, 9)), raw)
    vocab = build_vocabulary(["w x y z"], 8)
    model = prepare_unit_model(_model(vocab, seed=1), vocab, seed=2)
    spec = TrainSpec.for_stage(FINETUNE_UNIT, epochs=200, lr=3e-3, batch_size=1)
    finetune_unit(model, [ex], spec, vocab)
    assert model.stages == (FINETUNE_UNIT,)
    ids = infer_unit_ids(model, ex.question, ex.passage, vocab, DecodeConfig(beam_size=5, max_new_tokens=8))
    assert [vocab.unit_of(i) for i in ids] == list(ex.answer.units)


def test_answer_from_ids_uses_predicted_durations():
    vocab = build_vocabulary(["w"], 10)
    dm = DurationModel({4: 3, 6: 2}, 2)
    ids = [vocab.unit_id(4), vocab.token_id("w"), vocab.unit_id(4), vocab.unit_id(6), vocab.unit_id(9)]
    ans = answer_from_ids(ids, vocab, dm)
    assert ans.units.units == (4, 6, 9) and ans.raw_units == (4, 4, 4, 6, 6, 9, 9)
    assert len(ans.raw_units) == sum(ans.units.durations) and not ans.empty
    assert answer_from_ids([vocab.token_id("w")], vocab, dm).empty


def test_bucket_batches_sorted_and_complete():
    pairs = [([0] * n, [1]) for n in [5, 2, 9, 2, 7]]
    batches = bucket_batches(pairs, 2)
    assert [len(p[0]) for b in batches for p in b] == [2, 2, 5, 7, 9]


def test_manifest_roundtrip(tmp_path):
    q, p = rle_encode([1, 1, 2]), rle_encode([3, 4, 4, 4])
    rec = manifest_record("id1", "extractive", ["what"], ["x", "y"], ["y"], q, p, (1, 4))
    write_jsonl(tmp_path / "m.jsonl", [rec])
    back = read_jsonl(tmp_path / "m.jsonl")[0]
    assert set(back) == {"id", "kind", "question_text", "passage_text", "answer_text",
                         "question_units", "question_durations", "passage_units",
                         "passage_durations", "answer_span_frames"}
    ex = unit_example_from_record(back)
    assert ex.question == q and ex.passage == p and ex.span == (1, 4)
    assert text_example_from_record(back).answer == ("y",)
