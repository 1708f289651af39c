"""Acceptance criteria 1-7, one verdict line each.

Criteria 4-6 share one session fixture that runs the default desk-scale
pipeline (``unitqa repro``) for seeds 0, 1 and 2; criterion 7 repeats seed 0
and compares the two output trees byte for byte.  Expect about half an hour
on one CPU core.
"""

import filecmp
import time

import numpy as np
import pytest

from unitqa.codec import Codebook, FrameFeatures, assign_units, rle_decode, rle_encode, train_codebook
from unitqa.experiment import RunConfig, Workspace, stage_repro
from unitqa.metrics import (bleu1, edit_distance, exact_match, lcs_length, normalize_text, rouge_l,
                            token_f1, wer)
from unitqa.model.config import DecodeConfig
from unitqa.model.decode import beam_decode
from unitqa.model.optim import make_batch
from unitqa.model.transformer import Seq2SeqModel, forward, pad_batch

from conftest import ACCEPTANCE_LINES
from oracles import (bleu1_oracle, edit_matrix, em_oracle, exhaustive_best, f1_oracle,
                     lcs_matrix, nearest_bruteforce, rle_oracle, rouge_l_oracle, wer_oracle)
from test_model import _jitter_rel, _logprob_fn, dense_encoder, tiny

SEEDS = (0, 1, 2)


def verdict(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- 1. codec


def test_criterion_1_codec_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    roundtrip = 0
    for _ in range(1000):
        raw = rng.integers(0, int(rng.choice([3, 100])), size=int(rng.integers(0, 501))).tolist()
        seq = rle_encode(raw, k=100)
        roundtrip += rle_decode(seq) == raw and (list(seq.units), list(seq.durations)) == rle_oracle(raw)
    monotone = True
    for seed in range(3):
        x = rng.normal(size=(800, 4)) + rng.integers(0, 5, size=(800, 1)) * 2.5
        hist = np.asarray(train_codebook(FrameFeatures(x), k=16, seed=seed).inertia_history)
        monotone &= bool(np.all(np.diff(hist) <= 1e-9))
    cb = Codebook(rng.normal(size=(100, 8)))
    frames = rng.normal(size=(200, 8))
    assigned = assign_units(FrameFeatures(frames), cb).tolist()
    agree = sum(a == nearest_bruteforce(f, cb.centroids) for a, f in zip(assigned, frames))
    elapsed = time.perf_counter() - t0
    ok = roundtrip == 1000 and monotone and agree == 200 and elapsed < 10
    verdict(1, ok, f"RLE {roundtrip}/1000 exact, inertia monotone={monotone}, "
                   f"assignment {agree}/200, {elapsed:.2f}s (<10s)")


# ---------------------------------------------------------------- 2. metrics


def test_criterion_2_metric_oracles():
    t0 = time.perf_counter()
    words = ["a", "the", "cat", "Dog", "dog.", "x", "y", "z", "run", "!", "b", "c"]
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(200):
        pred = " ".join(rng.choice(words, size=int(rng.integers(0, 12))))
        gold = " ".join(rng.choice(words, size=int(rng.integers(1, 12))))
        worst = max(worst, abs(token_f1(pred, gold) - f1_oracle(pred, gold)),
                    abs(exact_match(pred, gold) - em_oracle(pred, gold)),
                    abs(bleu1(pred, gold) - bleu1_oracle(pred, gold)),
                    abs(rouge_l(pred, gold) - rouge_l_oracle(pred, gold)))
        if gold.strip(" !"):
            worst = max(worst, abs(wer(gold, pred) - wer_oracle(gold, pred)))
        a, b = pred.split(), gold.split()
        worst = max(worst, abs(lcs_length(a, b) - lcs_matrix(a, b)),
                    abs(edit_distance(a, b) - edit_matrix(a, b)))
    close = lambda got, want: abs(got - want) < 1e-12  # noqa: E731
    hand = {
        'normalize "The Cat!"': normalize_text("The Cat!") == ["cat"],
        'normalize ""': normalize_text("") == [],
        'normalize "A man, a plan"': normalize_text("A man, a plan") == ["man", "plan"],
        "f1 identical": token_f1("the cat sat", "the cat sat") == 1.0,
        'f1 "a b"/"b c" = 0.5': close(token_f1("a b", "b c"), 0.5),
        'em "The cat"/"cat"': exact_match("The cat", "cat") == 1,
        'em "cat"/"dog"': exact_match("cat", "dog") == 0,
        "em punctuation only": exact_match("cat sat.", "cat, sat") == 1,
        "bleu1 identical": bleu1("the cat sat", "the cat sat") == 1.0,
        'bleu1 "a a a"/"a b"': close(bleu1("a a a", "a b"), 1 / 3),
        "bleu1 short pred": bleu1("cat", "the cat sat") < bleu1("cat", "cat"),
        "rouge identical": rouge_l("the cat sat", "the cat sat") == 1.0,
        'rouge "a c"/"a b c"': close(rouge_l("a c", "a b c"), 0.8),
        "wer identical": wer("the cat sat", "the cat sat") == 0.0,
        'wer "a b c"/"a x c"': close(wer("a b c", "a x c"), 1 / 3),
        "wer empty hyp": wer("a b c", "") == 1.0,
    }
    table4 = token_f1("live the life of any",
                      "To live the life of a normal member of the British ruling class.")
    table4_oracle = f1_oracle("live the life of any",
                              "To live the life of a normal member of the British ruling class.")
    failed = [name for name, good in hand.items() if not good]
    elapsed = time.perf_counter() - t0
    ok = (worst <= 1e-9 and not failed and close(table4, 3 / 7) and close(table4, table4_oracle)
          and elapsed < 5)
    verdict(2, ok, f"max oracle gap {worst:.1e} on 200 pairs, hand examples "
                   f"{len(hand) - len(failed)}/{len(hand)} (failed: {failed or 'none'}), "
                   f"worked pair F1={table4:.4f} (frozen 3/7), {elapsed:.2f}s (<5s)")


# ---------------------------------------------------------------- 3. model


def _dense_gap():
    worst = 0.0
    for block in (1, 4, 64):
        cfg = tiny(local_radius=20, global_block=block, rel_radius=3)
        model = Seq2SeqModel.initialize(cfg, seed=1, dtype=np.float64)
        _jitter_rel(model)
        seqs = [np.random.default_rng(block).integers(5, 11, size=n).tolist() for n in (17, 9, 20)]
        ids, valid = pad_batch(seqs)
        out, _ = model.encode(ids, valid)
        for b, s in enumerate(seqs):
            worst = max(worst, float(np.abs(out[b, :len(s)] - dense_encoder(model, np.asarray(s))).max()))
    return worst


def _causal():
    model = Seq2SeqModel.initialize(tiny(), seed=5, dtype=np.float64)
    enc, dec = [5, 6, 7, 8, 9], [1, 7, 8, 9, 10, 6]
    base = forward(model, enc, dec)
    for t in range(1, len(dec)):
        changed = list(dec)
        changed[t] = 5 if dec[t] != 5 else 6
        out = forward(model, enc, changed)
        if not np.array_equal(out[:t], base[:t]):
            return False
    return True


def _grad_error():
    cfg = tiny(local_radius=1, global_block=2, rel_radius=2)
    model = Seq2SeqModel.initialize(cfg, seed=6, dtype=np.float64)
    rng = np.random.default_rng(0)
    for name in model.params:
        model.params[name] = model.params[name] + rng.normal(0, 0.1, model.params[name].shape)
    enc, ev, dec, dv, tgt = make_batch([([5, 6, 7, 8, 9, 10], [7, 8, 2]), ([6, 5, 9], [10, 2])])
    _, grads = model.loss_and_grads(enc, ev, dec, dv, tgt)
    h, worst = 1e-5, 0.0
    for name, value in model.params.items():
        flat = value.reshape(-1)
        for j in rng.choice(flat.size, size=min(3, flat.size), replace=False):
            old = flat[j]
            flat[j] = old + h
            up, _ = model.loss_and_grads(enc, ev, dec, dv, tgt)
            flat[j] = old - h
            down, _ = model.loss_and_grads(enc, ev, dec, dv, tgt)
            flat[j] = old
            num, ana = (up - down) / (2 * h), grads[name].reshape(-1)[j]
            worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
    return worst


def _beam_matches():
    hits = total = 0
    for seed in range(3):
        for alpha in (0.0, 2.0):
            model = Seq2SeqModel.initialize(tiny(vocab=6, embed_std=2.0), seed=seed, dtype=np.float64)
            enc = [3, 4, 5, 3]
            dc = DecodeConfig(beam_size=6 ** 4, length_penalty_alpha=alpha, max_new_tokens=4)
            got = beam_decode(model, enc, dc, bos_id=1, eos_id=2)
            hits += got == exhaustive_best(_logprob_fn(model, enc), 6, 4, alpha, eos=2)
            total += 1
    return hits, total


def test_criterion_3_model_correctness():
    gap = _dense_gap()
    causal = _causal()
    grad = _grad_error()
    hits, total = _beam_matches()
    ok = gap <= 1e-5 and causal and grad <= 1e-3 and hits == total
    verdict(3, ok, f"(a) dense gap {gap:.1e} (<=1e-5), (b) causal={causal}, "
                   f"(c) grad rel err {grad:.1e} (<=1e-3), (d) beam=exhaustive {hits}/{total}")


# ---------------------------------------------------------------- 4-7. pipeline


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    runs, t0 = {}, time.perf_counter()
    for seed in SEEDS:
        ws = Workspace(root / f"seed{seed}", RunConfig().with_overrides(seed=seed))
        runs[seed] = (ws, stage_repro(ws))
    return runs, time.perf_counter() - t0


def test_criterion_4_transfer_gain(desk_runs):
    runs, elapsed = desk_runs
    tqa = [runs[s][1]["tqa"]["dev"]["f1"] for s in SEEDS]
    scratch = [runs[s][1]["no-tqa"]["dev"]["f1"] for s in SEEDS]
    gain = float(np.mean(tqa) - np.mean(scratch))
    ok = gain >= 10.0 and elapsed <= 30 * 60
    verdict(4, ok, f"dev F1 TQA {np.mean(tqa):.1f} vs no-TQA {np.mean(scratch):.1f}, "
                   f"gain {gain:+.1f} (>=10) over seeds {list(SEEDS)}; {elapsed / 60:.1f} min (<=30)")


def test_criterion_5_zero_shot_abstractive(desk_runs):
    runs, _ = desk_runs
    tqa = float(np.mean([runs[s][1]["tqa"]["abstractive"]["bleu1"] for s in SEEDS]))
    scratch = float(np.mean([runs[s][1]["no-tqa"]["abstractive"]["bleu1"] for s in SEEDS]))
    ok = tqa > scratch and tqa >= 1.05 * scratch
    rel = (tqa / scratch - 1.0) * 100 if scratch else float("inf")
    verdict(5, ok, f"abstractive BLEU1 TQA {tqa:.2f} vs no-TQA {scratch:.2f}, "
                   f"relative margin {rel:+.1f}% (>=5%)")


def test_criterion_6_robustness_sweep(desk_runs):
    runs, _ = desk_runs
    details, ok = [], True
    for seed in SEEDS:
        sweep = runs[seed][1]["sweep"]
        rows = sweep["rows"]
        levels = [r["level_requested"] for r in rows]
        rho, drop = sweep["spearman"], sweep["cascade_drop"]
        e2e_constant = len({r["e2e_f1"] for r in rows}) == 1
        seed_ok = (levels == [0.0, 0.1, 0.2, 0.3, 0.4] and rho is not None and rho <= -0.8
                   and drop >= 10.0 and e2e_constant and sweep["within_tolerance"])
        ok &= seed_ok
        worst = max(abs(r["level_measured"] - r["level_requested"]) for r in rows)
        details.append(f"seed {seed}: rho {rho if rho is None else round(rho, 3)}, drop {drop:.1f}, "
                       f"E2E constant={e2e_constant}, max |WER-target| {worst:.3f}")
    verdict(6, ok, "; ".join(details) + " (rho<=-0.8, drop>=10, |dWER|<=0.02)")


def test_criterion_7_determinism(desk_runs, tmp_path):
    runs, _ = desk_runs
    first, _ = runs[0]
    again = Workspace(tmp_path / "seed0-again", RunConfig().with_overrides(seed=0))
    stage_repro(again)
    checked, differ = 0, []
    for sub in ("models", "predictions", "reports", "sweep", "manifests"):
        names = sorted(str(p.relative_to(first.root)) for p in (first.root / sub).rglob("*") if p.is_file())
        other = sorted(str(p.relative_to(again.root)) for p in (again.root / sub).rglob("*") if p.is_file())
        if names != other:
            differ.append(f"{sub}: file sets differ")
            continue
        _, mismatch, errors = filecmp.cmpfiles(first.root, again.root, names, shallow=False)
        differ += mismatch + errors
        checked += len(names)
    verdict(7, not differ and checked > 0,
            f"{checked} files across checkpoints, predictions, reports, sweep and manifests; "
            f"{len(differ)} differ")
