"""Greedy and length-penalised beam decoding.

A hypothesis of ``n`` generated tokens (EOS included) with summed
log-probability ``s`` scores ``s / ((5 + n) / 6) ** alpha``.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError
from . import layers as L
from .config import DecodeConfig
from .layers import _merge, _split
from .transformer import Seq2SeqModel, _positions


def length_penalty(n: int, alpha: float) -> float:
    return ((5.0 + n) / 6.0) ** alpha


def _log_softmax(logits):
    logits = logits.astype(np.float64)
    m = logits.max(axis=-1, keepdims=True)
    return logits - m - np.log(np.exp(logits - m).sum(axis=-1, keepdims=True))


class _Stepper:
    """Incremental decoder: encodes once, then feeds one token per hypothesis per step.

    Self-attention keys and values are cached per layer and reordered when
    the beam reorders; cross-attention keys and values are projected once.
    The arithmetic mirrors ``Seq2SeqModel.decode`` restricted to the last
    position.
    """

    def __init__(self, model: Seq2SeqModel, encoder_ids):
        enc = np.asarray(encoder_ids, dtype=np.int64)[None]
        cfg, p = model.config, model.params
        self.model = model
        enc_out, _ = model.encode(enc, np.ones_like(enc, dtype=bool))
        self.heads = cfg.n_heads
        self.scale = float(1.0 / np.sqrt(cfg.d_model // cfg.n_heads))
        self.cross = [(_split(enc_out @ p[f"dec.{i}.cross.wk"], self.heads),
                       _split(enc_out @ p[f"dec.{i}.cross.wv"], self.heads))
                      for i in range(cfg.n_dec_layers)]
        self.cache = [None] * cfg.n_dec_layers
        self.t = 0

    def reorder(self, parents) -> None:
        self.cache = [(k[parents], v[parents]) for k, v in self.cache]

    def _attend(self, q, k, v, pre, rel=None):
        s = (q @ k.transpose(0, 1, 3, 2)) * self.scale
        if rel is not None:
            s = s + self.model.params[pre + ".rel"][:, rel][None, :, None, :]
        s = s - s.max(axis=-1, keepdims=True)
        e = np.exp(s)
        return _merge((e / e.sum(axis=-1, keepdims=True)) @ v) @ self.model.params[pre + ".wo"]

    def next_logprobs(self, tokens) -> np.ndarray:
        """Feed ``tokens`` (one per live hypothesis) at the next position."""
        model, cfg, p = self.model, self.model.config, self.model.params
        tokens = np.asarray(tokens, dtype=np.int64)
        if self.t >= cfg.max_len:
            raise InvalidInputError(f"decoder length exceeds max_len {cfg.max_len}")
        pos = _positions(cfg.max_len, cfg.d_model, model.dtype.name)[self.t]
        x = (p["embed"][tokens] + pos)[:, None]
        rel = None
        if cfg.relative_bias:
            rel = np.minimum(self.t - np.arange(self.t + 1), cfg.rel_radius)
        for i in range(cfg.n_dec_layers):
            pre = f"dec.{i}"
            h, _ = L.layer_norm_fwd(x, p[pre + ".ln1.g"], p[pre + ".ln1.b"])
            q = _split(h @ p[pre + ".self.wq"], self.heads)
            k = _split(h @ p[pre + ".self.wk"], self.heads)
            v = _split(h @ p[pre + ".self.wv"], self.heads)
            if self.cache[i] is not None:
                k = np.concatenate([self.cache[i][0], k], axis=2)
                v = np.concatenate([self.cache[i][1], v], axis=2)
            self.cache[i] = (k, v)
            x = x + self._attend(q, k, v, pre + ".self", rel)
            h2, _ = L.layer_norm_fwd(x, p[pre + ".ln2.g"], p[pre + ".ln2.b"])
            ck, cv = self.cross[i]
            x = x + self._attend(_split(h2 @ p[pre + ".cross.wq"], self.heads), ck, cv, pre + ".cross")
            h3, _ = L.layer_norm_fwd(x, p[pre + ".ln3.g"], p[pre + ".ln3.b"])
            x = x + L.ffn_fwd(h3, p, pre + ".ffn")[0]
        hn, _ = L.layer_norm_fwd(x, p["dec.ln_f.g"], p["dec.ln_f.b"])
        self.t += 1
        logits = (hn[:, 0] @ p["embed"].T) * model.dtype.type(1.0 / np.sqrt(cfg.d_model))
        return _log_softmax(logits)


def greedy_decode(model: Seq2SeqModel, encoder_ids, max_new_tokens: int = 64,
                  bos_id: int = 1, eos_id: int = 2) -> list[int]:
    step = _Stepper(model, encoder_ids)
    out = [bos_id]
    for _ in range(max_new_tokens):
        tok = int(np.argmax(step.next_logprobs([out[-1]])[0]))
        if tok == eos_id:
            break
        out.append(tok)
    return out[1:]


def beam_decode(model: Seq2SeqModel, encoder_ids, config: DecodeConfig = DecodeConfig(),
                bos_id: int = 1, eos_id: int = 2) -> list[int]:
    """Best completed hypothesis under the length-penalised score.

    Each step expands every live prefix, ranks candidates by summed
    log-probability (ties: lower token ID, then earlier parent) and keeps the
    top ``beam_size``.  Candidates ending in EOS leave the beam as finished,
    so the beam shrinks as hypotheses complete; prefixes still live after
    ``max_new_tokens`` steps are finished as they stand.  The returned IDs
    exclude BOS and EOS.
    """
    step = _Stepper(model, encoder_ids)
    alpha = config.length_penalty_alpha
    live = [((bos_id,), 0.0)]
    finished = []
    for t in range(1, config.max_new_tokens + 1):
        logp = step.next_logprobs([p[-1] for p, _ in live])
        scores = np.asarray([s for _, s in live])[:, None] + logp
        n_live, vocab = scores.shape
        parent = np.repeat(np.arange(n_live), vocab)
        token = np.tile(np.arange(vocab), n_live)
        flat = scores.reshape(-1)
        order = np.lexsort((parent, token, -flat))[:config.beam_size]
        nxt, keep = [], []
        for j in order:
            seq = live[parent[j]][0] + (int(token[j]),)
            if token[j] == eos_id:
                finished.append((seq, float(flat[j]), t))
            else:
                nxt.append((seq, float(flat[j])))
                keep.append(parent[j])
        live = nxt
        step.reorder(np.asarray(keep, dtype=np.int64))
        if not live:
            break
    finished.extend((seq, s, len(seq) - 1) for seq, s in live)

    def rank(item):
        seq, s, n = item
        return (-s / length_penalty(n, alpha), seq)

    best = min(finished, key=rank)[0]
    return [tok for tok in best[1:] if tok != eos_id]
