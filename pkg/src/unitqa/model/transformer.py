"""Encoder-decoder transformer in plain numpy with hand-written backprop.

Pre-LN blocks, GELU feed-forward, absolute sinusoidal positions and one
embedding matrix shared by encoder input, decoder input and the output
projection (unit-variance rows, logits scaled by ``d_model ** -0.5`` as in
T5).  Encoder self-attention is restricted to a local window plus
transient global tokens: the mean of each ``global_block``-sized block of the
layer input, recomputed at every layer.  A query skips the summary of any
block that already lies entirely inside its own window, so a window covering
the whole sequence reduces exactly to dense attention.  Self-attention
scores also get a learned per-head bias indexed by the clipped query-key
offset, as in the T5 family.
"""

from __future__ import annotations

import json
from functools import lru_cache

import numpy as np

from ..errors import InvalidInputError
from . import layers as L
from .config import ModelConfig


@lru_cache(maxsize=64)
def _positions(length, d, dtype_name):
    pe = L.sinusoidal_positions(length, d, np.dtype(dtype_name))
    pe.setflags(write=False)
    return pe


def json_copy(obj):
    return json.loads(json.dumps(obj))


def pad_batch(seqs, pad_id=0):
    """Right-pad integer sequences; returns ``(ids, valid)``."""
    width = max((len(s) for s in seqs), default=0)
    ids = np.full((len(seqs), max(width, 1)), pad_id, dtype=np.int64)
    valid = np.zeros(ids.shape, dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        valid[i, :len(s)] = True
    return ids, valid


def encoder_attention_layout(valid, config: ModelConfig, dtype=np.float32):
    """Additive bias ``(B, 1, L, L+G)`` and block-averaging matrix ``(B, G, L)``.

    Without global tokens the bias is ``(B, 1, L, L)`` and the matrix ``None``.
    """
    bsz, length = valid.shape
    idx = np.arange(length)
    r = config.local_radius
    allowed = (np.abs(idx[:, None] - idx[None, :]) <= r)[None] & valid[:, None, :]
    avg = None
    if config.global_tokens:
        block = config.global_block
        n_blocks = -(-length // block)
        member = (idx[None, :] // block == np.arange(n_blocks)[:, None])[None] & valid[:, None, :]
        counts = member.sum(axis=2)
        nonempty = counts > 0
        avg = (member / np.maximum(counts, 1)[:, :, None]).astype(dtype)
        first = np.where(member, idx, length).min(axis=2)
        last = np.where(member, idx, -1).max(axis=2)
        covered = ((first[:, None, :] >= idx[None, :, None] - r)
                   & (last[:, None, :] <= idx[None, :, None] + r))
        allowed = np.concatenate([allowed, nonempty[:, None, :] & ~covered], axis=2)
    bias = np.where(allowed, 0.0, L.NEG_INF).astype(dtype)[:, None]
    return bias, avg


@lru_cache(maxsize=256)
def encoder_rel_buckets(length, n_global, radius):
    """Offset buckets ``0..2r`` for keys ``j - i`` clipped to ``[-r, r]``; ``2r+1`` for summaries."""
    idx = np.arange(length)
    local = np.clip(idx[None, :] - idx[:, None], -radius, radius) + radius
    out = np.concatenate([local, np.full((length, n_global), 2 * radius + 1)], axis=1)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=256)
def decoder_rel_buckets(length, radius):
    """Buckets ``i - j`` clipped to ``[0, r]``; future keys are masked anyway."""
    idx = np.arange(length)
    out = np.clip(idx[:, None] - idx[None, :], 0, radius)
    out.setflags(write=False)
    return out


def decoder_self_bias(valid, dtype=np.float32):
    length = valid.shape[1]
    causal = np.tril(np.ones((length, length), dtype=bool))
    allowed = causal[None] & valid[:, None, :]
    return np.where(allowed, 0.0, L.NEG_INF).astype(dtype)[:, None]


def cross_bias(enc_valid, dtype=np.float32):
    return np.where(enc_valid, 0.0, L.NEG_INF).astype(dtype)[:, None, None, :]


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float32) -> dict:
    rng = np.random.default_rng(seed)
    d, f = config.d_model, config.ffn_dim
    params = {}

    def normal(name, shape):
        # fan-in scaling unless a fixed std is configured
        std = config.init_std if config.init_std is not None else shape[0] ** -0.5
        params[name] = rng.normal(0.0, std, size=shape)

    def norm(name):
        params[name + ".g"] = np.ones(d)
        params[name + ".b"] = np.zeros(d)

    def attn(name, n_buckets=0):
        for w in ("wq", "wk", "wv", "wo"):
            normal(f"{name}.{w}", (d, d))
        if n_buckets:
            params[name + ".rel"] = np.zeros((config.n_heads, n_buckets))

    def ffn(name):
        normal(name + ".w1", (d, f))
        params[name + ".b1"] = np.zeros(f)
        normal(name + ".w2", (f, d))
        params[name + ".b2"] = np.zeros(d)

    r = config.rel_radius
    enc_buckets = 2 * r + 2 if config.relative_bias else 0
    dec_buckets = r + 1 if config.relative_bias else 0
    params["embed"] = rng.normal(0.0, config.embed_std, size=(config.vocab_size, d))
    for i in range(config.n_enc_layers):
        norm(f"enc.{i}.ln1")
        attn(f"enc.{i}.attn", enc_buckets)
        norm(f"enc.{i}.ln2")
        ffn(f"enc.{i}.ffn")
    norm("enc.ln_f")
    for i in range(config.n_dec_layers):
        norm(f"dec.{i}.ln1")
        attn(f"dec.{i}.self", dec_buckets)
        norm(f"dec.{i}.ln2")
        attn(f"dec.{i}.cross")
        norm(f"dec.{i}.ln3")
        ffn(f"dec.{i}.ffn")
    norm("dec.ln_f")
    return {k: v.astype(dtype) for k, v in params.items()}


class Seq2SeqModel:
    """Parameters plus the forward/backward passes over padded batches."""

    def __init__(self, config: ModelConfig, params: dict, meta: dict | None = None):
        self.config = config
        self.params = params
        # provenance, e.g. {"stages": ["pretrain_tqa"]}; saved with checkpoints
        self.meta = dict(meta or {})

    @property
    def stages(self) -> tuple:
        return tuple(self.meta.get("stages", ()))

    def mark_stage(self, stage: str) -> None:
        self.meta["stages"] = [*self.stages, stage]

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0, dtype=np.float32) -> "Seq2SeqModel":
        return cls(config, init_params(config, seed, dtype))

    @property
    def dtype(self):
        return self.params["embed"].dtype

    def astype(self, dtype) -> "Seq2SeqModel":
        return Seq2SeqModel(self.config, {k: v.astype(dtype) for k, v in self.params.items()},
                            self.meta)

    def copy(self) -> "Seq2SeqModel":
        return Seq2SeqModel(self.config, {k: v.copy() for k, v in self.params.items()},
                            json_copy(self.meta))

    @property
    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    # ------------------------------------------------------------ helpers

    def _check_ids(self, ids, valid):
        used = ids[valid]
        if used.size and (used.min() < 0 or used.max() >= self.config.vocab_size):
            raise InvalidInputError("token ID outside the vocabulary")
        if ids.shape[1] > self.config.max_len:
            raise InvalidInputError(
                f"sequence length {ids.shape[1]} exceeds max_len {self.config.max_len}")

    def _embed(self, ids):
        return self.params["embed"][ids] + _positions(ids.shape[1], self.config.d_model,
                                                      self.dtype.name)

    # ------------------------------------------------------------ encoder

    def encode(self, enc_ids, enc_valid, rng=None):
        cfg, p, dt = self.config, self.params, self.dtype
        self._check_ids(enc_ids, enc_valid)
        bias, avg = encoder_attention_layout(enc_valid, cfg, dt)
        x = self._embed(enc_ids)
        rel = None
        if cfg.relative_bias:
            n_global = 0 if avg is None else avg.shape[1]
            rel = encoder_rel_buckets(enc_ids.shape[1], n_global, cfg.rel_radius)
        caches = []
        for i in range(cfg.n_enc_layers):
            pre = f"enc.{i}"
            h, c_ln1 = L.layer_norm_fwd(x, p[pre + ".ln1.g"], p[pre + ".ln1.b"])
            kv = h if avg is None else np.concatenate([h, avg @ h], axis=1)
            a, c_att = L.attention_fwd(h, kv, bias, p, pre + ".attn", cfg.n_heads, rel)
            a, k1 = L.dropout_fwd(a, cfg.dropout, rng)
            x = x + a
            h2, c_ln2 = L.layer_norm_fwd(x, p[pre + ".ln2.g"], p[pre + ".ln2.b"])
            f, c_ffn = L.ffn_fwd(h2, p, pre + ".ffn")
            f, k2 = L.dropout_fwd(f, cfg.dropout, rng)
            x = x + f
            caches.append((c_ln1, c_att, k1, c_ln2, c_ffn, k2))
        out, c_lnf = L.layer_norm_fwd(x, p["enc.ln_f.g"], p["enc.ln_f.b"])
        return out, (enc_ids, avg, caches, c_lnf)

    def _encode_bwd(self, dout, cache, grads):
        cfg, p = self.config, self.params
        enc_ids, avg, caches, c_lnf = cache
        dx = L.layer_norm_bwd(dout, c_lnf, grads, "enc.ln_f")
        length = enc_ids.shape[1]
        for i in reversed(range(cfg.n_enc_layers)):
            pre = f"enc.{i}"
            c_ln1, c_att, k1, c_ln2, c_ffn, k2 = caches[i]
            df = L.dropout_bwd(dx, k2)
            dh2 = L.ffn_bwd(df, c_ffn, p, grads, pre + ".ffn")
            dx = dx + L.layer_norm_bwd(dh2, c_ln2, grads, pre + ".ln2")
            da = L.dropout_bwd(dx, k1)
            dq, dkv = L.attention_bwd(da, c_att, p, grads, pre + ".attn", cfg.n_heads)
            dh = dq + dkv[:, :length]
            if avg is not None:
                dh = dh + avg.transpose(0, 2, 1) @ dkv[:, length:]
            dx = dx + L.layer_norm_bwd(dh, c_ln1, grads, pre + ".ln1")
        self._embed_bwd(dx, enc_ids, grads)

    # ------------------------------------------------------------ decoder

    def decode(self, dec_ids, dec_valid, enc_out, enc_valid, rng=None):
        """Decoder logits ``(B, Ld, V)``; ``enc_out`` may have batch size 1."""
        cfg, p, dt = self.config, self.params, self.dtype
        self._check_ids(dec_ids, dec_valid)
        self_bias = decoder_self_bias(dec_valid, dt)
        x_bias = cross_bias(enc_valid, dt)
        x = self._embed(dec_ids)
        rel = decoder_rel_buckets(dec_ids.shape[1], cfg.rel_radius) if cfg.relative_bias else None
        caches = []
        for i in range(cfg.n_dec_layers):
            pre = f"dec.{i}"
            h, c_ln1 = L.layer_norm_fwd(x, p[pre + ".ln1.g"], p[pre + ".ln1.b"])
            a, c_self = L.attention_fwd(h, h, self_bias, p, pre + ".self", cfg.n_heads, rel)
            a, k1 = L.dropout_fwd(a, cfg.dropout, rng)
            x = x + a
            h2, c_ln2 = L.layer_norm_fwd(x, p[pre + ".ln2.g"], p[pre + ".ln2.b"])
            c, c_cross = L.attention_fwd(h2, enc_out, x_bias, p, pre + ".cross", cfg.n_heads)
            c, k2 = L.dropout_fwd(c, cfg.dropout, rng)
            x = x + c
            h3, c_ln3 = L.layer_norm_fwd(x, p[pre + ".ln3.g"], p[pre + ".ln3.b"])
            f, c_ffn = L.ffn_fwd(h3, p, pre + ".ffn")
            f, k3 = L.dropout_fwd(f, cfg.dropout, rng)
            x = x + f
            caches.append((c_ln1, c_self, k1, c_ln2, c_cross, k2, c_ln3, c_ffn, k3))
        hn, c_lnf = L.layer_norm_fwd(x, p["dec.ln_f.g"], p["dec.ln_f.b"])
        scale = dt.type(1.0 / np.sqrt(cfg.d_model))
        logits = (hn @ p["embed"].T) * scale
        return logits, (dec_ids, caches, c_lnf, hn, scale)

    def _decode_bwd(self, dlogits, cache, grads):
        """Returns the gradient with respect to the encoder output."""
        cfg, p = self.config, self.params
        dec_ids, caches, c_lnf, hn, scale = cache
        d = cfg.d_model
        dlogits = dlogits * scale
        L._acc(grads, "embed", dlogits.reshape(-1, dlogits.shape[-1]).T @ hn.reshape(-1, d))
        dx = L.layer_norm_bwd(dlogits @ p["embed"], c_lnf, grads, "dec.ln_f")
        denc = 0.0
        for i in reversed(range(cfg.n_dec_layers)):
            pre = f"dec.{i}"
            c_ln1, c_self, k1, c_ln2, c_cross, k2, c_ln3, c_ffn, k3 = caches[i]
            dh3 = L.ffn_bwd(L.dropout_bwd(dx, k3), c_ffn, p, grads, pre + ".ffn")
            dx = dx + L.layer_norm_bwd(dh3, c_ln3, grads, pre + ".ln3")
            dq, dkv = L.attention_bwd(L.dropout_bwd(dx, k2), c_cross, p, grads,
                                      pre + ".cross", cfg.n_heads)
            denc = denc + dkv
            dx = dx + L.layer_norm_bwd(dq, c_ln2, grads, pre + ".ln2")
            dq, dkv = L.attention_bwd(L.dropout_bwd(dx, k1), c_self, p, grads,
                                      pre + ".self", cfg.n_heads)
            dx = dx + L.layer_norm_bwd(dq + dkv, c_ln1, grads, pre + ".ln1")
        self._embed_bwd(dx, dec_ids, grads)
        return denc

    def _embed_bwd(self, dx, ids, grads):
        dE = np.zeros_like(self.params["embed"])
        np.add.at(dE, ids.reshape(-1), dx.reshape(-1, dx.shape[-1]))
        L._acc(grads, "embed", dE)

    # ------------------------------------------------------------ public passes

    def logits(self, enc_ids, enc_valid, dec_ids, dec_valid):
        enc_out, _ = self.encode(enc_ids, enc_valid)
        out, _ = self.decode(dec_ids, dec_valid, enc_out, enc_valid)
        return out

    def loss_and_grads(self, enc_ids, enc_valid, dec_ids, dec_valid, targets, rng=None):
        """Teacher-forced mean cross-entropy and its gradient for every parameter."""
        enc_out, enc_cache = self.encode(enc_ids, enc_valid, rng)
        logits_, dec_cache = self.decode(dec_ids, dec_valid, enc_out, enc_valid, rng)
        value, dlogits = cross_entropy(logits_, targets, self.config.pad_id, with_grad=True)
        grads: dict = {}
        denc = self._decode_bwd(dlogits.astype(self.dtype), dec_cache, grads)
        self._encode_bwd(denc, enc_cache, grads)
        return value, grads


def cross_entropy(logits, targets, pad_id, with_grad=False):
    """Mean token cross-entropy over non-pad targets, computed in float64."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise InvalidInputError(f"logits {logits.shape} and targets {targets.shape} disagree")
    mask = targets != pad_id
    n = int(mask.sum())
    if n == 0:
        raise InvalidInputError("every target is padding")
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    value = float(-(picked * mask).sum() / n)
    if not with_grad:
        return value
    grad = np.exp(logp)
    np.put_along_axis(grad, targets[..., None],
                      np.take_along_axis(grad, targets[..., None], axis=-1) - 1.0, axis=-1)
    grad *= (mask / n)[..., None]
    return value, grad


def forward(model: Seq2SeqModel, encoder_ids, decoder_input_ids) -> np.ndarray:
    """Logits ``(dec_len, V)`` for one unpadded example."""
    enc = np.asarray(encoder_ids, dtype=np.int64)[None]
    dec = np.asarray(decoder_input_ids, dtype=np.int64)[None]
    return model.logits(enc, np.ones_like(enc, dtype=bool), dec, np.ones_like(dec, dtype=bool))[0]


def loss(logits, target_ids, pad_id=0) -> float:
    return cross_entropy(logits, target_ids, pad_id)
