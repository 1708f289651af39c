"""AdamW with decoupled weight decay and a deterministic single-example step."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError, TrainingDivergedError
from .transformer import Seq2SeqModel, pad_batch


def decays(name: str, value: np.ndarray) -> bool:
    """Weight decay applies to weight matrices only: not to norm gains, biases
    or the relative-position bias tables."""
    return value.ndim >= 2 and not name.endswith(".rel")


class AdamW:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm: float | None = 1.0):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict, lr: float, weight_decay: float) -> float:
        """Update ``params`` in place; returns the pre-clipping gradient norm."""
        norms = {k: float(np.sqrt(np.sum(np.square(g, dtype=np.float64)))) for k, g in grads.items()}
        total = float(np.sqrt(sum(n * n for n in norms.values())))
        if not np.isfinite(total):
            bad = {k: n for k, n in norms.items() if not np.isfinite(n)}
            raise TrainingDivergedError(
                f"non-finite gradient in {len(bad)} tensor(s) at step {self.t + 1}",
                diagnostics={"step": self.t + 1, "grad_norms": norms, "non_finite": sorted(bad)})
        factor = 1.0
        if self.clip_norm is not None and total > self.clip_norm:
            factor = self.clip_norm / (total + 1e-12)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name in sorted(params):
            p = params[name]
            g = grads.get(name)
            if g is None:
                continue
            g = g * p.dtype.type(factor)
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= p.dtype.type(b1)
            m += p.dtype.type(1.0 - b1) * g
            v *= p.dtype.type(b2)
            v += p.dtype.type(1.0 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if weight_decay and decays(name, p):
                update = update + weight_decay * p
            p -= p.dtype.type(lr) * update.astype(p.dtype)
        return total


def make_batch(examples, pad_id: int = 0, bos_id: int = 1):
    """``examples`` are ``(encoder_ids, target_ids)``; targets end with EOS.

    Decoder inputs are the targets shifted right behind BOS.
    """
    if not examples:
        raise InvalidInputError("empty batch")
    enc, enc_valid = pad_batch([e for e, _ in examples], pad_id)
    dec, dec_valid = pad_batch([[bos_id, *t[:-1]] for _, t in examples], pad_id)
    tgt, _ = pad_batch([list(t) for _, t in examples], pad_id)
    return enc, enc_valid, dec, dec_valid, tgt


def train_step(model: Seq2SeqModel, batch, lr: float, weight_decay: float, seed: int = 0,
               optimizer: AdamW | None = None):
    """One AdamW update on ``batch``; returns ``(model, loss)``.

    ``model`` is updated in place.  ``seed`` drives dropout only, so with
    dropout 0 the step is a pure function of model, batch and optimizer state.
    """
    if optimizer is None:
        optimizer = AdamW()
    if isinstance(batch, list):
        batch = make_batch(batch, model.config.pad_id)
    enc, enc_valid, dec, dec_valid, tgt = batch
    rng = np.random.default_rng(seed) if model.config.dropout > 0 else None
    value, grads = model.loss_and_grads(enc, enc_valid, dec, dec_valid, tgt, rng)
    if not np.isfinite(value):
        raise TrainingDivergedError(f"loss became {value}", diagnostics={"loss": value})
    optimizer.step(model.params, grads, lr, weight_decay)
    return model, value
