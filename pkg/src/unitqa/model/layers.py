"""Forward/backward pairs for the transformer blocks.

Each ``*_fwd`` returns ``(out, cache)``; the matching ``*_bwd`` consumes the
upstream gradient and the cache and returns the input gradient(s) while
accumulating parameter gradients into a ``grads`` dict.  Arrays are batched
``(B, L, d)``.
"""

import numpy as np

NEG_INF = -1e9
_GELU_C = float(np.sqrt(2.0 / np.pi))


def _acc(grads, name, value):
    if name in grads:
        grads[name] += value
    else:
        grads[name] = value


# ---------------------------------------------------------------- layer norm


def layer_norm_fwd(x, g, b, eps=1e-6):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd, g)


def layer_norm_bwd(dy, cache, grads, prefix):
    xhat, rstd, g = cache
    d = xhat.shape[-1]
    _acc(grads, prefix + ".g", (dy * xhat).reshape(-1, d).sum(axis=0))
    _acc(grads, prefix + ".b", dy.reshape(-1, d).sum(axis=0))
    dxhat = dy * g
    return rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                   - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))


# ---------------------------------------------------------------- feed-forward


def ffn_fwd(x, p, prefix):
    h = x @ p[prefix + ".w1"] + p[prefix + ".b1"]
    inner = _GELU_C * (h + 0.044715 * (h * h * h))
    t = np.tanh(inner)
    a = 0.5 * h * (1.0 + t)
    return a @ p[prefix + ".w2"] + p[prefix + ".b2"], (x, h, t, a)


def ffn_bwd(dy, cache, p, grads, prefix):
    x, h, t, a = cache
    d = x.shape[-1]
    f = h.shape[-1]
    _acc(grads, prefix + ".w2", a.reshape(-1, f).T @ dy.reshape(-1, d))
    _acc(grads, prefix + ".b2", dy.reshape(-1, d).sum(axis=0))
    da = dy @ p[prefix + ".w2"].T
    # d gelu / dh, in place to keep temporaries down on the hot path
    dgelu = h * h
    dgelu *= 3 * 0.044715
    dgelu += 1.0
    sech2 = t * t
    np.subtract(1.0, sech2, out=sech2)
    dgelu *= sech2
    dgelu *= h
    dgelu *= 0.5 * _GELU_C
    dgelu += 0.5
    dgelu += 0.5 * t
    dh = da * dgelu
    _acc(grads, prefix + ".w1", x.reshape(-1, d).T @ dh.reshape(-1, f))
    _acc(grads, prefix + ".b1", dh.reshape(-1, f).sum(axis=0))
    return dh @ p[prefix + ".w1"].T


# ---------------------------------------------------------------- attention


def _split(x, n_heads):
    b, length, d = x.shape
    return x.reshape(b, length, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge(x):
    b, h, length, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, length, h * dh)


def attention_fwd(xq, xkv, bias, p, prefix, n_heads, rel=None):
    """Multi-head attention of ``xq`` over ``xkv``.

    ``bias`` is additive, broadcastable to ``(B, H, Lq, Lk)``: 0 where the key
    is visible and ``NEG_INF`` where it is masked.  ``xkv`` may have batch
    size 1 against a larger query batch (beam decoding).  ``rel`` is an
    ``(Lq, Lk)`` bucket index into the learned per-head table
    ``prefix + ".rel"`` of shape ``(H, n_buckets)``.
    """
    d = xq.shape[-1]
    scale = float(1.0 / np.sqrt(d // n_heads))
    q = _split(xq @ p[prefix + ".wq"], n_heads)
    k = _split(xkv @ p[prefix + ".wk"], n_heads)
    v = _split(xkv @ p[prefix + ".wv"], n_heads)
    s = (q @ k.transpose(0, 1, 3, 2)) * scale + bias
    if rel is not None:
        s = s + p[prefix + ".rel"][:, rel]
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    probs = e / e.sum(axis=-1, keepdims=True)
    o = _merge(probs @ v)
    return o @ p[prefix + ".wo"], (xq, xkv, q, k, v, probs, o, scale, rel)


def attention_bwd(dy, cache, p, grads, prefix, n_heads):
    """Returns ``(dxq, dxkv)``."""
    xq, xkv, q, k, v, probs, o, scale, rel = cache
    d = xq.shape[-1]
    _acc(grads, prefix + ".wo", o.reshape(-1, d).T @ dy.reshape(-1, d))
    do = _split(dy @ p[prefix + ".wo"].T, n_heads)
    dprobs = do @ v.transpose(0, 1, 3, 2)
    dv = probs.transpose(0, 1, 3, 2) @ do
    ds = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
    if rel is not None:
        table = p[prefix + ".rel"]
        per_head = ds.sum(axis=0).reshape(table.shape[0], -1)
        flat = rel.reshape(-1)
        _acc(grads, prefix + ".rel", np.stack(
            [np.bincount(flat, weights=row, minlength=table.shape[1]) for row in per_head]
        ).astype(table.dtype))
    ds = ds * scale
    dq = _merge(ds @ k)
    dk = _merge(ds.transpose(0, 1, 3, 2) @ q)
    dv = _merge(dv)
    _acc(grads, prefix + ".wq", xq.reshape(-1, d).T @ dq.reshape(-1, d))
    _acc(grads, prefix + ".wk", xkv.reshape(-1, d).T @ dk.reshape(-1, d))
    _acc(grads, prefix + ".wv", xkv.reshape(-1, d).T @ dv.reshape(-1, d))
    dxq = dq @ p[prefix + ".wq"].T
    dxkv = dk @ p[prefix + ".wk"].T + dv @ p[prefix + ".wv"].T
    return dxq, dxkv


# ---------------------------------------------------------------- dropout


def dropout_fwd(x, rate, rng):
    if rate <= 0.0 or rng is None:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * keep, keep


def dropout_bwd(dy, keep):
    return dy if keep is None else dy * keep


# ---------------------------------------------------------------- positions


def sinusoidal_positions(length, d, dtype=np.float64):
    pos = np.arange(length)[:, None]
    i = np.arange(0, d, 2)[None, :]
    angle = pos / np.power(10000.0, i / d)
    pe = np.zeros((length, d))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d // 2])
    return pe.astype(dtype)
