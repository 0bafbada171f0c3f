"""Differentiable building blocks with explicit forward/backward passes.

Every layer is a pair of plain functions: ``*_forward`` returns its output
plus a cache, ``*_backward`` takes the cache and the upstream gradient and
returns gradients for inputs and parameters. Parameters live in flat
``{name: ndarray}`` dicts so optimizers and checkpoints can treat every
model the same way. Everything is float64.
"""
import json
import struct

import numpy as np


class DivergenceError(FloatingPointError):
    """A loss or gradient became non-finite."""


# -- elementwise --------------------------------------------------------------

def sigmoid(x):
    # tanh form never overflows
    return 0.5 * np.tanh(0.5 * np.asarray(x, dtype=float)) + 0.5


def softplus(x):
    return np.logaddexp(0.0, x)


def log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def logsumexp(x, axis=-1, keepdims=False):
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)


def softmax(x, axis=-1):
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    return x - logsumexp(x, axis=axis, keepdims=True)


def softmax_backward(p, gp, axis=-1):
    """Gradient w.r.t. softmax logits given probabilities `p` and upstream `gp`."""
    return p * (gp - np.sum(gp * p, axis=axis, keepdims=True))


def relu(x):
    return np.maximum(x, 0.0)


# -- initialisation -----------------------------------------------------------

def glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_linear(rng, n_in, n_out, prefix=""):
    return {prefix + "W": glorot(rng, (n_out, n_in), n_in, n_out), prefix + "b": np.zeros(n_out)}


# -- dense --------------------------------------------------------------------

def linear_forward(x, W, b):
    if x.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ValueError(f"shape mismatch: x {x.shape}, W {W.shape}, b {b.shape}")
    return x @ W.T + b


def linear_backward(gy, x, W):
    """Returns (gx, gW, gb) for ``y = x W^T + b`` with arbitrary leading batch dims."""
    gx = gy @ W
    gy2 = gy.reshape(-1, gy.shape[-1])
    x2 = x.reshape(-1, x.shape[-1])
    return gx, gy2.T @ x2, gy2.sum(0)


# -- LSTM ---------------------------------------------------------------------
# Gate order in the stacked weight matrix is (input, forget, output, candidate).
# W acts on the concatenation [x ; h_prev].

def init_lstm(rng, n_in, n_hidden, prefix=""):
    W = glorot(rng, (4 * n_hidden, n_in + n_hidden), n_in + n_hidden, 4 * n_hidden)
    b = np.zeros(4 * n_hidden)
    b[n_hidden:2 * n_hidden] = 1.0
    return {prefix + "W": W, prefix + "b": b}


def _gates(z, H):
    s = sigmoid(z[..., :3 * H])
    return s[..., :H], s[..., H:2 * H], s[..., 2 * H:], np.tanh(z[..., 3 * H:])


def lstm_cell_forward(x, h_prev, c_prev, W, b):
    H = h_prev.shape[-1]
    xh = np.concatenate([x, h_prev], axis=-1)
    i, f, o, g = _gates(xh @ W.T + b, H)
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (xh, c_prev, i, f, o, g, tc, W)


def lstm_cell_backward(gh, gc, cache):
    """Returns (gx, gh_prev, gc_prev, gW, gb)."""
    xh, c_prev, i, f, o, g, tc, W = cache
    H = c_prev.shape[-1]
    gc = gc + gh * o * (1.0 - tc ** 2)
    gz = np.concatenate([
        gc * g * i * (1.0 - i),
        gc * c_prev * f * (1.0 - f),
        gh * tc * o * (1.0 - o),
        gc * i * (1.0 - g ** 2),
    ], axis=-1)
    gxh = gz @ W
    n_in = W.shape[1] - H
    gz2 = gz.reshape(-1, 4 * H)
    gW = gz2.T @ xh.reshape(-1, xh.shape[-1])
    return gxh[..., :n_in], gxh[..., n_in:], gc * f, gW, gz2.sum(0)


def lstm_forward(X, W, b, h0=None, c0=None):
    """Run one LSTM direction over a padded batch ``X`` of shape (B, T, n_in).

    Trailing padding is harmless: states at padded steps never feed back into
    earlier positions.
    """
    B, T, n_in = X.shape
    H = W.shape[0] // 4
    Wx, Wh = W[:, :n_in], W[:, n_in:]
    h = np.zeros((B, H)) if h0 is None else np.broadcast_to(h0, (B, H))
    c = np.zeros((B, H)) if c0 is None else np.broadcast_to(c0, (B, H))
    pre = X @ Wx.T + b
    WhT = np.ascontiguousarray(Wh.T)
    hs = np.empty((B, T, H))
    tcs = np.empty((B, T, H))
    acts = np.empty((B, T, 4 * H))
    hprev = np.empty((B, T, H))
    cprev = np.empty((B, T, H))
    for t in range(T):
        hprev[:, t] = h
        cprev[:, t] = c
        z = pre[:, t] + h @ WhT
        a = acts[:, t]
        a[:, :3 * H] = 0.5 * np.tanh(0.5 * z[:, :3 * H]) + 0.5
        a[:, 3 * H:] = np.tanh(z[:, 3 * H:])
        c = a[:, H:2 * H] * c + a[:, :H] * a[:, 3 * H:]
        tc = np.tanh(c)
        h = a[:, 2 * H:3 * H] * tc
        tcs[:, t] = tc
        hs[:, t] = h
    return hs, (X, W, acts, hprev, cprev, tcs)


def lstm_backward(ghs, cache):
    """Backprop through time. Returns (gX, gW, gb, gh0, gc0); gh0/gc0 are summed over the batch."""
    X, W, acts, hprev, cprev, tcs = cache
    B, T, n_in = X.shape
    H = W.shape[0] // 4
    Wh = np.ascontiguousarray(W[:, n_in:])
    gz = np.empty((B, T, 4 * H))
    gh_next = np.zeros((B, H))
    gc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        a = acts[:, t]
        i, f, o, g = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        tc = tcs[:, t]
        gh = ghs[:, t] + gh_next
        gc = gc_next + gh * o * (1.0 - tc ** 2)
        z = gz[:, t]
        z[:, :H] = gc * g * i * (1.0 - i)
        z[:, H:2 * H] = gc * cprev[:, t] * f * (1.0 - f)
        z[:, 2 * H:3 * H] = gh * tc * o * (1.0 - o)
        z[:, 3 * H:] = gc * i * (1.0 - g ** 2)
        gh_next = z @ Wh
        gc_next = gc * f
    gz2 = gz.reshape(B * T, 4 * H)
    gWx = gz2.T @ X.reshape(B * T, n_in)
    gWh = gz2.T @ hprev.reshape(B * T, H)
    gX = gz @ W[:, :n_in]
    return gX, np.concatenate([gWx, gWh], axis=1), gz2.sum(0), gh_next.sum(0), gc_next.sum(0)


def reverse_padded(X, lengths):
    """Reverse each sequence in a right-padded batch within its own length."""
    B, T = X.shape[:2]
    t = np.arange(T)[None, :]
    L = np.asarray(lengths)[:, None]
    idx = np.where(t < L, L - 1 - t, t)
    return np.take_along_axis(X, idx.reshape(B, T, *([1] * (X.ndim - 2))), axis=1)


def bilstm_forward(X, lengths, Wf, bf, Wr, br):
    """Per-position ``[forward state after x_0..x_i ; reverse state after x_{n-1}..x_i]``."""
    hf, cache_f = lstm_forward(X, Wf, bf)
    hr, cache_r = lstm_forward(reverse_padded(X, lengths), Wr, br)
    return np.concatenate([hf, reverse_padded(hr, lengths)], axis=-1), (cache_f, cache_r, lengths)


def bilstm_backward(gout, cache):
    """Returns (gX, gWf, gbf, gWr, gbr)."""
    cache_f, cache_r, lengths = cache
    H = gout.shape[-1] // 2
    gXf, gWf, gbf, _, _ = lstm_backward(gout[..., :H], cache_f)
    gXr, gWr, gbr, _, _ = lstm_backward(reverse_padded(gout[..., H:], lengths), cache_r)
    return gXf + reverse_padded(gXr, lengths), gWf, gbf, gWr, gbr


def length_mask(lengths, T):
    return np.arange(T)[None, :] < np.asarray(lengths)[:, None]


def pad_batch(arrays, fill=0):
    """Stack variable-length arrays along a new batch axis, right-padding with `fill`."""
    lengths = np.array([len(a) for a in arrays])
    T = lengths.max()
    first = np.asarray(arrays[0])
    out = np.full((len(arrays), T) + first.shape[1:], fill, dtype=first.dtype)
    for k, a in enumerate(arrays):
        out[k, :len(a)] = a
    return out, lengths


# -- optimizer ----------------------------------------------------------------

class Adam:
    """Bias-corrected Adam, updating a parameter dict in place."""

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient for {k!r}")
            if params[k].shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {params[k].shape} for {k!r}")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self):
        out = {"adam.t": np.array([float(self.t)])}
        for k in self.m:
            out["adam.m." + k] = self.m[k]
            out["adam.v." + k] = self.v[k]
        return out


def adam_step(params, grads, state):
    state.step(params, grads)
    return params


# -- gradient checking --------------------------------------------------------

def numeric_gradient(f, params, key, h=1e-5, index=None):
    """Central differences of scalar ``f(params)`` w.r.t. ``params[key]``.

    With `index` (flat positions) only those entries are probed; the rest of
    the returned array is zero.
    """
    x = params[key]
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size) if index is None else index:
        old = flat[i]
        flat[i] = old + h
        fp = f(params)
        flat[i] = old - h
        fm = f(params)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def relative_error(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def grad_check(fn, params, h=1e-5, keys=None, max_entries=None, rng=None):
    """Max relative error between analytic and central-difference gradients.

    ``fn(params)`` returns ``(loss, grads)`` where ``grads`` maps a subset of
    the keys of ``params`` to gradient arrays. If `max_entries` is set, each
    larger tensor is probed at that many randomly chosen entries. Returns
    ``(max_error, per_key)``.
    """
    _, grads = fn(params)
    keys = list(grads) if keys is None else keys
    rng = np.random.default_rng(0) if rng is None else rng
    per_key = {}
    for k in keys:
        size = params[k].size
        index = None
        if max_entries is not None and size > max_entries:
            index = np.sort(rng.choice(size, max_entries, replace=False))
        num = numeric_gradient(lambda p: fn(p)[0], params, k, h, index)
        sel = slice(None) if index is None else index
        err = relative_error(np.asarray(grads[k]).reshape(-1)[sel], num.reshape(-1)[sel])
        per_key[k] = float(err.max()) if err.size else 0.0
    return max(per_key.values(), default=0.0), per_key


# -- checkpoints --------------------------------------------------------------

MAGIC = b"SSAEMBCK"
VERSION = 1


def save_checkpoint(path, tensors, meta=None):
    """Write named float64 tensors plus JSON metadata to a versioned binary container."""
    names = sorted(tensors)
    header = {
        "meta": meta or {},
        "tensors": [{"name": k, "shape": list(np.shape(tensors[k]))} for k in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for k in names:
            fh.write(np.ascontiguousarray(tensors[k], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns ``(tensors, meta)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    offset = 16 + hlen
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
        tensors[entry["name"]] = arr.astype(np.float64)
        offset += 8 * count
    if offset != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return tensors, header["meta"]
