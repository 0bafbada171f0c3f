"""Sequence encoder: input fusion, optional stacked biLSTM, linear projection.

Input fusion combines the 1-hot residue with (frozen) language-model states
as ``ReLU(W_lm h_lm + W_x x + b)``; with the language model disabled the
``W_lm h_lm`` term is dropped, which is the same as feeding zeros.
"""
from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from .data.alphabet import DEFAULT_ALPHABET, UNKNOWN, one_hot

ARCHITECTURES = ("linear", "fully-connected", "bilstm-1", "bilstm-3")
ARCH_ALIASES = {"fc": "fully-connected", "bilstm1": "bilstm-1", "bilstm3": "bilstm-3"}
N_TOKENS = len(DEFAULT_ALPHABET)


@dataclass
class EncoderConfig:
    arch: str = "bilstm-3"
    hidden: int = 64
    dim: int = 32
    use_lm: bool = False
    lm_dim: int = 0
    fusion_dim: int = 64

    def __post_init__(self):
        self.arch = ARCH_ALIASES.get(self.arch, self.arch)
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown encoder architecture {self.arch!r}")
        if self.dim < 1 or self.hidden < 1 or self.fusion_dim < 1:
            raise ValueError("encoder dimensions must be >= 1")
        if self.use_lm and self.lm_dim < 1:
            raise ValueError("lm_dim must be set when the language model is enabled")

    @property
    def lstm_layers(self):
        return {"bilstm-1": 1, "bilstm-3": 3}.get(self.arch, 0)


def fuse_inputs(x, h_lm, Wx, b, Wlm=None):
    pre = x @ Wx.T + b
    if Wlm is not None and h_lm is not None:
        pre = pre + h_lm @ Wlm.T
    return nn.relu(pre), pre


def fuse_inputs_backward(g, pre, x, h_lm, Wx, Wlm=None):
    """Returns (gWx, gb, gWlm, gh_lm)."""
    gpre = g * (pre > 0)
    gWx = gpre.reshape(-1, gpre.shape[-1]).T @ x.reshape(-1, x.shape[-1])
    gb = gpre.reshape(-1, gpre.shape[-1]).sum(0)
    gWlm = gh = None
    if Wlm is not None and h_lm is not None:
        gWlm = gpre.reshape(-1, gpre.shape[-1]).T @ h_lm.reshape(-1, h_lm.shape[-1])
        gh = gpre @ Wlm
    return gWx, gb, gWlm, gh


class Encoder:
    def __init__(self, config=EncoderConfig(), seed=0, params=None):
        self.config = config
        if params is None:
            params = self._init(np.random.default_rng(seed))
        self.params = params

    def _init(self, rng):
        c = self.config
        p = {}
        p["enc.fuse.Wx"] = nn.glorot(rng, (c.fusion_dim, N_TOKENS), N_TOKENS, c.fusion_dim)
        p["enc.fuse.b"] = np.zeros(c.fusion_dim)
        if c.use_lm:
            p["enc.fuse.Wlm"] = nn.glorot(rng, (c.fusion_dim, c.lm_dim), c.lm_dim, c.fusion_dim)
        width = c.fusion_dim
        if c.arch == "fully-connected":
            p.update(nn.init_linear(rng, width, c.hidden, "enc.fc."))
            width = c.hidden
        for l in range(c.lstm_layers):
            p.update(nn.init_lstm(rng, width, c.hidden, f"enc.lstm{l}.fwd."))
            p.update(nn.init_lstm(rng, width, c.hidden, f"enc.lstm{l}.rev."))
            width = 2 * c.hidden
        p.update(nn.init_linear(rng, width, c.dim, "enc.out."))
        return p

    def forward(self, tokens_list, lm_states=None):
        """Encode a list of token arrays. Returns ``(Z, lengths, cache)`` with Z of shape (B, T, D)."""
        c, p = self.config, self.params
        if any(len(t) == 0 for t in tokens_list):
            raise ValueError("cannot encode an empty sequence")
        toks, lengths = nn.pad_batch([np.asarray(t) for t in tokens_list], fill=UNKNOWN)
        x = one_hot(toks, N_TOKENS)
        h_lm = None
        if c.use_lm:
            if lm_states is None:
                raise ValueError("encoder expects language-model states")
            if [len(s) for s in lm_states] != list(lengths):
                raise ValueError("language-model states are not length-matched to the sequences")
            h_lm, _ = nn.pad_batch(lm_states)
        h, pre = fuse_inputs(x, h_lm, p["enc.fuse.Wx"], p["enc.fuse.b"], p.get("enc.fuse.Wlm"))
        cache = {"x": x, "h_lm": h_lm, "pre": pre, "lengths": lengths, "layers": []}
        if c.arch == "fully-connected":
            cache["fc_in"] = h
            cache["fc_pre"] = nn.linear_forward(h, p["enc.fc.W"], p["enc.fc.b"])
            h = nn.relu(cache["fc_pre"])
        for l in range(c.lstm_layers):
            pre_l = f"enc.lstm{l}."
            h, lc = nn.bilstm_forward(h, lengths, p[pre_l + "fwd.W"], p[pre_l + "fwd.b"],
                                      p[pre_l + "rev.W"], p[pre_l + "rev.b"])
            cache["layers"].append(lc)
        cache["out_in"] = h
        Z = nn.linear_forward(h, p["enc.out.W"], p["enc.out.b"])
        return Z, lengths, cache

    def backward(self, gZ, cache):
        c, p = self.config, self.params
        grads = {}
        gh, grads["enc.out.W"], grads["enc.out.b"] = nn.linear_backward(gZ, cache["out_in"], p["enc.out.W"])
        for l in range(c.lstm_layers - 1, -1, -1):
            pre_l = f"enc.lstm{l}."
            gh, gWf, gbf, gWr, gbr = nn.bilstm_backward(gh, cache["layers"][l])
            grads[pre_l + "fwd.W"], grads[pre_l + "fwd.b"] = gWf, gbf
            grads[pre_l + "rev.W"], grads[pre_l + "rev.b"] = gWr, gbr
        if c.arch == "fully-connected":
            gh = gh * (cache["fc_pre"] > 0)
            gh, grads["enc.fc.W"], grads["enc.fc.b"] = nn.linear_backward(gh, cache["fc_in"], p["enc.fc.W"])
        gWx, gb, gWlm, _ = fuse_inputs_backward(gh, cache["pre"], cache["x"], cache["h_lm"],
                                                p["enc.fuse.Wx"], p.get("enc.fuse.Wlm"))
        grads["enc.fuse.Wx"], grads["enc.fuse.b"] = gWx, gb
        if gWlm is not None:
            grads["enc.fuse.Wlm"] = gWlm
        return grads

    def encode(self, tokens, lm_states=None):
        Z, _, _ = self.forward([tokens], None if lm_states is None else [lm_states])
        return Z[0]

    def encode_many(self, tokens_list, lm_states=None, batch_size=64):
        out = []
        for s in range(0, len(tokens_list), batch_size):
            chunk = tokens_list[s:s + batch_size]
            states = None if lm_states is None else lm_states[s:s + batch_size]
            Z, lengths, _ = self.forward(chunk, states)
            out.extend(Z[k, :n].copy() for k, n in enumerate(lengths))
        return out

    def meta(self):
        return {"encoder": asdict(self.config)}


def encode(config, params, tokens, lm_states=None):
    return Encoder(config, params=params).encode(tokens, lm_states)
