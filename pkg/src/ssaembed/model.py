"""Trainable embedding model: frozen LM + encoder + ordinal head + contact head."""
from dataclasses import asdict

import numpy as np

from . import nn
from .contact import contact_probabilities, init_contact_head
from .encoder import Encoder, EncoderConfig
from .lm import LanguageModel
from .similarity import (
    SCORERS, init_ordinal_head, ordinal_probabilities, predict_level,
)


class EmbeddingModel:
    """Holds all parameters in one flat dict.

    Language-model tensors are stored alongside (``lm.*``) so checkpoints are
    self-contained, but `trainable` excludes them.
    """

    def __init__(self, encoder_config=EncoderConfig(), lm=None, scorer="ssa", contact_hidden=16,
                 seed=0, params=None, head_theta=1.0, head_bias=0.0):
        if scorer not in SCORERS:
            raise ValueError(f"unknown scorer {scorer!r}")
        if encoder_config.use_lm and lm is None:
            raise ValueError("encoder configured for language-model input but no model given")
        self.scorer = scorer
        self.contact_hidden = contact_hidden
        self.lm = lm
        if params is None:
            rng = np.random.default_rng(seed)
            params = dict(Encoder(encoder_config, seed=int(rng.integers(2 ** 31))).params)
            params.update(init_ordinal_head(head_theta, head_bias))
            params.update(init_contact_head(rng, encoder_config.dim, contact_hidden))
        self.params = params
        if lm is not None:
            self.params.update(lm.params)
            lm.params = {k: self.params[k] for k in lm.params}
        self.encoder = Encoder(encoder_config, params=self.params)

    @property
    def config(self):
        return self.encoder.config

    @property
    def head(self):
        return {"ord.u": self.params["ord.u"], "ord.b": self.params["ord.b"]}

    @property
    def contact_params(self):
        return {k: v for k, v in self.params.items() if k.startswith("con.")}

    def trainable(self):
        return [k for k in self.params if not k.startswith("lm.")]

    def lm_states(self, tokens_list):
        if not self.config.use_lm:
            return None
        return self.lm.hidden_states(list(tokens_list))

    def forward(self, tokens_list):
        return self.encoder.forward(tokens_list, self.lm_states(tokens_list))

    def embed(self, tokens_list, batch_size=64):
        tokens_list = list(tokens_list)
        return self.encoder.encode_many(tokens_list, self.lm_states(tokens_list), batch_size)

    def score(self, Z1, Z2):
        return SCORERS[self.scorer][0](Z1, Z2)[0]

    def classify(self, scores):
        p_ge, _ = ordinal_probabilities(scores, self.head)
        return predict_level(scores, self.head), p_ge

    def contacts(self, Z):
        return contact_probabilities(self.contact_params, Z)

    # -- persistence ----------------------------------------------------------

    def save(self, path, extra_meta=None):
        meta = {
            "kind": "embedding-model",
            "encoder": asdict(self.config),
            "scorer": self.scorer,
            "contact_hidden": self.contact_hidden,
            "lm": None if self.lm is None else {"hidden": self.lm.hidden, "layers": self.lm.layers},
        }
        meta.update(extra_meta or {})
        nn.save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path):
        params, meta = nn.load_checkpoint(path)
        if meta.get("kind") != "embedding-model":
            raise ValueError(f"{path} is not an embedding-model checkpoint")
        lm = None
        if meta["lm"] is not None:
            lm_params = {k: v for k, v in params.items() if k.startswith("lm.")}
            lm = LanguageModel(meta["lm"]["hidden"], meta["lm"]["layers"], params=lm_params)
        return cls(EncoderConfig(**meta["encoder"]), lm=lm, scorer=meta["scorer"],
                   contact_hidden=meta["contact_hidden"], params=params), meta
