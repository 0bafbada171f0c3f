"""Multitask optimisation: ordinal similarity loss + contact loss.

One optimizer step consumes a batch of sequence pairs and a batch of single
sequences with contact maps, and minimises
``lam * L_similarity + (1 - lam) * L_contact``. Branches with zero weight are
skipped entirely, so their head parameters are never touched.
"""
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import nn
from .contact import contact_backward, contact_forward, contact_loss_from_logits, separation_mask
from .data.sampling import PairSampler, PairSamplerConfig, hierarchy_level, perturb_sequence
from .evaluation.report import evaluate_pairs
from .similarity import SCORERS, similarity_loss

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    lam: float = 0.1
    pair_batch: int = 64
    contact_batch: int = 10
    epochs: int = 100
    epoch_size: int = 100_000
    smoothing: float = 0.5
    perturb: float = 0.05
    lr: float = 0.001
    min_separation: int = 2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lam must lie in [0, 1]")
        if self.pair_batch < 1 or self.contact_batch < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.epochs < 0 or self.epoch_size < 1:
            raise ConfigError("epochs must be >= 0 and epoch_size >= 1")

    @property
    def steps_per_epoch(self):
        return math.ceil(self.epoch_size / self.pair_batch)


FULL_SCALE_CONFIG = TrainConfig()
DESK_CONFIG = TrainConfig(epochs=30, epoch_size=2000, pair_batch=32, contact_batch=8, lr=0.005)


@dataclass
class TrainLog:
    steps: list = field(default_factory=list)
    epochs: list = field(default_factory=list)

    def step_tsv(self):
        lines = ["step\tepoch\tsimilarity_loss\tcontact_loss\tloss"]
        for s in self.steps:
            lines.append("\t".join(_fmt(s[k]) for k in ("step", "epoch", "similarity_loss", "contact_loss", "loss")))
        return "\n".join(lines) + "\n"

    def epoch_tsv(self):
        if not self.epochs:
            return ""
        keys = list(self.epochs[0])
        lines = ["\t".join(keys)]
        lines += ["\t".join(_fmt(e[k]) for k in keys) for e in self.epochs]
        return "\n".join(lines) + "\n"


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def multitask_step(model, optimizer, pairs, contact_records, lam, min_separation=2, rng=None, perturb=0.0):
    """One joint update. `pairs` is a list of ``(tokens_a, tokens_b, level)``.

    Returns a dict with the branch losses and the combined loss. Tokens are
    perturbed here (if ``perturb > 0``); contact labels are left untouched.
    """
    use_sim = lam > 0 and len(pairs) > 0
    use_con = lam < 1 and len(contact_records) > 0
    if lam > 0 and not pairs:
        raise ConfigError("similarity branch enabled but the pair batch is empty")
    if lam < 1 and not contact_records:
        raise ConfigError("contact branch enabled but the contact batch is empty")
    seqs = []
    if use_sim:
        for a, b, _ in pairs:
            seqs.extend([a, b])
    if use_con:
        seqs.extend(tokens for tokens, _ in contact_records)
    if perturb > 0:
        seqs = [perturb_sequence(s, perturb, rng) for s in seqs]
    Z, lengths, cache = model.forward(seqs)
    gZ = np.zeros_like(Z)
    grads = {}
    sim_loss = con_loss = None
    if use_sim:
        fwd, bwd = SCORERS[model.scorer]
        scores, caches = [], []
        for k in range(len(pairs)):
            s, c = fwd(Z[2 * k, :lengths[2 * k]], Z[2 * k + 1, :lengths[2 * k + 1]])
            scores.append(s)
            caches.append(c)
        levels = np.array([t for *_, t in pairs])
        sim_loss, g_scores, g_head = similarity_loss(np.array(scores), levels, model.head)
        for k, c in enumerate(caches):
            g1, g2 = bwd(lam * g_scores[k], c)
            gZ[2 * k, :lengths[2 * k]] += g1
            gZ[2 * k + 1, :lengths[2 * k + 1]] += g2
        grads.update({key: lam * g for key, g in g_head.items()})
    if use_con:
        offset = 2 * len(pairs) if use_sim else 0
        cp = model.contact_params
        total, count, items = 0.0, 0, []
        for k, (_, contacts) in enumerate(contact_records):
            n = lengths[offset + k]
            mask = separation_mask(n, min_separation)
            logits, c = contact_forward(cp, Z[offset + k, :n])
            loss, glog = contact_loss_from_logits(logits, contacts, mask)
            total += loss
            count += int(mask.sum())
            items.append((k, n, glog, c))
        if count == 0:
            raise ConfigError("contact batch has no scoreable pairs")
        con_loss = total / count
        scale = (1.0 - lam) / count
        for key in cp:
            grads[key] = np.zeros_like(cp[key])
        for k, n, glog, c in items:
            g, cg = contact_backward(cp, scale * glog, c)
            gZ[offset + k, :n] += g
            for key, v in cg.items():
                grads[key] += v
    loss = (lam * sim_loss if use_sim else 0.0) + ((1.0 - lam) * con_loss if use_con else 0.0)
    if not np.isfinite(loss):
        raise nn.DivergenceError(
            f"non-finite loss (similarity={sim_loss}, contact={con_loss}); "
            f"max |Z| = {np.abs(Z).max() if np.isfinite(Z).all() else 'nan'}")
    grads.update(model.encoder.backward(gZ, cache))
    optimizer.step(model.params, grads)
    return {"similarity_loss": sim_loss, "contact_loss": con_loss, "loss": loss}


def score_pairs(model, pairs, embeddings=None):
    """Scores for ``(record_a, record_b, level)`` pairs; embeddings are cached by record id."""
    cache = {} if embeddings is None else embeddings
    todo = {}
    for a, b, _ in pairs:
        for r in (a, b):
            if r.id not in cache:
                todo[r.id] = r
    if todo:
        recs = list(todo.values())
        for r, Z in zip(recs, model.embed([r.tokens for r in recs])):
            cache[r.id] = Z
    return np.array([model.score(cache[a.id], cache[b.id]) for a, b, _ in pairs])


def validate(model, pairs):
    """EvalReport of the model's own ordinal classifier on held-out pairs."""
    if not pairs:
        raise ValueError("held-out pair set is empty")
    scores = score_pairs(model, pairs)
    levels = np.array([t for *_, t in pairs])
    predicted, _ = model.classify(scores)
    return evaluate_pairs(scores, levels, predicted=predicted)


def all_pairs(records):
    out = []
    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            out.append((records[i], records[j], hierarchy_level(records[i].hierarchy, records[j].hierarchy)))
    return out


def train(model, records, config=DESK_CONFIG, heldout=None, out_dir=None, callback=None):
    """Run the full schedule. Returns the TrainLog; the model is updated in place."""
    if config.lam > 0 and any(r.hierarchy is None for r in records):
        raise ConfigError("similarity training needs hierarchy labels on every record")
    contact_pool = [r for r in records if r.contacts is not None]
    if config.lam < 1 and not contact_pool:
        raise ConfigError("lam < 1 requires contact maps (coordinates) for training records")
    rng = np.random.default_rng(config.seed)
    sampler = None
    if config.lam > 0:
        sampler = PairSampler(records, PairSamplerConfig(config.smoothing, config.pair_batch,
                                                         config.epoch_size, config.seed), rng=rng)
    opt = nn.Adam(lr=config.lr)
    tlog = TrainLog()
    step = 0
    for epoch in range(config.epochs):
        remaining = config.epoch_size
        while remaining > 0:
            size = min(config.pair_batch, remaining)
            remaining -= size
            pairs = []
            if sampler is not None:
                pairs = [(sampler.records[i].tokens, sampler.records[j].tokens, int(t))
                         for i, j, t in sampler.sample_indices(size)]
            cons = []
            if config.lam < 1:
                pick = rng.choice(len(contact_pool), size=min(config.contact_batch, len(contact_pool)),
                                  replace=False)
                cons = [(contact_pool[k].tokens, contact_pool[k].contacts) for k in pick]
            losses = multitask_step(model, opt, pairs, cons, config.lam, config.min_separation,
                                    rng=rng, perturb=config.perturb)
            tlog.steps.append({"step": step, "epoch": epoch, **losses})
            step += 1
        entry = {"epoch": epoch, "steps": step,
                 "mean_loss": float(np.mean([s["loss"] for s in tlog.steps if s["epoch"] == epoch]))}
        if heldout:
            entry.update(validate(model, heldout).as_dict())
        tlog.epochs.append(entry)
        log.info("epoch %d: %s", epoch, entry)
        if out_dir is not None:
            model.save(os.path.join(out_dir, f"epoch{epoch:03d}.ckpt"),
                       {"train_config": asdict(config), "epoch": epoch})
        if callback is not None:
            callback(epoch, model, tlog)
    return tlog


def split_by_id(records, heldout_fraction=0.2, seed=0):
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    k = int(round(heldout_fraction * len(records)))
    held = set(order[:k].tolist())
    return ([r for i, r in enumerate(records) if i not in held],
            [r for i, r in enumerate(records) if i in held])


def with_overrides(config, **kw):
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
