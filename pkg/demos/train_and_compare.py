"""Train a small multitask model on synthetic families and compare scorers.

Generates a 20-family corpus with a known class/fold/superfamily/family
hierarchy, trains the encoder jointly on pair similarity and contact
maps for a few epochs, and reports held-out accuracy plus fold-level
average precision for the soft-alignment and mean-embedding scorers.
Takes about a minute on one CPU core.

    python3 demos/train_and_compare.py [epochs]
"""
import sys
from dataclasses import replace

import numpy as np

from ssaembed.contact import pooled_contact_metrics
from ssaembed.data import SyntheticCorpusConfig, generate_synthetic_corpus
from ssaembed.encoder import EncoderConfig
from ssaembed.evaluation import evaluate_pairs
from ssaembed.model import EmbeddingModel
from ssaembed.similarity import me_score
from ssaembed.training import DESK_CONFIG, all_pairs, score_pairs, split_by_id, train, validate

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 4

recs = generate_synthetic_corpus(SyntheticCorpusConfig(2, 2, 5, 1, 4, seed=1))
train_recs, held = split_by_id(recs, 0.25, seed=0)
heldout = all_pairs(held)
print(f"{len(recs)} sequences, {len({r.hierarchy for r in recs})} families; "
      f"{len(train_recs)} train / {len(held)} held out ({len(heldout)} held-out pairs)")

model = EmbeddingModel(EncoderConfig(arch="bilstm-1", hidden=32, dim=16, fusion_dim=32), seed=0)
print(f"untrained held-out accuracy: {validate(model, heldout).accuracy:.3f}")


def progress(epoch, m, tlog):
    e = tlog.epochs[-1]
    print(f"  epoch {epoch:2d}  loss {e['mean_loss']:.3f}  held-out acc {e['accuracy']:.3f}")


train(model, train_recs, replace(DESK_CONFIG, epochs=epochs), heldout=heldout, callback=progress)

emb = {}
ssa = score_pairs(model, heldout, emb)
me = np.array([me_score(emb[a.id], emb[b.id]) for a, b, _ in heldout])
levels = np.array([t for *_, t in heldout])
none = np.zeros(len(levels), int)
print(f"\nfold-level AP  ssa {evaluate_pairs(ssa, levels, predicted=none).ap_fold:.3f}"
      f"  me {evaluate_pairs(me, levels, predicted=none).ap_fold:.3f}")

preds = [model.contacts(emb[r.id]) for r in held]
for sep in (2, 12):
    m = pooled_contact_metrics(preds, [r.contacts for r in held], separation=sep)
    print(f"contacts |i-j|>={sep:<2}  AUPR {m['aupr']:.3f}  Pr@L {m['pr_at_L']:.3f}")
