"""Grammar-constrained CRF tagging of synthetic membrane proteins.

Generates proteins in the four topology categories, prints the state
grammar's region structure, cross-validates a tagger on one-hot
features, and shows predicted against true regions for one protein.

    python3 demos/transmembrane_tagging.py
"""
import numpy as np

from ssaembed.data import generate_tm_corpus
from ssaembed.tmcrf import (
    CRFConfig, Grammar, TMTagger, crossvalidate_tm, onehot_features, regions_to_states, tm_report_tsv,
)

grammar = Grammar.default()
print(f"grammar: {len(grammar)} states, {int(grammar.allowed.sum())} allowed transitions")
print("  start states:", [n for n, s in zip(grammar.names, grammar.start) if s])

recs = generate_tm_corpus(per_category=6, seed=0)
feats = [onehot_features(r.tokens) for r in recs]
cfg = CRFConfig(hidden=16, epochs=8, batch_size=4, lr=0.01)

result, folds = crossvalidate_tm(recs, feats, folds=3, config=cfg, grammar=grammar)
print("\n3-fold cross-validation on one-hot features:")
print(tm_report_tsv(result))

tagger = TMTagger(feats[0].shape[1], grammar, hidden=cfg.hidden, seed=0)
tagger.fit(feats, [regions_to_states(r.regions, grammar) for r in recs], cfg)
r = next(x for x in recs if x.meta["category"] == "SP+TM")
fmt = lambda regs: " ".join(f"{g.label}[{g.start}:{g.end}]" for g in regs)  # noqa: E731
print(f"{r.id} ({r.meta['category']}, length {len(r.tokens)}), trained on all proteins:")
print("  true     ", fmt(r.regions))
print("  predicted", fmt(tagger.predict_regions([feats[recs.index(r)]])[0]))
