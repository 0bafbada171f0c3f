"""Command-line entry point: ``ssaembed <subcommand> [options]``.

Every run writes a JSON RunManifest next to its main output (or to
``--manifest``). Exit codes: 0 success, 1 a check failed (grad-check),
2 usage or configuration error, 3 bad input data, 4 numerical divergence.
"""
import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, nn
from .contact import pooled_contact_metrics
from .data import (
    DEFAULT_ALPHABET, SS8, DataError, SyntheticCorpusConfig, generate_synthetic_corpus,
    generate_tm_corpus, hierarchy_level, load_records, parse_fasta, read_embeddings,
    write_coordinates, write_embeddings, write_fasta, write_labels, write_position_labels,
)
from .data.records import TM_CODES
from .encoder import EncoderConfig
from .evaluation import ProbeConfig, evaluate_pairs, fit_thresholds, kmer_features, protein_split, ss_probe
from .evaluation.nw import nw_align_score
from .gradcheck import REGISTRY, TOLERANCE, check_op
from .lm import LanguageModel, LMConfig, pretrain_lm
from .model import EmbeddingModel
from .similarity import SCORERS
from .tmcrf import (
    CRFConfig, Grammar, TMTagger, crossvalidate_tm, onehot_features, regions_to_states,
    tm_category_score, tm_report_tsv,
)
from .training import DESK_CONFIG, ConfigError, TrainConfig, split_by_id, train, validate, all_pairs

log = logging.getLogger("ssaembed")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


# -- small helpers ---------------------------------------------------------------

def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def tsv(header, rows):
    lines = ["\t".join(header)] + ["\t".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def artifact_version():
    """Package version plus a digest of the installed sources."""
    h = hashlib.sha256()
    root = Path(__file__).parent
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.suffix in (".py", ".txt", ".json"):
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


class Run:
    """Collects inputs and outputs of one invocation and writes its manifest."""

    def __init__(self, args):
        self.args = args
        self.started = datetime.now(timezone.utc).isoformat()
        self.inputs = {}
        self.outputs = []

    def input(self, path):
        if path is None:
            return None
        if not os.path.exists(path):
            raise DataError(f"input file not found: {path}")
        self.inputs[str(path)] = _digest(path)
        return path

    def write_text(self, path, text):
        if path is None or path == "-":
            sys.stdout.write(text)
            return
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.outputs.append(str(path))

    def output(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(str(path))
        return path

    def manifest_path(self):
        a = self.args
        if a.manifest:
            return a.manifest
        out = getattr(a, "out", None)
        if out and out != "-":
            if getattr(a, "_out_is_dir", False):
                return os.path.join(out, "manifest.json")
            return out + ".manifest.json"
        return f"ssaembed-{a.command}.manifest.json"

    def finish(self):
        config = {k: v for k, v in vars(self.args).items() if not k.startswith("_") and k != "func"}
        manifest = {
            "subcommand": self.args.command,
            "config": config,
            "seed": self.args.seed,
            "workers": self.args.workers,
            "inputs": self.inputs,
            "outputs": {p: _digest(p) for p in self.outputs if os.path.isfile(p)},
            "version": artifact_version(),
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
        }
        path = self.manifest_path()
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True, default=str)
            fh.write("\n")


def _load(run, fasta, labels=None, coords=None, ss=None, tm=None):
    return load_records(run.input(fasta), labels=run.input(labels), coords=run.input(coords),
                        ss=run.input(ss), tm=run.input(tm))


def _load_model(run, path):
    if path is None:
        raise UsageError("--ckpt is required for this scorer or feature source")
    model, _ = EmbeddingModel.load(run.input(path))
    return model


def _map(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
    return [fn(x) for x in items]


def _nw_pair(ab):
    return nw_align_score(*ab)


# -- subcommands ---------------------------------------------------------------------

def cmd_synth_data(args, run):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "scop":
        cfg = SyntheticCorpusConfig(args.classes, args.folds, args.superfamilies, args.families,
                                    args.sequences, length_range=(args.min_length, args.max_length),
                                    seed=args.seed)
        recs = generate_synthetic_corpus(cfg)
        write_labels(run.output(out / "labels.tsv"), {r.id: r.hierarchy for r in recs})
        write_coordinates(run.output(out / "coords.tsv"), {r.id: r.coordinates for r in recs})
        write_position_labels(run.output(out / "ss.tsv"), {r.id: [SS8[s] for s in r.ss] for r in recs})
    else:
        recs = generate_tm_corpus(args.per_category, seed=args.seed)
        write_position_labels(run.output(out / "tm.tsv"),
                              {r.id: [TM_CODES[g.label] for g in r.regions for _ in range(len(g))] for r in recs})
    write_fasta(run.output(out / "seqs.fasta"), [(r.id, DEFAULT_ALPHABET.decode(r.tokens)) for r in recs])
    return EXIT_OK


def cmd_pretrain_lm(args, run):
    corpus = [DEFAULT_ALPHABET.encode(s) for _, s in parse_fasta(run.input(args.corpus))]
    cfg = LMConfig(args.hidden, args.layers, args.epochs, args.batch_size, args.lr, args.seed)
    _, losses = pretrain_lm(corpus, cfg, run.output(args.out))
    run.write_text(args.out + ".log.tsv", tsv(["step", "loss"], enumerate(losses)))
    return EXIT_OK


def cmd_train(args, run):
    recs = _load(run, args.fasta, labels=args.labels, coords=args.coords)
    train_recs, held = split_by_id(recs, args.heldout_fraction, seed=args.seed)
    lm = LanguageModel.load(run.input(args.lm)) if args.lm else None
    enc = EncoderConfig(args.arch, args.hidden, args.dim, use_lm=lm is not None,
                        lm_dim=lm.state_dim if lm is not None else 0, fusion_dim=args.fusion_dim)
    model = EmbeddingModel(enc, lm=lm, scorer=args.scorer, contact_hidden=args.contact_hidden, seed=args.seed)
    cfg = TrainConfig(args.lam, args.pair_batch, args.contact_batch, args.epochs, args.epoch_size,
                      args.smoothing, args.perturb, args.lr, args.min_separation, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    heldout = all_pairs(held) if len(held) > 1 else None

    def record(epoch, m, tlog):
        run.outputs.append(str(out / f"epoch{epoch:03d}.ckpt"))
    tlog = train(model, train_recs, cfg, heldout=heldout, out_dir=str(out), callback=record)
    model.save(run.output(out / "model.ckpt"), {"train_config": asdict(cfg)})
    run.write_text(out / "steps.tsv", tlog.step_tsv())
    run.write_text(out / "epochs.tsv", tlog.epoch_tsv())
    return EXIT_OK


def cmd_embed(args, run):
    model = _load_model(run, args.ckpt)
    named = parse_fasta(run.input(args.fasta))
    Zs = model.embed([DEFAULT_ALPHABET.encode(s) for _, s in named])
    write_embeddings(run.output(args.out), [(n, Z) for (n, _), Z in zip(named, Zs)])
    return EXIT_OK


def _pair_scores(args, run, named_a, named_b, pairs):
    """Scores, predicted levels and p_ge for index pairs into the two name lists."""
    if args.scorer == "nw":
        seqs = [(named_a[i][1], named_b[j][1]) for i, j in pairs]
        return np.array(_map(_nw_pair, seqs, args.workers)), None, None
    model = _load_model(run, args.ckpt)
    Za = model.embed([DEFAULT_ALPHABET.encode(s) for _, s in named_a])
    Zb = Za if named_b is named_a else model.embed([DEFAULT_ALPHABET.encode(s) for _, s in named_b])
    fwd = SCORERS[args.scorer][0]
    scores = np.array([fwd(Za[i], Zb[j])[0] for i, j in pairs])
    if args.scorer != model.scorer:
        return scores, None, None
    levels, p_ge = model.classify(scores)
    return scores, levels, p_ge


def cmd_compare(args, run):
    named_a = parse_fasta(run.input(args.a))
    if args.b:
        named_b = parse_fasta(run.input(args.b))
        pairs = [(i, j) for i in range(len(named_a)) for j in range(len(named_b))]
    else:
        named_b = named_a
        pairs = [(i, j) for i in range(len(named_a)) for j in range(i + 1, len(named_a))]
    scores, levels, p_ge = _pair_scores(args, run, named_a, named_b, pairs)
    rows = []
    for k, (i, j) in enumerate(pairs):
        extra = [None] * 5 if levels is None else [int(levels[k])] + list(p_ge[k])
        rows.append([named_a[i][0], named_b[j][0], scores[k]] + extra)
    run.write_text(args.out, tsv(["idA", "idB", "score", "predicted_level", "p_ge_1", "p_ge_2", "p_ge_3", "p_ge_4"],
                                 rows))
    return EXIT_OK


def _labelled_pairs(args, run, fasta, labels, pairs_file=None):
    recs = _load(run, fasta, labels=labels)
    missing = [r.id for r in recs if r.hierarchy is None]
    if missing:
        raise DataError(f"no hierarchy label for {missing[:5]}")
    if pairs_file:
        index = {r.id: k for k, r in enumerate(recs)}
        pairs = []
        for line in open(run.input(pairs_file), encoding="utf-8"):
            if line.strip() and not line.startswith("#"):
                a, b = line.rstrip("\n").split("\t")[:2]
                if a not in index or b not in index:
                    raise DataError(f"pair ({a}, {b}) names an unknown id")
                pairs.append((index[a], index[b]))
    else:
        pairs = [(i, j) for i in range(len(recs)) for j in range(i + 1, len(recs))]
    named = [(r.id, DEFAULT_ALPHABET.decode(r.tokens)) for r in recs]
    levels = np.array([hierarchy_level(recs[i].hierarchy, recs[j].hierarchy) for i, j in pairs])
    return named, pairs, levels


def cmd_eval_scop(args, run):
    named, pairs, levels = _labelled_pairs(args, run, args.fasta, args.labels, args.pairs)
    if not pairs:
        raise DataError("no pairs to evaluate")
    scores, predicted, _ = _pair_scores(args, run, named, named, pairs)
    if predicted is not None and not args.calib_fasta:
        report = evaluate_pairs(scores, levels, predicted=predicted)
    else:
        if args.calib_fasta:
            cnamed, cpairs, clevels = _labelled_pairs(args, run, args.calib_fasta, args.calib_labels)
            cscores, _, _ = _pair_scores(args, run, cnamed, cnamed, cpairs)
        else:
            cscores, clevels = scores, levels
        report = evaluate_pairs(scores, levels, thresholds=fit_thresholds(cscores, clevels))
    run.write_text(args.out, tsv(list(report.as_dict()), [list(report.as_dict().values())]))
    return EXIT_OK


def cmd_eval_contacts(args, run):
    recs = [r for r in _load(run, args.fasta, coords=args.coords) if r.contacts is not None]
    if not recs:
        raise DataError("no record has coordinates")
    model = _load_model(run, args.ckpt)
    if args.embeddings:
        emb = read_embeddings(run.input(args.embeddings))
        Zs = []
        for r in recs:
            if r.id not in emb or len(emb[r.id]) != len(r):
                raise DataError(f"{r.id}: missing or wrong-length embedding")
            Zs.append(emb[r.id])
    else:
        Zs = model.embed([r.tokens for r in recs])
    preds = [model.contacts(Z) for Z in Zs]
    rows = []
    for sep in args.separations:
        m = pooled_contact_metrics(preds, [r.contacts for r in recs], separation=sep)
        rows += [[sep, k, m[k]] for k in ("precision", "recall", "f1", "aupr", "pr_at_L", "pr_at_L2", "pr_at_L5")]
    run.write_text(args.out, tsv(["separation", "metric", "value"], rows))
    return EXIT_OK


def _features(args, run, recs, kind):
    if kind in ("kmer", "onehot"):
        k = getattr(args, "k", 1) if kind == "kmer" else 1
        return [kmer_features(r.tokens, k) for r in recs]
    if args.embeddings:
        emb = read_embeddings(run.input(args.embeddings))
        missing = [r.id for r in recs if r.id not in emb or len(emb[r.id]) != len(r)]
        if missing:
            raise DataError(f"missing or wrong-length embeddings for {missing[:5]}")
        return [emb[r.id] for r in recs]
    return _load_model(run, args.ckpt).embed([r.tokens for r in recs])


def cmd_probe_ss(args, run):
    recs = [r for r in _load(run, args.fasta, ss=args.ss) if r.ss is not None]
    if len(recs) < 2:
        raise DataError("need at least two proteins with secondary-structure labels")
    if args.k < 1 or args.k % 2 == 0:
        raise UsageError("--k must be a positive odd integer")
    feats = _features(args, run, recs, args.features)
    cfg = ProbeConfig(args.hidden, 2, args.epochs, args.batch_size, args.lr, args.seed)
    res = ss_probe(feats, [r.ss for r in recs], protein_split(len(recs), args.test_fraction, args.seed), cfg)
    rows = [[split, res[split]["accuracy"], res[split]["perplexity"], res[split]["n_positions"]]
            for split in ("train", "test")]
    run.write_text(args.out, tsv(["split", "accuracy", "perplexity", "n_positions"], rows))
    return EXIT_OK


def _tm_inputs(args, run):
    recs = [r for r in _load(run, args.fasta, tm=args.tm) if r.regions is not None]
    if not recs:
        raise DataError("no record has a transmembrane annotation")
    grammar = Grammar.load(run.input(args.grammar)) if args.grammar else Grammar.default()
    return recs, grammar, _features(args, run, recs, args.features)


def cmd_train_tm(args, run):
    recs, grammar, feats = _tm_inputs(args, run)
    paths = [regions_to_states(r.regions, grammar) for r in recs]
    cfg = CRFConfig(args.hidden, args.epochs, args.batch_size, args.lr, args.seed)
    tagger = TMTagger(feats[0].shape[1], grammar, args.hidden, seed=args.seed)
    losses = tagger.fit(feats, paths, cfg)
    tagger.save(run.output(args.out), {"features": args.features, "crf_config": asdict(cfg)})
    run.write_text(args.out + ".log.tsv", tsv(["epoch", "loss"], enumerate(losses)))
    return EXIT_OK


def cmd_eval_tm(args, run):
    recs, grammar, feats = _tm_inputs(args, run)
    if args.tagger:
        tagger, _ = TMTagger.load(run.input(args.tagger))
        correct = {}
        for r, pred in zip(recs, tagger.predict_regions(feats)):
            s = tm_category_score(pred, r.regions, r.meta.get("category"))
            correct.setdefault(s["category"], []).append(s["correct"])
        result = {c: (float(np.mean(correct[c])) if c in correct else None)
                  for c in ("TM", "SP+TM", "Globular", "Globular+SP")}
        result["overall"] = float(np.mean([v for vs in correct.values() for v in vs]))
    else:
        cfg = CRFConfig(args.hidden, args.epochs, args.batch_size, args.lr, args.seed)
        result, _ = crossvalidate_tm(recs, feats, args.folds, cfg, grammar, seed=args.seed, workers=args.workers)
    run.write_text(args.out, tm_report_tsv(result))
    return EXIT_OK


def cmd_grad_check(args, run):
    names = list(REGISTRY) if args.all or not args.op else args.op
    unknown = [n for n in names if n not in REGISTRY]
    if unknown:
        raise UsageError(f"unknown op(s) {unknown}; choose from {sorted(REGISTRY)}")
    rows = []
    for name in names:
        for s in range(args.seeds):
            err, _ = check_op(name, args.seed + s)
            rows.append([name, args.seed + s, err, err <= args.tol])
    run.write_text(args.out, tsv(["op", "seed", "max_rel_error", "passed"], rows))
    return EXIT_OK if all(r[3] for r in rows) else EXIT_FAIL


# -- parser -------------------------------------------------------------------------

def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="ssaembed", description="Protein sequence embeddings with soft symmetric alignment.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_text, out_help="output path ('-' or omitted: stdout)", out_dir=False):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
        sp.add_argument("--workers", type=int, default=1,
                        help="processes for pair scoring / CV folds; outputs are identical for any value")
        sp.add_argument("--config", help="JSON file of option defaults (flags take precedence)")
        sp.add_argument("--manifest", help="RunManifest path (default: next to the output)")
        sp.add_argument("--log-level", default="WARNING")
        sp.add_argument("--out", required=out_dir, help=out_help)
        sp.set_defaults(func=func, _out_is_dir=out_dir)
        return sp

    s = add("synth-data", cmd_synth_data, "Write a synthetic corpus (FASTA plus side files) into --out.",
            "output directory", out_dir=True)
    s.add_argument("--kind", choices=["scop", "tm"], default="scop")
    for flag, d in (("classes", 2), ("folds", 2), ("superfamilies", 5), ("families", 1), ("sequences", 4)):
        s.add_argument(f"--{flag}", type=int, default=d)
    s.add_argument("--min-length", type=int, default=40)
    s.add_argument("--max-length", type=int, default=60)
    s.add_argument("--per-category", type=int, default=20, help="proteins per TM category (--kind tm)")

    s = add("pretrain-lm", cmd_pretrain_lm, "Pretrain the bidirectional language model on a FASTA corpus.",
            "checkpoint path", out_dir=False)
    s.add_argument("--corpus", required=True, help="FASTA file")
    s.add_argument("--hidden", type=int, default=LMConfig.hidden)
    s.add_argument("--layers", type=int, default=LMConfig.layers)
    s.add_argument("--epochs", type=int, default=LMConfig.epochs)
    s.add_argument("--batch-size", type=int, default=LMConfig.batch_size)
    s.add_argument("--lr", type=float, default=LMConfig.lr)

    s = add("train", cmd_train, "Multitask training (similarity + contacts); desk-scale defaults.",
            "output directory for checkpoints and logs", out_dir=True)
    s.add_argument("--fasta", required=True)
    s.add_argument("--labels", required=True, help="labels TSV: id, class.fold.superfamily.family")
    s.add_argument("--coords", help="coordinates TSV: id, position, x, y, z (needed when --lam < 1)")
    s.add_argument("--lm", help="language-model checkpoint (frozen)")
    s.add_argument("--arch", default="bilstm-1", choices=["linear", "fc", "bilstm1", "bilstm3",
                                                          "fully-connected", "bilstm-1", "bilstm-3"])
    s.add_argument("--hidden", type=int, default=32)
    s.add_argument("--dim", type=int, default=16)
    s.add_argument("--fusion-dim", type=int, default=32)
    s.add_argument("--contact-hidden", type=int, default=16)
    s.add_argument("--scorer", choices=["ssa", "ua", "me"], default="ssa")
    s.add_argument("--heldout-fraction", type=float, default=0.25)
    d = DESK_CONFIG
    s.add_argument("--lam", type=float, default=d.lam)
    s.add_argument("--pair-batch", type=int, default=d.pair_batch)
    s.add_argument("--contact-batch", type=int, default=d.contact_batch)
    s.add_argument("--epochs", type=int, default=12)
    s.add_argument("--epoch-size", type=int, default=d.epoch_size)
    s.add_argument("--smoothing", type=float, default=d.smoothing)
    s.add_argument("--perturb", type=float, default=d.perturb)
    s.add_argument("--lr", type=float, default=d.lr)
    s.add_argument("--min-separation", type=int, default=d.min_separation)

    s = add("embed", cmd_embed, "Embed every sequence of a FASTA file.", "embeddings file")
    s.add_argument("--fasta", required=True)
    s.add_argument("--ckpt", required=True)

    s = add("compare", cmd_compare, "Score sequence pairs: --a x --b y (cross product) or --a x alone (all pairs).")
    s.add_argument("--a", required=True)
    s.add_argument("--b")
    s.add_argument("--ckpt")
    s.add_argument("--scorer", choices=["ssa", "ua", "me", "nw"], default="ssa")

    s = add("eval-scop", cmd_eval_scop, "Structural-similarity metrics (accuracy, r, rho, per-level AP).")
    s.add_argument("--fasta", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--pairs", help="TSV of idA, idB (default: all pairs)")
    s.add_argument("--ckpt")
    s.add_argument("--scorer", choices=["ssa", "ua", "me", "nw"], default="ssa")
    s.add_argument("--calib-fasta", help="calibration set for threshold fitting")
    s.add_argument("--calib-labels")

    s = add("eval-contacts", cmd_eval_contacts, "Contact metrics from a trained model's contact head.")
    s.add_argument("--fasta", required=True)
    s.add_argument("--coords", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--embeddings", help="precomputed embeddings file (else embed with --ckpt)")
    s.add_argument("--separations", type=_int_list, default=[2, 12], help="comma-separated minimum |i-j|")

    s = add("probe-ss", cmd_probe_ss, "Secondary-structure probe on embeddings or one-hot k-mers.")
    s.add_argument("--fasta", required=True)
    s.add_argument("--ss", required=True, help=f"per-position label TSV with labels from {SS8}")
    s.add_argument("--features", choices=["embed", "kmer"], default="embed")
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--ckpt")
    s.add_argument("--embeddings")
    s.add_argument("--hidden", type=int, default=ProbeConfig.hidden)
    s.add_argument("--epochs", type=int, default=ProbeConfig.epochs)
    s.add_argument("--batch-size", type=int, default=ProbeConfig.batch_size)
    s.add_argument("--lr", type=float, default=ProbeConfig.lr)
    s.add_argument("--test-fraction", type=float, default=0.2)

    for name, func, text, out_help in (
            ("train-tm", cmd_train_tm, "Train the transmembrane CRF tagger on all annotated proteins.",
             "tagger checkpoint path"),
            ("eval-tm", cmd_eval_tm, "Per-category TM accuracy by stratified cross-validation "
             "(or of a trained --tagger).", "output path ('-' or omitted: stdout)")):
        s = add(name, func, text, out_help)
        s.add_argument("--fasta", required=True)
        s.add_argument("--tm", required=True, help="per-position label TSV with labels S, M, I, O, G")
        s.add_argument("--features", choices=["embed", "onehot"], default="onehot")
        s.add_argument("--ckpt")
        s.add_argument("--embeddings")
        s.add_argument("--grammar", help="grammar JSON (default: built-in)")
        s.add_argument("--hidden", type=int, default=CRFConfig.hidden)
        s.add_argument("--epochs", type=int, default=CRFConfig.epochs)
        s.add_argument("--batch-size", type=int, default=CRFConfig.batch_size)
        s.add_argument("--lr", type=float, default=CRFConfig.lr)
        if name == "eval-tm":
            s.add_argument("--folds", type=int, default=10)
            s.add_argument("--tagger", help="evaluate this trained tagger instead of cross-validating")

    s = add("grad-check", cmd_grad_check, "Finite-difference gradient checks of every differentiable op.")
    s.add_argument("--all", action="store_true")
    s.add_argument("--op", action="append", help=f"one of {', '.join(REGISTRY)}")
    s.add_argument("--seeds", type=int, default=20)
    s.add_argument("--tol", type=float, default=TOLERANCE)
    return p


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        raise UsageError("a subcommand is required")
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            overrides = json.load(fh)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        bad = set(overrides) - known
        if bad:
            raise UsageError(f"unknown keys in --config: {sorted(bad)}")
        sub.set_defaults(**overrides)
        args = parser.parse_args(argv)
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    return args


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as e:
        print(f"ssaembed: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as e:
        print(f"ssaembed: cannot read config: {e}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    run = Run(args)
    try:
        code = args.func(args, run)
    except (UsageError, ConfigError) as e:
        print(f"ssaembed: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except nn.DivergenceError as e:
        print(f"ssaembed: numerical divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, ValueError, KeyError, OSError, UnicodeDecodeError) as e:
        print(f"ssaembed: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    run.finish()
    return code


if __name__ == "__main__":
    sys.exit(main())
