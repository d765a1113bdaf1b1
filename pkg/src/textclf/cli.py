"""Command-line entry point: ``textclf <subcommand> --config run.yaml [--set key=value ...]``.

Each subcommand validates its inputs, computes everything in memory and
only then writes its artifacts plus a ``manifest-<subcommand>.json``.
Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import platform
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from . import corpus as corpus_mod
from .attribution import ReportRow, completeness_check, integrated_gradients, render_report, tokens_for
from .config import PipelineConfig, load_config
from .corpus import DocumentSet
from .encoder import (EncoderConfig, EncoderModel, dumps_checkpoint, load_encoder, pooled_features,
                      save_encoder)
from .errors import ConfigError, DomainError, NumericError, ParseError, TextClfError
from .metrics import MetricsReport, confusion_accuracy, dummy_fit, evaluate, evaluate_hard, read_confusion
from .tokenizer import (TokenSequence, Vocabulary, encode_ids, load_stopwords, normalize, preprocess,
                        train_wordpiece, wordpiece_encode, word_tokenize)
from .train import (COMBINE_MEAN, COMBINE_OR, SequenceClassifier, TrainConfig, TrainLog, labels_to_indices, mlm_eval,
                    predict_logreg, predict_long, predict_truncated, train_logreg, train_mlm, train_task)
from .unsupervised import (OUTLIER, ExpressionMapping, TopicConfig, fallback_margin, fit_topics,
                           map_clusters, similarity_classify, write_topic_report)
from .vectorize import embed_mean

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


# ---- helpers -----------------------------------------------------------------------

class Artifacts:
    """In-memory artifact store flushed to disk once a command has succeeded."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.files: dict[Path, bytes] = {}

    def text(self, name: str, content: str) -> Path:
        path = self.cfg.out(name)
        self.files[path] = content.encode("utf-8")
        return path

    def from_file(self, name: str, writer: Callable[[Path], None]) -> Path:
        """Capture a writer that insists on a path by pointing it at a scratch file."""
        import tempfile
        with tempfile.TemporaryDirectory() as tmp:
            p = Path(tmp) / "artifact"
            writer(p)
            return self.text(name, p.read_text(encoding="utf-8"))

    def flush(self, command: str) -> Path:
        manifest = {
            "command": command,
            "config_sha256": self.cfg.digest(),
            "seed": self.cfg.seed,
            "config": self.cfg.to_dict(),
            "versions": {"textclf": __version__, "python": platform.python_version(),
                         "numpy": np.__version__},
            "artifacts": {str(p.name): hashlib.sha256(b).hexdigest() for p, b in sorted(self.files.items())},
        }
        out = Path(self.cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        for p, b in self.files.items():
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_bytes(b)
        mpath = out / f"manifest-{command}.json"
        mpath.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        return mpath


def _csv(rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def _g(v: float) -> str:
    return repr(float(v))      # shortest string that round-trips exactly


def _require(path: Path | None, what: str) -> Path:
    if path is None or not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def load_documents(cfg: PipelineConfig) -> tuple[DocumentSet, DocumentSet]:
    d = cfg.dataset
    kw = {}
    schema = d.schema.upper()
    if schema == "NHTSA":
        kw = {"language": d.language, "label_rule": d.label_rule}
    elif schema == "LGPIF":
        kw = {"text_column": d.text_column}
    docs = corpus_mod.load(_require(Path(d.path), "dataset"), d.schema, **kw)
    if d.test_path:
        test = corpus_mod.load(_require(Path(d.test_path), "test dataset"), d.schema, **kw)
        return docs, test
    return corpus_mod.split(docs, d.train_fraction, cfg.seed)


def _vocab(cfg) -> Vocabulary:
    return Vocabulary.load(_require(cfg.out(cfg.tokenizer.vocab_path), "vocabulary (run train-tokenizer first)"))


def _encode(docs: DocumentSet, vocab: Vocabulary, cfg) -> list[TokenSequence]:
    return [wordpiece_encode(t, vocab, cfg.tokenizer.window, cfg.tokenizer.lowercase) for t in docs.texts]


def _train_config(cfg) -> TrainConfig:
    t = cfg.train
    return TrainConfig(t.epochs, t.batch_size, t.lr, t.beta1, t.beta2, t.eps, cfg.seed, t.p_mask)


def _encoder(cfg, vocab: Vocabulary) -> EncoderModel:
    if cfg.model.init_checkpoint:
        model = load_encoder(_require(cfg.out(cfg.model.init_checkpoint), "encoder checkpoint"))
        if model.config.vocab_size != len(vocab):
            raise DomainError("encoder checkpoint vocabulary size does not match the vocabulary")
        if model.config.max_len < cfg.tokenizer.window:
            raise DomainError("encoder checkpoint max_len is shorter than the tokenizer window")
        return model
    m = cfg.model
    ec = EncoderConfig(len(vocab), m.width, m.heads, m.head_dim, m.layers, cfg.tokenizer.window,
                       m.ffn_dim, m.positional)
    return EncoderModel.init(ec, cfg.seed)


def _labelled(docs: DocumentSet) -> list[int]:
    if any(r.label is None for r in docs):
        raise DomainError("this command needs every document to carry a label")
    return docs.label_indices()


def _metrics_text(report: MetricsReport) -> str:
    return report.to_csv()


def _print_metrics(tag: str, r: MetricsReport) -> None:
    ll = "n/a" if r.log_loss is None else f"{r.log_loss:.3f}"
    br = "n/a" if r.brier is None else f"{r.brier:.3f}"
    print(f"{tag}: log_loss={ll} brier={br} accuracy={r.accuracy:.3f}")


def _load_classifier(cfg) -> SequenceClassifier:
    return SequenceClassifier.load(_require(cfg.out(cfg.model.checkpoint), "classifier checkpoint"))


# ---- subcommands ---------------------------------------------------------------------

def cmd_train_tokenizer(cfg, args, art: Artifacts) -> None:
    train, _ = load_documents(cfg)
    words = [word_tokenize(normalize(t, cfg.tokenizer.lowercase)) for t in train.texts]
    vocab = train_wordpiece(words, cfg.tokenizer.vocab_size)
    art.text(cfg.tokenizer.vocab_path, "".join(t + "\n" for t in vocab.tokens))
    print(f"vocabulary: {len(vocab)} tokens")


def cmd_encode(cfg, args, art: Artifacts) -> None:
    train, test = load_documents(cfg)
    vocab = _vocab(cfg)
    model = _encoder(cfg, vocab)
    docs = list(train) + list(test)
    seqs = [wordpiece_encode(r.text, vocab, cfg.tokenizer.window, cfg.tokenizer.lowercase) for r in docs]
    F = pooled_features(model, seqs, cfg.train.pooling, exclude_specials=cfg.train.exclude_specials)
    if not np.all(np.isfinite(F)):
        raise NumericError("non-finite pooled features")
    rows = [("id",) + tuple(f"f{j}" for j in range(F.shape[1]))]
    rows += [(r.id,) + tuple(_g(v) for v in f) for r, f in zip(docs, F)]
    art.text("features.csv", _csv(rows))
    print(f"features: {F.shape[0]} x {F.shape[1]}")


def cmd_train_classifier(cfg, args, art: Artifacts) -> None:
    train, test = load_documents(cfg)
    vocab = _vocab(cfg)
    model = _encoder(cfg, vocab)
    ytr, yte = _labelled(train), _labelled(test)
    feats = lambda d: pooled_features(model, _encode(d, vocab, cfg), cfg.train.pooling,
                                      exclude_specials=cfg.train.exclude_specials)
    Xtr, Xte = feats(train), feats(test)
    lr = train_logreg(Xtr, ytr, cfg.train.l2_lambda, _train_config(cfg), n_classes=len(train.label_names),
                      class_names=train.label_names, max_iter=cfg.train.max_iter)
    report = evaluate(predict_logreg(lr, Xte), yte, train.label_names)
    dummy = dummy_fit(ytr, len(train.label_names))
    base = evaluate(dummy.predict_proba(len(yte)), yte, train.label_names)
    art.text("logreg.json", dumps_checkpoint(
        {"logreg": {"class_names": list(lr.class_names), "l2_lambda": lr.l2_lambda,
                    "pooling": cfg.train.pooling, "iterations": len(lr.history)}},
        {"weights": lr.weights, "bias": lr.bias}))
    art.text("metrics.csv", _metrics_text(report))
    art.text("dummy_metrics.csv", _metrics_text(base))
    _print_metrics("approach B", report)
    _print_metrics("dummy", base)


def cmd_finetune_mlm(cfg, args, art: Artifacts) -> None:
    train, test = load_documents(cfg)
    vocab = _vocab(cfg)
    model = _encoder(cfg, vocab)
    tc = _train_config(cfg)
    held = _encode(test, vocab, cfg)
    before = mlm_eval(model, held, tc.p_mask, cfg.seed)
    log = TrainLog()
    tuned = train_mlm(model, _encode(train, vocab, cfg), tc, log=log)
    after = mlm_eval(tuned, held, tc.p_mask, cfg.seed)
    art.from_file("mlm_encoder.json", lambda p: save_encoder(tuned, p))
    art.text("mlm_log.csv", _csv([("epoch", "batch", "loss")] + [(e, b, _g(l)) for e, b, l in log.rows]))
    art.text("mlm_report.csv", _csv([("stage", "masked_cross_entropy"), ("initial", _g(before)),
                                     ("finetuned", _g(after))]))
    print(f"masked cross-entropy: {before:.4f} -> {after:.4f} ({100 * (before - after) / before:.1f}% lower)")


def cmd_finetune_task(cfg, args, art: Artifacts) -> None:
    train, test = load_documents(cfg)
    vocab = _vocab(cfg)
    enc = _encoder(cfg, vocab)
    clf = SequenceClassifier.init(enc, train.label_names, cfg.train.pooling, cfg.seed,
                                  cfg.train.exclude_specials)
    log = TrainLog()
    clf = train_task(clf, _encode(train, vocab, cfg), _labelled(train), _train_config(cfg), log=log)
    report = evaluate(clf.predict_proba(_encode(test, vocab, cfg)), _labelled(test), train.label_names)
    art.from_file(cfg.model.checkpoint, lambda p: clf.save(p))
    art.text("train_log.csv", _csv([("epoch", "batch", "loss")] + [(e, b, _g(l)) for e, b, l in log.rows]))
    art.text("metrics.csv", _metrics_text(report))
    _print_metrics("approach C", report)


def cmd_predict(cfg, args, art: Artifacts) -> None:
    _, test = load_documents(cfg)
    vocab = _vocab(cfg)
    clf = _load_classifier(cfg)
    T = cfg.tokenizer.window
    header = ("id", "predicted", "chunks") + tuple(f"p_{c}" for c in clf.class_names)
    rows = [header]
    combine = cfg.task.combine
    if combine == "auto":
        combine = COMBINE_OR if clf.n_classes == 2 else COMBINE_MEAN
    for r in test:
        content = encode_ids(r.text, vocab, cfg.tokenizer.lowercase)
        if args.chunk:
            k, P = predict_long(clf, content, T, cfg.tokenizer.stride, combine)
        else:
            k, P = predict_truncated(clf, content, T)
        p = P.mean(axis=0)
        rows.append((r.id, clf.class_names[k], len(P)) + tuple(_g(v) for v in p))
    art.text("predictions.csv", _csv(rows))
    print(f"predicted {len(test)} documents{' (chunked)' if args.chunk else ''}")


def cmd_attribute(cfg, args, art: Artifacts) -> None:
    _, test = load_documents(cfg)
    vocab = _vocab(cfg)
    clf = _load_classifier(cfg)
    rows, summary = [], [("doc_id", "target", "attribution_sum", "f_input", "f_baseline", "residual", "complete")]
    for r in list(test)[: cfg.task.attribute_limit]:
        seq = wordpiece_encode(r.text, vocab, cfg.tokenizer.window, cfg.tokenizer.lowercase)
        target = int(np.argmax(clf.predict_proba([seq])[0]))
        res = integrated_gradients(clf, seq, target, cfg.task.ig_steps)
        if not np.all(np.isfinite(res.scores)):
            raise NumericError(f"non-finite attributions for document {r.id}")
        chk = completeness_check(res)
        rows.append(ReportRow(r.id, tokens_for(seq, vocab), res, r.label or "",
                              clf.class_names[target], clf.class_names[target]))
        summary.append((r.id, clf.class_names[target], _g(res.attribution_sum), _g(res.f_input),
                        _g(res.f_baseline), _g(chk.residual), int(chk.passed)))
    art.from_file("attribution.html", lambda p: render_report(rows, p))
    score_rows = [("doc_id", "position", "token", "score")]
    for row in rows:
        score_rows += [(row.doc_id, i, t, _g(s)) for i, (t, s) in enumerate(zip(row.tokens, row.result.scores))]
    art.text("attribution_scores.csv", _csv(score_rows))
    art.text("attribution_summary.csv", _csv(summary))
    print(f"attributed {len(rows)} documents; completeness ok for "
          f"{sum(int(s[-1]) for s in summary[1:])}/{len(rows)}")


def _embedder(cfg, vocab) -> Callable[[Sequence[str]], np.ndarray]:
    path = cfg.out(cfg.model.checkpoint)
    if path is not None and path.exists():
        clf = SequenceClassifier.load(path)
        model, pooling, excl = clf.encoder, clf.pooling, clf.exclude_specials
    else:
        model, pooling, excl = _encoder(cfg, vocab), cfg.train.pooling, cfg.train.exclude_specials

    def embed(texts):
        seqs = [wordpiece_encode(t, vocab, model.config.max_len, cfg.tokenizer.lowercase) for t in texts]
        return pooled_features(model, seqs, pooling, exclude_specials=excl)

    embed.model = model  # type: ignore[attr-defined]
    return embed


def cmd_similarity(cfg, args, art: Artifacts) -> None:
    _, test = load_documents(cfg)
    vocab = _vocab(cfg)
    if not cfg.task.mapping_path:
        raise ConfigError("task.mapping_path is required for similarity")
    mapping = ExpressionMapping.load(_require(Path(cfg.task.mapping_path), "expression mapping"))
    embed = _embedder(cfg, vocab)
    labels, sims = similarity_classify(test.texts, mapping, embed)
    names = list(dict.fromkeys(mapping.labels))
    if cfg.task.fallback_label:
        if cfg.task.fallback_label not in names:
            raise ConfigError("task.fallback_label is not a label of the mapping")
        per_label = [{n: max(s for s, l in zip(row, mapping.labels) if l == n) for n in names} for row in sims]
        labels = [fallback_margin(d, cfg.task.fallback_label, cfg.task.fallback_threshold) for d in per_label]
    rows = [("id", "label", "best_similarity")]
    rows += [(r.id, l, _g(row.max())) for r, l, row in zip(test, labels, sims)]
    art.text("similarity.csv", _csv(rows))
    if all(r.label is not None for r in test):
        classes = list(test.label_names)
        unknown = [l for l in names if l not in classes]
        if unknown:
            raise DomainError(f"mapping labels not in the dataset: {unknown}")
        report = evaluate_hard(labels_to_indices(labels, classes), test.label_indices(), len(classes), classes)
        art.text("metrics.csv", _metrics_text(report))
        _print_metrics("similarity", report)


def _topic_tokens(texts, stop):
    return [preprocess(t, stopwords=stop) for t in texts]


def cmd_topics(cfg, args, art: Artifacts) -> None:
    train, test = load_documents(cfg)
    vocab = _vocab(cfg)
    embed = _embedder(cfg, vocab)
    model: EncoderModel = embed.model  # type: ignore[attr-defined]
    stop = load_stopwords("de" if cfg.dataset.language == "de" else "en")
    W = model.params["embedding"].value

    def word_embed(words):
        return np.array([embed_mean(encode_ids(w, vocab, cfg.tokenizer.lowercase) or [1], W) for w in words])

    t = cfg.task
    tcfg = TopicConfig(t.pca_k, t.eps_percentile, None, t.min_pts, t.mmr_lambda, t.top_words, 3 * t.top_words)
    X = embed(train.texts)
    tm = fit_topics(X, _topic_tokens(train.texts, stop), tcfg, word_embed)
    known = [None if r.label is None else train.label_names.index(r.label) for r in train]
    tm.label_map = map_clusters(tm.cluster_ids, known)
    K = len(train.label_names)
    names = list(train.label_names)

    fit_pred = tm.predict(tm.cluster_ids)
    results = [("stage", "split", "clusters", "outliers", "accuracy")]
    n_out = int((tm.cluster_ids == OUTLIER).sum())
    if all(k is not None for k in known):
        r = evaluate_hard(fit_pred, known, K, names)
        results.append(("clusters", "fit", tm.n_clusters, n_out, _g(r.accuracy)))
        art.text("topic_confusion_fit.csv", _metrics_text(r))
        _print_metrics(f"topic mapping ({tm.n_clusters} clusters, {n_out} outliers)", r)
    test_labelled = len(test) > 0 and all(x.label is not None for x in test)
    if test_labelled:
        held_pred = tm.predict(tm.transform(embed(test.texts)))
        r = evaluate_hard(held_pred, test.label_indices(), K, names)
        results.append(("clusters", "heldout", tm.n_clusters, "", _g(r.accuracy)))

    if args.refine:
        keep = [i for i, c in enumerate(tm.cluster_ids) if c != OUTLIER]
        if not keep:
            raise DomainError("refinement needs at least one clustered document")
        seqs = _encode(train, vocab, cfg)
        y = [int(fit_pred[i]) for i in keep]
        enc = _encoder(cfg, vocab) if cfg.model.init_checkpoint else model.copy()
        clf = SequenceClassifier.init(enc, names, cfg.train.pooling, cfg.seed, cfg.train.exclude_specials)
        clf = train_task(clf, [seqs[i] for i in keep], y, _train_config(cfg))
        refined = clf.predict_proba(seqs).argmax(axis=1)
        if all(k is not None for k in known):
            r = evaluate_hard(refined, known, K, names)
            results.append(("refined", "fit", "", "", _g(r.accuracy)))
            art.text("topic_confusion_refined.csv", _metrics_text(r))
            _print_metrics("refined classifier", r)
        if test_labelled:
            r = evaluate_hard(clf.predict_proba(_encode(test, vocab, cfg)).argmax(axis=1),
                              test.label_indices(), K, names)
            results.append(("refined", "heldout", "", "", _g(r.accuracy)))
        art.from_file("refined_classifier.json", lambda p: clf.save(p))

    art.from_file("topics.csv", lambda p: write_topic_report(tm, p))
    art.text("clusters.tsv", "".join(f"{c}\t{names[l]}\n" for c, l in sorted(tm.label_map.items())))
    art.text("assignments.csv", _csv([("id", "cluster")] + [(r.id, int(c)) for r, c in zip(train, tm.cluster_ids)]))
    art.text("topic_metrics.csv", _csv(results))


def cmd_evaluate(cfg, args, art: Artifacts | None) -> None:
    if args.confusion:
        rows = [("file", "accuracy")]
        for f in args.confusion:
            _, M = read_confusion(_require(Path(f), "confusion matrix"))
            acc = confusion_accuracy(M)
            print(f"{f}: accuracy={acc:.3f} ({int(np.trace(M))}/{int(M.sum())})")
            rows.append((Path(f).name, _g(acc)))
        if art is not None:
            art.text("confusion_accuracy.csv", _csv(rows))
        return
    if art is None:
        raise ConfigError("evaluate needs --config unless --confusion is given")
    train, test = load_documents(cfg)
    path = _require(cfg.out(cfg.task.predictions_path or "predictions.csv"), "predictions")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["id", "predicted", "chunks"]:
            raise ParseError(f"{path}: expected an 'id,predicted,chunks,p_...' header")
        classes = [h[2:] for h in header[3:]]
        preds = {}
        for n, row in enumerate(reader, start=2):
            try:
                preds[int(row[0])] = [float(v) for v in row[3:]]
            except (ValueError, IndexError):
                raise ParseError(f"{path}: malformed prediction row", row=n) from None
    if list(test.label_names) != classes:
        raise DomainError("prediction classes do not match the dataset labels")
    missing = [r.id for r in test if r.id not in preds]
    if missing:
        raise DomainError(f"no prediction for document ids {missing[:5]}")
    P = np.array([preds[r.id] for r in test])
    P = P / P.sum(axis=1, keepdims=True)
    report = evaluate(P, _labelled(test), classes)
    base = evaluate(dummy_fit(_labelled(train), len(classes)).predict_proba(len(test)), _labelled(test), classes)
    art.text("evaluation.csv", _metrics_text(report))
    art.text("dummy_metrics.csv", _metrics_text(base))
    _print_metrics("model", report)
    _print_metrics("dummy", base)


COMMANDS = {
    "train-tokenizer": cmd_train_tokenizer,
    "encode": cmd_encode,
    "train-classifier": cmd_train_classifier,
    "finetune-mlm": cmd_finetune_mlm,
    "finetune-task": cmd_finetune_task,
    "predict": cmd_predict,
    "attribute": cmd_attribute,
    "similarity": cmd_similarity,
    "topics": cmd_topics,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textclf", description="Transformer text classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "evaluate", help="YAML pipeline config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scalar config field, e.g. train.epochs=3")
        if name == "predict":
            p.add_argument("--chunk", action="store_true", help="split long inputs into overlapping windows")
        if name == "topics":
            p.add_argument("--refine", action="store_true", help="retrain a classifier on cluster labels")
        if name == "evaluate":
            p.add_argument("--confusion", nargs="+", metavar="CSV", help="confusion-matrix files to score")
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set) if args.config else None
        art = Artifacts(cfg) if cfg is not None else None
        COMMANDS[args.command](cfg, args, art)
        if art is not None:
            art.flush(args.command)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TextClfError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
