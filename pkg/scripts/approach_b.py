"""Frozen random encoder features + L2 logistic regression against the majority-class baseline.

    python scripts/approach_b.py --l2-lambda 1e-3
"""

from __future__ import annotations

from dataclasses import dataclass

from _common import Recorder, accuracy, parse_config, vocab_and_encoder
from textclf.benchmarks import head_tail, three_class
from textclf.encoder import EncoderConfig, EncoderModel, pooled_features
from textclf.metrics import dummy_fit
from textclf.train import predict_logreg, train_logreg


@dataclass
class Config:
    n_docs: int = 2500
    n_train: int = 2000
    corpus_seed: int = 1
    vocab_size: int = 200
    window: int = 64
    width: int = 32
    heads: int = 4
    head_dim: int = 8
    layers: int = 2
    ffn_dim: int = 64
    pooling: str = "mean"
    l2_lambda: float = 1e-3
    max_iter: int = 5000
    seed: int = 0
    out_dir: str = "runs/approach_b"


def main(cfg: Config) -> None:
    rec = Recorder(cfg, cfg.out_dir)
    train, test = head_tail(three_class(cfg.n_docs, cfg.corpus_seed), cfg.n_train)
    vocab, enc = vocab_and_encoder(train.texts, cfg.vocab_size, cfg.window)
    model = EncoderModel.init(EncoderConfig(len(vocab), cfg.width, cfg.heads, cfg.head_dim, cfg.layers,
                                            cfg.window, cfg.ffn_dim), cfg.seed)
    Xtr = pooled_features(model, enc(train.texts), cfg.pooling)
    Xte = pooled_features(model, enc(test.texts), cfg.pooling)
    ytr, yte = train.label_indices(), test.label_indices()
    lr = train_logreg(Xtr, ytr, cfg.l2_lambda, max_iter=cfg.max_iter)
    rec["logreg_iterations"] = len(lr.history)
    rec["logreg_accuracy"] = round(accuracy(predict_logreg(lr, Xte), yte), 4)
    rec["dummy_accuracy"] = round(accuracy(dummy_fit(ytr, len(train.label_names)).predict_proba(len(yte)), yte), 4)
    rec["margin_pp"] = round(100 * (rec.results["logreg_accuracy"] - rec.results["dummy_accuracy"]), 1)
    rec.save("results.json")


if __name__ == "__main__":
    main(parse_config(Config, __doc__.splitlines()[0]))
