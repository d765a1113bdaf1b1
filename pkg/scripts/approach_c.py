"""Task fine-tuning of a toy encoder on the three-class synthetic corpus.

    python scripts/approach_c.py --epochs 2 --out-dir runs/approach_c
"""

from __future__ import annotations

from dataclasses import dataclass

from _common import Recorder, accuracy, parse_config, vocab_and_encoder
from textclf.benchmarks import head_tail, three_class
from textclf.encoder import EncoderConfig, EncoderModel
from textclf.metrics import evaluate
from textclf.train import SequenceClassifier, TrainConfig, train_task


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
    epochs: int = 2
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 0
    out_dir: str = "runs/approach_c"


def main(cfg: Config) -> None:
    rec = Recorder(cfg, cfg.out_dir)
    train, test = head_tail(three_class(cfg.n_docs, cfg.corpus_seed), cfg.n_train)
    vocab, enc = vocab_and_encoder(train.texts, cfg.vocab_size, cfg.window)
    model = EncoderModel.init(EncoderConfig(len(vocab), cfg.width, cfg.heads, cfg.head_dim, cfg.layers,
                                            cfg.window, cfg.ffn_dim), cfg.seed)
    clf = SequenceClassifier.init(model, train.label_names, seed=cfg.seed)
    clf = train_task(clf, enc(train.texts), train.label_indices(),
                     TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr, seed=cfg.seed))
    P = clf.predict_proba(enc(test.texts))
    report = evaluate(P, test.label_indices(), train.label_names)
    rec["heldout_accuracy"] = round(accuracy(P, test.label_indices()), 4)
    rec["heldout_log_loss"] = round(report.log_loss, 4)
    rec.out.mkdir(parents=True, exist_ok=True)
    clf.save(rec.out / "classifier.json")
    (rec.out / "metrics.csv").write_text(report.to_csv())
    rec.save("results.json")


if __name__ == "__main__":
    main(parse_config(Config, __doc__.splitlines()[0]))
