"""Long documents whose only cue sits past token 512: truncation versus chunking with OR.

The classifier is trained on window-length documents (cue anywhere), then
applied to long documents either truncated to one window or split into
overlapping chunks.

    python scripts/long_documents.py --window 64 --epochs 10
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from _common import Recorder, parse_config, vocab_and_encoder
from textclf.benchmarks import LONG_CUE, long_binary
from textclf.encoder import EncoderConfig, EncoderModel
from textclf.tokenizer import encode_ids
from textclf.train import SequenceClassifier, TrainConfig, predict_long, predict_truncated, train_task


@dataclass
class Config:
    window: int = 64
    n_train: int = 1000
    train_seed: int = 6
    n_test: int = 200
    test_seed: int = 5
    test_length: int = 600
    cue_after: int = 520
    vocab_size: int = 300
    epochs: int = 10
    lr: float = 1e-3
    seed: int = 0
    out_dir: str = "runs/long_documents"


def main(cfg: Config) -> None:
    rec = Recorder(cfg, cfg.out_dir)
    # Training documents fill the window exactly, so every position is seen in training.
    short = long_binary(cfg.n_train, cfg.train_seed, cfg.window - 2, 0)
    vocab, enc = vocab_and_encoder(short.texts, cfg.vocab_size, cfg.window)
    model = EncoderModel.init(EncoderConfig(len(vocab), 32, 4, 8, 2, cfg.window, 64), cfg.seed)
    clf = train_task(SequenceClassifier.init(model, short.label_names, seed=cfg.seed), enc(short.texts),
                     short.label_indices(), TrainConfig(epochs=cfg.epochs, lr=cfg.lr, seed=cfg.seed))

    test = long_binary(cfg.n_test, cfg.test_seed, cfg.test_length, cfg.cue_after)
    y = np.array(test.label_indices())
    cue = encode_ids(LONG_CUE, vocab)[0]
    trunc, chunked, n_chunks, first_cue = [], [], [], []
    for text, label in zip(test.texts, y):
        ids = encode_ids(text, vocab)
        if label == 1:
            first_cue.append(ids.index(cue))
        trunc.append(predict_truncated(clf, ids, cfg.window)[0])
        k, P = predict_long(clf, ids, cfg.window, combine="or")
        chunked.append(k)
        n_chunks.append(len(P))
    trunc, chunked = np.array(trunc), np.array(chunked)
    rec["earliest_cue_token"] = min(first_cue)
    rec["chunks_per_doc"] = float(np.mean(n_chunks))
    rec["truncated_recall"] = float(trunc[y == 1].mean())
    rec["chunked_recall"] = float(chunked[y == 1].mean())
    rec["chunked_false_positive_rate"] = float(chunked[y == 0].mean())
    rec.save("results.json")


if __name__ == "__main__":
    main(parse_config(Config, __doc__.splitlines()[0]))
