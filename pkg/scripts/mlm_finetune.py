"""Masked-language-model fine-tuning: masked-position loss before and after training.

Two corpora are compared at the same budget (epochs, batch size, lr): the
2000 labelled training texts, and a larger unlabelled draw from the same
generator. The held-out evaluation set is the same in both runs.

    python scripts/mlm_finetune.py --unlabelled-docs 10000
"""

from __future__ import annotations

from dataclasses import dataclass

from _common import Recorder, parse_config, vocab_and_encoder
from textclf.benchmarks import head_tail, three_class
from textclf.encoder import EncoderConfig, EncoderModel
from textclf.train import TrainConfig, mlm_eval, train_mlm


@dataclass
class Config:
    n_docs: int = 2500
    n_train: int = 2000
    corpus_seed: int = 1
    unlabelled_docs: int = 10000
    unlabelled_seed: int = 7
    vocab_size: int = 200
    window: int = 64
    epochs: int = 2
    batch_size: int = 16
    lr: float = 1e-3
    p_mask: float = 0.15
    seed: int = 0
    skip_small: bool = False
    out_dir: str = "runs/mlm"


def main(cfg: Config) -> None:
    rec = Recorder(cfg, cfg.out_dir)
    train, test = head_tail(three_class(cfg.n_docs, cfg.corpus_seed), cfg.n_train)
    vocab, enc = vocab_and_encoder(train.texts, cfg.vocab_size, cfg.window)
    heldout = enc(test.texts)
    model = EncoderModel.init(EncoderConfig(len(vocab), 32, 4, 8, 2, cfg.window, 64), cfg.seed)
    tc = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr, seed=cfg.seed, p_mask=cfg.p_mask)
    before = mlm_eval(model, heldout, cfg.p_mask, 0)
    rec["loss_at_init"] = round(before, 4)

    corpora = {"unlabelled": enc(three_class(cfg.unlabelled_docs, cfg.unlabelled_seed).texts)}
    if not cfg.skip_small:
        corpora["train_texts"] = enc(train.texts)
    for name, corpus in corpora.items():
        after = mlm_eval(train_mlm(model, corpus, tc), heldout, cfg.p_mask, 0)
        rec[f"{name}_docs"] = len(corpus)
        rec[f"{name}_loss"] = round(after, 4)
        rec[f"{name}_reduction"] = round(1 - after / before, 4)
    rec.save("results.json")


if __name__ == "__main__":
    main(parse_config(Config, __doc__.splitlines()[0]))
