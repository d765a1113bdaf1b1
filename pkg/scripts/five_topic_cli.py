"""Drive the full CLI on the five-topic corpus: similarity labelling, topics, refinement.

Writes the corpus, the expression mapping and a YAML config into ``--work-dir``
and runs every subcommand in order. Artifacts land in ``<work-dir>/out``.

    python scripts/five_topic_cli.py --work-dir runs/five_topic
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import yaml

from _common import parse_config
from textclf.benchmarks import FIVE_TOPIC_EXPRESSIONS, five_topic
from textclf.cli import run
from textclf.corpus import write_csv
from textclf.unsupervised import ExpressionMapping

CHAIN = [["train-tokenizer"], ["encode"], ["train-classifier"], ["finetune-mlm"], ["finetune-task"],
         ["predict"], ["attribute"], ["similarity"], ["topics", "--refine"], ["evaluate"]]


@dataclass
class Config:
    work_dir: str = "runs/five_topic"
    n_docs: int = 1000
    corpus_seed: int = 3
    epochs: int = 10
    seed: int = 0


def main(cfg: Config) -> int:
    work = Path(cfg.work_dir)
    work.mkdir(parents=True, exist_ok=True)
    write_csv(five_topic(cfg.n_docs, cfg.corpus_seed), work / "docs.csv")
    ExpressionMapping(tuple((e, label) for label, e in FIVE_TOPIC_EXPRESSIONS.items())).save(work / "map.tsv")
    config = {"seed": cfg.seed, "output_dir": str(work / "out"),
              "dataset": {"path": str(work / "docs.csv")},
              "tokenizer": {"vocab_size": 200, "window": 64},
              "train": {"epochs": cfg.epochs},
              "task": {"mapping_path": str(work / "map.tsv"), "attribute_limit": 5}}
    path = work / "run.yaml"
    path.write_text(yaml.safe_dump(config))
    for cmd in CHAIN:
        print(f"$ textclf {' '.join(cmd)} --config {path}", flush=True)
        code = run(cmd + ["--config", str(path)])
        if code:
            return code
    print((work / "out" / "topic_metrics.csv").read_text())
    return 0


if __name__ == "__main__":
    raise SystemExit(main(parse_config(Config, __doc__.splitlines()[0])))
