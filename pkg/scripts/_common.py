"""Shared plumbing for the experiment scripts: dataclass configs become CLI flags."""

from __future__ import annotations

import argparse
import dataclasses
import json
import time
from pathlib import Path

import numpy as np

from textclf.tokenizer import normalize, train_wordpiece, word_tokenize, wordpiece_encode


def parse_config(cls, description: str):
    """Build an argparse parser from the fields of ``cls`` and return an instance."""
    parser = argparse.ArgumentParser(description=description)
    for f in dataclasses.fields(cls):
        default = f.default
        flag = "--" + f.name.replace("_", "-")
        if isinstance(default, bool):
            parser.add_argument(flag, type=lambda s: s.lower() in ("1", "true", "yes"), default=default)
        else:
            parser.add_argument(flag, type=type(default), default=default)
    return cls(**vars(parser.parse_args()))


def vocab_and_encoder(texts, vocab_size: int, window: int):
    vocab = train_wordpiece([word_tokenize(normalize(t)) for t in texts], vocab_size)
    return vocab, lambda batch: [wordpiece_encode(t, vocab, window) for t in batch]


def accuracy(P, y) -> float:
    return float((np.asarray(P).argmax(axis=1) == np.asarray(y)).mean())


class Recorder:
    """Collect named results, print them as they arrive, dump JSON at the end."""

    def __init__(self, config, out_dir: str):
        self.config = config
        self.out = Path(out_dir)
        self.results: dict[str, object] = {}
        self.t0 = time.perf_counter()

    def __setitem__(self, key, value):
        self.results[key] = value
        print(f"{key}: {value}", flush=True)

    def save(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        self.results["seconds"] = round(time.perf_counter() - self.t0, 1)
        path = self.out / name
        path.write_text(json.dumps({"config": dataclasses.asdict(self.config), "results": self.results},
                                   indent=2, sort_keys=True) + "\n")
        print(f"wrote {path}")
        return path
