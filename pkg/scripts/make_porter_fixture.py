"""Regenerate tests/data/porter_fixture.tsv (word, stem, stem of stem) from an independent stemmer.

The expected stems come from NLTK's Porter stemmer in its original-algorithm
mode, never from this package. Run once; the TSV is committed and the
tests read it without needing NLTK.
"""

from __future__ import annotations

import argparse
import re
from dataclasses import dataclass
from pathlib import Path

# Rule-by-rule examples for every step of the algorithm.
RULE_EXAMPLES = """
caresses ponies ties caress cats feed agreed plastered bled motoring sing
conflated troubled sized hopping tanned falling hissing fizzed failing filing
happy sky relational conditional rational valenci hesitanci digitizer
conformabli radicalli differentli vileli analogousli vietnamization
predication operator feudalism decisiveness hopefulness callousness formaliti
sensitiviti sensibiliti triplicate formative formalize electriciti electrical
hopeful goodness revival allowance inference airliner gyroscopic adjustable
defensible irritant replacement adjustment dependent adoption homologou
communism activate angulariti homologous effective bowdlerize probate rate
cease controll roll generalizations oscillators connect connected connecting
connection connections argue argued argues arguing argus arguments
""".split()


@dataclass
class FixtureConfig:
    sources: tuple[str, ...] = ()          # text files sampled for extra vocabulary
    extra_words: int = 260
    out: str = "tests/data/porter_fixture.tsv"


def collect(cfg: FixtureConfig, root: Path) -> list[str]:
    words = list(dict.fromkeys(RULE_EXAMPLES))
    seen = set(words)
    corpus = set()
    for src in cfg.sources:
        corpus |= set(re.findall(r"\b[a-z]{4,}\b", (root / src).read_text(encoding="utf-8").lower()))
    extra = [w for w in sorted(corpus) if w not in seen]
    step = max(1, len(extra) // cfg.extra_words)
    return words + extra[::step][: cfg.extra_words]


def main() -> None:
    from nltk.stem.porter import PorterStemmer

    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", default=".")
    ap.add_argument("--source", action="append", required=True,
                    help="text file (relative to --root) to sample words from; repeatable")
    args = ap.parse_args()
    cfg = FixtureConfig(sources=tuple(args.source))
    root = Path(args.root)
    stemmer = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)
    words = collect(cfg, root)
    # Third column: the stem stemmed again, since the algorithm is not idempotent.
    lines = [f"{w}\t{stemmer.stem(w)}\t{stemmer.stem(stemmer.stem(w))}\n" for w in words]
    (root / cfg.out).write_text("".join(lines), encoding="utf-8")
    print(f"wrote {len(lines)} pairs to {cfg.out}")


if __name__ == "__main__":
    main()
