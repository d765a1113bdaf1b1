"""Seeded synthetic corpora used by the experiment scripts and the test suite."""

from __future__ import annotations

from .corpus import DocumentSet, gen_long_binary, gen_synthetic

THREE_CLASS = {
    "fire": ["* caught fire *", "* smoke flames *", "* burned kitchen *"],
    "water": ["* water damage *", "* pipe burst *", "* flooded basement *"],
    "wind": ["* wind blew *", "* storm tore *", "* gust toppled *"],
}

# One keyword family per topic; the first template of each class doubles as
# its expression for similarity labelling.
FIVE_TOPIC = {
    "Fire": ["* fire flames *", "* fire smoke *", "* flames smoke *"],
    "Water": ["* water leak *", "* water pipe *", "* leak pipe *"],
    "Wind": ["* wind storm *", "* wind gust *", "* storm gust *"],
    "Theft": ["* theft stolen *", "* theft burglar *", "* stolen burglar *"],
    "Vehicle": ["* vehicle collision *", "* vehicle truck *", "* collision truck *"],
}

FIVE_TOPIC_EXPRESSIONS = {
    "Fire": "fire flames smoke",
    "Water": "water leak pipe",
    "Wind": "wind storm gust",
    "Theft": "theft stolen burglar",
    "Vehicle": "vehicle collision truck",
}

LONG_CUE = "explosion"


def three_class(n: int = 2500, seed: int = 1, max_fill: int = 8) -> DocumentSet:
    return gen_synthetic(THREE_CLASS, n, seed, max_fill=max_fill)


def five_topic(n: int = 1000, seed: int = 3, max_fill: int = 6) -> DocumentSet:
    return gen_synthetic(FIVE_TOPIC, n, seed, max_fill=max_fill)


def long_binary(n: int = 200, seed: int = 5, length: int = 600, cue_after: int = 520) -> DocumentSet:
    return gen_long_binary(n, seed, LONG_CUE, length, cue_after)


def head_tail(docs: DocumentSet, n_train: int) -> tuple[DocumentSet, DocumentSet]:
    """Deterministic split: the first ``n_train`` records train, the rest test."""
    return docs.subset(docs.records[:n_train]), docs.subset(docs.records[n_train:])
