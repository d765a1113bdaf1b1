"""Bag-of-words / n-gram counts, TF-IDF and mean-pooled embedding features."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ShapeError
from .tokenizer import UNK_ID, Vocabulary


def ngrams(tokens: Sequence[str], n: int) -> list[str]:
    if n < 1:
        raise DomainError("n-gram order must be >= 1")
    return [" ".join(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def build_vocab(docs: Iterable[Sequence[str]], n: int = 1, min_count: int = 1) -> Vocabulary:
    """Term vocabulary ordered by descending count, ties alphabetical."""
    counts = Counter(g for doc in docs for g in ngrams(doc, n))
    terms = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary.from_tokens(terms)


def bow(tokens: Sequence[str], vocab: Vocabulary, n: int = 1) -> np.ndarray:
    """Count vector over ``vocab``; unknown n-grams are counted under [UNK]."""
    x = np.zeros(len(vocab), dtype=np.int64)
    for g in ngrams(tokens, n):
        x[vocab.id(g)] += 1
    return x


def bow_matrix(docs: Iterable[Sequence[str]], vocab: Vocabulary, n: int = 1) -> np.ndarray:
    rows = [bow(d, vocab, n) for d in docs]
    if not rows:
        return np.zeros((0, len(vocab)), dtype=np.int64)
    return np.stack(rows)


@dataclass(frozen=True)
class IdfWeights:
    idf: np.ndarray
    doc_count: int


def tfidf_fit(count_vectors) -> IdfWeights:
    """Smoothed idf: ln((1 + N) / (1 + df)) + 1."""
    X = np.asarray(count_vectors)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DomainError("tfidf_fit needs a non-empty list of count vectors")
    n = X.shape[0]
    df = (X > 0).sum(axis=0)
    return IdfWeights(np.log((1.0 + n) / (1.0 + df)) + 1.0, n)


def tfidf_transform(x, idf: IdfWeights) -> np.ndarray:
    """Weight counts by idf, then scale each row to unit Euclidean norm (zero rows stay zero)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != idf.idf.shape[0]:
        raise ShapeError(f"tfidf_transform: count width {x.shape[-1]} != idf width {idf.idf.shape[0]}")
    w = x * idf.idf
    norm = np.linalg.norm(w, axis=-1, keepdims=True)
    return np.divide(w, norm, out=np.zeros_like(w), where=norm > 0)


def embed_mean(ids: Sequence[int], W: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        raise DomainError("embed_mean of an empty token list")
    if ids.min() < 0 or ids.max() >= W.shape[0]:
        raise DomainError("token id outside the embedding matrix")
    return W[ids].mean(axis=0)


def init_embedding(V: int, E: int, seed: int = 0) -> np.ndarray:
    a = np.sqrt(6.0 / (V + E))
    return np.random.default_rng(seed).uniform(-a, a, size=(V, E))


def dump_sparse(vectors, path) -> None:
    """One vector per line as space-separated ``index:count`` pairs."""
    lines = []
    for v in np.atleast_2d(np.asarray(vectors)):
        nz = np.flatnonzero(v)
        lines.append(" ".join(f"{i}:{v[i]}" for i in nz))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_sparse(path, width: int, dtype=np.int64) -> np.ndarray:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        v = np.zeros(width, dtype=dtype)
        for pair in line.split():
            i, c = pair.split(":")
            v[int(i)] = dtype(c)
        rows.append(v)
    return np.stack(rows) if rows else np.zeros((0, width), dtype=dtype)


__all__ = [
    "IdfWeights", "UNK_ID", "bow", "bow_matrix", "build_vocab", "dump_sparse", "embed_mean",
    "init_embedding", "load_sparse", "ngrams", "tfidf_fit", "tfidf_transform",
]
