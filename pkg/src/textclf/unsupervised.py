"""Label-free classification: expression similarity, the fallback-margin
rule, and topic clustering (PCA -> DBSCAN -> c-TF-IDF -> MMR -> label map)."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DomainError, LabelError, ParseError

OUTLIER = -1


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DomainError("cosine similarity of a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def cosine_matrix(A, B) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    na = np.linalg.norm(A, axis=1, keepdims=True)
    nb = np.linalg.norm(B, axis=1, keepdims=True)
    if np.any(na == 0) or np.any(nb == 0):
        raise DomainError("cosine similarity of a zero vector")
    return np.clip((A / na) @ (B / nb).T, -1.0, 1.0)


# ---- expression similarity -------------------------------------------------------

@dataclass(frozen=True)
class ExpressionMapping:
    entries: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if not self.entries:
            raise DomainError("expression mapping is empty")

    @property
    def expressions(self) -> list[str]:
        return [e for e, _ in self.entries]

    @property
    def labels(self) -> list[str]:
        return [l for _, l in self.entries]

    @classmethod
    def load(cls, path) -> "ExpressionMapping":
        entries = []
        for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ParseError(f"{path}: expected 'expression<TAB>label'", row=n)
            entries.append((parts[0], parts[1]))
        return cls(tuple(entries))

    def save(self, path) -> None:
        Path(path).write_text("".join(f"{e}\t{l}\n" for e, l in self.entries), encoding="utf-8")


def similarity_classify(texts: Sequence[str], mapping: ExpressionMapping,
                        embed: Callable[[Sequence[str]], np.ndarray]):
    """Label each text by its most similar expression (ties: lowest entry index).

    ``embed`` is called once for the documents and once for the
    expressions. Returns (labels, similarity table of shape (docs, entries)).
    """
    doc_emb = embed(list(texts))
    expr_emb = embed(mapping.expressions)
    sims = cosine_matrix(doc_emb, expr_emb)
    best = sims.argmax(axis=1)           # argmax returns the first maximum
    return [mapping.labels[i] for i in best], sims


def fallback_margin(scores: Mapping[str, float], fallback: str, threshold: float = 50.0) -> str:
    """If the fallback label wins by less than ``threshold`` percentage points, take the runner-up."""
    if len(scores) < 2:
        raise DomainError("fallback_margin needs at least two scores")
    ranked = sorted(scores.items(), key=lambda kv: -kv[1])
    (top, p1), (second, p2) = ranked[0], ranked[1]
    if top != fallback:
        return top
    return second if (p1 - p2) * 100.0 < threshold else fallback


# ---- dimension reduction and clustering ----------------------------------------------

@dataclass(frozen=True)
class PCA:
    mean: np.ndarray
    components: np.ndarray      # (k, d), rows orthonormal (or zero when padded)
    singular_values: np.ndarray

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T


def pca_reduce(X, k: int) -> tuple[np.ndarray, PCA]:
    """Project centred rows onto the top-k right singular vectors.

    Each component is flipped so its largest-magnitude coordinate is
    positive. Components beyond the numerical rank are zero.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise DomainError(f"k must lie in [1, min(n, d)] = [1, {min(n, d)}], got {k}")
    mean = X.mean(axis=0)
    _, s, Vt = np.linalg.svd(X - mean, full_matrices=False)
    comps = Vt[:k].copy()
    sv = s[:k].copy()
    tol = (s[0] if s.size else 0.0) * max(n, d) * np.finfo(float).eps
    for i in range(k):
        if sv[i] <= tol:
            comps[i] = 0.0
            sv[i] = 0.0
            continue
        j = np.argmax(np.abs(comps[i]))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    model = PCA(mean, comps, sv)
    return model.transform(X), model


def pairwise_distances(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    sq = (X * X).sum(axis=1)
    D2 = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.maximum(D2, 0.0, out=D2)
    np.fill_diagonal(D2, 0.0)
    return np.sqrt(D2)


def dbscan(X, eps: float, min_pts: int) -> np.ndarray:
    """Density clustering; -1 marks noise.

    A point is core if at least ``min_pts`` points (itself included) lie
    within ``eps``. Clusters are grown from unvisited core points in
    ascending index order, so ids are deterministic.
    """
    if eps <= 0 or min_pts < 1:
        raise DomainError("dbscan needs eps > 0 and min_pts >= 1")
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    D = pairwise_distances(X)
    neighbors = [np.flatnonzero(D[i] <= eps) for i in range(n)]
    core = np.array([len(nb) >= min_pts for nb in neighbors], dtype=bool)
    labels = np.full(n, OUTLIER, dtype=np.int64)
    cid = 0
    for i in range(n):
        if labels[i] != OUTLIER or not core[i]:
            continue
        labels[i] = cid
        queue = [i]
        head = 0
        while head < len(queue):
            p = queue[head]
            head += 1
            if not core[p]:
                continue
            for q in neighbors[p]:
                if labels[q] == OUTLIER:
                    labels[q] = cid
                    queue.append(q)
        cid += 1
    return labels


def percentile_eps(X, q: float = 10.0) -> float:
    D = pairwise_distances(X)
    iu = np.triu_indices(D.shape[0], k=1)
    d = D[iu]
    eps = float(np.percentile(d, q)) if d.size else 1.0
    return eps if eps > 0 else float(d[d > 0].min()) if np.any(d > 0) else 1.0


# ---- topic words -----------------------------------------------------------------------

def ctfidf(docs_by_cluster: Mapping[int, Sequence[Sequence[str]]], vocab: Sequence[str] | None = None):
    """Class-based TF-IDF: W[c, t] = tf[c, t] * ln(1 + A / f[t]).

    tf counts term t in the concatenation of cluster c's documents, f[t]
    is its count over all clusters and A the mean word count per cluster.
    Returns (cluster ids, terms, score matrix of shape (clusters, terms)).
    """
    clusters = sorted(c for c in docs_by_cluster)
    if not clusters:
        raise DomainError("c-TF-IDF needs at least one cluster")
    counts = [Counter(t for doc in docs_by_cluster[c] for t in doc) for c in clusters]
    if vocab is None:
        vocab = sorted(set().union(*counts))
    terms = list(vocab)
    if not terms:
        raise DomainError("c-TF-IDF over an empty vocabulary")
    tf = np.array([[cnt.get(t, 0) for t in terms] for cnt in counts], dtype=np.float64)
    f = tf.sum(axis=0)
    A = tf.sum() / len(clusters)
    with np.errstate(divide="ignore"):
        idf = np.where(f > 0, np.log1p(A / np.where(f > 0, f, 1.0)), 0.0)
    return clusters, terms, tf * idf


def mmr_select(words: Sequence[str], scores, embeddings, k: int, lam: float = 0.7) -> list[str]:
    """Greedy maximal-marginal-relevance pick of k words.

    Relevance is the min-max normalised score; redundancy is the largest
    cosine similarity to an already selected word.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= k <= len(words):
        raise DomainError("k must not exceed the number of candidates")
    if not 0.0 <= lam <= 1.0:
        raise DomainError("lambda must lie in [0, 1]")
    if k == 0:
        return []
    span = scores.max() - scores.min()
    rel = (scores - scores.min()) / span if span > 0 else np.ones_like(scores)
    E = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(E, axis=1, keepdims=True)
    sim = (E / np.where(norms > 0, norms, 1.0)) @ (E / np.where(norms > 0, norms, 1.0)).T
    selected = [int(np.argmax(rel))]
    while len(selected) < k:
        rest = [i for i in range(len(words)) if i not in selected]
        red = sim[np.ix_(rest, selected)].max(axis=1)
        val = lam * rel[rest] - (1.0 - lam) * red
        selected.append(rest[int(np.argmax(val))])
    return [words[i] for i in selected]


class MappingError(LabelError):
    pass


def map_clusters(cluster_ids, labels: Sequence[int | None]) -> dict[int, int]:
    """Most frequent known label per cluster (ties: lowest label index), outliers included."""
    groups: dict[int, Counter] = {}
    for c, l in zip(cluster_ids, labels):
        groups.setdefault(int(c), Counter())
        if l is not None:
            groups[int(c)][int(l)] += 1
    out = {}
    for c in sorted(groups):
        cnt = groups[c]
        if not cnt:
            raise MappingError(f"cluster {c} contains no labelled document")
        best = max(cnt.values())
        out[c] = min(l for l, v in cnt.items() if v == best)
    return out


# ---- pipeline ---------------------------------------------------------------------------

@dataclass
class TopicConfig:
    pca_k: int = 10
    eps_percentile: float = 10.0
    eps: float | None = None
    min_pts: int = 5
    mmr_lambda: float = 0.7
    top_words: int = 10
    candidates: int = 30


@dataclass
class TopicModel:
    cluster_ids: np.ndarray
    pca: PCA
    eps: float
    core_points: np.ndarray
    core_labels: np.ndarray
    word_scores: dict[int, dict[str, float]] = field(default_factory=dict)
    top_words: dict[int, list[str]] = field(default_factory=dict)
    label_map: dict[int, int] = field(default_factory=dict)

    @property
    def n_clusters(self) -> int:
        return len(set(int(c) for c in self.cluster_ids) - {OUTLIER})

    def transform(self, embeddings) -> np.ndarray:
        """Cluster of the nearest core point if within eps, else -1."""
        Y = self.pca.transform(embeddings)
        if len(self.core_points) == 0:
            return np.full(len(Y), OUTLIER)
        d2 = ((Y[:, None, :] - self.core_points[None, :, :]) ** 2).sum(axis=2)
        j = d2.argmin(axis=1)
        near = np.sqrt(d2[np.arange(len(Y)), j]) <= self.eps
        return np.where(near, self.core_labels[j], OUTLIER)

    def predict(self, cluster_ids) -> np.ndarray:
        """Map cluster ids to label indices via ``label_map``."""
        return np.array([self.label_map[int(c)] for c in cluster_ids])


def fit_topics(embeddings, token_docs: Sequence[Sequence[str]], config: TopicConfig | None = None,
               word_embed: Callable[[Sequence[str]], np.ndarray] | None = None) -> TopicModel:
    config = config or TopicConfig()
    X = np.asarray(embeddings, dtype=np.float64)
    k = min(config.pca_k, X.shape[0], X.shape[1])
    Y, pca = pca_reduce(X, k)
    eps = config.eps if config.eps is not None else percentile_eps(Y, config.eps_percentile)
    ids = dbscan(Y, eps, config.min_pts)
    counts = np.array([(np.linalg.norm(Y - y, axis=1) <= eps).sum() for y in Y])
    core = (counts >= config.min_pts) & (ids != OUTLIER)
    model = TopicModel(ids, pca, eps, Y[core], ids[core])

    groups: dict[int, list] = {}
    for c, doc in zip(ids, token_docs):
        if c != OUTLIER:
            groups.setdefault(int(c), []).append(doc)
    if groups:
        clusters, terms, W = ctfidf(groups)
        for row, c in enumerate(clusters):
            order = sorted(range(len(terms)), key=lambda t: (-W[row, t], terms[t]))
            cand = [t for t in order[:max(config.candidates, config.top_words)] if W[row, t] > 0]
            model.word_scores[c] = {terms[t]: float(W[row, t]) for t in cand}
            words = [terms[t] for t in cand]
            kk = min(config.top_words, len(words))
            if word_embed is not None and words:
                model.top_words[c] = mmr_select(words, [W[row, t] for t in cand], word_embed(words),
                                                kk, config.mmr_lambda)
            else:
                model.top_words[c] = words[:kk]
    return model


def write_topic_report(model: TopicModel, path, label_names: Sequence[str] | None = None,
                       map_path=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("cluster", "rank", "word", "score"))
        for c in sorted(model.top_words):
            for rank, word in enumerate(model.top_words[c]):
                w.writerow((c, rank, word, format(model.word_scores[c][word], ".17g")))
    if map_path is not None:
        lines = []
        for c, l in sorted(model.label_map.items()):
            name = label_names[l] if label_names is not None else str(l)
            lines.append(f"{c}\t{name}\n")
        Path(map_path).write_text("".join(lines), encoding="utf-8")
