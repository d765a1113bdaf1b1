"""Text pre-processing, subword vocabulary training, sequence encoding and chunking."""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DomainError, ParseError
from .porter import porter_stem

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIALS = (PAD, UNK, CLS, SEP, MASK)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)
CONT = "##"

_WS = re.compile(r"\s+")
_WORD = re.compile(r"[^\W_]+|\S")


def normalize(text: str, lowercase: bool = True) -> str:
    text = "".join(ch for ch in text if ch.isspace() or unicodedata.category(ch) != "Cc")
    text = _WS.sub(" ", text).strip()
    return text.lower() if lowercase else text


def word_tokenize(text: str) -> list[str]:
    """Runs of letters/digits are words; every other non-space character stands alone."""
    return _WORD.findall(text)


def is_punct(token: str) -> bool:
    return len(token) == 1 and not token.isalnum()


def remove_stopwords(tokens: Iterable[str], stopwords) -> list[str]:
    stop = set(stopwords)
    return [t for t in tokens if t not in stop]


def load_stopwords(name_or_path="en") -> frozenset[str]:
    """Bundled list by language tag ("en", "de") or a file with one word per line."""
    if name_or_path in ("en", "de"):
        text = resources.files("textclf.data").joinpath(f"stopwords_{name_or_path}.txt").read_text("utf-8")
    else:
        text = Path(name_or_path).read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def preprocess(text, lowercase=True, stopwords=(), stem=False, drop_punct=True) -> list[str]:
    """Classical pipeline: normalize, split, drop punctuation and stopwords, stem."""
    tokens = word_tokenize(normalize(text, lowercase))
    if drop_punct:
        tokens = [t for t in tokens if not is_punct(t)]
    tokens = remove_stopwords(tokens, stopwords)
    if stem:
        tokens = [porter_stem(t) for t in tokens]
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]

    def __post_init__(self):
        if self.tokens[:5] != SPECIALS:
            raise DomainError("vocabulary must start with [PAD],[UNK],[CLS],[SEP],[MASK]")
        if len(set(self.tokens)) != len(self.tokens):
            raise DomainError("vocabulary tokens must be unique")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def id(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocabulary":
        rest = [t for t in dict.fromkeys(tokens) if t not in SPECIALS]
        return cls(SPECIALS + tuple(rest))

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if tuple(lines[:5]) != SPECIALS:
            raise ParseError(f"{path}: lines 0-4 must be the special tokens")
        return cls(tuple(lines))


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    mask: tuple[int, ...]

    @property
    def window(self) -> int:
        return len(self.ids)

    @property
    def length(self) -> int:
        return sum(self.mask)


def _merged(a: str, b: str) -> str:
    return a + b[len(CONT):]


def train_wordpiece(corpus: Iterable[Sequence[str]], target_vocab_size: int) -> Vocabulary:
    """Greedy pair merging over a word-frequency table.

    ``corpus`` is an iterable of token lists (documents). The initial
    symbols are the characters seen word-initially plus the "##" forms of
    characters seen later in a word. The most frequent adjacent pair is
    merged (ties: lexicographically smallest merged string) until the
    vocabulary reaches the target size or no pair occurs at least twice.
    """
    freq = Counter(w for doc in corpus for w in doc)
    if not freq:
        raise DomainError("cannot train a vocabulary on an empty corpus")
    words = {w: [w[0]] + [CONT + c for c in w[1:]] for w in freq}
    alphabet = sorted({s for segs in words.values() for s in segs})
    if target_vocab_size < len(SPECIALS) + len(alphabet):
        raise DomainError(
            f"target size {target_vocab_size} below specials + alphabet = {len(SPECIALS) + len(alphabet)}")
    vocab = list(SPECIALS) + alphabet
    known = set(vocab)

    while len(vocab) < target_vocab_size:
        pairs: Counter = Counter()
        for w, segs in words.items():
            f = freq[w]
            for a, b in zip(segs, segs[1:]):
                pairs[a, b] += f
        if not pairs:
            break
        best_count = max(pairs.values())
        if best_count < 2:
            break
        a, b = min((p for p, c in pairs.items() if c == best_count), key=lambda p: _merged(*p))
        new = _merged(a, b)
        for w, segs in words.items():
            if len(segs) < 2:
                continue
            out, i = [], 0
            while i < len(segs):
                if i + 1 < len(segs) and segs[i] == a and segs[i + 1] == b:
                    out.append(new)
                    i += 2
                else:
                    out.append(segs[i])
                    i += 1
            words[w] = out
        if new not in known:
            known.add(new)
            vocab.append(new)
    return Vocabulary(tuple(vocab))


def wordpiece_word(word: str, vocab: Vocabulary) -> list[int]:
    """Greedy longest-match pieces of one word, or [UNK] if any residue is uncovered."""
    pieces, start = [], 0
    while start < len(word):
        end = len(word)
        found = None
        while end > start:
            piece = word[start:end] if start == 0 else CONT + word[start:end]
            if piece in vocab:
                found = piece
                break
            end -= 1
        if found is None:
            return [UNK_ID]
        pieces.append(vocab.id(found))
        start = end
    return pieces


def encode_ids(text: str, vocab: Vocabulary, lowercase: bool = True) -> list[int]:
    """Content ids without special tokens or padding."""
    ids = []
    for w in word_tokenize(normalize(text, lowercase)):
        ids.extend(wordpiece_word(w, vocab))
    return ids


def pack(content: Sequence[int], T: int) -> TokenSequence:
    """[CLS] content [SEP], content truncated to T-2, padded with [PAD] to T."""
    if T < 3:
        raise DomainError("window T must be >= 3")
    body = list(content[: T - 2])
    ids = [CLS_ID] + body + [SEP_ID]
    n = len(ids)
    return TokenSequence(tuple(ids + [PAD_ID] * (T - n)), tuple([1] * n + [0] * (T - n)))


def wordpiece_encode(text: str, vocab: Vocabulary, T: int, lowercase: bool = True) -> TokenSequence:
    if T < 3:
        raise DomainError("window T must be >= 3")
    return pack(encode_ids(text, vocab, lowercase), T)


def decode(ids: Iterable[int], vocab: Vocabulary, keep_unk: bool = True) -> str:
    words: list[str] = []
    for i in ids:
        if i in (PAD_ID, CLS_ID, SEP_ID, MASK_ID) or (i == UNK_ID and not keep_unk):
            continue
        tok = vocab.tokens[i]
        if tok.startswith(CONT) and words:
            words[-1] += tok[len(CONT):]
        else:
            words.append(tok)
    return " ".join(words)


def chunk_starts(n: int, window: int, stride: int) -> list[int]:
    span = window - 2
    if not 0 < stride <= span:
        raise DomainError(f"stride must satisfy 0 < S <= W-2, got S={stride}, W={window}")
    if n <= span:
        return [0]
    count = -(-(n - span) // stride) + 1
    return [k * stride for k in range(count)]


def default_stride(window: int) -> int:
    return window - 64 if window > 128 else max(1, (window - 2) // 2)


def chunk(ids: Sequence[int], window: int, stride: int | None = None) -> list[TokenSequence]:
    """Overlapping windows over content ids; each gets its own [CLS]/[SEP].

    Default stride is W - 64 (62 shared content tokens); windows of 128 or
    less default to half-window steps.
    """
    if stride is None:
        stride = default_stride(window)
    starts = chunk_starts(len(ids), window, stride)
    return [pack(ids[s: s + window - 2], window) for s in starts]
