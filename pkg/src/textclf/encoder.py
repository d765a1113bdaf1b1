"""Transformer encoder: embeddings + sinusoidal positions, multi-head
self-attention, residual + layer norm, position-wise FFN, and pooling."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DomainError, NumericError, ParseError
from .tokenizer import CLS_ID, PAD_ID, SEP_ID, TokenSequence


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    width: int = 32          # E
    heads: int = 4           # H
    head_dim: int = 8        # d_K
    layers: int = 2          # L
    max_len: int = 64        # T_max
    ffn_dim: int = 64        # F
    positional: bool = True

    def __post_init__(self):
        if self.vocab_size < 6:
            raise ConfigError("vocab_size must be >= 6")
        if self.width % 2:
            raise ConfigError("model width E must be even for the sinusoidal encoding")
        if self.max_len < 3:
            raise ConfigError("max_len must be >= 3")
        if min(self.heads, self.head_dim, self.ffn_dim) < 1 or self.layers < 0:
            raise ConfigError("heads, head_dim, ffn_dim must be >= 1 and layers >= 0")


def positional_encoding(T: int, E: int) -> np.ndarray:
    if E % 2:
        raise ConfigError("positional encoding needs an even width")
    pos = np.arange(T, dtype=np.float64)[:, None]
    freq = 10000.0 ** (np.arange(0, E, 2, dtype=np.float64) / E)
    pe = np.empty((T, E))
    pe[:, 0::2] = np.sin(pos / freq)
    pe[:, 1::2] = np.cos(pos / freq)
    return pe


def _glorot(rng, fan_in, fan_out, shape=None):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape or (fan_in, fan_out))


def layer_param_names(l: int) -> list[str]:
    p = f"layer{l}."
    return [p + n for n in ("wq", "wk", "wv", "wo", "ln1.gamma", "ln1.beta",
                            "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2", "ln2.gamma", "ln2.beta")]


@dataclass
class EncoderModel:
    config: EncoderConfig
    params: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def init(cls, config: EncoderConfig, seed: int = 0) -> "EncoderModel":
        rng = np.random.default_rng(seed)
        c = config
        hd = c.heads * c.head_dim
        p = {"embedding": _glorot(rng, c.vocab_size, c.width)}
        for l in range(c.layers):
            pre = f"layer{l}."
            p[pre + "wq"] = _glorot(rng, c.width, hd)
            p[pre + "wk"] = _glorot(rng, c.width, hd)
            p[pre + "wv"] = _glorot(rng, c.width, hd)
            p[pre + "wo"] = _glorot(rng, hd, c.width)
            p[pre + "ln1.gamma"] = np.ones(c.width)
            p[pre + "ln1.beta"] = np.zeros(c.width)
            p[pre + "ffn.w1"] = _glorot(rng, c.width, c.ffn_dim)
            p[pre + "ffn.b1"] = np.zeros(c.ffn_dim)
            p[pre + "ffn.w2"] = _glorot(rng, c.ffn_dim, c.width)
            p[pre + "ffn.b2"] = np.zeros(c.width)
            p[pre + "ln2.gamma"] = np.ones(c.width)
            p[pre + "ln2.beta"] = np.zeros(c.width)
        return cls(config, {k: ad.param(v, name=k) for k, v in p.items()})

    def names(self) -> list[str]:
        return ["embedding"] + [n for l in range(self.config.layers) for n in layer_param_names(l)]

    def tensors(self) -> list[Tensor]:
        return [self.params[n] for n in self.names()]

    def copy(self) -> "EncoderModel":
        return EncoderModel(self.config, {k: ad.param(v.value.copy(), name=k) for k, v in self.params.items()})

    def embed(self, ids) -> Tensor:
        """Token embeddings plus (optionally) positional encodings, shape (B, T, E)."""
        ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
        B, T = ids.shape
        if T > self.config.max_len:
            raise DomainError(f"sequence length {T} exceeds max_len {self.config.max_len}")
        if ids.min() < 0 or ids.max() >= self.config.vocab_size:
            raise DomainError(f"token id outside [0, {self.config.vocab_size})")
        x = ad.embedding(self.params["embedding"], ids)
        if self.config.positional:
            pe = np.broadcast_to(positional_encoding(T, self.config.width), (B, T, self.config.width))
            x = ad.add(x, Tensor(pe))
        return x

    def layer(self, l: int) -> dict[str, Tensor]:
        pre = f"layer{l}."
        return {n[len(pre):]: self.params[n] for n in layer_param_names(l)}


def multi_head_attention(X: Tensor, p: dict[str, Tensor], mask, heads: int, head_dim: int):
    """X (B, T, E) -> (Y1 (B, T, E), attention probabilities (B, H, T, T))."""
    mask = np.atleast_2d(np.asarray(mask))
    if np.any(mask.sum(axis=-1) == 0):
        raise DomainError("attention over an all-padding sequence")
    B, T, _ = X.shape

    def split(W):
        return ad.transpose(ad.reshape(ad.matmul(X, W), (B, T, heads, head_dim)), (0, 2, 1, 3))

    Q, K, V = split(p["wq"]), split(p["wk"]), split(p["wv"])
    scores = ad.scale(ad.matmul(Q, ad.swap_last(K)), 1.0 / np.sqrt(head_dim))
    A = ad.softmax(ad.mask_keys(scores, mask))
    Y = ad.reshape(ad.transpose(ad.matmul(A, V), (0, 2, 1, 3)), (B, T, heads * head_dim))
    return ad.matmul(Y, p["wo"]), A


def encoder_layer(X: Tensor, p: dict[str, Tensor], mask, heads: int, head_dim: int):
    y1, A = multi_head_attention(X, p, mask, heads, head_dim)
    y2 = ad.layer_norm(ad.add(X, y1), p["ln1.gamma"], p["ln1.beta"])
    hidden = ad.relu(ad.linear(y2, p["ffn.w1"], p["ffn.b1"]))
    y3 = ad.linear(hidden, p["ffn.w2"], p["ffn.b2"])
    return ad.layer_norm(ad.add(y2, y3), p["ln2.gamma"], p["ln2.beta"]), A


def encode_tensor(model: EncoderModel, X: Tensor, mask):
    """Run the layer stack on already-embedded input; returns (Z, [A per layer])."""
    c = model.config
    attentions = []
    for l in range(c.layers):
        X, A = encoder_layer(X, model.layer(l), mask, c.heads, c.head_dim)
        attentions.append(A)
    return X, attentions


def encode_batch(model: EncoderModel, ids, mask):
    ids = np.atleast_2d(np.asarray(ids))
    return encode_tensor(model, model.embed(ids), np.atleast_2d(np.asarray(mask)))


@dataclass(frozen=True)
class EncodedSequence:
    Z: np.ndarray                        # (T, E)
    attentions: tuple[np.ndarray, ...]   # per layer, (H, T, T)
    mask: tuple[int, ...]


def encode(seq: TokenSequence, model: EncoderModel) -> EncodedSequence:
    Z, atts = encode_batch(model, [seq.ids], [seq.mask])
    return EncodedSequence(Z.value[0], tuple(a.value[0] for a in atts), tuple(seq.mask))


POOL_CLS = "cls"
POOL_MEAN = "mean"


def pool_mask(ids, mask, exclude_specials: bool = False) -> np.ndarray:
    m = np.asarray(mask, dtype=np.float64).copy()
    if exclude_specials:
        ids = np.asarray(ids)
        m[(ids == CLS_ID) | (ids == SEP_ID) | (ids == PAD_ID)] = 0.0
    return m


def pool_tensor(Z: Tensor, mask, strategy: str = POOL_MEAN) -> Tensor:
    """(B, T, E) -> (B, E)."""
    if strategy == POOL_CLS:
        return ad.index(Z, (slice(None), 0, slice(None)))
    if strategy == POOL_MEAN:
        return ad.masked_mean(Z, np.atleast_2d(mask))
    raise ConfigError(f"unknown pooling strategy {strategy!r}")


def pool(enc: EncodedSequence, strategy: str = POOL_MEAN, exclude_specials: bool = False) -> np.ndarray:
    if strategy == POOL_CLS:
        return enc.Z[0].copy()
    if strategy != POOL_MEAN:
        raise ConfigError(f"unknown pooling strategy {strategy!r}")
    # specials are identified by position: [CLS] first, [SEP] last real token
    m = np.asarray(enc.mask, dtype=np.float64)
    if exclude_specials:
        n = int(m.sum())
        m = m.copy()
        m[0] = 0.0
        if n >= 1:
            m[n - 1] = 0.0
    if m.sum() == 0:
        raise DomainError("pooling over an empty mask")
    return (enc.Z * m[:, None]).sum(axis=0) / m.sum()


def pooled_features(model: EncoderModel, seqs: Sequence[TokenSequence], strategy=POOL_MEAN,
                    batch_size: int = 64, exclude_specials: bool = False) -> np.ndarray:
    """Frozen-encoder feature matrix (n, E)."""
    out = []
    for i in range(0, len(seqs), batch_size):
        batch = seqs[i:i + batch_size]
        ids = np.array([s.ids for s in batch])
        mask = np.array([s.mask for s in batch])
        Z, _ = encode_batch(model, ids, mask)
        pm = pool_mask(ids, mask, exclude_specials)
        out.append(pool_tensor(Z, pm, strategy).value)
    return np.concatenate(out) if out else np.zeros((0, model.config.width))


# ---- checkpoints -------------------------------------------------------------

def _fmt(a: np.ndarray) -> str:
    if a.ndim == 0:
        return format(float(a), ".17g")
    if a.ndim == 1:
        return "[" + ", ".join(format(float(v), ".17g") for v in a) + "]"
    return "[" + ",\n".join(_fmt(r) for r in a) + "]"


def dumps_checkpoint(sections: dict[str, dict], tensors: dict[str, np.ndarray]) -> str:
    """Text checkpoint: config sections plus every tensor as a nested decimal array."""
    for name, v in tensors.items():
        if not np.all(np.isfinite(v)):
            raise NumericError(f"non-finite values in tensor {name}")
    head = json.dumps(sections, sort_keys=True, indent=1)
    body = ",\n".join(f"{json.dumps(k)}: {{\"shape\": {list(v.shape)}, \"data\": {_fmt(np.asarray(v))}}}"
                      for k, v in sorted(tensors.items()))
    return "{\"sections\": " + head + ",\n\"tensors\": {\n" + body + "}}\n"


def loads_checkpoint(text: str) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        doc = json.loads(text)
        tensors = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"])
                   for k, v in doc["tensors"].items()}
        return doc["sections"], tensors
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"malformed checkpoint: {exc}") from None


def save_encoder(model: EncoderModel, path, extra_sections=None, extra_tensors=None) -> None:
    sections = {"encoder": asdict(model.config)}
    sections.update(extra_sections or {})
    tensors = {k: v.value for k, v in model.params.items()}
    tensors.update(extra_tensors or {})
    Path(path).write_text(dumps_checkpoint(sections, tensors), encoding="utf-8")


def encoder_from_checkpoint(sections, tensors) -> EncoderModel:
    config = EncoderConfig(**sections["encoder"])
    model = EncoderModel(config)
    for n in model.names():
        if n not in tensors:
            raise ParseError(f"checkpoint lacks tensor {n}")
        model.params[n] = ad.param(tensors[n], name=n)
    return model


def load_encoder(path) -> EncoderModel:
    sections, tensors = loads_checkpoint(Path(path).read_text(encoding="utf-8"))
    return encoder_from_checkpoint(sections, tensors)
