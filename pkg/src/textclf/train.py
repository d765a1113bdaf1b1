"""Training: L2 multinomial logistic regression on pooled features, joint
encoder + head fine-tuning, masked-language-model fine-tuning, and chunked
prediction for documents longer than the model window."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import (POOL_MEAN, EncoderModel, encode_batch, encode_tensor, encoder_from_checkpoint,
                      loads_checkpoint, pool_mask, pool_tensor, save_encoder)
from .errors import ConfigError, DomainError, NumericError, ShapeError
from .tokenizer import MASK_ID, TokenSequence, chunk, default_stride, pack


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2
    batch_size: int = 16
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    p_mask: float = 0.15

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 <= self.p_mask <= 1.0:
            raise ConfigError("p_mask must lie in [0, 1]")


class Adam:
    def __init__(self, params: Sequence[Tensor], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    @classmethod
    def from_config(cls, params, config: TrainConfig):
        return cls(params, config.lr, config.beta1, config.beta2, config.eps)

    def step(self, grads=None):
        grads = grads if grads is not None else [p.grad for p in self.params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value = p.value - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _check_finite(loss, where):
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss during {where}")


# ---- logistic regression -----------------------------------------------------

def softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class LogRegModel:
    weights: np.ndarray          # (d, K)
    bias: np.ndarray             # (K,)
    l2_lambda: float
    class_names: tuple[str, ...] = ()
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def n_classes(self):
        return self.bias.shape[0]


def logreg_objective(W, b, X, Y1hot, l2_lambda):
    P = softmax_rows(X @ W + b)
    ce = -np.log(np.maximum((P * Y1hot).sum(axis=1), 1e-300)).mean()
    return ce + l2_lambda * float((W * W).sum()), P


def train_logreg(features, labels, l2_lambda: float = 1.0, config: TrainConfig | None = None,
                 n_classes: int | None = None, class_names=(), max_iter: int = 20000,
                 tol: float = 1e-6, lr: float | None = None) -> LogRegModel:
    """Minimise mean cross-entropy + l2_lambda * ||W||^2 (bias unpenalised) with full-batch Adam.

    Stops when the gradient infinity-norm drops below ``tol`` or after
    ``max_iter`` steps. Parameters start at zero, so the result is
    deterministic.
    """
    config = config or TrainConfig()
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] == 0:
        raise DomainError("train_logreg needs a non-empty (n, d) feature matrix with d >= 1")
    if y.shape != (X.shape[0],):
        raise ShapeError(f"train_logreg: {X.shape[0]} rows but {y.shape[0]} labels")
    K = n_classes or (len(class_names) or int(y.max()) + 1)
    K = max(K, 2)
    if y.min() < 0 or y.max() >= K:
        raise DomainError("labels outside [0, K)")
    if X.shape[0] < K:
        raise DomainError("need at least K samples")
    n, d = X.shape
    Y = np.zeros((n, K))
    Y[np.arange(n), y] = 1.0

    W = Tensor(np.zeros((d, K)))
    b = Tensor(np.zeros(K))
    opt = Adam([W, b], lr or config.lr, config.beta1, config.beta2, config.eps)
    history = []
    for _ in range(max_iter):
        obj, P = logreg_objective(W.value, b.value, X, Y, l2_lambda)
        history.append(obj)
        R = (P - Y) / n
        gW = X.T @ R + 2.0 * l2_lambda * W.value
        gb = R.sum(axis=0)
        if max(np.abs(gW).max(), np.abs(gb).max()) < tol:
            break
        opt.step([gW, gb])
    _check_finite(history[-1], "logistic regression")
    return LogRegModel(W.value, b.value, l2_lambda, tuple(class_names), history)


def predict_logreg(model: LogRegModel, features) -> np.ndarray:
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if X.shape[1] != model.weights.shape[0]:
        raise ShapeError(f"predict_logreg: feature width {X.shape[1]} != {model.weights.shape[0]}")
    return softmax_rows(X @ model.weights + model.bias)


# ---- transformer classifier ---------------------------------------------------

@dataclass
class SequenceClassifier:
    encoder: EncoderModel
    head_w: Tensor                      # (E, K)
    head_b: Tensor                      # (K,)
    class_names: tuple[str, ...]
    pooling: str = POOL_MEAN
    exclude_specials: bool = False
    log: TrainLog | None = field(default=None, repr=False, compare=False)

    @classmethod
    def init(cls, encoder: EncoderModel, class_names, pooling=POOL_MEAN, seed=0, exclude_specials=False):
        K = len(class_names)
        if K < 2:
            raise DomainError("a classifier needs at least two classes")
        E = encoder.config.width
        a = np.sqrt(6.0 / (E + K))
        w = np.random.default_rng(seed).uniform(-a, a, size=(E, K))
        return cls(encoder, ad.param(w, "head.w"), ad.param(np.zeros(K), "head.b"),
                   tuple(class_names), pooling, exclude_specials)

    @property
    def n_classes(self):
        return len(self.class_names)

    def copy(self) -> "SequenceClassifier":
        return SequenceClassifier(self.encoder.copy(), ad.param(self.head_w.value.copy(), "head.w"),
                                  ad.param(self.head_b.value.copy(), "head.b"), self.class_names,
                                  self.pooling, self.exclude_specials)

    def logits_from_embeddings(self, X: Tensor, ids, mask) -> Tensor:
        Z, _ = encode_tensor(self.encoder, X, mask)
        pooled = pool_tensor(Z, pool_mask(ids, mask, self.exclude_specials), self.pooling)
        return ad.linear(pooled, self.head_w, self.head_b)

    def logits(self, ids, mask) -> Tensor:
        ids = np.atleast_2d(np.asarray(ids))
        mask = np.atleast_2d(np.asarray(mask))
        return self.logits_from_embeddings(self.encoder.embed(ids), ids, mask)

    def predict_proba(self, seqs: Sequence[TokenSequence], batch_size: int = 64) -> np.ndarray:
        out = []
        for i in range(0, len(seqs), batch_size):
            b = seqs[i:i + batch_size]
            z = self.logits([s.ids for s in b], [s.mask for s in b]).value
            out.append(softmax_rows(z))
        return np.concatenate(out) if out else np.zeros((0, self.n_classes))

    def save(self, path, extra_sections=None) -> None:
        sections = {"classifier": {"class_names": list(self.class_names), "pooling": self.pooling,
                                   "exclude_specials": self.exclude_specials}}
        sections.update(extra_sections or {})
        save_encoder(self.encoder, path, sections, {"head.w": self.head_w.value, "head.b": self.head_b.value})

    @classmethod
    def load(cls, path) -> "SequenceClassifier":
        sections, tensors = loads_checkpoint(Path(path).read_text(encoding="utf-8"))
        enc = encoder_from_checkpoint(sections, tensors)
        c = sections["classifier"]
        return cls(enc, ad.param(tensors["head.w"], "head.w"), ad.param(tensors["head.b"], "head.b"),
                   tuple(c["class_names"]), c["pooling"], c.get("exclude_specials", False))


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


class TrainLog:
    """Collects ``epoch,batch,loss`` rows and optionally appends them to a CSV file."""

    def __init__(self, path=None):
        self.rows: list[tuple[int, int, float]] = []
        self.path = Path(path) if path else None
        if self.path and not self.path.exists():
            self.path.write_text("epoch,batch,loss\n", encoding="utf-8")

    def add(self, epoch, batch, loss):
        self.rows.append((epoch, batch, loss))
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(f"{epoch},{batch},{loss:.17g}\n")

    def epoch_means(self) -> list[float]:
        out = {}
        for e, _, l in self.rows:
            out.setdefault(e, []).append(l)
        return [float(np.mean(v)) for _, v in sorted(out.items())]


def train_task(classifier: SequenceClassifier, seqs: Sequence[TokenSequence], labels: Sequence[int],
               config: TrainConfig, freeze_encoder: bool = False, log: TrainLog | None = None
               ) -> SequenceClassifier:
    """Minimise cross-entropy through pooling + head and, unless frozen, the encoder."""
    y = np.asarray(labels, dtype=np.int64)
    if len(seqs) != len(y) or len(y) == 0:
        raise DomainError("train_task needs one label per sequence and at least one sequence")
    if y.min() < 0 or y.max() >= classifier.n_classes:
        raise DomainError("label outside the classifier's classes")
    clf = classifier.copy()
    params = [clf.head_w, clf.head_b]
    if not freeze_encoder:
        params = clf.encoder.tensors() + params
    else:
        for p in clf.encoder.tensors():
            p.requires_grad = False
    opt = Adam.from_config(params, config)
    ids = np.array([s.ids for s in seqs])
    mask = np.array([s.mask for s in seqs])
    rng = np.random.default_rng(config.seed)
    log = log if log is not None else TrainLog()
    for epoch in range(config.epochs):
        for bi, idx in enumerate(_batches(len(y), config.batch_size, rng)):
            loss = ad.softmax_cross_entropy(clf.logits(ids[idx], mask[idx]), y[idx])
            _check_finite(float(loss.value), "task fine-tuning")
            ad.backward(loss)
            opt.step()
            log.add(epoch, bi, float(loss.value))
    if freeze_encoder:
        for p in clf.encoder.tensors():
            p.requires_grad = True
    clf.log = log
    return clf


def labels_to_indices(labels: Sequence[str], class_names: Sequence[str]) -> list[int]:
    index = {n: i for i, n in enumerate(class_names)}
    try:
        return [index[l] for l in labels]
    except KeyError as exc:
        raise DomainError(f"unknown label {exc.args[0]!r}") from None


# ---- masked language modelling -------------------------------------------------

def _eligible(ids, mask):
    ids = np.asarray(ids)
    return (np.asarray(mask) == 1) & (ids >= 5)


def mlm_mask_batch(ids, mask, p_mask: float, rng: np.random.Generator):
    """Replace each eligible position by [MASK] with probability p_mask.

    Returns (masked ids, boolean array of masked positions).
    """
    ids = np.array(ids, dtype=np.int64)
    hit = _eligible(ids, mask) & (rng.random(ids.shape) < p_mask)
    masked = ids.copy()
    masked[hit] = MASK_ID
    return masked, hit


def mlm_prepare(seq: TokenSequence, p_mask: float, seed: int = 0):
    """-> (masked TokenSequence, {position: original id})."""
    if not 0.0 <= p_mask <= 1.0:
        raise DomainError("p_mask must lie in [0, 1]")
    masked, hit = mlm_mask_batch([seq.ids], [seq.mask], p_mask, np.random.default_rng(seed))
    targets = {int(i): int(seq.ids[i]) for i in np.flatnonzero(hit[0])}
    return TokenSequence(tuple(int(i) for i in masked[0]), seq.mask), targets


@dataclass
class MLMHead:
    """Output layer tied to the embedding matrix, plus its own bias."""
    bias: Tensor


def mlm_loss_tensor(model: EncoderModel, head: MLMHead, masked_ids, mask, hit, targets) -> Tensor:
    Z, _ = encode_batch(model, masked_ids, mask)
    rows, cols = np.nonzero(hit)
    picked = ad.index(Z, (rows, cols))                       # (n_masked, E)
    logits = ad.add(ad.matmul(picked, ad.transpose(model.params["embedding"], (1, 0))), head.bias)
    return ad.softmax_cross_entropy(logits, targets)


def mlm_eval(model: EncoderModel, seqs: Sequence[TokenSequence], p_mask: float = 0.15, seed: int = 0,
             head: MLMHead | None = None, batch_size: int = 64) -> float:
    """Mean masked-position cross-entropy on fixed (seeded) masks."""
    head = head or MLMHead(Tensor(np.zeros(model.config.vocab_size)))
    rng = np.random.default_rng(seed)
    total, count = 0.0, 0
    for i in range(0, len(seqs), batch_size):
        b = seqs[i:i + batch_size]
        ids = np.array([s.ids for s in b])
        mask = np.array([s.mask for s in b])
        masked, hit = mlm_mask_batch(ids, mask, p_mask, rng)
        if not hit.any():
            continue
        loss = mlm_loss_tensor(model, head, masked, mask, hit, ids[hit])
        k = int(hit.sum())
        total += float(loss.value) * k
        count += k
    if count == 0:
        raise DomainError("no maskable positions")
    return total / count


def train_mlm(model: EncoderModel, corpus: Sequence[TokenSequence], config: TrainConfig,
              keep_head: bool = False, log: TrainLog | None = None):
    """Masked-language-model fine-tuning. Returns the updated encoder, or (encoder, head) if keep_head."""
    if not corpus:
        raise DomainError("train_mlm needs a non-empty corpus")
    model = model.copy()
    head = MLMHead(ad.param(np.zeros(model.config.vocab_size), "mlm.bias"))
    opt = Adam.from_config(model.tensors() + [head.bias], config)
    ids = np.array([s.ids for s in corpus])
    mask = np.array([s.mask for s in corpus])
    rng = np.random.default_rng(config.seed)
    log = log if log is not None else TrainLog()
    for epoch in range(config.epochs):
        for bi, idx in enumerate(_batches(len(ids), config.batch_size, rng)):
            masked, hit = mlm_mask_batch(ids[idx], mask[idx], config.p_mask, rng)
            if not hit.any():
                continue
            loss = mlm_loss_tensor(model, head, masked, mask[idx], hit, ids[idx][hit])
            _check_finite(float(loss.value), "MLM fine-tuning")
            ad.backward(loss)
            opt.step()
            log.add(epoch, bi, float(loss.value))
    return (model, head) if keep_head else model


# ---- long documents --------------------------------------------------------------

COMBINE_OR = "or"
COMBINE_MEAN = "mean"


def predict_long(classifier: SequenceClassifier, content_ids: Sequence[int], window: int,
                 stride: int | None = None, combine: str = COMBINE_OR):
    """Predict on overlapping chunks and combine.

    OR (binary only): positive iff some chunk gives class 1 a probability
    >= 0.5. MEAN: argmax of the averaged probability vectors.
    Returns (class index, per-chunk probability matrix).
    """
    if combine == COMBINE_OR and classifier.n_classes != 2:
        raise DomainError("OR combination needs a binary classifier")
    if combine not in (COMBINE_OR, COMBINE_MEAN):
        raise ConfigError(f"unknown combine mode {combine!r}")
    if stride is None:
        stride = default_stride(window)
    probs = classifier.predict_proba(chunk(list(content_ids), window, stride))
    if combine == COMBINE_OR:
        return int(bool(np.any(probs[:, 1] >= 0.5))), probs
    return int(np.argmax(probs.mean(axis=0))), probs


def predict_truncated(classifier: SequenceClassifier, content_ids: Sequence[int], window: int):
    probs = classifier.predict_proba([pack(list(content_ids), window)])
    return int(np.argmax(probs[0])), probs


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
