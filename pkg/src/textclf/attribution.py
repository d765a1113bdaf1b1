"""Integrated-gradients attribution with an all-padding baseline, and
word-importance HTML reports."""

from __future__ import annotations

import csv
import html
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DomainError
from .tokenizer import PAD_ID, TokenSequence, Vocabulary


@dataclass(frozen=True)
class AttributionResult:
    scores: np.ndarray          # per position, summed over embedding dims
    target: int
    attribution_sum: float
    f_input: float
    f_baseline: float
    steps: int


def integrated_gradients_fn(F: Callable[[Tensor], Tensor], x: np.ndarray, baseline: np.ndarray,
                            steps: int, batch: int = 64) -> np.ndarray:
    """Midpoint-rule path integral of dF/dx from ``baseline`` to ``x``, times (x - baseline).

    ``F`` maps a batch of inputs, shape (B,) + x.shape, to a length-B vector
    of outputs (one scalar per path point).
    """
    if steps < 1:
        raise DomainError("steps must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    delta = x - baseline
    alphas = (np.arange(1, steps + 1) - 0.5) / steps
    total = np.zeros_like(x)
    for i in range(0, steps, batch):
        a = alphas[i:i + batch].reshape((-1,) + (1,) * x.ndim)
        leaf = ad.param(baseline[None] + a * delta[None])
        ad.backward(ad.sum_all(F(leaf)))
        total += leaf.grad.sum(axis=0)
    return delta * total / steps


def integrated_gradients(classifier, seq: TokenSequence, target: int, steps: int = 64) -> AttributionResult:
    """Attribute the target-class logit to input positions.

    Interpolation happens on token embeddings; positional encodings and the
    attention mask are shared by input and baseline, so the baseline is the
    embedded all-[PAD] sequence.
    """
    if not 0 <= target < classifier.n_classes:
        raise DomainError(f"target class {target} outside [0, {classifier.n_classes})")
    enc = classifier.encoder
    ids = np.asarray([seq.ids])
    mask = np.asarray([seq.mask])
    W = enc.params["embedding"].value
    x = W[ids[0]]
    base = np.broadcast_to(W[PAD_ID], x.shape).copy()
    T = x.shape[0]
    pe = enc.embed(np.full((1, T), PAD_ID)).value[0] - base   # positional part alone

    def F(tok_emb: Tensor) -> Tensor:
        B = tok_emb.shape[0]
        X = ad.add(tok_emb, Tensor(np.broadcast_to(pe, (B, T, pe.shape[1]))))
        logits = classifier.logits_from_embeddings(X, np.repeat(ids, B, 0), np.repeat(mask, B, 0))
        return ad.index(logits, (slice(None), target))

    ig = integrated_gradients_fn(F, x, base, steps)
    f_x = float(F(Tensor(x[None])).value[0])
    f_b = float(F(Tensor(base[None])).value[0])
    scores = ig.sum(axis=1)
    return AttributionResult(scores, target, float(scores.sum()), f_x, f_b, steps)


@dataclass(frozen=True)
class Completeness:
    passed: bool
    residual: float
    relative: float


def completeness_check(result: AttributionResult, tol: float = 0.01) -> Completeness:
    """|sum IG - (F(x) - F(x'))| <= tol * |F(x) - F(x')| + 1e-9."""
    gap = result.f_input - result.f_baseline
    residual = abs(result.attribution_sum - gap)
    rel = residual / abs(gap) if gap else (0.0 if residual == 0 else float("inf"))
    return Completeness(residual <= tol * abs(gap) + 1e-9, residual, rel)


# ---- reporting -----------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    doc_id: int
    tokens: Sequence[str]
    result: AttributionResult
    true_label: str
    predicted_label: str
    attribution_label: str | None = None


def _span(token: str, score: float, scale: float) -> str:
    text = html.escape(token, quote=True)
    if scale == 0 or score == 0:
        return f'<span class="tok">{text}</span>'
    alpha = abs(score) / scale
    rgb = "0, 160, 0" if score > 0 else "200, 0, 0"
    return f'<span class="tok" style="background-color: rgba({rgb}, {alpha:.4f})">{text}</span>'


def tokens_for(seq: TokenSequence, vocab: Vocabulary) -> list[str]:
    return [vocab.tokens[i] for i, m in zip(seq.ids, seq.mask) if m]


def render_report(rows: Sequence[ReportRow], out_path) -> Path:
    """Write an XHTML-compatible word-importance table, one row per document."""
    for r in rows:
        if not np.all(np.isfinite(r.result.scores)):
            raise DomainError(f"non-finite attribution scores for document {r.doc_id}")
    parts = [
        "<!DOCTYPE html>",
        '<html xmlns="http://www.w3.org/1999/xhtml">',
        '<head><meta charset="utf-8" /><title>Word importance</title>',
        "<style>.tok{padding:0 1px;margin:0 1px;border-radius:2px}"
        "table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:4px;vertical-align:top}</style>",
        "</head><body>",
        '<p class="legend">Legend: '
        '<span style="background-color: rgba(200, 0, 0, 1)">&#160;&#160;</span> Negative '
        '<span style="border:1px solid #999">&#160;&#160;</span> Neutral '
        '<span style="background-color: rgba(0, 160, 0, 1)">&#160;&#160;</span> Positive</p>',
        "<table>",
        "<tr><th>Document</th><th>True Label</th><th>Predicted Label</th><th>Attribution Label</th>"
        "<th>Attribution Score</th><th>Word Importance</th></tr>",
    ]
    for r in rows:
        scores = np.asarray(r.result.scores)[: len(r.tokens)]
        scale = float(np.abs(scores).max()) if len(scores) else 0.0
        spans = " ".join(_span(t, float(s), scale) for t, s in zip(r.tokens, scores))
        parts.append(
            f"<tr><td>{r.doc_id}</td><td>{html.escape(r.true_label)}</td>"
            f"<td>{html.escape(r.predicted_label)}</td>"
            f"<td>{html.escape(r.attribution_label or r.predicted_label)}</td>"
            f"<td>{r.result.attribution_sum:.2f}</td><td><p>{spans}</p></td></tr>")
    parts += ["</table>", "</body></html>", ""]
    out = Path(out_path)
    out.write_text("\n".join(parts), encoding="utf-8")
    return out


def dump_scores_csv(rows: Sequence[ReportRow], out_path) -> None:
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("doc_id", "position", "token", "score"))
        for r in rows:
            for pos, (tok, s) in enumerate(zip(r.tokens, r.result.scores)):
                w.writerow((r.doc_id, pos, tok, format(float(s), ".17g")))
