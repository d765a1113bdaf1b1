"""Acceptance suite: thirteen numbered criteria, each timed against its budget.

Every test prints one ``PASS``/``FAIL`` line (shown even under output capture)
and then asserts, so a failing criterion is visible in both places.
Run alone with ``pytest tests/test_acceptance.py -v -m acceptance``.
"""

from __future__ import annotations

import csv
import time
from contextlib import contextmanager

import numpy as np
import pytest
import yaml

from gradcases import encoder_head_case, primitive_cases, tiny_classifier
from textclf import autodiff as ad
from textclf.attribution import completeness_check, integrated_gradients, integrated_gradients_fn
from textclf.autodiff import Tensor, grad_check, parameters_grad_check
from textclf.benchmarks import FIVE_TOPIC_EXPRESSIONS, five_topic, head_tail, long_binary, three_class
from textclf.cli import EXIT_OK, run
from textclf.corpus import write_csv
from textclf.encoder import EncoderConfig, EncoderModel, encode_batch, pooled_features
from textclf.metrics import confusion_accuracy, dummy_fit, evaluate, read_confusion
from textclf.porter import porter_stem
from textclf.tokenizer import (UNK_ID, Vocabulary, decode, encode_ids, load_stopwords, normalize, pack, preprocess,
                               train_wordpiece, word_tokenize, wordpiece_encode)
from textclf.train import (SequenceClassifier, TrainConfig, mlm_eval, predict_logreg, predict_long,
                           predict_truncated, train_logreg, train_mlm, train_task)
from textclf.unsupervised import ExpressionMapping

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]


class _Check:
    def __init__(self, number: int, limit: float):
        self.number, self.limit = number, limit
        self.ok, self.detail, self.elapsed = False, "", 0.0
        self.extra = 0.0       # time spent in shared fixtures on this criterion's behalf

    def record(self, ok: bool, detail: str) -> None:
        self.ok, self.detail = bool(ok), detail


@contextmanager
def criterion(capsys, number: int, limit: float):
    """Time the body, print the verdict line, then assert outcome and budget."""
    c = _Check(number, limit)
    t0 = time.perf_counter()
    try:
        yield c
    finally:
        c.elapsed = time.perf_counter() - t0 + c.extra
        verdict = "PASS" if c.ok and c.elapsed < limit else "FAIL"
        with capsys.disabled():
            print(f"\n{verdict} criterion {number:2d}: {c.detail or 'did not complete'} "
                  f"[{c.elapsed:.1f}s, budget {limit:g}s]")
    assert c.ok, c.detail
    assert c.elapsed < limit, f"criterion {number} took {c.elapsed:.1f}s"


# ---- 1-3: metric fixtures ---------------------------------------------------

def test_c01_constant_prior_metrics(capsys):
    with criterion(capsys, 1, 1.0) as c:
        p = np.array([0.572, 0.274, 0.154])
        y = np.repeat(np.arange(3), [572, 274, 154])
        r = evaluate(np.tile(p, (1000, 1)), y)
        c.record(abs(r.log_loss - 0.961) <= 0.005 and abs(r.brier - 0.574) <= 0.005 and r.accuracy == 0.572,
                 f"log_loss={r.log_loss:.4f} brier={r.brier:.4f} accuracy={r.accuracy:.3f}")


def test_c02_confusion_fixtures(capsys, data_dir):
    with criterion(capsys, 2, 1.0) as c:
        _, left = read_confusion(data_dir / "confusion_clustering.csv")
        _, right = read_confusion(data_dir / "confusion_refined.csv")
        a, b = confusion_accuracy(left), confusion_accuracy(right)
        c.record(a == 725 / 1039 and b == 818 / 1039 and round(a, 3) == 0.698 and round(b, 3) == 0.787,
                 f"clustering={int(np.trace(left))}/{int(left.sum())}={a:.3f} "
                 f"refined={int(np.trace(right))}/{int(right.sum())}={b:.3f}")


def test_c03_dummy_majority(capsys):
    with criterion(capsys, 3, 1.0) as c:
        y = np.repeat(np.arange(9), [310, 46, 123, 107, 18, 227, 67, 38, 103])
        acc = evaluate(dummy_fit(y, 9).predict_proba(len(y)), y).accuracy
        c.record(abs(acc - 0.298) <= 0.0005, f"dummy accuracy={100 * acc:.2f}%")


# ---- 4-6: numerical properties ----------------------------------------------

def test_c04_gradient_suite(capsys):
    with criterion(capsys, 4, 30.0) as c:
        worst, where, n = 0.0, "", 0
        for seed in range(10):
            for name, f, x in primitive_cases(seed):
                err = grad_check(f, x)
                n += 1
                if err > worst:
                    worst, where = err, f"{name}/seed{seed}"
            loss, params = encoder_head_case(seed)
            err = parameters_grad_check(loss, params)
            n += 1
            if err > worst:
                worst, where = err, f"encoder+head/seed{seed}"
        c.record(worst <= 1e-4, f"{n} checks, max relative error {worst:.2e} ({where})")


def test_c05_attention_invariants(capsys):
    with criterion(capsys, 5, 60.0) as c:
        rng = np.random.default_rng(2024)
        row_err = pad_max = perm_err = 0.0
        for i in range(1000):
            heads, hd, T = int(rng.integers(1, 4)), int(rng.integers(1, 5)), int(rng.integers(3, 9))
            cfg = EncoderConfig(vocab_size=20, width=2 * int(rng.integers(1, 5)), heads=heads, head_dim=hd,
                                layers=int(rng.integers(1, 3)), max_len=T, ffn_dim=int(rng.integers(2, 9)),
                                positional=False)
            model = EncoderModel.init(cfg, i)
            B = 2
            ids = rng.integers(5, 20, size=(B, T))
            mask = np.ones((B, T), dtype=int)
            for b in range(B):
                n_real = int(rng.integers(1, T + 1))
                ids[b, n_real:], mask[b, n_real:] = 0, 0
            Z, atts = encode_batch(model, ids, mask)
            for A in atts:
                real = mask.astype(bool)[:, None, :, None]             # unmasked query rows
                sums = A.value.sum(axis=-1, keepdims=True)
                row_err = max(row_err, float(np.abs(np.where(real, sums - 1.0, 0.0)).max()))
                pad = ~mask.astype(bool)[:, None, None, :]
                pad_max = max(pad_max, float(np.where(pad, A.value, 0.0).max()))
            perm = rng.permutation(T)
            Zp, _ = encode_batch(model, ids[:, perm], mask[:, perm])
            real_pos = mask[:, perm].astype(bool)
            diff = np.abs(Zp.value - Z.value[:, perm])[real_pos]
            perm_err = max(perm_err, float(diff.max()))
        c.record(row_err <= 1e-6 and pad_max < 1e-9 and perm_err <= 1e-9,
                 f"1000 encoders: row-sum error {row_err:.1e}, max pad weight {pad_max:.1e}, "
                 f"permutation error {perm_err:.1e}")


def test_c06_integrated_gradients(capsys):
    with criterion(capsys, 6, 60.0) as c:
        rng = np.random.default_rng(6)
        w, x, b = rng.normal(size=(3, 6))
        wt = Tensor(w)
        ig = integrated_gradients_fn(lambda X: ad.sum_last(ad.mul(X, wt)), x, b, 7)
        lin_res = abs(ig.sum() - float(w @ x - w @ b))

        quad_rel = 0.0
        for q in (0.3, -1.7, 4.0):
            v = integrated_gradients_fn(lambda X: ad.sum_last(ad.mul(X, X)), np.array([q]), np.zeros(1), 100)[0]
            quad_rel = max(quad_rel, abs(v - q * q) / (q * q))

        clf = tiny_classifier(0)
        seqs = [pack([5 + i % 3] + list(rng.integers(8, 12, size=2)), 5) for i in range(30)]
        clf = train_task(clf, seqs, [i % 3 for i in range(30)], TrainConfig(epochs=5, batch_size=10, lr=1e-2))
        worst = 0.0
        for content in ([5, 9, 10], [6, 8], [7, 11, 9], [5, 8, 8], [6, 11]):
            chk = completeness_check(integrated_gradients(clf, pack(content, 5), content[0] - 5, 256))
            worst = max(worst, chk.relative)
        c.record(lin_res <= 1e-12 and quad_rel <= 1e-4 and worst <= 0.01,
                 f"linear residual {lin_res:.1e}, quadratic rel error {quad_rel:.1e}, "
                 f"completeness residual {100 * worst:.3f}% at m=256")


# ---- 7-9: the three-class corpus ---------------------------------------------

TOY = dict(width=32, heads=4, head_dim=8, layers=2, max_len=64, ffn_dim=64)


@pytest.fixture(scope="module")
def three():
    tr, te = head_tail(three_class(), 2000)
    vocab = train_wordpiece([word_tokenize(normalize(t)) for t in tr.texts], 200)
    enc = lambda texts: [wordpiece_encode(t, vocab, 64) for t in texts]  # noqa: E731
    return dict(tr=tr, te=te, vocab=vocab, Str=enc(tr.texts), Ste=enc(te.texts), enc=enc,
                cfg=EncoderConfig(vocab_size=len(vocab), **TOY))


def test_c07_task_finetuning(capsys, three):
    with criterion(capsys, 7, 600.0) as c:
        model = EncoderModel.init(three["cfg"], 0)
        clf = SequenceClassifier.init(model, three["tr"].label_names, seed=0)
        clf = train_task(clf, three["Str"], three["tr"].label_indices(), TrainConfig(epochs=2))
        acc = evaluate(clf.predict_proba(three["Ste"]), three["te"].label_indices()).accuracy
        c.record(acc >= 0.95, f"held-out accuracy {acc:.3f} after 2 epochs (2000 train / 500 test)")


def test_c08_frozen_features_beat_dummy(capsys, three):
    with criterion(capsys, 8, 300.0) as c:
        model = EncoderModel.init(three["cfg"], 0)
        Xtr, Xte = pooled_features(model, three["Str"]), pooled_features(model, three["Ste"])
        ytr, yte = three["tr"].label_indices(), three["te"].label_indices()
        lr = train_logreg(Xtr, ytr, 1e-3, max_iter=5000)
        acc = evaluate(predict_logreg(lr, Xte), yte).accuracy
        dummy = evaluate(dummy_fit(ytr, 3).predict_proba(len(yte)), yte).accuracy
        c.record(acc - dummy >= 0.15, f"logistic regression {acc:.3f} vs dummy {dummy:.3f} "
                                      f"(+{100 * (acc - dummy):.1f}pp)")


def test_c09_mlm_reduces_masked_loss(capsys, three):
    with criterion(capsys, 9, 600.0) as c:
        unlabelled = three["enc"](three_class(n=10_000, seed=7).texts)
        model = EncoderModel.init(three["cfg"], 0)
        before = mlm_eval(model, three["Ste"], 0.15, 0)
        tuned = train_mlm(model, unlabelled, TrainConfig(epochs=2))
        after = mlm_eval(tuned, three["Ste"], 0.15, 0)
        drop = 1 - after / before
        c.record(drop >= 0.20, f"masked cross-entropy {before:.3f} -> {after:.3f} ({100 * drop:.1f}% lower), "
                               f"2 epochs on 10000 unlabelled docs")


# ---- 10: long inputs ----------------------------------------------------------

def test_c10_chunked_recall(capsys):
    with criterion(capsys, 10, 300.0) as c:
        W = 64
        short = long_binary(n=1000, seed=6, length=W - 2, cue_after=0)
        vocab = train_wordpiece([word_tokenize(normalize(t)) for t in short.texts], 300)
        seqs = [wordpiece_encode(t, vocab, W) for t in short.texts]
        model = EncoderModel.init(EncoderConfig(vocab_size=len(vocab), **TOY), 0)
        clf = train_task(SequenceClassifier.init(model, short.label_names, seed=0), seqs,
                         short.label_indices(), TrainConfig(epochs=10))
        test = long_binary(n=200, seed=5, length=600, cue_after=520)
        y = np.array(test.label_indices())
        cue = encode_ids("explosion", vocab)
        first_cue, trunc, chunked = [], [], []
        for text, label in zip(test.texts, y):
            ids = encode_ids(text, vocab)
            if label == 1:
                first_cue.append(ids.index(cue[0]))
            trunc.append(predict_truncated(clf, ids, W)[0])
            chunked.append(predict_long(clf, ids, W, combine="or")[0])
        trunc, chunked = np.array(trunc), np.array(chunked)
        t_rec, c_rec = trunc[y == 1].mean(), chunked[y == 1].mean()
        fpr = chunked[y == 0].mean()
        c.record(min(first_cue) > 512 and t_rec <= 0.05 and c_rec >= 0.95,
                 f"cue from token {min(first_cue)}: truncated recall {100 * t_rec:.1f}%, "
                 f"chunk+OR recall {100 * c_rec:.1f}% (false positive rate {100 * fpr:.1f}%)")


# ---- 11-12: CLI workspace on the five-topic corpus ----------------------------

CHAIN = [["train-tokenizer"], ["encode"], ["train-classifier"], ["finetune-mlm"], ["finetune-task"],
         ["predict"], ["attribute"], ["similarity"], ["topics", "--refine"], ["evaluate"]]


def _snapshot(out):
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def topic_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("five_topic")
    docs = five_topic()
    write_csv(docs, tmp / "docs.csv")
    ExpressionMapping(tuple((e, l) for l, e in FIVE_TOPIC_EXPRESSIONS.items())).save(tmp / "map.tsv")
    cfg = {"seed": 0, "output_dir": str(tmp / "out"),
           "dataset": {"path": str(tmp / "docs.csv"), "train_fraction": 0.8},
           "tokenizer": {"vocab_size": 200, "window": 64},
           "train": {"epochs": 10},
           "task": {"mapping_path": str(tmp / "map.tsv"), "attribute_limit": 5}}
    path = tmp / "run.yaml"
    path.write_text(yaml.safe_dump(cfg))
    t0 = time.perf_counter()
    codes = [run(cmd + ["--config", str(path)]) for cmd in CHAIN]
    return dict(tmp=tmp, out=tmp / "out", config=path, codes=codes, docs=docs,
                seconds=time.perf_counter() - t0)


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_c11_unsupervised_pipeline(capsys, topic_run):
    with criterion(capsys, 11, 600.0) as c:
        c.extra = topic_run["seconds"]
        assert topic_run["codes"] == [EXIT_OK] * len(CHAIN), topic_run["codes"]
        truth = {r.id: r.label for r in topic_run["docs"]}
        sim = _read_rows(topic_run["out"] / "similarity.csv")
        sim_acc = np.mean([truth[int(r["id"])] == r["label"] for r in sim])
        m = {(r["stage"], r["split"]): r for r in _read_rows(topic_run["out"] / "topic_metrics.csv")}
        n_clusters = int(m[("clusters", "fit")]["clusters"])
        mapped = float(m[("clusters", "fit")]["accuracy"])
        refined = float(m[("refined", "fit")]["accuracy"])
        c.record(sim_acc >= 0.9 and n_clusters >= 5 and mapped >= 0.9 and refined >= mapped,
                 f"similarity accuracy {sim_acc:.3f} on {len(sim)} held-out docs; {n_clusters} clusters, "
                 f"mapping accuracy {mapped:.3f}, refined {refined:.3f}")


def test_c12_reruns_are_byte_identical(capsys, topic_run):
    with criterion(capsys, 12, 600.0) as c:
        first = _snapshot(topic_run["out"])
        codes = [run(cmd + ["--config", str(topic_run["config"])]) for cmd in CHAIN]
        second = _snapshot(topic_run["out"])
        changed = sorted(k for k in first.keys() | second.keys() if first.get(k) != second.get(k))
        c.record(codes == [EXIT_OK] * len(CHAIN) and not changed and len(first) > 20,
                 f"{len(CHAIN)} subcommands rerun, {len(first)} artifacts compared, "
                 f"{len(changed)} differ{': ' + ', '.join(changed[:5]) if changed else ''}")


# ---- 13: tokenizer suite ------------------------------------------------------

def test_c13_tokenizer_suite(capsys, data_dir):
    with criterion(capsys, 13, 30.0) as c:
        text = "The crach occurred at an urban four-way INTERSECTION ."
        toks = preprocess(text, stopwords=load_stopwords("en"), stem=True)
        vocab = Vocabulary.from_tokens([t for t in toks if t != "crach"])
        pipeline_ok = (porter_stem("occurred") == "occur" and porter_stem("intersection") == "intersect"
               and "the" not in toks and "at" not in toks and vocab.id("crach") == UNK_ID)

        lines = (data_dir / "porter_fixture.tsv").read_text(encoding="utf-8").splitlines()
        pairs = [tuple(l.split("\t")[:2]) for l in lines if l]
        wrong = [w for w, s in pairs if porter_stem(w) != s]

        words = ["fire", "water", "pipe", "burst", "storm", "roof", "hail", "truck", "smoke", "kitchen"]
        wp = train_wordpiece([words] * 3, 80)
        rng = np.random.default_rng(13)
        bad = 0
        for _ in range(1000):
            sent = " ".join(rng.choice(words, size=int(rng.integers(1, 12))))
            seq = wordpiece_encode(sent, wp, 64)
            bad += decode(seq.ids, wp) != sent or UNK_ID in seq.ids
        c.record(pipeline_ok and len(pairs) >= 200 and not wrong and bad == 0,
                 f"crash-sentence fixtures {'ok' if pipeline_ok else 'wrong'}; Porter {len(pairs) - len(wrong)}/{len(pairs)} "
                 f"pairs; round trip {1000 - bad}/1000 sentences")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
