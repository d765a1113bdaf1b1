import csv
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gradcases import tiny_classifier
from textclf import autodiff as ad
from textclf.attribution import (AttributionResult, ReportRow, completeness_check, dump_scores_csv,
                                 integrated_gradients, integrated_gradients_fn, render_report)
from textclf.autodiff import Tensor
from textclf.errors import DomainError
from textclf.tokenizer import pack
from textclf.train import SequenceClassifier, TrainConfig, train_task


def _linear(w):
    w = Tensor(np.asarray(w, dtype=float))
    return lambda X: ad.sum_last(ad.mul(X, w))


@given(st.integers(1, 20), st.integers(0, 100))
def test_linear_function_is_exact_for_any_m(m, seed):
    rng = np.random.default_rng(seed)
    w, x, b = rng.normal(size=(3, 5))
    ig = integrated_gradients_fn(_linear(w), x, b, m)
    assert np.allclose(ig, w * (x - b), atol=1e-12)


def test_quadratic_closed_form():
    for x in (0.3, -1.7, 4.0):
        ig = integrated_gradients_fn(lambda X: ad.sum_last(ad.mul(X, X)), np.array([x]), np.zeros(1), 100)
        assert abs(ig[0] - x * x) < 1e-4 * x * x


def test_coordinate_equal_to_baseline_gets_zero():
    w = np.array([1.0, 2.0, 3.0])
    ig = integrated_gradients_fn(lambda X: ad.sum_last(ad.exp(ad.mul(X, Tensor(w)))),
                                 np.array([0.5, 0.0, 1.0]), np.array([0.0, 0.0, 0.0]), 16)
    assert ig[1] == 0.0


def test_steps_must_be_positive():
    with pytest.raises(DomainError):
        integrated_gradients_fn(_linear([1.0]), np.ones(1), np.zeros(1), 0)


def test_target_out_of_range():
    with pytest.raises(DomainError):
        integrated_gradients(tiny_classifier(0), pack([5, 6], 5), 3)


@pytest.fixture(scope="module")
def trained():
    clf = tiny_classifier(0)
    rng = np.random.default_rng(0)
    seqs = [pack([5 + i % 3] + list(rng.integers(8, 12, size=2)), 5) for i in range(30)]
    return train_task(clf, seqs, [i % 3 for i in range(30)], TrainConfig(epochs=5, batch_size=10, lr=1e-2))


def test_completeness_on_trained_toy_model(trained):
    for content in ([5, 9, 10], [6, 8], [7, 11, 9]):
        r = integrated_gradients(trained, pack(content, 5), target=content[0] - 5, steps=256)
        chk = completeness_check(r)
        assert chk.passed, chk
        assert r.scores.shape == (5,)


def test_residual_shrinks_with_steps(trained):
    seq = pack([5, 9, 10], 5)
    res = [completeness_check(integrated_gradients(trained, seq, 0, m)).residual for m in (1, 4, 16, 64, 256)]
    assert all(b <= a + 1e-12 for a, b in zip(res, res[1:])), res


def test_padding_positions_score_zero(trained):
    r = integrated_gradients(trained, pack([5], 5), 0, 32)
    assert np.all(r.scores[3:] == 0.0)   # [PAD] equals the baseline there


def test_reloaded_model_gives_same_scores(trained, tmp_path):
    trained.save(tmp_path / "c.json")
    back = SequenceClassifier.load(tmp_path / "c.json")
    seq = pack([6, 8, 9], 5)
    a = integrated_gradients(trained, seq, 1, 32).scores
    b = integrated_gradients(back, seq, 1, 32).scores
    assert np.max(np.abs(a - b)) <= 1e-10


def test_scaling_target_logit_scales_scores(trained):
    seq = pack([7, 9], 5)
    scaled = trained.copy()
    scaled.head_w.value[:, 2] *= 3.0
    scaled.head_b.value[2] *= 3.0
    a = integrated_gradients(trained, seq, 2, 32).scores
    b = integrated_gradients(scaled, seq, 2, 32).scores
    assert np.allclose(b, 3.0 * a, atol=1e-10)


# ---- report ----

def _result(scores):
    s = np.asarray(scores, dtype=float)
    return AttributionResult(s, 0, float(s.sum()), 1.0, 0.0, 8)


def _spans(path):
    ns = {"h": "http://www.w3.org/1999/xhtml"}
    text = path.read_text(encoding="utf-8").replace("<!DOCTYPE html>", "")
    root = ET.fromstring(text)
    return root, [(s.text, s.get("style")) for s in root.iter("{http://www.w3.org/1999/xhtml}span")
                  if s.get("class") == "tok"], ns


def test_report_is_well_formed_and_escapes(tmp_path):
    toks = ["<b>", "a&b", "\"q\""]
    out = render_report([ReportRow(1, toks, _result([0.5, -0.25, 0.0]), "Fire", "Water")], tmp_path / "r.html")
    root, spans, _ = _spans(out)
    assert [t for t, _ in spans] == toks
    assert "rgba(0, 160, 0, 1.0000)" in spans[0][1] and "rgba(200, 0, 0, 0.5000)" in spans[1][1]
    assert spans[2][1] is None
    text = "".join(root.itertext())
    assert "Negative" in text and "Neutral" in text and "Positive" in text and "0.25" in text


def test_report_neutral_and_single_token(tmp_path):
    out = render_report([ReportRow(1, ["x", "y"], _result([0.0, 0.0]), "a", "a"),
                         ReportRow(2, ["x", "y"], _result([0.0, 2.0]), "a", "b")], tmp_path / "r.html")
    _, spans, _ = _spans(out)
    assert [s for _, s in spans[:2]] == [None, None]
    assert spans[2][1] is None and "1.0000" in spans[3][1]


def test_report_rejects_non_finite(tmp_path):
    with pytest.raises(DomainError):
        render_report([ReportRow(1, ["x"], _result([np.nan]), "a", "a")], tmp_path / "r.html")


def test_scores_csv(tmp_path):
    dump_scores_csv([ReportRow(4, ["x", "y"], _result([0.1, -0.2]), "a", "a")], tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["doc_id", "position", "token", "score"]
    assert rows[1][:3] == ["4", "0", "x"] and float(rows[2][3]) == -0.2
