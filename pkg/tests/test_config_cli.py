import subprocess
import sys

import pytest
import yaml

from textclf.benchmarks import long_binary, three_class
from textclf.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, run
from textclf.config import PipelineConfig, apply_override, dump_config, from_dict, load_config
from textclf.corpus import write_csv
from textclf.errors import ConfigError
from textclf.unsupervised import ExpressionMapping


# ---- config ----

def test_defaults_and_round_trip(tmp_path):
    cfg = from_dict({})
    assert cfg == PipelineConfig()
    (tmp_path / "c.yaml").write_text(dump_config(cfg))
    assert load_config(tmp_path / "c.yaml") == cfg


def test_exponent_without_dot_is_a_float(tmp_path):
    (tmp_path / "c.yaml").write_text("train: {lr: 3e-4}\n")
    assert load_config(tmp_path / "c.yaml").train.lr == 3e-4
    with pytest.raises(ConfigError):
        from_dict({"train": {"lr": "fast"}})


def test_overrides_parse_as_yaml(tmp_path):
    (tmp_path / "c.yaml").write_text("train: {epochs: 2}\n")
    cfg = load_config(tmp_path / "c.yaml", ["train.epochs=5", "train.lr=3e-4", "seed=9", "model.positional=false",
                                            "task.fallback_label=Misc"])
    assert (cfg.train.epochs, cfg.train.lr, cfg.seed, cfg.model.positional) == (5, 3e-4, 9, False)
    assert cfg.task.fallback_label == "Misc"


@pytest.mark.parametrize("override", ["train.epochs", "train.epochs=[1,2]", "a.b.c=1"])
def test_bad_overrides(override):
    with pytest.raises(ConfigError):
        apply_override({}, override)


@pytest.mark.parametrize("data", [
    {"train": {"epochs": "two"}},
    {"train": {"approach": "D"}},
    {"model": {"positional": 1}},
    {"model": {"width": 31}},
    {"tokenizer": {"window": 16, "stride": 15}},
    {"task": {"combine": "max"}},
    {"dataset": {"schema": "tabular"}},
    {"dataset": {"train_fraction": 1.0}},
    {"train": {"nope": 1}},
    {"extra": 1},
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        from_dict(data)


def test_relative_artifact_paths_live_in_output_dir(tmp_path):
    cfg = from_dict({"output_dir": str(tmp_path)})
    assert cfg.out("vocab.txt") == tmp_path / "vocab.txt"
    assert cfg.out("/abs/x.json").as_posix() == "/abs/x.json"


def test_digest_tracks_content():
    a, b = from_dict({}), from_dict({"seed": 1})
    assert a.digest() == from_dict({}).digest() != b.digest()


# ---- CLI ----

def _write_config(tmp_path, **sections):
    data = {"seed": 0, "output_dir": str(tmp_path / "out"),
            "dataset": {"path": str(tmp_path / "docs.csv"), "schema": "generic", "train_fraction": 0.8},
            "tokenizer": {"vocab_size": 80, "window": 16},
            "model": {"width": 16, "heads": 2, "head_dim": 8, "layers": 1, "ffn_dim": 16},
            "train": {"epochs": 2, "batch_size": 16, "lr": 3e-3, "max_iter": 300},
            "task": {"attribute_limit": 2, "ig_steps": 16, "min_pts": 3, "pca_k": 4,
                     "mapping_path": str(tmp_path / "map.tsv")}}
    for k, v in sections.items():
        data[k].update(v)
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    write_csv(three_class(n=150, seed=2, max_fill=2), tmp / "docs.csv")
    ExpressionMapping((("caught fire", "fire"), ("water damage", "water"), ("wind blew", "wind"))).save(
        tmp / "map.tsv")
    return tmp, _write_config(tmp)


CHAIN = [["train-tokenizer"], ["encode"], ["train-classifier"], ["finetune-mlm"], ["finetune-task"],
         ["predict"], ["attribute"], ["similarity"], ["topics", "--refine"], ["evaluate"]]


def _snapshot(out):
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


def test_full_chain_then_rerun_is_byte_identical(workspace, capsys):
    tmp, cfg = workspace
    out = tmp / "out"
    for cmd in CHAIN:
        assert run(cmd + ["--config", str(cfg)]) == EXIT_OK, cmd
    first = _snapshot(out)
    expected = {"vocab.txt", "features.csv", "logreg.json", "metrics.csv", "dummy_metrics.csv", "mlm_encoder.json",
                "mlm_log.csv", "mlm_report.csv", "classifier.json", "train_log.csv", "predictions.csv",
                "attribution.html", "attribution_scores.csv", "attribution_summary.csv", "similarity.csv",
                "topics.csv", "clusters.tsv", "assignments.csv", "topic_metrics.csv", "topic_confusion_fit.csv",
                "topic_confusion_refined.csv", "refined_classifier.json", "evaluation.csv"}
    assert expected <= set(first)
    assert {f"manifest-{c[0]}.json" for c in CHAIN} <= set(first)
    for cmd in CHAIN:
        assert run(cmd + ["--config", str(cfg)]) == EXIT_OK, cmd
    assert _snapshot(out) == first
    assert "accuracy=" in capsys.readouterr().out


def test_predict_chunk_on_short_documents_matches_plain(workspace):
    tmp, cfg = workspace
    out = tmp / "out"
    if not (out / "classifier.json").exists():
        for cmd in (["train-tokenizer"], ["finetune-task"]):
            assert run(cmd + ["--config", str(cfg)]) == EXIT_OK
    assert run(["predict", "--config", str(cfg)]) == EXIT_OK
    plain = (out / "predictions.csv").read_text().splitlines()
    assert run(["predict", "--chunk", "--config", str(cfg)]) == EXIT_OK
    chunked = (out / "predictions.csv").read_text().splitlines()
    short = [i for i, line in enumerate(chunked) if i and line.split(",")[2] == "1"]
    assert len(short) >= 5
    assert all(chunked[i] == plain[i] for i in short)


def test_manifest_records_config_and_hashes(workspace):
    import hashlib
    import json
    tmp, cfg = workspace
    assert run(["train-tokenizer", "--config", str(cfg)]) == EXIT_OK
    m = json.loads((tmp / "out" / "manifest-train-tokenizer.json").read_text())
    assert m["seed"] == 0 and m["config_sha256"] == load_config(cfg).digest()
    assert m["artifacts"]["vocab.txt"] == hashlib.sha256((tmp / "out" / "vocab.txt").read_bytes()).hexdigest()
    assert set(m["versions"]) == {"textclf", "python", "numpy"}


def test_evaluate_confusion_fixtures(data_dir, capsys):
    code = run(["evaluate", "--confusion", str(data_dir / "confusion_clustering.csv"),
                str(data_dir / "confusion_refined.csv")])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert "accuracy=0.698 (725/1039)" in out and "accuracy=0.787 (818/1039)" in out


def test_invalid_config_writes_nothing(tmp_path):
    cfg = _write_config(tmp_path, train={"epochs": "many"})
    write_csv(three_class(n=30, seed=2), tmp_path / "docs.csv")
    assert run(["train-tokenizer", "--config", str(cfg)]) == EXIT_CONFIG
    assert not (tmp_path / "out").exists()
    cfg = _write_config(tmp_path)
    assert run(["train-tokenizer", "--config", str(cfg), "--set", "train.bogus=1"]) == EXIT_CONFIG
    assert not (tmp_path / "out").exists()


def test_data_errors_write_nothing(tmp_path):
    cfg = _write_config(tmp_path)
    assert run(["train-tokenizer", "--config", str(cfg)]) == EXIT_DATA        # dataset missing
    write_csv(three_class(n=30, seed=2), tmp_path / "docs.csv")
    assert run(["finetune-task", "--config", str(cfg)]) == EXIT_DATA          # no vocabulary yet
    assert not (tmp_path / "out").exists()


def test_long_documents_chunked_prediction_runs(tmp_path):
    write_csv(long_binary(n=12, seed=1, length=40, cue_after=30), tmp_path / "docs.csv")
    cfg = _write_config(tmp_path, tokenizer={"window": 16, "vocab_size": 60}, train={"epochs": 1})
    for cmd in (["train-tokenizer"], ["finetune-task"], ["predict", "--chunk"]):
        assert run(cmd + ["--config", str(cfg)]) == EXIT_OK
    lines = (tmp_path / "out" / "predictions.csv").read_text().splitlines()
    assert lines[0] == "id,predicted,chunks,p_0,p_1"
    assert all(int(l.split(",")[2]) > 1 for l in lines[1:])


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "textclf.cli", "train-tokenizer", "--config",
                        str(tmp_path / "missing.yaml")], capture_output=True, text=True)
    assert r.returncode == EXIT_CONFIG and "config error" in r.stderr
