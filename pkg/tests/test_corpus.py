import csv

import pytest
from hypothesis import given, strategies as st

from textclf.corpus import (DEFAULT_FILLER, LGPIF_HAZARDS, DocumentRecord, DocumentSet, Schema,
                            bucket_numtotv, gen_long_binary, gen_synthetic, load, load_generic_csv,
                            load_lgpif_csv, load_nhtsa_csv, split, split_amount, with_labels, write_csv)
from textclf.errors import DomainError, LabelError, ParseError, SchemaError
from textclf.rng import SplitMix64


def _write(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


NHTSA_HEADER = ["SCASEID", "NUMTOTV", "INJSEVA", "INJSEVB", "SUMMARY_EN", "SUMMARY_DE"]


def test_nhtsa_row_maps_fields(tmp_path):
    p = _write(tmp_path / "n.csv", NHTSA_HEADER,
               [[1, 2, 3, 0, "V1 turned left.", "V1 bog ab."], [2, 7, 1, 1, "Three cars.", "Drei Autos."]])
    docs = load_nhtsa_csv(p, label_rule="numtotv")
    assert docs.records[0].id == 1 and docs.records[0].extra["NUMTOTV"] == 2
    assert [r.label for r in docs] == ["2", "3+"]
    de = load_nhtsa_csv(p, language="de", label_rule="injsevb")
    assert de.texts == ["V1 bog ab.", "Drei Autos."] and [r.label for r in de] == ["0", "1"]


def test_nhtsa_missing_summary_is_schema_error(tmp_path):
    p = _write(tmp_path / "n.csv", NHTSA_HEADER[:4] + ["SUMMARY_DE"], [[1, 1, 0, 0, "x"]])
    with pytest.raises(SchemaError):
        load_nhtsa_csv(p)


def test_nhtsa_non_integer_reports_row(tmp_path):
    p = _write(tmp_path / "n.csv", NHTSA_HEADER, [[1, 1, 0, 0, "a", "b"], [2, "two", 0, 0, "a", "b"]])
    with pytest.raises(ParseError, match="row 3"):
        load_nhtsa_csv(p)


@pytest.mark.parametrize("n,name", [(1, "1"), (2, "2"), (3, "3+"), (7, "3+")])
def test_bucket_numtotv(n, name):
    assert bucket_numtotv(n).name == name


def test_bucket_numtotv_rejects_zero():
    with pytest.raises(DomainError):
        bucket_numtotv(0)


def _lgpif_row(rid, hazard, desc):
    return [rid] + [int(h == hazard) for h in LGPIF_HAZARDS] + [desc]


def test_lgpif_amount_and_labels(tmp_path):
    p = _write(tmp_path / "l.csv", ["row", *LGPIF_HAZARDS, "Loss Description"],
               [_lgpif_row(1, "Lightning", "6838.87 lightning damage"),
                _lgpif_row(30, "Vehicle", "light pole damaged")])
    docs = load_lgpif_csv(p)
    a, b = docs.records
    assert (a.label, a.extra["amount_cents"], a.text) == ("Lightning", 683887, "lightning damage")
    assert b.label == "Vehicle" and "amount_cents" not in b.extra
    assert sum(1 for r in docs for h in LGPIF_HAZARDS if r.label == h) == len(docs)


def test_lgpif_two_hazards_is_label_error(tmp_path):
    row = [1] + [int(h in ("Fire", "Wind")) for h in LGPIF_HAZARDS] + ["fire and wind"]
    p = _write(tmp_path / "l.csv", ["row", *LGPIF_HAZARDS, "Loss Description"], [row])
    with pytest.raises(LabelError):
        load_lgpif_csv(p)


def test_split_amount():
    assert split_amount("12 broken window") == (1200, "broken window")
    assert split_amount("broken window") == (None, "broken window")


@pytest.mark.parametrize("schema", ["lgpif", "nhtsa", "generic"])
def test_write_then_load_round_trips(tmp_path, schema):
    if schema == "lgpif":
        src = _write(tmp_path / "s.csv", ["row", *LGPIF_HAZARDS, "Loss Description"],
                     [_lgpif_row(1, "Fire", "100.50 kitchen fire"), _lgpif_row(2, "Hail", "hail, \"roof\"")])
        docs = load_lgpif_csv(src)
    elif schema == "nhtsa":
        src = _write(tmp_path / "s.csv", NHTSA_HEADER, [[5, 1, 0, 1, "one car", "ein Auto"]])
        docs = load_nhtsa_csv(src, label_rule="injsevb")
    else:
        docs = gen_synthetic({"a": ["* alpha *"], "b": ["* beta *"]}, 6, seed=2)
    out = tmp_path / "out.csv"
    write_csv(docs, out)
    kw = {"label_rule": "injsevb"} if schema == "nhtsa" else {}
    again = load(out, schema, **kw)
    assert again.records == docs.records


def test_split_sizes_and_determinism():
    docs = gen_synthetic({"a": ["* alpha *"], "b": ["* beta *"]}, 10, seed=0)
    tr, te = split(docs, 0.8, seed=42)
    assert (len(tr), len(te)) == (8, 2)
    assert split(docs, 0.8, seed=42) == (tr, te)


def test_split_seeds_give_different_orders():
    docs = gen_synthetic({"a": ["* alpha *"], "b": ["* beta *"]}, 1000, seed=0)
    a, _ = split(docs, 0.5, 1)
    b, _ = split(docs, 0.5, 2)
    assert [r.id for r in a] != [r.id for r in b]


@given(st.integers(1, 200), st.floats(0.01, 0.99), st.integers(0, 2**64 - 1))
def test_split_is_partition(n, frac, seed):
    docs = gen_synthetic({"a": ["* alpha *"], "b": ["* beta *"]}, n, seed=1)
    tr, te = split(docs, frac, seed)
    ids_tr, ids_te = {r.id for r in tr}, {r.id for r in te}
    assert len(tr) + len(te) == n and not ids_tr & ids_te and ids_tr | ids_te == {r.id for r in docs}


def test_gen_synthetic_round_robin_and_keyword_oracle():
    tpl = {"fire": ["* caught fire *"], "water": ["* water damage *"]}
    docs = gen_synthetic(tpl, 4, seed=0)
    assert [r.label for r in docs] == ["fire", "water", "fire", "water"]
    big = gen_synthetic(tpl, 300, seed=9)
    guess = ["fire" if "fire" in t.split() else "water" for t in big.texts]
    assert guess == [r.label for r in big]
    assert gen_synthetic(tpl, 300, seed=9) == big


def test_gen_synthetic_rejects_keyword_filler_overlap():
    with pytest.raises(DomainError):
        gen_synthetic({"a": ["* the *"], "b": ["* beta *"]}, 4, seed=0, filler=DEFAULT_FILLER)


def test_gen_long_binary_places_cue_late():
    docs = gen_long_binary(6, seed=0, cue="explosion", length=50, cue_after=40)
    for r in docs:
        words = r.text.split()
        assert len(words) == 50
        pos = [i for i, w in enumerate(words) if w == "explosion"]
        assert (pos and min(pos) >= 40) if r.label == "1" else not pos


def test_document_set_invariants():
    with pytest.raises(DomainError):
        DocumentSet((DocumentRecord(1, "a", None), DocumentRecord(1, "b", None)), Schema.GENERIC, ())
    with pytest.raises(LabelError):
        DocumentSet((DocumentRecord(1, "a", "x"),), Schema.GENERIC, ("y",))


def test_with_labels_replaces_labels():
    docs = gen_synthetic({"a": ["* alpha *"], "b": ["* beta *"]}, 4, seed=0)
    relabelled = with_labels(docs, ["b", "b", "a", "a"], ("a", "b"))
    assert [r.label for r in relabelled] == ["b", "b", "a", "a"]


def test_generic_csv_optional_label(tmp_path):
    p = _write(tmp_path / "g.csv", ["id", "text"], [[1, "hello"], [2, "world"]])
    docs = load_generic_csv(p)
    assert docs.label_names == () and all(r.label is None for r in docs)


def test_splitmix64_reference_values():
    # Reference outputs of the published splitmix64 generator for seed 0.
    r = SplitMix64(0)
    assert [r.next_u64() for _ in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


@given(st.integers(0, 2**64 - 1), st.integers(1, 1000))
def test_splitmix64_below_in_range(seed, n):
    r = SplitMix64(seed)
    assert all(0 <= r.below(n) < n for _ in range(20))
