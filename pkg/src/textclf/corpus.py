"""Document records, the two published CSV schemas, splitting and synthetic corpora."""

from __future__ import annotations

import csv
import enum
import re
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Mapping, Sequence

from .errors import DomainError, LabelError, ParseError, SchemaError
from .rng import SplitMix64


class Schema(str, enum.Enum):
    NHTSA = "NHTSA"
    LGPIF = "LGPIF"
    GENERIC = "GENERIC"


@dataclass(frozen=True)
class DocumentRecord:
    id: int
    text: str
    label: str | None = None
    language: str | None = None
    extra: Mapping[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class ClassLabel:
    name: str
    index: int


@dataclass(frozen=True)
class DocumentSet:
    records: tuple[DocumentRecord, ...]
    schema: Schema = Schema.GENERIC
    label_names: tuple[str, ...] = ()

    def __post_init__(self):
        ids = set()
        for r in self.records:
            if r.id in ids:
                raise DomainError(f"duplicate record id {r.id}")
            ids.add(r.id)
            if not r.text.strip():
                raise DomainError(f"record {r.id} has empty text")
            if r.label is not None and r.label not in self.label_names:
                raise LabelError(f"label {r.label!r} of record {r.id} not in label_names")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def texts(self) -> list[str]:
        return [r.text for r in self.records]

    def label_indices(self) -> list[int]:
        index = {name: i for i, name in enumerate(self.label_names)}
        out = []
        for r in self.records:
            if r.label is None:
                raise LabelError(f"record {r.id} is unlabeled")
            out.append(index[r.label])
        return out

    def class_label(self, name: str) -> ClassLabel:
        return ClassLabel(name, self.label_names.index(name))

    def subset(self, records) -> "DocumentSet":
        return DocumentSet(tuple(records), self.schema, self.label_names)


NHTSA_REQUIRED = ("SCASEID", "NUMTOTV", "INJSEVA", "INJSEVB", "SUMMARY_EN", "SUMMARY_DE")
NHTSA_INT_COLUMNS = ("NUMTOTV", "INJSEVA", "INJSEVB") + tuple(f"WHEATHER{i}" for i in range(1, 9))
LGPIF_HAZARDS = ("Vandalism", "Fire", "Lightning", "Wind", "Hail", "Vehicle", "WaterNW", "WaterW", "Misc")
LGPIF_TEXT_COLUMNS = ("Loss Description", "LossDescription", "LossDesc", "Description")
NUMTOTV_LEVELS = ("1", "2", "3+")

_AMOUNT = re.compile(r"^\s*(\d+(?:\.\d{1,2})?)\s+(.*\S.*)$", re.S)


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: missing header row")
        header = [h.strip() for h in reader.fieldnames]
        reader.fieldnames = header
        return header, list(reader)


def _parse_int(value, column, row):
    try:
        return int(value.strip())
    except (ValueError, AttributeError):
        raise ParseError(f"column {column}: {value!r} is not an integer", row=row) from None


def bucket_numtotv(n: int) -> ClassLabel:
    """Vehicle count -> one of the levels 1, 2, 3+."""
    if n <= 0:
        raise DomainError(f"vehicle count must be >= 1, got {n}")
    idx = min(n, 3) - 1
    return ClassLabel(NUMTOTV_LEVELS[idx], idx)


def load_nhtsa_csv(path, language: str = "en", label_rule: str | None = None) -> DocumentSet:
    """Load an accident-report export.

    ``label_rule`` is ``"numtotv"`` (bucketed vehicle count), ``"injsevb"``
    (binary injury indicator) or None for unlabeled records.
    """
    header, rows = _read_rows(path)
    text_col = {"en": "SUMMARY_EN", "de": "SUMMARY_DE"}.get(language)
    if text_col is None:
        raise DomainError(f"unsupported language {language!r}")
    for col in NHTSA_REQUIRED:
        if col not in header:
            raise SchemaError(f"{path}: missing required column {col}")
    int_cols = [c for c in NHTSA_INT_COLUMNS if c in header]

    if label_rule == "numtotv":
        label_names = NUMTOTV_LEVELS
    elif label_rule == "injsevb":
        label_names = ("0", "1")
    elif label_rule is None:
        label_names = ()
    else:
        raise DomainError(f"unknown label rule {label_rule!r}")

    records = []
    for rownum, row in enumerate(rows, start=2):
        extra = {c: _parse_int(row[c], c, rownum) for c in int_cols}
        text = row[text_col]
        if not text or not text.strip():
            raise ParseError(f"empty {text_col}", row=rownum)
        label = None
        if label_rule == "numtotv":
            try:
                label = bucket_numtotv(extra["NUMTOTV"]).name
            except DomainError as exc:
                raise ParseError(str(exc), row=rownum) from None
        elif label_rule == "injsevb":
            label = str(extra["INJSEVB"])
            if label not in label_names:
                raise LabelError(f"INJSEVB must be 0 or 1, got {label}", row=rownum)
        records.append(DocumentRecord(
            id=_parse_int(row["SCASEID"], "SCASEID", rownum),
            text=text, label=label, language=language, extra=extra))
    return DocumentSet(tuple(records), Schema.NHTSA, label_names)


def split_amount(description: str) -> tuple[int | None, str]:
    """Strip a leading claim amount, returned in integer cents."""
    m = _AMOUNT.match(description)
    if m is None:
        return None, description
    cents = int(Decimal(m.group(1)) * 100)
    return cents, m.group(2)


def load_lgpif_csv(path, text_column: str | None = None) -> DocumentSet:
    header, rows = _read_rows(path)
    for col in LGPIF_HAZARDS:
        if col not in header:
            raise SchemaError(f"{path}: missing required column {col}")
    if text_column is None:
        text_column = next((c for c in LGPIF_TEXT_COLUMNS if c in header), None)
        if text_column is None:
            raise SchemaError(f"{path}: missing loss-description column")
    elif text_column not in header:
        raise SchemaError(f"{path}: missing required column {text_column}")
    id_col = next((c for c in ("row", "id", "ID") if c in header), None)

    records = []
    for rownum, row in enumerate(rows, start=2):
        flags = [_parse_int(row[c], c, rownum) for c in LGPIF_HAZARDS]
        hits = [name for name, v in zip(LGPIF_HAZARDS, flags) if v == 1]
        if len(hits) != 1 or any(v not in (0, 1) for v in flags):
            raise LabelError(f"expected exactly one hazard indicator, got {hits or 'none'}", row=rownum)
        cents, text = split_amount(row[text_column])
        if not text.strip():
            raise ParseError("empty loss description", row=rownum)
        extra = {} if cents is None else {"amount_cents": cents}
        rid = _parse_int(row[id_col], id_col, rownum) if id_col else rownum - 1
        records.append(DocumentRecord(id=rid, text=text, label=hits[0], language="en", extra=extra))
    return DocumentSet(tuple(records), Schema.LGPIF, LGPIF_HAZARDS)


def load_generic_csv(path, label_names: Sequence[str] | None = None) -> DocumentSet:
    """Columns ``id,text`` with optional ``label`` and ``language``."""
    header, rows = _read_rows(path)
    for col in ("id", "text"):
        if col not in header:
            raise SchemaError(f"{path}: missing required column {col}")
    records = []
    for rownum, row in enumerate(rows, start=2):
        label = row.get("label") or None
        lang = row.get("language") or None
        records.append(DocumentRecord(_parse_int(row["id"], "id", rownum), row["text"], label, lang))
    if label_names is None:
        label_names = sorted({r.label for r in records if r.label is not None})
    return DocumentSet(tuple(records), Schema.GENERIC, tuple(label_names))


def load(path, schema, **kwargs) -> DocumentSet:
    schema = Schema(str(schema).upper())
    if schema is Schema.NHTSA:
        return load_nhtsa_csv(path, **kwargs)
    if schema is Schema.LGPIF:
        return load_lgpif_csv(path, **kwargs)
    return load_generic_csv(path, **kwargs)


def _format_cents(cents: int) -> str:
    return f"{cents // 100}.{cents % 100:02d}"


def write_csv(docs: DocumentSet, path) -> None:
    """Serialize in the layout of the set's schema; loading the file reproduces ``docs``."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        if docs.schema is Schema.LGPIF:
            w.writerow(("row",) + LGPIF_HAZARDS + ("Loss Description",))
            for r in docs:
                desc = r.text
                if "amount_cents" in r.extra:
                    desc = f"{_format_cents(r.extra['amount_cents'])} {desc}"
                w.writerow([r.id] + [int(r.label == h) for h in LGPIF_HAZARDS] + [desc])
        elif docs.schema is Schema.NHTSA:
            int_cols = [c for c in NHTSA_INT_COLUMNS
                        if c in NHTSA_REQUIRED or any(c in r.extra for r in docs)]
            w.writerow(["SCASEID"] + int_cols + ["SUMMARY_EN", "SUMMARY_DE"])
            for r in docs:
                en, de = (r.text, "") if r.language != "de" else ("", r.text)
                w.writerow([r.id] + [r.extra[c] for c in int_cols] + [en, de])
        else:
            w.writerow(("id", "text", "label", "language"))
            for r in docs:
                w.writerow((r.id, r.text, r.label or "", r.language or ""))


def split(docs: DocumentSet, train_fraction: float, seed: int) -> tuple[DocumentSet, DocumentSet]:
    """Seeded SplitMix64 shuffle, then the first floor(n * fraction) records go to train."""
    if not 0.0 < train_fraction < 1.0:
        raise DomainError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if len(docs) == 0:
        raise DomainError("cannot split an empty DocumentSet")
    order = SplitMix64(seed).shuffle(range(len(docs)))
    cut = int(len(docs) * train_fraction)
    train = [docs.records[i] for i in order[:cut]]
    test = [docs.records[i] for i in order[cut:]]
    return docs.subset(train), docs.subset(test)


DEFAULT_FILLER = (
    "the", "a", "was", "on", "near", "after", "during", "morning", "evening", "street",
    "report", "noted", "building", "north", "south", "east", "west", "corner", "staff",
    "found", "observed", "later", "early", "inside", "outside", "public", "office",
    "school", "library", "county", "city", "hall", "garage", "station", "park", "area",
    "unit", "level", "door", "window", "wall", "floor", "room", "small", "large",
    "old", "new", "second", "third", "main", "side", "rear", "front", "several", "some",
    "minor", "reported", "by", "at", "of", "in", "to", "and", "with", "from", "around",
)


def _template_words(template: str) -> list[str]:
    return [w for w in template.split() if w != "*"]


def gen_synthetic(
    templates: Mapping[str, Sequence[str]],
    n: int,
    seed: int,
    filler: Sequence[str] = DEFAULT_FILLER,
    min_fill: int = 1,
    max_fill: int = 4,
) -> DocumentSet:
    """Keyword-template corpus with round-robin labels.

    Each ``*`` in a template expands to ``min_fill..max_fill`` filler words.
    Filler words may not coincide with template words, so the class is
    always recoverable from the keywords alone.
    """
    labels = list(templates)
    if len(labels) < 2:
        raise DomainError("need at least two classes")
    for name in labels:
        if not templates[name]:
            raise DomainError(f"class {name!r} has an empty template list")
        if not all(_template_words(t) for t in templates[name]):
            raise DomainError(f"class {name!r} has a template without keywords")
    keywords = {w.lower() for ts in templates.values() for t in ts for w in _template_words(t)}
    clash = keywords & {w.lower() for w in filler}
    if clash:
        raise DomainError(f"filler words overlap template keywords: {sorted(clash)}")
    if not 0 <= min_fill <= max_fill:
        raise DomainError("need 0 <= min_fill <= max_fill")

    rng = SplitMix64(seed)
    records = []
    for i in range(n):
        label = labels[i % len(labels)]
        template = rng.choice(list(templates[label]))
        words = []
        for tok in template.split():
            if tok == "*":
                k = min_fill + rng.below(max_fill - min_fill + 1)
                words.extend(rng.choice(filler) for _ in range(k))
            else:
                words.append(tok)
        text = " ".join(words)
        if not text.strip():
            text = rng.choice(filler)
        records.append(DocumentRecord(id=i + 1, text=text, label=label))
    return DocumentSet(tuple(records), Schema.GENERIC, tuple(labels))


def gen_long_binary(
    n: int,
    seed: int,
    cue: str,
    length: int,
    cue_after: int,
    filler: Sequence[str] = DEFAULT_FILLER,
) -> DocumentSet:
    """Long filler documents; positives carry ``cue`` at a word position >= ``cue_after``.

    Labels alternate "0", "1" starting with "0".
    """
    if cue in filler:
        raise DomainError("cue word must not be a filler word")
    if not 0 <= cue_after < length:
        raise DomainError("cue_after must lie inside the document")
    rng = SplitMix64(seed)
    records = []
    for i in range(n):
        words = [rng.choice(filler) for _ in range(length)]
        label = str(i % 2)
        if label == "1":
            words[cue_after + rng.below(length - cue_after)] = cue
        records.append(DocumentRecord(id=i + 1, text=" ".join(words), label=label))
    return DocumentSet(tuple(records), Schema.GENERIC, ("0", "1"))


def with_labels(docs: DocumentSet, labels: Sequence[str], label_names: Sequence[str]) -> DocumentSet:
    """Copy of ``docs`` with labels replaced (used by the unsupervised refinement steps)."""
    recs = tuple(replace(r, label=l) for r, l in zip(docs.records, labels, strict=True))
    return DocumentSet(recs, docs.schema, tuple(label_names))
