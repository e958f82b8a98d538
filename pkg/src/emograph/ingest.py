"""Build the real-world reply graph from interaction-record files (CSV or JSONL)."""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .graph import Edge, Emotion, Graph, NodeState
from .sentiment import Classifier, classify_sentiment

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("source_user", "target_user", "post_id", "text")
LABEL_COLUMNS = ("external_label", "roberta_label", "label", "vader_label")
SCORE_COLUMNS = ("external_score", "roberta_score", "vader_score", "score")
PROCESSED_COLUMNS = ("processed", "text_processed")
# three-class transformer checkpoints emit LABEL_0/1/2 for negative/neutral/positive
_INDEXED_LABELS = {"label_0": Emotion.NEGATIVE, "label_1": Emotion.NEUTRAL, "label_2": Emotion.POSITIVE}

MISSING_FIELD = "missing field"
EMPTY_TEXT = "empty text"
DUPLICATE = "duplicate"

_URL = re.compile(r"(?:https?|ftp)://\S+|www\.\S+", re.IGNORECASE)
_NON_ALPHA = re.compile(r"[^A-Za-z]+")


class RecordParseError(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass(frozen=True)
class InteractionRecord:
    source_user: str
    target_user: str
    post_id: str
    text: str
    processed: str | None = None
    external_label: Emotion | None = None
    external_score: float | None = None
    line: int = 0


@dataclass
class RejectionReport:
    counts: Counter = field(default_factory=Counter)
    rejected: list[tuple[int, str]] = field(default_factory=list)

    def add(self, line: int, reason: str) -> None:
        self.counts[reason] += 1
        self.rejected.append((line, reason))

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_dict(self) -> dict:
        return {
            "counts": dict(sorted(self.counts.items())),
            "rejected": [{"line": ln, "reason": r} for ln, r in self.rejected],
        }


def parse_external_label(value) -> Emotion | None:
    if value is None:
        return None
    text = str(value).strip().lower()
    if not text:
        return None
    if text in _INDEXED_LABELS:
        return _INDEXED_LABELS[text]
    try:
        return Emotion.parse(text)
    except ValueError:
        return None


def _first(row: dict, names) -> object:
    for name in names:
        val = row.get(name)
        if val not in (None, ""):
            return val
    return None


def _rows_csv(text: str):
    reader = csv.DictReader(io.StringIO(text, newline=""))
    header = reader.fieldnames
    if header is None:
        return
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise RecordParseError(1, f"header lacks required column(s) {', '.join(missing)}")
    for row in reader:
        # DictReader puts surplus cells under the None key
        row.pop(None, None)
        yield reader.line_num, row


def _rows_jsonl(text: str):
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordParseError(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(row, dict):
            raise RecordParseError(lineno, "expected a JSON object")
        yield lineno, row


def parse_interaction_records(
    path: str | Path,
    fmt: str | None = None,
) -> tuple[list[InteractionRecord], RejectionReport]:
    """Read records, dropping rows with missing users/post, blank text, or exact duplicates.

    ``fmt`` is ``"csv"`` or ``"jsonl"``; by default it follows the file suffix.
    """
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix.lower() in (".jsonl", ".ndjson", ".json") else "csv")
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unknown record format {fmt!r}")
    try:
        text = path.read_text("utf-8-sig")
    except (OSError, UnicodeDecodeError) as exc:
        raise RecordParseError(0, f"cannot read {path}: {exc}") from None

    rows = _rows_csv(text) if fmt == "csv" else _rows_jsonl(text)
    records: list[InteractionRecord] = []
    report = RejectionReport()
    seen = set()
    for lineno, row in rows:
        fields = {k: ("" if row.get(k) is None else str(row.get(k)).strip()) for k in REQUIRED_COLUMNS}
        if any(row.get(k) is None for k in REQUIRED_COLUMNS) or not all(
            fields[k] for k in ("source_user", "target_user", "post_id")
        ):
            report.add(lineno, MISSING_FIELD)
            continue
        if not fields["text"]:
            report.add(lineno, EMPTY_TEXT)
            continue
        key = json.dumps(sorted((str(k), str(v)) for k, v in row.items()))
        if key in seen:
            report.add(lineno, DUPLICATE)
            continue
        seen.add(key)
        score = _first(row, SCORE_COLUMNS)
        try:
            score = float(score) if score is not None else None
        except (TypeError, ValueError):
            score = None
        processed = _first(row, PROCESSED_COLUMNS)
        records.append(
            InteractionRecord(
                source_user=fields["source_user"],
                target_user=fields["target_user"],
                post_id=fields["post_id"],
                text=str(row["text"]),
                processed=None if processed is None else str(processed),
                external_label=parse_external_label(_first(row, LABEL_COLUMNS)),
                external_score=score,
                line=lineno,
            )
        )
    return records, report


# ---------------------------------------------------------------------------
# text normalization


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    text = resources.files("emograph").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


STEMMER_VERSION = 1
_VOWELS = set("aeiou")


def _undouble(stem: str) -> str:
    if len(stem) > 3 and stem[-1] == stem[-2] and stem[-1] not in "lsz" and stem[-1] not in _VOWELS:
        return stem[:-1]
    return stem


def _strip_once(word: str) -> str:
    if word.endswith("sses"):
        return word[:-2]
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    for suffix in ("ingly", "edly", "ness", "ment", "ing", "ed"):
        if word.endswith(suffix):
            stem = word[: -len(suffix)]
            if len(stem) >= 3 and any(c in _VOWELS for c in stem):
                return _undouble(stem) if suffix in ("ing", "ed", "ingly", "edly") else stem
    if word.endswith("ly") and len(word) > 5:
        return word[:-2]
    if word.endswith("s") and not word.endswith(("ss", "us", "is")) and len(word) > 3:
        return word[:-1]
    return word


def stem(word: str) -> str:
    """Light suffix stripping, repeated until nothing changes (so stem(stem(w)) == stem(w))."""
    while True:
        nxt = _strip_once(word)
        if nxt == word:
            return word
        word = nxt


def normalize_text(raw: str) -> list[str]:
    """URLs out, letters only, lowercase, whitespace tokens, stopwords out, stemmed.

    A stem that lands on a stopword is dropped too, which keeps the pipeline
    idempotent on its own joined output.
    """
    text = _URL.sub(" ", raw)
    text = _NON_ALPHA.sub(" ", text).lower()
    stops = stopwords()
    out = []
    for tok in text.split():
        if tok in stops:
            continue
        s = stem(tok)
        if s and s not in stops:
            out.append(s)
    return out


# ---------------------------------------------------------------------------
# graph assembly


DEFAULT_CREDIBILITY = 0.5


def build_real_graph(
    records: list[InteractionRecord],
    classifier: Classifier = classify_sentiment,
    trust_external: bool = False,
) -> Graph:
    """Directed reply graph: one node per user, one edge per (non-self) record.

    A user's emotion is the label of their most recent authored record in
    input order (``initial_emotion`` keeps their first one); users who only
    receive replies stay neutral.
    """
    g = Graph(directed=True, provenance="real")
    users: list[str] = []
    known = set()
    for rec in records:
        for u in (rec.source_user, rec.target_user):
            if u not in known:
                known.add(u)
                users.append(u)
    for u in users:
        g.add_node(NodeState(id=u, emotion=Emotion.NEUTRAL, credibility=DEFAULT_CREDIBILITY, susceptibility=0.5))

    skipped = 0
    for rec in records:
        if trust_external and rec.external_label is not None:
            label = rec.external_label
        else:
            label = classifier(rec.text).label
        author = g.nodes[rec.source_user]
        if author.post_frequency == 0:
            author.initial_emotion = label
        author.post_frequency += 1
        author.emotion = label
        if rec.source_user == rec.target_user:
            skipped += 1
            log.warning("line %d: self-reply by %r skipped", rec.line, rec.source_user)
            continue
        g.add_edge(Edge(rec.source_user, rec.target_user, kind="reply", text_length=len(rec.text), emotion=label))

    g.meta = {
        "records": len(records),
        "self_replies_skipped": skipped,
        "labels": "external" if trust_external else "lexicon",
        # no timestamp column in the record schema; input order stands in for time
        "temporal_order": "input",
    }
    return g
