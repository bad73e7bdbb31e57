"""Corpus parsing and keyword-based partitioning into SB and ELSI subsets.

The input corpus is assumed pre-filtered for synthetic biology; the ELSI
subset is identified by a keyword query over title + abstract, so the ELSI
set is always a subset of the SB set.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CorpusError

# Terms used to identify ELSI articles within a synthetic-biology corpus.
DEFAULT_ELSI_TERMS = [
    "ethical",
    "ethics",
    "bioethics*",
    "policy",
    "governance",
    "biosafety",
    "social issues",
    "social impact",
    "environmental impact",
    "environmental issues",
]

_TOKEN_RE = re.compile(r"[0-9a-z]+")


@dataclass
class ArticleRecord:
    """One article: identifier, title, abstract, and partition tags."""

    id: str
    title: str
    abstract_text: str
    tags: set[str] = field(default_factory=set)


@dataclass(frozen=True)
class QuerySpec:
    """Ordered keyword patterns matched against title + abstract.

    Each pattern is a lowercase token sequence; the final token may end in
    ``*`` to mark prefix matching. Non-wildcard tokens match whole words.
    """

    terms: tuple[str, ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("QuerySpec needs at least one term")
        for term in self.terms:
            if not term.strip():
                raise ValueError("empty pattern in QuerySpec")
            tokens = term.lower().split()
            for i, tok in enumerate(tokens):
                star = tok.count("*")
                if star > 1 or (star == 1 and not tok.endswith("*")):
                    raise ValueError(f"bad wildcard in pattern {term!r}")
                if star == 1 and i != len(tokens) - 1:
                    raise ValueError(
                        f"wildcard only allowed in last token of pattern {term!r}"
                    )

    @classmethod
    def default_elsi(cls) -> "QuerySpec":
        return cls(terms=tuple(DEFAULT_ELSI_TERMS))

    def compiled(self) -> list[tuple[tuple[str, ...], bool]]:
        """Patterns as (token tuple, last-token-is-prefix) pairs."""
        out = []
        for term in self.terms:
            tokens = tuple(term.lower().split())
            prefix = tokens[-1].endswith("*")
            if prefix:
                tokens = tokens[:-1] + (tokens[-1][:-1],)
            out.append((tokens, prefix))
        return out


@dataclass
class ParseReport:
    """Outcome of parsing one corpus file."""

    records: list[ArticleRecord]
    skipped_empty_abstract: list[int] = field(default_factory=list)
    duplicate_ids: list[tuple[int, str]] = field(default_factory=list)
    malformed_rows: list[tuple[int, str]] = field(default_factory=list)


def parse_corpus(path: str | Path, format: str = "jsonl") -> ParseReport:
    """Parse a JSONL or CSV corpus file into article records.

    Rows with empty abstracts are skipped and counted; duplicate ids keep
    the first occurrence. Raises CorpusError if the file is unreadable,
    the format is unknown, or no valid record remains.
    """
    path = Path(path)
    if format not in ("jsonl", "csv"):
        raise CorpusError(f"unsupported corpus format: {format}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc

    report = ParseReport(records=[])
    seen: set[str] = set()

    def admit(row_no: int, rid, title, abstract):
        if rid is None or not str(rid).strip():
            report.malformed_rows.append((row_no, "missing id"))
            return
        rid = str(rid)
        abstract = "" if abstract is None else str(abstract)
        if not abstract.strip():
            report.skipped_empty_abstract.append(row_no)
            return
        if rid in seen:
            report.duplicate_ids.append((row_no, rid))
            return
        seen.add(rid)
        report.records.append(
            ArticleRecord(id=rid, title=str(title or ""), abstract_text=abstract)
        )

    if format == "jsonl":
        for row_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                report.malformed_rows.append((row_no, f"bad JSON: {exc.msg}"))
                continue
            if not isinstance(obj, dict):
                report.malformed_rows.append((row_no, "row is not an object"))
                continue
            admit(row_no, obj.get("id"), obj.get("title"), obj.get("abstract"))
    else:
        reader = csv.DictReader(text.splitlines())
        if reader.fieldnames is None or not {"id", "abstract"} <= set(reader.fieldnames):
            raise CorpusError("CSV header must contain 'id' and 'abstract'")
        for row_no, row in enumerate(reader, start=2):
            admit(row_no, row.get("id"), row.get("title"), row.get("abstract"))

    if not report.records:
        raise CorpusError(f"no valid records in corpus file {path}")
    return report


def _text_tokens(record: ArticleRecord) -> list[str]:
    combined = f"{record.title} {record.abstract_text}".lower()
    return _TOKEN_RE.findall(combined)


def match_query(record: ArticleRecord, query: QuerySpec) -> bool:
    """True iff any query pattern matches the record's title + abstract.

    Non-wildcard patterns match as whole-word token sequences; a trailing
    ``*`` matches any token starting with the given stem. Case-insensitive.
    """
    tokens = _text_tokens(record)
    for pattern, prefix in query.compiled():
        plen = len(pattern)
        for start in range(len(tokens) - plen + 1):
            window = tokens[start : start + plen]
            if window[:-1] != list(pattern[:-1]):
                continue
            last_ok = (
                window[-1].startswith(pattern[-1]) if prefix else window[-1] == pattern[-1]
            )
            if last_ok:
                return True
    return False


def partition_corpus(
    records: list[ArticleRecord], elsi_query: QuerySpec
) -> tuple[list[ArticleRecord], list[ArticleRecord]]:
    """Tag every record SB and the query matches additionally ELSI.

    Returns (sb_set, elsi_set) with elsi_set a subset of sb_set.
    """
    if not records:
        raise CorpusError("cannot partition an empty record list")
    sb_set: list[ArticleRecord] = []
    elsi_set: list[ArticleRecord] = []
    for record in records:
        record.tags.add("SB")
        sb_set.append(record)
        if match_query(record, elsi_query):
            record.tags.add("ELSI")
            elsi_set.append(record)
    return sb_set, elsi_set


def write_partition_manifest(records: list[ArticleRecord], path: str | Path) -> None:
    """Write the partition manifest: one `{id, tags}` JSON object per line."""
    lines = [
        json.dumps({"id": r.id, "tags": sorted(r.tags)}, sort_keys=True)
        for r in records
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_corpus_jsonl(records: list[ArticleRecord], path: str | Path) -> None:
    """Serialize records back to the JSONL input schema."""
    lines = [
        json.dumps(
            {"id": r.id, "title": r.title, "abstract": r.abstract_text},
            sort_keys=True,
        )
        for r in records
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
