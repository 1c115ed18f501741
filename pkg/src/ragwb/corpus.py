"""Thesis corpus parsing, ingestion ledger, and dataset statistics.

The corpus file is a single JSON object keyed by document URI; each value
carries seven metadata fields plus the full extracted text. Ingestion is
tracked through a small pending/processed/failed ledger so interrupted
runs can resume. Live fetching and PDF extraction are deliberately behind
a pluggable interface; everything here operates on pre-extracted text.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping, Protocol

from .errors import UserInputError

logger = logging.getLogger(__name__)

# Field order matches the corpus file schema.
CORPUS_FIELDS = (
    "advisor",
    "author",
    "date",
    "description",
    "title",
    "program",
    "faculty",
    "raw_content",
)

_YEAR_RE = re.compile(r"\d{4}")


class CorpusError(UserInputError):
    """Malformed corpus file or invalid corpus operation."""


class LedgerError(UserInputError):
    """Invalid ledger operation or malformed ledger file."""


@dataclass
class ThesisRecord:
    """One corpus document: metadata plus full extracted text."""

    uri: str
    advisor: str = ""
    author: str = ""
    date: str = ""
    description: str = ""
    title: str = ""
    program: str = ""
    faculty: str = ""
    raw_content: str = ""

    def to_dict(self) -> dict[str, str]:
        return {name: getattr(self, name) for name in CORPUS_FIELDS}


@dataclass
class DatasetStats:
    """Corpus-level statistics: totals, uniques, and most-frequent values."""

    total_records: int = 0
    extracted_texts: int = 0
    unique_programs: int = 0
    most_frequent_program: tuple[str, int] = ("", 0)
    unique_advisors: int = 0
    most_frequent_advisor: tuple[str, int] = ("", 0)
    unique_authors: int = 0
    most_frequent_author: tuple[str, int] = ("", 0)
    unique_years: int = 0
    most_frequent_year: tuple[str, int] = ("", 0)

    def to_dict(self) -> dict:
        return {
            "total_records": self.total_records,
            "extracted_texts": self.extracted_texts,
            "unique_programs": self.unique_programs,
            "most_frequent_program": list(self.most_frequent_program),
            "unique_advisors": self.unique_advisors,
            "most_frequent_advisor": list(self.most_frequent_advisor),
            "unique_authors": self.unique_authors,
            "most_frequent_author": list(self.most_frequent_author),
            "unique_years": self.unique_years,
            "most_frequent_year": list(self.most_frequent_year),
        }


def parse_corpus(
    data: bytes | str | BinaryIO,
    warnings: list[str] | None = None,
) -> dict[str, ThesisRecord]:
    """Parse a corpus file into a uri -> ThesisRecord mapping.

    Unknown extra fields are ignored; missing fields default to empty
    strings, with one message per defaulted field appended to *warnings*
    when a list is given. Malformed JSON and duplicate top-level URIs are
    rejected.
    """
    if hasattr(data, "read"):
        data = data.read()
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    else:
        text = data

    try:
        # object_pairs_hook keeps raw pairs so duplicate URIs are visible
        # (plain loads silently keeps the last one).
        parsed = json.loads(text, object_pairs_hook=lambda pairs: pairs)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise CorpusError(
            f"malformed corpus JSON at byte offset {offset}: {exc.msg}"
        ) from exc

    # the hook turns objects into pair lists; anything else is not an object
    if not isinstance(parsed, list) or not all(
        isinstance(p, tuple) and len(p) == 2 and isinstance(p[0], str)
        for p in parsed
    ):
        raise CorpusError("corpus file must contain a JSON object keyed by uri")

    records: dict[str, ThesisRecord] = {}
    for uri, value in parsed:
        if uri in records:
            raise CorpusError(f"duplicate uri in corpus file: {uri!r}")
        if not uri:
            raise CorpusError("empty uri key in corpus file")
        if isinstance(value, list):  # nested object came back as pairs
            value = dict(value)
        if not isinstance(value, dict):
            raise CorpusError(f"entry for uri {uri!r} is not an object")
        kwargs = {}
        for name in CORPUS_FIELDS:
            if name in value:
                field_value = value[name]
                if not isinstance(field_value, str):
                    raise CorpusError(
                        f"field {name!r} of uri {uri!r} is not a string"
                    )
                kwargs[name] = field_value
            else:
                kwargs[name] = ""
                if warnings is not None:
                    warnings.append(f"{uri}: missing field {name!r}")
        records[uri] = ThesisRecord(uri=uri, **kwargs)

    return records


def load_corpus(path: str | Path, warnings: list[str] | None = None) -> dict[str, ThesisRecord]:
    """Read and parse a corpus file from disk."""
    return parse_corpus(Path(path).read_bytes(), warnings)


def serialize_corpus(records: Mapping[str, ThesisRecord]) -> str:
    """Render records back into the corpus file format.

    parse -> serialize -> parse is a fixed point at field level.
    """
    payload = {uri: record.to_dict() for uri, record in records.items()}
    return json.dumps(payload, ensure_ascii=False, indent=2) + "\n"


# --- ingestion ledger ------------------------------------------------------

PENDING = "pending"
PROCESSED = "processed"
FAILED = "failed"
_STATUSES = (PENDING, PROCESSED, FAILED)


@dataclass
class LedgerEntry:
    uri: str
    status: str = PENDING
    attempts: int = 0
    last_error: str | None = None


class Ledger:
    """Tracks per-URI ingestion status with a resumable on-disk form.

    Allowed transitions: pending -> processed, pending -> failed, and
    failed -> pending via an explicit retry. Attempts count moves out of
    pending and never decrease.
    """

    def __init__(self) -> None:
        self._entries: dict[str, LedgerEntry] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, uri: str) -> bool:
        return uri in self._entries

    def entry(self, uri: str) -> LedgerEntry:
        try:
            return self._entries[uri]
        except KeyError:
            raise LedgerError(f"unknown uri in ledger: {uri!r}") from None

    def entries(self) -> list[LedgerEntry]:
        return list(self._entries.values())

    def enqueue(self, uri: str) -> LedgerEntry:
        """Add *uri* as pending. Re-enqueueing an existing uri is an error."""
        if "\t" in uri or "\n" in uri:
            raise LedgerError(f"uri contains tab/newline: {uri!r}")
        if uri in self._entries:
            raise LedgerError(f"uri already enqueued: {uri!r}")
        entry = LedgerEntry(uri=uri)
        self._entries[uri] = entry
        return entry

    def advance(self, uri: str, outcome: str, error: str | None = None) -> LedgerEntry:
        """Move a pending entry to processed or failed, counting the attempt."""
        if outcome not in (PROCESSED, FAILED):
            raise LedgerError(f"invalid outcome: {outcome!r}")
        entry = self.entry(uri)
        if entry.status != PENDING:
            raise LedgerError(
                f"illegal transition {entry.status} -> {outcome} for uri {uri!r}"
            )
        entry.status = outcome
        entry.attempts += 1
        entry.last_error = error if outcome == FAILED else None
        return entry

    def retry(self, uri: str) -> LedgerEntry:
        """Re-enqueue a failed entry as pending."""
        entry = self.entry(uri)
        if entry.status != FAILED:
            raise LedgerError(
                f"illegal transition {entry.status} -> {PENDING} for uri {uri!r}"
            )
        entry.status = PENDING
        return entry

    def counts(self) -> dict[str, int]:
        out = {status: 0 for status in _STATUSES}
        for entry in self._entries.values():
            out[entry.status] += 1
        return out

    def pending_uris(self) -> list[str]:
        return [e.uri for e in self._entries.values() if e.status == PENDING]

    def save(self, path: str | Path) -> None:
        """Write tab-separated ``uri<TAB>status<TAB>attempts`` lines."""
        lines = [
            f"{e.uri}\t{e.status}\t{e.attempts}\n" for e in self._entries.values()
        ]
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Ledger":
        ledger = cls()
        for lineno, line in enumerate(
            Path(path).read_text(encoding="utf-8").splitlines(), start=1
        ):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise LedgerError(f"{path}:{lineno}: expected 3 tab-separated fields")
            uri, status, attempts = parts
            if status not in _STATUSES:
                raise LedgerError(f"{path}:{lineno}: unknown status {status!r}")
            try:
                n = int(attempts)
            except ValueError:
                raise LedgerError(f"{path}:{lineno}: bad attempts count") from None
            if n < 0:
                raise LedgerError(f"{path}:{lineno}: negative attempts count")
            if uri in ledger._entries:
                raise LedgerError(f"{path}:{lineno}: duplicate uri {uri!r}")
            ledger._entries[uri] = LedgerEntry(uri=uri, status=status, attempts=n)
        return ledger


class DocumentFetcher(Protocol):
    """Pluggable content source; the production scraper lives elsewhere."""

    def fetch(self, uri: str) -> tuple[Mapping[str, str], str]:
        """Return (metadata fields, extracted text) for *uri*."""
        ...


def ingest_document(
    corpus: dict[str, ThesisRecord],
    ledger: Ledger,
    uri: str,
    metadata: Mapping[str, str],
    extracted_text: str | bytes,
) -> ThesisRecord:
    """Append a document to the corpus and mark its ledger entry processed.

    The uri is enqueued automatically when the ledger does not know it
    yet. Bytes input must be valid UTF-8.
    """
    if uri in corpus:
        raise CorpusError(f"duplicate uri: {uri!r}")
    if isinstance(extracted_text, bytes):
        try:
            extracted_text = extracted_text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusError(f"extracted text for {uri!r} is not valid UTF-8") from exc
    known = {name: str(metadata.get(name, "")) for name in CORPUS_FIELDS if name != "raw_content"}
    record = ThesisRecord(uri=uri, raw_content=extracted_text, **known)
    if uri not in ledger:
        ledger.enqueue(uri)
    ledger.advance(uri, PROCESSED)
    corpus[uri] = record
    return record


def process_pending(
    corpus: dict[str, ThesisRecord],
    ledger: Ledger,
    fetcher: DocumentFetcher,
) -> dict[str, int]:
    """Drain pending ledger entries through *fetcher*, recording failures."""
    done = 0
    failed = 0
    for uri in ledger.pending_uris():
        try:
            metadata, text = fetcher.fetch(uri)
            ingest_document(corpus, ledger, uri, metadata, text)
            done += 1
        except Exception as exc:
            ledger.advance(uri, FAILED, error=str(exc))
            failed += 1
            logger.warning("ingestion failed for %s: %s", uri, exc)
    return {"processed": done, "failed": failed}


# --- statistics ------------------------------------------------------------

def year_of(date: str) -> str:
    """First run of four digits in a date string, else the whole string."""
    match = _YEAR_RE.search(date)
    return match.group(0) if match else date


def _most_frequent(counts: Counter) -> tuple[str, int]:
    """Highest count; ties broken by smallest value in code-point order."""
    if not counts:
        return ("", 0)
    top = max(counts.values())
    return (min(v for v, c in counts.items() if c == top), top)


def compute_stats(
    corpus: Mapping[str, ThesisRecord] | Iterable[ThesisRecord],
) -> DatasetStats:
    """Compute corpus statistics; order of records does not matter."""
    if isinstance(corpus, Mapping):
        records = list(corpus.values())
    else:
        records = list(corpus)

    programs = Counter(r.program for r in records)
    advisors = Counter(r.advisor for r in records)
    authors = Counter(r.author for r in records)
    years = Counter(year_of(r.date) for r in records)

    return DatasetStats(
        total_records=len(records),
        extracted_texts=sum(1 for r in records if r.raw_content != ""),
        unique_programs=len(programs),
        most_frequent_program=_most_frequent(programs),
        unique_advisors=len(advisors),
        most_frequent_advisor=_most_frequent(advisors),
        unique_authors=len(authors),
        most_frequent_author=_most_frequent(authors),
        unique_years=len(years),
        most_frequent_year=_most_frequent(years),
    )


def format_stats_table(stats: DatasetStats) -> str:
    """Render statistics as the two-column metric/value table."""
    rows = [
        ("Total records", str(stats.total_records)),
        ("Extracted texts", str(stats.extracted_texts)),
        ("Unique programs", str(stats.unique_programs)),
        ("Most frequent program", _freq_cell(stats.most_frequent_program)),
        ("Unique advisors", str(stats.unique_advisors)),
        ("Most frequent advisor", _freq_cell(stats.most_frequent_advisor)),
        ("Unique authors", str(stats.unique_authors)),
        ("Most frequent author", _freq_cell(stats.most_frequent_author)),
        ("Unique years", str(stats.unique_years)),
        ("Most frequent year", _freq_cell(stats.most_frequent_year)),
    ]
    width = max(len(name) for name, _ in rows)
    lines = [f"{'Metric'.ljust(width)}  Value"]
    lines += [f"{name.ljust(width)}  {value}" for name, value in rows]
    return "\n".join(lines) + "\n"


def _freq_cell(pair: tuple[str, int]) -> str:
    name, count = pair
    if not name and count == 0:
        return "- (0 records)"
    return f"{name} ({count} records)"
