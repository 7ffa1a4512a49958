"""Corpus persistence, deduplication, and Zipf-region partitioning.

On disk a dataset is newline-delimited JSON: a header object carrying the
format version, grammar hash, and sampling metadata, followed by one record
object per line with fields ``trace``, ``text``, ``spans``, ``origin``, and
``freq``. The format is streamable and appendable; reading it back is a
lossless round-trip.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

from .engine import Production, Trace
from .errors import DatasetError

FORMAT_NAME = "gengrade-dataset"
FORMAT_VERSION = 1


class GrammarHashMismatch(UserWarning):
    """Dataset was generated under a different grammar than supplied."""


@dataclass(frozen=True)
class DatasetRecord:
    trace: Trace
    production: Production
    origin: str = "simulated"  # simulated | real
    freq: int = 1


@dataclass
class Dataset:
    records: list[DatasetRecord]
    grammar_hash: str = ""
    policy_metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def texts(self) -> list[str]:
        return [r.production.text for r in self.records]


def write_dataset(ds: Dataset, path) -> None:
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "grammar_hash": ds.grammar_hash,
        "policy": ds.policy_metadata,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for record in ds.records:
            obj = {
                "trace": [[name, value] for name, value in record.trace],
                "text": record.production.text,
                "spans": [[s, e] for s, e in record.production.spans],
                "origin": record.origin,
                "freq": record.freq,
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def read_dataset(path, expected_grammar_hash: str | None = None) -> Dataset:
    """Load a dataset file; warns when the grammar hash does not match."""
    records = []
    header = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: malformed record on line {lineno}: {exc.msg}") from exc
            if lineno == 1:
                if not isinstance(obj, dict) or obj.get("format") != FORMAT_NAME:
                    raise DatasetError(f"{path}: line 1 is not a {FORMAT_NAME} header")
                header = obj
                continue
            try:
                record = DatasetRecord(
                    trace=[(str(n), str(v)) for n, v in obj["trace"]],
                    production=Production(
                        text=obj["text"],
                        spans=tuple((int(s), int(e)) for s, e in obj["spans"]),
                    ),
                    origin=obj["origin"],
                    freq=int(obj["freq"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"{path}: malformed record on line {lineno}: {exc}") from exc
            if record.freq < 1:
                raise DatasetError(f"{path}: nonpositive freq on line {lineno}")
            records.append(record)
    if header is None:
        raise DatasetError(f"{path}: empty dataset file (missing header line)")
    grammar_hash = header.get("grammar_hash", "")
    if expected_grammar_hash is not None and grammar_hash != expected_grammar_hash:
        warnings.warn(
            f"{path}: dataset grammar hash {grammar_hash[:12]}... does not match "
            f"the supplied grammar ({expected_grammar_hash[:12]}...)",
            GrammarHashMismatch,
            stacklevel=2,
        )
    return Dataset(records=records, grammar_hash=grammar_hash, policy_metadata=header.get("policy", {}))


# ---------------------------------------------------------------------------
# Frequency structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZipfPartition:
    """Head/body/tail split of a corpus by production-text frequency.

    Head: the k most frequent texts. Tail: texts occurring once or twice.
    Body: everything else. Head wins when a text qualifies for both.
    """

    head: frozenset[str]
    body: frozenset[str]
    tail: frozenset[str]
    k: int

    def region_of(self, text: str) -> str:
        if text in self.head:
            return "head"
        if text in self.tail:
            return "tail"
        if text in self.body:
            return "body"
        raise KeyError(f"text not covered by partition: {text!r}")


def text_frequencies(ds: Dataset) -> dict[str, int]:
    """Occurrence counts keyed on production text (freq weights included)."""
    freqs: dict[str, int] = {}
    for record in ds.records:
        text = record.production.text
        freqs[text] = freqs.get(text, 0) + record.freq
    return freqs


def partition_zipf(freqs: dict[str, int], k: int) -> ZipfPartition:
    if k < 0:
        raise DatasetError(f"head size k must be >= 0, got {k}")
    ordered = sorted(freqs.items(), key=lambda kv: -kv[1])
    # Stable ordering: sorted() keeps insertion (first-occurrence) order on ties.
    head = frozenset(text for text, _ in ordered[:k])
    tail = frozenset(
        text for text, count in freqs.items() if count <= 2 and text not in head
    )
    body = frozenset(text for text in freqs if text not in head and text not in tail)
    return ZipfPartition(head=head, body=body, tail=tail, k=k)


def dedup_stats(ds: Dataset) -> tuple[int, int, int]:
    """(distinct texts, max frequency, singleton count) of a dataset."""
    if not ds.records:
        raise DatasetError("dedup_stats: empty dataset")
    freqs = text_frequencies(ds)
    counts = list(freqs.values())
    return len(freqs), max(counts), sum(1 for c in counts if c == 1)
