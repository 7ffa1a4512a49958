"""Token-level Levenshtein machinery and the nearest-neighbour parser.

Tokens are whitespace-separated words with punctuation and brackets split
into single-character tokens, so identifiers and numbers move atomically.
The nearest-neighbour parser is a deliberate brute force: a linear scan of
the whole dataset, returning the trace of the closest production.
"""

from __future__ import annotations

from dataclasses import dataclass

from .datasets import Dataset
from .errors import DatasetError

_WORD_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_")


def tokenize(text: str) -> list[str]:
    """Split into word and single-character punctuation tokens."""
    return [token for token, _, _ in tokenize_with_offsets(text)]


def tokenize_with_offsets(text: str) -> list[tuple[str, int, int]]:
    """Tokens with their (start, end) character offsets in ``text``."""
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _WORD_CHARS:
            j = i + 1
            while j < n and text[j] in _WORD_CHARS:
                j += 1
            tokens.append((text[i:j], i, j))
            i = j
        else:
            tokens.append((ch, i, i + 1))
            i += 1
    return tokens


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)


# ---------------------------------------------------------------------------
# Edit scripts
# ---------------------------------------------------------------------------

KEEP = "keep"
INSERT = "insert"
DELETE = "delete"
SUBSTITUTE = "substitute"


@dataclass(frozen=True)
class EditOp:
    kind: str
    token: str | None = None  # inserted/deleted/kept token
    new: str | None = None  # replacement token for substitute


@dataclass(frozen=True)
class EditScript:
    """Unit-cost edit sequence rewriting a source token list into a target."""

    ops: tuple[EditOp, ...]

    @property
    def cost(self) -> int:
        return sum(1 for op in self.ops if op.kind != KEEP)

    def apply(self, source: list[str]) -> list[str]:
        out = []
        i = 0
        for op in self.ops:
            if op.kind == KEEP:
                out.append(source[i])
                i += 1
            elif op.kind == DELETE:
                i += 1
            elif op.kind == SUBSTITUTE:
                out.append(op.new)
                i += 1
            else:
                out.append(op.token)
        if i != len(source):
            raise ValueError("edit script does not consume the whole source")
        return out


def token_edit_distance(a: list[str], b: list[str]) -> tuple[int, EditScript]:
    """Levenshtein distance from a to b with a reconstructing script.

    Standard dynamic program over unit costs; on ties the backtrace prefers
    keep/substitute, then delete, then insert, which yields a canonical
    script for testing.
    """
    n, m = len(a), len(b)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row = dist[i]
        prev = dist[i - 1]
        ai = a[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (ai != b[j - 1])
            dele = prev[j] + 1
            ins = row[j - 1] + 1
            row[j] = min(sub, dele, ins)

    ops: list[EditOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (a[i - 1] != b[j - 1]):
            if a[i - 1] == b[j - 1]:
                ops.append(EditOp(KEEP, token=a[i - 1]))
            else:
                ops.append(EditOp(SUBSTITUTE, token=a[i - 1], new=b[j - 1]))
            i -= 1
            j -= 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            ops.append(EditOp(DELETE, token=a[i - 1]))
            i -= 1
        else:
            ops.append(EditOp(INSERT, token=b[j - 1]))
            j -= 1
    ops.reverse()
    return dist[n][m], EditScript(ops=tuple(ops))


# ---------------------------------------------------------------------------
# Nearest-neighbour parsing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Neighbour:
    trace: list
    text: str
    distance: int
    index: int  # dataset position, the tie-break key


def knn_parse(ds: Dataset, y: str, k: int = 1) -> list[Neighbour]:
    """Linear scan for the k closest productions to ``y``.

    Returns neighbours sorted by distance with ties broken by dataset
    order; the first entry's trace is the kNN trajectory prediction.
    """
    if not ds.records:
        raise DatasetError("knn_parse: empty dataset")
    if k < 1:
        raise DatasetError(f"neighbour count k must be >= 1, got {k}")
    query = tokenize(y)
    scored = []
    for index, record in enumerate(ds.records):
        distance, _ = token_edit_distance(query, tokenize(record.production.text))
        scored.append(Neighbour(record.trace, record.production.text, distance, index))
    scored.sort(key=lambda nb: (nb.distance, nb.index))
    return scored[:k]


def edit_distance_cdf(distances: list[int]) -> list[tuple[int, float]]:
    """Empirical CDF points (distance, cumulative fraction <= distance)."""
    if not distances:
        raise DatasetError("edit_distance_cdf: empty input")
    total = len(distances)
    counts: dict[int, int] = {}
    for d in distances:
        counts[d] = counts.get(d, 0) + 1
    curve = []
    cumulative = 0
    for d in sorted(counts):
        cumulative += counts[d]
        curve.append((d, cumulative / total))
    return curve
