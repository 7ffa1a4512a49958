"""Feedback on real solutions via inferred traces.

The pipeline: parse a solution into a trace, replay the trace to get the
nearest in-simulator neighbour, compare. When the replay reproduces the
input byte-for-byte the parse is provably correct and its labels carry a
certificate; otherwise the neighbour, the token diff, and span-level
mismatch attribution still localize what the simulator missed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .engine import Production, Trace, replay
from .errors import GengradeError
from .grammar import Simulator
from .knn import EditScript, KEEP, INSERT, token_edit_distance, tokenize, tokenize_with_offsets
from .nap.decoding import parse
from .nap.model import InferenceModel


@dataclass(frozen=True)
class NeighbourResult:
    trace: Trace
    production: Production | None
    exact: bool
    distance: int
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


@dataclass(frozen=True)
class FeedbackReport:
    labels: frozenset[str]
    exact: bool
    neighbour_text: str
    distance: int
    highlights: list  # (span, label, node) on the neighbour text
    failure: str | None = None


@dataclass(frozen=True)
class NodeMismatchScore:
    node: str
    mismatches: int
    opportunities: int

    @property
    def score(self) -> float:
        return self.mismatches / self.opportunities if self.opportunities else 0.0


def extract_labels(sim: Simulator, trace: Trace) -> frozenset[str]:
    """Labels triggered by the trace's (node, value) steps."""
    labels = set()
    for node, value in trace:
        for rule in sim.label_rules:
            if rule.matches(node, value):
                labels.add(rule.label)
    return frozenset(labels)


def nearest_in_simulator(model: InferenceModel, sim: Simulator, y: str) -> NeighbourResult:
    """Greedy parse, then replay: the trace's own production is the
    nearest in-simulator neighbour; byte equality certifies the parse."""
    result = parse(model, sim, y, mode="greedy")
    if not result.ok:
        return NeighbourResult([], None, False, -1, failure=result.failure)
    production = result.production
    exact = production.text == y
    distance = 0 if exact else token_edit_distance(tokenize(y), tokenize(production.text))[0]
    return NeighbourResult(result.trace, production, exact, distance)


def highlight(sim: Simulator, trace: Trace, production: Production):
    """(span, label, node) for every labelled step, on the replay text."""
    check = replay(sim, trace)
    if check.text != production.text or check.spans != production.spans:
        raise GengradeError("highlight: production was not produced by this trace")
    out = []
    for step, (node, value) in enumerate(trace):
        for rule in sim.label_rules:
            if rule.matches(node, value):
                out.append((production.spans[step], rule.label, node))
    return out


def diff(y: str, neighbour: str) -> EditScript:
    """Token edit script rewriting the neighbour into the solution."""
    _, script = token_edit_distance(tokenize(neighbour), tokenize(y))
    return script


def feedback_report(model: InferenceModel, sim: Simulator, y: str) -> FeedbackReport:
    nb = nearest_in_simulator(model, sim, y)
    if not nb.ok:
        return FeedbackReport(frozenset(), False, "", -1, [], failure=nb.failure)
    return FeedbackReport(
        labels=extract_labels(sim, nb.trace),
        exact=nb.exact,
        neighbour_text=nb.production.text,
        distance=nb.distance,
        highlights=highlight(sim, nb.trace, nb.production),
    )


# ---------------------------------------------------------------------------
# Simulator-gap diagnosis
# ---------------------------------------------------------------------------


def _op_intervals(script: EditScript, neighbour_text: str):
    """Character interval in the neighbour for every non-keep edit op."""
    tokens = tokenize_with_offsets(neighbour_text)
    intervals = []
    src = 0
    for op in script.ops:
        if op.kind == KEEP:
            src += 1
        elif op.kind == INSERT:
            point = tokens[src][1] if src < len(tokens) else len(neighbour_text)
            intervals.append((point, point))
        else:  # delete / substitute consume one source token
            intervals.append((tokens[src][1], tokens[src][2]))
            src += 1
    return intervals


def _mismatched_steps(spans, interval):
    """Deepest trace steps whose span intersects the edit interval.

    A step is shadowed when another intersecting step's span nests inside
    its own (ties resolved to the later, deeper step), which keeps wide
    wrapper spans from soaking up every mismatch.
    """
    s, e = interval
    hits = []
    for step, (a, b) in enumerate(spans):
        if s == e:
            if a <= s <= b:
                hits.append(step)
        elif max(a, s) < min(b, e):
            hits.append(step)
    deepest = []
    for i in hits:
        ai, bi = spans[i]
        shadowed = False
        for j in hits:
            if i == j:
                continue
            aj, bj = spans[j]
            if ai <= aj and bj <= bi and ((aj, bj) != (ai, bi) or j > i):
                shadowed = True
                break
        if not shadowed:
            deepest.append(i)
    return deepest


def diagnose_misparses(model: InferenceModel, sim: Simulator, solutions: list[str]):
    """Rank decision nodes by how often their spans host parse mismatches.

    For each non-exact parse, token edit ops between the solution and its
    neighbour are attributed to the deepest trace spans they fall in; a
    node's score is (solutions where it was mismatched) / (solutions where
    it appeared at all). Returns NodeMismatchScores sorted by descending
    score, then opportunity count.
    """
    if not solutions:
        raise GengradeError("diagnose_misparses: empty solution list")
    mismatches: dict[str, int] = {}
    opportunities: dict[str, int] = {}
    for y in solutions:
        nb = nearest_in_simulator(model, sim, y)
        if not nb.ok:
            continue
        trace, production = nb.trace, nb.production
        for node in {name for name, _ in trace}:
            opportunities[node] = opportunities.get(node, 0) + 1
        if nb.exact:
            continue
        script = diff(y, production.text)
        bad_nodes = set()
        for interval in _op_intervals(script, production.text):
            for step in _mismatched_steps(production.spans, interval):
                bad_nodes.add(trace[step][0])
        for node in bad_nodes:
            mismatches[node] = mismatches.get(node, 0) + 1
    scores = [
        NodeMismatchScore(node, mismatches.get(node, 0), count)
        for node, count in opportunities.items()
    ]
    scores.sort(key=lambda sc: (-sc.score, -sc.opportunities, sc.node))
    return scores
