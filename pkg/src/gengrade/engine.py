"""Simulator execution: sampling, replay, enumeration, and validation.

Generation is depth-first and left-to-right. The engine is written around
:class:`ExecutionCursor`, a resumable executor that pauses at every decision
node and reports the guard-admissible values there. Sampling, replay,
exhaustive enumeration, probability scoring, and grammar-constrained neural
decoding are all drivers of the same cursor, which is what makes the
round-trip guarantees (simulate -> replay bit-exact) structural rather than
coincidental.

Spans: each trace step records the half-open character range of the final
text produced by that step's subtree. Transforms remap span endpoints
monotonically where the transform preserves character identity (indent,
join, case mapping) and collapse inner spans to the whole transformed
region where it does not (int_add).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DeadContextError,
    DepthExceededError,
    InvalidTraceError,
    SpaceLimitError,
    TransformError,
)
from .grammar import Lit, Ref, Simulator, Xf

TraceStep = tuple[str, str]
Trace = list[TraceStep]


@dataclass(frozen=True)
class Production:
    """Final terminal text plus per-step span attribution."""

    text: str
    spans: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class Admissible:
    """One selectable value at a decision point.

    ``weight`` is the summed author weight of the guard-satisfied rules
    declaring this value; ``rule_index`` is the first such rule (document
    order), which is the rule that expansion uses.
    """

    value: str
    weight: float
    rule_index: int


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


def _apply_case(name: str, text: str, marks):
    out = {"upper": text.upper(), "lower": text.lower(), "capitalize": text.capitalize()}[name]
    if len(out) == len(text):
        return out, marks
    # Unicode case folding changed the length; give every inner step the
    # whole region rather than guessing offsets.
    return out, [(step, 0, len(out)) for step, _, _ in marks]


def _apply_indent(n: int, text: str, marks):
    prefix = " " * n
    out = []
    start_map = [0] * (len(text) + 1)
    end_map = [0] * (len(text) + 1)
    pos = 0
    for i, ch in enumerate(text):
        end_map[i] = pos
        if (i == 0 or text[i - 1] == "\n") and ch != "\n":
            out.append(prefix)
            pos += n
        start_map[i] = pos
        out.append(ch)
        pos += 1
    start_map[len(text)] = pos
    end_map[len(text)] = pos
    new_marks = [(step, start_map[s], end_map[e]) for step, s, e in marks]
    return "".join(out), new_marks


def _apply_int_add(k: int, text: str, marks):
    try:
        value = int(text.strip())
    except ValueError:
        raise TransformError(f"int_add applied to non-integer text {text!r}") from None
    out = str(value + k)
    return out, [(step, 0, len(out)) for step, _, _ in marks]


# ---------------------------------------------------------------------------
# Execution cursor
# ---------------------------------------------------------------------------


class _Frame:
    """One level of template expansion awaiting completion."""

    __slots__ = ("parts", "pos", "chunks", "length", "marks", "owner_step", "xf", "boundaries")

    def __init__(self, parts, owner_step=None, xf=None):
        self.parts = parts
        self.pos = 0
        self.chunks: list[str] = []
        self.length = 0
        self.marks: list[tuple[int, int, int]] = []
        self.owner_step = owner_step  # trace step owning this expansion, if any
        self.xf = xf  # (name, arg) for transform frames
        self.boundaries: list[int] = []  # part-end offsets, for join

    def clone(self) -> "_Frame":
        frame = _Frame(self.parts, self.owner_step, self.xf)
        frame.pos = self.pos
        frame.chunks = list(self.chunks)
        frame.length = self.length
        frame.marks = list(self.marks)
        frame.boundaries = list(self.boundaries)
        return frame


class ExecutionCursor:
    """Step-by-step simulator execution.

    ``next_decision()`` runs until the next decision node (returning its
    name and admissible values) or completion (returning None). The driver
    then calls ``choose(value)``. ``iid_log_prob`` accumulates the log
    probability of the chosen path under the author-specified distribution,
    whatever policy the driver actually used to pick values.
    """

    def __init__(self, sim: Simulator, build_text: bool = True):
        self.sim = sim
        self.build_text = build_text
        self.trace: Trace = []
        self.chosen: dict[str, str] = {}
        self.iid_log_prob = 0.0
        self.finished = False
        self.production: Production | None = None
        self._stack: list[_Frame] = [_Frame((Ref(sim.start),))]
        self._depth = 0
        self._pending: tuple[str, list[Admissible]] | None = None

    def clone(self) -> "ExecutionCursor":
        other = ExecutionCursor.__new__(ExecutionCursor)
        other.sim = self.sim
        other.build_text = self.build_text
        other.trace = list(self.trace)
        other.chosen = dict(self.chosen)
        other.iid_log_prob = self.iid_log_prob
        other.finished = self.finished
        other.production = self.production
        other._stack = [f.clone() for f in self._stack]
        other._depth = self._depth
        other._pending = self._pending
        return other

    # -- driving ------------------------------------------------------------

    def next_decision(self) -> tuple[str, list[Admissible]] | None:
        """Advance to the next decision node; None when generation is done."""
        if self._pending is not None:
            return self._pending
        while self._stack:
            frame = self._stack[-1]
            if frame.pos >= len(frame.parts):
                self._pop_frame()
                continue
            part = frame.parts[frame.pos]
            frame.pos += 1
            if isinstance(part, Lit):
                if self.build_text:
                    frame.chunks.append(part.text)
                    frame.length += len(part.text)
                    frame.boundaries.append(frame.length)
            elif isinstance(part, Xf):
                self._stack.append(_Frame(part.parts, xf=(part.name, part.arg)))
            else:  # Ref
                admissible = self._admissible(part.node)
                if not admissible:
                    raise DeadContextError(part.node, list(self.trace))
                self._pending = (part.node, admissible)
                return self._pending
        self.finished = True
        return None

    def choose(self, value: str) -> None:
        """Commit a value for the pending decision node and keep expanding."""
        assert self._pending is not None, "choose() without a pending decision"
        node, admissible = self._pending
        match = next((a for a in admissible if a.value == value), None)
        if match is None:
            raise InvalidTraceError(
                len(self.trace),
                f"value {value!r} not admissible at node {node!r} "
                f"(admissible: {[a.value for a in admissible]})",
            )
        if self._depth >= self.sim.max_depth:
            raise DepthExceededError(self.sim.max_depth, node)
        total = sum(a.weight for a in admissible)
        self.iid_log_prob += float(np.log(match.weight / total))
        step_index = len(self.trace)
        self.trace.append((node, value))
        self.chosen[node] = value
        rule = self.sim.nodes[node].rules[match.rule_index]
        self._stack.append(_Frame(rule.template, owner_step=step_index))
        self._depth += 1
        self._pending = None

    def expect(self, node: str) -> list[Admissible]:
        """Replay helper: assert the pending decision is at ``node``."""
        pending = self.next_decision()
        if pending is None:
            raise InvalidTraceError(len(self.trace), f"trace too long: generation already complete, extra step at node {node!r}")
        got, admissible = pending
        if got != node:
            raise InvalidTraceError(
                len(self.trace), f"expected node {got!r} at this step, trace has {node!r}"
            )
        return admissible

    # -- internals ----------------------------------------------------------

    def _admissible(self, node: str) -> list[Admissible]:
        spec = self.sim.nodes[node]
        merged: dict[str, Admissible] = {}
        for i, rule in enumerate(spec.rules):
            if not rule.guard.evaluate(self.chosen):
                continue
            if rule.value in merged:
                prev = merged[rule.value]
                merged[rule.value] = Admissible(rule.value, prev.weight + rule.weight, prev.rule_index)
            else:
                merged[rule.value] = Admissible(rule.value, rule.weight, i)
        return list(merged.values())

    def _pop_frame(self) -> None:
        frame = self._stack.pop()
        if frame.owner_step is not None:
            self._depth -= 1
        if not self.build_text:
            if not self._stack:
                self._finish("", [])
            return
        text = "".join(frame.chunks)
        marks = frame.marks
        if frame.xf is not None:
            name, arg = frame.xf
            if name in ("upper", "lower", "capitalize"):
                text, marks = _apply_case(name, text, marks)
            elif name == "indent":
                text, marks = _apply_indent(arg, text, marks)
            elif name == "int_add":
                text, marks = _apply_int_add(arg, text, marks)
            elif name == "join":
                text, marks = self._apply_join(arg, frame)
        if frame.owner_step is not None:
            marks = marks + [(frame.owner_step, 0, len(text))]
        if self._stack:
            parent = self._stack[-1]
            offset = parent.length
            parent.chunks.append(text)
            parent.length += len(text)
            parent.boundaries.append(parent.length)
            parent.marks.extend((step, s + offset, e + offset) for step, s, e in marks)
        else:
            self._finish(text, marks)

    def _apply_join(self, sep: str, frame: _Frame):
        pieces = []
        piece_starts = []
        prev = 0
        new_pos = 0
        boundaries = frame.boundaries
        text = "".join(frame.chunks)
        for end in boundaries:
            piece_starts.append((prev, new_pos))
            pieces.append(text[prev:end])
            new_pos += (end - prev) + len(sep)
            prev = end
        joined = sep.join(pieces)
        # Remap marks: every mark lies within a single part, so a single
        # shift per part suffices.
        new_marks = []
        for step, s, e in frame.marks:
            shift = 0
            for old_start, new_start in piece_starts:
                if s >= old_start:
                    shift = new_start - old_start
            new_marks.append((step, s + shift, e + shift))
        return joined, new_marks

    def _finish(self, text: str, marks) -> None:
        spans = [(0, 0)] * len(self.trace)
        for step, s, e in marks:
            spans[step] = (s, e)
        self.production = Production(text=text, spans=tuple(spans))
        self.finished = True


# ---------------------------------------------------------------------------
# High-level operations
# ---------------------------------------------------------------------------


def simulate(
    sim: Simulator,
    seed: int | np.random.Generator,
    policy=None,
    counts: dict | None = None,
):
    """Run the generative model once: sample a trace and its production.

    ``policy`` is a :class:`gengrade.sampling.SamplerPolicy` (defaults to
    iid). ``counts`` is the adaptive policy's visit-count state, updated in
    place. Deterministic given (simulator, seed, policy, counts).
    """
    from .sampling import SamplerPolicy, choice_distribution

    policy = policy or SamplerPolicy.iid()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    cursor = ExecutionCursor(sim)
    while True:
        pending = cursor.next_decision()
        if pending is None:
            break
        node, admissible = pending
        probs = choice_distribution(node, admissible, policy, counts, depth=len(cursor.trace))
        idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
        idx = min(idx, len(admissible) - 1)
        value = admissible[idx].value
        if counts is not None and policy.kind == "adaptive":
            counts[(node, value)] = counts.get((node, value), 0) + 1
        cursor.choose(value)
    return list(cursor.trace), cursor.production


def replay(sim: Simulator, trace: Trace) -> Production:
    """Re-execute generation with recorded choices instead of sampling."""
    cursor = ExecutionCursor(sim)
    for node, value in trace:
        cursor.expect(node)
        cursor.choose(value)
    if cursor.next_decision() is not None:
        pending_node = cursor._pending[0]
        raise InvalidTraceError(
            len(trace), f"trace too short: node {pending_node!r} still undecided"
        )
    return cursor.production


def trace_prob(sim: Simulator, trace: Trace) -> float:
    """Probability of ``trace`` under the author-specified distribution."""
    cursor = ExecutionCursor(sim, build_text=False)
    for node, value in trace:
        cursor.expect(node)
        cursor.choose(value)
    if cursor.next_decision() is not None:
        pending_node = cursor._pending[0]
        raise InvalidTraceError(
            len(trace), f"trace too short: node {pending_node!r} still undecided"
        )
    return float(np.exp(cursor.iid_log_prob))


def enumerate_all(sim: Simulator, limit: int = 100_000):
    """Exhaustively enumerate (trace, probability, production) triples.

    Depth-first over every guard-satisfiable decision sequence. Raises
    :class:`SpaceLimitError` as soon as more than ``limit`` trajectories
    exist. Sorted by descending probability, ties broken by trace order.
    """
    results = []
    stack = [ExecutionCursor(sim)]
    while stack:
        cursor = stack.pop()
        pending = cursor.next_decision()
        if pending is None:
            results.append(
                (list(cursor.trace), float(np.exp(cursor.iid_log_prob)), cursor.production)
            )
            if len(results) > limit:
                raise SpaceLimitError(
                    f"trajectory space exceeds limit={limit}"
                )
            continue
        node, admissible = pending
        # Reversed so document-order values are explored first (LIFO stack).
        for adm in reversed(admissible):
            branch = cursor.clone() if adm is not admissible[0] else cursor
            branch.choose(adm.value)
            stack.append(branch)
    results.sort(key=lambda r: (-r[1], tuple(r[0])))
    return results


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    unreachable: list[str] = field(default_factory=list)
    dead_contexts: list[tuple[str, Trace]] = field(default_factory=list)
    depth_risks: list[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not (self.unreachable or self.dead_contexts or self.depth_risks)


def _skeleton(cursor: ExecutionCursor):
    """Hashable fingerprint of the remaining work (refs and transforms only)."""
    frames = []
    for frame in cursor._stack:
        rest = []
        for part in frame.parts[frame.pos:]:
            if isinstance(part, Lit):
                continue
            rest.append(part)
        frames.append(tuple(rest))
    return tuple(frames)


def validate(sim: Simulator) -> ValidationReport:
    """Static analysis by abstract traversal of the decision tree.

    Explores every (pending-node, guard-relevant context) pair exactly once:
    contexts are projected onto the set of nodes any guard mentions, which
    keeps the traversal small even when the concrete trajectory space is
    huge. Reports unreachable nodes, dead contexts (with a witness partial
    trace), and recursion-depth trips.
    """
    relevant: set[str] = set()
    for spec in sim.nodes.values():
        for rule in spec.rules:
            relevant |= rule.guard.referenced_nodes()

    report = ValidationReport()
    visited_nodes: set[str] = set()
    seen: set = set()
    stack = [ExecutionCursor(sim, build_text=False)]
    while stack:
        cursor = stack.pop()
        try:
            pending = cursor.next_decision()
        except DeadContextError as exc:
            report.dead_contexts.append((exc.node, exc.partial_trace))
            continue
        if pending is None:
            continue
        node, admissible = pending
        context = frozenset(
            (name, value) for name, value in cursor.chosen.items() if name in relevant
        )
        key = (node, _skeleton(cursor), context)
        if key in seen:
            continue
        seen.add(key)
        visited_nodes.add(node)
        for adm in reversed(admissible):
            branch = cursor.clone() if adm is not admissible[0] else cursor
            try:
                branch.choose(adm.value)
            except DepthExceededError:
                if node not in report.depth_risks:
                    report.depth_risks.append(node)
                continue
            stack.append(branch)

    report.unreachable = [name for name in sim.nodes if name not in visited_nodes]
    return report
