"""Decision-grammar definition and loading.

A simulator is a set of named decision nodes. Each node carries an ordered
list of production rules; a rule pairs a choice value with a guard over the
decisions made so far, a positive weight, and a text template. Templates mix
literal strings, references to other decision nodes, and registered
transforms applied to sub-templates.

Grammar documents are JSON::

    {
      "start": "Root",
      "max_depth": 64,
      "nodes": {
        "Root": [
          {"value": "v", "weight": 3, "guard": {...}, "template": [
            {"lit": "text "}, {"ref": "Child"},
            {"xf": "upper", "parts": [{"lit": "liftoff"}]}
          ]}
        ]
      },
      "labels": [{"node": "Root", "value": "v", "label": "some feedback"}]
    }

Guards: ``{"eq": [name, value]}``, ``{"in": [name, [values...]]}``,
``{"not": g}``, ``{"all": [g...]}``, ``{"any": [g...]}``, or ``null`` for
always-true. Referencing a node that has not been visited yet yields a
dedicated "unset" result: equality and membership are false, so their
negations are true.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import GrammarError

# ---------------------------------------------------------------------------
# Guards
# ---------------------------------------------------------------------------

_UNSET = object()


@dataclass(frozen=True)
class Guard:
    """Predicate over the partial trace. ``op`` is one of
    true | eq | in | not | all | any."""

    op: str
    node: str | None = None
    values: tuple[str, ...] = ()
    children: tuple["Guard", ...] = ()

    def evaluate(self, chosen: dict) -> bool:
        if self.op == "true":
            return True
        if self.op == "eq":
            return chosen.get(self.node, _UNSET) == self.values[0]
        if self.op == "in":
            got = chosen.get(self.node, _UNSET)
            return got is not _UNSET and got in self.values
        if self.op == "not":
            return not self.children[0].evaluate(chosen)
        if self.op == "all":
            return all(g.evaluate(chosen) for g in self.children)
        if self.op == "any":
            return any(g.evaluate(chosen) for g in self.children)
        raise AssertionError(f"unknown guard op {self.op}")

    def referenced_nodes(self) -> set[str]:
        nodes = set()
        if self.node is not None:
            nodes.add(self.node)
        for child in self.children:
            nodes |= child.referenced_nodes()
        return nodes


TRUE_GUARD = Guard(op="true")


# ---------------------------------------------------------------------------
# Templates and transforms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    text: str


@dataclass(frozen=True)
class Ref:
    node: str


@dataclass(frozen=True)
class Xf:
    name: str
    arg: object
    parts: tuple


TemplatePart = Lit | Ref | Xf

# Registered transform names mapped to an arg validator. Transforms that
# take no argument must be given none.
_TRANSFORM_ARG_CHECKS = {
    "indent": lambda a: isinstance(a, int) and a >= 0,
    "join": lambda a: isinstance(a, str),
    "int_add": lambda a: isinstance(a, int),
    "upper": lambda a: a is None,
    "lower": lambda a: a is None,
    "capitalize": lambda a: a is None,
}

TRANSFORM_NAMES = frozenset(_TRANSFORM_ARG_CHECKS)


@dataclass(frozen=True)
class ProductionRule:
    value: str
    guard: Guard
    weight: float
    template: tuple[TemplatePart, ...]


@dataclass(frozen=True)
class DecisionSpec:
    """A decision node: its name, rule list, and the derived value domain."""

    name: str
    rules: tuple[ProductionRule, ...]
    domain: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.domain:
            seen = []
            for rule in self.rules:
                if rule.value not in seen:
                    seen.append(rule.value)
            object.__setattr__(self, "domain", tuple(seen))


@dataclass(frozen=True)
class LabelRule:
    node: str
    value: str  # exact value or "*" for any value of the node
    label: str

    def matches(self, node: str, value: str) -> bool:
        return node == self.node and (self.value == "*" or self.value == value)


@dataclass(frozen=True)
class Simulator:
    nodes: dict[str, DecisionSpec]
    start: str
    max_depth: int
    label_rules: tuple[LabelRule, ...]
    grammar_hash: str

    @property
    def node_order(self) -> tuple[str, ...]:
        return tuple(self.nodes)

    def label_vocabulary(self) -> list[str]:
        seen = []
        for rule in self.label_rules:
            if rule.label not in seen:
                seen.append(rule.label)
        return seen


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _check_duplicate_keys(pairs):
    seen = set()
    for key, _ in pairs:
        if key in seen:
            raise GrammarError(f"duplicate node name: {key}")
        seen.add(key)
    return dict(pairs)


def _parse_guard(obj, where: str) -> Guard:
    if obj is None or obj is True:
        return TRUE_GUARD
    if not isinstance(obj, dict) or len(obj) != 1:
        raise GrammarError(f"malformed guard in {where}: {obj!r}")
    op, body = next(iter(obj.items()))
    if op == "eq":
        if not (isinstance(body, list) and len(body) == 2 and isinstance(body[0], str)):
            raise GrammarError(f"malformed eq guard in {where}: {body!r}")
        return Guard(op="eq", node=body[0], values=(str(body[1]),))
    if op == "in":
        if not (
            isinstance(body, list)
            and len(body) == 2
            and isinstance(body[0], str)
            and isinstance(body[1], list)
        ):
            raise GrammarError(f"malformed in guard in {where}: {body!r}")
        return Guard(op="in", node=body[0], values=tuple(str(v) for v in body[1]))
    if op == "not":
        return Guard(op="not", children=(_parse_guard(body, where),))
    if op in ("all", "any"):
        if not isinstance(body, list):
            raise GrammarError(f"malformed {op} guard in {where}: {body!r}")
        return Guard(op=op, children=tuple(_parse_guard(g, where) for g in body))
    raise GrammarError(f"unknown guard operator {op!r} in {where}")


def _parse_template(parts, where: str) -> tuple[TemplatePart, ...]:
    if not isinstance(parts, list):
        raise GrammarError(f"template of {where} must be a list of parts")
    parsed = []
    for part in parts:
        if not isinstance(part, dict):
            raise GrammarError(f"malformed template part in {where}: {part!r}")
        if "lit" in part:
            parsed.append(Lit(str(part["lit"])))
        elif "ref" in part:
            parsed.append(Ref(str(part["ref"])))
        elif "xf" in part:
            name = part["xf"]
            if name not in TRANSFORM_NAMES:
                raise GrammarError(f"unknown transform: {name}")
            arg = part.get("arg")
            if not _TRANSFORM_ARG_CHECKS[name](arg):
                raise GrammarError(
                    f"bad argument {arg!r} for transform {name!r} in {where}"
                )
            inner = _parse_template(part.get("parts", []), where)
            parsed.append(Xf(name, arg, inner))
        else:
            raise GrammarError(f"malformed template part in {where}: {part!r}")
    return tuple(parsed)


def _template_refs(parts) -> set[str]:
    refs = set()
    for part in parts:
        if isinstance(part, Ref):
            refs.add(part.node)
        elif isinstance(part, Xf):
            refs |= _template_refs(part.parts)
    return refs


def grammar_digest(doc: dict) -> str:
    """Stable content hash of a parsed grammar document."""
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_simulator(source: str | bytes | dict) -> Simulator:
    """Parse and structurally validate a grammar document.

    Accepts JSON text or an already-parsed document. Raises
    :class:`GrammarError` with line/column information for syntax errors and
    a descriptive message for structural ones. Deterministic: the same
    source always yields an identical simulator.
    """
    if isinstance(source, (str, bytes)):
        try:
            doc = json.loads(source, object_pairs_hook=_check_duplicate_keys)
        except json.JSONDecodeError as exc:
            raise GrammarError(f"grammar syntax error: {exc.msg}", exc.lineno, exc.colno) from exc
    else:
        doc = source

    if not isinstance(doc, dict):
        raise GrammarError("grammar document must be a JSON object")
    for key in ("start", "nodes"):
        if key not in doc:
            raise GrammarError(f"grammar document missing required key {key!r}")

    max_depth = doc.get("max_depth", 64)
    if not isinstance(max_depth, int) or max_depth < 1:
        raise GrammarError(f"max_depth must be a positive integer, got {max_depth!r}")

    raw_nodes = doc["nodes"]
    if not isinstance(raw_nodes, dict) or not raw_nodes:
        raise GrammarError("'nodes' must be a non-empty object")

    nodes: dict[str, DecisionSpec] = {}
    for name, raw_rules in raw_nodes.items():
        if not isinstance(raw_rules, list) or not raw_rules:
            raise GrammarError(f"node {name!r} must declare at least one rule")
        rules = []
        for i, raw in enumerate(raw_rules):
            where = f"node {name!r} rule {i}"
            if not isinstance(raw, dict) or "value" not in raw or "template" not in raw:
                raise GrammarError(f"{where} must have 'value' and 'template'")
            weight = raw.get("weight", 1)
            if not isinstance(weight, (int, float)) or weight <= 0:
                raise GrammarError(f"nonpositive weight {weight!r} in {where}")
            rules.append(
                ProductionRule(
                    value=str(raw["value"]),
                    guard=_parse_guard(raw.get("guard"), where),
                    weight=float(weight),
                    template=_parse_template(raw["template"], where),
                )
            )
        nodes[name] = DecisionSpec(name=name, rules=tuple(rules))

    # Cross-references: start node, template refs, guard refs, label rules.
    start = doc["start"]
    if start not in nodes:
        raise GrammarError(f"unknown node reference: {start}")
    for spec in nodes.values():
        for rule in spec.rules:
            for ref in sorted(_template_refs(rule.template)):
                if ref not in nodes:
                    raise GrammarError(f"unknown node reference: {ref}")
            for ref in sorted(rule.guard.referenced_nodes()):
                if ref not in nodes:
                    raise GrammarError(f"unknown node reference: {ref}")

    label_rules = []
    for i, raw in enumerate(doc.get("labels", [])):
        if not isinstance(raw, dict) or not {"node", "value", "label"} <= set(raw):
            raise GrammarError(f"label rule {i} must have node, value, and label")
        if raw["node"] not in nodes:
            raise GrammarError(f"unknown node reference: {raw['node']}")
        label_rules.append(LabelRule(raw["node"], str(raw["value"]), str(raw["label"])))

    return Simulator(
        nodes=nodes,
        start=start,
        max_depth=max_depth,
        label_rules=tuple(label_rules),
        grammar_hash=grammar_digest(doc),
    )


def load_simulator_file(path) -> Simulator:
    with open(path, "r", encoding="utf-8") as fh:
        return load_simulator(fh.read())
