"""Token, node-name, and per-node value vocabularies."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..grammar import Simulator
from ..knn import tokenize

PAD_ID = 0
UNK_ID = 1
RESERVED = ("<pad>", "<unk>")


@dataclass
class Vocabulary:
    token_to_id: dict[str, int]
    node_to_id: dict[str, int]
    value_to_id: dict[str, dict[str, int]]  # node -> value -> id

    @property
    def n_tokens(self) -> int:
        return len(self.token_to_id)

    @property
    def n_nodes(self) -> int:
        return len(self.node_to_id)

    def encode_text(self, text: str) -> list[int]:
        unk = UNK_ID
        return [self.token_to_id.get(tok, unk) for tok in tokenize(text)]

    def to_json(self) -> dict:
        return {
            "tokens": list(self.token_to_id),
            "nodes": list(self.node_to_id),
            "values": {node: list(vals) for node, vals in self.value_to_id.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        return cls(
            token_to_id={tok: i for i, tok in enumerate(obj["tokens"])},
            node_to_id={node: i for i, node in enumerate(obj["nodes"])},
            value_to_id={
                node: {v: i for i, v in enumerate(vals)} for node, vals in obj["values"].items()
            },
        )


def build_vocabulary(sim: Simulator, texts) -> Vocabulary:
    """Token ids from training texts (first-occurrence order after reserved
    ids); node and value ids straight from the grammar's document order."""
    token_to_id = {tok: i for i, tok in enumerate(RESERVED)}
    for text in texts:
        for tok in tokenize(text):
            if tok not in token_to_id:
                token_to_id[tok] = len(token_to_id)
    node_to_id = {name: i for i, name in enumerate(sim.nodes)}
    value_to_id = {
        name: {value: i for i, value in enumerate(spec.domain)}
        for name, spec in sim.nodes.items()
    }
    return Vocabulary(token_to_id, node_to_id, value_to_id)
