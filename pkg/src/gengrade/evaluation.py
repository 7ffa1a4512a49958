"""Evaluation harness: label metrics by Zipf region and exact-replay rate."""

from __future__ import annotations

from dataclasses import dataclass, field

from .datasets import Dataset, ZipfPartition
from .errors import GengradeError
from .feedback import nearest_in_simulator
from .grammar import Simulator
from .nap.model import InferenceModel

REGIONS = ("head", "body", "tail")


@dataclass(frozen=True)
class RegionMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    count: int


@dataclass
class EvalReport:
    overall: RegionMetrics
    regions: dict[str, RegionMetrics]
    exact_rate: float | None = None

    def region_counts_sum(self) -> int:
        return sum(m.count for m in self.regions.values())


def _micro(preds, golds, universe) -> RegionMetrics:
    tp = fp = fn = tn = 0
    for pred, gold in zip(preds, golds):
        for label in universe:
            p = label in pred
            g = label in gold
            tp += p and g
            fp += p and not g
            fn += g and not p
            tn += not p and not g
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 1.0
    precision = tp / (tp + fp) if tp + fp else (1.0 if fn == 0 else 0.0)
    recall = tp / (tp + fn) if tp + fn else (1.0 if fp == 0 else 0.0)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return RegionMetrics(accuracy, precision, recall, f1, len(preds))


def feedback_metrics(
    predictions: list,
    golds: list,
    partition: ZipfPartition,
    texts: list[str],
    label_universe=None,
) -> EvalReport:
    """Micro-averaged label metrics, overall and per Zipf region.

    Each (solution, label) pair is one binary decision; the universe is the
    union of labels seen unless supplied explicitly. ``texts`` aligns each
    prediction/gold pair with its solution text for region lookup.
    """
    if not (len(predictions) == len(golds) == len(texts)):
        raise GengradeError("feedback_metrics: predictions, golds, and texts must align 1:1")
    predictions = [frozenset(p) for p in predictions]
    golds = [frozenset(g) for g in golds]
    if label_universe is None:
        universe = set()
        for labels in predictions + golds:
            universe |= labels
        label_universe = sorted(universe)
    regions = {name: ([], []) for name in REGIONS}
    for pred, gold, text in zip(predictions, golds, texts):
        region = partition.region_of(text)
        regions[region][0].append(pred)
        regions[region][1].append(gold)
    return EvalReport(
        overall=_micro(predictions, golds, label_universe),
        regions={
            name: _micro(preds, gold, label_universe) for name, (preds, gold) in regions.items()
        },
    )


def exact_rate(model: InferenceModel, sim: Simulator, heldout: Dataset) -> float:
    """Fraction of held-out productions whose parse replays exactly."""
    if not heldout.records:
        raise GengradeError("exact_rate: empty held-out set")
    hits = 0
    for record in heldout.records:
        nb = nearest_in_simulator(model, sim, record.production.text)
        hits += nb.ok and nb.exact
    return hits / len(heldout.records)
