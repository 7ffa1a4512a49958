"""Sampling policies and corpus diversity analytics.

Three ways to drive the simulator: ``iid`` follows the author-specified
weights, ``uniform`` picks uniformly among guard-admissible values, and
``adaptive`` down-weights choices by how often they have already been
sampled, discounted by trajectory depth:

    w'_i = w_i * exp(-r * n_i * d**depth)

renormalized over the admissible set. At r=0 (or with all counts zero) this
is exactly the iid distribution, and the penalty weakens with depth when
d < 1, so early decisions diversify first. The analytics side implements
unique-sample curves, the Good-Turing estimate of the chance the next
sample is new, and log-log Zipf fits over text frequencies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.stats

from .datasets import Dataset, DatasetRecord
from .engine import Admissible, simulate, trace_prob
from .errors import DatasetError, GengradeError
from .grammar import Simulator

# Penalty exponents are clamped so extreme visit counts underflow to a tiny
# positive probability instead of zero (support preservation).
_MIN_EXPONENT = -700.0


@dataclass(frozen=True)
class SamplerPolicy:
    kind: str  # iid | uniform | adaptive
    r: float = 0.0
    d: float = 1.0

    def __post_init__(self):
        if self.kind not in ("iid", "uniform", "adaptive"):
            raise GengradeError(f"unknown sampling policy {self.kind!r}")
        if self.kind == "adaptive":
            if self.r <= 0:
                raise GengradeError("adaptive policy requires exploration rate r > 0")
            if not (0 < self.d <= 1):
                raise GengradeError("adaptive policy requires decay d in (0, 1]")

    @staticmethod
    def iid() -> "SamplerPolicy":
        return SamplerPolicy("iid")

    @staticmethod
    def uniform() -> "SamplerPolicy":
        return SamplerPolicy("uniform")

    @staticmethod
    def adaptive(r: float, d: float) -> "SamplerPolicy":
        return SamplerPolicy("adaptive", r=r, d=d)


def adjusted_weights(
    base: list[tuple[str, float]],
    counts: dict,
    depth: int,
    r: float,
    d: float,
) -> np.ndarray:
    """Visit-count-penalized distribution over the given (value, weight) base.

    ``counts`` maps value -> times sampled so far at this node. Returns a
    probability vector aligned with ``base``.
    """
    if not base:
        raise GengradeError("adjusted_weights: empty base distribution")
    if r < 0:
        raise GengradeError("exploration rate r must be >= 0")
    if not (0 < d <= 1):
        raise GengradeError("decay d must be in (0, 1]")
    weights = np.array([w for _, w in base], dtype=np.float64)
    if np.any(weights <= 0):
        raise GengradeError("adjusted_weights: all base weights must be positive")
    n = np.array([counts.get(value, 0) for value, _ in base], dtype=np.float64)
    exponent = np.log(weights) - r * n * (d ** depth)
    exponent = np.maximum(exponent - exponent.max(), _MIN_EXPONENT)
    probs = np.exp(exponent)
    return probs / probs.sum()


def choice_distribution(
    node: str,
    admissible: list[Admissible],
    policy: SamplerPolicy,
    counts: dict | None,
    depth: int,
) -> np.ndarray:
    """Probability vector over admissible values for one decision."""
    if policy.kind == "uniform":
        return np.full(len(admissible), 1.0 / len(admissible))
    base = [(a.value, a.weight) for a in admissible]
    if policy.kind == "iid" or not counts:
        node_counts = {}
    else:
        node_counts = {a.value: counts.get((node, a.value), 0) for a in admissible}
    r = policy.r if policy.kind == "adaptive" else 0.0
    d = policy.d if policy.kind == "adaptive" else 1.0
    return adjusted_weights(base, node_counts, depth, r, d)


def sample_stream(sim: Simulator, policy: SamplerPolicy, n: int, seed: int):
    """Yield n DatasetRecords in generation order (shared rng and counts)."""
    if n < 1:
        raise GengradeError(f"sample count must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    counts: dict = {}
    for _ in range(n):
        trace, production = simulate(sim, rng, policy, counts)
        yield DatasetRecord(trace=trace, production=production, origin="simulated", freq=1)


def sample_dataset(sim: Simulator, policy: SamplerPolicy, n: int, seed: int) -> Dataset:
    """Sample n (trace, production) records. Deterministic given inputs."""
    records = list(sample_stream(sim, policy, n, seed))
    return Dataset(
        records=records,
        grammar_hash=sim.grammar_hash,
        policy_metadata={
            "policy": policy.kind,
            "r": policy.r,
            "d": policy.d,
            "n": n,
            "seed": seed,
        },
    )


# ---------------------------------------------------------------------------
# Diversity analytics
# ---------------------------------------------------------------------------


def uniqueness_curve(ds: Dataset) -> list[tuple[int, int]]:
    """(samples so far, distinct production texts so far) step series."""
    if not ds.records:
        raise DatasetError("uniqueness_curve: empty dataset")
    seen: set[str] = set()
    series = []
    for i, record in enumerate(ds.records):
        seen.add(record.production.text)
        series.append((i + 1, len(seen)))
    return series


def good_turing(texts) -> float:
    """Good-Turing estimate N1/N of the chance the next sample is new.

    ``texts`` is a prefix of production texts (or a Dataset)."""
    if isinstance(texts, Dataset):
        texts = [r.production.text for r in texts.records]
    else:
        texts = list(texts)
    if not texts:
        raise DatasetError("good_turing: empty prefix")
    freqs: dict[str, int] = {}
    for text in texts:
        freqs[text] = freqs.get(text, 0) + 1
    singletons = sum(1 for c in freqs.values() if c == 1)
    return singletons / len(texts)


def zipf_fit(freqs: list[int]) -> tuple[float, float, float]:
    """OLS fit of log frequency against log rank.

    Frequencies are ranked descending (ties keep first-occurrence order).
    Returns (slope, intercept, r_squared); Zipf-like data has slope < 0.
    """
    if any(f <= 0 for f in freqs):
        raise GengradeError("zipf_fit: all counts must be positive")
    if len(set(freqs)) < 3:
        raise GengradeError("zipf_fit: need at least 3 distinct frequencies")
    ordered = sorted(range(len(freqs)), key=lambda i: (-freqs[i], i))
    log_rank = np.log(np.arange(1, len(freqs) + 1, dtype=np.float64))
    log_freq = np.log(np.array([freqs[i] for i in ordered], dtype=np.float64))
    fit = scipy.stats.linregress(log_rank, log_freq)
    return float(fit.slope), float(fit.intercept), float(fit.rvalue**2)


def mean_trace_prob_windows(sim: Simulator, ds: Dataset, window: int = 1000) -> list[float]:
    """Mean author-distribution probability of sampled traces per window.

    Adaptive sampling should make this series trend downward: likely
    trajectories first, then increasingly unlikely ones.
    """
    if window < 1:
        raise GengradeError("window must be >= 1")
    means = []
    records = ds.records
    for start in range(0, len(records) - window + 1, window):
        block = records[start : start + window]
        means.append(float(np.mean([trace_prob(sim, r.trace) for r in block])))
    return means
