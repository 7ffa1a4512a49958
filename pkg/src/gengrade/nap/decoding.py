"""Grammar-constrained decoding of traces from production texts.

The replay cursor drives decoding: at every decision the node identity and
the guard-admissible value set come from the grammar, the model supplies a
distribution over the node's domain, inadmissible values are masked out,
and the chosen value is committed back to the cursor. Any trace this
produces is grammar-valid by construction, so replaying it (the "nearest
in-simulator neighbour") is always well-defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..engine import ExecutionCursor, Production, Trace
from ..errors import DeadContextError, DepthExceededError, GengradeError
from ..grammar import Simulator
from .layers import gru_step_forward, masked_log_softmax
from .model import InferenceModel, prepare_record
from .vocab import UNK_ID

MAX_BEAM_WIDTH = 32


@dataclass
class ParseResult:
    trace: Trace
    step_log_probs: list[float]
    total_log_prob: float
    exact: bool
    production: Production | None
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


def _encode_single(model: InferenceModel, y: str) -> np.ndarray:
    from .model import encode_texts

    ids = np.array(model.vocab.encode_text(y), dtype=np.int64)
    enc, _ = encode_texts(model, [ids])
    return enc[0]


def _decoder_step(model: InferenceModel, h, prev, node: str, enc: np.ndarray,
                  admissible_values: list[str]):
    """Advance the decoder one decision; returns (h_new, logp vector, value order)."""
    p = model.params
    E = model.config.embed_size
    if prev is None:
        vemb = p["start_emb"]
    else:
        prev_node, prev_value_id = prev
        vemb = p[f"val_emb/{prev_node}"][prev_value_id]
    nemb = p["name_emb"][model.vocab.node_to_id[node]]
    x = np.concatenate([vemb, nemb, enc])[None, :]
    h_new, _ = gru_step_forward(x, h, p["dec_Wi"], p["dec_Wh"], p["dec_bi"], p["dec_bh"])
    logits = h_new @ p[f"head_W/{node}"] + p[f"head_b/{node}"]
    value_ids = model.vocab.value_to_id[node]
    mask = np.zeros(len(value_ids), dtype=bool)
    for value in admissible_values:
        mask[value_ids[value]] = True
    logp, _ = masked_log_softmax(logits, mask[None, :])
    return h_new, logp[0], list(value_ids)


@dataclass
class _Beam:
    cursor: ExecutionCursor
    h: np.ndarray
    prev: tuple | None
    logps: list[float] = field(default_factory=list)
    score: float = 0.0
    greedy: bool = False  # has followed the step-wise argmax so far


def _check_grammar(model: InferenceModel, sim: Simulator) -> None:
    if model.grammar_hash != sim.grammar_hash:
        raise GengradeError(
            "model grammar hash does not match the supplied grammar; "
            "was this model trained on a different grammar file?"
        )


def parse(model: InferenceModel, sim: Simulator, y: str, mode: str = "greedy",
          seed: int = 0, width: int = 10) -> ParseResult:
    """Infer the decision trace behind ``y``.

    ``mode`` is "greedy" (deterministic argmax), "sample" (posterior
    sampling with ``seed``), or "beam" (width-limited search whose result
    never scores below greedy, because the greedy path is kept alive).
    """
    _check_grammar(model, sim)
    if mode not in ("greedy", "sample", "beam"):
        raise GengradeError(f"unknown decode mode {mode!r}")
    if mode == "beam":
        if not (1 <= width <= MAX_BEAM_WIDTH):
            raise GengradeError(f"beam width must be in 1..{MAX_BEAM_WIDTH}")
        return _beam_parse(model, sim, y, width)

    rng = np.random.default_rng(seed)
    enc = _encode_single(model, y)
    cursor = ExecutionCursor(sim)
    h = np.zeros((1, model.config.hidden_size))
    prev = None
    logps: list[float] = []
    while True:
        try:
            pending = cursor.next_decision()
        except (DeadContextError, DepthExceededError) as exc:
            return ParseResult(list(cursor.trace), logps, sum(logps), False, None,
                               failure=f"dead decode: {exc}")
        if pending is None:
            break
        node, admissible = pending
        h, logp, values = _decoder_step(model, h, prev, node, enc,
                                        [a.value for a in admissible])
        if mode == "greedy":
            choice = int(np.argmax(logp))
        else:
            probs = np.exp(logp - logp.max())
            probs[~np.isfinite(logp)] = 0.0
            probs /= probs.sum()
            choice = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
            choice = min(choice, len(values) - 1)
        value = values[choice]
        logps.append(float(logp[choice]))
        prev = (node, choice)
        cursor.choose(value)
    production = cursor.production
    return ParseResult(
        trace=list(cursor.trace),
        step_log_probs=logps,
        total_log_prob=float(sum(logps)),
        exact=production.text == y,
        production=production,
    )


def _beam_parse(model: InferenceModel, sim: Simulator, y: str, width: int) -> ParseResult:
    enc = _encode_single(model, y)
    H = model.config.hidden_size
    live = [_Beam(ExecutionCursor(sim), np.zeros((1, H)), None, greedy=True)]
    finished: list[_Beam] = []
    failures: list[str] = []
    while live:
        candidates: list[_Beam] = []
        for beam in live:
            try:
                pending = beam.cursor.next_decision()
            except (DeadContextError, DepthExceededError) as exc:
                failures.append(str(exc))
                continue
            if pending is None:
                finished.append(beam)
                continue
            node, admissible = pending
            h, logp, values = _decoder_step(model, beam.h, beam.prev, node, enc,
                                            [a.value for a in admissible])
            best = int(np.argmax(logp))
            for choice, value in enumerate(values):
                if not np.isfinite(logp[choice]):
                    continue
                branch = _Beam(
                    cursor=beam.cursor.clone(),
                    h=h,
                    prev=(node, choice),
                    logps=beam.logps + [float(logp[choice])],
                    score=beam.score + float(logp[choice]),
                    greedy=beam.greedy and choice == best,
                )
                branch.cursor.choose(value)
                candidates.append(branch)
        candidates.sort(key=lambda b: -b.score)
        keep = candidates[:width]
        # The beam that has followed the argmax at every step survives
        # pruning unconditionally, so beam >= greedy holds by construction.
        greedy_beams = [b for b in candidates if b.greedy]
        if greedy_beams and not any(b.greedy for b in keep):
            keep = candidates[: width - 1] + [greedy_beams[0]]
        live = keep
    if not finished:
        return ParseResult([], [], 0.0, False, None,
                           failure="dead decode: " + "; ".join(failures or ["no beams finished"]))
    best = max(finished, key=lambda b: b.score)
    production = best.cursor.production
    return ParseResult(
        trace=list(best.cursor.trace),
        step_log_probs=best.logps,
        total_log_prob=float(best.score),
        exact=production.text == y,
        production=production,
    )


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


def posterior_eval(model: InferenceModel, sim: Simulator, y: str, trace: Trace) -> float:
    """Total log p(trace | y), teacher-forced with the same guard masking
    the training pass uses (same code path)."""
    _check_grammar(model, sim)
    from .model import encode_texts, teacher_forward

    rec = prepare_record(sim, model.vocab, trace, y)
    enc, _ = encode_texts(model, [rec.token_ids])
    step_logps, _ = teacher_forward(model, [rec], enc)
    return float(np.nansum(step_logps))


def conditional_distributions(model: InferenceModel, sim: Simulator, y: str, trace: Trace):
    """Per-step masked posterior over each node's domain along ``trace``.

    Returns a list of (node, value order, logp vector); used for greedy
    argmax audits and diagnostics.
    """
    _check_grammar(model, sim)
    enc = _encode_single(model, y)
    cursor = ExecutionCursor(sim)
    h = np.zeros((1, model.config.hidden_size))
    prev = None
    out = []
    for node, value in trace:
        admissible = cursor.expect(node)
        h, logp, values = _decoder_step(model, h, prev, node, enc,
                                        [a.value for a in admissible])
        out.append((node, values, logp))
        prev = (node, model.vocab.value_to_id[node][value])
        cursor.choose(value)
    return out
