"""Model assembly: parameters, teacher-forced computation, checkpoints.

Architecture (all float64):

- production encoder: token embedding -> stacked unidirectional GRU
  layers -> final hidden state as the fixed-size encoding of the text;
- autoregressive decoder: a single GRU cell whose input at step t is
  [value-embedding of the previous decision, name-embedding of the current
  node, text encoding], with a learned start embedding at step 0;
- per-node heads: linear maps from decoder state to a distribution over
  that node's value domain, masked to the guard-admissible values.

Identical texts inside a batch are encoded once and their gradients merged,
which changes nothing mathematically (the loss is a sum over records) but
speeds up near-deterministic corpora considerably.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from ..datasets import Dataset
from ..engine import ExecutionCursor, Trace
from ..errors import GengradeError, InvalidTraceError
from ..grammar import Simulator
from .layers import (
    gru_sequence_backward,
    gru_sequence_forward,
    gru_step_forward,
    gru_step_backward,
    masked_log_softmax,
    nll_backward,
)
from .vocab import PAD_ID, Vocabulary, build_vocabulary

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    hidden_size: int = 256
    embed_size: int = 32
    encoder_layers: int = 4
    batch_size: int = 64
    epochs: int = 20
    learning_rate: float = 5e-4
    weight_decay: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        for name in ("hidden_size", "embed_size", "encoder_layers", "batch_size", "epochs"):
            if getattr(self, name) <= 0:
                raise GengradeError(f"config {name} must be positive")
        if self.learning_rate <= 0:
            raise GengradeError("config learning_rate must be positive")
        if self.weight_decay < 0:
            raise GengradeError("config weight_decay must be nonnegative")


@dataclass
class PreparedRecord:
    """A training record with grammar metadata resolved up front."""

    token_ids: np.ndarray
    node_ids: np.ndarray
    value_ids: np.ndarray
    masks: list[np.ndarray]  # per-step bool over Val(node_t)
    text: str


class InferenceModel:
    def __init__(self, config: ModelConfig, vocab: Vocabulary, grammar_hash: str,
                 params: dict[str, np.ndarray]):
        self.config = config
        self.vocab = vocab
        self.grammar_hash = grammar_hash
        self.params = params

    @property
    def node_order(self) -> list[str]:
        return list(self.vocab.node_to_id)

    def head_dims(self) -> dict[str, int]:
        return {node: len(vals) for node, vals in self.vocab.value_to_id.items()}


def _uniform(rng, shape, scale):
    return rng.uniform(-scale, scale, size=shape).astype(np.float64)


def init_params(cfg: ModelConfig, vocab: Vocabulary) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(cfg.seed)
    H, E = cfg.hidden_size, cfg.embed_size
    k = 1.0 / np.sqrt(H)
    params: dict[str, np.ndarray] = {}
    params["tok_emb"] = _uniform(rng, (vocab.n_tokens, E), 0.1)
    for layer in range(cfg.encoder_layers):
        in_dim = E if layer == 0 else H
        params[f"enc{layer}_Wi"] = _uniform(rng, (in_dim, 3 * H), k)
        params[f"enc{layer}_Wh"] = _uniform(rng, (H, 3 * H), k)
        params[f"enc{layer}_bi"] = np.zeros(3 * H)
        params[f"enc{layer}_bh"] = np.zeros(3 * H)
    params["name_emb"] = _uniform(rng, (vocab.n_nodes, E), 0.1)
    params["start_emb"] = _uniform(rng, (E,), 0.1)
    for node, values in vocab.value_to_id.items():
        params[f"val_emb/{node}"] = _uniform(rng, (len(values), E), 0.1)
    params["dec_Wi"] = _uniform(rng, (2 * E + H, 3 * H), k)
    params["dec_Wh"] = _uniform(rng, (H, 3 * H), k)
    params["dec_bi"] = np.zeros(3 * H)
    params["dec_bh"] = np.zeros(3 * H)
    for node, values in vocab.value_to_id.items():
        params[f"head_W/{node}"] = _uniform(rng, (H, len(values)), k)
        params[f"head_b/{node}"] = np.zeros(len(values))
    return params


def build_model(sim: Simulator, ds: Dataset, cfg: ModelConfig) -> InferenceModel:
    """Untrained model with vocabulary from the dataset's productions."""
    if ds.grammar_hash and ds.grammar_hash != sim.grammar_hash:
        raise GengradeError(
            "dataset grammar hash does not match the supplied grammar; "
            "rebuild the dataset or load the matching grammar"
        )
    vocab = build_vocabulary(sim, (r.production.text for r in ds.records))
    return InferenceModel(cfg, vocab, sim.grammar_hash, init_params(cfg, vocab))


def flatten_params(params: dict[str, np.ndarray]):
    """Repack parameters into one contiguous vector plus named views.

    The optimizer then works on a single array; the views keep every other
    code path unchanged.
    """
    total = sum(p.size for p in params.values())
    flat = np.empty(total, dtype=np.float64)
    views: dict[str, np.ndarray] = {}
    offset = 0
    for name, param in params.items():
        view = flat[offset : offset + param.size].reshape(param.shape)
        view[...] = param
        views[name] = view
        offset += param.size
    return flat, views


# ---------------------------------------------------------------------------
# Record preparation
# ---------------------------------------------------------------------------


def prepare_record(sim: Simulator, vocab: Vocabulary, trace: Trace, text: str) -> PreparedRecord:
    """Resolve ids and guard-admissibility masks by replaying the trace."""
    cursor = ExecutionCursor(sim, build_text=False)
    node_ids = np.empty(len(trace), dtype=np.int64)
    value_ids = np.empty(len(trace), dtype=np.int64)
    masks = []
    for t, (node, value) in enumerate(trace):
        admissible = cursor.expect(node)
        if node not in vocab.node_to_id:
            raise GengradeError(f"node {node!r} in dataset absent from vocabulary")
        values = vocab.value_to_id[node]
        mask = np.zeros(len(values), dtype=bool)
        for adm in admissible:
            mask[values[adm.value]] = True
        if value not in values:
            raise InvalidTraceError(t, f"value {value!r} not in domain of node {node!r}")
        node_ids[t] = vocab.node_to_id[node]
        value_ids[t] = values[value]
        masks.append(mask)
        cursor.choose(value)
    if cursor.next_decision() is not None:
        raise InvalidTraceError(len(trace), "trace too short for grammar")
    return PreparedRecord(
        token_ids=np.array(vocab.encode_text(text), dtype=np.int64),
        node_ids=node_ids,
        value_ids=value_ids,
        masks=masks,
        text=text,
    )


def prepare_dataset(sim: Simulator, vocab: Vocabulary, ds: Dataset) -> list[PreparedRecord]:
    return [prepare_record(sim, vocab, r.trace, r.production.text) for r in ds.records]


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------


def encode_texts(model: InferenceModel, token_id_lists: list[np.ndarray]):
    """Encode a list of token-id sequences into (U, H) final hidden states.

    Rows are internally sorted by length so the recurrence only touches
    still-active rows; results come back in the caller's order.
    """
    p = model.params
    cfg = model.config
    U = len(token_id_lists)
    lengths_orig = np.array([len(ids) for ids in token_id_lists], dtype=np.int64)
    order = np.argsort(-lengths_orig, kind="stable")
    lengths = lengths_orig[order]
    T = max(int(lengths[0]) if U else 1, 1)
    ids = np.full((U, T), PAD_ID, dtype=np.int64)
    for row, src in enumerate(order):
        seq = token_id_lists[src]
        ids[row, : len(seq)] = seq
    x = np.ascontiguousarray(p["tok_emb"][ids].transpose(1, 0, 2))  # (T, U, E)

    layer_caches = []
    final = None
    for layer in range(cfg.encoder_layers):
        final, outs, cache = gru_sequence_forward(
            x, lengths,
            p[f"enc{layer}_Wi"], p[f"enc{layer}_Wh"],
            p[f"enc{layer}_bi"], p[f"enc{layer}_bh"],
        )
        layer_caches.append(cache)
        x = outs
    inverse = np.empty(U, dtype=np.int64)
    inverse[order] = np.arange(U)
    enc = final[inverse]
    return enc, (ids, order, inverse, layer_caches)


def encode_backward(model: InferenceModel, denc: np.ndarray, cache, grads: dict):
    p = model.params
    cfg = model.config
    ids, order, inverse, layer_caches = cache
    dfinal = denc[order]
    dout = None
    for layer in reversed(range(cfg.encoder_layers)):
        dX, dWi, dWh, dbi, dbh = gru_sequence_backward(
            dfinal if layer == cfg.encoder_layers - 1 else None, dout, layer_caches[layer]
        )
        for suffix, grad in (("Wi", dWi), ("Wh", dWh), ("bi", dbi), ("bh", dbh)):
            name = f"enc{layer}_{suffix}"
            if name in grads:
                grads[name] += grad
            else:
                grads[name] = grad
        dout = dX
    dtok = grads.setdefault("tok_emb", np.zeros_like(p["tok_emb"]))
    np.add.at(dtok, ids, dout.transpose(1, 0, 2))


# ---------------------------------------------------------------------------
# Teacher-forced decoder
# ---------------------------------------------------------------------------


def teacher_forward(model: InferenceModel, recs: list[PreparedRecord], enc_rows: np.ndarray):
    """Teacher-forced pass. Returns (step_logps, caches).

    ``step_logps`` is a (B, Tmax) array of log p(value_t | ...) with NaN at
    padding steps.
    """
    p = model.params
    cfg = model.config
    B = len(recs)
    lens = np.array([len(r.node_ids) for r in recs])
    Tmax = int(lens.max())
    H, E = cfg.hidden_size, cfg.embed_size
    node_names = model.node_order

    node_mat = np.full((B, Tmax), -1, dtype=np.int64)
    val_mat = np.full((B, Tmax), -1, dtype=np.int64)
    for i, rec in enumerate(recs):
        node_mat[i, : len(rec.node_ids)] = rec.node_ids
        val_mat[i, : len(rec.value_ids)] = rec.value_ids

    h = np.zeros((B, H))
    step_logps = np.full((B, Tmax), np.nan)
    gru_caches = []
    head_caches = []
    vemb_sources = []  # per step: list of (rows, node, value_ids) or "start"
    for t in range(Tmax):
        active = t < lens
        vemb = np.zeros((B, E))
        if t == 0:
            vemb[:] = p["start_emb"]
            vemb_sources.append("start")
        else:
            sources = []
            prev_nodes = node_mat[:, t - 1]
            for node_id in np.unique(prev_nodes[active]):
                rows = np.where(active & (prev_nodes == node_id))[0]
                node = node_names[node_id]
                vids = val_mat[rows, t - 1]
                vemb[rows] = p[f"val_emb/{node}"][vids]
                sources.append((rows, node, vids))
            vemb_sources.append(sources)
        cur_nodes = node_mat[:, t]
        nemb = np.zeros((B, E))
        nemb[active] = p["name_emb"][cur_nodes[active]]
        x = np.concatenate([vemb, nemb, enc_rows], axis=1)
        h, cache = gru_step_forward(x, h, p["dec_Wi"], p["dec_Wh"], p["dec_bi"], p["dec_bh"], active)
        gru_caches.append((cache, cur_nodes, active))

        heads_t = []
        for node_id in np.unique(cur_nodes[active]):
            rows = np.where(active & (cur_nodes == node_id))[0]
            node = node_names[node_id]
            logits = h[rows] @ p[f"head_W/{node}"] + p[f"head_b/{node}"]
            admissible = np.stack([recs[i].masks[t] for i in rows])
            logp, probs = masked_log_softmax(logits, admissible)
            gold = val_mat[rows, t]
            step_logps[rows, t] = logp[np.arange(len(rows)), gold]
            heads_t.append((rows, node, probs, gold, h[rows].copy()))
        head_caches.append(heads_t)

    caches = (gru_caches, head_caches, vemb_sources, lens, enc_rows.shape)
    return step_logps, caches


def teacher_backward(model: InferenceModel, recs, caches, grads: dict, row_scale):
    """Backward for mean-per-record total NLL. Returns d(enc_rows)."""
    p = model.params
    cfg = model.config
    gru_caches, head_caches, vemb_sources, lens, enc_shape = caches
    B = len(recs)
    H, E = cfg.hidden_size, cfg.embed_size
    Tmax = len(gru_caches)
    denc_rows = np.zeros(enc_shape)
    dh = np.zeros((B, H))

    def acc(name, value):
        if name in grads:
            grads[name] += value
        else:
            grads[name] = value

    for t in reversed(range(Tmax)):
        cache, cur_nodes, active = gru_caches[t]
        for rows, node, probs, gold, h_rows in head_caches[t]:
            scale = row_scale if np.isscalar(row_scale) else row_scale[rows]
            dlogits = nll_backward(probs, gold, scale)
            acc(f"head_W/{node}", h_rows.T @ dlogits)
            acc(f"head_b/{node}", dlogits.sum(axis=0))
            dh[rows] += dlogits @ p[f"head_W/{node}"].T
        dx, dh, dWi, dWh, dbi, dbh = gru_step_backward(dh, cache)
        acc("dec_Wi", dWi)
        acc("dec_Wh", dWh)
        acc("dec_bi", dbi)
        acc("dec_bh", dbh)
        dvemb = dx[:, :E]
        dnemb = dx[:, E : 2 * E]
        denc_rows += dx[:, 2 * E :]
        name_grad = grads.setdefault("name_emb", np.zeros_like(p["name_emb"]))
        np.add.at(name_grad, cur_nodes[active], dnemb[active])
        source = vemb_sources[t]
        if source == "start":
            acc("start_emb", dvemb.sum(axis=0))
        else:
            for rows, node, vids in source:
                vgrad = grads.setdefault(f"val_emb/{node}", np.zeros_like(p[f"val_emb/{node}"]))
                np.add.at(vgrad, vids, dvemb[rows])
    return denc_rows


# ---------------------------------------------------------------------------
# Full-network loss
# ---------------------------------------------------------------------------


def batch_loss_and_grads(model: InferenceModel, recs: list[PreparedRecord], compute_grads=True,
                         grad_out: dict[str, np.ndarray] | None = None):
    """Mean-per-record total NLL over a batch, with parameter gradients.

    Returns (loss, total_nll, total_steps, grads). Duplicate records are
    computed once and weighted by multiplicity, and identical texts share
    one encoder pass; both are exact rewrites of the sum over records.
    ``grad_out`` (zeroed, full set of parameter-shaped arrays) is
    accumulated into in place when given, avoiding per-batch allocation.
    """
    B = len(recs)
    distinct: dict = {}
    multiplicity: list[int] = []
    kept: list[PreparedRecord] = []
    for rec in recs:
        key = (rec.text, rec.node_ids.tobytes(), rec.value_ids.tobytes())
        idx = distinct.get(key)
        if idx is None:
            distinct[key] = len(kept)
            kept.append(rec)
            multiplicity.append(1)
        else:
            multiplicity[idx] += 1
    weights = np.array(multiplicity, dtype=np.float64)

    unique_texts: dict[str, int] = {}
    inverse = np.empty(len(kept), dtype=np.int64)
    uniq_tokens = []
    for i, rec in enumerate(kept):
        idx = unique_texts.get(rec.text)
        if idx is None:
            idx = len(uniq_tokens)
            unique_texts[rec.text] = idx
            uniq_tokens.append(rec.token_ids)
        inverse[i] = idx
    enc_u, enc_cache = encode_texts(model, uniq_tokens)
    enc_rows = enc_u[inverse]

    step_logps, caches = teacher_forward(model, kept, enc_rows)
    step_mask = ~np.isnan(step_logps)
    record_nll = -np.nansum(step_logps, axis=1)
    total_nll = float(record_nll @ weights)
    total_steps = int(step_mask.sum(axis=1) @ multiplicity)
    loss = total_nll / B
    if not compute_grads:
        return loss, total_nll, total_steps, None

    grads = grad_out if grad_out is not None else {}
    denc_rows = teacher_backward(model, kept, caches, grads, row_scale=weights / B)
    denc_u = np.zeros_like(enc_u)
    np.add.at(denc_u, inverse, denc_rows)
    encode_backward(model, denc_u, enc_cache, grads)
    if grad_out is None:
        for name, param in model.params.items():
            if name not in grads:
                grads[name] = np.zeros_like(param)
    return loss, total_nll, total_steps, grads


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_model(model: InferenceModel, path) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "vocab": model.vocab.to_json(),
        "grammar_hash": model.grammar_hash,
    }
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path) -> InferenceModel:
    with np.load(path) as data:
        if "__meta__" not in data:
            raise GengradeError(f"{path}: not a gengrade checkpoint")
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise GengradeError(
                f"{path}: unsupported checkpoint version {meta.get('version')!r}"
            )
        params = {
            name[len("param/"):]: np.array(data[name])
            for name in data.files
            if name.startswith("param/")
        }
    return InferenceModel(
        config=ModelConfig(**meta["config"]),
        vocab=Vocabulary.from_json(meta["vocab"]),
        grammar_hash=meta["grammar_hash"],
        params=params,
    )
