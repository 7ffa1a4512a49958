"""Training loop (Adam with decoupled weight decay) and gradient checking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

from ..datasets import Dataset
from ..errors import GengradeError, NonFiniteLossError
from ..grammar import Simulator
from .model import (
    InferenceModel,
    ModelConfig,
    PreparedRecord,
    batch_loss_and_grads,
    flatten_params,
    prepare_dataset,
    prepare_record,
)

# Loss values above this are treated as divergence even while still finite;
# a correct model on any realistic grammar stays orders of magnitude below.
_LOSS_CEILING = 1e8


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _adamw_kernel(flat, grad, m, v, lr, wd, beta1, beta2, eps, bias1, bias2):
        for i in range(flat.size):
            g = grad[i]
            mi = beta1 * m[i] + (1.0 - beta1) * g
            vi = beta2 * v[i] + (1.0 - beta2) * g * g
            m[i] = mi
            v[i] = vi
            update = (mi / bias1) / (np.sqrt(vi / bias2) + eps)
            p = flat[i]
            flat[i] = p - lr * wd * p - lr * update


class AdamW:
    """Adam moments plus weight decay applied outside the adaptive step.

    Operates on a single flat parameter vector; preallocated scratch keeps
    the update allocation-free.
    """

    def __init__(self, n: int, lr: float, weight_decay: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.wd = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self._scratch = np.empty(n)

    def step(self, flat: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        if _HAVE_NUMBA:
            _adamw_kernel(flat, grad, self.m, self.v, self.lr, self.wd,
                          self.beta1, self.beta2, self.eps, bias1, bias2)
            return
        m, v, s = self.m, self.v, self._scratch
        m *= self.beta1
        m += (1.0 - self.beta1) * grad
        np.multiply(grad, grad, out=s)
        v *= self.beta2
        v += (1.0 - self.beta2) * s
        np.divide(v, bias2, out=s)
        np.sqrt(s, out=s)
        s += self.eps
        np.divide(m, bias1 * s, out=s)
        if self.wd:
            flat -= (self.lr * self.wd) * flat
        flat -= self.lr * s


@dataclass
class TrainResult:
    model: InferenceModel
    epoch_nll_per_step: list[float]
    epoch_nll_per_record: list[float]


def train(model: InferenceModel, ds: Dataset, cfg: ModelConfig | None = None,
          sim: Simulator | None = None,
          prepared: list[PreparedRecord] | None = None) -> TrainResult:
    """Teacher-forced maximum likelihood over the dataset's traces.

    Shuffling is driven by cfg.seed, so runs are reproducible. Raises
    :class:`NonFiniteLossError` when the loss diverges. Mutates and returns
    the given model along with the per-epoch loss curve.
    """
    cfg = cfg or model.config
    if prepared is None:
        if sim is None:
            raise GengradeError("train needs either a simulator or prepared records")
        if not ds.records:
            raise GengradeError("train: empty dataset")
        for i, record in enumerate(ds.records):
            if not record.trace:
                raise GengradeError(f"train: record {i} has no trace (teacher forcing needs one)")
        prepared = prepare_dataset(sim, model.vocab, ds)
    if not prepared:
        raise GengradeError("train: empty dataset")

    rng = np.random.default_rng(cfg.seed)
    curve_steps: list[float] = []
    curve_records: list[float] = []
    flat, views = flatten_params(model.params)
    model.params = views
    gflat, gviews = flatten_params({k: np.zeros_like(v) for k, v in views.items()})
    optimizer = AdamW(flat.size, cfg.learning_rate, cfg.weight_decay)
    order = np.arange(len(prepared))
    for epoch in range(cfg.epochs):
        rng.shuffle(order)
        epoch_nll = 0.0
        epoch_steps = 0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = [prepared[i] for i in order[start : start + cfg.batch_size]]
            gflat[:] = 0.0
            loss, nll, steps, _ = batch_loss_and_grads(model, batch, grad_out=gviews)
            if not np.isfinite(loss) or loss > _LOSS_CEILING:
                raise NonFiniteLossError(epoch, b, float(loss))
            optimizer.step(flat, gflat)
            epoch_nll += nll
            epoch_steps += steps
        curve_steps.append(epoch_nll / epoch_steps)
        curve_records.append(epoch_nll / len(prepared))
    return TrainResult(model, curve_steps, curve_records)


def grad_check(model: InferenceModel, sim: Simulator, trace, text: str,
               epsilon: float = 1e-4, n_params: int = 200, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks ``n_params`` randomly chosen parameter coordinates spread across
    every parameter array. Meant for small models (hidden <= 16); float64
    throughout, so agreement below 1e-4 indicates a correct backward pass.
    """
    if not trace:
        raise GengradeError("grad_check: record has an empty trace, nothing to differentiate")
    rec = prepare_record(sim, model.vocab, trace, text)

    def loss_only():
        loss, _, _, _ = batch_loss_and_grads(model, [rec], compute_grads=False)
        return loss

    _, _, _, grads = batch_loss_and_grads(model, [rec])
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            raise GengradeError("grad_check: non-finite analytic gradient")

    rng = np.random.default_rng(seed)
    names = sorted(model.params)
    worst = 0.0
    for _ in range(n_params):
        name = names[rng.integers(len(names))]
        param = model.params[name]
        flat_index = int(rng.integers(param.size))
        index = np.unravel_index(flat_index, param.shape)
        original = param[index]
        param[index] = original + epsilon
        loss_plus = loss_only()
        param[index] = original - epsilon
        loss_minus = loss_only()
        param[index] = original
        fd = (loss_plus - loss_minus) / (2.0 * epsilon)
        analytic = grads[name][index]
        err = abs(analytic - fd) / max(1e-8, abs(analytic) + abs(fd))
        worst = max(worst, err)
    return worst
