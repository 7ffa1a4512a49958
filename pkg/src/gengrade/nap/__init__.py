"""Neural approximate parsing: an amortized posterior over decision traces.

The model reads a production text with a recurrent encoder and decodes the
trace autoregressively, one decision at a time, with per-node value heads.
Everything is plain float64 numpy with hand-written backward passes so the
gradients can be checked against finite differences.
"""

from .model import InferenceModel, ModelConfig, build_model, load_model, save_model
from .vocab import Vocabulary
from .training import train, grad_check
from .decoding import parse, posterior_eval, ParseResult

__all__ = [
    "InferenceModel",
    "ModelConfig",
    "Vocabulary",
    "build_model",
    "save_model",
    "load_model",
    "train",
    "grad_check",
    "parse",
    "posterior_eval",
    "ParseResult",
]
