"""Exception hierarchy shared across the engine.

Load-time problems raise :class:`GrammarError`; runtime execution problems
raise :class:`SimulationError` subclasses. Data-shaped errors (bad files,
bad traces) all derive from :class:`GengradeError` so the CLI can map them
to a stable exit code.
"""

from __future__ import annotations


class GengradeError(Exception):
    """Base class for all errors raised by this package."""


class GrammarError(GengradeError):
    """A grammar document failed to parse or violates a structural invariant."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class SimulationError(GengradeError):
    """Simulator execution failed."""


class DeadContextError(SimulationError):
    """A reached decision node has no guard-satisfiable rule."""

    def __init__(self, node: str, partial_trace: list):
        super().__init__(
            f"dead context: no satisfiable rule at node {node!r} "
            f"after trace {partial_trace!r}"
        )
        self.node = node
        self.partial_trace = partial_trace


class DepthExceededError(SimulationError):
    """Node expansion nesting exceeded the simulator's max_depth."""

    def __init__(self, max_depth: int, node: str):
        super().__init__(f"expansion of {node!r} exceeds max_depth={max_depth}")
        self.max_depth = max_depth
        self.node = node


class TransformError(SimulationError):
    """A template transform received text it cannot handle."""


class InvalidTraceError(SimulationError):
    """A trace does not replay against the simulator.

    ``step`` is the index of the first divergent step (or the trace length
    when the trace is too short/long).
    """

    def __init__(self, step: int, reason: str):
        super().__init__(f"invalid trace at step {step}: {reason}")
        self.step = step
        self.reason = reason


class SpaceLimitError(SimulationError):
    """Exhaustive enumeration found more trajectories than the caller allowed."""


class DatasetError(GengradeError):
    """A dataset file is malformed or an operation received an empty dataset."""


class NonFiniteLossError(GengradeError):
    """Training produced a non-finite (or absurdly large) loss."""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(
            f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}; "
            "training aborted (try a lower learning rate)"
        )
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
