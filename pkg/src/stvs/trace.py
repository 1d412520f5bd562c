"""Structural op tracing.

The ablation tests verify network structure by counting which semantic ops
a forward pass executes (temporal convolutions, shuffles, attention usage)
rather than by inspecting activations. Recording is off unless a trace is
active; a context variable keeps concurrent forwards independent.
"""

from __future__ import annotations

import contextvars
from collections import Counter
from contextlib import contextmanager

_ACTIVE: contextvars.ContextVar["OpTrace | None"] = contextvars.ContextVar(
    "stvs_op_trace", default=None)


class OpTrace:
    def __init__(self):
        self.events: list[str] = []

    def counts(self) -> Counter:
        return Counter(self.events)


def record(event: str) -> None:
    trace = _ACTIVE.get()
    if trace is not None:
        trace.events.append(event)


@contextmanager
def capture():
    """Collect semantic op events emitted while the context is active."""
    trace = OpTrace()
    token = _ACTIVE.set(trace)
    try:
        yield trace
    finally:
        _ACTIVE.reset(token)
