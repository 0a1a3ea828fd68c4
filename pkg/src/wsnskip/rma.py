"""Request Management Algorithm: skip request rounds after runs of silent replies.

The counter ``c`` counts consecutive silent (perfectly predicted) contacts and
selects the phase; ``q`` is the number of rounds skipped after the current
contact:

* CP  (``c < tr1``): ``q = 0``, contact every round.
* FSP (``tr1 <= c < tr2``): ``q`` doubles, seeded at 1.
* LSP (``c >= tr2``): ``q`` grows by one per contact.

A reply demotes the state by exactly one phase: LSP re-enters FSP at
``c = tr1, q = 1``; FSP and CP drop to ``c = 0, q = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

from .forecast import Predictor, predict_closed_loop
from .protocol import Source, StoredValue

__all__ = ["Phase", "RmaState", "rma_update", "fill_skips", "rma_schedule", "CLASSICAL_TR1"]

# tr1 large enough that the counter never reaches it: pure classical mode
CLASSICAL_TR1 = 10**9


class Phase(str, Enum):
    CP = "CP"
    FSP = "FSP"
    LSP = "LSP"


@dataclass(frozen=True)
class RmaState:
    c: int = 0
    q: int = 0
    tr1: int = 3
    tr2: int = 7

    def __post_init__(self):
        if self.tr1 < 1 or self.tr2 < 1:
            raise ValueError("thresholds must be positive")
        if not self.tr1 < self.tr2:
            raise ValueError("tr1 must be < tr2")
        if self.c < 0 or self.q < 0:
            raise ValueError("c and q must be non-negative")
        if self.c < self.tr1 and self.q != 0:
            raise ValueError("q must be 0 in the classical phase")

    @property
    def phase(self) -> Phase:
        if self.c < self.tr1:
            return Phase.CP
        if self.c < self.tr2:
            return Phase.FSP
        return Phase.LSP


def rma_update(state: RmaState, replied: bool) -> RmaState:
    """Advance the scheduler after one contacted round."""
    tr1, tr2 = state.tr1, state.tr2
    if replied:
        if state.phase is Phase.LSP:
            return RmaState(tr1, 1, tr1, tr2)
        return RmaState(0, 0, tr1, tr2)
    c = state.c + 1
    if c < tr1:
        q = 0
    elif c < tr2:
        q = max(1, 2 * state.q)
    else:
        q = state.q + 1
    return RmaState(c, q, tr1, tr2)


def fill_skips(
    bs_history: Sequence[StoredValue | float],
    model: Predictor,
    from_t: int,
    count: int,
) -> list[StoredValue]:
    """Closed-loop forecasts standing in for ``count`` skipped rounds from ``from_t``."""
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return []
    history = [h.value_s if isinstance(h, StoredValue) else float(h) for h in bs_history]
    values = predict_closed_loop(model, history, count)
    return [StoredValue(from_t + i, v, Source.SKIPPED_FILL) for i, v in enumerate(values)]


def rma_schedule(
    tr1: int,
    tr2: int,
    outcomes: Iterable[bool],
    horizon: Optional[int] = None,
) -> list[int]:
    """1-based round indices at which the sensor is contacted.

    ``outcomes[i]`` says whether the i-th contact got a reply. Stops when the
    outcomes run out or the next contact would fall past ``horizon``.
    """
    state = RmaState(tr1=tr1, tr2=tr2)
    contacts = []
    t = 1
    for replied in outcomes:
        if horizon is not None and t > horizon:
            break
        contacts.append(t)
        state = rma_update(state, replied)
        t += state.q + 1
    return contacts
