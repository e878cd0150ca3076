"""Reified transition records shared by the engine, traces and the analyzer."""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable
from dataclasses import dataclass

TRANSITION_KINDS: tuple[str, ...] = (
    "fireStart",
    "activityStart",
    "completeTask",
    "gatewaySplit",
    "gatewayJoin",
    "eventCatch",
    "boundaryInterrupt",
    "transactionOutcome",
    "compensationRun",
    "processEnd",
)
KIND_ORDER = {kind: i for i, kind in enumerate(TRANSITION_KINDS)}


def multiset(positions: Iterable[str]) -> tuple[str, ...]:
    return tuple(sorted(positions))


@dataclass(frozen=True)
class Transition:
    kind: str
    subject: str
    consumed: tuple[str, ...]
    produced: tuple[str, ...]

    @classmethod
    def make(cls, kind: str, subject: str, consumed: Iterable[str], produced: Iterable[str]) -> Transition:
        return cls(kind, subject, multiset(consumed), multiset(produced))

    @property
    def id(self) -> str:
        return f"{self.kind}:{self.subject}:{'+'.join(self.consumed)}>{'+'.join(self.produced)}"

    @property
    def sort_key(self) -> tuple[str, int, str]:
        return (self.subject, KIND_ORDER[self.kind], self.id)

    def apply(self, marking: Counter[str]) -> Counter[str]:
        """Return ``marking - consumed + produced``; raises ``ValueError`` if a consumed token is absent."""
        out = Counter(marking)
        for pos in self.consumed:
            if out[pos] <= 0:
                raise ValueError(f"{self.id} consumes {pos!r}, which holds no token")
            out[pos] -= 1
            if out[pos] == 0:
                del out[pos]
        for pos in self.produced:
            out[pos] += 1
        return out
