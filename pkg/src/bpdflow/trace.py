"""Execution traces and their JSON-lines encoding.

Each line is one fired transition::

    {"step":0,"kind":"fireStart","subject":"start","consumed":["start"],"produced":["f1"],"clock":0,"dataHash":"..."}

``dataHash`` is the 64-bit FNV-1a hash (offset basis 0xcbf29ce484222325,
prime 0x100000001b3) of the UTF-8 bytes of ``json.dumps(caseData,
sort_keys=True, separators=(",", ":"))``, as 16 lowercase hex digits.
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

from bpdflow.transitions import Transition

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK
    return h


def canonical_data(data: Mapping[str, Any]) -> str:
    return json.dumps(dict(data), sort_keys=True, separators=(",", ":"))


def data_hash(data: Mapping[str, Any]) -> str:
    return f"{fnv1a_64(canonical_data(data).encode('utf-8')):016x}"


@dataclass(frozen=True)
class TraceRecord:
    step: int
    transition: Transition
    clock: int
    data_hash: str

    def to_dict(self) -> dict[str, Any]:
        t = self.transition
        return {
            "step": self.step,
            "kind": t.kind,
            "subject": t.subject,
            "consumed": list(t.consumed),
            "produced": list(t.produced),
            "clock": self.clock,
            "dataHash": self.data_hash,
        }


@dataclass
class Trace:
    definition_id: str | None
    records: list[TraceRecord] = field(default_factory=list)
    verdict: str = ""
    reason: str = ""

    def __len__(self) -> int:
        return len(self.records)

    @property
    def transitions(self) -> list[Transition]:
        return [r.transition for r in self.records]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), separators=(",", ":")) + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str, definition_id: str | None = None) -> Trace:
        records = []
        for line in text.splitlines():
            if not line.strip():
                continue
            raw = json.loads(line)
            t = Transition.make(raw["kind"], raw["subject"], raw["consumed"], raw["produced"])
            records.append(TraceRecord(raw["step"], t, raw["clock"], raw["dataHash"]))
        return cls(definition_id, records)
