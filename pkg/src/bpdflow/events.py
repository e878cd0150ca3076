"""External events and the JSON-lines event script format.

One script line is ``{"after": <step>, "event": {...}}``; the event object is
tagged by ``"kind"``::

    {"kind": "message", "name": "b", "target": "buyer", "payload": {}}
    {"kind": "advanceTime", "ticks": 5}
    {"kind": "raiseError", "activity": "work", "error": "failure"}
    {"kind": "cancelTransaction", "transaction": "booking"}
    {"kind": "completeTask", "task": "review", "assignments": {"ok": true}}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Union


class ScriptError(ValueError):
    """Malformed event script line."""


@dataclass(frozen=True)
class Message:
    name: str
    target: str
    payload: dict[str, Any] = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class AdvanceTime:
    ticks: int


@dataclass(frozen=True)
class RaiseError:
    activity: str
    error: str = ""


@dataclass(frozen=True)
class CancelTransaction:
    transaction: str


@dataclass(frozen=True)
class CompleteTask:
    task: str
    assignments: dict[str, Any] = field(default_factory=dict, hash=False)


ExternalEvent = Union[Message, AdvanceTime, RaiseError, CancelTransaction, CompleteTask]


@dataclass(frozen=True)
class ScriptEntry:
    after: int
    event: ExternalEvent


def event_to_dict(event: ExternalEvent) -> dict[str, Any]:
    if isinstance(event, Message):
        return {"kind": "message", "name": event.name, "target": event.target, "payload": dict(event.payload)}
    if isinstance(event, AdvanceTime):
        return {"kind": "advanceTime", "ticks": event.ticks}
    if isinstance(event, RaiseError):
        return {"kind": "raiseError", "activity": event.activity, "error": event.error}
    if isinstance(event, CancelTransaction):
        return {"kind": "cancelTransaction", "transaction": event.transaction}
    return {"kind": "completeTask", "task": event.task, "assignments": dict(event.assignments)}


_FIELDS: dict[str, dict[str, type]] = {
    "message": {"name": str, "target": str, "payload": dict},
    "advanceTime": {"ticks": int},
    "raiseError": {"activity": str, "error": str},
    "cancelTransaction": {"transaction": str},
    "completeTask": {"task": str, "assignments": dict},
}
_OPTIONAL = {"payload", "error", "assignments", "name"}


def event_from_dict(raw: Any) -> ExternalEvent:
    if not isinstance(raw, dict):
        raise ScriptError("event must be an object")
    kind = raw.get("kind")
    if kind not in _FIELDS:
        raise ScriptError(f"unknown event kind {kind!r}")
    spec = _FIELDS[kind]
    for key in raw:
        if key != "kind" and key not in spec:
            raise ScriptError(f"{kind} event has no field {key!r}")
    values: dict[str, Any] = {}
    for key, typ in spec.items():
        if key not in raw:
            if key in _OPTIONAL:
                continue
            raise ScriptError(f"{kind} event requires field {key!r}")
        value = raw[key]
        if not isinstance(value, typ) or (typ is int and isinstance(value, bool)):
            raise ScriptError(f"{kind} field {key!r} has the wrong type")
        values[key] = value
    if kind == "message":
        return Message(values.get("name", ""), values["target"], values.get("payload", {}))
    if kind == "advanceTime":
        return AdvanceTime(values["ticks"])
    if kind == "raiseError":
        return RaiseError(values["activity"], values.get("error", ""))
    if kind == "cancelTransaction":
        return CancelTransaction(values["transaction"])
    return CompleteTask(values["task"], values.get("assignments", {}))


def parse_script(text: str) -> list[ScriptEntry]:
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScriptError(f"line {lineno}: {exc.msg}") from None
        if not isinstance(raw, dict) or set(raw) != {"after", "event"}:
            raise ScriptError(f"line {lineno}: expected an object with 'after' and 'event'")
        after = raw["after"]
        if not isinstance(after, int) or isinstance(after, bool) or after < 0:
            raise ScriptError(f"line {lineno}: 'after' must be a non-negative integer")
        try:
            entries.append(ScriptEntry(after, event_from_dict(raw["event"])))
        except ScriptError as exc:
            raise ScriptError(f"line {lineno}: {exc}") from None
    return entries


def format_script(entries: list[ScriptEntry]) -> str:
    return "".join(
        json.dumps({"after": e.after, "event": event_to_dict(e.event)}, separators=(",", ":")) + "\n"
        for e in entries
    )
