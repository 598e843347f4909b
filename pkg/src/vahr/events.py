"""Run event log: typed interaction events plus free-form JSONL records.

The log is the single source of truth for a run. Metrics consume the typed
interaction subset; task evaluation and replay consume the full record
stream. Serialization is canonical (sorted keys) so identical runs produce
byte-identical files and hashes.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable


class EventKind(str, Enum):
    COMMAND_START = "CommandStart"
    COMMAND_ACK = "CommandAck"
    ROBOT_AUTONOMOUS_START = "RobotAutonomousStart"
    ROBOT_IDLE = "RobotIdle"
    ROBOT_STUCK = "RobotStuck"
    PUZZLE_PIECE_PLACED = "PuzzlePiecePlaced"
    UTTERANCE_START = "UtteranceStart"
    UTTERANCE_END = "UtteranceEnd"


@dataclass(frozen=True)
class InteractionEvent:
    kind: EventKind
    sim_time: int
    robot_id: int | None = None


def dumps_record(record: dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


class EventLog:
    """Append-only, time-ordered record list with canonical JSONL output."""

    def __init__(self):
        self.records: list[dict[str, Any]] = []
        self._last_t = 0

    def append(self, record: dict[str, Any]) -> None:
        t = record.get("t")
        if not isinstance(t, int):
            raise ValueError(f"record needs an integer 't': {record!r}")
        if t < self._last_t:
            raise ValueError(f"record at t={t} after t={self._last_t}: log must stay ordered")
        self._last_t = t
        self.records.append(record)

    def interaction(self, kind: EventKind, t: int, robot_id: int | None = None) -> None:
        rec: dict[str, Any] = {"kind": "interaction", "event": kind.value, "t": t}
        if robot_id is not None:
            rec["robot_id"] = robot_id
        self.append(rec)

    def interaction_events(self) -> list[InteractionEvent]:
        return interaction_events(self.records)

    def to_jsonl(self) -> str:
        return "".join(dumps_record(r) + "\n" for r in self.records)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode("utf-8")).hexdigest()

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "EventLog":
        log = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                log.append(json.loads(line))
        return log


def interaction_events(records: Iterable[dict[str, Any]]) -> list[InteractionEvent]:
    out = []
    for rec in records:
        if rec.get("kind") == "interaction":
            out.append(InteractionEvent(
                kind=EventKind(rec["event"]),
                sim_time=rec["t"],
                robot_id=rec.get("robot_id"),
            ))
    return out
