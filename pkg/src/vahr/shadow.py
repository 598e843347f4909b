"""Device-shadow state store: desired/reported maps, derived delta, versions.

The feedback half of the command loop. Robots report state changes here and
the assistant reads them back when composing a spoken response. A request
counter per thing makes the request-count economy of the design testable
against a polling baseline.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import VahrError

Scalar = str | int | float | bool
StateMap = dict[str, Scalar]

_ZERO_CLOCK: Callable[[], int] = lambda: 0


class ShadowError(VahrError):
    pass


class UnknownThing(ShadowError):
    pass


class InvalidPatch(ShadowError):
    pass


def _check_scalars(entries: StateMap) -> None:
    for k, v in entries.items():
        if not isinstance(k, str):
            raise InvalidPatch(f"non-string key {k!r}")
        if not isinstance(v, (str, int, float, bool)):
            raise InvalidPatch(f"non-scalar value for {k!r}: {type(v).__name__}")


def compute_delta(desired: StateMap, reported: StateMap) -> StateMap:
    """Desired entries not yet met: key absent from reported or value differs."""
    return {
        k: v
        for k, v in desired.items()
        if k not in reported or reported[k] != v
    }


@dataclass(frozen=True)
class StatePatch:
    entries: StateMap = field(default_factory=dict)
    tombstones: frozenset[str] = frozenset()

    def __post_init__(self):
        _check_scalars(self.entries)
        overlap = set(self.entries) & self.tombstones
        if overlap:
            raise InvalidPatch(f"keys both set and cleared: {sorted(overlap)}")

    def apply(self, base: StateMap) -> StateMap:
        merged = {k: v for k, v in base.items() if k not in self.tombstones}
        merged.update(self.entries)
        return merged


@dataclass(frozen=True)
class ShadowDocument:
    thing_id: str
    desired: StateMap
    reported: StateMap
    version: int
    last_updated: int

    @property
    def delta(self) -> StateMap:
        return compute_delta(self.desired, self.reported)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "thing_id": self.thing_id,
            "version": self.version,
            "desired": dict(self.desired),
            "reported": dict(self.reported),
            "delta": self.delta,
            "last_updated": self.last_updated,
        }


class ShadowStore:
    """Versioned shadow documents, one per registered thing.

    Documents are immutable snapshots; every accepted update replaces the
    stored document with version + 1. Reads and writes both count as shadow
    requests (registration does not).
    """

    def __init__(self, clock: Callable[[], int] = _ZERO_CLOCK):
        self._clock = clock
        self._lock = threading.RLock()
        self._docs: dict[str, ShadowDocument] = {}
        self._requests: dict[str, int] = {}

    def register(self, thing_id: str) -> ShadowDocument:
        with self._lock:
            if thing_id in self._docs:
                return self._docs[thing_id]
            doc = ShadowDocument(
                thing_id=thing_id,
                desired={},
                reported={},
                version=1,
                last_updated=self._clock(),
            )
            self._docs[thing_id] = doc
            self._requests[thing_id] = 0
            return doc

    def things(self) -> list[str]:
        with self._lock:
            return sorted(self._docs)

    def _update(self, thing_id: str, patch: StatePatch, side: str) -> ShadowDocument:
        with self._lock:
            old = self._docs.get(thing_id)
            if old is None:
                raise UnknownThing(thing_id)
            self._requests[thing_id] += 1
            desired, reported = old.desired, old.reported
            if side == "desired":
                desired = patch.apply(desired)
            else:
                reported = patch.apply(reported)
            doc = ShadowDocument(
                thing_id=thing_id,
                desired=desired,
                reported=reported,
                version=old.version + 1,
                last_updated=self._clock(),
            )
            self._docs[thing_id] = doc
            return doc

    def update_reported(self, thing_id: str, patch: StatePatch) -> ShadowDocument:
        return self._update(thing_id, patch, "reported")

    def update_desired(self, thing_id: str, patch: StatePatch) -> ShadowDocument:
        return self._update(thing_id, patch, "desired")

    def get_shadow(self, thing_id: str) -> ShadowDocument:
        with self._lock:
            doc = self._docs.get(thing_id)
            if doc is None:
                raise UnknownThing(thing_id)
            self._requests[thing_id] += 1
            return doc

    def peek(self, thing_id: str) -> ShadowDocument:
        """Read without charging a request; for logging and test assertions."""
        with self._lock:
            doc = self._docs.get(thing_id)
            if doc is None:
                raise UnknownThing(thing_id)
            return doc

    def request_count(self, thing_id: str) -> int:
        with self._lock:
            if thing_id not in self._requests:
                raise UnknownThing(thing_id)
            return self._requests[thing_id]

    def total_requests(self) -> int:
        with self._lock:
            return sum(self._requests.values())
