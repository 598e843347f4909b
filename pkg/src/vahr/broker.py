"""In-process topic-based pub/sub broker.

One-to-many, asynchronous command fan-out between the assistant, robots and
coordinator logic. Topics are `/`-separated paths; filters support the
single-level `+` and trailing multi-level `#` wildcards. Delivery is pull
based: subscribers drain their queues, and a message published at logical
time t becomes drainable at t + latency_ms.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import VahrError

Scalar = str | int | float | bool

_ZERO_CLOCK: Callable[[], int] = lambda: 0


class BrokerError(VahrError):
    pass


class InvalidTopic(BrokerError):
    pass


class InvalidFilter(BrokerError):
    pass


class DuplicateSubscription(BrokerError):
    pass


class UnknownSubscriber(BrokerError):
    pass


def split_topic(path: str) -> list[str]:
    if not path:
        raise InvalidTopic("empty topic")
    segments = path.split("/")
    if any(seg == "" for seg in segments):
        raise InvalidTopic(f"empty segment in {path!r}")
    return segments


def validate_topic(topic: str) -> list[str]:
    """A publishable topic: non-empty segments, no wildcards."""
    segments = split_topic(topic)
    for seg in segments:
        if "+" in seg or "#" in seg:
            raise InvalidTopic(f"wildcard in publish topic {topic!r}")
    return segments


def validate_filter(pattern: str) -> list[str]:
    """`+` must occupy a whole segment; `#` only as the final segment."""
    try:
        segments = split_topic(pattern)
    except InvalidTopic as exc:
        raise InvalidFilter(str(exc)) from None
    for i, seg in enumerate(segments):
        if seg == "#":
            if i != len(segments) - 1:
                raise InvalidFilter(f"'#' not in last position in {pattern!r}")
        elif "#" in seg:
            raise InvalidFilter(f"'#' inside segment in {pattern!r}")
        elif "+" in seg and seg != "+":
            raise InvalidFilter(f"'+' inside segment in {pattern!r}")
    return segments


@dataclass(frozen=True)
class TopicFilter:
    pattern: str

    def __post_init__(self):
        validate_filter(self.pattern)

    def matches(self, topic: str) -> bool:
        return match(self.pattern, topic)


def match(pattern: str | TopicFilter, topic: str) -> bool:
    """True iff a concrete topic matches the filter under +/# semantics.

    `+` matches exactly one segment; a trailing `#` matches zero or more.
    """
    if isinstance(pattern, TopicFilter):
        pattern = pattern.pattern
    fsegs = validate_filter(pattern)
    tsegs = validate_topic(topic)
    for i, fs in enumerate(fsegs):
        if fs == "#":
            return True
        if i >= len(tsegs):
            return False
        if fs != "+" and fs != tsegs[i]:
            return False
    return len(fsegs) == len(tsegs)


@dataclass(frozen=True)
class Message:
    topic: str
    payload: dict[str, Scalar]
    publisher_id: str
    seq: int
    sim_time: int

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "topic": self.topic,
            "payload": dict(self.payload),
            "publisher_id": self.publisher_id,
            "seq": self.seq,
            "sim_time": self.sim_time,
        }


@dataclass
class Subscription:
    subscriber_id: str
    filter: TopicFilter
    queue: list[tuple[int, Message]] = field(default_factory=list)  # (drainable_at, msg)


class Broker:
    """Topic broker; thread-safe, deterministic under a single scheduler clock.

    `clock` supplies logical milliseconds; messages published at time t are
    drainable at t + latency_ms. With the default zero clock and zero latency
    the broker behaves synchronously, which is what unit tests want.
    """

    def __init__(self, clock: Callable[[], int] = _ZERO_CLOCK, latency_ms: int = 0):
        self._clock = clock
        self.latency_ms = latency_ms
        self._lock = threading.RLock()
        self._subs: dict[str, list[Subscription]] = {}  # subscriber_id -> subscriptions
        self._next_seq: dict[str, int] = {}
        self.publish_count = 0

    def subscribe(self, subscriber_id: str, filter: TopicFilter | str) -> Subscription:
        if isinstance(filter, str):
            filter = TopicFilter(filter)
        with self._lock:
            existing = self._subs.setdefault(subscriber_id, [])
            if any(s.filter == filter for s in existing):
                raise DuplicateSubscription(f"{subscriber_id!r} already holds {filter.pattern!r}")
            sub = Subscription(subscriber_id=subscriber_id, filter=filter)
            existing.append(sub)
            return sub

    def publish(self, publisher_id: str, topic: str, payload: dict[str, Scalar]) -> int:
        """Enqueue to every matching subscription; returns subscribers reached.

        Never blocks on subscribers: delivery is enqueue-only.
        """
        validate_topic(topic)
        with self._lock:
            seq = self._next_seq.get(publisher_id, 0) + 1
            self._next_seq[publisher_id] = seq
            now = self._clock()
            msg = Message(
                topic=topic,
                payload=dict(payload),
                publisher_id=publisher_id,
                seq=seq,
                sim_time=now,
            )
            reached: set[str] = set()
            drainable_at = now + self.latency_ms
            for subs in self._subs.values():
                for sub in subs:
                    if sub.filter.matches(topic):
                        sub.queue.append((drainable_at, msg))
                        reached.add(sub.subscriber_id)
            self.publish_count += 1
            return len(reached)

    def drain(self, subscriber_id: str) -> list[Message]:
        """Remove and return every drainable message, in delivery order.

        Delivery order is (sim_time, publisher_id, seq); per-publisher FIFO
        follows because seq rises monotonically per publisher.
        """
        with self._lock:
            if subscriber_id not in self._subs:
                raise UnknownSubscriber(subscriber_id)
            now = self._clock()
            ready: list[Message] = []
            for sub in self._subs[subscriber_id]:
                still_queued = []
                for drainable_at, msg in sub.queue:
                    if drainable_at <= now:
                        ready.append(msg)
                    else:
                        still_queued.append((drainable_at, msg))
                sub.queue = still_queued
            ready.sort(key=lambda m: (m.sim_time, m.publisher_id, m.seq))
            return ready

    def pending_count(self, subscriber_id: str) -> int:
        with self._lock:
            if subscriber_id not in self._subs:
                raise UnknownSubscriber(subscriber_id)
            return sum(len(s.queue) for s in self._subs[subscriber_id])
