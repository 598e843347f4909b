"""Simulated speech channel between robots and the assistant.

The TTS -> assistant -> STT -> chatbot pipeline reduced to text utterances
with configurable latency and a seeded single-word-deletion mishear model.
Each channel is a duplex pair: an utterance is heard by exactly one listener,
the other endpoint.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable

from .errors import VahrError
from .sim import Scheduler

SUNNY_WEATHER = "SunnyWeather"
RAINY_WEATHER = "RainyWeather"
UNRECOGNIZED = "Unrecognized"

# keyword -> intent, first hit wins, case-insensitive substring match
_LEX_RULES: tuple[tuple[str, str], ...] = (
    ("sunny", SUNNY_WEATHER),
    ("rain", RAINY_WEATHER),
)


class VoiceError(VahrError):
    pass


class NoListener(VoiceError):
    pass


class EmptyUtterance(VoiceError):
    pass


@dataclass(frozen=True)
class Utterance:
    speaker: str
    text: str
    spoken_at: int
    heard_at: int

    def to_json_dict(self) -> dict:
        return {
            "kind": "utterance",
            "speaker": self.speaker,
            "text": self.text,
            "spoken_at": self.spoken_at,
            "heard_at": self.heard_at,
        }


@dataclass(frozen=True)
class RobotIntent:
    name: str
    source_text: str


def lex_interpret(text: str) -> RobotIntent:
    """Keyword classification of a heard response; Unrecognized if no rule fires."""
    lowered = text.lower()
    for keyword, intent in _LEX_RULES:
        if keyword in lowered:
            return RobotIntent(name=intent, source_text=text)
    return RobotIntent(name=UNRECOGNIZED, source_text=text)


def recognize(utterance: Utterance | str, rng: random.Random, p_mishear: float = 0.0) -> str:
    """Speech-to-text with a seeded mishear model.

    With probability p_mishear one uniformly chosen word is dropped; otherwise
    the text passes through verbatim.
    """
    text = utterance.text if isinstance(utterance, Utterance) else utterance
    words = text.split()
    if not words:
        return text
    if p_mishear > 0 and rng.random() < p_mishear:
        victim = rng.randrange(len(words))
        words = words[:victim] + words[victim + 1:]
        return " ".join(words)
    return text


Listener = Callable[[Utterance], None]


class VoiceChannel:
    """Duplex speech link between exactly two co-located agents."""

    def __init__(self, scheduler: Scheduler, latency_ms: int = 0,
                 on_utterance: Callable[[Utterance], None] | None = None):
        self._scheduler = scheduler
        self.latency_ms = latency_ms
        self._on_utterance = on_utterance
        self._listeners: dict[str, Listener] = {}

    def bind(self, agent_id: str, listener: Listener) -> None:
        if len(self._listeners) >= 2 and agent_id not in self._listeners:
            raise VoiceError("channel already has two endpoints")
        self._listeners[agent_id] = listener

    def say(self, speaker: str, text: str) -> Utterance:
        """Deliver text to the other endpoint after the speech latency."""
        if not text:
            raise EmptyUtterance(f"{speaker} tried to say nothing")
        if speaker not in self._listeners:
            raise NoListener(f"{speaker} is not bound to this channel")
        others = [aid for aid in self._listeners if aid != speaker]
        if not others:
            raise NoListener(f"nobody within audio scope of {speaker}")
        target = others[0]
        now = self._scheduler.now_ms
        utt = Utterance(speaker=speaker, text=text,
                        spoken_at=now, heard_at=now + self.latency_ms)
        if self._on_utterance is not None:
            self._on_utterance(utt)
        listener = self._listeners[target]
        self._scheduler.call_at(utt.heard_at, lambda: listener(utt))
        return utt
