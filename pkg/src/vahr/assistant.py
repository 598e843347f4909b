"""Virtual-assistant engine: skill model, utterance interpretation, intent handling.

Interpretation is a closed-grammar matcher: each intent carries sample
templates with {slot} placeholders, slots resolve against fixed vocabularies,
and a template matches when it aligns with a contiguous token span of the
utterance. Confidence is the fraction of utterance tokens the matched span
covers. Handling a command intent publishes exactly one broker message and
reads each addressed robot's shadow exactly once before composing the reply.
"""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .broker import Broker
from .errors import VahrError
from .shadow import ShadowStore, UnknownThing

CONFIDENCE_THRESHOLD = 0.6

# Closed slot vocabularies; multi-word phrases are matched longest-first.
_ROBOT_WORDS = {"one": 1, "two": 2, "three": 3, "four": 4}
ROBOT_VOCAB: dict[str, int] = {}
for _word, _num in _ROBOT_WORDS.items():
    ROBOT_VOCAB[_word] = _num
    ROBOT_VOCAB[str(_num)] = _num
    ROBOT_VOCAB[f"placebot {_word}"] = _num
    ROBOT_VOCAB[f"placebot {_num}"] = _num
ZONE_VOCAB: dict[str, str] = {
    "a": "A",
    "b": "B",
    "c": "C",
    "d": "D",
    "loading": "Loading",
    "loading zone": "Loading",
}
SLOT_TYPES = ("robot_id", "zone", "free_text")

_PLACEHOLDER = re.compile(r"\{([a-z_][a-z0-9_]*)\}")
_PUNCT = str.maketrans("", "", ",.?!;:'\"")


class AssistantError(VahrError):
    pass


class NoIntentMatched(AssistantError):
    pass


class AmbiguousIntent(AssistantError):
    pass


class InvalidSkillModel(AssistantError):
    pass


class RobotUnreachable(AssistantError):
    pass


def tokenize(text: str) -> list[str]:
    return text.casefold().translate(_PUNCT).split()


@dataclass(frozen=True)
class ActionSpec:
    """What handling an intent does: publish target plus response shape.

    `addresses` picks whose shadow the handler reads back: the robot named by
    the slot, every roster robot, the first roster robot (coordination intents
    that fan out by protocol), or nobody.
    """

    topic: str | None = None               # may contain {slot} placeholders
    command: dict[str, Any] | None = None  # payload template, {slot} values substituted
    report_state: bool = True
    addresses: str = "auto"                # auto | slot | all | first | none

    def __post_init__(self):
        if self.topic is not None and self.command is None:
            raise InvalidSkillModel("action with a topic needs a command payload")
        if self.addresses not in ("auto", "slot", "all", "first", "none"):
            raise InvalidSkillModel(f"unknown addressing mode {self.addresses!r}")


@dataclass(frozen=True)
class IntentSpec:
    name: str
    samples: tuple[str, ...]
    slots: dict[str, str] = field(default_factory=dict)  # slot name -> slot type
    action: ActionSpec = ActionSpec(topic=None, command=None, report_state=False)

    def __post_init__(self):
        if not self.samples:
            raise InvalidSkillModel(f"intent {self.name!r} has no sample utterances")
        for stype in self.slots.values():
            if stype not in SLOT_TYPES:
                raise InvalidSkillModel(f"unknown slot type {stype!r} in {self.name!r}")
        declared = set(self.slots)
        for sample in self.samples:
            used = set(_PLACEHOLDER.findall(sample))
            if used != declared:
                raise InvalidSkillModel(
                    f"template {sample!r} of {self.name!r} uses slots {sorted(used)}, "
                    f"declared {sorted(declared)}"
                )


@dataclass(frozen=True)
class SkillModel:
    intents: tuple[IntentSpec, ...]

    def __post_init__(self):
        names = [i.name for i in self.intents]
        if len(names) != len(set(names)):
            raise InvalidSkillModel("intent names must be unique")

    def intent(self, name: str) -> IntentSpec:
        for spec in self.intents:
            if spec.name == name:
                return spec
        raise KeyError(name)

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "SkillModel":
        if "intents" not in data:
            raise InvalidSkillModel("skill model JSON needs an 'intents' list")
        intents = []
        for raw in data["intents"]:
            action_raw = raw.get("action") or {}
            action = ActionSpec(
                topic=action_raw.get("topic"),
                command=action_raw.get("command"),
                report_state=bool(action_raw.get("report_state", False)),
                addresses=action_raw.get("addresses", "auto"),
            )
            intents.append(IntentSpec(
                name=raw["name"],
                samples=tuple(raw["samples"]),
                slots=dict(raw.get("slots", {})),
                action=action,
            ))
        return cls(intents=tuple(intents))

    @classmethod
    def from_json_file(cls, path: str | Path) -> "SkillModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class Intent:
    name: str
    slots: dict[str, Any]
    confidence: float
    ambiguous: bool = False


@dataclass(frozen=True)
class SpeechResponse:
    text: str
    includes_state_report: bool = False

    def __post_init__(self):
        if not self.text:
            raise AssistantError("speech response must not be empty")


def _vocab_entries(slot_type: str) -> list[tuple[tuple[str, ...], Any]]:
    vocab = ROBOT_VOCAB if slot_type == "robot_id" else ZONE_VOCAB
    entries = [(tuple(phrase.split()), value) for phrase, value in vocab.items()]
    # longest phrase first so "placebot one" beats "one"; alphabetical to stay stable
    entries.sort(key=lambda e: (-len(e[0]), e[0]))
    return entries


def _alignments(ttoks: list[str], utoks: list[str], ti: int, ui: int,
                slots: dict[str, Any], slot_types: dict[str, str],
                out: list[tuple[int, dict[str, Any]]]) -> None:
    if ti == len(ttoks):
        out.append((ui, dict(slots)))
        return
    tok = ttoks[ti]
    ph = _PLACEHOLDER.fullmatch(tok)
    if ph is None:
        if ui < len(utoks) and utoks[ui] == tok:
            _alignments(ttoks, utoks, ti + 1, ui + 1, slots, slot_types, out)
        return
    name = ph.group(1)
    stype = slot_types[name]
    if stype == "free_text":
        for end in range(len(utoks), ui, -1):  # longest capture first
            slots[name] = " ".join(utoks[ui:end])
            _alignments(ttoks, utoks, ti + 1, end, slots, slot_types, out)
            del slots[name]
        return
    for phrase, value in _vocab_entries(stype):
        if tuple(utoks[ui:ui + len(phrase)]) == phrase:
            slots[name] = value
            _alignments(ttoks, utoks, ti + 1, ui + len(phrase), slots, slot_types, out)
            del slots[name]


def interpret(utterance: str, model: SkillModel) -> Intent:
    """Resolve an utterance to the best-matching intent.

    The winning template must align with a contiguous span of the utterance
    with every slot resolved; confidence is span length over utterance length.
    Scores below the threshold raise NoIntentMatched. A tie between two
    intents resolves alphabetically and flags the result as ambiguous.
    """
    if not model.intents:
        raise NoIntentMatched("empty skill model")
    utoks = tokenize(utterance)
    if not utoks:
        raise NoIntentMatched("empty utterance")

    best_score = 0.0
    candidates: dict[str, dict[str, Any]] = {}  # intent name -> slots at best score
    for spec in model.intents:
        for sample in spec.samples:
            ttoks = sample.casefold().split()
            for start in range(len(utoks)):
                found: list[tuple[int, dict[str, Any]]] = []
                _alignments(ttoks, utoks, 0, start, {}, spec.slots, found)
                for end, slots in found:
                    score = (end - start) / len(utoks)
                    if score > best_score + 1e-12:
                        best_score = score
                        candidates = {spec.name: slots}
                    elif abs(score - best_score) <= 1e-12 and best_score > 0:
                        candidates.setdefault(spec.name, slots)

    if not candidates or best_score < CONFIDENCE_THRESHOLD:
        raise NoIntentMatched(f"no intent above threshold for {utterance!r}")
    names = sorted(candidates)
    name = names[0]
    return Intent(
        name=name,
        slots=candidates[name],
        confidence=best_score,
        ambiguous=len(names) > 1,
    )


class WeatherSkill:
    """Seeded weather oracle: one uniform draw per task phase, cached."""

    OUTCOMES = ("sunny", "rainy")

    def __init__(self, rng: random.Random):
        self._rng = rng
        self._cache: dict[str, str] = {}

    def draw(self, phase: str = "default") -> str:
        if phase not in self._cache:
            self._cache[phase] = self.OUTCOMES[0] if self._rng.random() < 0.5 else self.OUTCOMES[1]
        return self._cache[phase]

    def has_drawn(self, phase: str = "default") -> bool:
        return phase in self._cache


def _substitute(template: str, slots: dict[str, Any]) -> str:
    def repl(m: re.Match) -> str:
        name = m.group(1)
        if name not in slots:
            raise AssistantError(f"unresolved slot {name!r} in {template!r}")
        return str(slots[name])
    return _PLACEHOLDER.sub(repl, template)


@dataclass
class HandledIntent:
    """What handling produced, for logging and pacing by the caller."""

    intent: Intent
    response: SpeechResponse
    published_topic: str | None = None
    payload: dict[str, Any] | None = None
    addressed_robots: tuple[int, ...] = ()


class Assistant:
    """Skill-model front end wired to the broker and shadow store.

    Interpretation and handling are synchronous; response pacing (cloud
    latency) is the caller's concern. `routing` selects whether robot-slot
    commands go to the per-robot topic or a broadcast command topic.
    """

    def __init__(self, skill: SkillModel, broker: Broker, shadows: ShadowStore,
                 weather: WeatherSkill, robot_ids: tuple[int, ...],
                 clock: Callable[[], int] = lambda: 0,
                 staleness_ms: int | None = None,
                 routing: str = "unicast",
                 publisher_id: str = "assistant"):
        if routing not in ("unicast", "broadcast"):
            raise ValueError(f"routing must be unicast or broadcast, got {routing!r}")
        self.skill = skill
        self.broker = broker
        self.shadows = shadows
        self.weather = weather
        self.robot_ids = tuple(robot_ids)
        self.clock = clock
        self.staleness_ms = staleness_ms
        self.routing = routing
        self.publisher_id = publisher_id
        self.weather_phase = "default"

    def interpret(self, utterance: str) -> Intent:
        return interpret(utterance, self.skill)

    def thing_id(self, robot_id: int) -> str:
        return f"placebot{robot_id}"

    def _resolve_topic(self, spec: IntentSpec, slots: dict[str, Any]) -> str:
        topic = spec.action.topic
        assert topic is not None
        if self.routing == "broadcast" and "{robot}" in topic:
            kind = str((spec.action.command or {}).get("kind", spec.name.lower()))
            return f"vahr/cmd/{kind}"
        return _substitute(topic, slots)

    def _check_reachable(self, robot_id: int) -> dict[str, Any]:
        try:
            doc = self.shadows.get_shadow(self.thing_id(robot_id))
        except UnknownThing as exc:
            raise RobotUnreachable(f"no shadow for placebot {robot_id}") from exc
        if self.staleness_ms is not None:
            age = self.clock() - doc.last_updated
            if age > self.staleness_ms:
                raise RobotUnreachable(
                    f"placebot {robot_id} shadow stale by {age} ms"
                )
        return dict(doc.reported)

    def handle_intent(self, intent: Intent) -> HandledIntent:
        """Run the intent action: publish once, read shadows, compose speech."""
        spec = self.skill.intent(intent.name)

        if intent.name == "WeatherQuery":
            value = self.weather.draw(self.weather_phase)
            return HandledIntent(
                intent=intent,
                response=SpeechResponse(f"The weather today is {value}.", False),
            )

        if spec.action.topic is None:
            return HandledIntent(
                intent=intent,
                response=SpeechResponse("Okay.", False),
            )

        topic = self._resolve_topic(spec, intent.slots)
        payload = {k: _substitute(v, intent.slots) if isinstance(v, str) else v
                   for k, v in (spec.action.command or {}).items()}
        if self.routing == "broadcast" and "robot" in intent.slots:
            payload["robot"] = int(intent.slots["robot"])
        self.broker.publish(self.publisher_id, topic, payload)

        addressed = self._addressed(spec, intent)
        statuses = {rid: self._check_reachable(rid) for rid in addressed}

        text = self._confirmation_text(intent, addressed)
        if spec.action.report_state:
            for rid in addressed:
                status = statuses[rid].get("status", "unknown")
                text += f" Placebot {rid} reports {status}."
        return HandledIntent(
            intent=intent,
            response=SpeechResponse(text, spec.action.report_state),
            published_topic=topic,
            payload=payload,
            addressed_robots=addressed,
        )

    def _addressed(self, spec: IntentSpec, intent: Intent) -> tuple[int, ...]:
        mode = spec.action.addresses
        if mode == "auto":
            mode = "slot" if "robot" in intent.slots else "all"
        if mode == "slot":
            return (int(intent.slots["robot"]),)
        if mode == "all":
            return self.robot_ids
        if mode == "first":
            return self.robot_ids[:1]
        return ()

    def _confirmation_text(self, intent: Intent, addressed: tuple[int, ...]) -> str:
        slots = intent.slots
        if intent.name == "Navigate":
            return f"Okay, sending placebot {slots['robot']} to zone {slots['zone']}."
        if intent.name == "WeatherNavigate":
            return f"Okay, placebot {slots['robot']} will deliver based on the weather."
        if intent.name == "SequentialDelivery":
            return "Okay, starting sequential delivery to zone D."
        if intent.name == "Stop":
            return f"Okay, stopping placebot {slots['robot']}."
        robots = " and ".join(str(r) for r in addressed)
        return f"Okay, command sent to placebot {robots}."

    def handle_utterance(self, utterance: str) -> HandledIntent:
        return self.handle_intent(self.interpret(utterance))
