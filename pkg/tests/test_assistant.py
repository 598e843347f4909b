"""Skill-model interpretation against the template-expansion oracle."""
from __future__ import annotations

import itertools
import random
import re

import pytest

from vahr.assistant import (
    ROBOT_VOCAB,
    ZONE_VOCAB,
    Assistant,
    InvalidSkillModel,
    IntentSpec,
    ActionSpec,
    NoIntentMatched,
    RobotUnreachable,
    SkillModel,
    WeatherSkill,
    interpret,
    tokenize,
)
from vahr.broker import Broker
from vahr.scenario import bundled_path
from vahr.shadow import ShadowStore, StatePatch

_PLACEHOLDER = re.compile(r"\{([a-z_][a-z0-9_]*)\}")


@pytest.fixture(scope="module")
def skill() -> SkillModel:
    return SkillModel.from_json_file(bundled_path("skill_model.json"))


def expansions(spec: IntentSpec):
    """Oracle: every concrete utterance a template can produce, with slots."""
    for sample in spec.samples:
        names = _PLACEHOLDER.findall(sample)
        vocabs = []
        for name in names:
            vocab = ROBOT_VOCAB if spec.slots[name] == "robot_id" else ZONE_VOCAB
            vocabs.append(sorted(vocab.items()))
        for combo in itertools.product(*vocabs):
            text = sample
            slots = {}
            for name, (phrase, value) in zip(names, combo):
                text = text.replace("{" + name + "}", phrase, 1)
                slots[name] = value
            yield text, spec.name, slots


class TestInterpret:
    def test_navigate_example(self, skill):
        intent = interpret("send placebot one to zone a", skill)
        assert intent.name == "Navigate"
        assert intent.slots == {"robot": 1, "zone": "A"}
        assert intent.confidence == 1.0

    def test_empty_utterance(self, skill):
        with pytest.raises(NoIntentMatched):
            interpret("", skill)

    def test_wake_word_weather_query(self, skill):
        intent = interpret("alexa, what is the weather today", skill)
        assert intent.name == "WeatherQuery"
        assert intent.confidence >= 0.6

    def test_gibberish_rejected(self, skill):
        with pytest.raises(NoIntentMatched):
            interpret("purple monkey dishwasher please thanks", skill)

    def test_low_confidence_rejected(self, skill):
        # a valid command buried in a long utterance drops below threshold
        filler = "um let me think about it for a moment ok here goes nothing"
        with pytest.raises(NoIntentMatched):
            interpret(f"{filler} stop one", skill)

    def test_round_trip_totality(self, skill):
        """Every sample expansion maps to its own intent with confidence 1."""
        for text, name, slots in itertools.chain.from_iterable(
                expansions(spec) for spec in skill.intents):
            intent = interpret(text, skill)
            assert intent.name == name, text
            assert intent.confidence == 1.0, text
            assert intent.slots == slots, text
            assert not intent.ambiguous, text

    def test_punctuation_and_case_folding(self, skill):
        intent = interpret("Send Placebot One to Zone A!", skill)
        assert intent.name == "Navigate"
        assert intent.slots == {"robot": 1, "zone": "A"}

    def test_loading_zone_phrase(self, skill):
        intent = interpret("send placebot two to the loading zone", skill)
        assert intent.slots == {"robot": 2, "zone": "Loading"}

    def test_ambiguous_tie_breaks_alphabetically(self):
        model = SkillModel(intents=(
            IntentSpec(name="Beta", samples=("do the thing",)),
            IntentSpec(name="Alpha", samples=("do the thing",)),
        ))
        intent = interpret("do the thing", model)
        assert intent.name == "Alpha"
        assert intent.ambiguous

    def test_tokenize_strips_punctuation(self):
        assert tokenize("Alexa, what's up?") == ["alexa", "whats", "up"]


class TestSkillModelValidation:
    def test_duplicate_names_rejected(self):
        with pytest.raises(InvalidSkillModel):
            SkillModel(intents=(
                IntentSpec(name="X", samples=("a",)),
                IntentSpec(name="X", samples=("b",)),
            ))

    def test_undeclared_slot_rejected(self):
        with pytest.raises(InvalidSkillModel):
            IntentSpec(name="X", samples=("go to {zone}",), slots={})

    def test_topic_requires_command(self):
        with pytest.raises(InvalidSkillModel):
            ActionSpec(topic="a/b", command=None)


class TestWeatherSkill:
    def test_deterministic_under_seed(self):
        a = WeatherSkill(random.Random(42)).draw("I")
        b = WeatherSkill(random.Random(42)).draw("I")
        assert a == b
        assert a in ("sunny", "rainy")

    def test_cache_within_phase(self):
        skill = WeatherSkill(random.Random(1))
        assert skill.draw("I") == skill.draw("I")
        assert skill.has_drawn("I") and not skill.has_drawn("II")

    def test_monte_carlo_balance(self):
        skill = WeatherSkill(random.Random(7))
        draws = [skill.draw(f"p{i}") for i in range(10_000)]
        sunny = draws.count("sunny") / len(draws)
        assert 0.47 <= sunny <= 0.53


class TestHandleIntent:
    def make_assistant(self, skill, routing="unicast", staleness_ms=None):
        clock = {"t": 0}
        broker = Broker(clock=lambda: clock["t"])
        shadows = ShadowStore(clock=lambda: clock["t"])
        for rid in (1, 2):
            shadows.register(f"placebot{rid}")
            shadows.update_reported(f"placebot{rid}", StatePatch({"status": "Idle"}))
        assistant = Assistant(skill, broker, shadows, WeatherSkill(random.Random(0)),
                              robot_ids=(1, 2), clock=lambda: clock["t"],
                              staleness_ms=staleness_ms, routing=routing)
        return clock, broker, shadows, assistant

    def test_navigate_publishes_once_and_reports_status(self, skill):
        _, broker, shadows, assistant = self.make_assistant(skill)
        broker.subscribe("placebot1", "vahr/robot/1/cmd")
        reads_before = shadows.total_requests()
        handled = assistant.handle_utterance("send placebot one to the loading zone")
        assert handled.published_topic == "vahr/robot/1/cmd"
        assert handled.payload == {"kind": "navigate", "zone": "Loading"}
        msgs = broker.drain("placebot1")
        assert len(msgs) == 1
        assert handled.response.includes_state_report
        assert "Idle" in handled.response.text
        assert handled.addressed_robots == (1,)
        # one publish, one shadow read
        assert shadows.total_requests() == reads_before + 1
        assert broker.publish_count == 1

    def test_weather_query_publishes_nothing(self, skill):
        _, broker, _, assistant = self.make_assistant(skill)
        handled = assistant.handle_utterance("what is the weather today")
        assert handled.published_topic is None
        assert broker.publish_count == 0
        assert handled.response.text in (
            "The weather today is sunny.", "The weather today is rainy.")

    def test_sequential_delivery_single_publish_to_coord_topic(self, skill):
        _, broker, shadows, assistant = self.make_assistant(skill)
        broker.subscribe("placebot1", "vahr/coord/#")
        broker.subscribe("placebot2", "vahr/coord/#")
        before = shadows.total_requests()
        handled = assistant.handle_utterance("start sequential delivery to zone d")
        assert handled.published_topic == "vahr/coord/sequential"
        assert broker.publish_count == 1
        assert handled.addressed_robots == (1,)  # coordination reads one shadow
        assert shadows.total_requests() == before + 1

    def test_shadow_economy_bound(self, skill):
        """Handling N command intents performs at most N+R shadow reads."""
        _, _, shadows, assistant = self.make_assistant(skill)
        before = shadows.total_requests()
        texts = [
            "send placebot one to zone a",
            "send placebot two to zone b",
            "tell placebot one to deliver based on the weather",
            "start sequential delivery to zone d",
        ]
        for text in texts:
            assistant.handle_utterance(text)
        assert shadows.total_requests() - before <= len(texts) + 2

    def test_unreachable_when_shadow_missing(self, skill):
        clock, _, shadows, assistant = self.make_assistant(skill)
        assistant.robot_ids = (1, 2, 3)
        with pytest.raises(RobotUnreachable):
            assistant.handle_utterance("send placebot 3 to zone a")

    def test_unreachable_when_stale(self, skill):
        clock, _, _, assistant = self.make_assistant(skill, staleness_ms=1000)
        clock["t"] = 5000
        with pytest.raises(RobotUnreachable):
            assistant.handle_utterance("send placebot one to zone a")

    def test_broadcast_routing_rewrites_topic(self, skill):
        _, broker, _, assistant = self.make_assistant(skill, routing="broadcast")
        broker.subscribe("placebot1", "vahr/cmd/#")
        broker.subscribe("placebot2", "vahr/cmd/#")
        handled = assistant.handle_utterance("send placebot one to zone a")
        assert handled.published_topic == "vahr/cmd/navigate"
        assert handled.payload["robot"] == 1
        assert len(broker.drain("placebot2")) == 1  # broadcast reaches both
