"""Simulated placebots and their world: zones, arms, navigation state machines.

Robots move on a grid along Manhattan paths, are loaded/unloaded by
instantaneous-decision arms with fixed durations, mirror every phase change
into their device shadow, and coordinate Task-style behaviors: direct
navigation, weather-driven delivery through the voice channel, and
go-signal-gated sequential delivery over the broker.
"""
from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from .broker import Broker
from .errors import VahrError
from .events import EventKind, EventLog
from .shadow import ShadowStore, StatePatch
from .voice import (
    RAINY_WEATHER,
    SUNNY_WEATHER,
    UNRECOGNIZED,
    Utterance,
    VoiceChannel,
    lex_interpret,
    recognize,
)

COMMAND_KINDS = ("navigate", "weather_navigate", "sequential_delivery", "stop")
WEATHER_ZONE = {SUNNY_WEATHER: "A", RAINY_WEATHER: "C"}
WEATHER_QUERY_TEXT = "Alexa, what is the weather today?"
GO_SIGNAL_TOPIC = "vahr/coord/sequential-done"


class RobotError(VahrError):
    pass


class MalformedCommand(RobotError):
    pass


class VoiceChannelUnavailable(RobotError):
    pass


class Phase(str, Enum):
    IDLE = "Idle"
    NAVIGATING = "Navigating"
    LOADING = "Loading"
    UNLOADING = "Unloading"
    ASKING_WEATHER = "AskingWeather"
    STUCK = "Stuck"


@dataclass(frozen=True)
class Zone:
    name: str
    center: tuple[int, int]


@dataclass(frozen=True)
class Package:
    package_id: str
    loaded_at_ms: int


@dataclass
class WorldConfig:
    width: int = 20
    height: int = 20
    zones: dict[str, Zone] = field(default_factory=dict)
    speed_cells_per_s: float = 1.0
    load_duration_ms: int = 3000
    unload_duration_ms: int = 3000

    def __post_init__(self):
        if not self.zones:
            self.zones = default_zones()
        if self.speed_cells_per_s <= 0:
            raise ValueError("robot speed must be positive")
        centers = [z.center for z in self.zones.values()]
        if len(set(centers)) != len(centers):
            raise ValueError("zone centers must be distinct")
        for z in self.zones.values():
            x, y = z.center
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ValueError(f"zone {z.name} center {z.center} outside the grid")

    def zone(self, name: str) -> Zone:
        if name not in self.zones:
            raise MalformedCommand(f"unknown zone {name!r}")
        return self.zones[name]


def default_zones() -> dict[str, Zone]:
    return {
        "A": Zone("A", (2, 17)),
        "B": Zone("B", (17, 17)),
        "C": Zone("C", (2, 2)),
        "D": Zone("D", (17, 2)),
        "Loading": Zone("Loading", (10, 0)),
    }


def _path_position(origin: tuple[float, float], target: tuple[int, int],
                   traveled: float) -> tuple[float, float]:
    """Point `traveled` cells along the x-then-y Manhattan path."""
    ox, oy = origin
    tx, ty = target
    dx = abs(tx - ox)
    if traveled <= dx:
        step = traveled if tx >= ox else -traveled
        return (ox + step, oy)
    rest = traveled - dx
    step = rest if ty >= oy else -rest
    return (float(tx), oy + step)


class Robot:
    """One placebot: grid position, phase machine, cargo, and its comm links.

    Every phase change emits one event-log phase record, one typed
    interaction event when it opens or closes an autonomous episode, and
    exactly one shadow update whose status is the new phase label (with the
    delivery-completed Idle reported as "Task Completed").
    """

    def __init__(self, robot_id: int, world: WorldConfig,
                 start: tuple[float, float],
                 clock: Callable[[], int] = lambda: 0,
                 shadows: ShadowStore | None = None,
                 broker: Broker | None = None,
                 voice: VoiceChannel | None = None,
                 log: EventLog | None = None,
                 rng: random.Random | None = None,
                 p_mishear: float = 0.0,
                 weather_retries: int = 2,
                 sequential_initiator: bool = False,
                 sequential_target: str = "D",
                 coordination_timeout_ms: int = 120_000):
        self.id = robot_id
        self.world = world
        self.clock = clock
        self.shadows = shadows
        self.broker = broker
        self.voice = voice
        self.log = log
        self.rng = rng or random.Random(0)
        self.p_mishear = p_mishear
        self.weather_retries = weather_retries
        self.sequential_initiator = sequential_initiator
        self.sequential_target = sequential_target
        self.coordination_timeout_ms = coordination_timeout_ms

        self.position: tuple[float, float] = (float(start[0]), float(start[1]))
        self.phase = Phase.IDLE
        self.status = "Idle"
        self.cargo: Package | None = None
        self.queued_command: dict[str, Any] | None = None
        self.plan: deque[str] = deque()
        self.attended = False  # operator teleoperating; suppresses episode start
        self.deliveries = 0

        self.arrival_hooks: list[Callable[["Robot", Zone], None]] = []
        self.settle_hooks: list[Callable[["Robot"], None]] = []  # fired on Idle/Stuck

        self._nav_target: Zone | None = None
        self._leg_origin: tuple[float, float] = self.position
        self._leg_started_ms = 0
        self._leg_distance = 0.0
        self._busy_until = 0
        self._in_episode = False
        self._just_delivered = False
        self._package_seq = 0
        self._weather_attempts = 0
        self._waiting_for_go = False
        self._go_deadline = 0
        self._publish_done_on_complete = False

        if self.shadows is not None:
            self.shadows.register(self.thing_id)

    @property
    def thing_id(self) -> str:
        return f"placebot{self.id}"

    @property
    def agent_id(self) -> str:
        return self.thing_id

    @property
    def nav_target(self) -> str | None:
        return self._nav_target.name if self._nav_target else None

    @property
    def waiting_for_go(self) -> bool:
        return self._waiting_for_go

    # -- logging helpers ----------------------------------------------------

    def _emit(self, record: dict[str, Any]) -> None:
        if self.log is not None:
            self.log.append(record)

    def _emit_interaction(self, kind: EventKind) -> None:
        if self.log is not None:
            self.log.interaction(kind, self.clock(), robot_id=self.id)

    # -- phase machine ------------------------------------------------------

    def _set_phase(self, new: Phase, status: str | None = None) -> None:
        old = self.phase
        if new == old:
            return
        now = self.clock()
        self.phase = new
        self.status = status or new.value
        self._emit({
            "kind": "phase",
            "robot_id": self.id,
            "from": old.value,
            "to": new.value,
            "status": self.status,
            "t": now,
        })
        working = new not in (Phase.IDLE, Phase.STUCK)
        if working and not self._in_episode and not self.attended:
            self._emit_interaction(EventKind.ROBOT_AUTONOMOUS_START)
            self._in_episode = True
        elif new == Phase.IDLE and self._in_episode:
            self._emit_interaction(EventKind.ROBOT_IDLE)
            self._in_episode = False
        elif new == Phase.STUCK and self._in_episode:
            self._emit_interaction(EventKind.ROBOT_STUCK)
            self._in_episode = False
        if self.shadows is not None:
            self.shadows.update_reported(self.thing_id, StatePatch({"status": self.status}))
        if new in (Phase.IDLE, Phase.STUCK):
            for hook in list(self.settle_hooks):
                hook(self)

    # -- command handling ---------------------------------------------------

    def on_message(self, payload: dict[str, Any]) -> bool:
        """Route a broker payload: command, go-signal, or not-for-me filter."""
        kind = payload.get("kind")
        if kind == "go":
            if self._waiting_for_go:
                self._waiting_for_go = False
                self._start_pipeline(["Loading", self.sequential_target])
            return True
        target = payload.get("robot")
        if target is not None and int(target) != self.id:
            return False
        self.apply_command(payload)
        return True

    def apply_command(self, command: dict[str, Any]) -> None:
        kind = command.get("kind")
        if kind not in COMMAND_KINDS:
            raise MalformedCommand(f"unknown command kind {kind!r}")
        if kind == "navigate" and "zone" not in command:
            raise MalformedCommand("navigate needs a zone")
        if kind == "navigate":
            self.world.zone(str(command["zone"]))  # validates

        if kind == "stop":
            self.plan.clear()
            self.queued_command = None
            self._waiting_for_go = False
            self._nav_target = None
            self._set_phase(Phase.IDLE, "Idle")
            return
        if self.phase is not Phase.IDLE:
            self.queued_command = dict(command)  # depth 1, newest wins
            return
        self._execute(command)

    def _execute(self, command: dict[str, Any]) -> None:
        kind = command["kind"]
        self._waiting_for_go = False  # a direct command overrides a pending wait
        if kind == "navigate":
            self._start_leg(str(command["zone"]))
        elif kind == "weather_navigate":
            self._begin_weather_query()
        elif kind == "sequential_delivery":
            if self.sequential_initiator:
                self._publish_done_on_complete = True
                self._start_pipeline(["Loading", self.sequential_target])
            else:
                self._waiting_for_go = True
                self._go_deadline = self.clock() + self.coordination_timeout_ms
        elif kind == "stop":
            self._set_phase(Phase.IDLE, "Idle")

    def _start_pipeline(self, legs: list[str]) -> None:
        self.plan = deque(legs)
        self._start_leg(self.plan.popleft())

    def _start_leg(self, zone_name: str) -> None:
        zone = self.world.zone(zone_name)
        self._nav_target = zone
        self._leg_origin = self.position
        self._leg_started_ms = self.clock()
        ox, oy = self.position
        self._leg_distance = abs(zone.center[0] - ox) + abs(zone.center[1] - oy)
        self._set_phase(Phase.NAVIGATING)
        if self._leg_distance == 0:
            self._arrive()

    # -- weather task ---------------------------------------------------------

    def _begin_weather_query(self) -> None:
        if self.voice is None:
            raise VoiceChannelUnavailable(f"placebot {self.id} has no voice channel")
        self._weather_attempts = 0
        self._set_phase(Phase.ASKING_WEATHER)
        self._ask_weather()

    def _ask_weather(self) -> None:
        self._weather_attempts += 1
        assert self.voice is not None
        self.voice.say(self.agent_id, WEATHER_QUERY_TEXT)

    def on_hear(self, utterance: Utterance) -> None:
        """Robot-side STT + chatbot classification of the assistant's reply."""
        if self.phase is not Phase.ASKING_WEATHER:
            return
        heard = recognize(utterance, self.rng, self.p_mishear)
        intent = lex_interpret(heard)
        self._emit({
            "kind": "interpretation",
            "source": f"placebot{self.id}",
            "text": heard,
            "recognized": intent.name != UNRECOGNIZED,
            "intent": intent.name,
            "t": self.clock(),
        })
        if intent.name in WEATHER_ZONE:
            self._start_pipeline(["Loading", WEATHER_ZONE[intent.name]])
        elif self._weather_attempts <= self.weather_retries:
            self._ask_weather()
        else:
            self._set_phase(Phase.STUCK, "Stuck")

    # -- world stepping -------------------------------------------------------

    def poll_messages(self) -> None:
        if self.broker is None:
            return
        for msg in self.broker.drain(self.agent_id):
            self.on_message(msg.payload)

    def tick(self, dt_ms: int) -> None:
        if dt_ms <= 0:
            raise ValueError("dt must be positive")
        self.poll_messages()
        now = self.clock()
        if self.phase is Phase.NAVIGATING:
            traveled = self.world.speed_cells_per_s * (now - self._leg_started_ms) / 1000.0
            if traveled >= self._leg_distance:
                self._arrive()
            else:
                assert self._nav_target is not None
                self.position = _path_position(self._leg_origin,
                                               self._nav_target.center, traveled)
        elif self.phase is Phase.LOADING and now >= self._busy_until:
            self._package_seq += 1
            self.cargo = Package(f"{self.thing_id}-pkg{self._package_seq}", now)
            self._emit({"kind": "load", "robot_id": self.id,
                        "package": self.cargo.package_id, "t": now})
            self._next_action()
        elif self.phase is Phase.UNLOADING and now >= self._busy_until:
            self._finish_unload()
        elif self.phase is Phase.IDLE and self._waiting_for_go and now >= self._go_deadline:
            self._waiting_for_go = False
            self._emit({"kind": "error", "code": "CoordinationTimeout",
                        "robot_id": self.id, "t": now})
            self._set_phase(Phase.STUCK, "Stuck")

    def _arrive(self) -> None:
        zone = self._nav_target
        assert zone is not None
        self.position = (float(zone.center[0]), float(zone.center[1]))
        for hook in list(self.arrival_hooks):
            hook(self, zone)
        now = self.clock()
        if zone.name == "Loading" and self.cargo is None:
            self._busy_until = now + self.world.load_duration_ms
            self._set_phase(Phase.LOADING)
        elif self.cargo is not None:
            self._busy_until = now + self.world.unload_duration_ms
            self._set_phase(Phase.UNLOADING)
        else:
            self._next_action()

    def _finish_unload(self) -> None:
        zone = self._nav_target
        assert zone is not None and self.cargo is not None
        now = self.clock()
        self._emit({
            "kind": "delivery",
            "robot_id": self.id,
            "zone": zone.name,
            "package": self.cargo.package_id,
            "t": now,
        })
        self.cargo = None
        self.deliveries += 1
        self._just_delivered = True
        if self._publish_done_on_complete and not self.plan and self.queued_command is None:
            self._publish_done_on_complete = False
            if self.broker is not None:
                self.broker.publish(self.agent_id, GO_SIGNAL_TOPIC, {"kind": "go"})
        self._next_action()

    def _next_action(self) -> None:
        """Completion point: queued command overrides plan, plan continues, else Idle."""
        if self.queued_command is not None:
            cmd, self.queued_command = self.queued_command, None
            self.plan.clear()
            delivered, self._just_delivered = self._just_delivered, False
            if self.phase is not Phase.IDLE and cmd["kind"] == "weather_navigate":
                # voice flow must start from a clean Idle turn
                self._set_phase(Phase.IDLE, "Task Completed" if delivered else "Idle")
            self._execute(cmd)
            return
        if self.plan:
            self._start_leg(self.plan.popleft())
            return
        delivered, self._just_delivered = self._just_delivered, False
        self._set_phase(Phase.IDLE, "Task Completed" if delivered else "Idle")


def apply_command(robot: Robot, command: dict[str, Any]) -> Robot:
    robot.apply_command(command)
    return robot


def tick(world: WorldConfig, robots: list[Robot], dt_ms: int) -> None:
    for robot in robots:
        robot.tick(dt_ms)
