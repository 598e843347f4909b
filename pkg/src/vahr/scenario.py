"""Scenario loading and validation.

A scenario JSON resolves to a fully-defaulted Scenario value. Validation is
strict: unknown keys are rejected at every level and every error names the
offending field. Defaults live in DEFAULTS and are mirrored by the README
defaults table.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import VahrError
from .robots import WorldConfig, Zone

OPERATOR_MODES = ("scripted_vahr", "scripted_keyboard", "live")
ZONE_NAMES = ("A", "B", "C", "D", "Loading")
TASK_ORDER = ("I", "II", "III")

DEFAULTS: dict[str, Any] = {
    "world.width": 20,
    "world.height": 20,
    "world.speed_cells_per_s": 1.0,
    "world.load_duration_s": 3.0,
    "world.unload_duration_s": 3.0,
    "latencies_ms.broker": 10,
    "latencies_ms.shadow": 10,
    "latencies_ms.assistant": 300,
    "latencies_ms.speech": 1500,
    "p_mishear": 0.0,
    "operator.mode": "scripted_vahr",
    "operator.utterance_ms": 2000,
    "operator.puzzle_piece_interval_s": 2.5,
    "operator.puzzle_piece_count": 16,
    "command_routing": "unicast",
    "weather_retries": 2,
    "coordination_timeout_ms": 120000,
    "staleness_ms": 600000,
    "tick_ms": 100,
    "timeout_ms": 1800000,
    "shadow_poll_interval_ms": None,
}


class ParseError(VahrError):
    pass


class ValidationError(VahrError):
    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


@dataclass(frozen=True)
class Latencies:
    broker_ms: int = 10
    shadow_ms: int = 10
    assistant_ms: int = 300
    speech_ms: int = 1500


@dataclass(frozen=True)
class OperatorConfig:
    mode: str = "scripted_vahr"
    utterance_ms: int = 2000
    puzzle_piece_interval_s: float | None = 2.5  # None disables the puzzle
    puzzle_piece_count: int = 16


@dataclass(frozen=True)
class RobotSpec:
    id: int
    start: tuple[int, int]


@dataclass(frozen=True)
class Faults:
    task3_reverse_order: bool = False
    task3_initiator_zone: str | None = None


@dataclass
class Scenario:
    name: str = "scenario"
    world: WorldConfig = field(default_factory=WorldConfig)
    robots: tuple[RobotSpec, ...] = (RobotSpec(1, (8, 0)), RobotSpec(2, (12, 0)))
    skill_model: str | None = None  # None -> bundled model
    tasks: tuple[str, ...] = TASK_ORDER
    latencies: Latencies = Latencies()
    p_mishear: float = 0.0
    operator: OperatorConfig = OperatorConfig()
    command_routing: str = "unicast"
    weather_retries: int = 2
    coordination_timeout_ms: int = 120000
    staleness_ms: int | None = 600000
    tick_ms: int = 100
    timeout_ms: int = 1800000
    shadow_poll_interval_ms: int | None = None
    faults: Faults = Faults()

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "world": {
                "width": self.world.width,
                "height": self.world.height,
                "zones": {z.name: list(z.center) for z in self.world.zones.values()},
                "speed_cells_per_s": self.world.speed_cells_per_s,
                "load_duration_s": self.world.load_duration_ms / 1000.0,
                "unload_duration_s": self.world.unload_duration_ms / 1000.0,
            },
            "robots": [{"id": r.id, "start": list(r.start)} for r in self.robots],
            "skill_model": self.skill_model,
            "tasks": list(self.tasks),
            "latencies_ms": {
                "broker": self.latencies.broker_ms,
                "shadow": self.latencies.shadow_ms,
                "assistant": self.latencies.assistant_ms,
                "speech": self.latencies.speech_ms,
            },
            "p_mishear": self.p_mishear,
            "operator": {
                "mode": self.operator.mode,
                "utterance_ms": self.operator.utterance_ms,
                "puzzle_piece_interval_s": self.operator.puzzle_piece_interval_s,
                "puzzle_piece_count": self.operator.puzzle_piece_count,
            },
            "command_routing": self.command_routing,
            "weather_retries": self.weather_retries,
            "coordination_timeout_ms": self.coordination_timeout_ms,
            "staleness_ms": self.staleness_ms,
            "tick_ms": self.tick_ms,
            "timeout_ms": self.timeout_ms,
            "shadow_poll_interval_ms": self.shadow_poll_interval_ms,
            "faults": {
                "task3_reverse_order": self.faults.task3_reverse_order,
                "task3_initiator_zone": self.faults.task3_initiator_zone,
            },
        }

    def hash(self) -> str:
        canonical = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class _Section:
    """One dict level of the scenario file; tracks consumed keys."""

    def __init__(self, data: dict[str, Any], path: str):
        if not isinstance(data, dict):
            raise ValidationError(path or "<root>", f"expected an object, got {type(data).__name__}")
        self.data = data
        self.path = path
        self.seen: set[str] = set()

    def _field(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def take(self, key: str, types: type | tuple, default: Any = ...,
             allow_none: bool = False) -> Any:
        self.seen.add(key)
        if key not in self.data:
            if default is ...:
                raise ValidationError(self._field(key), "required field missing")
            return default
        value = self.data[key]
        if value is None and allow_none:
            return None
        if isinstance(value, bool) and types in (int, float) :
            raise ValidationError(self._field(key), "expected a number, got a boolean")
        if not isinstance(value, types):
            raise ValidationError(self._field(key), f"expected {types}, got {type(value).__name__}")
        return value

    def section(self, key: str) -> "_Section | None":
        self.seen.add(key)
        if key not in self.data or self.data[key] is None:
            return None
        return _Section(self.data[key], self._field(key))

    def finish(self) -> None:
        unknown = set(self.data) - self.seen
        if unknown:
            raise ValidationError(self._field(sorted(unknown)[0]), "unknown key")


def _parse_world(sec: _Section | None) -> WorldConfig:
    if sec is None:
        return WorldConfig()
    width = sec.take("width", int, DEFAULTS["world.width"])
    height = sec.take("height", int, DEFAULTS["world.height"])
    speed = float(sec.take("speed_cells_per_s", (int, float), DEFAULTS["world.speed_cells_per_s"]))
    load_s = float(sec.take("load_duration_s", (int, float), DEFAULTS["world.load_duration_s"]))
    unload_s = float(sec.take("unload_duration_s", (int, float), DEFAULTS["world.unload_duration_s"]))
    zones_raw = sec.take("zones", dict, None, allow_none=True)
    sec.finish()
    zones: dict[str, Zone] = {}
    if zones_raw is not None:
        for name, center in zones_raw.items():
            if name not in ZONE_NAMES:
                raise ValidationError(f"world.zones.{name}", f"zone must be one of {ZONE_NAMES}")
            if (not isinstance(center, list) or len(center) != 2
                    or not all(isinstance(c, int) for c in center)):
                raise ValidationError(f"world.zones.{name}", "center must be [x, y] integers")
            zones[name] = Zone(name, (center[0], center[1]))
        missing = set(ZONE_NAMES) - set(zones)
        if missing:
            raise ValidationError("world.zones", f"missing zones {sorted(missing)}")
    if speed <= 0:
        raise ValidationError("world.speed_cells_per_s", "must be positive")
    try:
        return WorldConfig(width=width, height=height, zones=zones,
                           speed_cells_per_s=speed,
                           load_duration_ms=int(load_s * 1000),
                           unload_duration_ms=int(unload_s * 1000))
    except ValueError as exc:
        raise ValidationError("world", str(exc)) from None


def _parse_robots(sec_root: _Section) -> tuple[RobotSpec, ...]:
    sec_root.seen.add("robots")
    raw = sec_root.data.get("robots")
    if raw is None:
        return (RobotSpec(1, (8, 0)), RobotSpec(2, (12, 0)))
    if not isinstance(raw, list) or not raw:
        raise ValidationError("robots", "expected a non-empty list")
    specs = []
    for i, item in enumerate(raw):
        sec = _Section(item, f"robots[{i}]")
        rid = sec.take("id", int)
        start = sec.take("start", list)
        sec.finish()
        if len(start) != 2 or not all(isinstance(c, int) for c in start):
            raise ValidationError(f"robots[{i}].start", "must be [x, y] integers")
        specs.append(RobotSpec(rid, (start[0], start[1])))
    if len({s.id for s in specs}) != len(specs):
        raise ValidationError("robots", "robot ids must be unique")
    return tuple(specs)


def scenario_from_dict(data: dict[str, Any], name: str = "scenario") -> Scenario:
    root = _Section(data, "")
    name = root.take("name", str, name)
    world = _parse_world(root.section("world"))
    robots = _parse_robots(root)
    skill_model = root.take("skill_model", str, None, allow_none=True)

    tasks_raw = root.take("tasks", list, list(TASK_ORDER))
    tasks = tuple(tasks_raw)
    if not tasks:
        tasks = ()
    for t in tasks:
        if t not in TASK_ORDER:
            raise ValidationError("tasks", f"unknown task {t!r}, expected subset of {TASK_ORDER}")
    if list(tasks) != [t for t in TASK_ORDER if t in tasks]:
        raise ValidationError("tasks", "tasks must keep I, II, III order")

    lat_sec = root.section("latencies_ms")
    if lat_sec is None:
        latencies = Latencies()
    else:
        latencies = Latencies(
            broker_ms=lat_sec.take("broker", int, DEFAULTS["latencies_ms.broker"]),
            shadow_ms=lat_sec.take("shadow", int, DEFAULTS["latencies_ms.shadow"]),
            assistant_ms=lat_sec.take("assistant", int, DEFAULTS["latencies_ms.assistant"]),
            speech_ms=lat_sec.take("speech", int, DEFAULTS["latencies_ms.speech"]),
        )
        lat_sec.finish()

    p_mishear = float(root.take("p_mishear", (int, float), DEFAULTS["p_mishear"]))
    if not (0.0 <= p_mishear <= 1.0):
        raise ValidationError("p_mishear", "must be in [0, 1]")

    op_sec = root.section("operator")
    if op_sec is None:
        operator = OperatorConfig()
    else:
        interval = op_sec.take("puzzle_piece_interval_s", (int, float),
                               DEFAULTS["operator.puzzle_piece_interval_s"], allow_none=True)
        operator = OperatorConfig(
            mode=op_sec.take("mode", str, DEFAULTS["operator.mode"]),
            utterance_ms=op_sec.take("utterance_ms", int, DEFAULTS["operator.utterance_ms"]),
            puzzle_piece_interval_s=None if interval is None else float(interval),
            puzzle_piece_count=op_sec.take("puzzle_piece_count", int,
                                           DEFAULTS["operator.puzzle_piece_count"]),
        )
        op_sec.finish()
    if operator.mode not in OPERATOR_MODES:
        raise ValidationError("operator.mode", f"must be one of {OPERATOR_MODES}")
    if operator.puzzle_piece_interval_s is not None and operator.puzzle_piece_interval_s <= 0:
        raise ValidationError("operator.puzzle_piece_interval_s", "must be positive or null")

    routing = root.take("command_routing", str, DEFAULTS["command_routing"])
    if routing not in ("unicast", "broadcast"):
        raise ValidationError("command_routing", "must be unicast or broadcast")

    faults_sec = root.section("faults")
    if faults_sec is None:
        faults = Faults()
    else:
        zone = faults_sec.take("task3_initiator_zone", str, None, allow_none=True)
        faults = Faults(
            task3_reverse_order=faults_sec.take("task3_reverse_order", bool, False),
            task3_initiator_zone=zone,
        )
        faults_sec.finish()
        if faults.task3_initiator_zone is not None and faults.task3_initiator_zone not in ZONE_NAMES:
            raise ValidationError("faults.task3_initiator_zone", f"must be one of {ZONE_NAMES}")

    scenario = Scenario(
        name=name,
        world=world,
        robots=robots,
        skill_model=skill_model,
        tasks=tasks,
        latencies=latencies,
        p_mishear=p_mishear,
        operator=operator,
        command_routing=routing,
        weather_retries=root.take("weather_retries", int, DEFAULTS["weather_retries"]),
        coordination_timeout_ms=root.take("coordination_timeout_ms", int,
                                          DEFAULTS["coordination_timeout_ms"]),
        staleness_ms=root.take("staleness_ms", int, DEFAULTS["staleness_ms"], allow_none=True),
        tick_ms=root.take("tick_ms", int, DEFAULTS["tick_ms"]),
        timeout_ms=root.take("timeout_ms", int, DEFAULTS["timeout_ms"]),
        shadow_poll_interval_ms=root.take("shadow_poll_interval_ms", int,
                                          DEFAULTS["shadow_poll_interval_ms"], allow_none=True),
        faults=faults,
    )
    root.finish()
    if scenario.tick_ms <= 0:
        raise ValidationError("tick_ms", "must be positive")
    for spec in scenario.robots:
        x, y = spec.start
        if not (0 <= x < world.width and 0 <= y < world.height):
            raise ValidationError("robots", f"robot {spec.id} starts outside the grid")
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"scenario file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    return scenario_from_dict(data, name=path.stem)


def bundled_path(filename: str) -> Path:
    return Path(str(resources.files("vahr").joinpath("data", filename)))


def bundled_scenario(name: str = "tasks_full.json") -> Scenario:
    return load_scenario(bundled_path(name))
