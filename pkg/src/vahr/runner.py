"""Run orchestration: deterministic task execution, operator models, reports.

A run wires one scheduler to the broker, shadow store, voice channels,
robots, assistant and an operator policy, then advances logical time until
every task reaches a terminal state. The same machinery executes scripted
policies, recorded frame logs, and live gateway sessions; only the operator
differs. Identical (scenario, seed) pairs replay to byte-identical logs.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

from .assistant import (
    Assistant,
    HandledIntent,
    NoIntentMatched,
    SkillModel,
    WeatherSkill,
)
from .broker import Broker
from .errors import VahrError
from .events import EventKind, EventLog
from .metrics import MetricsReport, TaskOutcome, TaskSpec, build_report, success_rates
from .robots import Phase, Robot
from .scenario import Scenario, bundled_path
from .shadow import ShadowStore
from .sim import Process, Scheduler, Trigger, Wait, WaitFor
from .voice import VoiceChannel

WEATHER_QUERY_TEXT = "Alexa, what is the weather today?"
TASK_ZONES = ("A", "B", "C", "D")


class RunError(VahrError):
    pass


class Timeout(RunError):
    pass


def rng_stream(seed: int, label: str) -> random.Random:
    """Subsystem RNG derived from the root seed by a stable label hash."""
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass
class RunReport:
    scenario_name: str
    scenario_hash: str
    seed: int
    method: str
    metrics: MetricsReport
    outcomes: list[TaskOutcome]
    logical_ms: int
    wall_s: float
    log_sha256: str
    shadow_requests: int
    timed_out: bool
    completed: bool = True
    records: list[dict[str, Any]] = field(default_factory=list, repr=False)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "scenario_name": self.scenario_name,
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "method": self.method,
            "metrics": self.metrics.to_json_dict(),
            "outcomes": [
                {"task": o.name, "success": o.success, "detail": o.detail, "led": o.led}
                for o in self.outcomes
            ],
            "logical_ms": self.logical_ms,
            "wall_s": self.wall_s,
            "log_sha256": self.log_sha256,
            "shadow_requests": self.shadow_requests,
            "timed_out": self.timed_out,
            "completed": self.completed,
        }

    def save(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        log = EventLog()
        for rec in self.records:
            log.append(rec)
        log.write(out / "events.jsonl")
        (out / "report.json").write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return out


def task_specs_from_brief(records: Iterable[dict[str, Any]]) -> list[TaskSpec]:
    """Rebuild the task success criteria from the brief record in a log."""
    brief = next((r for r in records if r.get("kind") == "brief"), None)
    if brief is None:
        return []
    robots = tuple(brief["robots"])
    zones = {int(k): v for k, v in brief["zone_assignments"].items()}
    specs = []
    for task in brief["tasks"]:
        if task == "I":
            specs.append(TaskSpec("I", robots, expected_zones=zones))
        elif task == "II":
            specs.append(TaskSpec("II", robots))
        elif task == "III":
            specs.append(TaskSpec("III", robots, initiator=brief["initiator"]))
    return specs


class SimRun:
    """One configured run: agents wired to a scheduler, ready to execute."""

    def __init__(self, scenario: Scenario, seed: int, operator_mode: str | None = None):
        self.scenario = scenario
        self.seed = seed
        self.mode = operator_mode or scenario.operator.mode
        self.scheduler = Scheduler()
        clock = lambda: self.scheduler.now_ms
        self.clock = clock
        self.log = EventLog()
        self.active = True
        self.timed_out = False

        lat = scenario.latencies
        self.broker = Broker(clock, latency_ms=lat.broker_ms)
        self.shadows = ShadowStore(clock)
        self.weather = WeatherSkill(rng_stream(seed, "weather"))
        mishear_rng = rng_stream(seed, "mishear")
        zones_rng = rng_stream(seed, "zones")

        skill_path = scenario.skill_model or bundled_path("skill_model.json")
        self.skill = SkillModel.from_json_file(skill_path)

        robot_ids = tuple(sorted(spec.id for spec in scenario.robots))
        self.nominal_initiator = robot_ids[0]
        actual_initiator = (robot_ids[1] if scenario.faults.task3_reverse_order
                            and len(robot_ids) > 1 else robot_ids[0])

        self.zone_assignments = {rid: zones_rng.choice(TASK_ZONES) for rid in robot_ids}

        self.robots: list[Robot] = []
        self.channels: dict[int, VoiceChannel] = {}
        for spec in sorted(scenario.robots, key=lambda s: s.id):
            channel = VoiceChannel(
                self.scheduler, latency_ms=lat.speech_ms,
                on_utterance=lambda u: self.log.append(u.to_json_dict() | {"t": u.spoken_at}),
            )
            target = (scenario.faults.task3_initiator_zone or "D"
                      if spec.id == actual_initiator else "D")
            robot = Robot(
                spec.id, scenario.world, spec.start,
                clock=clock, shadows=self.shadows, broker=self.broker,
                voice=channel, log=self.log, rng=mishear_rng,
                p_mishear=scenario.p_mishear,
                weather_retries=scenario.weather_retries,
                sequential_initiator=(spec.id == actual_initiator),
                sequential_target=target,
                coordination_timeout_ms=scenario.coordination_timeout_ms,
            )
            channel.bind(robot.agent_id, robot.on_hear)
            channel.bind("assistant", self._assistant_listener(channel))
            self.broker.subscribe(robot.agent_id, f"vahr/robot/{spec.id}/cmd")
            self.broker.subscribe(robot.agent_id, "vahr/cmd/#")
            self.broker.subscribe(robot.agent_id, "vahr/coord/#")
            self.robots.append(robot)
            self.channels[spec.id] = channel

        self.assistant = Assistant(
            self.skill, self.broker, self.shadows, self.weather,
            robot_ids=robot_ids, clock=clock,
            staleness_ms=scenario.staleness_ms,
            routing=scenario.command_routing,
        )

        self.task_specs = self._build_task_specs(robot_ids)
        self.log.append({
            "kind": "brief",
            "robots": list(robot_ids),
            "zone_assignments": {str(k): v for k, v in self.zone_assignments.items()},
            "tasks": list(scenario.tasks),
            "initiator": self.nominal_initiator,
            "seed": seed,
            "t": 0,
        })

    def _build_task_specs(self, robot_ids: tuple[int, ...]) -> list[TaskSpec]:
        specs = []
        for task in self.scenario.tasks:
            if task == "I":
                specs.append(TaskSpec("I", robot_ids, expected_zones=dict(self.zone_assignments)))
            elif task == "II":
                specs.append(TaskSpec("II", robot_ids))
            elif task == "III":
                specs.append(TaskSpec("III", robot_ids, initiator=self.nominal_initiator))
        return specs

    # -- assistant glue -----------------------------------------------------

    def _assistant_listener(self, channel: VoiceChannel) -> Callable:
        """The assistant's ear on one robot's voice channel."""
        def on_hear(utterance):
            now = self.clock()
            intent = None
            try:
                intent = self.assistant.interpret(utterance.text)
            except NoIntentMatched:
                pass
            recognized = intent is not None and intent.name == "WeatherQuery"
            self.log.append({
                "kind": "interpretation",
                "source": "assistant",
                "text": utterance.text,
                "recognized": recognized,
                "intent": intent.name if intent else None,
                "t": now,
            })
            if recognized:
                text = self._draw_weather()
            else:
                text = "Sorry, I did not understand."
            self.scheduler.call_in(
                self.scenario.latencies.assistant_ms,
                lambda: channel.say("assistant", text),
            )
        return on_hear

    def _draw_weather(self) -> str:
        phase = self.assistant.weather_phase
        fresh = not self.weather.has_drawn(phase)
        value = self.weather.draw(phase)
        if fresh:
            self.log.append({"kind": "weather", "value": value, "t": self.clock()})
        return f"The weather today is {value}."

    def interpret_logged(self, text: str, source: str = "operator"):
        """Interpret with an interpretation record either way; re-raises misses."""
        now = self.clock()
        try:
            intent = self.assistant.interpret(text)
        except NoIntentMatched:
            self.log.append({
                "kind": "interpretation", "source": source, "text": text,
                "recognized": False, "intent": None, "t": now,
            })
            raise
        self.log.append({
            "kind": "interpretation", "source": source, "text": text,
            "recognized": True, "intent": intent.name, "t": now,
        })
        return intent

    def handle_intent_logged(self, intent) -> HandledIntent:
        if intent.name == "WeatherQuery":
            self._draw_weather()
        handled = self.assistant.handle_intent(intent)
        if handled.published_topic is not None:
            self.log.append({
                "kind": "publish",
                "topic": handled.published_topic,
                "payload": handled.payload,
                "publisher": "assistant",
                "t": self.clock(),
            })
        return handled

    def handle_operator_text(self, text: str) -> HandledIntent:
        """Interpret + handle one operator utterance, with full logging."""
        return self.handle_intent_logged(self.interpret_logged(text))

    # -- run-state helpers ----------------------------------------------------

    def robot_done(self, robot: Robot, min_deliveries: int) -> bool:
        if robot.phase is Phase.STUCK:
            return True
        return (robot.deliveries >= min_deliveries
                and robot.phase is Phase.IDLE
                and not robot.plan
                and robot.queued_command is None
                and not robot.waiting_for_go)

    def when_all_done(self, targets: dict[int, int]) -> Trigger:
        """Fires once every robot reached its delivery target (or is stuck)."""
        trig = Trigger(self.scheduler)

        def check(_robot: Robot | None = None) -> None:
            if all(self.robot_done(r, targets[r.id]) for r in self.robots):
                trig.fire()

        for robot in self.robots:
            robot.settle_hooks.append(check)
        self.scheduler.call_in(0, check)
        return trig

    def begin_task(self, task: str) -> None:
        self.assistant.weather_phase = task
        self.log.append({"kind": "task", "task": task, "phase": "start", "t": self.clock()})

    def end_task(self, task: str) -> None:
        self.log.append({"kind": "task", "task": task, "phase": "end", "t": self.clock()})

    # -- main loop -------------------------------------------------------------

    def _pump_ticks(self) -> None:
        if not self.active:
            return
        for robot in self.robots:
            robot.tick(self.scenario.tick_ms)
        self.scheduler.call_in(self.scenario.tick_ms, self._pump_ticks)

    def _pump_polling(self) -> None:
        if not self.active:
            return
        for robot in self.robots:
            self.shadows.get_shadow(robot.thing_id)
        assert self.scenario.shadow_poll_interval_ms is not None
        self.scheduler.call_in(self.scenario.shadow_poll_interval_ms, self._pump_polling)

    def execute(self, operator_gen, pace: str = "fast") -> RunReport:
        """Drive the scheduler until the operator finishes or the run times out.

        "fast" advances logical time as quickly as possible; "real" holds
        1 logical ms to 1 wall ms.
        """
        wall_start = time.monotonic()
        proc = Process(self.scheduler, operator_gen).start()
        self.scheduler.call_in(self.scenario.tick_ms, self._pump_ticks)
        if self.scenario.shadow_poll_interval_ms:
            self.scheduler.call_in(self.scenario.shadow_poll_interval_ms, self._pump_polling)

        while not proc.done.fired:
            nxt = self.scheduler.peek_ms()
            if nxt is None:
                break
            if nxt > self.scenario.timeout_ms:
                self.timed_out = True
                break
            if pace == "real":
                lag = nxt / 1000.0 - (time.monotonic() - wall_start)
                if lag > 0:
                    time.sleep(lag)
            self.scheduler.step()
        self.active = False
        return self._finish(time.monotonic() - wall_start)

    def _finish(self, wall_s: float, completed: bool = True) -> RunReport:
        records = self.log.records
        metrics = build_report(records, self.task_specs)
        rates = success_rates(records, self.task_specs)
        return RunReport(
            scenario_name=self.scenario.name,
            scenario_hash=self.scenario.hash(),
            seed=self.seed,
            method=self.mode,
            metrics=metrics,
            outcomes=rates.outcomes,
            logical_ms=self.scheduler.now_ms,
            wall_s=wall_s,
            log_sha256=self.log.sha256(),
            shadow_requests=self.shadows.total_requests(),
            timed_out=self.timed_out,
            completed=completed and not self.timed_out,
            records=records,
        )


# -- scripted operators ------------------------------------------------------


class ScriptedOperator:
    """Shared plumbing for the scripted policies: commands, waits, puzzle."""

    def __init__(self, run: SimRun):
        self.run = run
        self.log = run.log
        self.scheduler = run.scheduler
        self.op_cfg = run.scenario.operator
        self.pieces_placed = 0
        self._puzzle_timer = None

    # puzzle pieces accumulate during uninterrupted waiting, one per interval
    def _puzzle_start(self) -> None:
        interval_s = self.op_cfg.puzzle_piece_interval_s
        if interval_s is None:
            return
        interval_ms = int(interval_s * 1000)

        def place() -> None:
            if self.pieces_placed >= self.op_cfg.puzzle_piece_count:
                return
            self.log.interaction(EventKind.PUZZLE_PIECE_PLACED, self.scheduler.now_ms)
            self.pieces_placed += 1
            self._puzzle_timer = self.scheduler.call_in(interval_ms, place)

        self._puzzle_timer = self.scheduler.call_in(interval_ms, place)

    def _puzzle_stop(self) -> None:
        if self._puzzle_timer is not None:
            self._puzzle_timer.cancel()
            self._puzzle_timer = None

    def wait_puzzling(self, trigger: Trigger):
        self._puzzle_start()
        yield WaitFor(trigger)
        self._puzzle_stop()

    def command(self, text: str, robot_id: int | None):
        """One assistant interaction: speak, interpret, handle, hear the reply."""
        self.log.interaction(EventKind.COMMAND_START, self.scheduler.now_ms, robot_id)
        yield Wait(self.op_cfg.utterance_ms)
        handled = self.run.handle_operator_text(text)
        yield Wait(self.run.scenario.latencies.assistant_ms)
        self.log.append({
            "kind": "speech", "from": "assistant",
            "text": handled.response.text, "t": self.scheduler.now_ms,
        })
        self.log.interaction(EventKind.COMMAND_ACK, self.scheduler.now_ms, robot_id)

    def delivery_targets(self, bump: dict[int, int]) -> dict[int, int]:
        return {r.id: r.deliveries + bump.get(r.id, 0) for r in self.run.robots}


class VahrOperator(ScriptedOperator):
    """High-level intents through the assistant, then hands-off puzzling."""

    def main(self):
        run = self.run
        for task in run.scenario.tasks:
            run.begin_task(task)
            targets = self.delivery_targets({r.id: 1 for r in run.robots})
            if task == "I":
                for robot in run.robots:
                    zone = run.zone_assignments[robot.id]
                    yield from self.command(
                        f"send placebot {robot.id} to the loading zone", robot.id)
                    yield from self.command(
                        f"send placebot {robot.id} to zone {zone.lower()}", robot.id)
            elif task == "II":
                for robot in run.robots:
                    yield from self.command(
                        f"tell placebot {robot.id} to deliver based on the weather",
                        robot.id)
            elif task == "III":
                yield from self.command("start sequential delivery to zone d", None)
            yield from self.wait_puzzling(run.when_all_done(targets))
            run.end_task(task)


class KeyboardOperator(ScriptedOperator):
    """Continuous teleoperation: the operator is occupied for every drive leg
    and only neglects robots while the arms work."""

    def drive(self, robot: Robot, zone: str):
        robot.attended = True
        self.log.interaction(EventKind.COMMAND_START, self.scheduler.now_ms, robot.id)
        trig = Trigger(self.scheduler)

        def on_arrival(r: Robot, _zone) -> None:
            r.attended = False
            r.arrival_hooks.remove(on_arrival)
            self.log.interaction(EventKind.COMMAND_ACK, self.scheduler.now_ms, r.id)
            trig.fire()

        robot.arrival_hooks.append(on_arrival)
        robot.apply_command({"kind": "navigate", "zone": zone})
        yield WaitFor(trig)

    def wait_arm(self, robot: Robot):
        """Puzzle while the arm loads/unloads; resume when the robot settles."""
        trig = Trigger(self.scheduler)

        def check(_r: Robot | None = None) -> None:
            if robot.phase in (Phase.IDLE, Phase.STUCK):
                trig.fire()

        robot.settle_hooks.append(check)
        self.scheduler.call_in(0, check)
        yield from self.wait_puzzling(trig)

    def ask_weather(self):
        self.log.interaction(EventKind.UTTERANCE_START, self.scheduler.now_ms)
        yield Wait(self.op_cfg.utterance_ms)
        handled = self.run.handle_operator_text(WEATHER_QUERY_TEXT)
        yield Wait(self.run.scenario.latencies.assistant_ms)
        self.log.append({
            "kind": "speech", "from": "assistant",
            "text": handled.response.text, "t": self.scheduler.now_ms,
        })
        self.log.interaction(EventKind.UTTERANCE_END, self.scheduler.now_ms)

    def pipeline(self, robot: Robot, zone: str):
        yield from self.drive(robot, "Loading")
        yield from self.wait_arm(robot)
        yield from self.drive(robot, zone)
        yield from self.wait_arm(robot)

    def main(self):
        run = self.run
        for task in run.scenario.tasks:
            run.begin_task(task)
            if task == "I":
                for robot in run.robots:
                    yield from self.pipeline(robot, run.zone_assignments[robot.id])
            elif task == "II":
                for _ in run.robots:  # once per robot, answered from one cached draw
                    yield from self.ask_weather()
                value = run.weather.draw(run.assistant.weather_phase)
                zone = "A" if value == "sunny" else "C"
                for robot in run.robots:
                    yield from self.pipeline(robot, zone)
            elif task == "III":
                ordered = sorted(run.robots, key=lambda r: (r.id != run.nominal_initiator, r.id))
                if run.scenario.faults.task3_reverse_order:
                    ordered = list(reversed(ordered))
                for robot in ordered:
                    zone = "D"
                    if (run.scenario.faults.task3_initiator_zone
                            and robot.id == run.nominal_initiator):
                        zone = run.scenario.faults.task3_initiator_zone
                    yield from self.pipeline(robot, zone)
            run.end_task(task)


def scripted_operator_policy(mode: str, run: SimRun):
    """Operator event stream for the scripted modes."""
    if mode in ("scripted_vahr", "vahr"):
        return VahrOperator(run).main()
    if mode in ("scripted_keyboard", "keyboard"):
        return KeyboardOperator(run).main()
    raise RunError(f"no scripted policy for operator mode {mode!r}")


class FrameOperator(ScriptedOperator):
    """Drives a run from console frames: recorded (replay) or injected (live).

    Tasks begin in order and end when their delivery targets are met; the
    frames supply the operator actions in between.
    """

    def __init__(self, run: SimRun, frames: list[dict[str, Any]] | None = None):
        super().__init__(run)
        self.frames = list(frames) if frames else []
        self.started = Trigger(run.scheduler)
        self._seen_pieces: set[Any] = set()

    def main(self):
        run = self.run
        # batch frames that share a timestamp: live sessions drain a whole
        # inbound batch after the instant's simulation work, so replay must too
        batches: dict[int, list[dict[str, Any]]] = {}
        for frame in self.frames:
            batches.setdefault(int(frame["t"]), []).append(frame)
        for at_ms in sorted(batches):
            run.scheduler.call_at(
                at_ms,
                lambda group=batches[at_ms]: [self.apply_frame(f) for f in group],
                late=True,
            )
        yield WaitFor(self.started)
        for task in run.scenario.tasks:
            run.begin_task(task)
            targets = self.delivery_targets({r.id: 1 for r in run.robots})
            yield WaitFor(run.when_all_done(targets))
            run.end_task(task)

    def apply_frame(self, frame: dict[str, Any]) -> str | None:
        """Apply one recorded {"t": ms, "frame": {...}} entry; returns speech."""
        payload = frame.get("frame", {})
        kind = payload.get("t")
        if kind == "start":
            self.started.fire()
        elif kind == "puzzle":
            self.apply_puzzle(payload.get("piece_id"))
        elif kind == "intent":
            try:
                return self.handle_intent_frame(str(payload.get("text", "")))
            except (NoIntentMatched, VahrError):
                return None
        return None

    def apply_puzzle(self, piece_id: Any) -> bool:
        if piece_id is not None and piece_id in self._seen_pieces:
            return False
        if self.pieces_placed >= self.op_cfg.puzzle_piece_count:
            return False
        if piece_id is not None:
            self._seen_pieces.add(piece_id)
        self.log.interaction(EventKind.PUZZLE_PIECE_PLACED, self.run.clock())
        self.pieces_placed += 1
        return True

    def handle_intent_frame(self, text: str) -> str:
        """One typed intent: command events server-side, paced acknowledgment."""
        run = self.run
        intent = run.interpret_logged(text)  # raises NoIntentMatched, logged
        robot_id = intent.slots.get("robot")
        self.log.interaction(EventKind.COMMAND_START, run.clock(), robot_id)
        handled = run.handle_intent_logged(intent)

        def ack() -> None:
            self.log.append({
                "kind": "speech", "from": "assistant",
                "text": handled.response.text, "t": run.clock(),
            })
            self.log.interaction(EventKind.COMMAND_ACK, run.clock(), robot_id)

        run.scheduler.call_in(run.scenario.latencies.assistant_ms, ack)
        return handled.response.text


# -- entry points ---------------------------------------------------------------


def run(scenario: Scenario, seed: int, operator_mode: str | None = None) -> RunReport:
    """Execute a scripted scenario to completion and return its report."""
    sim = SimRun(scenario, seed, operator_mode)
    gen = scripted_operator_policy(sim.mode, sim)
    return sim.execute(gen)


def replay_frames(scenario: Scenario, seed: int,
                  frames: list[dict[str, Any]]) -> RunReport:
    """Re-simulate a recorded live session from its inbound frame log."""
    sim = SimRun(scenario, seed, "live")
    op = FrameOperator(sim, frames=frames)
    return sim.execute(op.main())


def replay_log(path: str | Path) -> MetricsReport:
    """Recompute the metrics report from a persisted event log."""
    records = EventLog.read(path).records
    specs = task_specs_from_brief(records)
    return build_report(records, specs)


# -- export ----------------------------------------------------------------------

CSV_COLUMNS = ("method", "seed", "ie_s", "nt_s", "rad", "fo_s", "total_s",
               "puzzle_parts", "cmd_rate", "task_rate", "comm_rate")


def report_row(report: RunReport) -> dict[str, Any]:
    m = report.metrics
    return {
        "method": report.method,
        "seed": report.seed,
        "ie_s": m.ie_s,
        "nt_s": m.nt_s,
        "rad": m.rad,
        "fo_s": m.fo_s,
        "total_s": m.total_task_time_s,
        "puzzle_parts": m.solved_puzzle_parts,
        "cmd_rate": m.command_success_rate,
        "task_rate": m.task_success_rate,
        "comm_rate": m.communication_success_rate,
    }


def export_report(reports: Iterable[RunReport], fmt: str = "csv",
                  path: str | Path | None = None) -> str:
    """Render run reports as an aligned CSV table or a JSON array."""
    rows = [report_row(r) for r in reports]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in CSV_COLUMNS})
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps(rows, indent=2, sort_keys=True) + "\n"
    else:
        raise RunError(f"unknown export format {fmt!r}")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
